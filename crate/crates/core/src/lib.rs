//! Interpretable classification heads over precomputed feature activations.
//!
//! A head selects `k` features, assigns exactly `n` of them to every class and
//! predicts `argmax W* f*` with `f* = ReLU((f − μ) / σ)`. The assignment is the
//! exact optimum of a binary quadratic program whose pair constraints make
//! similar classes differ in a single feature, which gives every prediction a
//! feature hierarchy and a conformal set predictor that walks up it.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the `*64`/`*32`
//! aliases below name the common instantiations.

// `!(x > y)` is used on purpose so NaN fails range checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conformal;
pub mod data;
pub mod error;
pub mod head;
pub mod hierarchy;
pub mod metrics;
pub mod pipeline;
pub mod qp;
pub mod scalar;
pub mod similarity;
pub mod synth;
pub mod transform;

pub use conformal::{CalibrationRecord, ScoreVariant};
pub use data::{AttributeTable, FeatureMatrix, Manifest, Split};
pub use error::{Error, Result};
pub use head::ModelHead;
pub use hierarchy::{ClassOrder, ExplanationGraph};
pub use pipeline::RunConfig;
pub use qp::{Assignment, QpInstance, RelaxationState};
pub use scalar::Scalar;
pub use similarity::{ClassPair, SimilarityBundle};
pub use synth::{PlantedData, PlantedSpec, PlantedTruth};
pub use transform::TransformedFeatures;

pub type FeatureMatrix64 = FeatureMatrix<f64>;
pub type FeatureMatrix32 = FeatureMatrix<f32>;
pub type ModelHead64 = ModelHead<f64>;
pub type ModelHead32 = ModelHead<f32>;
pub type SimilarityBundle64 = SimilarityBundle<f64>;
pub type SimilarityBundle32 = SimilarityBundle<f32>;
pub type QpInstance64 = QpInstance<f64>;
pub type QpInstance32 = QpInstance<f32>;
pub type Assignment64 = Assignment<f64>;
pub type Assignment32 = Assignment<f32>;
pub type CalibrationRecord64 = CalibrationRecord<f64>;
pub type CalibrationRecord32 = CalibrationRecord<f32>;
pub type PlantedData64 = PlantedData<f64>;
pub type PlantedData32 = PlantedData<f32>;
