//! Normalization and ReLU of the selected features, class logits, and the
//! feature grounding loss with its gradient.

use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::{read_json, write_json, FeatureMatrix, Split};
use crate::error::{Error, Result};
use crate::head::ModelHead;
use crate::metrics::gmm::fit_gmm2;
use crate::scalar::Scalar;

/// Per selected feature mean and population standard deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalization<T> {
    pub mu: Vec<T>,
    pub sigma: Vec<T>,
    /// True where the column was constant and `sigma` was replaced by 1.
    pub degenerate: Vec<bool>,
}

/// Fits normalization statistics on the training split for the given raw columns.
pub fn fit_normalization<T: Scalar>(train: &FeatureMatrix<T>, selection: &[usize]) -> Result<Normalization<T>> {
    if train.split() != Split::Train {
        return Err(Error::WrongSplit {
            expected: Split::Train.to_string(),
            found: train.split().to_string(),
        });
    }
    if train.n_samples() == 0 {
        return Err(Error::invalid("empty training set"));
    }
    let n = T::from_usize_lossy(train.n_samples());
    let values = train.values();
    let mut out = Normalization {
        mu: Vec::with_capacity(selection.len()),
        sigma: Vec::with_capacity(selection.len()),
        degenerate: Vec::with_capacity(selection.len()),
    };
    for &q in selection {
        if q >= train.n_features() {
            return Err(Error::invalid(format!("selected feature {q} outside {} features", train.n_features())));
        }
        let col = values.column(q);
        let mu = col.iter().copied().sum::<T>() / n;
        let var = col.iter().map(|&v| (v - mu) * (v - mu)).sum::<T>() / n;
        let sigma = var.sqrt();
        let degenerate = !(sigma > T::zero());
        out.mu.push(mu);
        out.sigma.push(if degenerate { T::one() } else { sigma });
        out.degenerate.push(degenerate);
    }
    Ok(out)
}

/// Non-negative transformed activations of the selected features.
#[derive(Clone, Debug, PartialEq)]
pub struct TransformedFeatures<T> {
    pub values: Array2<T>,
    pub labels: Vec<usize>,
    pub sample_ids: Vec<String>,
    /// Digest of the head that produced these values.
    pub head_digest: String,
}

#[derive(Serialize, Deserialize)]
struct TransformedFile<T> {
    head_digest: String,
    sample_ids: Vec<String>,
    labels: Vec<usize>,
    values: Vec<Vec<T>>,
}

impl<T: Scalar> TransformedFeatures<T> {
    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, T> {
        self.values.row(i)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(
            path,
            &TransformedFile {
                head_digest: self.head_digest.clone(),
                sample_ids: self.sample_ids.clone(),
                labels: self.labels.clone(),
                values: self.values.outer_iter().map(|r| r.to_vec()).collect(),
            },
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f: TransformedFile<T> = read_json(path)?;
        let n = f.values.len();
        let k = f.values.first().map_or(0, Vec::len);
        if f.values.iter().any(|r| r.len() != k) || f.labels.len() != n || f.sample_ids.len() != n {
            return Err(Error::Invariant("transformed features are ragged".into()));
        }
        let values = Array2::from_shape_vec((n, k), f.values.into_iter().flatten().collect())
            .map_err(|e| Error::Invariant(e.to_string()))?;
        if values.iter().any(|&v| !(v >= T::zero())) {
            return Err(Error::Invariant("transformed features must be non-negative".into()));
        }
        Ok(Self {
            values,
            labels: f.labels,
            sample_ids: f.sample_ids,
            head_digest: f.head_digest,
        })
    }
}

/// `max(0, (f − μ) / σ)` on one raw feature row.
pub fn transform_row<T: Scalar>(raw: ArrayView1<'_, T>, head: &ModelHead<T>) -> Vec<T> {
    head.selection()
        .iter()
        .enumerate()
        .map(|(j, &q)| ((raw[q] - head.mu()[j]) / head.sigma()[j]).max(T::zero()))
        .collect()
}

/// Applies the head's normalization and ReLU to every sample.
pub fn apply_transform<T: Scalar>(raw: &FeatureMatrix<T>, head: &ModelHead<T>) -> Result<TransformedFeatures<T>> {
    if raw.n_features() != head.n_raw_features() {
        return Err(Error::DimensionMismatch {
            what: "raw features".into(),
            expected: head.n_raw_features(),
            found: raw.n_features(),
        });
    }
    let k = head.k_features();
    let mut values = Array2::zeros((raw.n_samples(), k));
    for (i, row) in raw.values().outer_iter().enumerate() {
        for (j, v) in transform_row(row, head).into_iter().enumerate() {
            values[[i, j]] = v;
        }
    }
    Ok(TransformedFeatures {
        values,
        labels: raw.labels().to_vec(),
        sample_ids: raw.sample_ids().to_vec(),
        head_digest: head.digest(),
    })
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Class logits `W* f*` and the predicted class.
pub fn predict_logits<T: Scalar>(f_star: &[T], head: &ModelHead<T>) -> (Vec<T>, usize) {
    let logits: Vec<T> = head
        .rows()
        .iter()
        .map(|row| row.iter().fold(T::zero(), |acc, &j| acc + f_star[j]))
        .collect();
    let c_hat = argmax(&logits);
    (logits, c_hat)
}

/// Which form of the grounding loss to evaluate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundingVariant {
    /// `−(mean_F − mean_rest) / max`.
    #[default]
    AsPrinted,
    /// Subtrahend doubled: `−(mean_F − 2·mean_rest) / max`.
    DoubledSubtrahend,
}

impl GroundingVariant {
    fn factor<T: Scalar>(self) -> T {
        match self {
            GroundingVariant::AsPrinted => T::one(),
            GroundingVariant::DoubledSubtrahend => T::lit(2.0),
        }
    }
}

struct MeanSplit<T> {
    in_mask: Vec<bool>,
    n_in: usize,
    n_out: usize,
    mean_in: T,
    mean_out: T,
    top: usize,
    max: T,
}

fn split_means<T: Scalar>(f_star: &[T], gt_features: &[usize]) -> MeanSplit<T> {
    let mut in_mask = vec![false; f_star.len()];
    for &j in gt_features {
        in_mask[j] = true;
    }
    let n_in = in_mask.iter().filter(|&&b| b).count();
    let n_out = f_star.len() - n_in;
    let sum_in = f_star.iter().zip(&in_mask).filter(|(_, &m)| m).map(|(&v, _)| v).sum::<T>();
    let sum_out = f_star.iter().zip(&in_mask).filter(|(_, &m)| !m).map(|(&v, _)| v).sum::<T>();
    let mean = |s: T, c: usize| if c == 0 { T::zero() } else { s / T::from_usize_lossy(c) };
    let top = argmax(f_star);
    MeanSplit {
        in_mask,
        n_in,
        n_out,
        mean_in: mean(sum_in, n_in),
        mean_out: mean(sum_out, n_out),
        top,
        max: f_star.get(top).copied().unwrap_or(T::zero()),
    }
}

/// Negative gap between the mean activation on `gt_features` and on the
/// rest, divided by the largest activation. Zero when every activation is 0.
pub fn feature_grounding_loss<T: Scalar>(f_star: &[T], gt_features: &[usize], variant: GroundingVariant) -> T {
    let s = split_means(f_star, gt_features);
    if !(s.max > T::zero()) {
        return T::zero();
    }
    -(s.mean_in - variant.factor::<T>() * s.mean_out) / s.max
}

/// Gradient of [`feature_grounding_loss`]; the maximum is differentiated at
/// its lowest-index argmax.
pub fn feature_grounding_gradient<T: Scalar>(f_star: &[T], gt_features: &[usize], variant: GroundingVariant) -> Vec<T> {
    let s = split_means(f_star, gt_features);
    let mut grad = vec![T::zero(); f_star.len()];
    if !(s.max > T::zero()) {
        return grad;
    }
    let factor = variant.factor::<T>();
    for (j, g) in grad.iter_mut().enumerate() {
        *g = if s.in_mask[j] {
            -T::one() / (T::from_usize_lossy(s.n_in) * s.max)
        } else {
            factor / (T::from_usize_lossy(s.n_out) * s.max)
        };
    }
    grad[s.top] = grad[s.top] + (s.mean_in - factor * s.mean_out) / (s.max * s.max);
    grad
}

/// Numerically stable softmax.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let e: Vec<T> = logits.iter().map(|&o| (o - m).exp()).collect();
    let z = e.iter().copied().sum::<T>();
    e.into_iter().map(|v| v / z).collect()
}

/// Gradient of softmax cross-entropy of `w · f*` with respect to `f*`.
pub fn toy_ce_gradient<T: Scalar>(w: ArrayView2<'_, T>, f_star: &[T], label: usize) -> Vec<T> {
    let logits: Vec<T> = w
        .outer_iter()
        .map(|row| row.iter().zip(f_star).fold(T::zero(), |a, (&x, &f)| a + x * f))
        .collect();
    let mut delta = softmax(&logits);
    delta[label] = delta[label] - T::one();
    (0..w.ncols())
        .map(|j| (0..w.nrows()).fold(T::zero(), |a, c| a + w[[c, j]] * delta[c]))
        .collect()
}

/// Typical active value of each feature, from the upper component of a
/// two-Gaussian fit; falls back to the mean positive value, then to 1.
pub fn fit_active_means<T: Scalar>(train_f_star: ArrayView2<'_, T>) -> Vec<T> {
    train_f_star
        .columns()
        .into_iter()
        .map(|col| {
            let values: Vec<f64> = col.iter().map(|v| v.to_f64_lossy()).collect();
            let positives: Vec<f64> = values.iter().copied().filter(|&v| v > 0.0).collect();
            if positives.is_empty() {
                return T::one();
            }
            match fit_gmm2(&values) {
                Ok(fit) if fit.mu2.is_finite() && fit.mu2 > 0.0 => T::lit(fit.mu2),
                _ => T::lit(positives.iter().sum::<f64>() / positives.len() as f64),
            }
        })
        .collect()
}

/// Saliency scaling `min(f* / μ₂, 1)`.
pub fn saliency_scale<T: Scalar>(activation: T, active_mean: T) -> T {
    (activation / active_mean).min(T::one())
}
