//! Synthetic datasets with a known class-to-concept assignment.
//!
//! Every class is built from `n` of `k_true` concepts. A concept present in a
//! class is active around `concept_mean`, every other feature is noise around
//! zero. The first `2⌊ρC⌋` classes form a chain in which neighbours differ in
//! exactly one concept.

use std::collections::BTreeSet;
use std::path::Path;

use ndarray::{Array2, Array4};
use pathfinding::prelude::{kuhn_munkres, Matrix};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{AttributeTable, FeatureMatrix, Split};
use crate::error::{Error, Result};
use crate::qp::{binomial, Assignment};
use crate::scalar::Scalar;

const ROW_ATTEMPTS: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantedSpec {
    pub n_classes: usize,
    pub n_raw_features: usize,
    pub k_true: usize,
    pub n_per_class: usize,
    pub rho_true: f64,
    pub concept_mean: f64,
    pub noise_sigma: f64,
    pub train_per_class: usize,
    pub calibration_per_class: usize,
    pub test_per_class: usize,
    /// Height and width of generated spatial maps; no maps when absent.
    pub map_size: Option<(usize, usize)>,
    pub seed: u64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        Self {
            n_classes: 8,
            n_raw_features: 14,
            k_true: 8,
            n_per_class: 2,
            rho_true: 0.5,
            concept_mean: 3.0,
            noise_sigma: 0.5,
            train_per_class: 50,
            calibration_per_class: 20,
            test_per_class: 50,
            map_size: None,
            seed: 0,
        }
    }
}

impl PlantedSpec {
    /// Reads a spec from JSON when the extension is `json`, TOML otherwise.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e == "json") {
            Ok(serde_json::from_str(&text)?)
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))
        }
    }

    pub fn distractor_count(&self) -> usize {
        self.n_raw_features.saturating_sub(self.k_true)
    }

    /// Number of leading classes chained by single-concept swaps.
    pub fn chain_length(&self) -> usize {
        (2 * (self.rho_true * self.n_classes as f64).floor() as usize).min(self.n_classes)
    }

    pub fn validate(&self) -> Result<()> {
        let infeasible = |reason: String| Err(Error::Infeasible { reason, pairs: Vec::new() });
        if self.n_classes == 0 || self.n_per_class == 0 {
            return infeasible("need at least one class and one concept per class".into());
        }
        if self.k_true < self.n_per_class || self.k_true > self.n_raw_features {
            return infeasible(format!(
                "need n_per_class ≤ k_true ≤ n_raw_features, got {} ≤ {} ≤ {}",
                self.n_per_class, self.k_true, self.n_raw_features
            ));
        }
        if binomial(self.k_true, self.n_per_class) < self.n_classes as u128 {
            return infeasible(format!(
                "{} concepts in groups of {} give fewer than {} distinct classes",
                self.k_true, self.n_per_class, self.n_classes
            ));
        }
        if !(0.0..=1.0).contains(&self.rho_true) {
            return Err(Error::invalid(format!("rho_true must lie in [0, 1], got {}", self.rho_true)));
        }
        if self.chain_length() > 1 && self.n_per_class == self.k_true {
            return infeasible("chained classes need a concept to swap in".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) || !self.concept_mean.is_finite() {
            return Err(Error::invalid("concept_mean must be finite and noise_sigma non-negative"));
        }
        if self.train_per_class == 0 || self.test_per_class == 0 {
            return Err(Error::invalid("train and test splits need samples"));
        }
        if let Some((h, w)) = self.map_size {
            if h == 0 || w == 0 {
                return Err(Error::invalid("map dimensions must be positive"));
            }
        }
        Ok(())
    }
}

/// The planted structure behind a generated dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedTruth {
    /// Raw feature index of every concept.
    pub concept_features: Vec<usize>,
    /// Per class, its concepts as sorted raw feature indices.
    pub rows: Vec<Vec<usize>>,
    pub n_raw_features: usize,
    pub n_per_class: usize,
}

impl PlantedTruth {
    pub fn n_classes(&self) -> usize {
        self.rows.len()
    }

    pub fn k_true(&self) -> usize {
        self.concept_features.len()
    }

    /// Binary `C × Q` matrix over raw features.
    pub fn w_true(&self) -> Array2<u8> {
        let mut w = Array2::zeros((self.rows.len(), self.n_raw_features));
        for (c, row) in self.rows.iter().enumerate() {
            for &q in row {
                w[[c, q]] = 1;
            }
        }
        w
    }

    /// `W Wᵀ / n`: the fraction of concepts two classes share.
    pub fn psi_gt<T: Scalar>(&self) -> Array2<T> {
        let c = self.rows.len();
        let n = T::from_usize_lossy(self.n_per_class);
        Array2::from_shape_fn((c, c), |(a, b)| {
            let shared = self.rows[a].iter().filter(|q| self.rows[b].contains(q)).count();
            T::from_usize_lossy(shared) / n
        })
    }
}

#[derive(Clone, Debug)]
pub struct PlantedData<T> {
    pub train: FeatureMatrix<T>,
    pub calibration: FeatureMatrix<T>,
    pub test: FeatureMatrix<T>,
    pub truth: PlantedTruth,
    /// Per split, presence of each concept in the sample's class.
    pub attributes: [AttributeTable; 3],
}

fn random_row(rng: &mut ChaCha8Rng, k: usize, n: usize) -> Vec<usize> {
    let mut all: Vec<usize> = (0..k).collect();
    all.shuffle(rng);
    let mut row = all[..n].to_vec();
    row.sort_unstable();
    row
}

fn swap_one(rng: &mut ChaCha8Rng, row: &[usize], k: usize) -> Vec<usize> {
    let out = row.choose(rng).copied().expect("row is not empty");
    let pool: Vec<usize> = (0..k).filter(|q| !row.contains(q)).collect();
    let inn = *pool.choose(rng).expect("a concept outside the row");
    let mut next: Vec<usize> = row.iter().copied().filter(|&q| q != out).chain([inn]).collect();
    next.sort_unstable();
    next
}

/// Concept rows: a one-swap chain over the leading classes, then random
/// distinct rows. Retries until every concept is used when that is possible.
fn concept_rows(spec: &PlantedSpec, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<usize>>> {
    let (c, k, n) = (spec.n_classes, spec.k_true, spec.n_per_class);
    let chain = spec.chain_length();
    let coverable = c * n >= k;
    let mut fallback = None;
    for _ in 0..ROW_ATTEMPTS {
        let mut rows: Vec<Vec<usize>> = Vec::with_capacity(c);
        let mut seen: BTreeSet<Vec<usize>> = BTreeSet::new();
        let mut stuck = false;
        for class in 0..c {
            let mut placed = false;
            for _ in 0..ROW_ATTEMPTS {
                let row = if class > 0 && class < chain {
                    swap_one(rng, &rows[class - 1], k)
                } else {
                    random_row(rng, k, n)
                };
                if seen.insert(row.clone()) {
                    rows.push(row);
                    placed = true;
                    break;
                }
            }
            if !placed {
                stuck = true;
                break;
            }
        }
        if stuck {
            continue;
        }
        let used: BTreeSet<usize> = rows.iter().flatten().copied().collect();
        if !coverable || used.len() == k {
            return Ok(rows);
        }
        fallback.get_or_insert(rows);
    }
    fallback.ok_or_else(|| Error::Infeasible {
        reason: format!("could not draw {c} distinct concept rows"),
        pairs: Vec::new(),
    })
}

/// Unit-mean bump around `(cy, cx)` on an `h × w` grid.
fn bump(h: usize, w: usize, cy: usize, cx: usize) -> Array2<f64> {
    let g = Array2::from_shape_fn((h, w), |(y, x)| {
        let d2 = (y as f64 - cy as f64).powi(2) + (x as f64 - cx as f64).powi(2);
        (-d2 / 2.0).exp()
    });
    let mean = g.mean().expect("non-empty grid");
    g / mean
}

struct SplitDraw<'a> {
    spec: &'a PlantedSpec,
    truth: &'a PlantedTruth,
    concept_rows: &'a [Vec<usize>],
    centers: &'a [(usize, usize)],
}

impl SplitDraw<'_> {
    fn draw<T: Scalar>(&self, split: Split, per_class: usize, stream: u64) -> Result<(FeatureMatrix<T>, AttributeTable)> {
        let spec = self.spec;
        let (c, q, k) = (spec.n_classes, spec.n_raw_features, spec.k_true);
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(stream);
        let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::invalid(e.to_string()))?;
        let total = c * per_class;
        let mut values = Array2::<f64>::zeros((total, q));
        let mut labels = Vec::with_capacity(total);
        let mut attrs = Array2::from_elem((total, k), false);
        // samples cycle through the classes
        for i in 0..total {
            let class = i % c;
            labels.push(class);
            for j in 0..q {
                values[[i, j]] = noise.sample(&mut rng);
            }
            for &a in &self.concept_rows[class] {
                values[[i, self.truth.concept_features[a]]] += spec.concept_mean;
                attrs[[i, a]] = true;
            }
        }
        let maps = spec.map_size.map(|(h, w)| {
            let mut maps = Array4::<f64>::zeros((total, q, h, w));
            for i in 0..total {
                for j in 0..q {
                    let (cy, cx) = match self.truth.concept_features.iter().position(|&f| f == j) {
                        Some(a) => self.centers[a],
                        None => (rng.random_range(0..h), rng.random_range(0..w)),
                    };
                    let m = bump(h, w, cy, cx) * values[[i, j]];
                    maps.slice_mut(ndarray::s![i, j, .., ..]).assign(&m);
                }
            }
            maps
        });
        let ids: Vec<String> = (0..total).map(|i| format!("{}-{i:05}", split.as_str())).collect();
        let names = (0..k).map(|a| format!("concept{a}")).collect();
        let table = AttributeTable::new(attrs, names, ids.clone())?;
        let cast = |a: f64| T::lit(a);
        let fm = FeatureMatrix::new(values.mapv(cast), labels, c, split, maps.map(|m| m.mapv(cast)), ids)?;
        Ok((fm, table))
    }
}

/// Draws the planted structure and the train, calibration and test splits.
/// Every split uses its own random stream, so samples are i.i.d. across splits.
pub fn generate<T: Scalar>(spec: &PlantedSpec) -> Result<PlantedData<T>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut raw: Vec<usize> = (0..spec.n_raw_features).collect();
    raw.shuffle(&mut rng);
    let concept_features = raw[..spec.k_true].to_vec();
    let concept_rows = concept_rows(spec, &mut rng)?;
    let rows = concept_rows
        .iter()
        .map(|r| {
            let mut raw: Vec<usize> = r.iter().map(|&a| concept_features[a]).collect();
            raw.sort_unstable();
            raw
        })
        .collect();
    let centers: Vec<(usize, usize)> = match spec.map_size {
        Some((h, w)) => (0..spec.k_true).map(|_| (rng.random_range(0..h), rng.random_range(0..w))).collect(),
        None => Vec::new(),
    };
    let truth = PlantedTruth {
        concept_features,
        rows,
        n_raw_features: spec.n_raw_features,
        n_per_class: spec.n_per_class,
    };
    let draw = SplitDraw {
        spec,
        truth: &truth,
        concept_rows: &concept_rows,
        centers: &centers,
    };
    let (train, a_train) = draw.draw(Split::Train, spec.train_per_class, 1)?;
    let (calibration, a_cal) = if spec.calibration_per_class > 0 {
        draw.draw(Split::Calibration, spec.calibration_per_class, 2)?
    } else {
        // an empty split still needs a valid shape, so reuse one class round
        let (fm, a) = draw.draw::<T>(Split::Calibration, 1, 2)?;
        (fm.subset(&[], Split::Calibration), a.aligned_to(&[])?)
    };
    let (test, a_test) = draw.draw(Split::Test, spec.test_per_class, 3)?;
    Ok(PlantedData {
        train,
        calibration,
        test,
        truth,
        attributes: [a_train, a_cal, a_test],
    })
}

/// Agreement between an assignment and the planted rows after matching
/// selected features to concepts so that the most entries agree. Matching is
/// exact (Hungarian) at every size.
pub fn recovery_score<T: Scalar>(assignment: &Assignment<T>, truth: &PlantedTruth) -> Result<f64> {
    let k = assignment.k_features();
    if k != truth.k_true() {
        return Err(Error::DimensionMismatch {
            what: "selected features vs planted concepts".into(),
            expected: truth.k_true(),
            found: k,
        });
    }
    if assignment.n_classes() != truth.n_classes() {
        return Err(Error::DimensionMismatch {
            what: "classes".into(),
            expected: truth.n_classes(),
            found: assignment.n_classes(),
        });
    }
    let found = assignment.assignment_selected();
    let c = truth.n_classes();
    let planted = Array2::from_shape_fn((c, k), |(class, a)| u8::from(truth.rows[class].contains(&truth.concept_features[a])));
    Ok(matched_agreement(&found, &planted))
}

/// Fraction of agreeing entries under the best column bijection.
pub(crate) fn matched_agreement(a: &Array2<u8>, b: &Array2<u8>) -> f64 {
    let (c, k) = a.dim();
    if c * k == 0 {
        return 1.0;
    }
    let weights = Matrix::from_fn(k, k, |(i, j)| (0..c).filter(|&r| a[[r, i]] == b[[r, j]]).count() as i64);
    let (total, _) = kuhn_munkres(&weights);
    total as f64 / (c * k) as f64
}
