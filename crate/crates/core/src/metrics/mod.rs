//! Interpretability metrics. All percentages are in `[0, 100]` unless noted.

pub mod gmm;
pub mod locality;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::{class_attribute_means, AttributeTable};
use crate::error::{Error, Result};
use crate::qp::shared;
use crate::scalar::Scalar;

pub use gmm::{fit_gmm2, gaussian_overlap, GmmFit};
pub use locality::{locality5, locality_of_maps, normalized_softmax};

/// Ground-truth class similarity from annotated class attributes.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruthSim<T> {
    /// `C×C`, `ΛΛᵀ`.
    pub psi_gt: Array2<T>,
    /// `C×A` fraction of each class's samples showing each attribute.
    pub lambda_means: Array2<T>,
}

impl<T: Scalar> GroundTruthSim<T> {
    pub fn from_attributes(table: &AttributeTable, labels: &[usize], n_classes: usize) -> Result<Self> {
        let lambda_means: Array2<T> = class_attribute_means(table, labels, n_classes)?;
        Ok(Self::from_class_attributes(lambda_means))
    }

    pub fn from_class_attributes(lambda_means: Array2<T>) -> Self {
        let psi_gt = lambda_means.dot(&lambda_means.t());
        Self { psi_gt, lambda_means }
    }
}

/// `100 · mean over columns of (1 − overlap of the two-Gaussian fit)`.
pub fn contrastiveness<T: Scalar>(f_star: ArrayView2<'_, T>) -> Result<f64> {
    if f_star.nrows() < 2 {
        return Err(Error::invalid("contrastiveness needs at least two samples"));
    }
    if f_star.ncols() == 0 {
        return Err(Error::invalid("no features"));
    }
    let mut total = 0.0;
    for col in f_star.columns() {
        let values: Vec<f64> = col.iter().map(|v| v.to_f64_lossy()).collect();
        total += 1.0 - gaussian_overlap(&fit_gmm2(&values)?);
    }
    Ok(100.0 * total / f_star.ncols() as f64)
}

/// Per feature, the largest share of its min-shifted activation mass that
/// falls on a single class; zero when the shifted mass is zero.
pub fn max_class_shares<T: Scalar>(f_star: ArrayView2<'_, T>, labels: &[usize], n_classes: usize) -> Result<Vec<f64>> {
    if labels.len() != f_star.nrows() {
        return Err(Error::DimensionMismatch {
            what: "labels".into(),
            expected: f_star.nrows(),
            found: labels.len(),
        });
    }
    let mut out = Vec::with_capacity(f_star.ncols());
    for col in f_star.columns() {
        let min = col.iter().map(|v| v.to_f64_lossy()).fold(f64::INFINITY, f64::min);
        let mut per_class = vec![0.0; n_classes];
        for (&v, &y) in col.iter().zip(labels) {
            if y >= n_classes {
                return Err(Error::invalid(format!("label {y} out of range")));
            }
            per_class[y] += v.to_f64_lossy() - min;
        }
        let total: f64 = per_class.iter().sum();
        out.push(if total > 0.0 {
            per_class.iter().copied().fold(0.0, f64::max) / total
        } else {
            0.0
        });
    }
    Ok(out)
}

/// `100 · (1 − mean over features of the largest class share)`.
pub fn generality<T: Scalar>(f_star: ArrayView2<'_, T>, labels: &[usize], n_classes: usize) -> Result<f64> {
    let shares = max_class_shares(f_star, labels, n_classes)?;
    if shares.is_empty() {
        return Err(Error::invalid("no features"));
    }
    Ok(100.0 * (1.0 - shares.iter().sum::<f64>() / shares.len() as f64))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructuralGrounding {
    /// Model sharing over `n` against ground truth over its maximum, in percent.
    pub normalized: f64,
    /// Unnormalized shared-feature counts over raw ground-truth similarity, in percent.
    pub literal: f64,
    /// Number of class pairs compared.
    pub pairs: usize,
}

/// Compares feature sharing between the 25 most similar ground-truth class
/// pairs with their ground-truth similarity.
pub fn structural_grounding<T: Scalar>(rows: &[Vec<usize>], psi_gt: ArrayView2<'_, T>, n_per_class: usize) -> Result<StructuralGrounding> {
    let c = rows.len();
    if psi_gt.dim() != (c, c) {
        return Err(Error::DimensionMismatch {
            what: "ground-truth similarity".into(),
            expected: c,
            found: psi_gt.nrows(),
        });
    }
    let mut pairs: Vec<(usize, usize, f64)> = (0..c)
        .flat_map(|i| ((i + 1)..c).map(move |j| (i, j)))
        .map(|(i, j)| (i, j, psi_gt[[i, j]].to_f64_lossy()))
        .collect();
    pairs.sort_by(|a, b| b.2.total_cmp(&a.2).then((a.0, a.1).cmp(&(b.0, b.1))));
    pairs.truncate(25);
    let gt_max = pairs.iter().map(|p| p.2).fold(f64::NEG_INFINITY, f64::max);
    let mut model_norm = 0.0;
    let mut gt_norm = 0.0;
    let mut model_raw = 0.0;
    let mut gt_raw = 0.0;
    for &(i, j, g) in &pairs {
        let s = shared(&rows[i], &rows[j]) as f64;
        model_raw += s;
        gt_raw += g;
        model_norm += s / n_per_class as f64;
        gt_norm += g / gt_max;
    }
    let ratio = |a: f64, b: f64| if b > 0.0 { 100.0 * a / b } else { 0.0 };
    Ok(StructuralGrounding {
        normalized: ratio(model_norm, gt_norm),
        literal: ratio(model_raw, gt_raw),
        pairs: pairs.len(),
    })
}

/// Mean over features of `N / Σ(f − min f) · max_a (mean f | a − mean f | ¬a)`.
pub fn feature_alignment<T: Scalar>(f_star: ArrayView2<'_, T>, attributes: ArrayView2<'_, bool>) -> Result<f64> {
    let n = f_star.nrows();
    if attributes.nrows() != n {
        return Err(Error::DimensionMismatch {
            what: "attribute rows".into(),
            expected: n,
            found: attributes.nrows(),
        });
    }
    if f_star.ncols() == 0 {
        return Err(Error::invalid("no features"));
    }
    let usable: Vec<usize> = (0..attributes.ncols())
        .filter(|&a| {
            let present = attributes.column(a).iter().filter(|&&b| b).count();
            present > 0 && present < n
        })
        .collect();
    let mut total = 0.0;
    for col in f_star.columns() {
        let v: Vec<f64> = col.iter().map(|x| x.to_f64_lossy()).collect();
        let min = v.iter().copied().fold(f64::INFINITY, f64::min);
        let shifted: f64 = v.iter().map(|x| x - min).sum();
        if !(shifted > 0.0) || usable.is_empty() {
            continue;
        }
        let best = usable
            .iter()
            .map(|&a| {
                let (mut s1, mut n1, mut s0, mut n0) = (0.0, 0usize, 0.0, 0usize);
                for (x, &has) in v.iter().zip(attributes.column(a)) {
                    if has {
                        s1 += x;
                        n1 += 1;
                    } else {
                        s0 += x;
                        n0 += 1;
                    }
                }
                s1 / n1 as f64 - s0 / n0 as f64
            })
            .fold(f64::NEG_INFINITY, f64::max);
        total += n as f64 / shifted * best;
    }
    Ok(total / f_star.ncols() as f64)
}

/// Mean ground-truth similarity over every class pair predicted together,
/// pooled over samples. `None` when no set has two classes.
pub fn set_coherence<T: Scalar>(sets: &[Vec<usize>], psi_gt: ArrayView2<'_, T>) -> Option<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for set in sets {
        for (a, &i) in set.iter().enumerate() {
            for &j in &set[a + 1..] {
                sum += psi_gt[[i, j]].to_f64_lossy();
                count += 1;
            }
        }
    }
    (count > 0).then(|| sum / count as f64)
}

/// Percentage of strictly positive entries.
pub fn feature_sparsity<T: Scalar>(f_star: ArrayView2<'_, T>) -> f64 {
    if f_star.is_empty() {
        return 0.0;
    }
    100.0 * f_star.iter().filter(|&&v| v > T::zero()).count() as f64 / f_star.len() as f64
}
