//! Constant matrices of the assignment program and the enforced class pairs.
//!
//! The class-feature similarity is the z-scored class mean of each feature and
//! the feature redundancy is the Pearson correlation between activation
//! columns. Both are plain functions so callers can substitute their own.

use std::collections::BTreeSet;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::{read_json, write_json, FeatureMatrix, Split};
use crate::error::{Error, Result};
use crate::metrics::locality::normalized_softmax;
use crate::scalar::{extended_real, Scalar};

/// Ordered class pair `(i, j)` with `i < j`.
pub type ClassPair = (usize, usize);

#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityBundle<T> {
    /// `C×Q` class-feature similarity.
    pub psi: Array2<T>,
    /// `Q×Q` feature-feature similarity, zero diagonal.
    pub redundancy: Array2<T>,
    /// Per-feature linear bias.
    pub bias: Array1<T>,
    /// `C×C` class-class similarity.
    pub class_class: Array2<T>,
    /// Class pairs that must share all but one feature.
    pub pair_set: BTreeSet<ClassPair>,
    pub rho: T,
    pub theta: T,
}

impl<T: Scalar> SimilarityBundle<T> {
    /// Computes every matrix from a training split and selects pairs at density `rho`.
    pub fn from_train(train: &FeatureMatrix<T>, rho: T) -> Result<Self> {
        let psi = class_feature_similarity(train)?;
        let redundancy = feature_redundancy(train)?;
        let bias = locality_bias(train);
        let class_class = class_class_similarity(psi.view());
        let (theta, pair_set) = select_similar_pairs(class_class.view(), rho)?;
        Ok(Self {
            psi,
            redundancy,
            bias,
            class_class,
            pair_set,
            rho,
            theta,
        })
    }

    /// Bundle from explicit matrices; the class-class similarity is derived from `psi`.
    pub fn from_parts(psi: Array2<T>, redundancy: Array2<T>, bias: Array1<T>, rho: T) -> Result<Self> {
        let q = psi.ncols();
        if redundancy.dim() != (q, q) {
            return Err(Error::DimensionMismatch {
                what: "redundancy".into(),
                expected: q,
                found: redundancy.nrows(),
            });
        }
        if bias.len() != q {
            return Err(Error::DimensionMismatch {
                what: "bias".into(),
                expected: q,
                found: bias.len(),
            });
        }
        let class_class = class_class_similarity(psi.view());
        let (theta, pair_set) = select_similar_pairs(class_class.view(), rho)?;
        Ok(Self {
            psi,
            redundancy,
            bias,
            class_class,
            pair_set,
            rho,
            theta,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.psi.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.psi.ncols()
    }

    pub fn with_pairs(mut self, pairs: BTreeSet<ClassPair>) -> Self {
        self.pair_set = pairs;
        self
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, &BundleFile::from(self))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f: BundleFile<T> = read_json(path)?;
        f.into_bundle()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct BundleFile<T> {
    n_classes: usize,
    n_features: usize,
    psi: Vec<Vec<T>>,
    redundancy: Vec<Vec<T>>,
    bias: Vec<T>,
    class_class: Vec<Vec<T>>,
    pair_set: Vec<ClassPair>,
    rho: T,
    #[serde(with = "extended_real")]
    theta: T,
}

fn rows_of<T: Scalar>(m: &Array2<T>) -> Vec<Vec<T>> {
    m.outer_iter().map(|r| r.to_vec()).collect()
}

fn matrix_from<T: Scalar>(rows: Vec<Vec<T>>, n: usize, m: usize, what: &str) -> Result<Array2<T>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != m) {
        return Err(Error::Invariant(format!("{what} is not {n}×{m}")));
    }
    Array2::from_shape_vec((n, m), rows.into_iter().flatten().collect()).map_err(|e| Error::invalid(e.to_string()))
}

impl<T: Scalar> From<&SimilarityBundle<T>> for BundleFile<T> {
    fn from(b: &SimilarityBundle<T>) -> Self {
        Self {
            n_classes: b.n_classes(),
            n_features: b.n_features(),
            psi: rows_of(&b.psi),
            redundancy: rows_of(&b.redundancy),
            bias: b.bias.to_vec(),
            class_class: rows_of(&b.class_class),
            pair_set: b.pair_set.iter().copied().collect(),
            rho: b.rho,
            theta: b.theta,
        }
    }
}

impl<T: Scalar> BundleFile<T> {
    fn into_bundle(self) -> Result<SimilarityBundle<T>> {
        let (c, q) = (self.n_classes, self.n_features);
        let pair_set: BTreeSet<ClassPair> = self.pair_set.into_iter().collect();
        if pair_set.iter().any(|&(i, j)| i >= j || j >= c) {
            return Err(Error::Invariant("pair set entries must satisfy i < j < C".into()));
        }
        Ok(SimilarityBundle {
            psi: matrix_from(self.psi, c, q, "psi")?,
            redundancy: matrix_from(self.redundancy, q, q, "redundancy")?,
            bias: Array1::from(self.bias),
            class_class: matrix_from(self.class_class, c, c, "class_class")?,
            pair_set,
            rho: self.rho,
            theta: self.theta,
        })
    }
}

fn require_train<T: Scalar>(train: &FeatureMatrix<T>) -> Result<()> {
    if train.split() != Split::Train {
        return Err(Error::WrongSplit {
            expected: Split::Train.to_string(),
            found: train.split().to_string(),
        });
    }
    Ok(())
}

/// Per-column population mean and standard deviation.
fn column_moments<T: Scalar>(values: ArrayView2<'_, T>) -> (Vec<T>, Vec<T>) {
    let n = T::from_usize_lossy(values.nrows());
    let mut means = Vec::with_capacity(values.ncols());
    let mut stds = Vec::with_capacity(values.ncols());
    for col in values.columns() {
        let m = col.iter().copied().sum::<T>() / n;
        let var = col.iter().map(|&v| (v - m) * (v - m)).sum::<T>() / n;
        means.push(m);
        stds.push(var.sqrt());
    }
    (means, stds)
}

/// `Ψ[c,q]` = (class-`c` mean of feature `q` − global mean) / global std.
/// Zero-variance features give an all-zero column.
pub fn class_feature_similarity<T: Scalar>(train: &FeatureMatrix<T>) -> Result<Array2<T>> {
    require_train(train)?;
    let values = train.values();
    let (means, stds) = column_moments(values);
    let by_class = train.class_indices();
    let mut psi = Array2::zeros((train.n_classes(), train.n_features()));
    for (c, members) in by_class.iter().enumerate() {
        if members.is_empty() {
            return Err(Error::EmptyClass(c));
        }
        let count = T::from_usize_lossy(members.len());
        for q in 0..train.n_features() {
            if stds[q] <= T::zero() {
                continue;
            }
            let class_mean = members.iter().map(|&i| values[[i, q]]).sum::<T>() / count;
            psi[[c, q]] = (class_mean - means[q]) / stds[q];
        }
    }
    Ok(psi)
}

/// Pearson correlation between activation columns; zero diagonal and zero
/// rows/columns for constant features.
pub fn feature_redundancy<T: Scalar>(train: &FeatureMatrix<T>) -> Result<Array2<T>> {
    require_train(train)?;
    let values = train.values();
    let (means, stds) = column_moments(values);
    let q = train.n_features();
    let n = T::from_usize_lossy(train.n_samples());
    let centered = Array2::from_shape_fn(values.dim(), |(i, j)| values[[i, j]] - means[j]);
    let mut r = Array2::zeros((q, q));
    for a in 0..q {
        if stds[a] <= T::zero() {
            continue;
        }
        for b in (a + 1)..q {
            if stds[b] <= T::zero() {
                continue;
            }
            let cov = centered.column(a).dot(&centered.column(b)) / n;
            let corr = (cov / (stds[a] * stds[b])).max(-T::one()).min(T::one());
            r[[a, b]] = corr;
            r[[b, a]] = corr;
        }
    }
    Ok(r)
}

/// `ΨΨᵀ − I`.
pub fn class_class_similarity<T: Scalar>(psi: ArrayView2<'_, T>) -> Array2<T> {
    let mut k = psi.dot(&psi.t());
    for c in 0..k.nrows() {
        k[[c, c]] = k[[c, c]] - T::one();
    }
    // enforce exact symmetry regardless of summation order
    for i in 0..k.nrows() {
        for j in (i + 1)..k.ncols() {
            k[[j, i]] = k[[i, j]];
        }
    }
    k
}

/// Threshold `θ` = the `⌊2ρC⌋`-th highest off-diagonal entry (each pair counted
/// twice) and every pair `i < j` with `K[i,j] ≥ θ`. `⌊2ρC⌋ = 0` gives `θ = +∞`
/// and no pairs.
pub fn select_similar_pairs<T: Scalar>(
    class_class: ArrayView2<'_, T>,
    rho: T,
) -> Result<(T, BTreeSet<ClassPair>)> {
    let c = class_class.nrows();
    if class_class.ncols() != c {
        return Err(Error::invalid("class-class similarity must be square"));
    }
    if !(rho >= T::zero()) || !rho.is_finite() {
        return Err(Error::invalid("rho must be a finite non-negative number"));
    }
    let rank = (T::lit(2.0) * rho * T::from_usize_lossy(c)).floor().to_usize().unwrap_or(usize::MAX);
    let entries = c * c.saturating_sub(1);
    if rank > entries {
        return Err(Error::invalid(format!(
            "rho = {rho} requests the {rank}-th highest of only {entries} off-diagonal entries"
        )));
    }
    if rank == 0 {
        return Ok((T::infinity(), BTreeSet::new()));
    }
    let mut values: Vec<T> = Vec::with_capacity(entries);
    for i in 0..c {
        for j in 0..c {
            if i != j {
                values.push(class_class[[i, j]]);
            }
        }
    }
    values.sort_by(|a, b| b.partial_cmp(a).expect("finite similarities"));
    let theta = values[rank - 1];
    let pairs = (0..c)
        .flat_map(|i| ((i + 1)..c).map(move |j| (i, j)))
        .filter(|&(i, j)| class_class[[i, j]] >= theta)
        .collect();
    Ok((theta, pairs))
}

/// Mean over samples of each feature's peak normalized-softmax map mass.
/// Without spatial maps every bias is zero.
pub fn locality_bias<T: Scalar>(train: &FeatureMatrix<T>) -> Array1<T> {
    let q = train.n_features();
    let Some(maps) = train.spatial_maps() else {
        return Array1::zeros(q);
    };
    let n = train.n_samples();
    let mut bias = Array1::zeros(q);
    for j in 0..q {
        let mut total = T::zero();
        for i in 0..n {
            let map = maps.slice(ndarray::s![i, j, .., ..]);
            let soft = normalized_softmax(map);
            total = total + soft.iter().copied().fold(T::zero(), T::max);
        }
        bias[j] = total / T::from_usize_lossy(n);
    }
    bias
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array4};

    fn train(values: Array2<f64>, labels: Vec<usize>, c: usize) -> FeatureMatrix<f64> {
        let ids = (0..labels.len()).map(|i| i.to_string()).collect();
        FeatureMatrix::new(values, labels, c, Split::Train, None, ids).unwrap()
    }

    #[test]
    fn constant_feature_has_zero_column() {
        let fm = train(array![[3.0, 1.0], [3.0, 2.0], [3.0, 0.0]], vec![0, 1, 1], 2);
        let psi = class_feature_similarity(&fm).unwrap();
        assert_eq!(psi.column(0).to_vec(), vec![0.0, 0.0]);
    }

    #[test]
    fn balanced_indicator_z_scores_to_unit() {
        let fm = train(array![[1.0], [1.0], [0.0], [0.0]], vec![0, 0, 1, 1], 2);
        let psi = class_feature_similarity(&fm).unwrap();
        assert_eq!(psi[[0, 0]], 1.0);
        assert_eq!(psi[[1, 0]], -1.0);
    }

    #[test]
    fn single_sample_per_class_gives_z_scored_rows() {
        let x = array![[1.0, 4.0], [3.0, 0.0]];
        let fm = train(x.clone(), vec![0, 1], 2);
        let psi = class_feature_similarity(&fm).unwrap();
        // means (2, 2), population stds (1, 2)
        let expected = array![[-1.0, 1.0], [1.0, -1.0]];
        assert_eq!(psi, expected);
    }

    #[test]
    fn redundancy_signs() {
        let fm = train(
            array![[1.0, 1.0, -1.0, 5.0], [2.0, 2.0, -2.0, 5.0], [4.0, 4.0, -4.0, 5.0]],
            vec![0, 0, 0],
            1,
        );
        let r = feature_redundancy(&fm).unwrap();
        assert!((r[[0, 1]] - 1.0).abs() < 1e-12);
        assert!((r[[0, 2]] + 1.0).abs() < 1e-12);
        assert_eq!(r[[0, 3]], 0.0);
        assert_eq!(r[[1, 1]], 0.0);
    }

    #[test]
    fn class_class_examples() {
        let k = class_class_similarity(array![[1.0, 0.0], [0.0, 1.0]].view());
        assert_eq!(k, Array2::<f64>::zeros((2, 2)));
        let k = class_class_similarity(array![[1.0, 0.0], [1.0, 0.0]].view());
        assert_eq!(k, array![[0.0, 1.0], [1.0, 0.0]]);
        let k = class_class_similarity(Array2::<f64>::zeros((3, 2)).view());
        assert_eq!(k.diag().to_vec(), vec![-1.0; 3]);
        assert_eq!(k[[0, 1]], 0.0);
    }

    fn four_class_example() -> Array2<f64> {
        // pairs (1,2)=5 (2,3)=3 (1,3)=1 (1,4)=2 (3,4)=4 (2,4)=1, 1-indexed
        let mut k = Array2::zeros((4, 4));
        for &(i, j, v) in &[(0, 1, 5.0), (1, 2, 3.0), (0, 2, 1.0), (0, 3, 2.0), (2, 3, 4.0), (1, 3, 1.0)] {
            k[[i, j]] = v;
            k[[j, i]] = v;
        }
        k
    }

    #[test]
    fn threshold_from_duplicated_entries() {
        let (theta, pairs) = select_similar_pairs(four_class_example().view(), 0.5).unwrap();
        assert_eq!(theta, 4.0);
        assert_eq!(pairs, BTreeSet::from([(0, 1), (2, 3)]));
    }

    #[test]
    fn zero_rho_selects_nothing() {
        let (theta, pairs) = select_similar_pairs(four_class_example().view(), 0.0).unwrap();
        assert!(theta.is_infinite() && theta > 0.0);
        assert!(pairs.is_empty());
    }

    #[test]
    fn ties_at_threshold_include_all() {
        let mut k = Array2::from_elem((4, 4), 0.7);
        k.diag_mut().fill(-1.0);
        let (_, pairs) = select_similar_pairs(k.view(), 0.5).unwrap();
        assert_eq!(pairs.len(), 6);
    }

    #[test]
    fn oversized_rho_rejected() {
        assert!(select_similar_pairs(four_class_example().view(), 2.0).is_err());
    }

    #[test]
    fn locality_bias_cases() {
        let plain = train(array![[1.0], [2.0]], vec![0, 0], 1);
        assert_eq!(locality_bias(&plain).to_vec(), vec![0.0]);

        let (h, w) = (4, 4);
        let mut peaked = Array4::zeros((1, 1, h, w));
        peaked[[0, 0, 1, 2]] = 16.0;
        let ids = vec!["a".to_string()];
        let fm = FeatureMatrix::new(array![[1.0]], vec![0], 1, Split::Train, Some(peaked), ids.clone()).unwrap();
        let b = locality_bias(&fm)[0];
        // mean |map| is 1, so the normalized map keeps 16 in one cell
        let expected = 1.0 / (1.0 + 15.0 * (-16.0f64).exp());
        assert!((b - expected).abs() < 1e-12 && b > 0.999);

        let uniform = Array4::from_elem((1, 1, h, w), 2.0);
        let fm = FeatureMatrix::new(array![[2.0]], vec![0], 1, Split::Train, Some(uniform), ids).unwrap();
        assert!((locality_bias(&fm)[0] - 1.0f64 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn bundle_round_trip_keeps_infinite_theta() {
        let b = SimilarityBundle::from_parts(
            array![[1.0, 0.0], [0.0, 1.0]],
            Array2::zeros((2, 2)),
            Array1::zeros(2),
            0.0,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.json");
        b.save(&p).unwrap();
        assert_eq!(SimilarityBundle::<f64>::load(&p).unwrap(), b);
    }
}
