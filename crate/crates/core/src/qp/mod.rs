//! Joint feature selection and class assignment as a constrained binary
//! quadratic program, solved exactly by branch-and-bound.
//!
//! The objective for a selection `S` (|S| = k) and class rows `W` is
//!
//! ```text
//! Σ_c Σ_{q ∈ row_c} Ψ[c,q]  −  λ_R Σ_{q<q' ∈ S} R[q,q']  +  λ_b Σ_{q ∈ S} b[q]
//! ```
//!
//! with every row holding exactly `n` selected features, no two rows equal and
//! every enforced pair sharing exactly `n − 1` features.
//!
//! Among solutions with bit-identical objective the solver returns the one
//! whose selection vector is lexicographically smallest (as a 0/1 vector),
//! then the one whose row-major assignment is smallest.

mod bnb;
mod brute;
mod relax;
mod rows;

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub use brute::{brute_force, brute_force_size, BRUTE_FORCE_LIMIT};
pub use relax::{relax_hierarchy, RelaxationState, RELAX_ITERATION_CAP};

use crate::data::{read_json, write_json};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::similarity::{ClassPair, SimilarityBundle};

/// Default relative optimality gap.
pub const DEFAULT_MIP_GAP: f64 = 0.01;
/// Default weight of the redundancy penalty and of the linear bias.
pub const DEFAULT_LAMBDA: f64 = 0.1;

#[derive(Clone, Debug)]
pub struct QpInstance<T> {
    pub bundle: SimilarityBundle<T>,
    pub k_features: usize,
    pub n_per_class: usize,
    pub lambda_redundancy: T,
    pub lambda_bias: T,
    pub mip_gap: T,
    /// Upper limit on explored search nodes before giving up.
    pub node_limit: usize,
    /// Upper limit on generated duplicate-row cuts.
    pub cut_limit: usize,
}

impl<T: Scalar> QpInstance<T> {
    /// Validates feasibility of the counting constraints and builds the instance.
    pub fn new(
        bundle: SimilarityBundle<T>,
        k_features: usize,
        n_per_class: usize,
        lambda_redundancy: T,
        lambda_bias: T,
        mip_gap: T,
    ) -> Result<Self> {
        let (c, q) = (bundle.n_classes(), bundle.n_features());
        if n_per_class == 0 {
            return Err(Error::invalid("n_per_class must be at least 1"));
        }
        if k_features < n_per_class || k_features > q {
            return Err(Error::Infeasible {
                reason: format!("need n ≤ k ≤ Q, got n = {n_per_class}, k = {k_features}, Q = {q}"),
                pairs: Vec::new(),
            });
        }
        let rows = binomial(k_features, n_per_class);
        if (c as u128) > rows {
            return Err(Error::Infeasible {
                reason: format!(
                    "{c} classes cannot have distinct rows with {n_per_class} of {k_features} features ({rows} possible)"
                ),
                pairs: Vec::new(),
            });
        }
        if lambda_redundancy < T::zero() || lambda_bias < T::zero() || mip_gap < T::zero() {
            return Err(Error::invalid("objective weights and mip_gap must be non-negative"));
        }
        Ok(Self {
            bundle,
            k_features,
            n_per_class,
            lambda_redundancy,
            lambda_bias,
            mip_gap,
            node_limit: 200_000_000,
            cut_limit: 100_000,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.bundle.n_classes()
    }

    pub fn n_features(&self) -> usize {
        self.bundle.n_features()
    }

    pub fn pairs(&self) -> &BTreeSet<ClassPair> {
        &self.bundle.pair_set
    }

    pub fn with_mip_gap(mut self, gap: T) -> Self {
        self.mip_gap = gap;
        self
    }

    pub fn with_pairs(mut self, pairs: BTreeSet<ClassPair>) -> Self {
        self.bundle.pair_set = pairs;
        self
    }

    /// Value of one class row (sorted raw feature indices).
    pub(crate) fn row_value(&self, class: usize, row: &[usize]) -> T {
        row.iter().fold(T::zero(), |acc, &q| acc + self.bundle.psi[[class, q]])
    }

    /// Selection-only part of the objective: bias minus redundancy.
    pub(crate) fn selection_value(&self, selection: &[usize]) -> T {
        let lin = selection.iter().fold(T::zero(), |acc, &q| acc + self.bundle.bias[q]);
        let mut quad = T::zero();
        for (i, &a) in selection.iter().enumerate() {
            for &b in &selection[i + 1..] {
                quad = quad + self.bundle.redundancy[[a, b]];
            }
        }
        self.lambda_bias * lin - self.lambda_redundancy * quad
    }

    /// Objective of a selection and class rows, summed in a fixed order so the
    /// same solution always evaluates to the same bits.
    pub fn evaluate(&self, selection: &[usize], rows: &[Vec<usize>]) -> T {
        let assigned = rows
            .iter()
            .enumerate()
            .fold(T::zero(), |acc, (c, row)| acc + self.row_value(c, row));
        assigned + self.selection_value(selection)
    }

    /// Checks every constraint of the program on a candidate.
    pub fn check(&self, selection: &[usize], rows: &[Vec<usize>]) -> Result<()> {
        if selection.len() != self.k_features || selection.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Invariant("selection must be k sorted distinct features".into()));
        }
        if rows.len() != self.n_classes() {
            return Err(Error::DimensionMismatch {
                what: "assignment rows".into(),
                expected: self.n_classes(),
                found: rows.len(),
            });
        }
        for (c, row) in rows.iter().enumerate() {
            if row.len() != self.n_per_class || row.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::RowSum {
                    class: c,
                    expected: self.n_per_class,
                    found: row.len(),
                });
            }
            if row.iter().any(|q| selection.binary_search(q).is_err()) {
                return Err(Error::Invariant(format!("class {c} uses an unselected feature")));
            }
        }
        crate::head::check_distinct_rows(rows)?;
        for &(i, j) in self.pairs() {
            if shared(&rows[i], &rows[j]) + 1 != self.n_per_class {
                return Err(Error::Invariant(format!("pair ({i}, {j}) does not share n − 1 features")));
            }
        }
        Ok(())
    }
}

/// Exact solution of a [`QpInstance`].
#[derive(Clone, Debug, PartialEq)]
pub struct Assignment<T> {
    /// Selected raw features, ascending.
    pub selection: Vec<usize>,
    /// Per class, its raw features, ascending.
    pub rows: Vec<Vec<usize>>,
    /// Class pairs sharing exactly `n − 1` features.
    pub pairs: BTreeSet<ClassPair>,
    pub objective: T,
    /// Relative gap between the returned objective and the best pruned bound.
    pub gap: T,
    pub n_features: usize,
    pub n_per_class: usize,
}

impl<T: Scalar> Assignment<T> {
    pub(crate) fn from_parts(
        inst: &QpInstance<T>,
        selection: Vec<usize>,
        rows: Vec<Vec<usize>>,
        gap: T,
    ) -> Self {
        let objective = inst.evaluate(&selection, &rows);
        let pairs = pairs_of_rows(&rows, inst.n_per_class);
        Self {
            selection,
            rows,
            pairs,
            objective,
            gap,
            n_features: inst.n_features(),
            n_per_class: inst.n_per_class,
        }
    }

    pub fn n_classes(&self) -> usize {
        self.rows.len()
    }

    pub fn k_features(&self) -> usize {
        self.selection.len()
    }

    /// Binary selection vector over all raw features.
    pub fn selection_vector(&self) -> Vec<u8> {
        let mut s = vec![0u8; self.n_features];
        for &q in &self.selection {
            s[q] = 1;
        }
        s
    }

    /// Rows as positions into `selection`.
    pub fn local_rows(&self) -> Vec<Vec<usize>> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|q| self.selection.binary_search(q).expect("row within selection")).collect())
            .collect()
    }

    /// Dense `C×Q` binary assignment.
    pub fn assignment_full(&self) -> Array2<u8> {
        let mut w = Array2::zeros((self.n_classes(), self.n_features));
        for (c, row) in self.rows.iter().enumerate() {
            for &q in row {
                w[[c, q]] = 1;
            }
        }
        w
    }

    /// Dense `C×k` binary assignment over the selected features.
    pub fn assignment_selected(&self) -> Array2<u8> {
        let mut w = Array2::zeros((self.n_classes(), self.k_features()));
        for (c, row) in self.local_rows().iter().enumerate() {
            for &j in row {
                w[[c, j]] = 1;
            }
        }
        w
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(
            path,
            &AssignmentFile {
                n_features: self.n_features,
                n_per_class: self.n_per_class,
                selection: self.selection.clone(),
                rows: self.local_rows(),
                pairs: self.pairs.iter().copied().collect(),
                objective: self.objective,
                gap: self.gap,
            },
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f: AssignmentFile<T> = read_json(path)?;
        let mut rows = Vec::with_capacity(f.rows.len());
        for local in &f.rows {
            let mut row = Vec::with_capacity(local.len());
            for &j in local {
                row.push(*f.selection.get(j).ok_or_else(|| Error::Invariant("row index outside selection".into()))?);
            }
            row.sort_unstable();
            rows.push(row);
        }
        let pairs = pair_set_of(&rows, f.n_per_class)?;
        Ok(Self {
            selection: f.selection,
            rows,
            pairs,
            objective: f.objective,
            gap: f.gap,
            n_features: f.n_features,
            n_per_class: f.n_per_class,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct AssignmentFile<T> {
    n_features: usize,
    n_per_class: usize,
    selection: Vec<usize>,
    /// Rows as positions into `selection`.
    rows: Vec<Vec<usize>>,
    pairs: Vec<ClassPair>,
    objective: T,
    gap: T,
}

/// Solves the program exactly (up to `mip_gap`).
pub fn solve<T: Scalar>(inst: &QpInstance<T>) -> Result<Assignment<T>> {
    bnb::solve(inst)
}

/// Pairs of rows (sorted index lists) sharing exactly `n − 1` entries.
/// Errors on identical rows.
pub fn pair_set_of(rows: &[Vec<usize>], n_per_class: usize) -> Result<BTreeSet<ClassPair>> {
    crate::head::check_distinct_rows(rows)?;
    Ok(pairs_of_rows(rows, n_per_class))
}

/// [`pair_set_of`] on a dense binary matrix.
pub fn pair_set_of_matrix(w: &Array2<u8>) -> Result<BTreeSet<ClassPair>> {
    let rows: Vec<Vec<usize>> = w
        .outer_iter()
        .map(|r| r.iter().enumerate().filter(|(_, &b)| b != 0).map(|(j, _)| j).collect())
        .collect();
    let n = rows.first().map_or(0, Vec::len);
    if let Some(c) = rows.iter().position(|r| r.len() != n) {
        return Err(Error::RowSum {
            class: c,
            expected: n,
            found: rows[c].len(),
        });
    }
    pair_set_of(&rows, n)
}

fn pairs_of_rows(rows: &[Vec<usize>], n_per_class: usize) -> BTreeSet<ClassPair> {
    let mut out = BTreeSet::new();
    for i in 0..rows.len() {
        for j in (i + 1)..rows.len() {
            if shared(&rows[i], &rows[j]) + 1 == n_per_class {
                out.insert((i, j));
            }
        }
    }
    out
}

/// Size of the intersection of two sorted index lists.
pub(crate) fn shared(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut count) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                count += 1;
                i += 1;
                j += 1;
            }
        }
    }
    count
}

/// Compares the 0/1 vectors whose one-positions are the sorted lists `a` and
/// `b`, with `0 < 1` at the first differing coordinate.
pub(crate) fn bin_lex_cmp(a: &[usize], b: &[usize]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.cmp(y) {
            Ordering::Equal => continue,
            // `a` has a one at `x` where `b` still has a zero
            Ordering::Less => return Ordering::Greater,
            Ordering::Greater => return Ordering::Less,
        }
    }
    // the longer list has a one where the shorter has only zeros left
    a.len().cmp(&b.len())
}

/// Row-major comparison of two assignments.
pub(crate) fn rows_lex_cmp(a: &[Vec<usize>], b: &[Vec<usize>]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        let o = bin_lex_cmp(x, y);
        if o != Ordering::Equal {
            return o;
        }
    }
    Ordering::Equal
}

/// True when `(value, selection, rows)` beats `(best_value, best_selection,
/// best_rows)`: higher objective, then smaller selection, then smaller rows.
pub(crate) fn beats<T: Scalar>(
    value: T,
    selection: &[usize],
    rows: &[Vec<usize>],
    best_value: T,
    best_selection: &[usize],
    best_rows: &[Vec<usize>],
) -> bool {
    if value != best_value {
        return value > best_value;
    }
    match bin_lex_cmp(selection, best_selection) {
        Ordering::Less => true,
        Ordering::Greater => false,
        Ordering::Equal => rows_lex_cmp(rows, best_rows) == Ordering::Less,
    }
}

/// `binom(n, r)`, saturating at `u128::MAX`.
pub fn binomial(n: usize, r: usize) -> u128 {
    if r > n {
        return 0;
    }
    let r = r.min(n - r);
    let mut acc: u128 = 1;
    for i in 0..r {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Absolute slack covering rounding differences between bound and objective.
pub(crate) fn slack<T: Scalar>(reference: T) -> T {
    crate::scalar::tie_band(reference)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};

    pub(crate) fn instance(psi: Array2<f64>, k: usize, n: usize, pairs: &[(usize, usize)]) -> QpInstance<f64> {
        let q = psi.ncols();
        let bundle = SimilarityBundle::from_parts(psi, Array2::zeros((q, q)), Array1::zeros(q), 0.0)
            .unwrap()
            .with_pairs(pairs.iter().copied().collect());
        QpInstance::new(bundle, k, n, 0.1, 0.1, 0.0).unwrap()
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(50, 5), 2_118_760);
        assert_eq!(binomial(2, 1), 2);
        assert_eq!(binomial(3, 4), 0);
        assert_eq!(binomial(500, 250), u128::MAX);
    }

    #[test]
    fn lex_order_is_binary() {
        // 0 1 1 < 1 0 1 < 1 1 0
        assert_eq!(bin_lex_cmp(&[1, 2], &[0, 2]), Ordering::Less);
        assert_eq!(bin_lex_cmp(&[0, 2], &[0, 1]), Ordering::Less);
        assert_eq!(bin_lex_cmp(&[0, 1], &[0, 1]), Ordering::Equal);
    }

    #[test]
    fn large_instance_is_feasible() {
        let q = 60;
        let bundle =
            SimilarityBundle::from_parts(Array2::<f64>::zeros((200, q)), Array2::zeros((q, q)), Array1::zeros(q), 0.0)
                .unwrap();
        assert!(QpInstance::new(bundle, 50, 5, 0.1, 0.1, 0.01).is_ok());
    }

    #[test]
    fn too_few_distinct_rows_is_infeasible() {
        let bundle =
            SimilarityBundle::from_parts(Array2::<f64>::zeros((3, 2)), Array2::zeros((2, 2)), Array1::zeros(2), 0.0)
                .unwrap();
        let err = QpInstance::new(bundle, 2, 1, 0.1, 0.1, 0.0).unwrap_err();
        assert!(matches!(err, Error::Infeasible { .. }));
    }

    #[test]
    fn zero_weights_reduce_to_assigned_similarity() {
        let psi = array![[1.0, 0.2, 0.5], [0.1, 0.9, 0.4]];
        let mut inst = instance(psi, 2, 1, &[]);
        inst.bundle.redundancy = Array2::from_elem((3, 3), 0.7);
        inst.bundle.bias = Array1::from_elem(3, 2.0);
        inst.lambda_redundancy = 0.0;
        inst.lambda_bias = 0.0;
        assert_eq!(inst.evaluate(&[0, 1], &[vec![0], vec![1]]), 1.9);
    }

    #[test]
    fn pair_set_examples() {
        assert!(pair_set_of(&[vec![0, 1], vec![0, 1]], 2).is_err());
        assert_eq!(pair_set_of(&[vec![0, 1], vec![0, 2]], 2).unwrap(), BTreeSet::from([(0, 1)]));
        assert!(pair_set_of(&[vec![0, 1], vec![2, 3]], 2).unwrap().is_empty());
        let w = array![[1u8, 1, 0], [1, 0, 1]];
        assert_eq!(pair_set_of_matrix(&w).unwrap(), BTreeSet::from([(0, 1)]));
    }

    #[test]
    fn assignment_round_trip() {
        let inst = instance(array![[1.0, 0.2, 0.5], [0.1, 0.9, 0.4]], 2, 1, &[]);
        let a = solve(&inst).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.json");
        a.save(&p).unwrap();
        assert_eq!(Assignment::<f64>::load(&p).unwrap(), a);
    }
}
