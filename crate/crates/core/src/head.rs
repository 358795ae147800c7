//! The fitted model head: everything inference needs.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::{read_json, write_json};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Selected features, binary class assignment and normalization statistics.
///
/// Class rows are stored as sorted indices into the *selected* features
/// (`0..k`), so row `c` of the dense `C×k` matrix has ones exactly there.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelHead<T> {
    selection: Vec<usize>,
    n_raw_features: usize,
    rows: Vec<Vec<usize>>,
    mu: Vec<T>,
    sigma: Vec<T>,
    active_mean: Vec<T>,
    n_per_class: usize,
}

impl<T: Scalar> ModelHead<T> {
    /// Validates and builds a head.
    ///
    /// `selection` lists raw feature indices; `rows[c]` lists the positions
    /// (into `selection`) assigned to class `c`.
    pub fn new(
        selection: Vec<usize>,
        n_raw_features: usize,
        rows: Vec<Vec<usize>>,
        mu: Vec<T>,
        sigma: Vec<T>,
        active_mean: Vec<T>,
        n_per_class: usize,
    ) -> Result<Self> {
        let mut selection = selection;
        selection.sort_unstable();
        if selection.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Invariant("selection repeats a feature".into()));
        }
        if selection.last().is_some_and(|&q| q >= n_raw_features) {
            return Err(Error::Invariant("selected feature outside raw feature range".into()));
        }
        let k = selection.len();
        if k == 0 || rows.is_empty() {
            return Err(Error::Invariant("head needs at least one feature and one class".into()));
        }
        for (what, v) in [("mu", &mu), ("sigma", &sigma), ("active_mean", &active_mean)] {
            if v.len() != k {
                return Err(Error::DimensionMismatch {
                    what: what.to_string(),
                    expected: k,
                    found: v.len(),
                });
            }
        }
        if sigma.iter().any(|s| !(*s > T::zero()) || !s.is_finite()) {
            return Err(Error::Invariant("sigma must be strictly positive".into()));
        }
        let mut rows = rows;
        for (c, row) in rows.iter_mut().enumerate() {
            row.sort_unstable();
            row.dedup();
            if row.iter().any(|&j| j >= k) {
                return Err(Error::Invariant(format!("class {c} uses a feature outside the selection")));
            }
            if row.len() != n_per_class {
                return Err(Error::RowSum {
                    class: c,
                    expected: n_per_class,
                    found: row.len(),
                });
            }
        }
        check_distinct_rows(&rows)?;
        Ok(Self {
            selection,
            n_raw_features,
            rows,
            mu,
            sigma,
            active_mean,
            n_per_class,
        })
    }

    pub fn selection(&self) -> &[usize] {
        &self.selection
    }

    pub fn n_raw_features(&self) -> usize {
        self.n_raw_features
    }

    pub fn k_features(&self) -> usize {
        self.selection.len()
    }

    pub fn n_classes(&self) -> usize {
        self.rows.len()
    }

    pub fn n_per_class(&self) -> usize {
        self.n_per_class
    }

    /// Selected-feature positions assigned to `class`, ascending.
    pub fn class_features(&self, class: usize) -> &[usize] {
        &self.rows[class]
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.rows
    }

    pub fn mu(&self) -> &[T] {
        &self.mu
    }

    pub fn sigma(&self) -> &[T] {
        &self.sigma
    }

    pub fn active_mean(&self) -> &[T] {
        &self.active_mean
    }

    pub fn with_active_mean(mut self, active_mean: Vec<T>) -> Result<Self> {
        if active_mean.len() != self.k_features() {
            return Err(Error::DimensionMismatch {
                what: "active_mean".into(),
                expected: self.k_features(),
                found: active_mean.len(),
            });
        }
        self.active_mean = active_mean;
        Ok(self)
    }

    /// Dense `C×k` binary assignment.
    pub fn assignment(&self) -> Array2<u8> {
        let mut w = Array2::zeros((self.n_classes(), self.k_features()));
        for (c, row) in self.rows.iter().enumerate() {
            for &j in row {
                w[[c, j]] = 1;
            }
        }
        w
    }

    /// Dense `C×Q_raw` binary assignment over the raw features.
    pub fn assignment_full(&self) -> Array2<u8> {
        let mut w = Array2::zeros((self.n_classes(), self.n_raw_features));
        for (c, row) in self.rows.iter().enumerate() {
            for &j in row {
                w[[c, self.selection[j]]] = 1;
            }
        }
        w
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, &HeadFile::from(self))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: HeadFile<T> = read_json(path)?;
        file.into_head()
    }

    /// Stable content digest of the serialized head.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let text = serde_json::to_string(&HeadFile::from(self)).expect("head serializes");
        hex::encode(Sha256::digest(text.as_bytes()))[..16].to_string()
    }
}

/// Errors on the first pair of identical rows.
pub(crate) fn check_distinct_rows(rows: &[Vec<usize>]) -> Result<()> {
    let mut seen: BTreeMap<&[usize], usize> = BTreeMap::new();
    for (c, row) in rows.iter().enumerate() {
        if let Some(&prev) = seen.get(row.as_slice()) {
            return Err(Error::DuplicateRows(prev, c));
        }
        seen.insert(row, c);
    }
    Ok(())
}

/// On-disk form of [`ModelHead`]; selection and assignment are dense 0/1 arrays.
#[derive(Serialize, Deserialize)]
struct HeadFile<T> {
    n_raw_features: usize,
    k_features: usize,
    n_per_class: usize,
    selection: Vec<u8>,
    assignment: Vec<Vec<u8>>,
    mu: Vec<T>,
    sigma: Vec<T>,
    active_mean: Vec<T>,
}

impl<T: Scalar> From<&ModelHead<T>> for HeadFile<T> {
    fn from(h: &ModelHead<T>) -> Self {
        let mut selection = vec![0u8; h.n_raw_features];
        for &q in &h.selection {
            selection[q] = 1;
        }
        Self {
            n_raw_features: h.n_raw_features,
            k_features: h.k_features(),
            n_per_class: h.n_per_class,
            selection,
            assignment: h.assignment().outer_iter().map(|r| r.to_vec()).collect(),
            mu: h.mu.clone(),
            sigma: h.sigma.clone(),
            active_mean: h.active_mean.clone(),
        }
    }
}

impl<T: Scalar> HeadFile<T> {
    fn into_head(self) -> Result<ModelHead<T>> {
        if self.selection.len() != self.n_raw_features {
            return Err(Error::DimensionMismatch {
                what: "selection".into(),
                expected: self.n_raw_features,
                found: self.selection.len(),
            });
        }
        let selection: Vec<usize> = binary_positions(&self.selection, "selection")?;
        if selection.len() != self.k_features {
            return Err(Error::Invariant(format!(
                "selection has {} features, k_features is {}",
                selection.len(),
                self.k_features
            )));
        }
        let mut rows = Vec::with_capacity(self.assignment.len());
        for (c, row) in self.assignment.iter().enumerate() {
            if row.len() != self.k_features {
                return Err(Error::DimensionMismatch {
                    what: format!("assignment row {c}"),
                    expected: self.k_features,
                    found: row.len(),
                });
            }
            rows.push(binary_positions(row, "assignment")?);
        }
        ModelHead::new(
            selection,
            self.n_raw_features,
            rows,
            self.mu,
            self.sigma,
            self.active_mean,
            self.n_per_class,
        )
    }
}

fn binary_positions(bits: &[u8], what: &str) -> Result<Vec<usize>> {
    bits.iter()
        .enumerate()
        .filter_map(|(i, &b)| match b {
            0 => None,
            1 => Some(Ok(i)),
            other => Some(Err(Error::Invariant(format!("{what} entry {other} is not binary")))),
        })
        .collect()
}
