//! Exhaustive enumeration, used as an oracle for the branch-and-bound solver.

use super::{beats, binomial, shared, Assignment, QpInstance};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Largest number of `(selection, rows)` candidates [`brute_force`] accepts.
pub const BRUTE_FORCE_LIMIT: u128 = 10_000_000;

/// `binom(Q, k) · P(binom(k, n), C)`: selections times ordered distinct row tuples.
pub fn brute_force_size<T: Scalar>(inst: &QpInstance<T>) -> u128 {
    let rows = binomial(inst.k_features, inst.n_per_class);
    let mut tuples: u128 = 1;
    for i in 0..inst.n_classes() as u128 {
        tuples = tuples.saturating_mul(rows.saturating_sub(i));
    }
    binomial(inst.n_features(), inst.k_features).saturating_mul(tuples)
}

/// Exact optimum by enumerating every feasible `(selection, rows)`.
pub fn brute_force<T: Scalar>(inst: &QpInstance<T>) -> Result<Assignment<T>> {
    let size = brute_force_size(inst);
    if size > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge {
            size,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let mut best: Option<(T, Vec<usize>, Vec<Vec<usize>>)> = None;
    for selection in combinations(&(0..inst.n_features()).collect::<Vec<_>>(), inst.k_features) {
        let rows = combinations(&selection, inst.n_per_class);
        let mut current = vec![Vec::new(); inst.n_classes()];
        enumerate_rows(inst, &selection, &rows, 0, &mut current, &mut best);
    }
    match best {
        Some((_, selection, rows)) => Ok(Assignment::from_parts(inst, selection, rows, T::zero())),
        None => Err(Error::Infeasible {
            reason: "no assignment satisfies the class-pair constraints".into(),
            pairs: inst.pairs().iter().copied().collect(),
        }),
    }
}

type Best<T> = Option<(T, Vec<usize>, Vec<Vec<usize>>)>;

fn enumerate_rows<T: Scalar>(
    inst: &QpInstance<T>,
    selection: &[usize],
    options: &[Vec<usize>],
    class: usize,
    current: &mut Vec<Vec<usize>>,
    best: &mut Best<T>,
) {
    if class == current.len() {
        let value = inst.evaluate(selection, current);
        let better = match best {
            None => true,
            Some((v, s, r)) => beats(value, selection, current, *v, s, r),
        };
        if better {
            *best = Some((value, selection.to_vec(), current.clone()));
        }
        return;
    }
    for row in options {
        if current[..class].contains(row) {
            continue;
        }
        let paired_ok = inst
            .pairs()
            .iter()
            .filter(|&&(_, j)| j == class)
            .all(|&(i, _)| shared(&current[i], row) + 1 == inst.n_per_class);
        if !paired_ok {
            continue;
        }
        current[class] = row.clone();
        enumerate_rows(inst, selection, options, class + 1, current, best);
    }
}

/// All `r`-subsets of `items` (kept in their order), lexicographic by position.
pub(crate) fn combinations(items: &[usize], r: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..r).collect();
    if r > items.len() {
        return out;
    }
    loop {
        out.push(idx.iter().map(|&i| items[i]).collect());
        let Some(i) = (0..r).rev().find(|&i| idx[i] < i + items.len() - r) else {
            return out;
        };
        idx[i] += 1;
        for j in i + 1..r {
            idx[j] = idx[j - 1] + 1;
        }
    }
}
