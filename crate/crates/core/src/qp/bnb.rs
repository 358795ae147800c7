//! Depth-first branch-and-bound over the selection vector.
//!
//! Features are fixed in index order. Each node bounds the best completion by
//! relaxing row distinctness and pair constraints; a complete selection is
//! handed to [`RowSearch`], which assigns rows exactly.

use std::cmp::Ordering;

use super::rows::{PairRule, RowSearch, SearchState};
use super::{bin_lex_cmp, slack, Assignment, QpInstance};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

struct Incumbent<T> {
    value: T,
    selection: Vec<usize>,
    rows: Vec<Vec<usize>>,
}

struct Outer<'a, T> {
    inst: &'a QpInstance<T>,
    rule: PairRule,
    state: SearchState,
    /// Per class, all features by descending similarity.
    class_order: Vec<Vec<usize>>,
    preferred: Vec<bool>,
    chosen: Vec<usize>,
    in_mask: Vec<bool>,
    best: Option<Incumbent<T>>,
    /// Largest bound among nodes discarded only because of the gap tolerance.
    gap_bound: Option<T>,
}

pub(super) fn solve<T: Scalar>(inst: &QpInstance<T>) -> Result<Assignment<T>> {
    let q = inst.n_features();
    let psi = &inst.bundle.psi;
    let class_order: Vec<Vec<usize>> = (0..inst.n_classes())
        .map(|c| {
            let mut order: Vec<usize> = (0..q).collect();
            order.sort_by(|&a, &b| psi[[c, b]].partial_cmp(&psi[[c, a]]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
            order
        })
        .collect();
    let preferred = preferred_features(inst, &class_order);
    let mut outer = Outer {
        inst,
        rule: PairRule::hard(inst.n_classes(), inst.pairs().iter().copied()),
        state: SearchState::new(inst.node_limit, inst.cut_limit),
        class_order,
        preferred,
        chosen: Vec::with_capacity(inst.k_features),
        in_mask: vec![false; q],
        best: None,
        gap_bound: None,
    };
    outer.visit(0)?;
    let Some(best) = outer.best else {
        return Err(Error::Infeasible {
            reason: "no assignment satisfies the class-pair constraints".into(),
            pairs: inst.pairs().iter().copied().collect(),
        });
    };
    let gap = match outer.gap_bound {
        Some(b) if b > best.value => (b - best.value) / best.value.abs().max(T::min_positive_value()),
        _ => T::zero(),
    };
    Ok(Assignment::from_parts(inst, best.selection, best.rows, gap))
}

/// Features most often among a class's top `n`, used to order the first dive.
fn preferred_features<T: Scalar>(inst: &QpInstance<T>, class_order: &[Vec<usize>]) -> Vec<bool> {
    let q = inst.n_features();
    let mut score = vec![T::zero(); q];
    for (c, order) in class_order.iter().enumerate() {
        for &f in order.iter().take(inst.n_per_class) {
            score[f] = score[f] + inst.bundle.psi[[c, f]].max(T::zero());
        }
    }
    for (f, s) in score.iter_mut().enumerate() {
        *s = *s + inst.lambda_bias * inst.bundle.bias[f];
    }
    let mut idx: Vec<usize> = (0..q).collect();
    idx.sort_by(|&a, &b| score[b].partial_cmp(&score[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    let mut preferred = vec![false; q];
    for &f in idx.iter().take(inst.k_features) {
        preferred[f] = true;
    }
    preferred
}

fn top_sum<T: Scalar>(mut values: Vec<T>, m: usize) -> T {
    if m == 0 {
        return T::zero();
    }
    values.sort_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
    values.iter().take(m).copied().fold(T::zero(), |a, v| a + v)
}

impl<T: Scalar> Outer<'_, T> {
    fn visit(&mut self, depth: usize) -> Result<()> {
        self.state.tick()?;
        let k = self.inst.k_features;
        let q = self.inst.n_features();
        let count = self.chosen.len();
        if count == k {
            let selection = self.chosen.clone();
            return self.leaf(selection);
        }
        if count + (q - depth) == k {
            let mut selection = self.chosen.clone();
            selection.extend(depth..q);
            return self.leaf(selection);
        }
        if let Some(best) = &self.best {
            let bound = self.bound(depth);
            if bound + slack(best.value) < best.value {
                return Ok(());
            }
            let gap = self.inst.mip_gap;
            if gap > T::zero() && bound <= best.value + gap * best.value.abs() {
                self.gap_bound = Some(self.gap_bound.map_or(bound, |b| b.max(bound)));
                return Ok(());
            }
        }
        let include_first = self.preferred[depth];
        for include in [include_first, !include_first] {
            if include {
                self.chosen.push(depth);
                self.in_mask[depth] = true;
                let r = self.visit(depth + 1);
                self.chosen.pop();
                self.in_mask[depth] = false;
                r?;
            } else {
                self.visit(depth + 1)?;
            }
        }
        Ok(())
    }

    fn leaf(&mut self, selection: Vec<usize>) -> Result<()> {
        let cutoff = self.best.as_ref().map(|b| {
            let strict = bin_lex_cmp(&selection, &b.selection) == Ordering::Greater;
            (b.value, strict)
        });
        let mut search = RowSearch::new(self.inst, &selection, &self.rule, cutoff);
        search.run(&mut self.state)?;
        if let Some((value, rows)) = search.best {
            self.best = Some(Incumbent { value, selection, rows });
        }
        Ok(())
    }

    /// Upper bound on every completion of the current node. Features before
    /// `depth` are fixed; `depth..` are free.
    fn bound(&self, depth: usize) -> T {
        let inst = self.inst;
        let n = inst.n_per_class;
        let q = inst.n_features();
        let m = inst.k_features - self.chosen.len();
        let psi = &inst.bundle.psi;
        let r = &inst.bundle.redundancy;
        let lr = inst.lambda_redundancy;
        let fixed_value = inst.selection_value(&self.chosen);

        let free: Vec<usize> = (depth..q).collect();
        let half = lr / T::lit(2.0);
        let h: Vec<T> = free
            .iter()
            .map(|&f| {
                let mut v = inst.lambda_bias * inst.bundle.bias[f];
                if lr > T::zero() {
                    let with_fixed = self.chosen.iter().fold(T::zero(), |a, &g| a + r[[f, g]]);
                    v = v - lr * with_fixed;
                    if m > 1 {
                        let others: Vec<T> = free.iter().filter(|&&g| g != f).map(|&g| -r[[f, g]]).collect();
                        // smallest m − 1 correlations with other free features
                        v = v + half * top_sum(others, m - 1);
                    }
                }
                v
            })
            .collect();

        let mut open_rows = T::zero();
        let mut fixed_rows = T::zero();
        let mut gain = vec![T::zero(); free.len()];
        let have_fixed_rows = self.chosen.len() >= n;
        for (c, order) in self.class_order.iter().enumerate() {
            let mut taken = 0;
            for &f in order {
                if taken == n {
                    break;
                }
                if f >= depth || self.in_mask[f] {
                    open_rows = open_rows + psi[[c, f]];
                    taken += 1;
                }
            }
            if have_fixed_rows {
                let mut taken = 0;
                let mut floor = T::zero();
                for &f in order {
                    if taken == n {
                        break;
                    }
                    if self.in_mask[f] {
                        fixed_rows = fixed_rows + psi[[c, f]];
                        floor = psi[[c, f]];
                        taken += 1;
                    }
                }
                for (i, &f) in free.iter().enumerate() {
                    let d = psi[[c, f]] - floor;
                    if d > T::zero() {
                        gain[i] = gain[i] + d;
                    }
                }
            }
        }
        let loose = open_rows + fixed_value + top_sum(h.clone(), m);
        if !have_fixed_rows {
            return loose;
        }
        let combined: Vec<T> = h.iter().zip(&gain).map(|(&a, &b)| a + b).collect();
        let tight = fixed_rows + fixed_value + top_sum(combined, m);
        loose.min(tight)
    }
}
