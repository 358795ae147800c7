//! Post-hoc relaxation of the pair constraints.
//!
//! With the selection frozen, the hard requirement that every enforced pair
//! shares `n − 1` features is replaced by: at least `|K|` pairs out of every
//! pair that has shared `n − 1` features in any iterate must do so.

use std::collections::BTreeSet;

use super::rows::{PairRule, RowSearch, SearchState};
use super::{pairs_of_rows, shared, Assignment, QpInstance};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::similarity::ClassPair;

pub const RELAX_ITERATION_CAP: usize = 50;

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RelaxationState {
    /// Every pair that shared `n − 1` features in some iterate, plus the enforced pairs.
    pub ever_paired: BTreeSet<ClassPair>,
    /// Per entry of `ever_paired` (in order), whether it shares `n − 1` features now.
    pub choice: Vec<bool>,
    pub iterations: usize,
    /// False when the iteration cap was hit; the result is then the last iterate.
    pub converged: bool,
}

impl RelaxationState {
    pub fn chosen(&self) -> usize {
        self.choice.iter().filter(|&&m| m).count()
    }
}

/// Re-assigns rows on the frozen selection of `init` under the relaxed
/// pair requirement, iterating until the pair pool and rows are stable.
pub fn relax_hierarchy<T: Scalar>(
    init: &Assignment<T>,
    inst: &QpInstance<T>,
) -> Result<(Assignment<T>, RelaxationState)> {
    relax_with_cap(init, inst, RELAX_ITERATION_CAP)
}

pub(crate) fn relax_with_cap<T: Scalar>(
    init: &Assignment<T>,
    inst: &QpInstance<T>,
    cap: usize,
) -> Result<(Assignment<T>, RelaxationState)> {
    inst.check(&init.selection, &init.rows)?;
    let need = inst.pairs().len();
    let mut pool: BTreeSet<ClassPair> = init.pairs.union(inst.pairs()).copied().collect();
    let mut rows = init.rows.clone();
    let mut state = SearchState::new(inst.node_limit, inst.cut_limit);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cap {
        iterations += 1;
        let rule = PairRule::at_least(inst.n_classes(), pool.iter().copied(), need);
        let mut search = RowSearch::new(inst, &init.selection, &rule, None).with_incumbent(rows.clone());
        search.run(&mut state)?;
        let (_, next) = search
            .best
            .ok_or_else(|| Error::Invariant("relaxation lost its feasible starting point".into()))?;
        let grown: BTreeSet<ClassPair> = pool.union(&pairs_of_rows(&next, inst.n_per_class)).copied().collect();
        let stable = next == rows && grown == pool;
        rows = next;
        pool = grown;
        if stable {
            converged = true;
            break;
        }
    }
    let choice = pool
        .iter()
        .map(|&(i, j)| shared(&rows[i], &rows[j]) + 1 == inst.n_per_class)
        .collect();
    let out = Assignment::from_parts(inst, init.selection.clone(), rows, T::zero());
    Ok((
        out,
        RelaxationState {
            ever_paired: pool,
            choice,
            iterations,
            converged,
        },
    ))
}
