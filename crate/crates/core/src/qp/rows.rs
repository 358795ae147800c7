//! Class-row search for a fixed feature selection.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use super::{bin_lex_cmp, rows_lex_cmp, shared, slack, QpInstance};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub(crate) struct Row<T> {
    pub features: Vec<usize>,
    pub value: T,
}

struct Pending<T> {
    value: T,
    positions: Vec<usize>,
}

impl<T: Scalar> PartialEq for Pending<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: Scalar> Eq for Pending<T> {}

impl<T: Scalar> PartialOrd for Pending<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Scalar> Ord for Pending<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.value
            .partial_cmp(&other.value)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.positions.cmp(&self.positions))
    }
}

/// Lazily enumerates a class's `n`-subsets of the selection in descending
/// value; equal values come out in ascending binary order.
pub(crate) struct RowStream<T> {
    class: usize,
    /// Selected features by descending similarity, ties by index.
    order: Vec<usize>,
    emitted: Vec<Row<T>>,
    heap: BinaryHeap<Pending<T>>,
    seen: HashSet<Vec<usize>>,
}

impl<T: Scalar> RowStream<T> {
    pub fn new(inst: &QpInstance<T>, class: usize, selection: &[usize]) -> Self {
        let psi = &inst.bundle.psi;
        let mut order = selection.to_vec();
        order.sort_by(|&a, &b| {
            psi[[class, b]]
                .partial_cmp(&psi[[class, a]])
                .unwrap_or(Ordering::Equal)
                .then(a.cmp(&b))
        });
        let mut s = Self {
            class,
            order,
            emitted: Vec::new(),
            heap: BinaryHeap::new(),
            seen: HashSet::new(),
        };
        let n = inst.n_per_class;
        if n <= s.order.len() {
            let first: Vec<usize> = (0..n).collect();
            s.push(inst, first);
        }
        s
    }

    fn features(&self, positions: &[usize]) -> Vec<usize> {
        let mut f: Vec<usize> = positions.iter().map(|&p| self.order[p]).collect();
        f.sort_unstable();
        f
    }

    fn push(&mut self, inst: &QpInstance<T>, positions: Vec<usize>) {
        if !self.seen.insert(positions.clone()) {
            return;
        }
        let value = inst.row_value(self.class, &self.features(&positions));
        self.heap.push(Pending { value, positions });
    }

    fn expand(&mut self, inst: &QpInstance<T>, positions: &[usize]) {
        let n = positions.len();
        for i in 0..n {
            let next = positions[i] + 1;
            let limit = if i + 1 < n { positions[i + 1] } else { self.order.len() };
            if next < limit {
                let mut p = positions.to_vec();
                p[i] = next;
                self.push(inst, p);
            }
        }
    }

    /// Row number `idx` of the stream, generating as needed.
    pub fn get(&mut self, inst: &QpInstance<T>, idx: usize) -> Option<&Row<T>> {
        while self.emitted.len() <= idx {
            let top = self.heap.pop()?;
            let value = top.value;
            self.expand(inst, &top.positions);
            let mut group = vec![self.features(&top.positions)];
            while self.heap.peek().is_some_and(|p| p.value == value) {
                let p = self.heap.pop().expect("peeked");
                self.expand(inst, &p.positions);
                group.push(self.features(&p.positions));
            }
            group.sort_by(|a, b| bin_lex_cmp(a, b));
            self.emitted.extend(group.into_iter().map(|features| Row { features, value }));
        }
        self.emitted.get(idx)
    }
}

/// How class pairs constrain the rows.
pub(crate) enum PairRule {
    /// Every listed pair must share exactly `n − 1` features.
    Hard { earlier: Vec<Vec<usize>> },
    /// At least `need` listed pairs must share exactly `n − 1` features.
    AtLeast {
        earlier: Vec<Vec<usize>>,
        need: usize,
        /// Number of listed pairs whose later class is after the index.
        open_after: Vec<usize>,
    },
}

impl PairRule {
    pub fn hard(n_classes: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        PairRule::Hard {
            earlier: earlier_lists(n_classes, pairs),
        }
    }

    pub fn at_least(n_classes: usize, pairs: impl IntoIterator<Item = (usize, usize)>, need: usize) -> Self {
        let earlier = earlier_lists(n_classes, pairs);
        let open_after = (0..n_classes)
            .map(|c| earlier[c + 1..].iter().map(Vec::len).sum())
            .collect();
        PairRule::AtLeast {
            earlier,
            need,
            open_after,
        }
    }
}

fn earlier_lists(n_classes: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Vec<Vec<usize>> {
    let mut earlier = vec![Vec::new(); n_classes];
    for (i, j) in pairs {
        earlier[j].push(i);
    }
    for e in &mut earlier {
        e.sort_unstable();
    }
    earlier
}

/// Shared budget and duplicate-row cut pool for a whole solve.
pub(crate) struct SearchState {
    pub nodes: usize,
    pub node_limit: usize,
    /// Forbidden `(class, later class, row)` combinations.
    pub cuts: HashSet<(usize, usize, Vec<usize>)>,
    pub cut_limit: usize,
}

impl SearchState {
    pub fn new(node_limit: usize, cut_limit: usize) -> Self {
        Self {
            nodes: 0,
            node_limit,
            cuts: HashSet::new(),
            cut_limit,
        }
    }

    pub fn tick(&mut self) -> Result<()> {
        self.nodes += 1;
        if self.nodes > self.node_limit {
            return Err(Error::IterationCap {
                what: "search nodes",
                limit: self.node_limit,
            });
        }
        Ok(())
    }
}

/// Best rows for one selection, subject to a lower cutoff on the objective.
pub(crate) struct RowSearch<'a, T> {
    inst: &'a QpInstance<T>,
    selection: &'a [usize],
    rule: &'a PairRule,
    streams: Vec<RowStream<T>>,
    suffix_best: Vec<T>,
    selection_value: T,
    current: Vec<Vec<usize>>,
    cutoff: Option<(T, bool)>,
    pub best: Option<(T, Vec<Vec<usize>>)>,
}

impl<'a, T: Scalar> RowSearch<'a, T> {
    /// `cutoff = (v, strict)` only accepts objectives `≥ v` (`> v` if strict).
    pub fn new(
        inst: &'a QpInstance<T>,
        selection: &'a [usize],
        rule: &'a PairRule,
        cutoff: Option<(T, bool)>,
    ) -> Self {
        let c = inst.n_classes();
        let mut streams: Vec<RowStream<T>> = (0..c).map(|class| RowStream::new(inst, class, selection)).collect();
        let mut suffix_best = vec![T::zero(); c + 1];
        for class in (0..c).rev() {
            let top = streams[class].get(inst, 0).map_or(T::neg_infinity(), |r| r.value);
            suffix_best[class] = suffix_best[class + 1] + top;
        }
        Self {
            inst,
            selection,
            rule,
            streams,
            suffix_best,
            selection_value: inst.selection_value(selection),
            current: vec![Vec::new(); c],
            cutoff,
            best: None,
        }
    }

    /// Seeds the search with a known feasible solution.
    pub fn with_incumbent(mut self, rows: Vec<Vec<usize>>) -> Self {
        let value = self.inst.evaluate(self.selection, &rows);
        self.best = Some((value, rows));
        self
    }

    fn threshold(&self) -> Option<T> {
        match (&self.best, self.cutoff) {
            (Some((v, _)), _) => Some(*v),
            (None, Some((v, _))) => Some(v),
            (None, None) => None,
        }
    }

    fn hopeless(&self, bound: T) -> bool {
        self.threshold().is_some_and(|t| bound + slack(t) < t)
    }

    pub fn run(&mut self, state: &mut SearchState) -> Result<()> {
        self.visit(0, T::zero(), 0, state)
    }

    fn visit(&mut self, class: usize, partial: T, satisfied: usize, state: &mut SearchState) -> Result<()> {
        let c = self.inst.n_classes();
        if class == c {
            return self.complete(partial, state);
        }
        if self.hopeless(partial + self.suffix_best[class] + self.selection_value) {
            return Ok(());
        }
        let n = self.inst.n_per_class;
        let (earlier, need, open_after) = match self.rule {
            PairRule::Hard { earlier } => (&earlier[class], None, 0),
            PairRule::AtLeast {
                earlier,
                need,
                open_after,
            } => (&earlier[class], Some(*need), open_after[class]),
        };
        let constrained = need.is_none() && !earlier.is_empty();
        let fixed: Vec<Row<T>> = if constrained {
            self.constrained_rows(class, earlier)
        } else {
            Vec::new()
        };
        let mut idx = 0;
        loop {
            let row = if constrained {
                match fixed.get(idx) {
                    Some(r) => r.clone(),
                    None => break,
                }
            } else {
                match self.streams[class].get(self.inst, idx) {
                    Some(r) => r.clone(),
                    None => break,
                }
            };
            idx += 1;
            let rest = partial + row.value + self.suffix_best[class + 1] + self.selection_value;
            if self.hopeless(rest) {
                break;
            }
            let mut gained = 0;
            if let Some(need) = need {
                gained = earlier
                    .iter()
                    .filter(|&&a| shared(&self.current[a], &row.features) + 1 == n)
                    .count();
                if satisfied + gained + open_after < need {
                    continue;
                }
            }
            if self.cut_off(class, &row.features, state) {
                continue;
            }
            state.tick()?;
            self.current[class] = row.features;
            self.visit(class + 1, partial + row.value, satisfied + gained, state)?;
        }
        Ok(())
    }

    fn cut_off(&self, class: usize, row: &[usize], state: &SearchState) -> bool {
        if state.cuts.is_empty() {
            return false;
        }
        (0..class).any(|a| self.current[a] == row && state.cuts.contains(&(a, class, row.to_vec())))
    }

    /// Rows sharing `n − 1` features with every earlier partner, best first.
    fn constrained_rows(&self, class: usize, earlier: &[usize]) -> Vec<Row<T>> {
        let n = self.inst.n_per_class;
        let anchor = &self.current[earlier[0]];
        let mut out = Vec::new();
        for drop in 0..anchor.len() {
            for &add in self.selection {
                if anchor.binary_search(&add).is_ok() {
                    continue;
                }
                let mut row: Vec<usize> = anchor.iter().enumerate().filter(|&(i, _)| i != drop).map(|(_, &q)| q).collect();
                let pos = row.partition_point(|&q| q < add);
                row.insert(pos, add);
                if earlier[1..].iter().all(|&a| shared(&self.current[a], &row) + 1 == n) {
                    let value = self.inst.row_value(class, &row);
                    out.push(Row { features: row, value });
                }
            }
        }
        out.sort_by(|a, b| {
            b.value
                .partial_cmp(&a.value)
                .unwrap_or(Ordering::Equal)
                .then_with(|| bin_lex_cmp(&a.features, &b.features))
        });
        out
    }

    fn complete(&mut self, partial: T, state: &mut SearchState) -> Result<()> {
        let mut duplicate = false;
        for a in 0..self.current.len() {
            for b in (a + 1)..self.current.len() {
                if self.current[a] == self.current[b] {
                    duplicate = true;
                    state.cuts.insert((a, b, self.current[b].clone()));
                }
            }
        }
        if duplicate {
            if state.cuts.len() > state.cut_limit {
                return Err(Error::IterationCap {
                    what: "duplicate-row cuts",
                    limit: state.cut_limit,
                });
            }
            return Ok(());
        }
        let value = partial + self.selection_value;
        if let Some((cut, strict)) = self.cutoff {
            if value < cut || (strict && value == cut) {
                return Ok(());
            }
        }
        let better = match &self.best {
            None => true,
            Some((v, rows)) => value > *v || (value == *v && rows_lex_cmp(&self.current, rows) == Ordering::Less),
        };
        if better {
            self.best = Some((value, self.current.clone()));
        }
        Ok(())
    }
}
