//! Per-sample feature orderings and the class hierarchy they induce.
//!
//! Every class orders its `n` features; classes whose orderings agree with the
//! predicted class on the first `d` features form the level-`d` set. Feature
//! indices here are positions into the head's selection.

pub mod graph;

use std::cmp::Ordering;
use std::path::Path;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::data::{read_json, write_json};
use crate::error::{Error, Result};
use crate::head::ModelHead;
use crate::scalar::Scalar;

pub use graph::{build_explanation_graph, export_graph, ExplanationGraph, GraphFormat, GraphMode, NodeRef};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderStrategy {
    /// Sort each sample's class features by activation.
    #[default]
    Dynamic,
    /// Use one fixed order per class derived from training data.
    Static,
}

impl std::str::FromStr for OrderStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dynamic" => Ok(Self::Dynamic),
            "static" => Ok(Self::Static),
            other => Err(Error::invalid(format!("unknown ordering {other:?}"))),
        }
    }
}

/// Per class, its assigned features in hierarchy order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassOrder {
    pub per_class: Vec<Vec<usize>>,
    pub strategy: OrderStrategy,
}

impl ClassOrder {
    pub fn n_classes(&self) -> usize {
        self.per_class.len()
    }

    pub fn depth(&self) -> usize {
        self.per_class.first().map_or(0, Vec::len)
    }

    pub fn of(&self, class: usize) -> &[usize] {
        &self.per_class[class]
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

/// `features` sorted by descending activation, ties by ascending index.
pub fn sort_by_activation<T: Scalar>(features: &[usize], f_star: &[T]) -> Vec<usize> {
    let mut out = features.to_vec();
    out.sort_by(|&a, &b| f_star[b].partial_cmp(&f_star[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    out
}

/// Orders every class's features for one sample.
pub fn order_class_features<T: Scalar>(
    f_star: &[T],
    head: &ModelHead<T>,
    strategy: OrderStrategy,
    static_order: Option<&ClassOrder>,
) -> Result<ClassOrder> {
    match strategy {
        OrderStrategy::Dynamic => {
            if f_star.len() != head.k_features() {
                return Err(Error::DimensionMismatch {
                    what: "transformed features".into(),
                    expected: head.k_features(),
                    found: f_star.len(),
                });
            }
            Ok(ClassOrder {
                per_class: head.rows().iter().map(|row| sort_by_activation(row, f_star)).collect(),
                strategy,
            })
        }
        OrderStrategy::Static => {
            let fixed = static_order.ok_or_else(|| Error::invalid("static ordering needs a precomputed order"))?;
            if fixed.n_classes() != head.n_classes() {
                return Err(Error::DimensionMismatch {
                    what: "static order classes".into(),
                    expected: head.n_classes(),
                    found: fixed.n_classes(),
                });
            }
            Ok(ClassOrder {
                per_class: fixed.per_class.clone(),
                strategy,
            })
        }
    }
}

/// Fixed per-class order by mean rank over the class's training samples;
/// lower mean rank first, ties by feature index.
pub fn static_order_from_train<T: Scalar>(
    train_f_star: ArrayView2<'_, T>,
    labels: &[usize],
    head: &ModelHead<T>,
) -> Result<ClassOrder> {
    if labels.len() != train_f_star.nrows() {
        return Err(Error::DimensionMismatch {
            what: "labels".into(),
            expected: train_f_star.nrows(),
            found: labels.len(),
        });
    }
    let c = head.n_classes();
    let n = head.n_per_class();
    // rank sums are integers, so equal means compare exactly
    let mut rank_sums = vec![vec![0usize; n]; c];
    let mut counts = vec![0usize; c];
    for (row, &y) in train_f_star.outer_iter().zip(labels) {
        if y >= c {
            return Err(Error::LabelOutOfRange {
                sample: counts.iter().sum(),
                label: y,
                n_classes: c,
            });
        }
        let f = row.to_vec();
        let feats = head.class_features(y);
        for (rank, feature) in sort_by_activation(feats, &f).into_iter().enumerate() {
            let slot = feats.iter().position(|&g| g == feature).expect("feature of the class");
            rank_sums[y][slot] += rank;
        }
        counts[y] += 1;
    }
    if let Some(empty) = counts.iter().position(|&k| k == 0) {
        return Err(Error::EmptyClass(empty));
    }
    let per_class = (0..c)
        .map(|class| {
            let feats = head.class_features(class);
            let mut slots: Vec<usize> = (0..feats.len()).collect();
            slots.sort_by(|&a, &b| rank_sums[class][a].cmp(&rank_sums[class][b]).then(feats[a].cmp(&feats[b])));
            slots.into_iter().map(|s| feats[s]).collect()
        })
        .collect();
    Ok(ClassOrder {
        per_class,
        strategy: OrderStrategy::Static,
    })
}

/// Length of the common prefix of the orders of `c` and `c_hat`.
pub fn shared_depth(order: &ClassOrder, c: usize, c_hat: usize) -> usize {
    order
        .of(c)
        .iter()
        .zip(order.of(c_hat))
        .take_while(|(a, b)| a == b)
        .count()
}

/// 1 iff `c` and `c_hat` agree on their first `depth` ordered features.
pub fn indicator(order: &ClassOrder, c: usize, c_hat: usize, depth: usize) -> u8 {
    u8::from(shared_depth(order, c, c_hat) >= depth)
}

/// Classes agreeing with `c_hat` on the first `depth` ordered features.
pub fn fixed_level_set(order: &ClassOrder, c_hat: usize, depth: usize) -> Vec<usize> {
    (0..order.n_classes())
        .filter(|&c| shared_depth(order, c, c_hat) >= depth)
        .collect()
}
