//! Explanation graphs: the class orderings of one sample merged into a trie.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::ClassOrder;
use crate::error::{Error, Result};
use crate::head::ModelHead;
use crate::scalar::Scalar;
use crate::transform::predict_logits;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphMode {
    /// Only classes whose first ordered feature matches the predicted class.
    #[default]
    Restricted,
    Full,
}

impl std::str::FromStr for GraphMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "restricted" => Ok(Self::Restricted),
            "full" => Ok(Self::Full),
            other => Err(Error::invalid(format!("unknown graph mode {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphFormat {
    Dot,
    Json,
}

impl std::str::FromStr for GraphFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dot" => Ok(Self::Dot),
            "json" => Ok(Self::Json),
            other => Err(Error::invalid(format!("unknown graph format {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "lowercase")]
pub enum NodeRef {
    Root,
    Feature(usize),
    Class(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureNode {
    pub id: usize,
    /// Position in the head's selection.
    pub feature: usize,
    /// Index among the raw input features.
    pub raw_feature: usize,
    pub activation: f64,
    /// Activation relative to the sample's largest activation.
    pub radius: f64,
    pub parent: NodeRef,
    pub depth: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassNode {
    pub class: usize,
    pub attach: NodeRef,
    /// Number of active features on the path to this class.
    pub depth: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplanationGraph {
    pub feature_nodes: Vec<FeatureNode>,
    pub class_nodes: Vec<ClassNode>,
    pub edges: Vec<(NodeRef, NodeRef)>,
    pub predicted: BTreeSet<usize>,
    pub top_class: usize,
    pub mode: GraphMode,
}

#[derive(Default)]
struct Trie {
    children: BTreeMap<usize, Trie>,
    classes: Vec<usize>,
}

impl ExplanationGraph {
    /// Feature nodes from the root down to `node`.
    pub fn path_to(&self, node: NodeRef) -> Vec<usize> {
        let mut out = Vec::new();
        let mut cur = match node {
            NodeRef::Class(c) => self.class_node(c).map_or(NodeRef::Root, |n| n.attach),
            other => other,
        };
        while let NodeRef::Feature(id) = cur {
            out.push(id);
            cur = self.feature_nodes[id].parent;
        }
        out.reverse();
        out
    }

    pub fn class_node(&self, class: usize) -> Option<&ClassNode> {
        self.class_nodes.iter().find(|n| n.class == class)
    }

    /// Selected-feature indices on the path to a class.
    pub fn class_chain(&self, class: usize) -> Option<Vec<usize>> {
        self.class_node(class)?;
        Some(
            self.path_to(NodeRef::Class(class))
                .into_iter()
                .map(|id| self.feature_nodes[id].feature)
                .collect(),
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// DOT text with classes labelled by index.
    pub fn to_dot(&self) -> String {
        self.to_dot_named(|c| format!("class {c}"))
    }

    /// DOT text. Feature node size follows the radius, predicted classes are
    /// bold and reached through green edges. Classes sharing an attach point
    /// are drawn as one node labelled `"first, + x"`.
    pub fn to_dot_named(&self, name: impl Fn(usize) -> String) -> String {
        let mut highlighted: BTreeSet<NodeRef> = BTreeSet::new();
        for &c in &self.predicted {
            if self.class_node(c).is_some() {
                highlighted.extend(self.path_to(NodeRef::Class(c)).into_iter().map(NodeRef::Feature));
            }
        }
        let mut groups: BTreeMap<NodeRef, Vec<usize>> = BTreeMap::new();
        for n in &self.class_nodes {
            groups.entry(n.attach).or_default().push(n.class);
        }

        let mut s = String::new();
        s.push_str("digraph explanation {\n  rankdir=TB;\n  node [fontname=\"Helvetica\"];\n");
        s.push_str("  root [label=\"\", shape=point];\n");
        for f in &self.feature_nodes {
            let size = 0.3 + 0.9 * f.radius;
            let _ = writeln!(
                s,
                "  f{} [label=\"feature {}\\n{:.3}\", shape=circle, fixedsize=true, width={:.3}, height={:.3}{}];",
                f.id,
                f.raw_feature,
                f.activation,
                size,
                size,
                if highlighted.contains(&NodeRef::Feature(f.id)) { ", style=bold" } else { "" }
            );
        }
        let node_name = |r: NodeRef| match r {
            NodeRef::Root => "root".to_string(),
            NodeRef::Feature(id) => format!("f{id}"),
            NodeRef::Class(c) => format!("c{c}"),
        };
        for (attach, classes) in &groups {
            let mut members = classes.clone();
            // predicted classes lead the label
            members.sort_by_key(|c| (!self.predicted.contains(c), *c));
            let marked = members.iter().any(|c| self.predicted.contains(c));
            let label = if members.len() == 1 {
                name(members[0])
            } else {
                format!("{}, + {}", name(members[0]), members.len() - 1)
            };
            let id = format!("g{}", node_name(*attach));
            let _ = writeln!(
                s,
                "  {id} [label=\"{}\", shape=box{}];",
                label.replace('"', "\\\""),
                if marked { ", style=bold, fontname=\"Helvetica-Bold\"" } else { "" }
            );
            let green = marked && (*attach == NodeRef::Root || highlighted.contains(attach));
            let _ = writeln!(
                s,
                "  {} -> {id}{};",
                node_name(*attach),
                if green { " [color=green, penwidth=2]" } else { "" }
            );
        }
        for (from, to) in &self.edges {
            if let NodeRef::Class(_) = to {
                continue;
            }
            let _ = writeln!(
                s,
                "  {} -> {}{};",
                node_name(*from),
                node_name(*to),
                if highlighted.contains(to) { " [color=green, penwidth=2]" } else { "" }
            );
        }
        s.push_str("}\n");
        s
    }
}

/// Merges the active-feature chains of the included classes into one tree
/// under a virtual root.
///
/// A class's chain is its ordered features with strictly positive activation;
/// the class hangs below the last one, or below the root when none is active.
pub fn build_explanation_graph<T: Scalar>(
    f_star: &[T],
    head: &ModelHead<T>,
    order: &ClassOrder,
    predicted_set: &[usize],
    mode: GraphMode,
) -> Result<ExplanationGraph> {
    if f_star.len() != head.k_features() {
        return Err(Error::DimensionMismatch {
            what: "transformed features".into(),
            expected: head.k_features(),
            found: f_star.len(),
        });
    }
    if order.n_classes() != head.n_classes() {
        return Err(Error::DimensionMismatch {
            what: "class order".into(),
            expected: head.n_classes(),
            found: order.n_classes(),
        });
    }
    let (_, c_hat) = predict_logits(f_star, head);
    let top = order.of(c_hat).first().copied();
    let included = (0..head.n_classes()).filter(|&c| match mode {
        GraphMode::Full => true,
        GraphMode::Restricted => order.of(c).first().copied() == top,
    });

    let mut root = Trie::default();
    for c in included {
        let mut node = &mut root;
        for &q in order.of(c).iter().filter(|&&q| f_star[q] > T::zero()) {
            node = node.children.entry(q).or_default();
        }
        node.classes.push(c);
    }

    let max = f_star.iter().copied().fold(T::zero(), T::max);
    let mut graph = ExplanationGraph {
        feature_nodes: Vec::new(),
        class_nodes: Vec::new(),
        edges: Vec::new(),
        predicted: predicted_set.iter().copied().collect(),
        top_class: c_hat,
        mode,
    };
    let emit = |g: &mut ExplanationGraph, at: NodeRef, depth: usize, node: &Trie| {
        for &c in &node.classes {
            g.class_nodes.push(ClassNode { class: c, attach: at, depth });
            g.edges.push((at, NodeRef::Class(c)));
        }
    };
    // depth-first, children in feature order, so ids do not depend on class order
    let mut stack: Vec<(NodeRef, usize, &Trie)> = vec![(NodeRef::Root, 0, &root)];
    while let Some((at, depth, node)) = stack.pop() {
        emit(&mut graph, at, depth, node);
        let mut pending = Vec::with_capacity(node.children.len());
        for (&q, child) in &node.children {
            let id = graph.feature_nodes.len();
            let activation = f_star[q];
            graph.feature_nodes.push(FeatureNode {
                id,
                feature: q,
                raw_feature: head.selection()[q],
                activation: activation.to_f64_lossy(),
                radius: if max > T::zero() { (activation / max).to_f64_lossy() } else { 0.0 },
                parent: at,
                depth: depth + 1,
            });
            graph.edges.push((at, NodeRef::Feature(id)));
            pending.push((NodeRef::Feature(id), depth + 1, child));
        }
        stack.extend(pending.into_iter().rev());
    }
    graph.class_nodes.sort_by_key(|n| n.class);
    Ok(graph)
}

pub fn export_graph(graph: &ExplanationGraph, format: GraphFormat) -> Result<String> {
    match format {
        GraphFormat::Dot => Ok(graph.to_dot()),
        GraphFormat::Json => graph.to_json(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::{order_class_features, OrderStrategy};

    fn head(rows: Vec<Vec<usize>>, k: usize) -> ModelHead<f64> {
        let n = rows[0].len();
        ModelHead::new((0..k).collect(), k, rows, vec![0.0; k], vec![1.0; k], vec![1.0; k], n).unwrap()
    }

    fn graph(f: &[f64], rows: Vec<Vec<usize>>, predicted: &[usize], mode: GraphMode) -> ExplanationGraph {
        let h = head(rows, f.len());
        let order = order_class_features(f, &h, OrderStrategy::Dynamic, None).unwrap();
        build_explanation_graph(f, &h, &order, predicted, mode).unwrap()
    }

    #[test]
    fn single_class_is_a_chain() {
        let g = graph(&[0.9, 0.5, 0.2], vec![vec![0, 1, 2]], &[0], GraphMode::Full);
        assert_eq!(g.feature_nodes.len(), 3);
        assert_eq!(g.class_chain(0), Some(vec![0, 1, 2]));
        assert_eq!(g.class_node(0).unwrap().depth, 3);
        let radii: Vec<f64> = g.feature_nodes.iter().map(|f| f.radius).collect();
        assert_eq!(radii, vec![1.0, 0.5 / 0.9, 0.2 / 0.9]);
    }

    #[test]
    fn shared_prefix_forks() {
        let f = [0.9, 0.7, 0.5, 0.3];
        let g = graph(&f, vec![vec![0, 1, 2], vec![0, 1, 3]], &[0], GraphMode::Full);
        // root -> 0 -> 1 -> {2, 3}
        assert_eq!(g.feature_nodes.len(), 4);
        assert_eq!(g.class_chain(0), Some(vec![0, 1, 2]));
        assert_eq!(g.class_chain(1), Some(vec![0, 1, 3]));
        let a = g.path_to(NodeRef::Class(0));
        let b = g.path_to(NodeRef::Class(1));
        assert_eq!(a[..2], b[..2]);
        assert_ne!(a[2], b[2]);
    }

    #[test]
    fn inactive_feature_shortens_the_chain() {
        let g = graph(&[0.9, 0.5, 0.0], vec![vec![0, 1, 2]], &[0], GraphMode::Full);
        assert_eq!(g.class_node(0).unwrap().depth, 2);
        assert_eq!(g.feature_nodes.len(), 2);
    }

    #[test]
    fn restricted_mode_keeps_the_top_branch() {
        let f = [0.9, 0.7, 0.5, 0.3, 0.8];
        let rows = vec![vec![0, 1], vec![0, 2], vec![4, 3]];
        let full = graph(&f, rows.clone(), &[0], GraphMode::Full);
        let restricted = graph(&f, rows, &[0], GraphMode::Restricted);
        assert_eq!(full.top_class, 0);
        assert_eq!(full.class_nodes.len(), 3);
        let kept: Vec<usize> = restricted.class_nodes.iter().map(|n| n.class).collect();
        assert_eq!(kept, vec![0, 1]);
    }

    #[test]
    fn class_enumeration_order_does_not_matter() {
        let f = [0.9, 0.7, 0.5, 0.3, 0.8];
        let a = graph(&f, vec![vec![0, 1], vec![0, 2], vec![4, 3]], &[], GraphMode::Full);
        let b = graph(&f, vec![vec![4, 3], vec![0, 2], vec![0, 1]], &[], GraphMode::Full);
        let chains = |g: &ExplanationGraph| -> BTreeSet<Vec<usize>> {
            (0..3).map(|c| g.class_chain(c).unwrap()).collect()
        };
        assert_eq!(a.feature_nodes, b.feature_nodes);
        assert_eq!(chains(&a), chains(&b));
    }

    #[test]
    fn exports() {
        let f = [0.9, 0.7, 0.5, 0.3];
        let g = graph(&f, vec![vec![0, 1, 2], vec![0, 1, 3]], &[0], GraphMode::Full);
        let json = export_graph(&g, GraphFormat::Json).unwrap();
        assert_eq!(ExplanationGraph::from_json(&json).unwrap(), g);
        let dot = export_graph(&g, GraphFormat::Dot).unwrap();
        assert_eq!(dot, export_graph(&g, GraphFormat::Dot).unwrap());
        assert!(dot.contains("color=green") && dot.contains("style=bold"));

        let unmarked = graph(&f, vec![vec![0, 1, 2], vec![0, 1, 3]], &[], GraphMode::Full);
        let dot = unmarked.to_dot();
        assert!(!dot.contains("color=green") && !dot.contains("style=bold"));
    }

    #[test]
    fn grouped_class_labels() {
        // both classes have no active feature and attach at the root
        let g = graph(&[0.0, 0.0, 0.0], vec![vec![0, 1], vec![0, 2]], &[1], GraphMode::Full);
        let dot = g.to_dot_named(|c| ["sparrow", "finch"][c].to_string());
        assert!(dot.contains("label=\"finch, + 1\""), "{dot}");
    }
}
