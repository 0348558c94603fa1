//! Directed technique-transition graph.
//!
//! Nodes are the technique labels plus a `null` start node. Every node has
//! an outgoing weight to every technique; nothing points back at `null`.
//! Each row is kept on a max-normalised scale so that its largest weight
//! is exactly 1.

use serde::{Deserialize, Serialize};

use crate::classifier::{minmax_normalize, softmax, LabelSet, NULL_LABEL};
use crate::error::{Error, Result};

/// A graph node: the start node or a technique index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Node {
    Null,
    Label(usize),
}

impl Node {
    fn row(self) -> usize {
        match self {
            Node::Null => 0,
            Node::Label(i) => i + 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TechniqueGraph {
    num_labels: usize,
    // row 0 is `null`, row i + 1 is label i
    rows: Vec<Vec<f64>>,
}

/// Whether [`TechniqueGraph::update_weights`] touched the graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpdateOutcome {
    Unchanged,
    Updated,
}

impl TechniqueGraph {
    /// All weights 1.
    pub fn uniform(num_labels: usize) -> Self {
        Self {
            num_labels,
            rows: vec![vec![1.0; num_labels]; num_labels + 1],
        }
    }

    /// Transition counts with add-one smoothing, each row divided by its maximum.
    ///
    /// Every sequence also contributes one `null -> first` transition.
    pub fn init_from_corpus(sequences: &[Vec<usize>], num_labels: usize) -> Result<Self> {
        let mut counts = vec![vec![1.0; num_labels]; num_labels + 1];
        for seq in sequences {
            let mut prev = Node::Null;
            for &label in seq {
                if label >= num_labels {
                    return Err(Error::input(format!("label index {label} outside {num_labels} labels")));
                }
                counts[prev.row()][label] += 1.0;
                prev = Node::Label(label);
            }
        }
        for row in &mut counts {
            normalize_row(row);
        }
        Ok(Self {
            num_labels,
            rows: counts,
        })
    }

    /// [`Self::init_from_corpus`] over technique names.
    pub fn init_from_named(sequences: &[Vec<String>], labels: &LabelSet) -> Result<Self> {
        let indexed = sequences
            .iter()
            .map(|seq| seq.iter().map(|n| labels.require(n)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Self::init_from_corpus(&indexed, labels.len())
    }

    /// Rebuilds a graph from its node list and row-major matrix.
    pub fn from_parts(nodes: &[String], matrix: Vec<Vec<f64>>, labels: &LabelSet) -> Result<Self> {
        let expected: Vec<&str> = std::iter::once(NULL_LABEL)
            .chain(labels.names().iter().map(String::as_str))
            .collect();
        if nodes.len() != expected.len() || nodes.iter().zip(&expected).any(|(a, b)| a != b) {
            return Err(Error::Load {
                field: "graph_nodes".into(),
                message: format!("expected {expected:?}, found {nodes:?}"),
            });
        }
        if matrix.len() != nodes.len() || matrix.iter().any(|r| r.len() != labels.len()) {
            return Err(Error::Load {
                field: "graph_matrix".into(),
                message: format!("expected {} rows of {} weights", nodes.len(), labels.len()),
            });
        }
        if matrix.iter().flatten().any(|w| !(*w > 0.0 && *w <= 1.0)) {
            return Err(Error::Load {
                field: "graph_matrix".into(),
                message: "weights must lie in (0, 1]".into(),
            });
        }
        Ok(Self {
            num_labels: labels.len(),
            rows: matrix,
        })
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    /// Node names in matrix row order: `null` first, then the labels.
    pub fn node_names(labels: &LabelSet) -> Vec<String> {
        std::iter::once(NULL_LABEL.to_string())
            .chain(labels.names().iter().cloned())
            .collect()
    }

    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.rows
    }

    fn check_node(&self, node: Node) -> Result<()> {
        match node {
            Node::Label(i) if i >= self.num_labels => {
                Err(Error::input(format!("node {i} outside {} labels", self.num_labels)))
            }
            _ => Ok(()),
        }
    }

    /// Outgoing weights of `prev`, one per technique.
    pub fn get_weights(&self, prev: Node) -> Result<&[f64]> {
        self.check_node(prev)?;
        Ok(&self.rows[prev.row()])
    }

    /// Multiplicative update of the `prev` row after a misprediction.
    ///
    /// Shrinks the predicted weight by `1 - beta * u`, grows the true one by
    /// `1 + beta * u`, then rescales the row so its maximum is 1.
    pub fn update_weights(
        &mut self,
        prev: Node,
        predicted: usize,
        truth: usize,
        beta: f64,
        u: f64,
    ) -> Result<UpdateOutcome> {
        self.check_node(prev)?;
        if predicted >= self.num_labels || truth >= self.num_labels {
            return Err(Error::input(format!(
                "labels {predicted}/{truth} outside {} labels",
                self.num_labels
            )));
        }
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::config(format!("uncertainty {u} outside [0, 1]")));
        }
        if !(beta >= 0.0) {
            return Err(Error::config(format!("beta must be >= 0, got {beta}")));
        }
        let stride = beta * u;
        if stride >= 1.0 {
            return Err(Error::config(format!("beta * u = {stride} must stay below 1")));
        }
        if predicted == truth || stride == 0.0 {
            return Ok(UpdateOutcome::Unchanged);
        }
        let row = &mut self.rows[prev.row()];
        row[predicted] *= 1.0 - stride;
        row[truth] *= 1.0 + stride;
        normalize_row(row);
        Ok(UpdateOutcome::Updated)
    }
}

fn normalize_row(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    row.iter_mut().for_each(|w| *w /= max);
}

/// `softmax(minmax(logits) + alpha * weights)`.
pub fn fuse(logits: &[f64], weights: &[f64], alpha: f64) -> Vec<f64> {
    let scores: Vec<f64> = minmax_normalize(logits)
        .into_iter()
        .zip(weights)
        .map(|(m, w)| m + alpha * w)
        .collect();
    softmax(&scores)
}
