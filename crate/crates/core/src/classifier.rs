//! Stage two: segment classification.
//!
//! Segment features are mean-pooled frame vectors. The classifier emits raw
//! logits; training and decoding go through [`crate::graph::fuse`], so the
//! backward pass here differentiates cross entropy through
//! `softmax(minmax(logits) + alpha * w)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event_signal::FrameFeatureSeries;
use crate::nn::Mlp;

/// Name reserved for the graph's start node.
pub const NULL_LABEL: &str = "null";

pub const DEFAULT_TECHNIQUES: [&str; 8] = [
    "Serve", "Topspin", "Short", "Block", "Push", "Flick", "Smash", "Others",
];

/// Ordered technique names; a label is its index in this list.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelSet {
    names: Vec<String>,
}

impl LabelSet {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() < 2 {
            return Err(Error::config(format!("label set needs at least 2 labels, got {}", names.len())));
        }
        for (i, n) in names.iter().enumerate() {
            if n.is_empty() || n == NULL_LABEL {
                return Err(Error::config(format!("label name {n:?} is reserved or empty")));
            }
            if names[..i].contains(n) {
                return Err(Error::config(format!("duplicate label {n:?}")));
            }
        }
        Ok(Self { names })
    }

    pub fn table_tennis() -> Self {
        Self::new(DEFAULT_TECHNIQUES).expect("default labels are valid")
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn require(&self, name: &str) -> Result<usize> {
        self.index_of(name)
            .ok_or_else(|| Error::input(format!("label {name:?} is not in the label set")))
    }
}

impl TryFrom<Vec<String>> for LabelSet {
    type Error = Error;

    fn try_from(names: Vec<String>) -> Result<Self> {
        Self::new(names)
    }
}

impl From<LabelSet> for Vec<String> {
    fn from(labels: LabelSet) -> Self {
        labels.names
    }
}

/// Mean of the frame vectors in `[start, end)`.
pub fn aggregate_features(series: &FrameFeatureSeries, start: usize, end: usize) -> Result<Vec<f64>> {
    if start >= end {
        return Err(Error::input(format!("empty segment [{start}, {end})")));
    }
    if end > series.len() {
        return Err(Error::input(format!(
            "segment [{start}, {end}) exceeds series of length {}",
            series.len()
        )));
    }
    let mut acc = vec![0.0; series.dim()];
    for t in start..end {
        for (a, v) in acc.iter_mut().zip(series.frame(t)) {
            *a += v;
        }
    }
    let n = (end - start) as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Index of the first maximum.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = i;
        }
    }
    best
}

/// Rescales to `[0, 1]`; a constant vector maps to all `0.5`.
pub fn minmax_normalize(logits: &[f64]) -> Vec<f64> {
    if logits.is_empty() {
        return Vec::new();
    }
    let lo = logits[argmin(logits)];
    let hi = logits[argmax(logits)];
    let range = hi - lo;
    if range <= 0.0 {
        return vec![0.5; logits.len()];
    }
    logits.iter().map(|&z| (z - lo) / range).collect()
}

/// Natural-log Shannon entropy.
pub fn entropy(distribution: &[f64]) -> f64 {
    -distribution
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

/// `1 - H(softmax(logits)) / ln C`, clamped to `[0, 1]`.
pub fn uncertainty(logits: &[f64]) -> f64 {
    uncertainty_of_distribution(&softmax(logits))
}

pub fn uncertainty_of_distribution(distribution: &[f64]) -> f64 {
    if distribution.len() < 2 {
        return 1.0;
    }
    let max_entropy = (distribution.len() as f64).ln();
    (1.0 - entropy(distribution) / max_entropy).clamp(0.0, 1.0)
}

/// `-ln p[target]` with the probability floored at `1e-12`.
pub fn cross_entropy_loss(predicted: &[f64], target: usize) -> f64 {
    -predicted[target].max(1e-12).ln()
}

/// Gradient of `-ln softmax(minmax(z) + c)[target]` with respect to `z`, given
/// the fused distribution. The min and max indices are held fixed.
pub fn fused_logit_gradient(logits: &[f64], fused: &[f64], target: usize) -> Vec<f64> {
    let n = logits.len();
    let lo = argmin(logits);
    let hi = argmax(logits);
    let range = logits[hi] - logits[lo];
    if range <= 0.0 {
        return vec![0.0; n];
    }
    let g: Vec<f64> = fused
        .iter()
        .enumerate()
        .map(|(i, &p)| if i == target { p - 1.0 } else { p })
        .collect();
    let normalized = minmax_normalize(logits);
    let sum_g: f64 = g.iter().sum();
    let weighted: f64 = g.iter().zip(&normalized).map(|(a, m)| a * m).sum();
    let mut grad: Vec<f64> = g.iter().map(|v| v / range).collect();
    grad[hi] -= weighted / range;
    grad[lo] += (weighted - sum_g) / range;
    grad
}

/// Feed-forward technique classifier producing `C` raw logits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub net: Mlp,
}

impl ClassifierModel {
    pub fn init(dim: usize, hidden: usize, num_labels: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            net: Mlp::init(dim, hidden, num_labels, &mut rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn num_labels(&self) -> usize {
        self.net.output_dim()
    }

    pub fn logits(&self, feature: &[f64]) -> Vec<f64> {
        self.net.forward(feature).output
    }

    /// Gradient of the cross entropy of `fused` (produced by `fuse` for this
    /// feature) with respect to every classifier weight.
    pub fn gradient(&self, feature: &[f64], fused: &[f64], target: usize) -> Result<Mlp> {
        if target >= self.num_labels() || fused.len() != self.num_labels() {
            return Err(Error::input(format!(
                "target {target} / distribution of {} for {} labels",
                fused.len(),
                self.num_labels()
            )));
        }
        let cache = self.net.forward(feature);
        let d_logits = fused_logit_gradient(&cache.output, fused, target);
        let mut grad = self.net.zeros_like();
        self.net.backward(feature, &cache, &d_logits, &mut grad);
        Ok(grad)
    }

    /// One SGD step; returns the gradient that was applied.
    pub fn backward(&mut self, feature: &[f64], fused: &[f64], target: usize, learning_rate: f64) -> Result<Mlp> {
        let grad = self.gradient(feature, fused, target)?;
        if !grad.is_finite() {
            return Err(Error::Training {
                epoch: 0,
                message: "classifier gradient is not finite".into(),
            });
        }
        if learning_rate != 0.0 {
            self.net.axpy(-learning_rate, &grad);
        }
        Ok(grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn label_set_validation() {
        assert!(LabelSet::new(["A"]).is_err());
        assert!(LabelSet::new(["A", "A"]).is_err());
        assert!(LabelSet::new(["A", "null"]).is_err());
        let labels = LabelSet::table_tennis();
        assert_eq!(labels.len(), 8);
        assert_eq!(labels.index_of("Push"), Some(4));
        assert!(labels.require("Lob").is_err());
    }

    #[test]
    fn aggregation_examples() {
        let constant = FrameFeatureSeries::new("r", 25.0, vec![vec![3.5, 3.5]; 6]).unwrap();
        assert_eq!(aggregate_features(&constant, 1, 5).unwrap(), vec![3.5, 3.5]);
        let two = FrameFeatureSeries::new("r", 25.0, vec![vec![1.0, 0.0], vec![3.0, 0.0]]).unwrap();
        assert_eq!(aggregate_features(&two, 0, 2).unwrap(), vec![2.0, 0.0]);
        assert_eq!(aggregate_features(&two, 1, 2).unwrap(), vec![3.0, 0.0]);
        assert!(aggregate_features(&two, 1, 1).is_err());
        assert!(aggregate_features(&two, 0, 3).is_err());
    }

    #[test]
    fn minmax_examples() {
        assert_eq!(minmax_normalize(&[2.0, 4.0, 6.0]), vec![0.0, 0.5, 1.0]);
        assert_eq!(minmax_normalize(&[3.0, 3.0, 3.0]), vec![0.5, 0.5, 0.5]);
        assert_eq!(minmax_normalize(&[-1.0, 1.0]), vec![0.0, 1.0]);
    }

    #[test]
    fn uncertainty_examples() {
        assert!(close(uncertainty(&[0.7; 8]), 0.0, 1e-12));
        let mut sharp = [0.0; 8];
        sharp[3] = 40.0;
        assert!(close(uncertainty(&sharp), 1.0, 1e-6));
        let half = [0.5, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert!(close(uncertainty_of_distribution(&half), 2.0 / 3.0, 1e-6));
    }

    #[test]
    fn cross_entropy_examples() {
        assert_eq!(cross_entropy_loss(&[0.0, 1.0], 1), 0.0);
        assert!(close(cross_entropy_loss(&[0.5, 0.5], 0), 0.69315, 1e-5));
        assert!(close(cross_entropy_loss(&[0.125; 8], 5), 2.07944, 1e-5));
        assert!(cross_entropy_loss(&[1.0, 0.0], 1).is_finite());
    }

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }

    #[test]
    fn zero_learning_rate_leaves_model_unchanged() {
        let mut model = ClassifierModel::init(3, 5, 4, 9);
        let before = model.clone();
        let x = [0.2, -0.4, 0.9];
        let fused = softmax(&minmax_normalize(&model.logits(&x)));
        model.backward(&x, &fused, 2, 0.0).unwrap();
        assert_eq!(model, before);
    }

    #[test]
    fn degenerate_minmax_has_zero_gradient() {
        let g = fused_logit_gradient(&[1.0, 1.0, 1.0], &[1.0 / 3.0; 3], 0);
        assert_eq!(g, vec![0.0; 3]);
    }

    #[test]
    fn bad_target_is_rejected() {
        let model = ClassifierModel::init(2, 3, 2, 0);
        assert!(model.gradient(&[0.0, 0.0], &[0.5, 0.5], 2).is_err());
    }
}
