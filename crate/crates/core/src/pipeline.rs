//! Two-stage training and inference, plus model persistence.
//!
//! Training is stagewise: the seg head is fitted to cosine targets, then the
//! classifier and graph are trained together on segments cut around the
//! annotated stroke frames. Within a rally segments are visited in time
//! order and the preceding ground-truth label selects the graph row. At
//! inference the preceding *predicted* label is used instead and the graph
//! is frozen.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{aggregate_features, argmax, cross_entropy_loss, uncertainty, ClassifierModel, LabelSet};
use crate::error::{Error, Result};
use crate::event_signal::{
    extract_events, form_segments, segment_bounds, train_seg_head, FrameFeatureSeries, SegHead, SegSample,
    SegTrainConfig, DEFAULT_MAX_SEGMENT_LEN, DEFAULT_SIGMA, DEFAULT_THRESHOLD,
};
use crate::graph::{fuse, Node, TechniqueGraph, UpdateOutcome};
use crate::nn::Mlp;

pub const FORMAT_VERSION: u64 = 1;

/// Stride of graph updates after a misprediction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrideMode {
    /// `beta * U`, with `U` the classifier's certainty.
    Adaptive,
    /// `beta`, i.e. `U` pinned to 1.
    Fixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub sigma: f64,
    pub threshold: f64,
    pub alpha: f64,
    pub beta: f64,
    pub stride: StrideMode,
    pub max_segment_len: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seg_epochs: usize,
    pub seg_learning_rate: f64,
    pub seg_batch_size: usize,
    pub seg_hidden: usize,
    pub cls_hidden: usize,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            sigma: DEFAULT_SIGMA,
            threshold: DEFAULT_THRESHOLD,
            alpha: 1.0,
            beta: 0.1,
            stride: StrideMode::Adaptive,
            max_segment_len: DEFAULT_MAX_SEGMENT_LEN,
            epochs: 20,
            learning_rate: 0.01,
            seg_epochs: 5,
            seg_learning_rate: 0.5,
            seg_batch_size: 32,
            seg_hidden: 64,
            cls_hidden: 128,
            seed: 42,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::config(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::config(format!("threshold must lie in [0, 1], got {}", self.threshold)));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::config(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.beta >= 0.0 && self.beta < 1.0) {
            return Err(Error::config(format!("beta must lie in [0, 1), got {}", self.beta)));
        }
        if self.max_segment_len == 0 {
            return Err(Error::config("max_segment_len must be >= 1"));
        }
        if !(self.learning_rate >= 0.0 && self.seg_learning_rate >= 0.0) {
            return Err(Error::config("learning rates must be >= 0"));
        }
        if self.seg_batch_size == 0 || self.seg_hidden == 0 || self.cls_hidden == 0 {
            return Err(Error::config("batch size and hidden widths must be >= 1"));
        }
        Ok(())
    }

    pub fn seg_config(&self) -> SegTrainConfig {
        SegTrainConfig {
            hidden: self.seg_hidden,
            epochs: self.seg_epochs,
            learning_rate: self.seg_learning_rate,
            batch_size: self.seg_batch_size,
            sigma: self.sigma,
            seed: self.seed,
        }
    }
}

/// A rally with ground-truth strokes `(frame, label index)` in time order.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnotatedRally {
    pub series: FrameFeatureSeries,
    pub strokes: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineModel {
    pub labels: LabelSet,
    pub hyperparams: Hyperparams,
    pub seg_head: SegHead,
    pub classifier: ClassifierModel,
    pub graph: TechniqueGraph,
}

/// Per-epoch statistics of the classifier stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierEpoch {
    pub epoch: usize,
    pub mean_ce: f64,
    /// Fraction of segments whose fused argmax matched the label.
    pub accuracy: f64,
    pub graph_updates: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub seg_bce: Vec<f64>,
    pub classifier: Vec<ClassifierEpoch>,
}

impl TrainingLog {
    /// One row per epoch; empty cells where a stage ran fewer epochs.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,seg_bce,cls_ce,cls_accuracy,graph_updates\n");
        let rows = self.seg_bce.len().max(self.classifier.len());
        for e in 0..rows {
            let seg = self.seg_bce.get(e).map(|v| format!("{v:.6}")).unwrap_or_default();
            let (ce, acc, upd) = self
                .classifier
                .get(e)
                .map(|c| (format!("{:.6}", c.mean_ce), format!("{:.6}", c.accuracy), c.graph_updates.to_string()))
                .unwrap_or_default();
            out.push_str(&format!("{},{seg},{ce},{acc},{upd}\n", e + 1));
        }
        out
    }
}

fn check_corpus(corpus: &[AnnotatedRally], labels: &LabelSet) -> Result<usize> {
    let first = corpus.first().ok_or_else(|| Error::input("training corpus is empty"))?;
    let dim = first.series.dim();
    for rally in corpus {
        let id = &rally.series.rally_id;
        if rally.series.dim() != dim {
            return Err(Error::input(format!("rally {id}: feature dimension {} differs from {dim}", rally.series.dim())));
        }
        if rally.strokes.is_empty() {
            return Err(Error::input(format!("rally {id}: no annotated strokes")));
        }
        for (i, &(frame, label)) in rally.strokes.iter().enumerate() {
            if label >= labels.len() {
                return Err(Error::input(format!("rally {id}: label index {label} outside the label set")));
            }
            if frame >= rally.series.len() {
                return Err(Error::input(format!("rally {id}: stroke frame {frame} beyond {} frames", rally.series.len())));
            }
            if i > 0 && frame <= rally.strokes[i - 1].0 {
                return Err(Error::input(format!("rally {id}: stroke frames must strictly increase")));
            }
        }
    }
    Ok(dim)
}

/// Trains the seg head on the annotated stroke frames.
pub fn train_seg_stage(corpus: &[AnnotatedRally], hyperparams: &Hyperparams) -> Result<(SegHead, Vec<f64>)> {
    hyperparams.validate()?;
    let frames: Vec<Vec<usize>> = corpus
        .iter()
        .map(|r| r.strokes.iter().map(|s| s.0).collect())
        .collect();
    let samples: Vec<SegSample<'_>> = corpus
        .iter()
        .zip(&frames)
        .map(|(r, f)| SegSample {
            series: &r.series,
            stroke_frames: f,
        })
        .collect();
    train_seg_head(&samples, &hyperparams.seg_config())
}

/// Trains both stages.
pub fn train(corpus: &[AnnotatedRally], labels: &LabelSet, hyperparams: &Hyperparams) -> Result<(PipelineModel, TrainingLog)> {
    hyperparams.validate()?;
    check_corpus(corpus, labels)?;
    let (seg_head, seg_bce) = train_seg_stage(corpus, hyperparams)?;
    let (classifier, graph, cls_log) = train_classifier_stage(corpus, labels, hyperparams)?;
    let model = PipelineModel {
        labels: labels.clone(),
        hyperparams: hyperparams.clone(),
        seg_head,
        classifier,
        graph,
    };
    Ok((
        model,
        TrainingLog {
            seg_bce,
            classifier: cls_log,
        },
    ))
}

/// Segment features of every annotated stroke, cut with the inference geometry.
pub fn annotated_segment_features(rally: &AnnotatedRally, max_len: usize) -> Result<Vec<Vec<f64>>> {
    let peaks: Vec<usize> = rally.strokes.iter().map(|s| s.0).collect();
    segment_bounds(&peaks, rally.series.len(), max_len)?
        .into_iter()
        .map(|(start, end)| aggregate_features(&rally.series, start, end))
        .collect()
}

/// Joint classifier and graph training with teacher forcing.
pub fn train_classifier_stage(
    corpus: &[AnnotatedRally],
    labels: &LabelSet,
    hyperparams: &Hyperparams,
) -> Result<(ClassifierModel, TechniqueGraph, Vec<ClassifierEpoch>)> {
    hyperparams.validate()?;
    let dim = check_corpus(corpus, labels)?;
    let sequences: Vec<Vec<usize>> = corpus
        .iter()
        .map(|r| r.strokes.iter().map(|s| s.1).collect())
        .collect();
    let mut graph = TechniqueGraph::init_from_corpus(&sequences, labels.len())?;
    let mut classifier = ClassifierModel::init(dim, hyperparams.cls_hidden, labels.len(), hyperparams.seed.wrapping_add(2));
    let features = corpus
        .iter()
        .map(|r| annotated_segment_features(r, hyperparams.max_segment_len))
        .collect::<Result<Vec<_>>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(hyperparams.seed.wrapping_add(3));
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut log = Vec::with_capacity(hyperparams.epochs);
    let total: usize = sequences.iter().map(Vec::len).sum();
    for epoch in 0..hyperparams.epochs {
        order.shuffle(&mut rng);
        let mut ce_sum = 0.0;
        let mut correct = 0;
        let mut updates = 0;
        for &r in &order {
            let mut prev = Node::Null;
            for (feature, &truth) in features[r].iter().zip(&sequences[r]) {
                let logits = classifier.logits(feature);
                let fused = fuse(&logits, graph.get_weights(prev)?, hyperparams.alpha);
                let predicted = argmax(&fused);
                ce_sum += cross_entropy_loss(&fused, truth);
                classifier
                    .backward(feature, &fused, truth, hyperparams.learning_rate)
                    .map_err(|e| match e {
                        Error::Training { message, .. } => Error::Training { epoch, message },
                        other => other,
                    })?;
                if predicted == truth {
                    correct += 1;
                } else {
                    let u = match hyperparams.stride {
                        StrideMode::Adaptive => uncertainty(&logits),
                        StrideMode::Fixed => 1.0,
                    };
                    if graph.update_weights(prev, predicted, truth, hyperparams.beta, u)? == UpdateOutcome::Updated {
                        updates += 1;
                    }
                }
                prev = Node::Label(truth);
            }
        }
        let mean_ce = ce_sum / total as f64;
        if !mean_ce.is_finite() || !classifier.net.is_finite() {
            return Err(Error::Training {
                epoch,
                message: "classifier diverged".into(),
            });
        }
        log.push(ClassifierEpoch {
            epoch: epoch + 1,
            mean_ce,
            accuracy: correct as f64 / total as f64,
            graph_updates: updates,
        });
    }
    Ok((classifier, graph, log))
}

/// One recognised stroke.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecognizedStroke {
    pub label: usize,
    pub peak_frame: usize,
    pub start: usize,
    pub end: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StrokeSequence {
    pub rally_id: String,
    pub num_frames: usize,
    pub strokes: Vec<RecognizedStroke>,
}

impl PipelineModel {
    pub fn input_dim(&self) -> usize {
        self.seg_head.input_dim()
    }

    /// Stage two alone: label each segment, chaining the previous prediction.
    pub fn decode(&self, features: &[Vec<f64>]) -> Result<Vec<usize>> {
        let mut prev = Node::Null;
        let mut out = Vec::with_capacity(features.len());
        for feature in features {
            let logits = self.classifier.logits(feature);
            let fused = fuse(&logits, self.graph.get_weights(prev)?, self.hyperparams.alpha);
            let label = argmax(&fused);
            out.push(label);
            prev = Node::Label(label);
        }
        Ok(out)
    }

    /// Full two-stage recognition of one rally.
    pub fn infer(&self, series: &FrameFeatureSeries) -> Result<StrokeSequence> {
        if series.dim() != self.input_dim() {
            return Err(Error::input(format!(
                "rally {}: feature dimension {} but the model expects {}",
                series.rally_id,
                series.dim(),
                self.input_dim()
            )));
        }
        let hp = &self.hyperparams;
        let probs = self.seg_head.predict(series);
        let events = extract_events(&probs, hp.threshold, hp.sigma);
        let segments = form_segments(&events, series.len(), hp.max_segment_len)?;
        let features = segments
            .segments
            .iter()
            .map(|s| aggregate_features(series, s.start, s.end))
            .collect::<Result<Vec<_>>>()?;
        let labels = self.decode(&features)?;
        let strokes = segments
            .segments
            .iter()
            .zip(labels)
            .map(|(s, label)| RecognizedStroke {
                label,
                peak_frame: events[s.event_index].peak_frame,
                start: s.start,
                end: s.end,
            })
            .collect();
        Ok(StrokeSequence {
            rally_id: series.rally_id.clone(),
            num_frames: series.len(),
            strokes,
        })
    }
}

/// On-disk model document.
#[derive(Serialize, Deserialize)]
struct ModelDocument {
    format_version: u64,
    label_set: Vec<String>,
    hyperparams: Hyperparams,
    seg_head_weights: Mlp,
    classifier_weights: Mlp,
    graph_nodes: Vec<String>,
    graph_matrix: Vec<Vec<f64>>,
}

fn load_error(field: &str, message: impl Into<String>) -> Error {
    Error::Load {
        field: field.into(),
        message: message.into(),
    }
}

impl PipelineModel {
    pub fn to_json(&self) -> String {
        let doc = ModelDocument {
            format_version: FORMAT_VERSION,
            label_set: self.labels.names().to_vec(),
            hyperparams: self.hyperparams.clone(),
            seg_head_weights: self.seg_head.net.clone(),
            classifier_weights: self.classifier.net.clone(),
            graph_nodes: TechniqueGraph::node_names(&self.labels),
            graph_matrix: self.graph.matrix().to_vec(),
        };
        let mut text = serde_json::to_string_pretty(&doc).expect("model document serialises");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| load_error("<document>", e.to_string()))?;
        let object = value
            .as_object()
            .ok_or_else(|| load_error("<document>", "expected a JSON object"))?;
        let version = object
            .get("format_version")
            .ok_or_else(|| load_error("format_version", "missing"))?
            .as_u64()
            .ok_or_else(|| load_error("format_version", "expected an unsigned integer"))?;
        if version > FORMAT_VERSION || version == 0 {
            return Err(Error::UnsupportedVersion {
                found: version,
                supported: FORMAT_VERSION,
            });
        }
        for field in [
            "label_set",
            "hyperparams",
            "seg_head_weights",
            "classifier_weights",
            "graph_nodes",
            "graph_matrix",
        ] {
            if !object.contains_key(field) {
                return Err(load_error(field, "missing"));
            }
        }
        let field = |name: &str| object[name].clone();
        let labels: LabelSet =
            serde_json::from_value(field("label_set")).map_err(|e| load_error("label_set", e.to_string()))?;
        let hyperparams: Hyperparams =
            serde_json::from_value(field("hyperparams")).map_err(|e| load_error("hyperparams", e.to_string()))?;
        hyperparams
            .validate()
            .map_err(|e| load_error("hyperparams", e.to_string()))?;
        let seg: Mlp = serde_json::from_value(field("seg_head_weights"))
            .map_err(|e| load_error("seg_head_weights", e.to_string()))?;
        seg.check_shape().map_err(|m| load_error("seg_head_weights", m))?;
        if seg.output_dim() != 1 {
            return Err(load_error("seg_head_weights", "seg head must have a single output"));
        }
        let cls: Mlp = serde_json::from_value(field("classifier_weights"))
            .map_err(|e| load_error("classifier_weights", e.to_string()))?;
        cls.check_shape().map_err(|m| load_error("classifier_weights", m))?;
        if cls.output_dim() != labels.len() {
            return Err(load_error(
                "classifier_weights",
                format!("{} outputs for {} labels", cls.output_dim(), labels.len()),
            ));
        }
        if cls.input_dim() != seg.input_dim() {
            return Err(load_error("classifier_weights", "input dimension differs from the seg head"));
        }
        let nodes: Vec<String> =
            serde_json::from_value(field("graph_nodes")).map_err(|e| load_error("graph_nodes", e.to_string()))?;
        let matrix: Vec<Vec<f64>> =
            serde_json::from_value(field("graph_matrix")).map_err(|e| load_error("graph_matrix", e.to_string()))?;
        let graph = TechniqueGraph::from_parts(&nodes, matrix, &labels)?;
        Ok(Self {
            labels,
            hyperparams,
            seg_head: SegHead { net: seg },
            classifier: ClassifierModel { net: cls },
            graph,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
