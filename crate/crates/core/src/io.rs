//! Line-delimited JSON records exchanged between subcommands.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::classifier::LabelSet;
use crate::error::{Error, Result};
use crate::event_signal::FrameFeatureSeries;
use crate::pipeline::{AnnotatedRally, StrokeSequence};
use crate::tactics::Side;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub rally_id: String,
    pub fps: f64,
    pub frames: Vec<Vec<f64>>,
}

impl FeatureRecord {
    pub fn from_series(series: &FrameFeatureSeries) -> Self {
        Self {
            rally_id: series.rally_id.clone(),
            fps: series.fps,
            frames: series.to_rows(),
        }
    }

    pub fn into_series(self) -> Result<FrameFeatureSeries> {
        FrameFeatureSeries::new(self.rally_id, self.fps, self.frames)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedStroke {
    pub frame: usize,
    pub technique: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub rally_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_frames: Option<usize>,
    pub strokes: Vec<AnnotatedStroke>,
}

impl AnnotationRecord {
    /// `(frame, label index)` pairs, validated against `labels`.
    pub fn indexed(&self, labels: &LabelSet) -> Result<Vec<(usize, usize)>> {
        self.strokes
            .iter()
            .map(|s| {
                labels
                    .require(&s.technique)
                    .map(|l| (s.frame, l))
                    .map_err(|e| Error::input(format!("rally {}: {e}", self.rally_id)))
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub rally_id: String,
    pub server_side: Side,
    pub winner_side: Side,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictedStroke {
    pub technique: String,
    pub peak_frame: usize,
    pub start: usize,
    pub end: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub rally_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_frames: Option<usize>,
    pub strokes: Vec<PredictedStroke>,
}

impl PredictionRecord {
    pub fn from_sequence(seq: &StrokeSequence, labels: &LabelSet) -> Self {
        Self {
            rally_id: seq.rally_id.clone(),
            num_frames: Some(seq.num_frames),
            strokes: seq
                .strokes
                .iter()
                .map(|s| PredictedStroke {
                    technique: labels.name(s.label).to_string(),
                    peak_frame: s.peak_frame,
                    start: s.start,
                    end: s.end,
                })
                .collect(),
        }
    }
}

/// Any record carrying an ordered technique list; reads annotations and predictions alike.
#[derive(Clone, Debug, Deserialize)]
pub struct TechniqueRecord {
    pub rally_id: String,
    pub strokes: Vec<TechniqueOnly>,
}

#[derive(Clone, Debug, Deserialize)]
pub struct TechniqueOnly {
    pub technique: String,
}

/// Reads one JSON value per non-blank line; errors carry the 1-based line number.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| Error::io(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::io(path, e.into()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

/// Joins feature and annotation records on `rally_id`, keeping feature order.
pub fn join_corpus(
    features: Vec<FeatureRecord>,
    annotations: &[AnnotationRecord],
    labels: &LabelSet,
) -> Result<Vec<AnnotatedRally>> {
    let by_id: std::collections::HashMap<&str, &AnnotationRecord> =
        annotations.iter().map(|a| (a.rally_id.as_str(), a)).collect();
    features
        .into_iter()
        .map(|f| {
            let ann = by_id
                .get(f.rally_id.as_str())
                .ok_or_else(|| Error::input(format!("rally {} has no annotation record", f.rally_id)))?;
            let strokes = ann.indexed(labels)?;
            Ok(AnnotatedRally {
                series: f.into_series()?,
                strokes,
            })
        })
        .collect()
}
