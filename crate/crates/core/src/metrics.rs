//! Temporal action segmentation metrics over frame labelings.
//!
//! A labeling assigns each frame a technique or background (`None`).
//! Frame accuracy counts background frames; edit score and segmental F1
//! only look at the runs of non-background labels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event_signal::segment_bounds;

/// IoU thresholds reported by [`EvalReport`].
pub const F1_THRESHOLDS: [f64; 3] = [0.10, 0.25, 0.50];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrameLabeling(pub Vec<Option<usize>>);

/// A maximal run of one label, `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LabeledRun {
    pub label: usize,
    pub start: usize,
    pub end: usize,
}

impl FrameLabeling {
    pub fn background(len: usize) -> Self {
        Self(vec![None; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Paints `[start, end)` with `label`; the interval is clipped to the labeling.
    pub fn paint(&mut self, start: usize, end: usize, label: usize) {
        let end = end.min(self.0.len());
        for slot in &mut self.0[start.min(end)..end] {
            *slot = Some(label);
        }
    }

    pub fn runs(&self) -> Vec<LabeledRun> {
        let mut runs: Vec<LabeledRun> = Vec::new();
        for (t, label) in self.0.iter().enumerate() {
            match (label, runs.last_mut()) {
                (Some(l), Some(run)) if run.label == *l && run.end == t => run.end = t + 1,
                (Some(l), _) => runs.push(LabeledRun {
                    label: *l,
                    start: t,
                    end: t + 1,
                }),
                (None, _) => {}
            }
        }
        runs
    }
}

/// Frame labels from `(frame, label)` stroke annotations, using the same
/// window geometry as segment formation.
pub fn annotations_to_frame_labels(strokes: &[(usize, usize)], len: usize, max_len: usize) -> Result<FrameLabeling> {
    if strokes.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::input("stroke annotations must be sorted by strictly increasing frame"));
    }
    let peaks: Vec<usize> = strokes.iter().map(|s| s.0).collect();
    let mut labeling = FrameLabeling::background(len);
    for ((start, end), &(_, label)) in segment_bounds(&peaks, len, max_len)?.into_iter().zip(strokes) {
        labeling.paint(start, end, label);
    }
    Ok(labeling)
}

fn check_lengths(pred: &FrameLabeling, gt: &FrameLabeling) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::input(format!(
            "labelings differ in length ({} vs {})",
            pred.len(),
            gt.len()
        )));
    }
    Ok(())
}

/// Percentage of frames with identical labels.
pub fn frame_accuracy(pred: &FrameLabeling, gt: &FrameLabeling) -> Result<f64> {
    check_lengths(pred, gt)?;
    if gt.is_empty() {
        return Ok(100.0);
    }
    let hits = pred.0.iter().zip(&gt.0).filter(|(a, b)| a == b).count();
    Ok(100.0 * hits as f64 / gt.len() as f64)
}

pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Edit distance between collapsed label sequences and the longer length.
pub fn edit_counts(pred: &FrameLabeling, gt: &FrameLabeling) -> (usize, usize) {
    let p: Vec<usize> = pred.runs().iter().map(|r| r.label).collect();
    let g: Vec<usize> = gt.runs().iter().map(|r| r.label).collect();
    (levenshtein(&p, &g), p.len().max(g.len()))
}

/// `100 * (1 - lev / max_len)` over collapsed segment labels; 100 when both are empty.
pub fn edit_score(pred: &FrameLabeling, gt: &FrameLabeling) -> Result<f64> {
    check_lengths(pred, gt)?;
    let (dist, longest) = edit_counts(pred, gt);
    if longest == 0 {
        return Ok(100.0);
    }
    Ok(100.0 * (1.0 - dist as f64 / longest as f64))
}

fn iou(a: &LabeledRun, b: &LabeledRun) -> f64 {
    let inter = a.end.min(b.end).saturating_sub(a.start.max(b.start));
    let union = a.end.max(b.end) - a.start.min(b.start);
    if inter == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// True positives, false positives and false negatives of the greedy matching.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl MatchCounts {
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            100.0
        } else {
            100.0 * (2 * self.tp) as f64 / denom as f64
        }
    }

    fn add(&mut self, other: MatchCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

/// Each predicted run, in order, takes the untaken same-label ground-truth
/// run of highest IoU (earliest on ties); it is a hit when that IoU reaches
/// `threshold`.
pub fn segment_match_counts(pred: &FrameLabeling, gt: &FrameLabeling, threshold: f64) -> Result<MatchCounts> {
    check_lengths(pred, gt)?;
    let p_runs = pred.runs();
    let g_runs = gt.runs();
    let mut taken = vec![false; g_runs.len()];
    let mut counts = MatchCounts::default();
    for p in &p_runs {
        let best = g_runs
            .iter()
            .enumerate()
            .filter(|(j, g)| !taken[*j] && g.label == p.label)
            .map(|(j, g)| (j, iou(p, g)))
            .fold(None::<(usize, f64)>, |acc, (j, v)| match acc {
                Some((_, bv)) if bv >= v => acc,
                _ => Some((j, v)),
            });
        match best {
            Some((j, v)) if v >= threshold && v > 0.0 => {
                taken[j] = true;
                counts.tp += 1;
            }
            _ => counts.fp += 1,
        }
    }
    counts.fn_ = taken.iter().filter(|t| !**t).count();
    Ok(counts)
}

/// Segmental F1 at an IoU threshold, in percent.
pub fn segmental_f1(pred: &FrameLabeling, gt: &FrameLabeling, threshold: f64) -> Result<f64> {
    Ok(segment_match_counts(pred, gt, threshold)?.f1())
}

/// Label agreement of detected strokes: each ground-truth stroke is paired
/// with at most one predicted peak within `tolerance` frames, nearest pairs
/// first.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrokeCounts {
    pub ground_truth: usize,
    pub predicted: usize,
    pub matched: usize,
    pub correct: usize,
}

impl StrokeCounts {
    /// Correctly labelled strokes over all ground-truth strokes, in percent.
    pub fn accuracy(&self) -> f64 {
        if self.ground_truth == 0 {
            return if self.predicted == 0 { 100.0 } else { 0.0 };
        }
        100.0 * self.correct as f64 / self.ground_truth as f64
    }

    fn add(&mut self, other: StrokeCounts) {
        self.ground_truth += other.ground_truth;
        self.predicted += other.predicted;
        self.matched += other.matched;
        self.correct += other.correct;
    }
}

pub fn stroke_counts(pred: &[(usize, usize)], gt: &[(usize, usize)], tolerance: usize) -> StrokeCounts {
    let mut pairs: Vec<(usize, usize, usize)> = Vec::new();
    for (i, g) in gt.iter().enumerate() {
        for (j, p) in pred.iter().enumerate() {
            let d = g.0.abs_diff(p.0);
            if d <= tolerance {
                pairs.push((d, i, j));
            }
        }
    }
    pairs.sort_unstable();
    let mut gt_used = vec![false; gt.len()];
    let mut pred_used = vec![false; pred.len()];
    let mut counts = StrokeCounts {
        ground_truth: gt.len(),
        predicted: pred.len(),
        ..Default::default()
    };
    for (_, i, j) in pairs {
        if gt_used[i] || pred_used[j] {
            continue;
        }
        gt_used[i] = true;
        pred_used[j] = true;
        counts.matched += 1;
        if gt[i].1 == pred[j].1 {
            counts.correct += 1;
        }
    }
    counts
}

/// Metrics for one rally, all in percent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RallyEval {
    pub rally_id: String,
    pub frames: usize,
    pub acc: f64,
    pub edit: f64,
    pub f1_10: f64,
    pub f1_25: f64,
    pub f1_50: f64,
    pub stroke_acc: f64,
    #[serde(skip)]
    counts: RallyCounts,
}

#[derive(Clone, Debug, Default, PartialEq)]
struct RallyCounts {
    frame_hits: usize,
    edit_distance: usize,
    edit_longest: usize,
    matches: [MatchCounts; 3],
    strokes: StrokeCounts,
}

/// Pooled (`micro`) or per-rally averaged (`macro`) metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub acc: f64,
    pub edit: f64,
    pub f1_10: f64,
    pub f1_25: f64,
    pub f1_50: f64,
    pub stroke_acc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_rally: Vec<RallyEval>,
    pub aggregate: Aggregate,
    pub aggregate_macro: Aggregate,
}

/// Evaluates one rally from predicted segments and ground-truth strokes.
///
/// `pred_segments` holds `(start, end, label, peak)`; `gt_strokes` holds `(frame, label)`.
pub fn evaluate_rally(
    rally_id: &str,
    len: usize,
    pred_segments: &[(usize, usize, usize, usize)],
    gt_strokes: &[(usize, usize)],
    max_len: usize,
    stroke_tolerance: usize,
) -> Result<RallyEval> {
    let gt = annotations_to_frame_labels(gt_strokes, len, max_len)?;
    let mut pred = FrameLabeling::background(len);
    for &(start, end, label, _) in pred_segments {
        if start >= end || end > len {
            return Err(Error::input(format!(
                "rally {rally_id}: predicted segment [{start}, {end}) outside {len} frames"
            )));
        }
        pred.paint(start, end, label);
    }
    let frame_hits = pred.0.iter().zip(&gt.0).filter(|(a, b)| a == b).count();
    let (edit_distance, edit_longest) = edit_counts(&pred, &gt);
    let mut matches = [MatchCounts::default(); 3];
    for (m, thr) in matches.iter_mut().zip(F1_THRESHOLDS) {
        *m = segment_match_counts(&pred, &gt, thr)?;
    }
    let pred_strokes: Vec<(usize, usize)> = pred_segments.iter().map(|s| (s.3, s.2)).collect();
    let strokes = stroke_counts(&pred_strokes, gt_strokes, stroke_tolerance);
    Ok(RallyEval {
        rally_id: rally_id.to_string(),
        frames: len,
        acc: frame_accuracy(&pred, &gt)?,
        edit: edit_score(&pred, &gt)?,
        f1_10: matches[0].f1(),
        f1_25: matches[1].f1(),
        f1_50: matches[2].f1(),
        stroke_acc: strokes.accuracy(),
        counts: RallyCounts {
            frame_hits,
            edit_distance,
            edit_longest,
            matches,
            strokes,
        },
    })
}

impl EvalReport {
    pub fn from_rallies(per_rally: Vec<RallyEval>) -> Self {
        let mut frames = 0;
        let mut hits = 0;
        let mut dist = 0;
        let mut longest = 0;
        let mut matches = [MatchCounts::default(); 3];
        let mut strokes = StrokeCounts::default();
        for r in &per_rally {
            frames += r.frames;
            hits += r.counts.frame_hits;
            dist += r.counts.edit_distance;
            longest += r.counts.edit_longest;
            for (m, o) in matches.iter_mut().zip(r.counts.matches) {
                m.add(o);
            }
            strokes.add(r.counts.strokes);
        }
        let aggregate = Aggregate {
            acc: if frames == 0 { 100.0 } else { 100.0 * hits as f64 / frames as f64 },
            edit: if longest == 0 { 100.0 } else { 100.0 * (1.0 - dist as f64 / longest as f64) },
            f1_10: matches[0].f1(),
            f1_25: matches[1].f1(),
            f1_50: matches[2].f1(),
            stroke_acc: strokes.accuracy(),
        };
        let n = per_rally.len().max(1) as f64;
        let mean = |f: fn(&RallyEval) -> f64| per_rally.iter().map(f).sum::<f64>() / n;
        let aggregate_macro = Aggregate {
            acc: mean(|r| r.acc),
            edit: mean(|r| r.edit),
            f1_10: mean(|r| r.f1_10),
            f1_25: mean(|r| r.f1_25),
            f1_50: mean(|r| r.f1_50),
            stroke_acc: mean(|r| r.stroke_acc),
        };
        Self {
            per_rally,
            aggregate,
            aggregate_macro,
        }
    }

    /// Flat CSV: one line per rally plus `ALL` (micro) and `MACRO` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rally_id,frames,acc,edit,f1_10,f1_25,f1_50,stroke_acc\n");
        for r in &self.per_rally {
            out.push_str(&format!(
                "{},{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}\n",
                r.rally_id, r.frames, r.acc, r.edit, r.f1_10, r.f1_25, r.f1_50, r.stroke_acc
            ));
        }
        let frames: usize = self.per_rally.iter().map(|r| r.frames).sum();
        for (name, a) in [("ALL", &self.aggregate), ("MACRO", &self.aggregate_macro)] {
            out.push_str(&format!(
                "{name},{frames},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}\n",
                a.acc, a.edit, a.f1_10, a.f1_25, a.f1_50, a.stroke_acc
            ));
        }
        out
    }
}
