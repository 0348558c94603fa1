//! Stage one: per-frame stroke probabilities and their conversion into
//! stroke events and per-stroke segments.
//!
//! Strokes are instantaneous contact events. During training each stroke
//! frame becomes a cosine bump of half-width `sigma / 2`; the seg head learns
//! to reproduce that signal from frame features, and at inference the
//! probability stream is thresholded, merged and widened into segments.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Mlp;

/// Probability clamp used by [`bce_loss`].
pub const PROB_EPS: f64 = 1e-7;

pub const DEFAULT_SIGMA: f64 = 8.0;
pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_MAX_SEGMENT_LEN: usize = 40;

/// Per-frame feature vectors for one rally clip.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameFeatureSeries {
    pub rally_id: String,
    pub fps: f64,
    dim: usize,
    data: Vec<f64>,
}

impl FrameFeatureSeries {
    pub fn new(rally_id: impl Into<String>, fps: f64, frames: Vec<Vec<f64>>) -> Result<Self> {
        let rally_id = rally_id.into();
        let dim = frames.first().map(Vec::len).unwrap_or(0);
        if frames.is_empty() || dim == 0 {
            return Err(Error::input(format!("rally {rally_id}: series needs at least one frame of dimension >= 1")));
        }
        let mut data = Vec::with_capacity(frames.len() * dim);
        for (t, frame) in frames.into_iter().enumerate() {
            if frame.len() != dim {
                return Err(Error::input(format!(
                    "rally {rally_id}: frame {t} has dimension {} (expected {dim})",
                    frame.len()
                )));
            }
            if frame.iter().any(|v| !v.is_finite()) {
                return Err(Error::input(format!("rally {rally_id}: frame {t} has a non-finite value")));
            }
            data.extend(frame);
        }
        Ok(Self { rally_id, fps, dim, data })
    }

    /// Builds a series from a row-major buffer of `len * dim` values.
    pub fn from_flat(rally_id: impl Into<String>, fps: f64, dim: usize, data: Vec<f64>) -> Result<Self> {
        let rally_id = rally_id.into();
        if dim == 0 || data.is_empty() || data.len() % dim != 0 {
            return Err(Error::input(format!("rally {rally_id}: buffer of {} values is not a whole number of {dim}-dim frames", data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::input(format!("rally {rally_id}: non-finite feature value")));
        }
        Ok(Self { rally_id, fps, dim, data })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.frames().map(<[f64]>::to_vec).collect()
    }
}

/// Cosine event target, one value in `[0, 1]` per frame.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetSignal(Vec<f64>);

impl TargetSignal {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Builds the cosine target: `cos((t - t_s) * pi / sigma)` within `sigma / 2`
/// of the nearest stroke frame `t_s`, zero elsewhere.
pub fn make_target_signal(stroke_frames: &[usize], len: usize, sigma: f64) -> Result<TargetSignal> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::config(format!("sigma must be positive, got {sigma}")));
    }
    let mut values = vec![0.0; len];
    let half = sigma / 2.0;
    let reach = half.floor() as usize;
    for &s in stroke_frames {
        if s >= len {
            return Err(Error::input(format!("stroke frame {s} outside series of length {len}")));
        }
        for t in s.saturating_sub(reach)..=(s + reach).min(len - 1) {
            let d = t.abs_diff(s) as f64;
            let v = if d >= half { 0.0 } else { (d * PI / sigma).cos() };
            // the nearest stroke gives the largest value since cos falls on [0, pi/2]
            if v > values[t] {
                values[t] = v;
            }
        }
    }
    Ok(TargetSignal(values))
}

/// Mean binary cross entropy with predictions clamped to `[PROB_EPS, 1 - PROB_EPS]`.
pub fn bce_loss(predicted: &[f64], target: &[f64]) -> Result<f64> {
    if predicted.len() != target.len() {
        return Err(Error::input(format!(
            "bce: {} predictions for {} targets",
            predicted.len(),
            target.len()
        )));
    }
    if predicted.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = predicted
        .iter()
        .zip(target)
        .map(|(&q, &p)| {
            let q = q.clamp(PROB_EPS, 1.0 - PROB_EPS);
            -(p * q.ln() + (1.0 - p) * (1.0 - q).ln())
        })
        .sum();
    Ok(sum / predicted.len() as f64)
}

/// Mean per-frame agreement `q * p + (1 - q)(1 - p)`.
///
/// Not a divergence; reported alongside BCE as a readable fit measure.
pub fn agreement_score(predicted: &[f64], target: &[f64]) -> Result<f64> {
    if predicted.len() != target.len() {
        return Err(Error::input(format!(
            "agreement: {} predictions for {} targets",
            predicted.len(),
            target.len()
        )));
    }
    if predicted.is_empty() {
        return Ok(1.0);
    }
    let sum: f64 = predicted
        .iter()
        .zip(target)
        .map(|(&q, &p)| q * p + (1.0 - q) * (1.0 - p))
        .sum();
    Ok(sum / predicted.len() as f64)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Per-frame stroke probability predictor: `sigmoid(mlp(frame))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegHead {
    pub net: Mlp,
}

impl SegHead {
    pub fn init(dim: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            net: Mlp::init(dim, hidden, 1, &mut rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn probability(&self, frame: &[f64]) -> f64 {
        sigmoid(self.net.forward(frame).output[0])
    }

    pub fn predict(&self, series: &FrameFeatureSeries) -> Vec<f64> {
        series.frames().map(|f| self.probability(f)).collect()
    }

    /// Mean BCE over `frames` and its gradient with respect to every weight.
    pub fn loss_and_gradient(&self, frames: &[&[f64]], targets: &[f64]) -> (f64, Mlp) {
        let mut grad = self.net.zeros_like();
        let mut loss = 0.0;
        let n = frames.len().max(1) as f64;
        for (frame, &p) in frames.iter().zip(targets) {
            let cache = self.net.forward(frame);
            let q = sigmoid(cache.output[0]);
            let qc = q.clamp(PROB_EPS, 1.0 - PROB_EPS);
            loss -= p * qc.ln() + (1.0 - p) * (1.0 - qc).ln();
            // d BCE / d logit through the sigmoid
            self.net.backward(frame, &cache, &[(q - p) / n], &mut grad);
        }
        (loss / n, grad)
    }
}

/// One training rally for the seg head.
#[derive(Clone, Copy, Debug)]
pub struct SegSample<'a> {
    pub series: &'a FrameFeatureSeries,
    pub stroke_frames: &'a [usize],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegTrainConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub sigma: f64,
    pub seed: u64,
}

impl Default for SegTrainConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            epochs: 20,
            learning_rate: 0.5,
            batch_size: 32,
            sigma: DEFAULT_SIGMA,
            seed: 42,
        }
    }
}

/// Mini-batch gradient descent on mean BCE against the cosine targets.
///
/// Returns the head and the mean training loss of each epoch.
pub fn train_seg_head(corpus: &[SegSample<'_>], config: &SegTrainConfig) -> Result<(SegHead, Vec<f64>)> {
    let first = corpus
        .first()
        .ok_or_else(|| Error::input("seg head training corpus is empty"))?;
    if config.batch_size == 0 {
        return Err(Error::config("batch_size must be >= 1"));
    }
    if !(config.learning_rate >= 0.0 && config.learning_rate.is_finite()) {
        return Err(Error::config(format!("invalid learning rate {}", config.learning_rate)));
    }
    let dim = first.series.dim();
    let mut targets = Vec::with_capacity(corpus.len());
    for sample in corpus {
        if sample.series.dim() != dim {
            return Err(Error::input(format!(
                "rally {} has feature dimension {} (expected {dim})",
                sample.series.rally_id,
                sample.series.dim()
            )));
        }
        targets.push(make_target_signal(sample.stroke_frames, sample.series.len(), config.sigma)?);
    }

    let mut head = SegHead::init(dim, config.hidden, config.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut index: Vec<(u32, u32)> = corpus
        .iter()
        .enumerate()
        .flat_map(|(r, s)| (0..s.series.len()).map(move |t| (r as u32, t as u32)))
        .collect();

    let mut log = Vec::with_capacity(config.epochs);
    let mut frames: Vec<&[f64]> = Vec::with_capacity(config.batch_size);
    let mut batch_targets = Vec::with_capacity(config.batch_size);
    for epoch in 0..config.epochs {
        index.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in index.chunks(config.batch_size) {
            frames.clear();
            batch_targets.clear();
            for &(r, t) in batch {
                frames.push(corpus[r as usize].series.frame(t as usize));
                batch_targets.push(targets[r as usize].values()[t as usize]);
            }
            let (loss, grad) = head.loss_and_gradient(&frames, &batch_targets);
            if !loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    message: "seg head loss is not finite".into(),
                });
            }
            total += loss * batch.len() as f64;
            head.net.axpy(-config.learning_rate, &grad);
        }
        let mean = total / index.len() as f64;
        if !mean.is_finite() || !head.net.is_finite() {
            return Err(Error::Training {
                epoch,
                message: "seg head diverged".into(),
            });
        }
        log.push(mean);
    }
    Ok((head, log))
}

/// A detected stroke: an inclusive frame interval and its most probable frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrokeEvent {
    pub start_frame: usize,
    pub end_frame: usize,
    pub peak_frame: usize,
    pub peak_prob: f64,
}

/// Turns a probability stream into stroke events.
///
/// Maximal runs at or above `threshold` become events peaked at their
/// earliest argmax. Neighbouring events separated by fewer than `sigma / 2`
/// frames are merged, keeping the higher peak (earlier on ties).
pub fn extract_events(probabilities: &[f64], threshold: f64, sigma: f64) -> Vec<StrokeEvent> {
    let mut runs: Vec<StrokeEvent> = Vec::new();
    let mut current: Option<StrokeEvent> = None;
    for (t, &p) in probabilities.iter().enumerate() {
        if p >= threshold {
            match current.as_mut() {
                Some(ev) => {
                    ev.end_frame = t;
                    if p > ev.peak_prob {
                        ev.peak_prob = p;
                        ev.peak_frame = t;
                    }
                }
                None => {
                    current = Some(StrokeEvent {
                        start_frame: t,
                        end_frame: t,
                        peak_frame: t,
                        peak_prob: p,
                    })
                }
            }
        } else if let Some(ev) = current.take() {
            runs.push(ev);
        }
    }
    runs.extend(current);
    merge_close_events(runs, sigma)
}

fn merge_close_events(runs: Vec<StrokeEvent>, sigma: f64) -> Vec<StrokeEvent> {
    let min_gap = sigma / 2.0;
    let mut merged: Vec<StrokeEvent> = Vec::with_capacity(runs.len());
    for ev in runs {
        match merged.last_mut() {
            Some(prev) if ((ev.start_frame - prev.end_frame) as f64) < min_gap => {
                prev.end_frame = ev.end_frame;
                if ev.peak_prob > prev.peak_prob {
                    prev.peak_prob = ev.peak_prob;
                    prev.peak_frame = ev.peak_frame;
                }
            }
            _ => merged.push(ev),
        }
    }
    merged
}

/// Half-open frame interval `[start, end)` belonging to one event.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub event_index: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    pub fn contains(&self, frame: usize) -> bool {
        self.start <= frame && frame < self.end
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SegmentSet {
    pub segments: Vec<Segment>,
}

/// Extends each peak to a window of `max_len` frames, clips to `[0, len)`
/// and splits overlapping neighbours at the midpoint between their peaks.
///
/// Peaks must be strictly increasing and inside the series.
pub fn segment_bounds(peaks: &[usize], len: usize, max_len: usize) -> Result<Vec<(usize, usize)>> {
    if max_len == 0 {
        return Err(Error::config("max segment length must be >= 1"));
    }
    let below = max_len / 2;
    let above = max_len - below;
    let mut bounds: Vec<(usize, usize)> = Vec::with_capacity(peaks.len());
    for (i, &p) in peaks.iter().enumerate() {
        if p >= len {
            return Err(Error::input(format!("peak {p} outside series of length {len}")));
        }
        if i > 0 && p <= peaks[i - 1] {
            return Err(Error::input(format!(
                "peaks must be strictly increasing ({} then {p})",
                peaks[i - 1]
            )));
        }
        let mut start = p.saturating_sub(below);
        let end = (p + above).min(len);
        if let Some(prev) = bounds.last_mut() {
            if prev.1 > start {
                let q = peaks[i - 1];
                // floor of the midpoint, kept strictly after the previous peak
                let cut = ((q + p) / 2).max(q + 1);
                prev.1 = cut;
                start = cut;
            }
        }
        bounds.push((start, end));
    }
    Ok(bounds)
}

/// Segments for a sorted list of events; one segment per event.
pub fn form_segments(events: &[StrokeEvent], len: usize, max_len: usize) -> Result<SegmentSet> {
    let peaks: Vec<usize> = events.iter().map(|e| e.peak_frame).collect();
    let segments = segment_bounds(&peaks, len, max_len)?
        .into_iter()
        .enumerate()
        .map(|(event_index, (start, end))| Segment { start, end, event_index })
        .collect();
    Ok(SegmentSet { segments })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn event(start: usize, end: usize, peak: usize, prob: f64) -> StrokeEvent {
        StrokeEvent {
            start_frame: start,
            end_frame: end,
            peak_frame: peak,
            peak_prob: prob,
        }
    }

    #[test]
    fn target_signal_peak_boundary_and_interior() {
        let sig = make_target_signal(&[100], 300, 8.0).unwrap();
        assert_eq!(sig.values()[100], 1.0);
        assert_eq!(sig.values()[104], 0.0);
        assert_eq!(sig.values()[96], 0.0);
        assert!((sig.values()[102] - 0.70711).abs() < 1e-5);
        assert!((sig.values()[98] - sig.values()[102]).abs() < 1e-15);
        assert_eq!(sig.values()[50], 0.0);
    }

    #[test]
    fn target_signal_rejects_out_of_range_stroke() {
        assert!(matches!(make_target_signal(&[300], 300, 8.0), Err(Error::Input(_))));
        assert!(matches!(make_target_signal(&[1], 300, 0.0), Err(Error::Config(_))));
    }

    #[test]
    fn target_signal_clips_at_series_edges() {
        let sig = make_target_signal(&[0, 9], 10, 8.0).unwrap();
        assert_eq!(sig.values()[0], 1.0);
        assert_eq!(sig.values()[9], 1.0);
        assert!((sig.values()[1] - (PI / 8.0).cos()).abs() < 1e-15);
    }

    #[test]
    fn bce_examples() {
        assert!(bce_loss(&[0.0, 1.0, 1.0], &[0.0, 1.0, 1.0]).unwrap() < 1e-6);
        assert!((bce_loss(&[0.5], &[1.0]).unwrap() - 0.69315).abs() < 1e-5);
        assert!((bce_loss(&[0.5], &[0.0]).unwrap() - 0.69315).abs() < 1e-5);
        assert!(matches!(bce_loss(&[0.5], &[0.0, 1.0]), Err(Error::Input(_))));
    }

    #[test]
    fn agreement_is_one_for_perfect_binary_prediction() {
        assert_eq!(agreement_score(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(agreement_score(&[0.5], &[1.0]).unwrap(), 0.5);
    }

    #[test]
    fn events_recovered_from_exact_targets() {
        let sig = make_target_signal(&[100, 200], 300, 8.0).unwrap();
        let events = extract_events(sig.values(), 0.5, 8.0);
        let peaks: Vec<usize> = events.iter().map(|e| e.peak_frame).collect();
        assert_eq!(peaks, vec![100, 200]);
        assert_eq!(events[0].start_frame, 98);
        assert_eq!(events[0].end_frame, 102);
    }

    #[test]
    fn close_runs_are_merged_keeping_higher_peak() {
        let mut p = vec![0.0; 80];
        for t in 50..=53 {
            p[t] = 0.6;
        }
        p[52] = 0.7;
        for t in 55..=57 {
            p[t] = 0.8;
        }
        p[56] = 0.9;
        let events = extract_events(&p, 0.5, 8.0);
        assert_eq!(events, vec![event(50, 57, 56, 0.9)]);
    }

    #[test]
    fn gap_equal_to_half_sigma_is_not_merged() {
        let mut p = vec![0.0; 40];
        p[10] = 0.9;
        p[14] = 0.9;
        assert_eq!(extract_events(&p, 0.5, 8.0).len(), 2);
    }

    #[test]
    fn tie_in_run_picks_earliest_frame() {
        let p = [0.0, 0.8, 0.8, 0.0];
        assert_eq!(extract_events(&p, 0.5, 8.0)[0].peak_frame, 1);
    }

    #[test]
    fn merge_tie_keeps_earlier_peak() {
        let p = [0.9, 0.0, 0.9];
        let ev = extract_events(&p, 0.5, 8.0);
        assert_eq!(ev, vec![event(0, 2, 0, 0.9)]);
    }

    #[test]
    fn nothing_above_threshold_gives_no_events() {
        assert!(extract_events(&[0.1, 0.2, 0.49], 0.5, 8.0).is_empty());
        assert!(extract_events(&[], 0.5, 8.0).is_empty());
    }

    #[test]
    fn segment_examples() {
        let one = form_segments(&[event(99, 101, 100, 0.9)], 300, 40).unwrap();
        assert_eq!((one.segments[0].start, one.segments[0].end), (80, 120));

        let two = form_segments(&[event(100, 100, 100, 0.9), event(124, 124, 124, 0.9)], 300, 40).unwrap();
        let b: Vec<_> = two.segments.iter().map(|s| (s.start, s.end)).collect();
        assert_eq!(b, vec![(80, 112), (112, 144)]);

        let edge = form_segments(&[event(5, 5, 5, 0.9)], 300, 40).unwrap();
        assert_eq!((edge.segments[0].start, edge.segments[0].end), (0, 25));
    }

    #[test]
    fn adjacent_peaks_each_keep_their_own_frame() {
        let b = segment_bounds(&[10, 11], 30, 40).unwrap();
        assert_eq!(b, vec![(0, 11), (11, 30)]);
    }

    #[test]
    fn unsorted_peaks_are_rejected() {
        assert!(segment_bounds(&[20, 10], 30, 40).is_err());
        assert!(segment_bounds(&[30], 30, 40).is_err());
    }

    #[test]
    fn zero_epochs_returns_initial_head() {
        let series = FrameFeatureSeries::new("r", 25.0, vec![vec![0.0, 1.0]; 20]).unwrap();
        let strokes = [10usize];
        let sample = SegSample { series: &series, stroke_frames: &strokes };
        let config = SegTrainConfig { epochs: 0, hidden: 4, ..Default::default() };
        let (head, log) = train_seg_head(&[sample], &config).unwrap();
        assert_eq!(head, SegHead::init(2, 4, config.seed));
        assert!(log.is_empty());
    }

    #[test]
    fn empty_corpus_is_an_input_error() {
        assert!(matches!(train_seg_head(&[], &SegTrainConfig::default()), Err(Error::Input(_))));
    }

    #[test]
    fn series_validation() {
        assert!(FrameFeatureSeries::new("r", 25.0, vec![]).is_err());
        assert!(FrameFeatureSeries::new("r", 25.0, vec![vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(FrameFeatureSeries::new("r", 25.0, vec![vec![f64::NAN]]).is_err());
        let s = FrameFeatureSeries::new("r", 25.0, vec![vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.frame(1), &[3.0, 4.0]);
        assert_eq!(s.to_rows(), vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
    }
}
