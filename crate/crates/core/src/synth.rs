//! Synthetic rally corpora with known structure.
//!
//! Technique sequences come from a first-order Markov chain with a `null`
//! start row. Each stroke leaves a cosine-shaped bump in the frame features:
//! a fixed offset on dimension 0 (what the seg head detects) and its class
//! mean plus per-stroke Gaussian noise on the remaining dimensions (what the
//! classifier separates). Rally winners are drawn from a table keyed on the
//! opening trigram.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::classifier::{LabelSet, DEFAULT_TECHNIQUES};
use crate::error::{Error, Result};
use crate::event_signal::FrameFeatureSeries;
use crate::tactics::Side;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedWinRate {
    pub trigram: [String; 3],
    /// Probability that the server wins a rally opening with `trigram`.
    pub server_win_prob: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub labels: Vec<String>,
    /// `(labels + 1) x labels`, row 0 is the `null` start row.
    pub transitions: Vec<Vec<f64>>,
    /// Inclusive range of strokes per rally.
    pub strokes_per_rally: (usize, usize),
    /// Inclusive range of frames between consecutive strokes.
    pub gap_range: (usize, usize),
    /// Inclusive range of idle frames before the first and after the last stroke.
    pub margin_range: (usize, usize),
    pub max_rally_frames: usize,
    pub sigma: f64,
    pub dim: usize,
    pub fps: f64,
    /// Standard deviation of class-mean entries.
    pub class_scale: f64,
    /// Per-stroke feature noise; the cluster-overlap knob.
    pub cluster_noise: f64,
    pub background_noise: f64,
    /// Bump height on feature dimension 0 at a stroke frame.
    pub stroke_offset: f64,
    /// Label pairs whose means are pulled together.
    pub confusable: Vec<(String, String)>,
    /// 0 keeps means independent, 1 makes them identical.
    pub confusable_similarity: f64,
    pub win_table: Vec<PlantedWinRate>,
    pub default_win_prob: f64,
    pub rallies: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self::table_tennis()
    }
}

impl SynthConfig {
    /// Eight table-tennis techniques with a strong transition prior and two
    /// visually confusable pairs (Short/Push and Flick/Smash).
    pub fn table_tennis() -> Self {
        #[rustfmt::skip]
        let transitions = vec![
            //   Serve Topspin Short Block Push Flick Smash Others
            vec![1.00, 0.00, 0.00, 0.00, 0.00, 0.00, 0.00, 0.00], // null
            vec![0.00, 0.15, 0.55, 0.00, 0.10, 0.15, 0.00, 0.05], // Serve
            vec![0.00, 0.30, 0.00, 0.50, 0.00, 0.00, 0.10, 0.10], // Topspin
            vec![0.00, 0.30, 0.35, 0.00, 0.05, 0.25, 0.00, 0.05], // Short
            vec![0.00, 0.45, 0.00, 0.30, 0.15, 0.00, 0.05, 0.05], // Block
            vec![0.00, 0.30, 0.05, 0.00, 0.55, 0.05, 0.00, 0.05], // Push
            vec![0.00, 0.45, 0.00, 0.45, 0.00, 0.00, 0.05, 0.05], // Flick
            vec![0.00, 0.00, 0.00, 0.60, 0.00, 0.00, 0.10, 0.30], // Smash
            vec![0.00, 0.30, 0.05, 0.25, 0.20, 0.05, 0.05, 0.10], // Others
        ];
        let planted = |a: &str, b: &str, c: &str, p: f64| PlantedWinRate {
            trigram: [a.into(), b.into(), c.into()],
            server_win_prob: p,
        };
        Self {
            labels: DEFAULT_TECHNIQUES.iter().map(|s| s.to_string()).collect(),
            transitions,
            strokes_per_rally: (3, 9),
            gap_range: (14, 36),
            margin_range: (10, 30),
            max_rally_frames: 600,
            sigma: 8.0,
            dim: 64,
            fps: 25.0,
            class_scale: 6.0,
            cluster_noise: 6.0,
            background_noise: 0.3,
            stroke_offset: 4.0,
            confusable: vec![("Short".into(), "Push".into()), ("Flick".into(), "Smash".into())],
            confusable_similarity: 0.95,
            win_table: vec![
                planted("Serve", "Short", "Topspin", 0.70),
                planted("Serve", "Short", "Short", 0.43),
                planted("Serve", "Short", "Others", 0.43),
                planted("Serve", "Short", "Flick", 0.60),
                planted("Serve", "Topspin", "Block", 0.35),
                planted("Serve", "Flick", "Topspin", 0.55),
            ],
            default_win_prob: 0.5,
            rallies: 500,
            seed: 42,
        }
    }

    pub fn label_set(&self) -> Result<LabelSet> {
        LabelSet::new(self.labels.iter().cloned())
    }

    pub fn validate(&self) -> Result<LabelSet> {
        let labels = self.label_set()?;
        let c = labels.len();
        if self.transitions.len() != c + 1 {
            return Err(Error::config(format!("transitions need {} rows (null + labels), got {}", c + 1, self.transitions.len())));
        }
        for (i, row) in self.transitions.iter().enumerate() {
            if row.len() != c || row.iter().any(|p| !(*p >= 0.0)) {
                return Err(Error::config(format!("transition row {i} must hold {c} non-negative probabilities")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::config(format!("transition row {i} sums to {sum}")));
            }
        }
        let (smin, smax) = self.strokes_per_rally;
        let (gmin, gmax) = self.gap_range;
        let (mmin, mmax) = self.margin_range;
        if smin == 0 || smin > smax || gmin > gmax || mmin > mmax {
            return Err(Error::config("ranges must be non-empty and strokes_per_rally must start at 1 or more"));
        }
        if !(self.sigma > 0.0) || (gmin as f64) < self.sigma {
            return Err(Error::config(format!("minimum gap {gmin} must be at least sigma {}", self.sigma)));
        }
        let longest = 2 * mmax + (smax - 1) * gmax + 1;
        if longest > self.max_rally_frames {
            return Err(Error::config(format!(
                "rallies may need {longest} frames but max_rally_frames is {}",
                self.max_rally_frames
            )));
        }
        if self.dim < 2 {
            return Err(Error::config("feature dimension must be at least 2"));
        }
        if !(0.0..=1.0).contains(&self.confusable_similarity) {
            return Err(Error::config("confusable_similarity must lie in [0, 1]"));
        }
        for (a, b) in &self.confusable {
            labels.require(a)?;
            labels.require(b)?;
        }
        for p in self.win_table.iter().map(|w| w.server_win_prob).chain([self.default_win_prob]) {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("win probability {p} outside [0, 1]")));
            }
        }
        for w in &self.win_table {
            for name in &w.trigram {
                labels.require(name)?;
            }
        }
        for scale in [self.class_scale, self.cluster_noise, self.background_noise] {
            if !(scale >= 0.0 && scale.is_finite()) {
                return Err(Error::config("noise and scale parameters must be finite and non-negative"));
            }
        }
        Ok(labels)
    }

    /// Planted server-win probability for an opening trigram.
    pub fn win_prob(&self, trigram: [&str; 3]) -> f64 {
        self.win_table
            .iter()
            .find(|w| w.trigram.iter().map(String::as_str).eq(trigram))
            .map_or(self.default_win_prob, |w| w.server_win_prob)
    }
}

/// One generated rally with its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthRally {
    pub series: FrameFeatureSeries,
    /// `(frame, label index)`, strictly increasing frames.
    pub strokes: Vec<(usize, usize)>,
    pub server: Side,
    pub winner: Side,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthCorpus {
    pub labels: LabelSet,
    pub class_means: Vec<Vec<f64>>,
    pub rallies: Vec<SynthRally>,
}

fn sample_row<R: Rng + ?Sized>(row: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding slack lands on the last reachable state
    row.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

/// Samples `len` labels from a chain whose row 0 is the start distribution.
pub fn sample_chain<R: Rng + ?Sized>(transitions: &[Vec<f64>], len: usize, rng: &mut R) -> Vec<usize> {
    let mut seq = Vec::with_capacity(len);
    let mut row = 0;
    for _ in 0..len {
        let next = sample_row(&transitions[row], rng);
        seq.push(next);
        row = next + 1;
    }
    seq
}

fn class_means(config: &SynthConfig, labels: &LabelSet) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut means: Vec<Vec<f64>> = (0..labels.len())
        .map(|_| {
            let mut m = vec![0.0; config.dim];
            for v in &mut m[1..] {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v = z * config.class_scale;
            }
            m
        })
        .collect();
    let s = config.confusable_similarity;
    for (a, b) in &config.confusable {
        let (ia, ib) = (labels.index_of(a).unwrap(), labels.index_of(b).unwrap());
        let anchor = means[ia].clone();
        for (vb, va) in means[ib].iter_mut().zip(anchor) {
            *vb = s * va + (1.0 - s) * *vb;
        }
    }
    means
}

fn generate_rally(config: &SynthConfig, labels: &LabelSet, means: &[Vec<f64>], index: usize) -> SynthRally {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64 + 1);

    let n = rng.random_range(config.strokes_per_rally.0..=config.strokes_per_rally.1);
    let seq = sample_chain(&config.transitions, n, &mut rng);
    let lead = rng.random_range(config.margin_range.0..=config.margin_range.1);
    let mut frames = Vec::with_capacity(n);
    let mut t = lead;
    for k in 0..n {
        if k > 0 {
            t += rng.random_range(config.gap_range.0..=config.gap_range.1);
        }
        frames.push(t);
    }
    let tail = rng.random_range(config.margin_range.0..=config.margin_range.1);
    let len = t + tail + 1;

    let dim = config.dim;
    let background = Normal::new(0.0, config.background_noise).unwrap();
    let mut data: Vec<f64> = (0..len * dim).map(|_| background.sample(&mut rng)).collect();
    let half = config.sigma / 2.0;
    let reach = half.floor() as usize;
    for (&frame, &label) in frames.iter().zip(&seq) {
        let pattern: Vec<f64> = means[label]
            .iter()
            .enumerate()
            .map(|(d, m)| {
                if d == 0 {
                    config.stroke_offset
                } else {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    m + config.cluster_noise * z
                }
            })
            .collect();
        for ft in frame.saturating_sub(reach)..=(frame + reach).min(len - 1) {
            let d = ft.abs_diff(frame) as f64;
            if d >= half {
                continue;
            }
            let envelope = (d * PI / config.sigma).cos();
            for (slot, p) in data[ft * dim..(ft + 1) * dim].iter_mut().zip(&pattern) {
                *slot += envelope * p;
            }
        }
    }

    let server = if rng.random_bool(0.5) { Side::A } else { Side::B };
    let p_server = if n >= 3 {
        config.win_prob([labels.name(seq[0]), labels.name(seq[1]), labels.name(seq[2])])
    } else {
        config.default_win_prob
    };
    let winner = if rng.random_bool(p_server) { server } else { server.other() };

    SynthRally {
        series: FrameFeatureSeries::from_flat(format!("rally_{index:05}"), config.fps, dim, data)
            .expect("generated features are finite"),
        strokes: frames.into_iter().zip(seq).collect(),
        server,
        winner,
    }
}

/// Generates `config.rallies` rallies; each rally draws from its own stream
/// of the seeded generator, so output does not depend on generation order.
pub fn generate(config: &SynthConfig) -> Result<SynthCorpus> {
    let labels = config.validate()?;
    let means = class_means(config, &labels);
    let rallies = (0..config.rallies)
        .map(|i| generate_rally(config, &labels, &means, i))
        .collect();
    Ok(SynthCorpus {
        labels,
        class_means: means,
        rallies,
    })
}

/// Brute-force transition counts: `(labels + 1) x labels`, row 0 for `null`.
pub fn oracle_transition_counts(sequences: &[Vec<usize>], num_labels: usize) -> Vec<Vec<usize>> {
    let mut counts = vec![vec![0; num_labels]; num_labels + 1];
    for (to, slot) in counts[0].iter_mut().enumerate() {
        *slot = sequences.iter().filter(|s| s.first() == Some(&to)).count();
    }
    for from in 0..num_labels {
        for to in 0..num_labels {
            counts[from + 1][to] = sequences
                .iter()
                .map(|s| s.windows(2).filter(|w| w[0] == from && w[1] == to).count())
                .sum();
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            rallies: 20,
            dim: 8,
            ..SynthConfig::table_tennis()
        }
    }

    #[test]
    fn default_config_is_valid() {
        SynthConfig::table_tennis().validate().unwrap();
    }

    #[test]
    fn deterministic_chain_repeats_one_sequence() {
        let mut config = small();
        config.strokes_per_rally = (5, 5);
        let c = config.labels.len();
        config.transitions = (0..=c)
            .map(|r| {
                let mut row = vec![0.0; c];
                row[r % c] = 1.0;
                row
            })
            .collect();
        let corpus = generate(&config).unwrap();
        let first: Vec<usize> = corpus.rallies[0].strokes.iter().map(|s| s.1).collect();
        assert_eq!(first, vec![0, 1, 2, 3, 4]);
        for r in &corpus.rallies {
            assert!(r.strokes.iter().map(|s| s.1).eq(first.iter().copied()));
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a, b);
        let c = generate(&SynthConfig { seed: 7, ..small() }).unwrap();
        assert_ne!(a.rallies[0].series, c.rallies[0].series);
    }

    #[test]
    fn strokes_respect_gaps_and_length() {
        let config = small();
        for r in generate(&config).unwrap().rallies {
            assert!(r.strokes.len() >= config.strokes_per_rally.0 && r.strokes.len() <= config.strokes_per_rally.1);
            for w in r.strokes.windows(2) {
                let gap = w[1].0 - w[0].0;
                assert!(gap >= config.gap_range.0 && gap <= config.gap_range.1);
            }
            assert!(r.strokes.last().unwrap().0 < r.series.len());
            assert!(r.series.len() <= config.max_rally_frames);
        }
    }

    #[test]
    fn infeasible_layout_is_a_config_error() {
        let config = SynthConfig { max_rally_frames: 100, ..small() };
        assert!(matches!(generate(&config), Err(Error::Config(_))));
        let config = SynthConfig { gap_range: (4, 10), ..small() };
        assert!(matches!(generate(&config), Err(Error::Config(_))));
        let mut config = small();
        config.transitions[2][0] += 0.1;
        assert!(matches!(generate(&config), Err(Error::Config(_))));
    }

    #[test]
    fn oracle_counts_examples() {
        // A = 0, B = 1
        let counts = oracle_transition_counts(&[vec![0, 1], vec![0, 1], vec![0, 0]], 2);
        assert_eq!(counts, vec![vec![3, 0], vec![1, 2], vec![0, 0]]);
        assert_eq!(oracle_transition_counts(&[], 2), vec![vec![0, 0]; 3]);
        assert_eq!(oracle_transition_counts(&[vec![0]], 2), vec![vec![1, 0], vec![0, 0], vec![0, 0]]);
    }

    #[test]
    fn empirical_transitions_match_config() {
        let transitions = vec![
            vec![0.5, 0.3, 0.2],
            vec![0.1, 0.6, 0.3],
            vec![0.4, 0.2, 0.4],
            vec![0.3, 0.3, 0.4],
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut sequences = Vec::new();
        let mut total = 0;
        while total < 10_000 {
            let s = sample_chain(&transitions, 10, &mut rng);
            total += s.len();
            sequences.push(s);
        }
        let counts = oracle_transition_counts(&sequences, 3);
        for (row, expected) in counts.iter().zip(&transitions) {
            let n: usize = row.iter().sum();
            let l1: f64 = row.iter().zip(expected).map(|(c, p)| (*c as f64 / n as f64 - p).abs()).sum();
            assert!(l1 < 0.05, "row {row:?} L1 {l1}");
        }
    }

    #[test]
    fn bump_dimension_recovers_planted_strokes() {
        let config = small();
        let corpus = generate(&config).unwrap();
        for r in &corpus.rallies {
            let probs: Vec<f64> = r.series.frames().map(|f| f[0] / config.stroke_offset).collect();
            let events = crate::event_signal::extract_events(&probs, 0.5, config.sigma);
            let peaks: Vec<usize> = events.iter().map(|e| e.peak_frame).collect();
            assert_eq!(peaks.len(), r.strokes.len());
            for (p, s) in peaks.iter().zip(&r.strokes) {
                assert!(p.abs_diff(s.0) <= 1, "peak {p} vs stroke {}", s.0);
            }
        }
    }
}
