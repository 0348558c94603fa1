//! Brute-force reference implementations shared by the integration tests.
//!
//! Each oracle recomputes a quantity from its definition without calling the
//! library routine it is compared against.
#![allow(dead_code)]

use std::collections::HashMap;
use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Target value at every frame, taking the nearest stroke.
pub fn target(strokes: &[usize], len: usize, sigma: f64) -> Vec<f64> {
    (0..len)
        .map(|t| {
            strokes
                .iter()
                .map(|&s| {
                    let d = (t as f64 - s as f64).abs();
                    if d <= sigma / 2.0 {
                        let v = (d * PI / sigma).cos();
                        if v.abs() < 1e-12 { 0.0 } else { v }
                    } else {
                        0.0
                    }
                })
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Sorted stroke frames in `[0, len)` with consecutive gaps of at least `min_gap`.
pub fn random_layout(rng: &mut impl Rng, len: usize, min_gap: usize, max_strokes: usize) -> Vec<usize> {
    let mut frames = Vec::new();
    let mut t = rng.random_range(0..min_gap.max(1));
    while t < len && frames.len() < max_strokes {
        frames.push(t);
        t += min_gap + rng.random_range(0..=min_gap);
    }
    frames
}

/// Frame owner under the window geometry: each stroke owns its clipped
/// window, and two overlapping neighbours split at the floored midpoint
/// (kept strictly after the earlier peak).
pub fn frame_labels(strokes: &[(usize, usize)], len: usize, max_len: usize) -> Vec<Option<usize>> {
    let below = max_len / 2;
    let above = max_len - below;
    let overlap = |q: usize, p: usize| (q + above).min(len) > p.saturating_sub(below);
    let cut = |q: usize, p: usize| ((q + p) / 2).max(q + 1);
    let mut out = vec![None; len];
    for (i, &(p, label)) in strokes.iter().enumerate() {
        let lo = match i.checked_sub(1).map(|j| strokes[j].0) {
            Some(q) if overlap(q, p) => cut(q, p),
            _ => p.saturating_sub(below),
        };
        let hi = match strokes.get(i + 1).map(|s| s.0) {
            Some(n) if overlap(p, n) => cut(p, n),
            _ => (p + above).min(len),
        };
        for slot in &mut out[lo..hi] {
            *slot = Some(label);
        }
    }
    out
}

pub type Run = (usize, usize, usize); // label, start, end

pub fn runs(labels: &[Option<usize>]) -> Vec<Run> {
    let mut out: Vec<Run> = Vec::new();
    let mut t = 0;
    while t < labels.len() {
        match labels[t] {
            None => t += 1,
            Some(l) => {
                let s = t;
                while t < labels.len() && labels[t] == Some(l) {
                    t += 1;
                }
                out.push((l, s, t));
            }
        }
    }
    out
}

pub fn frame_accuracy(pred: &[Option<usize>], gt: &[Option<usize>]) -> f64 {
    let hits = pred.iter().zip(gt).filter(|(a, b)| a == b).count();
    100.0 * hits as f64 / gt.len() as f64
}

fn lev(a: &[usize], b: &[usize], memo: &mut HashMap<(usize, usize), usize>) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    if let Some(&v) = memo.get(&(a.len(), b.len())) {
        return v;
    }
    let v = (lev(&a[1..], b, memo) + 1)
        .min(lev(a, &b[1..], memo) + 1)
        .min(lev(&a[1..], &b[1..], memo) + usize::from(a[0] != b[0]));
    memo.insert((a.len(), b.len()), v);
    v
}

pub fn edit_score(pred: &[Option<usize>], gt: &[Option<usize>]) -> f64 {
    let p: Vec<usize> = runs(pred).iter().map(|r| r.0).collect();
    let g: Vec<usize> = runs(gt).iter().map(|r| r.0).collect();
    let longest = p.len().max(g.len());
    if longest == 0 {
        return 100.0;
    }
    let d = lev(&p, &g, &mut HashMap::new());
    100.0 * (1.0 - d as f64 / longest as f64)
}

pub fn iou(a: Run, b: Run) -> f64 {
    let inter = a.2.min(b.2) as f64 - a.1.max(b.1) as f64;
    if inter <= 0.0 {
        return 0.0;
    }
    inter / (a.2.max(b.2) - a.1.min(b.1)) as f64
}

/// F1 under the best one-to-one matching, found by trying every assignment.
pub fn exhaustive_f1(pred: &[Option<usize>], gt: &[Option<usize>], threshold: f64) -> f64 {
    let p = runs(pred);
    let g = runs(gt);
    fn best(i: usize, p: &[Run], g: &[Run], used: &mut Vec<bool>, thr: f64) -> usize {
        if i == p.len() {
            return 0;
        }
        let mut top = best(i + 1, p, g, used, thr);
        for j in 0..g.len() {
            if !used[j] && g[j].0 == p[i].0 {
                let v = iou(p[i], g[j]);
                if v > 0.0 && v >= thr {
                    used[j] = true;
                    top = top.max(1 + best(i + 1, p, g, used, thr));
                    used[j] = false;
                }
            }
        }
        top
    }
    let tp = best(0, &p, &g, &mut vec![false; g.len()], threshold);
    let (fp, fn_) = (p.len() - tp, g.len() - tp);
    if tp + fp + fn_ == 0 {
        return 100.0;
    }
    100.0 * (2 * tp) as f64 / (2 * tp + fp + fn_) as f64
}

/// Random frame labelling of at most `max_runs` labelled segments.
pub fn random_labeling(rng: &mut impl Rng, len: usize, max_runs: usize, classes: usize) -> Vec<Option<usize>> {
    let k = rng.random_range(0..=max_runs);
    let mut cuts: Vec<usize> = (0..2 * k).map(|_| rng.random_range(0..=len)).collect();
    cuts.sort_unstable();
    let mut out = vec![None; len];
    for pair in cuts.chunks(2) {
        let label = rng.random_range(0..classes);
        for slot in &mut out[pair[0]..pair[1]] {
            *slot = Some(label);
        }
    }
    out
}

/// Softmax of `minmax(logits) + alpha * w`, then `-ln p[target]`.
pub fn fused_ce(logits: &[f64], w: &[f64], alpha: f64, target: usize) -> f64 {
    let lo = logits.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scores: Vec<f64> = logits
        .iter()
        .zip(w)
        .map(|(x, wi)| {
            let m = if hi > lo { (x - lo) / (hi - lo) } else { 0.5 };
            m + alpha * wi
        })
        .collect();
    let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = scores.iter().map(|s| (s - top).exp()).sum();
    -((scores[target] - top) - z.ln())
}

/// Relative error between two gradient vectors in the 2-norm.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-300)
}

/// Oracle tactic table: `(trigram, occurrences, wins)` sorted like the miner.
pub fn brute_tactics(rallies: &[stroketec::Rally], serve_only: bool, min_occ: usize) -> Vec<([String; 3], usize, usize)> {
    let mut table: Vec<([String; 3], usize, usize)> = Vec::new();
    for r in rallies {
        for k in 0..r.strokes.len().saturating_sub(2) {
            if serve_only && k > 0 {
                break;
            }
            let tri = [r.strokes[k].clone(), r.strokes[k + 1].clone(), r.strokes[k + 2].clone()];
            let perspective = if k % 2 == 0 { r.server } else { r.server.other() };
            let won = usize::from(perspective == r.winner);
            match table.iter_mut().find(|e| e.0 == tri) {
                Some(e) => {
                    e.1 += 1;
                    e.2 += won;
                }
                None => table.push((tri, 1, won)),
            }
        }
    }
    table.retain(|e| e.1 >= min_occ.max(1));
    table.sort_by(|a, b| {
        let ra = a.2 as f64 / a.1 as f64;
        let rb = b.2 as f64 / b.1 as f64;
        rb.partial_cmp(&ra).unwrap().then(b.1.cmp(&a.1)).then(a.0.cmp(&b.0))
    });
    table
}
