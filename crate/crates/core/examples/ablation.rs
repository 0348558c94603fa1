//! Trains the full model and its two ablations on synthetic corpora and
//! compares stroke-label accuracy on held-out rallies.
//!
//! ```bash
//! cargo run --release -p stroketec --example ablation -- [seeds...]
//! ```

use std::time::Instant;

use stroketec::metrics::{stroke_counts, StrokeCounts};
use stroketec::pipeline::{
    train_classifier_stage, train_seg_stage, AnnotatedRally, Hyperparams, PipelineModel, StrideMode,
};
use stroketec::synth::{generate, SynthConfig, SynthRally};

const TRAIN_RALLIES: usize = 500;
const TEST_RALLIES: usize = 500;

fn annotated(rallies: &[SynthRally]) -> Vec<AnnotatedRally> {
    rallies
        .iter()
        .map(|r| AnnotatedRally { series: r.series.clone(), strokes: r.strokes.clone() })
        .collect()
}

/// Accuracy in percent of each variant: full, fixed stride, no graph.
fn run_seed(seed: u64) -> stroketec::Result<[f64; 3]> {
    // One corpus, split: class means are shared, rally noise is independent.
    let config = SynthConfig { seed, rallies: TRAIN_RALLIES + TEST_RALLIES, ..SynthConfig::table_tennis() };
    let corpus = generate(&config)?;
    let (train_part, test_part) = corpus.rallies.split_at(TRAIN_RALLIES);
    let train_set = annotated(train_part);

    let base = Hyperparams { seed, ..Hyperparams::default() };
    let (seg_head, _) = train_seg_stage(&train_set, &base)?;

    let variants = [
        base.clone(),
        Hyperparams { stride: StrideMode::Fixed, ..base.clone() },
        Hyperparams { alpha: 0.0, ..base.clone() },
    ];
    let mut out = [0.0; 3];
    for (slot, hp) in out.iter_mut().zip(variants) {
        let (classifier, graph, _) = train_classifier_stage(&train_set, &corpus.labels, &hp)?;
        let model = PipelineModel {
            labels: corpus.labels.clone(),
            hyperparams: hp,
            seg_head: seg_head.clone(),
            classifier,
            graph,
        };
        let mut total = StrokeCounts::default();
        for r in test_part {
            let seq = model.infer(&r.series)?;
            let pred: Vec<(usize, usize)> = seq.strokes.iter().map(|s| (s.peak_frame, s.label)).collect();
            let c = stroke_counts(&pred, &r.strokes, 4);
            total.ground_truth += c.ground_truth;
            total.predicted += c.predicted;
            total.matched += c.matched;
            total.correct += c.correct;
        }
        *slot = total.accuracy();
    }
    Ok(out)
}

fn main() -> stroketec::Result<()> {
    let mut seeds: Vec<u64> = std::env::args().skip(1).filter_map(|s| s.parse().ok()).collect();
    if seeds.is_empty() {
        seeds = (0..5).collect();
    }
    let started = Instant::now();
    let mut ordered = 0;
    let mut margin = 0.0;
    println!("seed      full    w/o U  w/o grh");
    for &seed in &seeds {
        let [full, fixed, none] = run_seed(seed)?;
        println!("{seed:4}  {full:7.2}  {fixed:7.2}  {none:7.2}");
        if full >= fixed && fixed >= none {
            ordered += 1;
        }
        margin += full - none;
    }
    println!(
        "ordering held on {ordered}/{} seeds, mean full - (w/o grh) = {:.2} pp, {:.1?}",
        seeds.len(),
        margin / seeds.len() as f64,
        started.elapsed()
    );
    Ok(())
}
