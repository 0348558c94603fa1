//! Event-signal segmentation on one synthetic rally: target signal, seg-head
//! probabilities, extracted events and the segment windows cut around them.

use stroketec::event_signal::{extract_events, form_segments, make_target_signal};
use stroketec::pipeline::{train_seg_stage, AnnotatedRally, Hyperparams};
use stroketec::synth::{generate, SynthConfig};

fn main() -> stroketec::Result<()> {
    let corpus = generate(&SynthConfig { rallies: 81, seed: 1, ..SynthConfig::table_tennis() })?;
    let mut rallies: Vec<AnnotatedRally> = corpus
        .rallies
        .into_iter()
        .map(|r| AnnotatedRally { series: r.series, strokes: r.strokes })
        .collect();
    let held_out = rallies.pop().unwrap();

    let hp = Hyperparams::default();
    let (head, bce) = train_seg_stage(&rallies, &hp)?;
    println!("seg head BCE per epoch: {:?}", bce.iter().map(|b| format!("{b:.4}")).collect::<Vec<_>>());

    let frames: Vec<usize> = held_out.strokes.iter().map(|s| s.0).collect();
    let target = make_target_signal(&frames, held_out.series.len(), hp.sigma)?;
    let probs = head.predict(&held_out.series);
    let events = extract_events(&probs, hp.threshold, hp.sigma);
    let segments = form_segments(&events, held_out.series.len(), hp.max_segment_len)?;

    println!("rally {} with {} frames", held_out.series.rally_id, held_out.series.len());
    println!("annotated peaks: {frames:?}");
    for (e, s) in events.iter().zip(&segments.segments) {
        println!(
            "event peak {:>4} (p={:.3}, target {:.3})  run [{}, {}]  segment [{}, {})",
            e.peak_frame,
            e.peak_prob,
            target.values()[e.peak_frame],
            e.start_frame,
            e.end_frame,
            s.start,
            s.end
        );
    }
    Ok(())
}
