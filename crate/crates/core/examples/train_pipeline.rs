//! Trains the full pipeline, saves and reloads the model, and decodes a
//! held-out rally.
//!
//! Usage: `cargo run --release --example train_pipeline [model.json]`

use stroketec::pipeline::{train, AnnotatedRally, Hyperparams, PipelineModel};
use stroketec::synth::{generate, SynthConfig};

fn main() -> stroketec::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| std::env::temp_dir().join("stroketec_model.json").display().to_string());
    let corpus = generate(&SynthConfig { rallies: 240, seed: 2, ..SynthConfig::table_tennis() })?;
    let labels = corpus.labels.clone();
    let rallies: Vec<AnnotatedRally> = corpus
        .rallies
        .into_iter()
        .map(|r| AnnotatedRally { series: r.series, strokes: r.strokes })
        .collect();
    let (train_set, test_set) = rallies.split_at(200);

    let hp = Hyperparams { epochs: 8, ..Hyperparams::default() };
    let (model, log) = train(train_set, &labels, &hp)?;
    for e in &log.classifier {
        println!("epoch {:>2}  CE {:.4}  acc {:.3}  graph updates {}", e.epoch, e.mean_ce, e.accuracy, e.graph_updates);
    }

    model.save(path.as_ref())?;
    let model = PipelineModel::load(path.as_ref())?;
    println!("saved and reloaded {path}");

    let rally = &test_set[0];
    let seq = model.infer(&rally.series)?;
    let truth: Vec<&str> = rally.strokes.iter().map(|s| labels.name(s.1)).collect();
    let predicted: Vec<&str> = seq.strokes.iter().map(|s| labels.name(s.label)).collect();
    println!("truth:     {}", truth.join(" "));
    println!("predicted: {}", predicted.join(" "));
    Ok(())
}
