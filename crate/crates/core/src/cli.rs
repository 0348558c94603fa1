//! `stroketec` command line: `gen`, `train`, `infer`, `eval` and `mine`.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 input-format
//! error, 4 training or numeric error. Each run writes a manifest with the
//! fully resolved configuration next to its main output.

use std::collections::{BTreeMap, HashMap};
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::classifier::{LabelSet, DEFAULT_TECHNIQUES};
use crate::error::{Error, Result};
use crate::io::{
    join_corpus, read_json, read_jsonl, write_json, write_jsonl, AnnotatedStroke, AnnotationRecord, FeatureRecord,
    OutcomeRecord, PredictionRecord, TechniqueRecord,
};
use crate::metrics::{evaluate_rally, EvalReport};
use crate::pipeline::{train, Hyperparams, PipelineModel, StrideMode};
use crate::synth::{generate, SynthConfig};
use crate::tactics::{conditional_followups, mine_tactics, tactics_csv, MineOptions, Rally};

#[derive(Debug, Parser)]
#[command(name = "stroketec", version, about = "Stroke technique recognition on per-frame feature series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic corpus (features, annotations, outcomes)
    Gen(GenArgs),
    /// Train the seg head, classifier and transition graph
    Train(TrainArgs),
    /// Recognise strokes in feature series with a trained model
    Infer(InferArgs),
    /// Score predictions against annotations
    Eval(EvalArgs),
    /// Mine three-stroke tactic scoring rates
    Mine(MineArgs),
}

#[derive(Debug, Args)]
struct GenArgs {
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Synthetic corpus configuration (JSON); defaults to the built-in table tennis setup
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    rallies: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dim: Option<usize>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    annotations: PathBuf,
    /// Output model file
    #[arg(long)]
    model: PathBuf,
    /// Per-epoch loss log (CSV); defaults to `<model>.log.csv`
    #[arg(long)]
    log: Option<PathBuf>,
    /// Comma-separated technique names
    #[arg(long, value_delimiter = ',')]
    labels: Option<Vec<String>>,
    #[arg(long, default_value_t = 8.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0.1)]
    beta: f64,
    /// Graph update stride fixed at beta (no uncertainty scaling)
    #[arg(long)]
    fixed_stride: bool,
    #[arg(long, default_value_t = 40)]
    max_segment_len: usize,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long)]
    seg_epochs: Option<usize>,
    #[arg(long, default_value_t = 0.01)]
    learning_rate: f64,
    #[arg(long)]
    seg_learning_rate: Option<f64>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct InferArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    features: PathBuf,
    /// Output prediction records (JSON lines)
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    annotations: PathBuf,
    /// Structured report (JSON)
    #[arg(long)]
    out: PathBuf,
    /// Flat report (CSV); defaults to the report path with a `.csv` extension
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long, default_value_t = 40)]
    max_segment_len: usize,
    /// Peak distance, in frames, for pairing predicted and annotated strokes
    #[arg(long, default_value_t = 4)]
    tolerance: usize,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MineArgs {
    /// Prediction or annotation records
    #[arg(long)]
    strokes: PathBuf,
    #[arg(long)]
    outcomes: PathBuf,
    /// Tactic table (CSV)
    #[arg(long)]
    out: PathBuf,
    /// Top-k report (JSON); defaults to the table path with a `.json` extension
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    top_k: usize,
    #[arg(long, default_value_t = 5)]
    min_occurrences: usize,
    /// Count only the window opened by the serve
    #[arg(long, num_args = 0..=1, default_value_t = true, default_missing_value = "true", action = clap::ArgAction::Set)]
    serve_only: bool,
    /// Two techniques, e.g. `Serve,Short`, for a follow-up table
    #[arg(long, value_delimiter = ',')]
    prefix: Option<Vec<String>>,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

/// Maps an error onto the documented exit codes.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 2,
        Error::Input(_) | Error::Format { .. } | Error::Load { .. } | Error::UnsupportedVersion { .. } | Error::Io { .. } => 3,
        Error::Training { .. } => 4,
    }
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match cli.command {
        Command::Gen(a) => run_gen(a),
        Command::Train(a) => run_train(a),
        Command::Infer(a) => run_infer(a),
        Command::Eval(a) => run_eval(a),
        Command::Mine(a) => run_mine(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn sibling(path: &Path, extension: &str) -> PathBuf {
    let mut name = path.file_stem().unwrap_or_default().to_os_string();
    name.push(".");
    name.push(extension);
    path.with_file_name(name)
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn write_manifest(path: &Path, subcommand: &str, config: serde_json::Value, inputs: serde_json::Value, outputs: serde_json::Value) -> Result<()> {
    let manifest = json!({
        "tool": "stroketec",
        "version": env!("CARGO_PKG_VERSION"),
        "subcommand": subcommand,
        "config": config,
        "inputs": inputs,
        "outputs": outputs,
    });
    write_json(path, &manifest)
}

fn run_gen(args: GenArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => read_json::<SynthConfig>(path)?,
        None => SynthConfig::table_tennis(),
    };
    if let Some(n) = args.rallies {
        config.rallies = n;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(d) = args.dim {
        config.dim = d;
    }
    let corpus = generate(&config)?;
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let features: Vec<FeatureRecord> = corpus.rallies.iter().map(|r| FeatureRecord::from_series(&r.series)).collect();
    let annotations: Vec<AnnotationRecord> = corpus
        .rallies
        .iter()
        .map(|r| AnnotationRecord {
            rally_id: r.series.rally_id.clone(),
            num_frames: Some(r.series.len()),
            strokes: r
                .strokes
                .iter()
                .map(|&(frame, label)| AnnotatedStroke {
                    frame,
                    technique: corpus.labels.name(label).to_string(),
                })
                .collect(),
        })
        .collect();
    let outcomes: Vec<OutcomeRecord> = corpus
        .rallies
        .iter()
        .map(|r| OutcomeRecord {
            rally_id: r.series.rally_id.clone(),
            server_side: r.server,
            winner_side: r.winner,
        })
        .collect();
    let paths = [
        ("features", args.out.join("features.jsonl")),
        ("annotations", args.out.join("annotations.jsonl")),
        ("outcomes", args.out.join("outcomes.jsonl")),
        ("synth_config", args.out.join("synth_config.json")),
    ];
    write_jsonl(&paths[0].1, &features)?;
    write_jsonl(&paths[1].1, &annotations)?;
    write_jsonl(&paths[2].1, &outcomes)?;
    write_json(&paths[3].1, &config)?;
    let outputs: BTreeMap<&str, String> = paths.iter().map(|(k, p)| (*k, display(p))).collect();
    write_manifest(
        &args.out.join("manifest.json"),
        "gen",
        serde_json::to_value(&config).expect("config serialises"),
        json!({ "config": args.config.as_deref().map(display) }),
        json!(outputs),
    )?;
    println!("generated {} rallies into {}", config.rallies, args.out.display());
    Ok(())
}

fn run_train(args: TrainArgs) -> Result<()> {
    let labels = match &args.labels {
        Some(names) => LabelSet::new(names.iter().cloned())?,
        None => LabelSet::new(DEFAULT_TECHNIQUES)?,
    };
    let defaults = Hyperparams::default();
    let hyperparams = Hyperparams {
        sigma: args.sigma,
        threshold: args.threshold,
        alpha: args.alpha,
        beta: args.beta,
        stride: if args.fixed_stride { StrideMode::Fixed } else { StrideMode::Adaptive },
        max_segment_len: args.max_segment_len,
        epochs: args.epochs,
        learning_rate: args.learning_rate,
        seg_epochs: args.seg_epochs.unwrap_or(defaults.seg_epochs),
        seg_learning_rate: args.seg_learning_rate.unwrap_or(defaults.seg_learning_rate),
        seed: args.seed,
        ..defaults
    };
    hyperparams.validate()?;
    let features: Vec<FeatureRecord> = read_jsonl(&args.features)?;
    let annotations: Vec<AnnotationRecord> = read_jsonl(&args.annotations)?;
    let corpus = join_corpus(features, &annotations, &labels)?;
    let (model, log) = train(&corpus, &labels, &hyperparams)?;
    model.save(&args.model)?;
    let log_path = args.log.clone().unwrap_or_else(|| sibling(&args.model, "log.csv"));
    std::fs::write(&log_path, log.to_csv()).map_err(|e| Error::io(&log_path, e))?;
    let manifest = args.manifest.clone().unwrap_or_else(|| sibling(&args.model, "manifest.json"));
    write_manifest(
        &manifest,
        "train",
        json!({ "labels": labels.names(), "hyperparams": hyperparams }),
        json!({ "features": display(&args.features), "annotations": display(&args.annotations) }),
        json!({ "model": display(&args.model), "log": display(&log_path) }),
    )?;
    if let Some(last) = log.classifier.last() {
        println!(
            "trained on {} rallies: final seg BCE {:.4}, classifier CE {:.4}, accuracy {:.2}%",
            corpus.len(),
            log.seg_bce.last().copied().unwrap_or(f64::NAN),
            last.mean_ce,
            100.0 * last.accuracy
        );
    }
    Ok(())
}

fn run_infer(args: InferArgs) -> Result<()> {
    let model = PipelineModel::load(&args.model)?;
    let features: Vec<FeatureRecord> = read_jsonl(&args.features)?;
    let mut records = Vec::with_capacity(features.len());
    for f in features {
        let seq = model.infer(&f.into_series()?)?;
        records.push(PredictionRecord::from_sequence(&seq, &model.labels));
    }
    write_jsonl(&args.out, &records)?;
    let manifest = args.manifest.clone().unwrap_or_else(|| sibling(&args.out, "manifest.json"));
    write_manifest(
        &manifest,
        "infer",
        json!({ "labels": model.labels.names(), "hyperparams": model.hyperparams }),
        json!({ "model": display(&args.model), "features": display(&args.features) }),
        json!({ "predictions": display(&args.out) }),
    )?;
    println!("wrote predictions for {} rallies to {}", records.len(), args.out.display());
    Ok(())
}

fn run_eval(args: EvalArgs) -> Result<()> {
    let predictions: Vec<PredictionRecord> = read_jsonl(&args.predictions)?;
    let annotations: Vec<AnnotationRecord> = read_jsonl(&args.annotations)?;
    let mut vocabulary: HashMap<String, usize> = HashMap::new();
    let mut intern = |name: &str| {
        let next = vocabulary.len();
        *vocabulary.entry(name.to_string()).or_insert(next)
    };
    let by_id: HashMap<&str, &PredictionRecord> = predictions.iter().map(|p| (p.rally_id.as_str(), p)).collect();
    let annotated: std::collections::HashSet<&str> = annotations.iter().map(|a| a.rally_id.as_str()).collect();
    if let Some(p) = predictions.iter().find(|p| !annotated.contains(p.rally_id.as_str())) {
        return Err(Error::input(format!("prediction for rally {} has no annotation", p.rally_id)));
    }
    let mut per_rally = Vec::with_capacity(annotations.len());
    for ann in &annotations {
        let pred = by_id.get(ann.rally_id.as_str());
        let len = pred
            .and_then(|p| p.num_frames)
            .or(ann.num_frames)
            .ok_or_else(|| Error::input(format!("rally {}: num_frames missing from both records", ann.rally_id)))?;
        let gt: Vec<(usize, usize)> = ann.strokes.iter().map(|s| (s.frame, intern(&s.technique))).collect();
        let segs: Vec<(usize, usize, usize, usize)> = pred
            .map(|p| {
                p.strokes
                    .iter()
                    .map(|s| (s.start, s.end, intern(&s.technique), s.peak_frame))
                    .collect()
            })
            .unwrap_or_default();
        per_rally.push(evaluate_rally(&ann.rally_id, len, &segs, &gt, args.max_segment_len, args.tolerance)?);
    }
    let report = EvalReport::from_rallies(per_rally);
    write_json(&args.out, &report)?;
    let csv_path = args.csv.clone().unwrap_or_else(|| args.out.with_extension("csv"));
    std::fs::write(&csv_path, report.to_csv()).map_err(|e| Error::io(&csv_path, e))?;
    let manifest = args.manifest.clone().unwrap_or_else(|| sibling(&args.out, "manifest.json"));
    write_manifest(
        &manifest,
        "eval",
        json!({ "max_segment_len": args.max_segment_len, "tolerance": args.tolerance }),
        json!({ "predictions": display(&args.predictions), "annotations": display(&args.annotations) }),
        json!({ "report": display(&args.out), "csv": display(&csv_path) }),
    )?;
    let a = &report.aggregate;
    println!(
        "acc {:.2}  edit {:.2}  F1@10 {:.2}  F1@25 {:.2}  F1@50 {:.2}  stroke acc {:.2}",
        a.acc, a.edit, a.f1_10, a.f1_25, a.f1_50, a.stroke_acc
    );
    Ok(())
}

fn run_mine(args: MineArgs) -> Result<()> {
    if let Some(p) = &args.prefix {
        if p.len() != 2 {
            return Err(Error::Config(format!("--prefix takes two techniques, got {}", p.len())));
        }
    }
    let strokes: Vec<TechniqueRecord> = read_jsonl(&args.strokes)?;
    let outcomes: Vec<OutcomeRecord> = read_jsonl(&args.outcomes)?;
    let by_id: HashMap<&str, &OutcomeRecord> = outcomes.iter().map(|o| (o.rally_id.as_str(), o)).collect();
    let rallies = strokes
        .into_iter()
        .map(|r| {
            let outcome = by_id
                .get(r.rally_id.as_str())
                .ok_or_else(|| Error::input(format!("rally {} has no outcome record", r.rally_id)))?;
            Ok(Rally {
                strokes: r.strokes.into_iter().map(|s| s.technique).collect(),
                server: outcome.server_side,
                winner: outcome.winner_side,
                rally_id: r.rally_id,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let options = MineOptions {
        min_occurrences: args.min_occurrences,
        serve_only: args.serve_only,
    };
    let stats = mine_tactics(&rallies, &options);
    std::fs::write(&args.out, tactics_csv(&stats)).map_err(|e| Error::io(&args.out, e))?;
    let followups = args.prefix.as_ref().map(|p| {
        let table = conditional_followups(&rallies, [p[0].as_str(), p[1].as_str()], &options);
        json!({ "prefix": p, "table": table })
    });
    let report_path = args.report.clone().unwrap_or_else(|| args.out.with_extension("json"));
    let top: Vec<_> = stats.iter().take(args.top_k).collect();
    write_json(
        &report_path,
        &json!({ "rallies": rallies.len(), "options": options, "top": top, "followups": followups }),
    )?;
    let manifest = args.manifest.clone().unwrap_or_else(|| sibling(&args.out, "manifest.json"));
    write_manifest(
        &manifest,
        "mine",
        json!({ "options": options, "top_k": args.top_k, "prefix": args.prefix }),
        json!({ "strokes": display(&args.strokes), "outcomes": display(&args.outcomes) }),
        json!({ "table": display(&args.out), "report": display(&report_path) }),
    )?;
    for s in stats.iter().take(args.top_k) {
        println!("{:>8.3}  {:>5}  {}", s.scoring_rate, s.occurrences, s.trigram.join(" "));
    }
    Ok(())
}
