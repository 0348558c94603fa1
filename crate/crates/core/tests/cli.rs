use std::path::Path;
use std::process::{Command, Output};

fn stroketec(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stroketec"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn generate(dir: &Path, rallies: &str, seed: &str) {
    ok(&stroketec(&["gen", "--out", "data", "--rallies", rallies, "--seed", seed], dir));
}

#[test]
fn gen_train_infer_eval_mine_closed_loop() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    generate(dir, "60", "3");
    for f in ["features.jsonl", "annotations.jsonl", "outcomes.jsonl", "synth_config.json", "manifest.json"] {
        assert!(dir.join("data").join(f).exists(), "missing {f}");
    }

    ok(&stroketec(
        &[
            "train", "--features", "data/features.jsonl", "--annotations", "data/annotations.jsonl",
            "--model", "model.json", "--epochs", "3", "--seg-epochs", "2",
        ],
        dir,
    ));
    let log = std::fs::read_to_string(dir.join("model.log.csv")).unwrap();
    assert!(log.lines().count() > 1);
    let manifest = json(&dir.join("model.manifest.json"));
    assert_eq!(manifest["subcommand"], "train");
    assert_eq!(manifest["outputs"]["model"], "model.json");

    ok(&stroketec(&["infer", "--model", "model.json", "--features", "data/features.jsonl", "--out", "pred.jsonl"], dir));
    let predictions = std::fs::read_to_string(dir.join("pred.jsonl")).unwrap();
    assert_eq!(predictions.lines().count(), 60);
    assert_eq!(json(&dir.join("pred.manifest.json"))["subcommand"], "infer");

    let out = stroketec(&["eval", "--predictions", "pred.jsonl", "--annotations", "data/annotations.jsonl", "--out", "report.json"], dir);
    ok(&out);
    let report = json(&dir.join("report.json"));
    assert_eq!(report["per_rally"].as_array().unwrap().len(), 60);
    let acc = report["aggregate"]["acc"].as_f64().unwrap();
    assert!((0.0..=100.0).contains(&acc));
    let csv = std::fs::read_to_string(dir.join("report.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("ALL,")));
    assert!(csv.lines().any(|l| l.starts_with("MACRO,")));
    assert!(String::from_utf8_lossy(&out.stdout).contains("F1@10"));

    // mining straight from the annotations and from the predictions
    for (strokes, table) in [("data/annotations.jsonl", "gt.csv"), ("pred.jsonl", "pred.csv")] {
        ok(&stroketec(
            &[
                "mine", "--strokes", strokes, "--outcomes", "data/outcomes.jsonl", "--out", table,
                "--min-occurrences", "1", "--prefix", "Serve,Short",
            ],
            dir,
        ));
        assert!(dir.join(table).exists());
        let report = json(&dir.join(table).with_extension("json"));
        assert_eq!(report["rallies"], 60);
        assert_eq!(report["followups"]["prefix"], serde_json::json!(["Serve", "Short"]));
    }
    let gt = std::fs::read_to_string(dir.join("gt.csv")).unwrap();
    assert!(gt.lines().skip(1).all(|l| l.starts_with("Serve")), "serve_only defaults to true:\n{gt}");
}

#[test]
fn serve_only_can_be_switched_off() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    generate(dir, "30", "5");
    let mine = |flag: &str, out: &str| {
        ok(&stroketec(
            &["mine", "--strokes", "data/annotations.jsonl", "--outcomes", "data/outcomes.jsonl", "--out", out, "--min-occurrences", "1", flag],
            dir,
        ))
    };
    mine("--serve-only=false", "all.csv");
    mine("--serve-only", "serve.csv");
    let rows = |f: &str| std::fs::read_to_string(dir.join(f)).unwrap().lines().count();
    assert!(rows("all.csv") > rows("serve.csv"));
}

#[test]
fn disabling_the_graph_gives_a_different_model() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    generate(dir, "30", "6");
    let train = |model: &str, extra: &[&str]| {
        let mut args = vec![
            "train", "--features", "data/features.jsonl", "--annotations", "data/annotations.jsonl",
            "--model", model, "--epochs", "2", "--seg-epochs", "1",
        ];
        args.extend_from_slice(extra);
        ok(&stroketec(&args, dir));
    };
    train("full.json", &[]);
    train("nograph.json", &["--alpha", "0"]);
    let full = json(&dir.join("full.json"));
    let nograph = json(&dir.join("nograph.json"));
    assert_ne!(full, nograph);
    assert_eq!(nograph["hyperparams"]["alpha"], 0.0);
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = stroketec(&["train", "--bogus"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn malformed_record_reports_its_line() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(
        dir.join("strokes.jsonl"),
        "{\"rally_id\":\"a\",\"strokes\":[]}\n\n{not json\n",
    )
    .unwrap();
    std::fs::write(dir.join("outcomes.jsonl"), "").unwrap();
    let out = stroketec(&["mine", "--strokes", "strokes.jsonl", "--outcomes", "outcomes.jsonl", "--out", "t.csv"], dir);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("strokes.jsonl:3:"), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn invalid_hyperparameters_exit_with_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    generate(dir, "5", "7");
    let out = stroketec(
        &["train", "--features", "data/features.jsonl", "--annotations", "data/annotations.jsonl", "--model", "m.json", "--beta", "2"],
        dir,
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.join("m.json").exists());
}

#[test]
fn missing_model_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    generate(dir, "3", "8");
    let out = stroketec(&["infer", "--model", "absent.json", "--features", "data/features.jsonl", "--out", "p.jsonl"], dir);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn prefix_needs_two_techniques() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    generate(dir, "3", "9");
    let out = stroketec(
        &["mine", "--strokes", "data/annotations.jsonl", "--outcomes", "data/outcomes.jsonl", "--out", "t.csv", "--prefix", "Serve"],
        dir,
    );
    assert_eq!(out.status.code(), Some(2));
}
