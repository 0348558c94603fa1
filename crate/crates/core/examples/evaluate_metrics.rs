//! Segmentation metrics on a hand-made rally: one mislabelled stroke, one
//! missed stroke and one shifted boundary.

use stroketec::metrics::{evaluate_rally, EvalReport};

fn main() -> stroketec::Result<()> {
    // labels: 0 Serve, 1 Push, 2 Loop
    let gt = [(20, 0), (70, 1), (120, 2), (170, 1)];
    // (start, end, label, peak)
    let pred = [(0, 40, 0, 20), (50, 90, 2, 70), (104, 140, 2, 123)];
    let rally = evaluate_rally("demo", 200, &pred, &gt, 40, 4)?;
    println!(
        "acc {:.2}  edit {:.2}  F1@10 {:.2}  F1@25 {:.2}  F1@50 {:.2}  stroke acc {:.2}",
        rally.acc, rally.edit, rally.f1_10, rally.f1_25, rally.f1_50, rally.stroke_acc
    );

    let perfect = [(0, 40, 0, 20), (50, 90, 1, 70), (100, 140, 2, 120), (150, 190, 1, 170)];
    let report = EvalReport::from_rallies(vec![rally, evaluate_rally("exact", 200, &perfect, &gt, 40, 4)?]);
    print!("{}", report.to_csv());
    Ok(())
}
