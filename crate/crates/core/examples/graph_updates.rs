//! The technique graph: corpus initialisation, fusion with classifier logits
//! and the uncertainty-scaled update after a wrong prediction.

use stroketec::classifier::{argmax, uncertainty};
use stroketec::graph::{fuse, Node, TechniqueGraph};
use stroketec::LabelSet;

fn show(graph: &TechniqueGraph, labels: &LabelSet) {
    for (name, row) in TechniqueGraph::node_names(labels).iter().zip(graph.matrix()) {
        let cells: Vec<String> = row.iter().map(|w| format!("{w:.3}")).collect();
        println!("  {name:>6}: {}", cells.join(" "));
    }
}

fn main() -> stroketec::Result<()> {
    let labels = LabelSet::new(["Serve", "Short", "Flick", "Loop"])?;
    let sequences: Vec<Vec<String>> = [
        "Serve Short Short Flick Loop",
        "Serve Short Flick Loop Loop",
        "Serve Loop Loop",
        "Serve Short Short Short",
    ]
    .iter()
    .map(|s| s.split(' ').map(String::from).collect())
    .collect();
    let mut graph = TechniqueGraph::init_from_named(&sequences, &labels)?;
    println!("initial graph (rows: previous technique):");
    show(&graph, &labels);

    // after a Short, the classifier leans to Loop but the graph favours Short
    let prev = Node::Label(1);
    let logits = [-1.0, 0.9, 0.2, 1.0];
    for alpha in [0.0, 1.0] {
        let p = fuse(&logits, graph.get_weights(prev)?, alpha);
        println!("alpha {alpha}: {} ({:?})", labels.name(argmax(&p)), p.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>());
    }

    // the true label was Flick: shift weight away from the wrong guess
    let u = uncertainty(&logits);
    graph.update_weights(prev, 3, 2, 0.1, u)?;
    println!("after one update with u = {u:.3}:");
    show(&graph, &labels);
    Ok(())
}
