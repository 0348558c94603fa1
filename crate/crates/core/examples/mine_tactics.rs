//! Three-stroke scoring rates on a synthetic season, compared with the rates
//! planted by the generator.

use stroketec::synth::{generate, SynthConfig};
use stroketec::tactics::{conditional_followups, mine_tactics, MineOptions, Rally};

fn main() -> stroketec::Result<()> {
    let config = SynthConfig { rallies: 3000, seed: 7, ..SynthConfig::table_tennis() };
    let corpus = generate(&config)?;
    let rallies: Vec<Rally> = corpus
        .rallies
        .iter()
        .map(|r| Rally {
            rally_id: r.series.rally_id.clone(),
            strokes: r.strokes.iter().map(|s| corpus.labels.name(s.1).to_string()).collect(),
            server: r.server,
            winner: r.winner,
        })
        .collect();

    let options = MineOptions { min_occurrences: 100, serve_only: true };
    println!("{:>6} {:>7} {:>6}  trigram", "rate", "planted", "n");
    for s in mine_tactics(&rallies, &options).iter().take(10) {
        let planted = config.win_prob([&s.trigram[0], &s.trigram[1], &s.trigram[2]]);
        println!("{:>6.3} {:>7.3} {:>6}  {}", s.scoring_rate, planted, s.occurrences, s.trigram.join(" "));
    }

    println!("\nafter Serve Short:");
    for s in conditional_followups(&rallies, ["Serve", "Short"], &options) {
        println!("{:>6.3} {:>6}  {}", s.scoring_rate, s.occurrences, s.trigram[2]);
    }
    Ok(())
}
