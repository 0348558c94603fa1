//! Three-stroke tactic mining.
//!
//! A tactic is a window of three consecutive strokes. Its perspective player
//! hits the first and third stroke of the window; an occurrence counts as a
//! win when that player's side wins the rally.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::A => Side::B,
            Side::B => Side::A,
        }
    }
}

/// Technique sequence of one point with its serve and outcome.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rally {
    pub rally_id: String,
    pub strokes: Vec<String>,
    pub server: Side,
    pub winner: Side,
}

impl Rally {
    /// Side that plays stroke `index` (0-based); the server plays even indices.
    pub fn hitter(&self, index: usize) -> Side {
        if index % 2 == 0 {
            self.server
        } else {
            self.server.other()
        }
    }
}

pub type Trigram = [String; 3];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TacticStat {
    pub trigram: Trigram,
    pub occurrences: usize,
    pub wins: usize,
    pub scoring_rate: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MineOptions {
    pub min_occurrences: usize,
    /// Only the window opened by the serve (strokes 1-3) is counted.
    pub serve_only: bool,
}

impl Default for MineOptions {
    fn default() -> Self {
        Self {
            min_occurrences: 5,
            serve_only: true,
        }
    }
}

/// Every counted window of a rally: `(start index, trigram, perspective won)`.
pub fn rally_windows<'a>(rally: &'a Rally, serve_only: bool) -> impl Iterator<Item = (usize, [&'a str; 3], bool)> + 'a {
    let count = rally.strokes.len().saturating_sub(2);
    let count = if serve_only { count.min(1) } else { count };
    (0..count).map(move |k| {
        let s = &rally.strokes;
        let trigram = [s[k].as_str(), s[k + 1].as_str(), s[k + 2].as_str()];
        (k, trigram, rally.hitter(k) == rally.winner)
    })
}

fn rank(a: &TacticStat, b: &TacticStat) -> Ordering {
    // compare wins/occurrences exactly by cross-multiplication
    let lhs = b.wins * a.occurrences;
    let rhs = a.wins * b.occurrences;
    lhs.cmp(&rhs)
        .then(b.occurrences.cmp(&a.occurrences))
        .then_with(|| a.trigram.cmp(&b.trigram))
}

fn collect<'a>(
    rallies: &'a [Rally],
    options: &MineOptions,
    keep: impl Fn(&[&'a str; 3]) -> bool,
) -> Vec<TacticStat> {
    let mut table: BTreeMap<[&str; 3], (usize, usize)> = BTreeMap::new();
    for rally in rallies {
        for (_, trigram, won) in rally_windows(rally, options.serve_only) {
            if keep(&trigram) {
                let entry = table.entry(trigram).or_default();
                entry.0 += 1;
                entry.1 += usize::from(won);
            }
        }
    }
    let mut stats: Vec<TacticStat> = table
        .into_iter()
        .filter(|(_, (occ, _))| *occ >= options.min_occurrences.max(1))
        .map(|(t, (occurrences, wins))| TacticStat {
            trigram: t.map(str::to_string),
            occurrences,
            wins,
            scoring_rate: wins as f64 / occurrences as f64,
        })
        .collect();
    stats.sort_by(rank);
    stats
}

/// Scoring rate of every trigram with at least `min_occurrences` occurrences,
/// best first (ties: more occurrences, then lexicographic).
pub fn mine_tactics(rallies: &[Rally], options: &MineOptions) -> Vec<TacticStat> {
    collect(rallies, options, |_| true)
}

/// [`mine_tactics`] restricted to windows opening with `prefix`.
pub fn conditional_followups(rallies: &[Rally], prefix: [&str; 2], options: &MineOptions) -> Vec<TacticStat> {
    collect(rallies, options, |t| t[0] == prefix[0] && t[1] == prefix[1])
}

pub fn tactics_csv(stats: &[TacticStat]) -> String {
    let mut out = String::from("tec_1,tec_2,tec_3,occurrences,wins,rate\n");
    for s in stats {
        out.push_str(&format!(
            "{},{},{},{},{},{:.6}\n",
            s.trigram[0], s.trigram[1], s.trigram[2], s.occurrences, s.wins, s.scoring_rate
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rally(id: &str, strokes: &[&str], server: Side, winner: Side) -> Rally {
        Rally {
            rally_id: id.into(),
            strokes: strokes.iter().map(|s| s.to_string()).collect(),
            server,
            winner,
        }
    }

    #[test]
    fn serve_short_topspin_rate() {
        let rallies = vec![
            rally("1", &["Serve", "Short", "Topspin", "Block"], Side::A, Side::A),
            rally("2", &["Serve", "Short", "Topspin"], Side::B, Side::B),
            rally("3", &["Serve", "Short", "Topspin", "Block", "Topspin"], Side::A, Side::B),
        ];
        let opts = MineOptions { min_occurrences: 1, serve_only: true };
        let stats = mine_tactics(&rallies, &opts);
        assert_eq!(stats.len(), 1);
        assert_eq!((stats[0].occurrences, stats[0].wins), (3, 2));
        assert!((stats[0].scoring_rate - 0.6667).abs() < 1e-4);
    }

    #[test]
    fn three_stroke_rally_has_one_window() {
        let r = rally("x", &["Serve", "Push", "Push"], Side::A, Side::B);
        assert_eq!(rally_windows(&r, false).count(), 1);
        assert_eq!(rally_windows(&r, true).count(), 1);
        let short = rally("y", &["Serve", "Push"], Side::A, Side::B);
        assert_eq!(rally_windows(&short, false).count(), 0);
    }

    #[test]
    fn perspective_follows_stroke_parity() {
        let r = rally("x", &["Serve", "Short", "Push", "Topspin"], Side::A, Side::B);
        let w: Vec<_> = rally_windows(&r, false).map(|(k, _, won)| (k, won)).collect();
        // window 0 is the server's (A) and loses, window 1 is B's and wins
        assert_eq!(w, vec![(0, false), (1, true)]);
    }

    #[test]
    fn min_occurrences_filters_and_ties_break_by_count_then_name() {
        let mut rallies = Vec::new();
        for i in 0..4 {
            rallies.push(rally(&format!("a{i}"), &["Serve", "Short", "Topspin"], Side::A, Side::A));
        }
        for i in 0..2 {
            rallies.push(rally(&format!("b{i}"), &["Serve", "Flick", "Block"], Side::A, Side::A));
            rallies.push(rally(&format!("c{i}"), &["Serve", "Flick", "Topspin"], Side::A, Side::A));
        }
        rallies.push(rally("d", &["Serve", "Push", "Push"], Side::A, Side::A));
        let stats = mine_tactics(&rallies, &MineOptions { min_occurrences: 2, serve_only: true });
        let names: Vec<&str> = stats.iter().map(|s| s.trigram[1].as_str()).collect();
        assert_eq!(names, vec!["Short", "Flick", "Flick"]);
        assert_eq!(stats[1].trigram[2], "Block");
    }

    #[test]
    fn followups_absent_prefix_is_empty() {
        let rallies = vec![rally("1", &["Serve", "Short", "Topspin"], Side::A, Side::A)];
        let opts = MineOptions { min_occurrences: 1, serve_only: false };
        assert!(conditional_followups(&rallies, ["Serve", "Push"], &opts).is_empty());
        assert_eq!(conditional_followups(&rallies, ["Serve", "Short"], &opts).len(), 1);
    }

    #[test]
    fn csv_layout() {
        let stats = vec![TacticStat {
            trigram: ["Serve".into(), "Short".into(), "Topspin".into()],
            occurrences: 3,
            wins: 2,
            scoring_rate: 2.0 / 3.0,
        }];
        assert_eq!(
            tactics_csv(&stats),
            "tec_1,tec_2,tec_3,occurrences,wins,rate\nServe,Short,Topspin,3,2,0.666667\n"
        );
    }
}
