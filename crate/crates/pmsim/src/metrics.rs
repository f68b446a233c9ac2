//! Market scoring and communication measures.
//!
//! Markets are scored by the logarithmic error of the final price against
//! the realised value, with the price clamped into `[1e-15, 1-1e-15]` so
//! the error is capped near 34.54. A market "crashes" when its log error
//! exceeds 20. Text measures compare each trader's public comment with the
//! private reasoning from the same round.

use crate::engine::Transcript;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Price clamp for the logarithmic error.
pub const PRICE_EPSILON: f64 = 1e-15;

/// Markets with log error above this value count as crashed.
pub const CRASH_THRESHOLD: f64 = 20.0;

/// Logarithmic error of price `p` against realised value `y` in {0,1}.
pub fn log_error(p: f64, y: f64) -> f64 {
    let p = p.clamp(PRICE_EPSILON, 1.0 - PRICE_EPSILON);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// Squared error of price `p` against realised value `y`; no clamp.
pub fn squared_error(p: f64, y: f64) -> f64 {
    (p - y) * (p - y)
}

/// Per-market scores plus the treatment columns carried into analysis CSVs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketScore {
    pub market_id: String,
    pub structure: String,
    pub rounds: u32,
    pub initial_price: f64,
    pub objective: String,
    pub comments_allowed: bool,
    pub disclosure: bool,
    pub team: String,
    pub seed: u64,
    pub final_price: f64,
    pub outcome_value: f64,
    pub log_error: f64,
    pub squared_error: f64,
    pub crashed: bool,
    pub volume: u64,
    pub profits: Vec<f64>,
}

impl MarketScore {
    pub fn from_transcript(t: &Transcript) -> MarketScore {
        Self::from_transcript_with(t, CRASH_THRESHOLD)
    }

    pub fn from_transcript_with(t: &Transcript, crash_threshold: f64) -> MarketScore {
        let log_err = log_error(t.final_price, t.outcome_value);
        MarketScore {
            market_id: t.market_id.clone(),
            structure: t.structure_label.clone(),
            rounds: t.rounds,
            initial_price: t.initial_price,
            objective: t.objective.label().to_string(),
            comments_allowed: t.comments_allowed,
            disclosure: t.disclosure,
            team: t.team_label.clone(),
            seed: t.seed,
            final_price: t.final_price,
            outcome_value: t.outcome_value,
            log_error: log_err,
            squared_error: squared_error(t.final_price, t.outcome_value),
            crashed: log_err > crash_threshold,
            volume: t.volume(),
            profits: t.profits.clone(),
        }
    }
}

/// One aggregated row of the outcome table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub group: String,
    pub n: usize,
    pub mean_log_error: f64,
    pub se_log_error: f64,
    pub median_log_error: f64,
    pub mean_squared_error: f64,
    pub se_squared_error: f64,
    pub crash_rate: f64,
    pub mean_volume: f64,
}

/// Groups scores by a key and aggregates each group. Groups come out sorted
/// by key; empty input gives no rows.
pub fn summarize<K: Ord + std::fmt::Debug>(
    scores: &[MarketScore],
    key: impl Fn(&MarketScore) -> K,
) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<K, Vec<&MarketScore>> = BTreeMap::new();
    for s in scores {
        groups.entry(key(s)).or_default().push(s);
    }
    groups
        .into_iter()
        .map(|(k, members)| {
            let n = members.len();
            let mut log_errors: Vec<f64> = members.iter().map(|m| m.log_error).collect();
            log_errors.sort_by(f64::total_cmp);
            let mean_log = log_errors.iter().sum::<f64>() / n as f64;
            let median_log = if n % 2 == 1 {
                log_errors[n / 2]
            } else {
                (log_errors[n / 2 - 1] + log_errors[n / 2]) / 2.0
            };
            let mse = members.iter().map(|m| m.squared_error).sum::<f64>() / n as f64;
            let standard_error = |values: &[f64], mean: f64| {
                if n > 1 {
                    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                        / (n - 1) as f64;
                    (var / n as f64).sqrt()
                } else {
                    0.0
                }
            };
            let sq_errors: Vec<f64> = members.iter().map(|m| m.squared_error).collect();
            SummaryRow {
                group: format!("{k:?}"),
                n,
                mean_log_error: mean_log,
                se_log_error: standard_error(&log_errors, mean_log),
                median_log_error: median_log,
                mean_squared_error: mse,
                se_squared_error: standard_error(&sq_errors, mse),
                crash_rate: members.iter().filter(|m| m.crashed).count() as f64 / n as f64,
                mean_volume: members.iter().map(|m| m.volume as f64).sum::<f64>() / n as f64,
            }
        })
        .collect()
}

fn tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Cosine similarity of bag-of-words count vectors over lowercased
/// alphanumeric tokens; zero when either text has no tokens.
pub fn cosine_similarity(a: &str, b: &str) -> f64 {
    let mut counts_a: BTreeMap<String, f64> = BTreeMap::new();
    for t in tokens(a) {
        *counts_a.entry(t).or_insert(0.0) += 1.0;
    }
    let mut counts_b: BTreeMap<String, f64> = BTreeMap::new();
    for t in tokens(b) {
        *counts_b.entry(t).or_insert(0.0) += 1.0;
    }
    if counts_a.is_empty() || counts_b.is_empty() {
        return 0.0;
    }
    let dot: f64 = counts_a
        .iter()
        .filter_map(|(t, ca)| counts_b.get(t).map(|cb| ca * cb))
        .sum();
    let norm = |m: &BTreeMap<String, f64>| m.values().map(|c| c * c).sum::<f64>().sqrt();
    dot / (norm(&counts_a) * norm(&counts_b))
}

/// Words in the private text minus words in the public text, by whitespace
/// tokenisation.
pub fn word_gap(private: &str, public: &str) -> i64 {
    private.split_whitespace().count() as i64 - public.split_whitespace().count() as i64
}

/// Distance between a trader's actual signal and the value an external
/// judge read out of his public message: 0 truthful, 0.5 withheld, 1 lie.
pub fn deception_distance(actual: f64, judged: f64) -> f64 {
    (actual - judged).abs()
}

/// One public/private message pair from a market round.
#[derive(Debug, Clone, PartialEq)]
pub struct MessagePair {
    pub round: u32,
    pub trader: usize,
    pub public_text: String,
    pub private_text: String,
}

/// Pairs each recorded comment with the same round's private reasoning.
pub fn message_pairs(t: &Transcript) -> Vec<MessagePair> {
    t.comments
        .iter()
        .map(|c| {
            let private = t
                .reasonings
                .iter()
                .find(|r| r.round == c.round && r.trader == c.trader)
                .map(|r| r.text.clone())
                .unwrap_or_default();
            MessagePair {
                round: c.round,
                trader: c.trader,
                public_text: c.text.clone(),
                private_text: private,
            }
        })
        .collect()
}

/// A row of the external deception-label file. The second judgment is
/// present for structures where traders hold two signals.
#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct DeceptionLabel {
    pub market_id: String,
    pub round: u32,
    /// 1-based trader seat, as in the label file.
    pub trader: usize,
    pub judged_value: f64,
    #[serde(default)]
    pub judged_value_2: Option<f64>,
}

/// Reads a deception-label file with columns
/// `market_id,round,trader,judged_value[,judged_value_2]`.
pub fn read_labels_csv(path: &std::path::Path) -> Result<Vec<DeceptionLabel>, csv::Error> {
    let mut reader = csv::Reader::from_path(path)?;
    reader.deserialize().collect()
}

/// Joins judged labels with actual signal values. `actuals` maps
/// `(market_id, trader)` to the trader's signal realisations; rows without
/// a match are skipped and counted.
pub fn deception_distances(
    labels: &[DeceptionLabel],
    actuals: impl Fn(&str, usize) -> Option<Vec<f64>>,
) -> (Vec<f64>, usize) {
    let mut distances = Vec::new();
    let mut skipped = 0;
    for label in labels {
        let Some(actual) = actuals(&label.market_id, label.trader) else {
            skipped += 1;
            continue;
        };
        let judged: Vec<f64> = std::iter::once(label.judged_value)
            .chain(label.judged_value_2)
            .collect();
        if judged.len() != actual.len() {
            skipped += 1;
            continue;
        }
        let d = actual
            .iter()
            .zip(&judged)
            .map(|(a, j)| deception_distance(*a, *j))
            .sum::<f64>()
            / actual.len() as f64;
        distances.push(d);
    }
    (distances, skipped)
}
