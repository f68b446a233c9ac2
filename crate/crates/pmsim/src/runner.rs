//! Experiment grid runner: expansion, parallel execution, persistence.
//!
//! A grid file names the treatment levels per dimension and the teams; the
//! runner expands the full factorial, derives one stable seed per market
//! from the base seed and the market id (so adding cells never shifts
//! existing seeds), runs markets on a work-stealing pool, and appends to
//! `trades.csv` and `markets.csv` plus one transcript file per market.
//! Reruns skip market ids that already appear in `markets.csv`.

use crate::agents::{Agent, MyopicOracle, NoiseAgent, RemoteAgent, RemoteClientConfig, TokenBucket};
use crate::engine::{run_market, Clock, MarketConfig, Transcript};
use crate::knowledge::{make_structure, InfoStructure, StructureFile, StructureId};
use crate::lmsr::{DEFAULT_BETA, DEFAULT_PRICE_CLAMP};
use crate::metrics::{summarize, MarketScore, SummaryRow};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Engine(#[from] crate::engine::EngineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimpleAgentKind {
    Oracle,
    Noise,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AgentSpec {
    Simple(SimpleAgentKind),
    Remote(RemoteClientConfig),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TeamSpec {
    pub label: String,
    pub agents: Vec<AgentSpec>,
    /// Intelligence indices used by the disclosure block; falls back to the
    /// remote configs' own values when absent.
    #[serde(default)]
    pub intelligences: Option<Vec<f64>>,
}

impl TeamSpec {
    pub fn oracle() -> TeamSpec {
        TeamSpec {
            label: "oracle".into(),
            agents: vec![AgentSpec::Simple(SimpleAgentKind::Oracle); 3],
            intelligences: None,
        }
    }

    fn has_remote(&self) -> bool {
        self.agents.iter().any(|a| matches!(a, AgentSpec::Remote(_)))
    }

    fn resolved_intelligences(&self) -> Option<Vec<f64>> {
        if self.intelligences.is_some() {
            return self.intelligences.clone();
        }
        let iqs: Vec<f64> = self
            .agents
            .iter()
            .map(|a| match a {
                AgentSpec::Remote(c) => c.intelligence.unwrap_or(0.0),
                AgentSpec::Simple(_) => 0.0,
            })
            .collect();
        iqs.iter().any(|&v| v != 0.0).then_some(iqs)
    }
}

/// The full factorial experiment description, loadable from a TOML file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentGrid {
    pub structures: Vec<StructureId>,
    pub rounds: Vec<u32>,
    pub objectives: Vec<crate::agents::Objective>,
    pub comments: Vec<bool>,
    pub initial_prices: Vec<f64>,
    pub disclosure: Vec<bool>,
    pub teams: Vec<TeamSpec>,
    #[serde(default = "one")]
    pub repetitions: u32,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_cash")]
    pub starting_cash: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_clamp")]
    pub price_clamp: f64,
}

fn one() -> u32 {
    1
}
fn default_cash() -> f64 {
    1000.0
}
fn default_beta() -> f64 {
    DEFAULT_BETA
}
fn default_clamp() -> f64 {
    DEFAULT_PRICE_CLAMP
}

impl ExperimentGrid {
    /// The benchmark factorial: 4 structures x 3 durations x 2 objectives x
    /// 2 comment settings x 3 initial prices, disclosure off.
    pub fn paper_first_wave(teams: Vec<TeamSpec>, base_seed: u64) -> ExperimentGrid {
        ExperimentGrid {
            structures: StructureId::ALL.to_vec(),
            rounds: vec![3, 6, 9],
            objectives: vec![
                crate::agents::Objective::Myopic,
                crate::agents::Objective::Strategic,
            ],
            comments: vec![false, true],
            initial_prices: vec![0.3, 0.5, 0.7],
            disclosure: vec![false],
            teams,
            repetitions: 1,
            base_seed,
            starting_cash: 1000.0,
            beta: DEFAULT_BETA,
            price_clamp: DEFAULT_PRICE_CLAMP,
        }
    }

    pub fn from_toml(text: &str) -> Result<ExperimentGrid, RunnerError> {
        toml::from_str(text).map_err(|e| RunnerError::InvalidGrid(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("grids serialise")
    }

    pub fn cardinality(&self) -> usize {
        self.structures.len()
            * self.rounds.len()
            * self.objectives.len()
            * self.comments.len()
            * self.initial_prices.len()
            * self.disclosure.len()
            * self.teams.len()
            * self.repetitions as usize
    }
}

/// One expanded market: configuration plus the team that plays it.
#[derive(Debug, Clone)]
pub struct MarketPlan {
    pub config: MarketConfig,
    pub team: TeamSpec,
    pub price_clamp: f64,
}

/// 64-bit stable hash (FNV-1a with a splitmix finaliser); never changes
/// across runs or platforms, so seeds are reproducible forever.
pub fn stable_hash(base: u64, text: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325 ^ base.wrapping_mul(0x9e3779b97f4a7c15);
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    // splitmix64 finaliser
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d049bb133111eb);
    h ^ (h >> 31)
}

/// Deterministically enumerates every market in the grid.
pub fn expand_grid(grid: &ExperimentGrid) -> Result<Vec<MarketPlan>, RunnerError> {
    if grid.cardinality() == 0 {
        return Err(RunnerError::InvalidGrid(
            "empty grid: every dimension needs at least one level".into(),
        ));
    }
    for team in &grid.teams {
        if team.agents.len() != 3 {
            return Err(RunnerError::InvalidGrid(format!(
                "team {} must have exactly 3 members",
                team.label
            )));
        }
    }
    let mut plans = Vec::with_capacity(grid.cardinality());
    for &structure_id in &grid.structures {
        for &rounds in &grid.rounds {
            for &objective in &grid.objectives {
                for &comments in &grid.comments {
                    for &price in &grid.initial_prices {
                        for &disclosure in &grid.disclosure {
                            for team in &grid.teams {
                                for rep in 0..grid.repetitions {
                                    let market_id = format!(
                                        "{}-r{}-p{}-{}-{}-{}-{}-{}",
                                        structure_id.label(),
                                        rounds,
                                        price,
                                        objective.label(),
                                        if comments { "c1" } else { "c0" },
                                        if disclosure { "d1" } else { "d0" },
                                        team.label,
                                        rep
                                    );
                                    let mut config = MarketConfig::new(
                                        make_structure(structure_id),
                                        rounds,
                                        price,
                                    );
                                    config.market_id = market_id.clone();
                                    config.comments_allowed = comments;
                                    config.objective = objective;
                                    config.disclosure = disclosure;
                                    config.beta = grid.beta;
                                    config.starting_cash = grid.starting_cash;
                                    config.seed = stable_hash(grid.base_seed, &market_id);
                                    config.team_label = team.label.clone();
                                    config.intelligences = team.resolved_intelligences();
                                    plans.push(MarketPlan {
                                        config,
                                        team: team.clone(),
                                        price_clamp: grid.price_clamp,
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(plans)
}

/// Instantiates the team for one market. Noise agents are seeded from the
/// market seed and seat so reruns are identical.
pub fn build_agents(
    plan: &MarketPlan,
    structure: &InfoStructure,
    limiters: &BTreeMap<String, Arc<TokenBucket>>,
) -> Vec<Box<dyn Agent>> {
    plan.team
        .agents
        .iter()
        .enumerate()
        .map(|(seat, spec)| match spec {
            AgentSpec::Simple(SimpleAgentKind::Oracle) => Box::new(MyopicOracle::new(
                structure.clone(),
                seat,
                plan.price_clamp,
            )) as Box<dyn Agent>,
            AgentSpec::Simple(SimpleAgentKind::Noise) => Box::new(NoiseAgent::new(
                stable_hash(plan.config.seed, &format!("seat{seat}")),
            )),
            AgentSpec::Remote(config) => {
                let limiter = limiters.get(&config.endpoint).cloned();
                Box::new(RemoteAgent::new(config.clone(), limiter))
            }
        })
        .collect()
}

/// Shared rate limiters, one per distinct endpoint that requests one.
pub fn build_limiters(plans: &[MarketPlan]) -> BTreeMap<String, Arc<TokenBucket>> {
    let mut limiters = BTreeMap::new();
    for plan in plans {
        for spec in &plan.team.agents {
            if let AgentSpec::Remote(c) = spec {
                if let Some(rpm) = c.requests_per_minute {
                    limiters
                        .entry(c.endpoint.clone())
                        .or_insert_with(|| Arc::new(TokenBucket::new(rpm)));
                }
            }
        }
    }
    limiters
}

#[derive(Debug, Default)]
pub struct RunStats {
    pub executed: usize,
    pub skipped: usize,
    pub failed: Vec<(String, String)>,
}

/// Runs every plan not already present in `markets.csv`, with the given
/// worker count. Each market writes its own transcript file on completion;
/// the CSVs are rewritten in canonical market-id order at the end, so the
/// output is independent of scheduling.
pub fn run_experiment(
    plans: &[MarketPlan],
    parallelism: usize,
    out_dir: &Path,
) -> Result<(Vec<MarketScore>, RunStats), RunnerError> {
    fs::create_dir_all(out_dir.join("transcripts"))?;
    let markets_path = out_dir.join("markets.csv");
    let trades_path = out_dir.join("trades.csv");

    let existing = read_existing_ids(&markets_path)?;
    let mut stats = RunStats::default();
    let todo: Vec<&MarketPlan> = plans
        .iter()
        .filter(|p| !existing.contains(&p.config.market_id))
        .collect();
    stats.skipped = plans.len() - todo.len();

    let limiters = build_limiters(plans);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| RunnerError::InvalidGrid(e.to_string()))?;

    let results: Vec<(String, Result<Transcript, String>)> = pool.install(|| {
        todo.par_iter()
            .map(|plan| {
                let id = plan.config.market_id.clone();
                let outcome = run_one(plan, &limiters, out_dir);
                (id, outcome)
            })
            .collect()
    });

    let mut transcripts = Vec::new();
    for (id, outcome) in results {
        match outcome {
            Ok(t) => {
                if t.conservation_residual.abs() > 1e-6 {
                    log::warn!(
                        "market {id}: conservation residual {}",
                        t.conservation_residual
                    );
                }
                transcripts.push(t);
                stats.executed += 1;
            }
            Err(e) => {
                log::error!("market {id} failed: {e}");
                stats.failed.push((id, e));
            }
        }
    }

    let scores: Vec<MarketScore> = transcripts.iter().map(MarketScore::from_transcript).collect();
    append_markets_csv(&markets_path, &scores)?;
    append_trades_csv(&trades_path, &transcripts)?;
    canonicalize_csv(&markets_path)?;
    canonicalize_csv(&trades_path)?;
    Ok((scores, stats))
}

fn run_one(
    plan: &MarketPlan,
    limiters: &BTreeMap<String, Arc<TokenBucket>>,
    out_dir: &Path,
) -> Result<Transcript, String> {
    let structure = plan.config.structure.clone();
    let mut agents = build_agents(plan, &structure, limiters);
    let clock = if plan.team.has_remote() {
        Clock::Wall
    } else {
        Clock::Logical
    };
    let transcript =
        run_market(plan.config.clone(), &mut agents, clock).map_err(|e| e.to_string())?;
    let path = transcript_path(out_dir, &transcript.market_id);
    fs::write(&path, transcript.to_jsonl(&structure))
        .map_err(|e| format!("writing {}: {e}", path.display()))?;
    Ok(transcript)
}

pub fn transcript_path(out_dir: &Path, market_id: &str) -> PathBuf {
    out_dir.join("transcripts").join(format!("{market_id}.txt"))
}

fn read_existing_ids(path: &Path) -> Result<HashSet<String>, RunnerError> {
    let mut ids = HashSet::new();
    if path.exists() {
        let mut reader = csv::Reader::from_path(path)?;
        for record in reader.records() {
            let record = record?;
            if let Some(id) = record.get(0) {
                ids.insert(id.to_string());
            }
        }
    }
    Ok(ids)
}

const MARKETS_HEADER: &[&str] = &[
    "market_id",
    "structure",
    "rounds",
    "initial_price",
    "objective",
    "comments",
    "disclosure",
    "team",
    "seed",
    "final_price",
    "outcome_value",
    "log_error",
    "squared_error",
    "crashed",
    "volume",
    "profit_1",
    "profit_2",
    "profit_3",
];

fn append_markets_csv(path: &Path, scores: &[MarketScore]) -> Result<(), RunnerError> {
    let fresh = !path.exists();
    let file = fs::OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    if fresh {
        w.write_record(MARKETS_HEADER)?;
    }
    for s in scores {
        let mut row = vec![
            s.market_id.clone(),
            s.structure.clone(),
            s.rounds.to_string(),
            s.initial_price.to_string(),
            s.objective.clone(),
            s.comments_allowed.to_string(),
            s.disclosure.to_string(),
            s.team.clone(),
            s.seed.to_string(),
            s.final_price.to_string(),
            s.outcome_value.to_string(),
            s.log_error.to_string(),
            s.squared_error.to_string(),
            s.crashed.to_string(),
            s.volume.to_string(),
        ];
        for i in 0..3 {
            row.push(s.profits.get(i).copied().unwrap_or(0.0).to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

const TRADES_HEADER: &[&str] = &[
    "market_id",
    "structure",
    "rounds",
    "initial_price",
    "objective",
    "comments",
    "disclosure",
    "round",
    "trader",
    "action",
    "side",
    "requested",
    "executed",
    "price_before",
    "price_after",
    "cost",
    "cash_after",
];

fn append_trades_csv(path: &Path, transcripts: &[Transcript]) -> Result<(), RunnerError> {
    let fresh = !path.exists();
    let file = fs::OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    if fresh {
        w.write_record(TRADES_HEADER)?;
    }
    for t in transcripts {
        for trade in &t.trades {
            w.write_record(&[
                t.market_id.clone(),
                t.structure_label.clone(),
                t.rounds.to_string(),
                t.initial_price.to_string(),
                t.objective.label().to_string(),
                t.comments_allowed.to_string(),
                t.disclosure.to_string(),
                trade.round.to_string(),
                (trade.trader + 1).to_string(),
                trade.action.label().to_string(),
                trade.side.label().to_string(),
                trade.requested.to_string(),
                trade.executed.to_string(),
                trade.price_before.to_string(),
                trade.price_after.to_string(),
                trade.cost.to_string(),
                trade.cash_after.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Rewrites a CSV with its data rows sorted by the first column, making the
/// byte content independent of worker scheduling.
fn canonicalize_csv(path: &Path) -> Result<(), RunnerError> {
    if !path.exists() {
        return Ok(());
    }
    let mut reader = csv::Reader::from_path(path)?;
    let header = reader.headers()?.clone();
    let mut rows: Vec<csv::StringRecord> = reader.records().collect::<Result<_, _>>()?;
    rows.sort_by(|a, b| a.iter().cmp(b.iter()));
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a markets summary CSV back into scores (for reporting).
pub fn read_markets_csv(path: &Path) -> Result<Vec<MarketScore>, RunnerError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut scores = Vec::new();
    for record in reader.records() {
        let r = record?;
        let get = |i: usize| r.get(i).unwrap_or_default().to_string();
        let num = |i: usize| r.get(i).and_then(|v| v.parse::<f64>().ok()).unwrap_or(0.0);
        scores.push(MarketScore {
            market_id: get(0),
            structure: get(1),
            rounds: num(2) as u32,
            initial_price: num(3),
            objective: get(4),
            comments_allowed: get(5) == "true",
            disclosure: get(6) == "true",
            team: get(7),
            seed: num(8) as u64,
            final_price: num(9),
            outcome_value: num(10),
            log_error: num(11),
            squared_error: num(12),
            crashed: get(13) == "true",
            volume: num(14) as u64,
            profits: vec![num(15), num(16), num(17)],
        });
    }
    Ok(scores)
}

/// Formats the per-structure, per-duration outcome table. `delimited`
/// switches from aligned plain text to tab-separated output.
pub fn report(scores: &[MarketScore], delimited: bool) -> String {
    if scores.is_empty() {
        return "no data\n".to_string();
    }
    let level = |label: &str| {
        StructureId::from_label(label)
            .map(|s| s.complexity_level())
            .unwrap_or(99)
    };
    let rows: Vec<SummaryRow> = summarize(scores, |s| {
        (
            level(&s.structure),
            s.structure.clone(),
            s.rounds,
        )
    });
    let mut out = String::new();
    let header = [
        "Structure",
        "Rounds",
        "N",
        "MSE",
        "SE(SqEr)",
        "MeanLog",
        "SE(Log)",
        "MedianLog",
        "CrashRate",
        "AvgVolume",
    ];
    if delimited {
        let _ = writeln!(out, "{}", header.join("\t"));
    } else {
        let _ = writeln!(
            out,
            "{:<12}{:>7}{:>6}{:>8}{:>10}{:>9}{:>9}{:>11}{:>11}{:>11}",
            header[0],
            header[1],
            header[2],
            header[3],
            header[4],
            header[5],
            header[6],
            header[7],
            header[8],
            header[9]
        );
    }
    for row in rows {
        // group key prints as a tuple; recover the parts
        let (structure, rounds) = parse_group(&row.group);
        let cells = [
            structure,
            rounds,
            row.n.to_string(),
            format!("{:.3}", row.mean_squared_error),
            format!("{:.3}", row.se_squared_error),
            format!("{:.2}", row.mean_log_error),
            format!("{:.2}", row.se_log_error),
            format!("{:.4}", row.median_log_error),
            format!("{:.1}%", row.crash_rate * 100.0),
            format!("{:.0}", row.mean_volume),
        ];
        if delimited {
            let _ = writeln!(out, "{}", cells.join("\t"));
        } else {
            let _ = writeln!(
                out,
                "{:<12}{:>7}{:>6}{:>8}{:>10}{:>9}{:>9}{:>11}{:>11}{:>11}",
                cells[0],
                cells[1],
                cells[2],
                cells[3],
                cells[4],
                cells[5],
                cells[6],
                cells[7],
                cells[8],
                cells[9]
            );
        }
    }
    out
}

fn parse_group(group: &str) -> (String, String) {
    // keys render as `(level, "structure", rounds)`
    let inner = group.trim_start_matches('(').trim_end_matches(')');
    let parts: Vec<&str> = inner.split(", ").collect();
    if parts.len() == 3 {
        (parts[1].trim_matches('"').to_string(), parts[2].to_string())
    } else {
        (group.to_string(), String::new())
    }
}

/// Loads a structure from a catalog file or a preset label.
pub fn load_structure(spec: &str) -> Result<InfoStructure, RunnerError> {
    if let Some(preset) = StructureId::from_label(spec) {
        return Ok(make_structure(preset));
    }
    let text = fs::read_to_string(spec)?;
    StructureFile::from_toml(&text)
        .and_then(StructureFile::into_structure)
        .map_err(|e| RunnerError::InvalidGrid(e.to_string()))
}
