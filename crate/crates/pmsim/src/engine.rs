//! The sequential market protocol.
//!
//! A market opens at a configured price, runs a fixed number of rounds in
//! strict round-robin trader order, validates and executes one decision per
//! round, and resolves against the security payoff at the realised state.
//! Malformed or failing decisions degrade to Hold with a note; a market
//! never aborts mid-run.

use crate::agents::{
    prompt, Action, Agent, AgentContext, AgentReply, CommentEntry, Decision, Disclosure,
    HistoryEntry, Objective, ReasoningEntry,
};
use crate::knowledge::{InfoStructure, KnowledgeError, StructureFile};
use crate::lmsr::{impact_preview, LmsrError, MarketState, Side, TradeDelta};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid market config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
    #[error(transparent)]
    Lmsr(#[from] LmsrError),
}

/// Timestamp source: logical round counters for simulations, wall clock
/// for markets with remote agents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Clock {
    #[default]
    Logical,
    Wall,
}

impl Clock {
    fn stamp(self, round: u32) -> String {
        match self {
            Clock::Logical => format!("round {round}"),
            Clock::Wall => chrono::Local::now().format("%Y-%m-%d %H:%M:%S").to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MarketConfig {
    pub market_id: String,
    pub structure: InfoStructure,
    pub rounds: u32,
    pub initial_price: f64,
    pub comments_allowed: bool,
    pub objective: Objective,
    pub disclosure: bool,
    pub beta: f64,
    pub starting_cash: f64,
    pub seed: u64,
    pub team_label: String,
    pub question: String,
    pub description: String,
    /// Per-trader intelligence indices shown in the disclosure block.
    pub intelligences: Option<Vec<f64>>,
}

impl MarketConfig {
    pub fn new(structure: InfoStructure, rounds: u32, initial_price: f64) -> MarketConfig {
        MarketConfig {
            market_id: "market".into(),
            structure,
            rounds,
            initial_price,
            comments_allowed: false,
            objective: Objective::Myopic,
            disclosure: false,
            beta: crate::lmsr::DEFAULT_BETA,
            starting_cash: 1000.0,
            seed: 0,
            team_label: "unlabeled".into(),
            question: prompt::MARKET_QUESTION.into(),
            description: String::new(),
            intelligences: None,
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let n = self.structure.n_traders() as u32;
        if self.rounds == 0 || !self.rounds.is_multiple_of(n) {
            return Err(EngineError::InvalidConfig(format!(
                "rounds {} must be a positive multiple of the trader count {n}",
                self.rounds
            )));
        }
        if self.initial_price.is_nan() || self.initial_price <= 0.0 || self.initial_price >= 1.0 {
            return Err(EngineError::InvalidConfig(format!(
                "initial price {} outside (0,1)",
                self.initial_price
            )));
        }
        if !self.starting_cash.is_finite() || self.starting_cash <= 0.0 {
            return Err(EngineError::InvalidConfig("starting cash must be positive".into()));
        }
        if !self.beta.is_finite() || self.beta <= 0.0 {
            return Err(EngineError::InvalidConfig("beta must be positive".into()));
        }
        let payoff = self.structure.security.payoff(self.structure.true_state);
        if payoff != 0.0 && payoff != 1.0 {
            return Err(EngineError::InvalidConfig(
                "tradable markets need a binary payoff at the realised state".into(),
            ));
        }
        Ok(())
    }

    /// Opaque per-market instrument identifiers carried in prompts.
    pub fn instrument_ids(&self) -> (u32, u32) {
        let yes = 1000 + (self.seed % 8000) as u32;
        (yes, yes + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Portfolio {
    pub cash: f64,
    pub yes_shares: u64,
    pub no_shares: u64,
}

impl Portfolio {
    pub fn held(&self, side: Side) -> u64 {
        match side {
            Side::Yes => self.yes_shares,
            Side::No => self.no_shares,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trade {
    pub round: u32,
    /// 0-based seat.
    pub trader: usize,
    pub action: Action,
    pub side: Side,
    pub requested: u64,
    pub executed: u64,
    pub price_before: f64,
    pub price_after: f64,
    pub cost: f64,
    pub cash_after: f64,
    pub timestamp: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comment {
    pub round: u32,
    pub trader: usize,
    pub text: String,
    pub timestamp: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reasoning {
    pub round: u32,
    pub trader: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub round: u32,
    pub trader: usize,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_reply: Option<String>,
}

/// Full record of one market: configuration echo, every trade, all public
/// comments and private reasonings, prompts sent to remote agents, and the
/// resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub market_id: String,
    pub structure_label: String,
    pub structure_code: String,
    pub rounds: u32,
    pub initial_price: f64,
    pub comments_allowed: bool,
    pub objective: Objective,
    pub disclosure: bool,
    pub beta: f64,
    pub starting_cash: f64,
    pub seed: u64,
    pub team_label: String,
    pub trades: Vec<Trade>,
    pub comments: Vec<Comment>,
    pub reasonings: Vec<Reasoning>,
    pub prompts: Vec<PromptRecord>,
    pub final_price: f64,
    pub outcome: Side,
    /// Payoff of the Yes share at the realised state.
    pub outcome_value: f64,
    pub profits: Vec<f64>,
    /// Total profit minus the constant-sum identity; ~0 for a correct run.
    pub conservation_residual: f64,
}

impl Transcript {
    pub fn volume(&self) -> u64 {
        self.trades.iter().map(|t| t.executed).sum()
    }
}

/// A live market.
pub struct Market {
    pub config: MarketConfig,
    state: MarketState,
    opening_state: MarketState,
    portfolios: Vec<Portfolio>,
    trades: Vec<Trade>,
    comments: Vec<Comment>,
    reasonings: Vec<Reasoning>,
    prompts: Vec<PromptRecord>,
    clock: Clock,
}

/// Opens a market at the configured price with fresh trader portfolios.
pub fn open_market(config: MarketConfig) -> Result<Market, EngineError> {
    Market::open(config, Clock::Logical)
}

impl Market {
    pub fn open(config: MarketConfig, clock: Clock) -> Result<Market, EngineError> {
        config.validate()?;
        let mut state = MarketState::offset_for_price(config.initial_price, config.beta)?;
        state.beta = config.beta;
        Ok(Market {
            portfolios: vec![
                Portfolio {
                    cash: config.starting_cash,
                    yes_shares: 0,
                    no_shares: 0,
                };
                config.structure.n_traders()
            ],
            opening_state: state,
            state,
            trades: Vec::new(),
            comments: Vec::new(),
            reasonings: Vec::new(),
            prompts: Vec::new(),
            clock,
            config,
        })
    }

    pub fn price_of_yes(&self) -> f64 {
        self.state.price_of_yes()
    }

    pub fn portfolio(&self, trader: usize) -> &Portfolio {
        &self.portfolios[trader]
    }

    /// Seat that trades in the given 1-based round.
    pub fn seat_for_round(&self, round: u32) -> usize {
        (round as usize - 1) % self.config.structure.n_traders()
    }

    fn trader_names(&self) -> Vec<String> {
        (1..=self.config.structure.n_traders())
            .map(|i| format!("trader_{i}"))
            .collect()
    }

    /// Assembles the context handed to the acting agent: public and private
    /// information, history, portfolio, affordability bounds and the price
    /// impact preview. Never includes other traders' private information.
    pub fn agent_context(&self, trader: usize, round: u32) -> AgentContext {
        let names = self.trader_names();
        let pf = &self.portfolios[trader];
        let max_buy_yes = self.state.max_affordable(pf.cash, Side::Yes);
        let max_buy_no = self.state.max_affordable(pf.cash, Side::No);
        let (instrument_yes, instrument_no) = self.config.instrument_ids();
        let disclosure = if self.config.disclosure {
            let iqs = self
                .config
                .intelligences
                .clone()
                .unwrap_or_else(|| vec![0.0; names.len()]);
            Some(Disclosure {
                own_intelligence: iqs.get(trader).copied().unwrap_or(0.0),
                others: names
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != trader)
                    .map(|(i, n)| (n.clone(), iqs.get(i).copied().unwrap_or(0.0)))
                    .collect(),
                complexity_level: self
                    .config
                    .structure
                    .preset
                    .map(|p| p.complexity_level())
                    .unwrap_or(0),
            })
        } else {
            None
        };
        AgentContext {
            market_id: self.config.market_id.clone(),
            question: self.config.question.clone(),
            description: self.config.description.clone(),
            trader,
            trader_names: names.clone(),
            total_rounds: self.config.rounds,
            current_round: round,
            comments_allowed: self.config.comments_allowed,
            objective: self.config.objective,
            beta: self.config.beta,
            public_info: prompt::public_information_text(&self.config.structure),
            private_info: prompt::private_information_text(&self.config.structure, trader),
            price_yes: self.state.price_of_yes(),
            history: self
                .trades
                .iter()
                .map(|t| HistoryEntry {
                    round: t.round,
                    trader: t.trader,
                    trader_name: names[t.trader].clone(),
                    action: t.action,
                    side: t.side,
                    executed: t.executed,
                    price_before: t.price_before,
                    price_after: t.price_after,
                    timestamp: t.timestamp.clone(),
                })
                .collect(),
            comments: self
                .comments
                .iter()
                .map(|c| CommentEntry {
                    round: c.round,
                    trader_name: names[c.trader].clone(),
                    text: c.text.clone(),
                    timestamp: c.timestamp.clone(),
                })
                .collect(),
            own_reasonings: self
                .reasonings
                .iter()
                .filter(|r| r.trader == trader)
                .map(|r| ReasoningEntry {
                    round: r.round,
                    text: r.text.clone(),
                })
                .collect(),
            cash: pf.cash,
            yes_held: pf.yes_shares,
            no_held: pf.no_shares,
            max_buy_yes,
            max_buy_yes_cost: self
                .state
                .trade_cost(TradeDelta::buy(Side::Yes, max_buy_yes as f64)),
            max_buy_no,
            max_buy_no_cost: self
                .state
                .trade_cost(TradeDelta::buy(Side::No, max_buy_no as f64)),
            impact: impact_preview(&self.state, pf.cash, pf.yes_shares, pf.no_shares),
            disclosure,
            instrument_yes,
            instrument_no,
        }
    }

    /// Validates and executes one decision: buys are clamped to what the
    /// trader can afford, sells to what he holds, malformed decisions become
    /// Hold with a note. The portfolio and market state update atomically.
    pub fn validate_and_execute(
        &mut self,
        trader: usize,
        round: u32,
        decision: &Decision,
        external_note: Option<String>,
    ) -> Trade {
        let mut note = external_note;
        let push_note = |note: &mut Option<String>, text: &str| {
            *note = Some(match note.take() {
                Some(mut prev) => {
                    prev.push_str("; ");
                    prev.push_str(text);
                    prev
                }
                None => text.to_string(),
            });
        };

        let mut action = decision.action;
        let mut requested = 0u64;
        if action != Action::Hold {
            if decision.size < 0 {
                push_note(&mut note, "malformed decision (negative size); holding");
                action = Action::Hold;
            } else {
                requested = decision.size as u64;
            }
        }

        let price_before = self.state.price_of_yes();
        let pf = &mut self.portfolios[trader];
        let executed = match action {
            Action::Hold => 0,
            Action::Buy => {
                let max = self.state.max_affordable(pf.cash, decision.side);
                if requested > max {
                    push_note(&mut note, "clamped to max affordable");
                }
                requested.min(max)
            }
            Action::Sell => {
                let held = pf.held(decision.side);
                if requested > held {
                    push_note(&mut note, "clamped to holdings");
                }
                requested.min(held)
            }
        };

        let mut cost = 0.0;
        if executed > 0 {
            let shares = match action {
                Action::Buy => executed as f64,
                Action::Sell => -(executed as f64),
                Action::Hold => unreachable!(),
            };
            let delta = TradeDelta {
                side: decision.side,
                shares,
            };
            cost = self.state.trade_cost(delta);
            self.state = self.state.apply(delta);
            pf.cash = (pf.cash - cost).max(0.0);
            match (action, decision.side) {
                (Action::Buy, Side::Yes) => pf.yes_shares += executed,
                (Action::Buy, Side::No) => pf.no_shares += executed,
                (Action::Sell, Side::Yes) => pf.yes_shares -= executed,
                (Action::Sell, Side::No) => pf.no_shares -= executed,
                _ => {}
            }
        }
        debug_assert!(pf.cash >= 0.0);

        let timestamp = self.clock.stamp(round);
        let cash_after = pf.cash;
        if self.config.comments_allowed && !decision.public_justification.is_empty() {
            self.comments.push(Comment {
                round,
                trader,
                text: decision.public_justification.clone(),
                timestamp: timestamp.clone(),
            });
        }
        if !decision.private_reasoning.is_empty() {
            self.reasonings.push(Reasoning {
                round,
                trader,
                text: decision.private_reasoning.clone(),
            });
        }

        let trade = Trade {
            round,
            trader,
            action,
            side: decision.side,
            requested,
            executed,
            price_before,
            price_after: self.state.price_of_yes(),
            cost,
            cash_after,
            timestamp,
            note,
        };
        self.trades.push(trade.clone());
        trade
    }

    /// Resolves the market at the realised state and produces the transcript.
    pub fn resolve(self) -> Transcript {
        let outcome_value = self
            .config
            .structure
            .security
            .payoff(self.config.structure.true_state);
        let outcome = if outcome_value >= 0.5 { Side::Yes } else { Side::No };
        let profits: Vec<f64> = self
            .portfolios
            .iter()
            .map(|pf| pf.cash + pf.held(outcome) as f64 - self.config.starting_cash)
            .collect();

        // Constant-sum identity: total profit depends only on the initial and
        // final market state and the outcome, never on the path.
        let (qw_final, qw_0) = match outcome {
            Side::Yes => (self.state.q_yes, self.opening_state.q_yes),
            Side::No => (self.state.q_no, self.opening_state.q_no),
        };
        let identity =
            (qw_final - qw_0) - (self.state.cost_potential() - self.opening_state.cost_potential());
        let conservation_residual = profits.iter().sum::<f64>() - identity;

        Transcript {
            market_id: self.config.market_id.clone(),
            structure_label: self
                .config
                .structure
                .preset
                .map(|p| p.label().to_string())
                .unwrap_or_else(|| "custom".into()),
            structure_code: self
                .config
                .structure
                .preset
                .map(|p| p.code().to_string())
                .unwrap_or_else(|| "custom".into()),
            rounds: self.config.rounds,
            initial_price: self.config.initial_price,
            comments_allowed: self.config.comments_allowed,
            objective: self.config.objective,
            disclosure: self.config.disclosure,
            beta: self.config.beta,
            starting_cash: self.config.starting_cash,
            seed: self.config.seed,
            team_label: self.config.team_label.clone(),
            trades: self.trades,
            comments: self.comments,
            reasonings: self.reasonings,
            prompts: self.prompts,
            final_price: self.state.price_of_yes(),
            outcome,
            outcome_value,
            profits,
            conservation_residual,
        }
    }
}

/// Runs a full market: one decision per round in round-robin seat order,
/// then resolution. Agent failures degrade to Hold with a note.
pub fn run_market(
    config: MarketConfig,
    agents: &mut [Box<dyn Agent>],
    clock: Clock,
) -> Result<Transcript, EngineError> {
    let n = config.structure.n_traders();
    if agents.len() != n {
        return Err(EngineError::InvalidConfig(format!(
            "expected {n} agents, got {}",
            agents.len()
        )));
    }
    let keep_prompts = agents.iter().any(|a| a.kind() == "remote");
    let mut market = Market::open(config, clock)?;
    for round in 1..=market.config.rounds {
        let trader = market.seat_for_round(round);
        let ctx = market.agent_context(trader, round);
        let (decision, note, prompt_text, raw_reply) = match agents[trader].decide(&ctx) {
            Ok(AgentReply {
                decision,
                prompt,
                raw_reply,
            }) => (decision, None, prompt, raw_reply),
            Err(e) => (
                Decision::hold(),
                Some(format!("agent failure: {e}; holding")),
                None,
                None,
            ),
        };
        if keep_prompts {
            if let Some(text) = prompt_text {
                market.prompts.push(PromptRecord {
                    round,
                    trader,
                    text,
                    raw_reply,
                });
            }
        }
        market.validate_and_execute(trader, round, &decision, note);
    }
    Ok(market.resolve())
}

// ---------------------------------------------------------------------------
// Transcript persistence: line-delimited records
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum TranscriptLine {
    Market {
        market_id: String,
        structure_label: String,
        structure_code: String,
        structure: StructureFile,
        rounds: u32,
        initial_price: f64,
        comments_allowed: bool,
        objective: Objective,
        disclosure: bool,
        beta: f64,
        starting_cash: f64,
        seed: u64,
        team_label: String,
    },
    Prompt(PromptRecord),
    Trade(Trade),
    Comment(Comment),
    Reasoning(Reasoning),
    Resolution {
        final_price: f64,
        outcome: Side,
        outcome_value: f64,
        profits: Vec<f64>,
        conservation_residual: f64,
    },
}

impl Transcript {
    /// Serialises the transcript as line-delimited records, including every
    /// prompt sent to remote agents.
    pub fn to_jsonl(&self, structure: &InfoStructure) -> String {
        let mut lines = Vec::new();
        lines.push(TranscriptLine::Market {
            market_id: self.market_id.clone(),
            structure_label: self.structure_label.clone(),
            structure_code: self.structure_code.clone(),
            structure: StructureFile::from_structure(structure),
            rounds: self.rounds,
            initial_price: self.initial_price,
            comments_allowed: self.comments_allowed,
            objective: self.objective,
            disclosure: self.disclosure,
            beta: self.beta,
            starting_cash: self.starting_cash,
            seed: self.seed,
            team_label: self.team_label.clone(),
        });
        for p in &self.prompts {
            lines.push(TranscriptLine::Prompt(p.clone()));
        }
        for t in &self.trades {
            lines.push(TranscriptLine::Trade(t.clone()));
        }
        for c in &self.comments {
            lines.push(TranscriptLine::Comment(c.clone()));
        }
        for r in &self.reasonings {
            lines.push(TranscriptLine::Reasoning(r.clone()));
        }
        lines.push(TranscriptLine::Resolution {
            final_price: self.final_price,
            outcome: self.outcome,
            outcome_value: self.outcome_value,
            profits: self.profits.clone(),
            conservation_residual: self.conservation_residual,
        });
        let mut out = String::new();
        for line in lines {
            out.push_str(&serde_json::to_string(&line).expect("transcript records serialise"));
            out.push('\n');
        }
        out
    }
}

/// Replays a serialised transcript against the market maker: recomputes
/// every price and cost from the opening state, checks round-robin order,
/// cash and holding bounds, and the constant-sum identity.
pub fn verify_transcript(jsonl: &str) -> Result<(), String> {
    let mut header: Option<(MarketState, f64, u32, usize, f64)> = None;
    let mut state: Option<MarketState> = None;
    let mut opening: Option<MarketState> = None;
    let mut trades: Vec<Trade> = Vec::new();
    let mut resolution: Option<(f64, Side, Vec<f64>)> = None;

    for (lineno, line) in jsonl.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: TranscriptLine = serde_json::from_str(line)
            .map_err(|e| format!("line {}: {e}", lineno + 1))?;
        match record {
            TranscriptLine::Market {
                initial_price,
                beta,
                rounds,
                structure,
                starting_cash,
                ..
            } => {
                let n_traders = structure.traders.len();
                let m = MarketState::offset_for_price(initial_price, beta)
                    .map_err(|e| e.to_string())?;
                header = Some((m, initial_price, rounds, n_traders, starting_cash));
                state = Some(m);
                opening = Some(m);
            }
            TranscriptLine::Trade(t) => {
                let (_, _, _, n_traders, _) =
                    header.as_ref().ok_or("trade before market header")?;
                let expected_seat = (t.round as usize - 1) % n_traders;
                if t.trader != expected_seat {
                    return Err(format!(
                        "round {}: trader {} traded out of turn (expected seat {})",
                        t.round, t.trader, expected_seat
                    ));
                }
                if t.action == Action::Hold && t.executed != 0 {
                    return Err(format!("round {}: hold with nonzero execution", t.round));
                }
                if t.executed > t.requested && t.action != Action::Hold {
                    return Err(format!("round {}: executed exceeds requested", t.round));
                }
                let s = state.as_mut().ok_or("trade before market header")?;
                if (s.price_of_yes() - t.price_before).abs() > 1e-6 {
                    return Err(format!(
                        "round {}: price_before {} does not match replay {}",
                        t.round,
                        t.price_before,
                        s.price_of_yes()
                    ));
                }
                if t.executed > 0 {
                    let shares = match t.action {
                        Action::Buy => t.executed as f64,
                        Action::Sell => -(t.executed as f64),
                        Action::Hold => unreachable!(),
                    };
                    let delta = TradeDelta {
                        side: t.side,
                        shares,
                    };
                    let cost = s.trade_cost(delta);
                    if (cost - t.cost).abs() > 1e-6 {
                        return Err(format!(
                            "round {}: cost {} does not match replay {cost}",
                            t.round, t.cost
                        ));
                    }
                    *s = s.apply(delta);
                }
                if (s.price_of_yes() - t.price_after).abs() > 1e-6 {
                    return Err(format!(
                        "round {}: price_after {} does not match replay {}",
                        t.round,
                        t.price_after,
                        s.price_of_yes()
                    ));
                }
                trades.push(t);
            }
            TranscriptLine::Resolution {
                final_price,
                outcome,
                profits,
                ..
            } => {
                resolution = Some((final_price, outcome, profits));
            }
            _ => {}
        }
    }

    let (final_price, outcome, profits) = resolution.ok_or("missing resolution record")?;
    let s = state.ok_or("missing market header")?;
    let opening = opening.unwrap();
    if (s.price_of_yes() - final_price).abs() > 1e-6 {
        return Err(format!(
            "final price {final_price} does not match replay {}",
            s.price_of_yes()
        ));
    }
    let (qw_final, qw_0) = match outcome {
        Side::Yes => (s.q_yes, opening.q_yes),
        Side::No => (s.q_no, opening.q_no),
    };
    let identity = (qw_final - qw_0) - (s.cost_potential() - opening.cost_potential());
    let total: f64 = profits.iter().sum();
    if (total - identity).abs() > 1e-6 {
        return Err(format!(
            "conservation violated: profits sum to {total}, identity gives {identity}"
        ));
    }
    Ok(())
}
