//! Trading agents and the context the engine hands them each round.
//!
//! Three implementations are provided: [`MyopicOracle`] replays the
//! theoretical benchmark (Bayesian posterior from observed prices, price
//! moved to the posterior), [`NoiseAgent`] trades uniformly at random, and
//! [`RemoteAgent`] asks a chat-completion endpoint and parses its JSON
//! decision.

mod noise;
mod oracle;
pub mod prompt;
pub mod remote;

pub use noise::NoiseAgent;
pub use oracle::MyopicOracle;
pub use remote::{parse_decision, RemoteAgent, RemoteClientConfig, TokenBucket};

use crate::lmsr::{ImpactRow, Side};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Myopic,
    Strategic,
}

impl Objective {
    pub fn label(self) -> &'static str {
        match self {
            Objective::Myopic => "myopic",
            Objective::Strategic => "strategic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    Buy,
    Sell,
    Hold,
}

impl Action {
    pub fn label(self) -> &'static str {
        match self {
            Action::Buy => "BUY",
            Action::Sell => "SELL",
            Action::Hold => "HOLD",
        }
    }
}

/// What an agent wants to do this round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub action: Action,
    pub side: Side,
    /// Requested share count. Negative values are malformed and degrade to
    /// Hold during validation.
    pub size: i64,
    pub public_justification: String,
    pub private_reasoning: String,
}

impl Decision {
    pub fn hold() -> Decision {
        Decision {
            action: Action::Hold,
            side: Side::Yes,
            size: 0,
            public_justification: String::new(),
            private_reasoning: String::new(),
        }
    }

    pub fn buy(side: Side, size: i64) -> Decision {
        Decision {
            action: Action::Buy,
            side,
            size,
            public_justification: String::new(),
            private_reasoning: String::new(),
        }
    }
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("no parseable decision: {0}")]
    Parse(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("timed out: {0}")]
    Timeout(String),
    #[error("inconsistent public event: {0}")]
    Inconsistent(String),
}

/// A decision plus whatever the agent wants recorded alongside it; remote
/// agents attach the full prompt and the raw model reply.
#[derive(Debug, Clone)]
pub struct AgentReply {
    pub decision: Decision,
    pub prompt: Option<String>,
    pub raw_reply: Option<String>,
}

impl AgentReply {
    pub fn decision(decision: Decision) -> AgentReply {
        AgentReply {
            decision,
            prompt: None,
            raw_reply: None,
        }
    }
}

pub trait Agent: Send {
    fn kind(&self) -> &'static str;

    /// Decide this round's trade. Errors degrade to Hold with a note in the
    /// transcript; they never abort the market.
    fn decide(&mut self, ctx: &AgentContext) -> Result<AgentReply, AgentError>;
}

/// One prior round as visible to everyone: who acted and where the price
/// went. Hold rounds are included with `executed = 0` and an unchanged
/// price so observers can still update on the (non-)announcement.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub round: u32,
    pub trader: usize,
    pub trader_name: String,
    pub action: Action,
    pub side: Side,
    pub executed: u64,
    pub price_before: f64,
    pub price_after: f64,
    pub timestamp: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CommentEntry {
    pub round: u32,
    pub trader_name: String,
    pub text: String,
    pub timestamp: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReasoningEntry {
    pub round: u32,
    pub text: String,
}

/// Per-team intelligence figures surfaced in the disclosure treatment.
#[derive(Debug, Clone)]
pub struct Disclosure {
    pub own_intelligence: f64,
    /// Other traders in seat order, skipping the current one.
    pub others: Vec<(String, f64)>,
    /// Structure complexity, 1 (easiest) to 4 (hardest).
    pub complexity_level: u32,
}

/// Everything an agent may look at when deciding. Contains only the acting
/// trader's private information and only his own prior reasonings.
#[derive(Debug, Clone)]
pub struct AgentContext {
    pub market_id: String,
    pub question: String,
    pub description: String,
    /// Seat of the acting trader, 0-based.
    pub trader: usize,
    pub trader_names: Vec<String>,
    pub total_rounds: u32,
    pub current_round: u32,
    pub comments_allowed: bool,
    pub objective: Objective,
    pub beta: f64,
    pub public_info: String,
    pub private_info: String,
    pub price_yes: f64,
    pub history: Vec<HistoryEntry>,
    pub comments: Vec<CommentEntry>,
    pub own_reasonings: Vec<ReasoningEntry>,
    pub cash: f64,
    pub yes_held: u64,
    pub no_held: u64,
    pub max_buy_yes: u64,
    pub max_buy_yes_cost: f64,
    pub max_buy_no: u64,
    pub max_buy_no_cost: f64,
    pub impact: Vec<ImpactRow>,
    pub disclosure: Option<Disclosure>,
    pub instrument_yes: u32,
    pub instrument_no: u32,
}

impl AgentContext {
    pub fn trader_name(&self) -> &str {
        &self.trader_names[self.trader]
    }

    pub fn max_buy(&self, side: Side) -> u64 {
        match side {
            Side::Yes => self.max_buy_yes,
            Side::No => self.max_buy_no,
        }
    }

    pub fn held(&self, side: Side) -> u64 {
        match side {
            Side::Yes => self.yes_held,
            Side::No => self.no_held,
        }
    }
}
