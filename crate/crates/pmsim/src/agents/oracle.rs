//! The myopic Bayesian oracle.
//!
//! The oracle keeps a running common-knowledge event by replaying the trade
//! history: each round's closing price is snapped to the nearest posterior
//! any cell of the acting trader could have produced, and the public event
//! is refined by that announcement. It then moves the price to its own
//! posterior. Integer share rounding perturbs observed prices by less than
//! one share's impact, which the snapping absorbs.

use super::{Agent, AgentContext, AgentError, AgentReply, Decision};
use crate::knowledge::{
    achievable_posteriors, refine_public_event, trader_posterior, InfoStructure, PublicEvent,
    TraderId,
};
use crate::lmsr::MarketState;

pub struct MyopicOracle {
    structure: InfoStructure,
    trader: TraderId,
    clamp: f64,
}

impl MyopicOracle {
    pub fn new(structure: InfoStructure, trader: TraderId, clamp: f64) -> MyopicOracle {
        MyopicOracle {
            structure,
            trader,
            clamp,
        }
    }

    /// Replays history into the current public event.
    fn public_event(&self, ctx: &AgentContext) -> Result<PublicEvent, AgentError> {
        let mut public = self.structure.full_event();
        for entry in &ctx.history {
            let observed = entry.price_after;
            let snapped = snap_to_posterior(&self.structure, entry.trader, observed, &public)
                .ok_or_else(|| {
                    AgentError::Inconsistent(format!(
                        "round {}: no cell of trader {} is consistent with the public event",
                        entry.round,
                        entry.trader + 1
                    ))
                })?;
            public = refine_public_event(&self.structure, entry.trader, snapped, &public)
                .map_err(|e| AgentError::Inconsistent(e.to_string()))?;
        }
        Ok(public)
    }
}

/// Nearest posterior among the trader's cells consistent with the public
/// event; `None` when no cell intersects it.
fn snap_to_posterior(
    structure: &InfoStructure,
    trader: TraderId,
    observed: f64,
    public: &PublicEvent,
) -> Option<f64> {
    achievable_posteriors(structure, trader, public)
        .into_iter()
        .min_by(|a, b| (a - observed).abs().total_cmp(&(b - observed).abs()))
}

impl Agent for MyopicOracle {
    fn kind(&self) -> &'static str {
        "oracle"
    }

    fn decide(&mut self, ctx: &AgentContext) -> Result<AgentReply, AgentError> {
        let public = self.public_event(ctx)?;
        let posterior = trader_posterior(&self.structure, self.trader, &public)
            .map_err(|e| AgentError::Inconsistent(e.to_string()))?;

        let market = MarketState::offset_for_price(ctx.price_yes, ctx.beta)
            .map_err(|e| AgentError::Inconsistent(e.to_string()))?;
        let delta = market.shares_to_target(posterior, self.clamp);

        let mut decision = if delta.shares < 1.0 {
            Decision::hold()
        } else {
            Decision::buy(delta.side, delta.shares as i64)
        };
        decision.private_reasoning = format!(
            "posterior {} on public event {:?}",
            posterior, public
        );
        Ok(AgentReply::decision(decision))
    }
}
