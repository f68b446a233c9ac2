//! Control agent trading uniformly at random.

use super::{Action, Agent, AgentContext, AgentError, AgentReply, Decision};
use crate::lmsr::Side;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub struct NoiseAgent {
    rng: ChaCha12Rng,
}

impl NoiseAgent {
    pub fn new(seed: u64) -> NoiseAgent {
        NoiseAgent {
            rng: ChaCha12Rng::seed_from_u64(seed),
        }
    }
}

impl Agent for NoiseAgent {
    fn kind(&self) -> &'static str {
        "noise"
    }

    fn decide(&mut self, ctx: &AgentContext) -> Result<AgentReply, AgentError> {
        let action = match self.rng.random_range(0..3) {
            0 => Action::Buy,
            1 => Action::Sell,
            _ => Action::Hold,
        };
        let side = if self.rng.random_bool(0.5) {
            Side::Yes
        } else {
            Side::No
        };
        let bound = match action {
            Action::Buy => ctx.max_buy(side),
            Action::Sell => ctx.held(side),
            Action::Hold => 0,
        };
        let decision = if action == Action::Hold || bound == 0 {
            Decision::hold()
        } else {
            let size = self.rng.random_range(0..=bound) as i64;
            Decision {
                action,
                side,
                size,
                public_justification: String::new(),
                private_reasoning: String::new(),
            }
        };
        Ok(AgentReply::decision(decision))
    }
}
