//! Logarithmic market scoring rule market maker.
//!
//! The market tracks outstanding Yes and No share quantities. The Yes price
//! is the softmax of the scaled quantities, `e^{βq_Y}/(e^{βq_Y}+e^{βq_N})`,
//! and the cost of any trade is the difference of the potential
//! `C(q) = (1/β)·ln(e^{βq_Y}+e^{βq_N})` before and after. All price math is
//! done in log-space so quantities up to |βq| ≈ 700 stay stable.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default liquidity sensitivity.
pub const DEFAULT_BETA: f64 = 0.01;

/// Default price clamp applied when a target of exactly 0 or 1 is requested.
/// Reproduces the benchmark integer volumes 880 and 990.
pub const DEFAULT_PRICE_CLAMP: f64 = 5e-5;

#[derive(Debug, Error, PartialEq)]
pub enum LmsrError {
    #[error("price {0} outside the open interval (0,1)")]
    PriceOutOfRange(f64),
    #[error("liquidity parameter must be positive, got {0}")]
    InvalidBeta(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Yes,
    No,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::Yes => Side::No,
            Side::No => Side::Yes,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Side::Yes => "Yes",
            Side::No => "No",
        }
    }
}

/// Outstanding share quantities and the liquidity parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketState {
    pub q_yes: f64,
    pub q_no: f64,
    pub beta: f64,
}

/// A signed share movement on one side: positive buys, negative sells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TradeDelta {
    pub side: Side,
    pub shares: f64,
}

impl TradeDelta {
    pub fn buy(side: Side, shares: f64) -> TradeDelta {
        TradeDelta { side, shares }
    }

    pub fn sell(side: Side, shares: f64) -> TradeDelta {
        TradeDelta {
            side,
            shares: -shares,
        }
    }
}

impl MarketState {
    pub fn new(beta: f64) -> Result<MarketState, LmsrError> {
        if !beta.is_finite() || beta <= 0.0 {
            return Err(LmsrError::InvalidBeta(beta));
        }
        Ok(MarketState {
            q_yes: 0.0,
            q_no: 0.0,
            beta,
        })
    }

    /// Market state whose opening Yes price is `p0`, holding the minimum of
    /// the two quantities at zero ("offset" shares set by the market maker).
    pub fn offset_for_price(p0: f64, beta: f64) -> Result<MarketState, LmsrError> {
        if !(p0 > 0.0 && p0 < 1.0) {
            return Err(LmsrError::PriceOutOfRange(p0));
        }
        let mut m = MarketState::new(beta)?;
        let diff = (p0 / (1.0 - p0)).ln() / beta;
        if diff >= 0.0 {
            m.q_yes = diff;
        } else {
            m.q_no = -diff;
        }
        Ok(m)
    }

    /// Yes price, computed via a numerically stable logistic and pinned
    /// strictly inside (0,1) even when the logistic saturates in floats.
    pub fn price_of_yes(&self) -> f64 {
        let x = self.beta * (self.q_no - self.q_yes);
        let p = if x >= 0.0 {
            let e = (-x).exp();
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + x.exp())
        };
        p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
    }

    /// No price; complements the Yes price exactly.
    pub fn price_of_no(&self) -> f64 {
        1.0 - self.price_of_yes()
    }

    pub fn price_of(&self, side: Side) -> f64 {
        match side {
            Side::Yes => self.price_of_yes(),
            Side::No => self.price_of_no(),
        }
    }

    /// The cost potential `C(q) = (1/β)·ln(e^{βq_Y}+e^{βq_N})`.
    pub fn cost_potential(&self) -> f64 {
        let a = self.beta * self.q_yes;
        let b = self.beta * self.q_no;
        let m = a.max(b);
        (m + ((a - m).exp() + (b - m).exp()).ln()) / self.beta
    }

    pub fn apply(&self, d: TradeDelta) -> MarketState {
        let mut next = *self;
        match d.side {
            Side::Yes => next.q_yes += d.shares,
            Side::No => next.q_no += d.shares,
        }
        next
    }

    /// Cash paid for the trade: positive for buys, negative (cash returned)
    /// for sells.
    pub fn trade_cost(&self, d: TradeDelta) -> f64 {
        self.apply(d).cost_potential() - self.cost_potential()
    }

    /// Exact (real-valued) share quantity that moves the Yes price to
    /// `target` after clipping it into `[clamp, 1-clamp]`. Buys Yes when the
    /// target is above the current price, No when below.
    pub fn shares_to_target_exact(&self, target: f64, clamp: f64) -> TradeDelta {
        let t = target.clamp(clamp, 1.0 - clamp);
        let p = self.price_of_yes();
        if t > p {
            let dq = ((t * (1.0 - p)) / (p * (1.0 - t))).ln() / self.beta;
            TradeDelta::buy(Side::Yes, dq)
        } else if t < p {
            let dq = ((p * (1.0 - t)) / (t * (1.0 - p))).ln() / self.beta;
            TradeDelta::buy(Side::No, dq)
        } else {
            TradeDelta::buy(Side::Yes, 0.0)
        }
    }

    /// Like [`shares_to_target_exact`](Self::shares_to_target_exact) but with
    /// the share count truncated toward zero to a whole number of shares.
    pub fn shares_to_target(&self, target: f64, clamp: f64) -> TradeDelta {
        let mut d = self.shares_to_target_exact(target, clamp);
        d.shares = d.shares.trunc();
        d
    }

    /// Largest whole number of `side` shares purchasable with `cash`,
    /// found by bisection on the monotone cost function.
    pub fn max_affordable(&self, cash: f64, side: Side) -> u64 {
        if cash <= 0.0 {
            return 0;
        }
        let affordable = |n: u64| self.trade_cost(TradeDelta::buy(side, n as f64)) <= cash;
        if !affordable(1) {
            return 0;
        }
        // Each share costs at most 1 in the limit, so cash + slack bounds the
        // count; grow geometrically to find a hard upper bracket.
        let mut lo = 1u64;
        let mut hi = 2u64;
        while affordable(hi) {
            lo = hi;
            hi = hi.saturating_mul(2);
            if hi > (cash as u64 + 2).saturating_mul(4).max(1 << 20) {
                break;
            }
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if affordable(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }
}

/// Settlement profit for a position acquired at `cost`: winning shares pay 1
/// each, losing shares pay nothing.
pub fn settle_profit(side: Side, shares: f64, cost: f64, outcome: Side) -> f64 {
    if side == outcome {
        shares - cost
    } else {
        -cost
    }
}

/// One row of the price-impact preview shown to traders.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpactRow {
    pub side: Side,
    pub buy: bool,
    /// Display label: "1", "5", "(around 25%)", "(max buyable)", ...
    pub label: String,
    pub shares: u64,
    pub price_before: f64,
    pub price_after: f64,
}

/// Before/after prices of the side's own instrument for a ladder of trade
/// sizes: 1, 5, 10, 20 shares and roughly 25/50/75/100 percent of the
/// maximum buyable (or sellable) amount.
pub fn impact_preview(
    m: &MarketState,
    cash: f64,
    yes_held: u64,
    no_held: u64,
) -> Vec<ImpactRow> {
    let mut rows = Vec::new();
    for side in [Side::Yes, Side::No] {
        let before = m.price_of(side);
        let max_buy = m.max_affordable(cash, side);
        let max_sell = match side {
            Side::Yes => yes_held,
            Side::No => no_held,
        };
        for (buy, max) in [(true, max_buy), (false, max_sell)] {
            for n in [1u64, 5, 10, 20] {
                if n <= max {
                    rows.push(row(m, side, buy, n, format!("{n}"), before));
                }
            }
            for pct in [25u64, 50, 75] {
                let n = max * pct / 100;
                if n >= 1 {
                    rows.push(row(m, side, buy, n, format!("(around {pct}%) {n}"), before));
                }
            }
            if max >= 1 {
                let label = if buy {
                    format!("(max buyable) {max}")
                } else {
                    format!("(max sellable) {max}")
                };
                rows.push(row(m, side, buy, max, label, before));
            }
        }
    }
    rows
}

fn row(m: &MarketState, side: Side, buy: bool, n: u64, label: String, before: f64) -> ImpactRow {
    let shares = if buy { n as f64 } else { -(n as f64) };
    let after = m.apply(TradeDelta { side, shares }).price_of(side);
    ImpactRow {
        side,
        buy,
        label,
        shares: n,
        price_before: before,
        price_after: after,
    }
}
