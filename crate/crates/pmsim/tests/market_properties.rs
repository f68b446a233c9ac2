//! Cross-module properties of simulated markets: oracle teams track the
//! theoretical price path, prompts never leak private information, and a
//! round's prompt is a pure function of the transcript prefix.

mod common;

use pmsim::agents::prompt::{build_prompt, private_information_text};
use pmsim::engine::{Market, Clock, MarketConfig};
use pmsim::knowledge::{make_structure, myopic_trace_rounds, StructureId};
use pmsim::lmsr::DEFAULT_PRICE_CLAMP;

#[test]
fn oracle_markets_track_the_theoretical_prices() {
    // Within one share's price impact, every round's closing price matches
    // the clamped theoretical posterior, across presets, starting prices
    // and durations.
    for preset in StructureId::ALL {
        let structure = make_structure(preset);
        let trace = myopic_trace_rounds(&structure, 9);
        for p0 in [0.3, 0.5, 0.7] {
            for rounds in [3u32, 6, 9] {
                let config = MarketConfig::new(structure.clone(), rounds, p0);
                let mut agents = common::oracle_team(&structure);
                let t = pmsim::engine::run_market(config, &mut agents, Clock::Logical).unwrap();
                for trade in &t.trades {
                    let theory = trace[trade.round as usize - 1]
                        .price
                        .clamp(DEFAULT_PRICE_CLAMP, 1.0 - DEFAULT_PRICE_CLAMP);
                    let impact = 0.01 * theory * (1.0 - theory) + 1e-6;
                    assert!(
                        (trade.price_after - theory).abs() <= impact.max(0.003),
                        "{preset:?} p0={p0} rounds={rounds} round {}: price {} vs theory {theory}",
                        trade.round,
                        trade.price_after
                    );
                }
            }
        }
    }
}

#[test]
fn prompts_never_contain_other_traders_private_information() {
    for preset in StructureId::ALL {
        let structure = make_structure(preset);
        let mut config = MarketConfig::new(structure.clone(), 9, 0.5);
        config.comments_allowed = true;
        let mut market = Market::open(config, Clock::Logical).unwrap();
        let mut agents = common::oracle_team(&structure);
        for round in 1..=9u32 {
            let seat = market.seat_for_round(round);
            let ctx = market.agent_context(seat, round);
            let prompt = build_prompt(&ctx);
            for other in 0..3 {
                if other == seat {
                    continue;
                }
                let private = private_information_text(&structure, other);
                assert!(
                    !prompt.contains(&private),
                    "{preset:?} round {round}: seat {seat} prompt leaks trader {other}"
                );
            }
            assert!(prompt.contains(&private_information_text(&structure, seat)));
            let decision = match agents[seat].decide(&ctx) {
                Ok(reply) => reply.decision,
                Err(_) => pmsim::agents::Decision::hold(),
            };
            market.validate_and_execute(seat, round, &decision, None);
        }
    }
}

#[test]
fn noise_teams_score_strictly_worse_than_oracle_teams() {
    use pmsim::metrics::MarketScore;
    let structure = make_structure(StructureId::Easy);
    let mean_mse = |noise: bool| {
        let mut total = 0.0;
        for i in 0..50u64 {
            let mut config = MarketConfig::new(structure.clone(), 3, 0.5);
            config.market_id = format!("smoke-{noise}-{i}");
            let mut agents: Vec<Box<dyn pmsim::agents::Agent>> = (0..3)
                .map(|seat| {
                    if noise {
                        Box::new(pmsim::agents::NoiseAgent::new(i * 3 + seat))
                            as Box<dyn pmsim::agents::Agent>
                    } else {
                        Box::new(pmsim::agents::MyopicOracle::new(
                            structure.clone(),
                            seat as usize,
                            DEFAULT_PRICE_CLAMP,
                        ))
                    }
                })
                .collect();
            let t = pmsim::engine::run_market(config, &mut agents, Clock::Logical).unwrap();
            total += MarketScore::from_transcript(&t).squared_error;
        }
        total / 50.0
    };
    let oracle = mean_mse(false);
    let noise = mean_mse(true);
    assert!(
        noise > oracle * 100.0,
        "noise MSE {noise} should dominate oracle MSE {oracle}"
    );
}

#[test]
fn round_prompts_are_pure_functions_of_the_prefix() {
    let structure = make_structure(StructureId::Medium);
    let run_prompts = || {
        let mut config = MarketConfig::new(structure.clone(), 6, 0.3);
        config.comments_allowed = true;
        let mut market = Market::open(config, Clock::Logical).unwrap();
        let mut agents = common::oracle_team(&structure);
        let mut prompts = Vec::new();
        for round in 1..=6u32 {
            let seat = market.seat_for_round(round);
            let ctx = market.agent_context(seat, round);
            // rendering twice from the same prefix is byte-identical
            let once = build_prompt(&ctx);
            assert_eq!(once, build_prompt(&ctx));
            prompts.push(once);
            let decision = agents[seat]
                .decide(&ctx)
                .map(|r| r.decision)
                .unwrap_or_else(|_| pmsim::agents::Decision::hold());
            market.validate_and_execute(seat, round, &decision, None);
        }
        prompts
    };
    assert_eq!(run_prompts(), run_prompts());
}

#[test]
fn engine_contexts_carry_the_disclosure_block() {
    let structure = make_structure(StructureId::VeryHard);
    let mut config = MarketConfig::new(structure.clone(), 3, 0.5);
    config.disclosure = true;
    config.intelligences = Some(vec![30.0, 46.0, 41.0]);
    let market = Market::open(config, Clock::Logical).unwrap();
    let prompt = build_prompt(&market.agent_context(1, 2));
    assert!(prompt.contains("=== Experimental Findings & Strategic Context ==="));
    assert!(prompt.contains("* Your Intelligence (trader_2): 46"));
    assert!(prompt.contains("* Intelligence of trader_1: 30"));
    assert!(prompt.contains("* Average Group Intelligence: 39.00"));
    assert!(prompt.contains("* Current Status: You are trading in a Level 4 market."));

    // disclosure off: no findings block at all
    let mut config = MarketConfig::new(structure.clone(), 3, 0.5);
    config.disclosure = false;
    let market = Market::open(config, Clock::Logical).unwrap();
    let prompt = build_prompt(&market.agent_context(1, 2));
    assert!(!prompt.contains("Experimental Findings"));
}
