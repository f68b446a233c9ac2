//! Shared support for the integration suites: scripted teams, a rational
//! brute-force separability oracle, random structure generation, a stub
//! chat-completion server, and the transcript-exemplar prompt fixture.

#![allow(dead_code)]

use pmsim::agents::{
    AgentContext, Action, Agent, CommentEntry, HistoryEntry, MyopicOracle, Objective,
    ReasoningEntry,
};
use pmsim::engine::{run_market, Clock, MarketConfig, Transcript};
use pmsim::knowledge::{
    make_structure, InfoStructure, Partition, Prior, Security, StateSet, StateSpace, StructureId,
};
use pmsim::lmsr::{impact_preview, MarketState, Side, TradeDelta, DEFAULT_PRICE_CLAMP};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

pub fn oracle_team(structure: &InfoStructure) -> Vec<Box<dyn Agent>> {
    (0..structure.n_traders())
        .map(|i| {
            Box::new(MyopicOracle::new(structure.clone(), i, DEFAULT_PRICE_CLAMP))
                as Box<dyn Agent>
        })
        .collect()
}

pub fn run_oracle_market(preset: StructureId, rounds: u32, p0: f64) -> Transcript {
    let structure = make_structure(preset);
    let mut config = MarketConfig::new(structure.clone(), rounds, p0);
    config.market_id = format!("{}-r{rounds}-p{p0}", preset.label());
    let mut agents = oracle_team(&structure);
    run_market(config, &mut agents, Clock::Logical).expect("oracle market runs")
}

/// Per-trader volume and profit of a 3-round oracle market, averaged over
/// the three initial prices (the averaging the benchmark values assume).
pub fn averaged_oracle_stats(preset: StructureId) -> (Vec<f64>, Vec<f64>) {
    let mut volumes = vec![0.0; 3];
    let mut profits = vec![0.0; 3];
    for p0 in [0.3, 0.5, 0.7] {
        let t = run_oracle_market(preset, 3, p0);
        for trade in &t.trades {
            volumes[trade.trader] += trade.executed as f64;
        }
        for (acc, p) in profits.iter_mut().zip(&t.profits) {
            *acc += p;
        }
    }
    for v in &mut volumes {
        *v /= 3.0;
    }
    for p in &mut profits {
        *p /= 3.0;
    }
    (volumes, profits)
}

// ---------------------------------------------------------------------------
// Rational brute-force separability oracle
// ---------------------------------------------------------------------------

/// Exhaustive search for a non-separability witness over priors with
/// denominator at most `max_denominator`, in exact integer arithmetic.
/// Payoffs must be multiples of 1/4 so candidate values scale to integers.
pub fn grid_oracle_is_separable(structure: &InfoStructure, max_denominator: u64) -> bool {
    let n = structure.space.n_states();
    // scale payoffs and candidate values by 4
    let p4: Vec<i64> = structure
        .security
        .payoffs()
        .iter()
        .map(|&x| {
            let scaled = (x * 4.0).round();
            assert!(
                (x * 4.0 - scaled).abs() < 1e-9,
                "oracle needs quarter-integer payoffs"
            );
            scaled as i64
        })
        .collect();
    let mut distinct = p4.clone();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return true;
    }
    let mut candidates: Vec<i64> = Vec::new();
    for w in distinct.windows(2) {
        // midpoint of two quarter-scaled values is an eighth; rescale all by 2
        candidates.push(w[0] + w[1]);
    }
    for &v in &distinct[1..distinct.len() - 1] {
        candidates.push(2 * v);
    }
    // payoffs now scaled by 8 to match the doubled candidates
    let p8: Vec<i64> = p4.iter().map(|&x| 2 * x).collect();

    let cells: Vec<&StateSet> = structure
        .partitions()
        .iter()
        .flat_map(|p| p.cells().iter())
        .collect();

    for &v8 in &candidates {
        let mut mu = vec![0u64; n];
        for d in 1..=max_denominator {
            if search_compositions(&mut mu, 0, d, &p8, v8, &cells) {
                return false;
            }
        }
    }
    true
}

fn search_compositions(
    mu: &mut Vec<u64>,
    idx: usize,
    remaining: u64,
    p8: &[i64],
    v8: i64,
    cells: &[&StateSet],
) -> bool {
    if idx == mu.len() - 1 {
        mu[idx] = remaining;
        let ok = is_witness(mu, p8, v8, cells);
        mu[idx] = 0;
        return ok;
    }
    for take in 0..=remaining {
        mu[idx] = take;
        if search_compositions(mu, idx + 1, remaining - take, p8, v8, cells) {
            mu[idx] = 0;
            return true;
        }
    }
    mu[idx] = 0;
    false
}

fn is_witness(mu: &[u64], p8: &[i64], v8: i64, cells: &[&StateSet]) -> bool {
    // (i) some support state disagrees with v
    if !mu
        .iter()
        .enumerate()
        .any(|(s, &m)| m > 0 && p8[s] != v8)
    {
        return false;
    }
    // (ii) every cell is balanced: sum over the cell of mu*(X - v) = 0
    cells.iter().all(|cell| {
        let total: i64 = cell.iter().map(|s| mu[s] as i64 * (p8[s] - v8)).sum();
        total == 0
    })
}

/// Random structure on 4 states with 2 traders; payoffs are binary or
/// quarter-integer ternary so the grid oracle stays exact.
pub fn random_small_structure(rng: &mut ChaCha12Rng) -> InfoStructure {
    let space = StateSpace::new(vec!["d_a".into(), "d_b".into()]).unwrap();
    let n = space.n_states();
    let partitions: Vec<Partition> = (0..2)
        .map(|_| {
            let k = rng.random_range(1..=3usize);
            let assignment: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
            let mut cells: Vec<StateSet> = Vec::new();
            let mut labels: Vec<usize> = Vec::new();
            for (state, &label) in assignment.iter().enumerate() {
                let idx = match labels.iter().position(|&l| l == label) {
                    Some(i) => i,
                    None => {
                        labels.push(label);
                        cells.push(StateSet::empty(n));
                        cells.len() - 1
                    }
                };
                cells[idx].insert(state);
            }
            Partition::new(cells).expect("every used label has a state")
        })
        .collect();
    let payoff: Vec<f64> = loop {
        let ternary = rng.random_bool(0.3);
        let values: Vec<f64> = (0..n)
            .map(|_| {
                if ternary {
                    [0.0, 0.5, 1.0][rng.random_range(0..3usize)]
                } else {
                    f64::from(rng.random_bool(0.5))
                }
            })
            .collect();
        let distinct = values.iter().any(|&v| v != values[0]);
        if distinct {
            break values;
        }
    };
    InfoStructure::new(
        space,
        Prior::uniform(n),
        partitions,
        Security::new(payoff),
        rng.random_range(0..n),
    )
    .unwrap()
}

// ---------------------------------------------------------------------------
// Stub chat-completion server
// ---------------------------------------------------------------------------

pub enum StubReply {
    /// Chat-completion envelope whose content is the given text.
    Content(String),
    /// Unparseable prose.
    Garbage,
    /// Sleep before answering, to trip the client timeout.
    Stall(Duration),
}

pub struct StubServer {
    pub endpoint: String,
    pub hits: Arc<AtomicU64>,
    /// Raw header block of each request, in arrival order.
    pub request_headers: Arc<std::sync::Mutex<Vec<String>>>,
    stop: Arc<AtomicBool>,
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
    }
}

/// Serves HTTP POSTs on a loopback port. The behavior closure sees the
/// request index and the extracted prompt text and picks the reply.
pub fn spawn_stub<F>(behavior: F) -> StubServer
where
    F: Fn(u64, &str) -> StubReply + Send + Sync + 'static,
{
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind stub");
    let endpoint = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    listener.set_nonblocking(true).unwrap();
    let hits = Arc::new(AtomicU64::new(0));
    let stop = Arc::new(AtomicBool::new(false));
    let request_headers = Arc::new(std::sync::Mutex::new(Vec::new()));
    let server = StubServer {
        endpoint,
        hits: hits.clone(),
        request_headers: request_headers.clone(),
        stop: stop.clone(),
    };
    let behavior = Arc::new(behavior);
    std::thread::spawn(move || {
        while !stop.load(Ordering::SeqCst) {
            match listener.accept() {
                Ok((stream, _)) => {
                    let idx = hits.fetch_add(1, Ordering::SeqCst);
                    let behavior = behavior.clone();
                    let headers = request_headers.clone();
                    // one thread per connection so a stalled reply never
                    // blocks concurrent requests
                    std::thread::spawn(move || {
                        handle_connection(stream, idx, &*behavior, &headers)
                    });
                }
                Err(ref e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    std::thread::sleep(Duration::from_millis(1));
                }
                Err(_) => break,
            }
        }
    });
    server
}

fn handle_connection<F>(
    mut stream: std::net::TcpStream,
    idx: u64,
    behavior: &F,
    request_headers: &std::sync::Mutex<Vec<String>>,
) where
    F: Fn(u64, &str) -> StubReply,
{
    stream
        .set_read_timeout(Some(Duration::from_millis(500)))
        .ok();
    let mut reader = BufReader::new(stream.try_clone().expect("clone stream"));
    let mut content_length = 0usize;
    let mut head = String::new();
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).is_err() || line.trim().is_empty() {
            break;
        }
        if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
            content_length = v.trim().parse().unwrap_or(0);
        }
        head.push_str(&line);
    }
    request_headers.lock().unwrap().push(head);
    let mut body = vec![0u8; content_length];
    if reader.read_exact(&mut body).is_err() {
        return;
    }
    let body = String::from_utf8_lossy(&body).to_string();
    let prompt = serde_json::from_str::<serde_json::Value>(&body)
        .ok()
        .and_then(|v| {
            v.pointer("/messages/0/content")
                .and_then(|c| c.as_str())
                .map(str::to_string)
        })
        .unwrap_or(body);

    let reply = behavior(idx, &prompt);
    let payload = match reply {
        StubReply::Content(content) => serde_json::json!({
            "choices": [{"message": {"role": "assistant", "content": content}}]
        })
        .to_string(),
        StubReply::Garbage => "I refuse to answer in the requested format.".to_string(),
        StubReply::Stall(wait) => {
            std::thread::sleep(wait);
            serde_json::json!({
                "choices": [{"message": {"role": "assistant", "content": "{\"action\":\"HOLD\"}"}}]
            })
            .to_string()
        }
    };
    let _ = write!(
        stream,
        "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{}",
        payload.len(),
        payload
    );
    let _ = stream.flush();
}

/// Yes/No instrument ids as printed in a prompt's decision schema.
pub fn instrument_ids_from_prompt(prompt: &str) -> Option<(u64, u64)> {
    let start = prompt.find("the ID number of the instrument (")?;
    let rest = &prompt[start + "the ID number of the instrument (".len()..];
    let yes_end = rest.find(" for Yes, ")?;
    let yes = rest[..yes_end].parse().ok()?;
    let rest = &rest[yes_end + " for Yes, ".len()..];
    let no_end = rest.find(" for No)")?;
    let no = rest[..no_end].parse().ok()?;
    Some((yes, no))
}

// ---------------------------------------------------------------------------
// Transcript-exemplar prompt fixture
// ---------------------------------------------------------------------------

/// Rebuilds a six-round market mid-flight, as the reference transcript fixture:
/// trader_1 holds 534 Yes shares bought in round 1, traders 2 and 3 each
/// bought 500 more, comments are on and the objective is strategic.
pub fn exemplar_context() -> AgentContext {
    let names: Vec<String> = vec!["trader_1".into(), "trader_2".into(), "trader_3".into()];
    let m0 = MarketState::offset_for_price(0.5, 0.01).unwrap();
    let m1 = m0.apply(TradeDelta::buy(Side::Yes, 534.0));
    let m2 = m1.apply(TradeDelta::buy(Side::Yes, 500.0));
    let m3 = m2.apply(TradeDelta::buy(Side::Yes, 500.0));
    let cash = 1000.0 - m0.trade_cost(TradeDelta::buy(Side::Yes, 534.0));
    let history = vec![
        HistoryEntry {
            round: 1,
            trader: 0,
            trader_name: names[0].clone(),
            action: Action::Buy,
            side: Side::Yes,
            executed: 534,
            price_before: m0.price_of_yes(),
            price_after: m1.price_of_yes(),
            timestamp: "2026-01-10 19:13:14".into(),
        },
        HistoryEntry {
            round: 2,
            trader: 1,
            trader_name: names[1].clone(),
            action: Action::Buy,
            side: Side::Yes,
            executed: 500,
            price_before: m1.price_of_yes(),
            price_after: m2.price_of_yes(),
            timestamp: "2026-01-10 19:13:59".into(),
        },
        HistoryEntry {
            round: 3,
            trader: 2,
            trader_name: names[2].clone(),
            action: Action::Buy,
            side: Side::Yes,
            executed: 500,
            price_before: m2.price_of_yes(),
            price_after: m3.price_of_yes(),
            timestamp: "2026-01-10 19:14:44".into(),
        },
    ];
    let comments = vec![
        CommentEntry {
            round: 1,
            trader_name: names[0].clone(),
            text: "Based on my analysis, I believe the probability of Company X exceeding 1 million in profits is significantly higher than the current market price of 0.50 suggests. I am taking a substantial position in Yes shares.".into(),
            timestamp: "2026-01-10 19:13:14".into(),
        },
        CommentEntry {
            round: 2,
            trader_name: names[1].clone(),
            text: "I believe the probability of Company X exceeding 1 million in profits is substantially higher than the current market price reflects. Given the market dynamics and available information, I am taking a significant position in Yes shares to capitalize on this opportunity.".into(),
            timestamp: "2026-01-10 19:13:59".into(),
        },
        CommentEntry {
            round: 3,
            trader_name: names[2].clone(),
            text: "I believe the probability of Company X exceeding 1 million in profits is very high. My analysis indicates a substantial likelihood of success, and the current market pricing presents a compelling opportunity. I am taking a significant position in Yes shares.".into(),
            timestamp: "2026-01-10 19:14:44".into(),
        },
    ];
    let structure = make_structure(StructureId::Easy);
    let max_buy_yes = m3.max_affordable(cash, Side::Yes);
    let max_buy_no = m3.max_affordable(cash, Side::No);
    AgentContext {
        market_id: "5gw55w".into(),
        question: pmsim::agents::prompt::MARKET_QUESTION.into(),
        description: String::new(),
        trader: 0,
        trader_names: names,
        total_rounds: 6,
        current_round: 4,
        comments_allowed: true,
        objective: Objective::Strategic,
        beta: 0.01,
        public_info: pmsim::agents::prompt::public_information_text(&structure),
        private_info: pmsim::agents::prompt::private_information_text(&structure, 0),
        price_yes: m3.price_of_yes(),
        history,
        comments,
        own_reasonings: vec![ReasoningEntry {
            round: 1,
            text: "I know d_a is true. For the market to resolve Yes, at least 2 of 3 dimensions must be true. Since d_a is true, I need at least 1 more dimension (d_b or d_c) to be true. The probability of at least one of d_b or d_c being true is 1 - P(both false) = 1 - 0.25 = 0.75. My true belief q = 0.75, but current price p = 0.50. This is a significant edge. I should buy Yes shares aggressively. Buying around 534 shares (50% of my capital) captures most of this edge.".into(),
        }],
        cash,
        yes_held: 534,
        no_held: 0,
        max_buy_yes,
        max_buy_yes_cost: m3.trade_cost(TradeDelta::buy(Side::Yes, max_buy_yes as f64)),
        max_buy_no,
        max_buy_no_cost: m3.trade_cost(TradeDelta::buy(Side::No, max_buy_no as f64)),
        impact: impact_preview(&m3, cash, 534, 0),
        disclosure: None,
        instrument_yes: 4702,
        instrument_no: 4703,
    }
}
