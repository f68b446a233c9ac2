//! Remote agent behavior against a loopback stub endpoint: successful
//! decisions execute, parse failures and stalls degrade to Hold with a
//! note after retries, and credentials travel as a bearer header.

mod common;

use pmsim::agents::{Action, RemoteAgent, RemoteClientConfig};
use pmsim::engine::{run_market, Clock, MarketConfig};
use pmsim::knowledge::{make_structure, StructureId};
use std::time::Duration;

fn client(endpoint: &str) -> RemoteClientConfig {
    RemoteClientConfig {
        endpoint: endpoint.to_string(),
        model: "stub-model".into(),
        temperature: 1.0,
        max_attempts: 3,
        timeout_ms: 80,
        backoff_ms: 1,
        key_env: None,
        requests_per_minute: None,
        intelligence: None,
    }
}

fn remote_team(config: &RemoteClientConfig) -> Vec<Box<dyn pmsim::agents::Agent>> {
    (0..3)
        .map(|_| Box::new(RemoteAgent::new(config.clone(), None)) as Box<dyn pmsim::agents::Agent>)
        .collect()
}

#[test]
fn fixed_buy_reply_is_executed() {
    let stub = common::spawn_stub(|_, prompt| {
        let (yes, _) = common::instrument_ids_from_prompt(prompt).unwrap();
        common::StubReply::Content(format!(
            "{{\"action\": \"BUY\", \"instrument_id\": {yes}, \"size\": 25, \"private_reasoning\": \"fixed\"}}"
        ))
    });
    let config = MarketConfig::new(make_structure(StructureId::Easy), 3, 0.5);
    let t = run_market(config, &mut remote_team(&client(&stub.endpoint)), Clock::Wall).unwrap();
    assert!(t.trades.iter().all(|tr| tr.action == Action::Buy && tr.executed == 25));
    assert_eq!(t.prompts.len(), 3, "one prompt per round is recorded");
}

#[test]
fn garbage_replies_exhaust_retries_and_hold() {
    let stub = common::spawn_stub(|_, _| common::StubReply::Garbage);
    let config = MarketConfig::new(make_structure(StructureId::Easy), 3, 0.5);
    let t = run_market(config, &mut remote_team(&client(&stub.endpoint)), Clock::Wall).unwrap();
    for trade in &t.trades {
        assert_eq!(trade.action, Action::Hold);
        let note = trade.note.as_deref().unwrap_or_default();
        assert!(note.contains("agent failure"), "note: {note}");
    }
    // three attempts per round, three rounds
    assert_eq!(stub.hits.load(std::sync::atomic::Ordering::SeqCst), 9);
    assert_eq!(t.final_price, 0.5);
}

#[test]
fn stalls_beyond_the_timeout_hold_with_a_note() {
    let stub = common::spawn_stub(|_, _| common::StubReply::Stall(Duration::from_millis(400)));
    let mut config = client(&stub.endpoint);
    config.max_attempts = 2;
    let market = MarketConfig::new(make_structure(StructureId::Easy), 3, 0.5);
    let t = run_market(market, &mut remote_team(&config), Clock::Wall).unwrap();
    for trade in &t.trades {
        assert_eq!(trade.action, Action::Hold);
        assert!(trade.note.as_deref().unwrap_or_default().contains("agent failure"));
    }
}

#[test]
fn api_key_from_environment_is_sent_as_bearer() {
    let stub = common::spawn_stub(|_, _| {
        common::StubReply::Content("{\"action\": \"HOLD\"}".to_string())
    });
    std::env::set_var("PMSIM_TEST_API_KEY", "sk-test-123");
    let mut config = client(&stub.endpoint);
    config.key_env = Some("PMSIM_TEST_API_KEY".into());
    let mut agent = RemoteAgent::new(config, None);
    let ctx = common::exemplar_context();
    let reply = pmsim::agents::Agent::decide(&mut agent, &ctx).unwrap();
    assert_eq!(reply.decision.action, Action::Hold);
    let headers = stub.request_headers.lock().unwrap();
    assert!(
        headers
            .iter()
            .any(|h| h.to_ascii_lowercase().contains("authorization: bearer sk-test-123")),
        "headers: {headers:?}"
    );
}
