//! Remote LLM agent: chat-completion client and decision parsing.
//!
//! The client is stateless across rounds; every call carries the full
//! prompt. Transport failures and unparseable replies are retried with
//! exponential backoff and finally surface as errors, which the engine
//! downgrades to Hold so a market never aborts mid-run.

use super::{Action, Agent, AgentContext, AgentError, AgentReply, Decision};
use crate::agents::prompt::build_prompt;
use crate::lmsr::Side;
use serde::{Deserialize, Serialize};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RemoteClientConfig {
    /// Full URL of a chat-completion endpoint.
    pub endpoint: String,
    pub model: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    /// Total attempts per decision, including the first.
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    /// Base backoff; doubles after each failed attempt (1s, 2s, 4s, ...).
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    /// Name of the environment variable holding the API key, if any.
    #[serde(default)]
    pub key_env: Option<String>,
    #[serde(default)]
    pub requests_per_minute: Option<u32>,
    /// Intelligence index surfaced in the disclosure treatment.
    #[serde(default)]
    pub intelligence: Option<f64>,
}

fn default_temperature() -> f64 {
    1.0
}
fn default_attempts() -> u32 {
    3
}
fn default_timeout_ms() -> u64 {
    30_000
}
fn default_backoff_ms() -> u64 {
    1_000
}

/// Client-level rate limiter shared across markets.
pub struct TokenBucket {
    per_minute: f64,
    state: Mutex<(f64, Instant)>,
}

impl TokenBucket {
    pub fn new(per_minute: u32) -> TokenBucket {
        TokenBucket {
            per_minute: per_minute as f64,
            state: Mutex::new((per_minute as f64, Instant::now())),
        }
    }

    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut guard = self.state.lock().unwrap();
                let (ref mut tokens, ref mut last) = *guard;
                let now = Instant::now();
                *tokens = (*tokens + now.duration_since(*last).as_secs_f64() * self.per_minute
                    / 60.0)
                    .min(self.per_minute);
                *last = now;
                if *tokens >= 1.0 {
                    *tokens -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - *tokens) * 60.0 / self.per_minute)
            };
            std::thread::sleep(wait);
        }
    }
}

pub struct RemoteAgent {
    config: RemoteClientConfig,
    http: ureq::Agent,
    limiter: Option<Arc<TokenBucket>>,
    api_key: Option<String>,
}

impl RemoteAgent {
    pub fn new(config: RemoteClientConfig, limiter: Option<Arc<TokenBucket>>) -> RemoteAgent {
        let api_key = config
            .key_env
            .as_ref()
            .and_then(|name| std::env::var(name).ok());
        let http = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(true)
            .build()
            .into();
        RemoteAgent {
            config,
            http,
            limiter,
            api_key,
        }
    }

    fn call_once(&self, prompt: &str) -> Result<String, AgentError> {
        if let Some(limiter) = &self.limiter {
            limiter.acquire();
        }
        let body = serde_json::json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": [{"role": "user", "content": prompt}],
        });
        let mut req = self
            .http
            .post(&self.config.endpoint)
            .header("content-type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("authorization", format!("Bearer {key}"));
        }
        let mut resp = req.send(body.to_string()).map_err(classify_transport)?;
        resp.body_mut()
            .read_to_string()
            .map_err(|e| AgentError::Transport(e.to_string()))
    }
}

fn classify_transport(e: ureq::Error) -> AgentError {
    match e {
        ureq::Error::Timeout(t) => AgentError::Timeout(t.to_string()),
        ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => {
            AgentError::Timeout(io.to_string())
        }
        other => AgentError::Transport(other.to_string()),
    }
}

/// Pulls the assistant text out of a chat-completion response body. Bodies
/// that are not in the wire format are passed through untouched, which lets
/// bare-JSON stubs work.
fn extract_content(body: &str) -> String {
    if let Ok(v) = serde_json::from_str::<serde_json::Value>(body) {
        if let Some(content) = v
            .pointer("/choices/0/message/content")
            .and_then(|c| c.as_str())
        {
            return content.to_string();
        }
    }
    body.to_string()
}

impl Agent for RemoteAgent {
    fn kind(&self) -> &'static str {
        "remote"
    }

    fn decide(&mut self, ctx: &AgentContext) -> Result<AgentReply, AgentError> {
        let prompt = build_prompt(ctx);
        let mut last_err = AgentError::Transport("no attempts made".into());
        for attempt in 0..self.config.max_attempts.max(1) {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(
                    self.config.backoff_ms << (attempt - 1),
                ));
            }
            match self.call_once(&prompt) {
                Ok(body) => {
                    let content = extract_content(&body);
                    match parse_decision(&content, ctx.instrument_yes, ctx.instrument_no) {
                        Ok(decision) => {
                            return Ok(AgentReply {
                                decision,
                                prompt: Some(prompt),
                                raw_reply: Some(content),
                            });
                        }
                        Err(e) => last_err = e,
                    }
                }
                Err(e) => last_err = e,
            }
        }
        Err(last_err)
    }
}

/// Extracts the first well-formed JSON object from the reply, tolerating
/// surrounding prose and code fences, and validates it into a [`Decision`].
pub fn parse_decision(text: &str, yes_id: u32, no_id: u32) -> Result<Decision, AgentError> {
    for candidate in json_objects(text) {
        if let Ok(value) = serde_json::from_str::<serde_json::Value>(candidate) {
            if value.get("action").is_some() {
                return decision_from_value(&value, yes_id, no_id);
            }
        }
    }
    Err(AgentError::Parse(format!(
        "no JSON decision object in reply of {} bytes",
        text.len()
    )))
}

/// Balanced `{...}` spans in order of appearance, string-aware.
fn json_objects(text: &str) -> impl Iterator<Item = &str> {
    let bytes = text.as_bytes();
    let mut spans = Vec::new();
    let mut start = None;
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate() {
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
            continue;
        }
        match b {
            b'"' if depth > 0 => in_string = true,
            b'{' => {
                if depth == 0 {
                    start = Some(i);
                }
                depth += 1;
            }
            b'}' if depth > 0 => {
                depth -= 1;
                if depth == 0 {
                    spans.push((start.take().unwrap(), i + 1));
                }
            }
            _ => {}
        }
    }
    spans.into_iter().map(move |(a, b)| &text[a..b])
}

fn decision_from_value(
    value: &serde_json::Value,
    yes_id: u32,
    no_id: u32,
) -> Result<Decision, AgentError> {
    let action_text = value
        .get("action")
        .and_then(|a| a.as_str())
        .map(str::to_ascii_uppercase)
        .ok_or_else(|| AgentError::Parse("action is not a string".into()))?;
    let action = match action_text.as_str() {
        "BUY" => Action::Buy,
        "SELL" => Action::Sell,
        "HOLD" => Action::Hold,
        other => return Err(AgentError::Parse(format!("unknown action {other:?}"))),
    };

    let instrument = match value.get("instrument_id") {
        Some(serde_json::Value::Number(n)) => n.as_u64(),
        Some(serde_json::Value::String(s)) => s.trim().parse::<u64>().ok(),
        _ => None,
    };
    let side = match instrument {
        Some(id) if id == yes_id as u64 => Side::Yes,
        Some(id) if id == no_id as u64 => Side::No,
        None | Some(_) if action == Action::Hold => Side::Yes,
        Some(id) => {
            return Err(AgentError::Parse(format!("unknown instrument id {id}")));
        }
        None => return Err(AgentError::Parse("missing instrument_id".into())),
    };

    let size = match value.get("size") {
        Some(serde_json::Value::Number(n)) => n
            .as_i64()
            .or_else(|| n.as_f64().map(|f| f.trunc() as i64))
            .ok_or_else(|| AgentError::Parse("size is not an integer".into()))?,
        Some(serde_json::Value::String(s)) => s
            .trim()
            .parse::<f64>()
            .map(|f| f.trunc() as i64)
            .map_err(|_| AgentError::Parse(format!("size {s:?} is not a number")))?,
        None if action == Action::Hold => 0,
        _ => return Err(AgentError::Parse("missing size".into())),
    };

    let text_field = |key: &str| {
        value
            .get(key)
            .and_then(|v| v.as_str())
            .unwrap_or_default()
            .to_string()
    };
    Ok(Decision {
        action,
        side,
        size,
        public_justification: text_field("public_justification"),
        private_reasoning: text_field("private_reasoning"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_realistic_hold_reply() {
        let reply = r#"{
  "action": "HOLD",
  "instrument_id": "4702",
  "size": 0,
  "public_justification": "The market price of Yes shares has reached £1.00.",
  "private_reasoning": "My true belief q = 0.75 based on d_a being true."
}"#;
        let d = parse_decision(reply, 4702, 4703).unwrap();
        assert_eq!(d.action, Action::Hold);
        assert_eq!(d.size, 0);
        assert!(d.public_justification.contains("reached £1.00"));
        assert!(d.private_reasoning.contains("q = 0.75"));
    }

    #[test]
    fn parses_fenced_object_with_prose() {
        let reply = "Sure! Here is my decision:\n```json\n{\"action\": \"BUY\", \"instrument_id\": 11, \"size\": 25}\n```\nGood luck!";
        let d = parse_decision(reply, 11, 12).unwrap();
        assert_eq!(d.action, Action::Buy);
        assert_eq!(d.side, Side::Yes);
        assert_eq!(d.size, 25);
    }

    #[test]
    fn refusals_and_garbage_fail() {
        assert!(parse_decision("I refuse", 1, 2).is_err());
        assert!(parse_decision("{\"action\": \"PONDER\", \"size\": 3}", 1, 2).is_err());
        assert!(parse_decision("{\"side\": \"YES\"}", 1, 2).is_err());
        assert!(parse_decision("{ not json }", 1, 2).is_err());
    }

    #[test]
    fn skips_leading_non_decision_objects() {
        let reply = r#"{"thought": "hmm"} then {"action": "SELL", "instrument_id": 2, "size": "7"}"#;
        let d = parse_decision(reply, 1, 2).unwrap();
        assert_eq!(d.action, Action::Sell);
        assert_eq!(d.side, Side::No);
        assert_eq!(d.size, 7);
    }

    #[test]
    fn braces_inside_strings_do_not_confuse_the_scanner() {
        let reply = r#"{"action": "BUY", "instrument_id": 1, "size": 2, "private_reasoning": "set {a,b} beats }{"}"#;
        let d = parse_decision(reply, 1, 2).unwrap();
        assert_eq!(d.size, 2);
        assert_eq!(d.private_reasoning, "set {a,b} beats }{");
    }

    #[test]
    fn negative_sizes_parse_and_are_left_to_validation() {
        let d = parse_decision(r#"{"action":"BUY","instrument_id":1,"size":-5}"#, 1, 2).unwrap();
        assert_eq!(d.size, -5);
    }

    #[test]
    fn extract_content_handles_both_wire_shapes() {
        let wrapped = r#"{"choices":[{"message":{"role":"assistant","content":"{\"action\":\"HOLD\"}"}}]}"#;
        assert_eq!(extract_content(wrapped), "{\"action\":\"HOLD\"}");
        let bare = r#"{"action":"HOLD"}"#;
        assert_eq!(extract_content(bare), bare);
    }

    #[test]
    fn token_bucket_throttles() {
        let bucket = TokenBucket::new(6000); // 100 per second
        let start = Instant::now();
        for _ in 0..5 {
            bucket.acquire();
        }
        // five tokens are available immediately
        assert!(start.elapsed() < Duration::from_millis(500));
    }
}
