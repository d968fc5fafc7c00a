//! Step predictor backed by a remote text-completion endpoint.
//!
//! Each (operator, role) pair is routed to its own model identifier, sent in
//! the request's `model` field. Inputs are bare stage-2 blocks; completions
//! are cut at the block boundary before they reach the runtime.

use std::collections::BTreeMap;
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use caef_core::aligner::{self, Expression};
use caef_core::runtime::StepPredictor;
use caef_core::{Error, Op, Result, Role, StepBlock};
use serde::{Deserialize, Serialize};

pub mod mock;

pub const ENDPOINT_ENV: &str = "CAEF_ENDPOINT";
pub const TOKEN_ENV: &str = "CAEF_API_KEY";

#[derive(Debug, Clone)]
pub struct EndpointConfig {
    /// Server root; requests go to `{base_url}/v1/completions`.
    pub base_url: String,
    /// Environment variable holding the bearer token, if any.
    pub token_env: String,
    pub adapters: BTreeMap<(Op, Role), String>,
    pub timeout: Duration,
    /// Extra attempts after the first on timeouts, connection errors and 5xx.
    pub retries: u32,
    pub max_concurrent: usize,
    pub max_tokens: u32,
    pub temperature: f64,
}

/// `add-executor`, `sub-aligner`, ...: every machine's executor and every
/// arithmetic operator's aligner.
pub fn default_adapters() -> BTreeMap<(Op, Role), String> {
    let mut map = BTreeMap::new();
    for op in Op::ALL {
        map.insert((op, Role::Executor), adapter_name(op, Role::Executor));
    }
    for op in Op::ARITHMETIC {
        map.insert((op, Role::Aligner), adapter_name(op, Role::Aligner));
    }
    map
}

pub fn adapter_name(op: Op, role: Role) -> String {
    format!("{}-{}", op.slug(), role)
}

/// Inverse of [`adapter_name`].
pub fn parse_adapter_name(name: &str) -> Option<(Op, Role)> {
    let (slug, role) = name.rsplit_once('-')?;
    let role = match role {
        "executor" => Role::Executor,
        "aligner" => Role::Aligner,
        _ => return None,
    };
    Some((Op::from_slug(slug)?, role))
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            token_env: TOKEN_ENV.to_string(),
            adapters: default_adapters(),
            timeout: Duration::from_secs(60),
            retries: 2,
            max_concurrent: 8,
            max_tokens: 2048,
            temperature: 0.0,
        }
    }

    /// Base URL from `CAEF_ENDPOINT`.
    pub fn from_env() -> Result<Self> {
        let url = std::env::var(ENDPOINT_ENV)
            .map_err(|_| Error::Transport(format!("{ENDPOINT_ENV} is not set")))?;
        Ok(Self::new(url))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Transport(format!("endpoint config: {m}")));
        if !(self.base_url.starts_with("http://") || self.base_url.starts_with("https://")) {
            return bad("base URL must be http(s)");
        }
        if self.timeout.is_zero() || self.max_concurrent == 0 || self.max_tokens == 0 {
            return bad("timeout, concurrency and max_tokens must be positive");
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return bad("temperature out of range");
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    prompt: String,
    max_tokens: u32,
    temperature: f64,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    text: String,
}

/// Counting semaphore.
struct Gate {
    in_flight: Mutex<usize>,
    freed: Condvar,
    limit: usize,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().unwrap();
        while *n >= self.limit {
            n = self.freed.wait(n).unwrap();
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.in_flight.lock().unwrap() -= 1;
        self.0.freed.notify_one();
    }
}

pub struct RemotePredictor {
    cfg: EndpointConfig,
    http: reqwest::blocking::Client,
    token: Option<String>,
    gate: Gate,
}

impl RemotePredictor {
    pub fn new(cfg: EndpointConfig) -> Result<Self> {
        cfg.validate()?;
        let http = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout)
            .build()
            .map_err(|e| Error::Transport(e.to_string()))?;
        let token = std::env::var(&cfg.token_env).ok().filter(|t| !t.is_empty());
        let gate = Gate { in_flight: Mutex::new(0), freed: Condvar::new(), limit: cfg.max_concurrent };
        Ok(Self { cfg, http, token, gate })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.cfg
    }

    fn send(&self, body: &[u8]) -> std::result::Result<String, (bool, Error)> {
        let _permit = self.gate.acquire();
        let mut req = self
            .http
            .post(format!("{}/v1/completions", self.cfg.base_url))
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body.to_vec());
        if let Some(t) = &self.token {
            req = req.bearer_auth(t);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                (true, Error::Timeout(e.to_string()))
            } else {
                (true, Error::Transport(e.to_string()))
            }
        })?;
        let status = resp.status();
        if !status.is_success() {
            let retryable = status.is_server_error() || status.as_u16() == 429;
            return Err((retryable, Error::Transport(format!("server answered {status}"))));
        }
        let parsed: CompletionResponse =
            resp.json().map_err(|e| (false, Error::MalformedPrediction(format!("bad response body: {e}"))))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.text)
            .ok_or_else(|| (false, Error::MalformedPrediction("response has no choices".into())))
    }
}

/// Rejects inputs the runtime could never have produced.
fn check_input(op: Op, role: Role, input: &str) -> Result<()> {
    match role {
        Role::Executor => StepBlock::parse_for(op, input).map(drop),
        Role::Aligner if aligner::is_expression_input(input) => Expression::parse(input).map(drop),
        Role::Aligner => StepBlock::parse(input).map(drop),
    }
}

/// Keeps the lines that make up one block: two, or four when an executor
/// issues a call. Aligners answer a block for an expression and a single
/// line for a halt block.
pub fn truncate(role: Role, input: &str, completion: &str) -> String {
    let text = completion.trim_start_matches(['\n', '\r']);
    let lines: Vec<&str> = text.lines().collect();
    let keep = match role {
        Role::Executor if lines.get(1).is_some_and(|l| l.contains("[CALL]")) => 4,
        Role::Executor => 2,
        Role::Aligner if aligner::is_expression_input(input) => 2,
        Role::Aligner => 1,
    };
    lines[..keep.min(lines.len())].iter().map(|l| l.trim_end()).collect::<Vec<_>>().join("\n")
}

impl StepPredictor for RemotePredictor {
    fn predict(&self, op: Op, role: Role, input: &str) -> Result<String> {
        let model = self
            .cfg
            .adapters
            .get(&(op, role))
            .ok_or_else(|| Error::AdapterUnmapped(adapter_name(op, role)))?;
        check_input(op, role, input)?;
        let body = serde_json::to_vec(&CompletionRequest {
            model,
            // the newline puts the model at the start of the answer's first line
            prompt: format!("{input}\n"),
            max_tokens: self.cfg.max_tokens,
            temperature: self.cfg.temperature,
        })
        .expect("request serializes");
        let mut attempt = 0;
        loop {
            match self.send(&body) {
                Ok(text) => return Ok(truncate(role, input, &text)),
                Err((true, e)) if attempt < self.cfg.retries => {
                    log::warn!("{model}: attempt {} failed: {e}", attempt + 1);
                    thread::sleep(Duration::from_millis(20 << attempt.min(6)));
                    attempt += 1;
                }
                Err((_, e)) => return Err(e),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adapter_names_round_trip() {
        let map = default_adapters();
        assert_eq!(map.len(), 16);
        for (&(op, role), name) in &map {
            assert_eq!(parse_adapter_name(name), Some((op, role)));
        }
        assert_eq!(map[&(Op::LeftMask, Role::Executor)], "left_mask-executor");
        assert_eq!(parse_adapter_name("pow-executor"), None);
    }

    #[test]
    fn truncation_by_protocol() {
        let run_on = "A\nB\nC\nD\nE";
        assert_eq!(truncate(Role::Executor, "", run_on), "A\nB");
        assert_eq!(truncate(Role::Executor, "", "\nS\nCMD [CALL] ADD, q3\nX\nY\nZ"), "S\nCMD [CALL] ADD, q3\nX\nY");
        assert_eq!(truncate(Role::Aligner, "1+2=", run_on), "A\nB");
        assert_eq!(truncate(Role::Aligner, "S\nH", "1+2=3\nmore"), "1+2=3");
        assert_eq!(truncate(Role::Executor, "", "only"), "only");
    }

    #[test]
    fn config_validation() {
        assert!(EndpointConfig::new("http://127.0.0.1:1").validate().is_ok());
        assert!(EndpointConfig::new("ftp://x").validate().is_err());
        let cfg = EndpointConfig { max_concurrent: 0, ..EndpointConfig::new("http://x") };
        assert!(RemotePredictor::new(cfg).is_err());
    }
}
