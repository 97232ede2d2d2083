//! HTTP scorer client.
//!
//! Wire protocol: `POST {endpoint}/v1/score` with a JSON body
//! `{"mode","source_tokens"?,"target_tokens","span":{"start","length"}}`;
//! the server answers `{"step_logprobs":[...]}` with one value per span
//! token, or a non-2xx status with `{"error": "..."}`.
//!
//! Requests are idempotent, so transport failures (including timeouts)
//! are retried with exponential backoff; server-reported errors and
//! malformed responses are surfaced immediately.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{ScoreQuery, Scorer, ScorerError, StepScores};

/// Environment variable consulted for the default endpoint.
pub const ENDPOINT_ENV: &str = "ENTFACT_SCORER_ENDPOINT";

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    /// Base URL, e.g. `http://127.0.0.1:8080`.
    pub endpoint: String,
    pub timeout: Duration,
    /// Retries after the first attempt.
    pub max_retries: u32,
    /// First backoff delay; doubles per retry.
    pub backoff: Duration,
    /// Upper bound on pooled idle connections.
    pub max_idle_connections: usize,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            timeout: Duration::from_secs(30),
            max_retries: 2,
            backoff: Duration::from_millis(250),
            max_idle_connections: 8,
        }
    }

    /// Reads the endpoint from [`ENDPOINT_ENV`].
    pub fn from_env() -> Option<Self> {
        std::env::var(ENDPOINT_ENV).ok().map(Self::new)
    }
}

#[derive(Serialize)]
struct WireSpan {
    start: usize,
    length: usize,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    mode: super::ScorerMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    source_tokens: Option<&'a [String]>,
    target_tokens: &'a [String],
    span: WireSpan,
}

#[derive(Deserialize)]
struct WireResponse {
    step_logprobs: Vec<f64>,
}

#[derive(Deserialize)]
struct WireError {
    error: String,
}

pub struct RemoteScorer {
    agent: ureq::Agent,
    config: RemoteConfig,
}

impl RemoteScorer {
    pub fn new(config: RemoteConfig) -> Self {
        let agent_config = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .max_idle_connections(config.max_idle_connections)
            .build();
        Self {
            agent: agent_config.new_agent(),
            config,
        }
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn url(&self) -> String {
        format!("{}/v1/score", self.config.endpoint.trim_end_matches('/'))
    }

    fn attempt(&self, query: &ScoreQuery) -> Result<StepScores, AttemptError> {
        let body = WireRequest {
            mode: query.mode,
            source_tokens: query.source_tokens.as_deref(),
            target_tokens: &query.target_tokens,
            span: WireSpan {
                start: query.span.0,
                length: query.span.1,
            },
        };
        let mut response = self
            .agent
            .post(&self.url())
            .send_json(&body)
            .map_err(|e| AttemptError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        if !(200..300).contains(&status) {
            let message = response
                .body_mut()
                .read_json::<WireError>()
                .map(|w| w.error)
                .unwrap_or_else(|_| "no error body".to_string());
            return Err(AttemptError::Fatal(ScorerError::Server { status, message }));
        }
        let wire: WireResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| AttemptError::Fatal(ScorerError::MalformedResponse(e.to_string())))?;
        StepScores::checked(wire.step_logprobs, query.span.1).map_err(AttemptError::Fatal)
    }
}

enum AttemptError {
    /// Worth retrying (connection refused, timeout, broken pipe, ...).
    Transport(String),
    /// Not worth retrying (server verdict or malformed payload).
    Fatal(ScorerError),
}

impl Scorer for RemoteScorer {
    fn score(&self, query: &ScoreQuery) -> Result<StepScores, ScorerError> {
        query.validate()?;
        let attempts = self.config.max_retries + 1;
        let mut last_transport = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(self.config.backoff * 2u32.pow(attempt - 1));
            }
            match self.attempt(query) {
                Ok(scores) => return Ok(scores),
                Err(AttemptError::Fatal(err)) => return Err(err),
                Err(AttemptError::Transport(message)) => last_transport = message,
            }
        }
        Err(ScorerError::Transport {
            attempts,
            message: last_transport,
        })
    }
}
