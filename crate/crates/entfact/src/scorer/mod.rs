//! Span log-probability scorers.
//!
//! A scorer answers one kind of question: given a target token sequence
//! with a span singled out (and, depending on the mode, a source
//! document), what is the log-probability of each span token? Three
//! conditioning modes exist:
//!
//! - `Mlm` — bidirectional context around the masked span, no source.
//! - `Cmlm` — bidirectional context plus the source document.
//! - `Clm` — source plus left context only; the right context is unseen.
//!
//! Multi-token spans are filled left to right under a single mask
//! sentinel: step `t` sees the previously filled span tokens as its left
//! context. All probabilities live in natural-log space; callers
//! exponentiate only when assembling features.

mod file;
mod remote;
mod toy;

pub use file::{EntityScores, ScoreFile};
pub use remote::{RemoteConfig, RemoteScorer, ENDPOINT_ENV};
pub use toy::{ToyCmlm, ToyMlm};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("span {start}+{length} out of bounds for {len} target tokens")]
    SpanOutOfBounds {
        start: usize,
        length: usize,
        len: usize,
    },
    #[error("span must cover at least one token")]
    EmptySpan,
    #[error("mode {0:?} requires source tokens")]
    MissingSource(ScorerMode),
    #[error("mode mlm does not take source tokens")]
    UnexpectedSource,
    #[error("scorer does not support mode {0:?}")]
    ModeUnsupported(ScorerMode),
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("smoothing alpha must be positive, got {0}")]
    BadAlpha(f64),
    #[error("copy weight lambda must lie in [0, 1], got {0}")]
    BadLambda(f64),
    #[error("no stored scores for doc_id {doc_id:?} entity {entity_index}")]
    MissingKey { doc_id: String, entity_index: usize },
    #[error("score file line {line}: {message}")]
    BadScoreFile { line: usize, message: String },
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("malformed scorer response: {0}")]
    MalformedResponse(String),
    #[error("scorer server returned status {status}: {message}")]
    Server { status: u16, message: String },
}

/// Conditioning mode for a score query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScorerMode {
    Mlm,
    Cmlm,
    Clm,
}

/// One span-scoring request.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ScoreQuery {
    /// Required for `Cmlm`/`Clm`, forbidden for `Mlm`.
    pub source_tokens: Option<Vec<String>>,
    pub target_tokens: Vec<String>,
    /// `(start, length)` into the target tokens.
    pub span: (usize, usize),
    pub mode: ScorerMode,
}

impl ScoreQuery {
    pub fn mlm(target_tokens: Vec<String>, span: (usize, usize)) -> Self {
        Self {
            source_tokens: None,
            target_tokens,
            span,
            mode: ScorerMode::Mlm,
        }
    }

    pub fn with_source(
        mode: ScorerMode,
        source_tokens: Vec<String>,
        target_tokens: Vec<String>,
        span: (usize, usize),
    ) -> Self {
        Self {
            source_tokens: Some(source_tokens),
            target_tokens,
            span,
            mode,
        }
    }

    pub fn validate(&self) -> Result<(), ScorerError> {
        let (start, length) = self.span;
        if length == 0 {
            return Err(ScorerError::EmptySpan);
        }
        if start + length > self.target_tokens.len() {
            return Err(ScorerError::SpanOutOfBounds {
                start,
                length,
                len: self.target_tokens.len(),
            });
        }
        match (self.mode, &self.source_tokens) {
            (ScorerMode::Mlm, Some(_)) => Err(ScorerError::UnexpectedSource),
            (ScorerMode::Cmlm | ScorerMode::Clm, None) => {
                Err(ScorerError::MissingSource(self.mode))
            }
            _ => Ok(()),
        }
    }

    /// Token immediately left of the span, if any.
    pub fn left_context(&self) -> Option<&str> {
        self.span
            .0
            .checked_sub(1)
            .map(|i| self.target_tokens[i].as_str())
    }

    /// Token immediately right of the span, if any.
    pub fn right_context(&self) -> Option<&str> {
        self.target_tokens
            .get(self.span.0 + self.span.1)
            .map(|s| s.as_str())
    }
}

/// Per-step natural-log probabilities for a span, one per span token.
#[derive(Debug, Clone, PartialEq)]
pub struct StepScores(pub Vec<f64>);

impl StepScores {
    /// Validates the contract: one finite non-positive value per span token.
    pub fn checked(values: Vec<f64>, span_len: usize) -> Result<Self, ScorerError> {
        if values.len() != span_len {
            return Err(ScorerError::MalformedResponse(format!(
                "expected {span_len} step log-probs, got {}",
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v > 0.0) {
            return Err(ScorerError::MalformedResponse(format!(
                "step log-prob {bad} outside (-inf, 0]"
            )));
        }
        Ok(Self(values))
    }

    /// Total span log-probability (sum over steps, chain rule).
    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Anything that can assign per-step log-probabilities to a span.
pub trait Scorer {
    fn score(&self, query: &ScoreQuery) -> Result<StepScores, ScorerError>;
}
