//! Count-based toy language models.
//!
//! `ToyMlm` is an additive-smoothed trigram model over (prev, token, next)
//! contexts that backs off to (prev, token) counts and then to unigrams.
//! Each backoff level distributes its smoothing mass according to the
//! level below, so the distribution over the vocabulary sums to one for
//! every context:
//!
//! ```text
//! P1(w)            = (C1[w] + a) / (N + a*V)
//! P2(w | p)        = (C2[p,w] + a*P1(w)) / (C2[p,*] + a)
//! P3(w | p, n)     = (C3[p,w,n] + a*P2(w|p)) / (C3[p,*,n] + a)
//! ```
//!
//! A context token of `None` means "no information": a span at the start
//! of a sequence has no left token, and a span that ends its sequence (or
//! any CLM query) has no usable right token, which drops the trigram
//! level entirely.
//!
//! `ToyCmlm` wraps a `ToyMlm` with a source-copy mixture,
//! `P = lambda*copy(w|S) + (1-lambda)*P_mlm`, where `copy(w|S)` is the
//! relative frequency of `w` in the source. Unknown tokens map onto a
//! reserved sentinel that shares the smoothed mass.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{ScoreQuery, Scorer, ScorerError, ScorerMode, StepScores};
use crate::corpus::MASK_TOKEN;

/// Sentinel shared by all out-of-vocabulary tokens.
pub const UNK_TOKEN: &str = "<unk>";

type TokenId = u32;
/// `None` encodes a missing context side.
type Ctx = Option<TokenId>;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocab {
    fn build(corpus: &[Vec<String>], extra: &[Vec<String>]) -> Self {
        let mut vocab = Vocab {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for seq in corpus.iter().chain(extra) {
            for tok in seq {
                vocab.intern(tok);
            }
        }
        vocab.intern(MASK_TOKEN);
        vocab.intern(UNK_TOKEN);
        vocab
    }

    fn intern(&mut self, token: &str) -> TokenId {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        let id = self.tokens.len() as TokenId;
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), id);
        id
    }

    fn id_or_unk(&self, token: &str) -> TokenId {
        self.index
            .get(token)
            .copied()
            .unwrap_or_else(|| self.index[UNK_TOKEN])
    }

    fn len(&self) -> usize {
        self.tokens.len()
    }
}

/// Additive-smoothed trigram/bigram/unigram count model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToyMlm {
    vocab: Vocab,
    alpha: f64,
    total_tokens: u64,
    unigram: HashMap<TokenId, u64>,
    bigram: HashMap<(Ctx, TokenId), u64>,
    bigram_ctx: HashMap<Ctx, u64>,
    trigram: HashMap<(Ctx, TokenId, TokenId), u64>,
    trigram_ctx: HashMap<(Ctx, TokenId), u64>,
}

impl ToyMlm {
    /// Fits count tables on the corpus. The vocabulary is the corpus
    /// tokens plus the mask and unknown sentinels.
    pub fn train(corpus: &[Vec<String>], alpha: f64) -> Result<Self, ScorerError> {
        Self::train_with_vocab(corpus, &[], alpha)
    }

    /// Like [`ToyMlm::train`], but also interns `extra_vocab` sequences
    /// (counted zero times). A conditional model trains its counts on
    /// targets while still knowing the source-side vocabulary, so source
    /// tokens never collapse onto the unknown sentinel.
    pub fn train_with_vocab(
        corpus: &[Vec<String>],
        extra_vocab: &[Vec<String>],
        alpha: f64,
    ) -> Result<Self, ScorerError> {
        if !alpha.is_finite() || alpha <= 0.0 {
            return Err(ScorerError::BadAlpha(alpha));
        }
        if corpus.iter().all(|seq| seq.is_empty()) {
            return Err(ScorerError::EmptyCorpus);
        }
        let vocab = Vocab::build(corpus, extra_vocab);
        let mut model = ToyMlm {
            vocab,
            alpha,
            total_tokens: 0,
            unigram: HashMap::new(),
            bigram: HashMap::new(),
            bigram_ctx: HashMap::new(),
            trigram: HashMap::new(),
            trigram_ctx: HashMap::new(),
        };
        for seq in corpus {
            let ids: Vec<TokenId> = seq.iter().map(|t| model.vocab.index[t.as_str()]).collect();
            for (i, &w) in ids.iter().enumerate() {
                let prev: Ctx = if i > 0 { Some(ids[i - 1]) } else { None };
                model.total_tokens += 1;
                *model.unigram.entry(w).or_insert(0) += 1;
                *model.bigram.entry((prev, w)).or_insert(0) += 1;
                *model.bigram_ctx.entry(prev).or_insert(0) += 1;
                if let Some(&next) = ids.get(i + 1) {
                    *model.trigram.entry((prev, w, next)).or_insert(0) += 1;
                    *model.trigram_ctx.entry((prev, next)).or_insert(0) += 1;
                }
            }
        }
        Ok(model)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Vocabulary tokens, including the sentinels.
    pub fn vocabulary(&self) -> &[String] {
        &self.vocab.tokens
    }

    fn unigram_prob(&self, w: TokenId) -> f64 {
        let c = self.unigram.get(&w).copied().unwrap_or(0) as f64;
        (c + self.alpha) / (self.total_tokens as f64 + self.alpha * self.vocab.len() as f64)
    }

    fn bigram_prob(&self, prev: Ctx, w: TokenId) -> f64 {
        let c = self.bigram.get(&(prev, w)).copied().unwrap_or(0) as f64;
        let total = self.bigram_ctx.get(&prev).copied().unwrap_or(0) as f64;
        (c + self.alpha * self.unigram_prob(w)) / (total + self.alpha)
    }

    fn trigram_prob(&self, prev: Ctx, w: TokenId, next: Ctx) -> f64 {
        match next {
            None => self.bigram_prob(prev, w),
            Some(n) => {
                let c = self.trigram.get(&(prev, w, n)).copied().unwrap_or(0) as f64;
                let total = self.trigram_ctx.get(&(prev, n)).copied().unwrap_or(0) as f64;
                (c + self.alpha * self.bigram_prob(prev, w)) / (total + self.alpha)
            }
        }
    }

    /// Single-step probability of `token` between the given context
    /// tokens. Out-of-vocabulary tokens fall back to the unknown sentinel.
    pub fn step_prob(&self, prev: Option<&str>, token: &str, next: Option<&str>) -> f64 {
        let prev = prev.map(|t| self.vocab.id_or_unk(t));
        let next = next.map(|t| self.vocab.id_or_unk(t));
        self.trigram_prob(prev, self.vocab.id_or_unk(token), next)
    }

    /// Left-to-right fill of the span: step `t` conditions on the
    /// previously filled token (or the left context) and on the token
    /// right of the span. `clm` drops the right context entirely.
    fn span_steps(
        query: &ScoreQuery,
        clm: bool,
    ) -> impl Iterator<Item = (Option<&str>, &str, Option<&str>)> {
        let (start, length) = query.span;
        let right = if clm { None } else { query.right_context() };
        (0..length).map(move |t| {
            let prev = if t == 0 {
                query.left_context()
            } else {
                Some(query.target_tokens[start + t - 1].as_str())
            };
            (prev, query.target_tokens[start + t].as_str(), right)
        })
    }
}

impl Scorer for ToyMlm {
    fn score(&self, query: &ScoreQuery) -> Result<StepScores, ScorerError> {
        query.validate()?;
        if query.mode != ScorerMode::Mlm {
            return Err(ScorerError::ModeUnsupported(query.mode));
        }
        let values = Self::span_steps(query, false)
            .map(|(prev, w, next)| self.step_prob(prev, w, next).ln())
            .collect();
        StepScores::checked(values, query.span.1)
    }
}

/// Source-conditioned toy model: copy mixture over a [`ToyMlm`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToyCmlm {
    mlm: ToyMlm,
    lambda: f64,
}

impl ToyCmlm {
    /// Fits the inner model on the target side of the pairs; the copy
    /// distribution is computed per query from that query's source. The
    /// vocabulary covers both sides, so source-only tokens stay
    /// distinguishable under the copy term.
    pub fn train(
        pairs: &[(Vec<String>, Vec<String>)],
        alpha: f64,
        lambda: f64,
    ) -> Result<Self, ScorerError> {
        if !(0.0..=1.0).contains(&lambda) || !lambda.is_finite() {
            return Err(ScorerError::BadLambda(lambda));
        }
        let targets: Vec<Vec<String>> = pairs.iter().map(|(_, t)| t.clone()).collect();
        let sources: Vec<Vec<String>> = pairs.iter().map(|(s, _)| s.clone()).collect();
        let mlm = ToyMlm::train_with_vocab(&targets, &sources, alpha)?;
        Ok(Self { mlm, lambda })
    }

    pub fn from_parts(mlm: ToyMlm, lambda: f64) -> Result<Self, ScorerError> {
        if !(0.0..=1.0).contains(&lambda) || !lambda.is_finite() {
            return Err(ScorerError::BadLambda(lambda));
        }
        Ok(Self { mlm, lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn inner(&self) -> &ToyMlm {
        &self.mlm
    }

    /// Relative frequency of `token` in the source, with unknown tokens
    /// pooled onto the sentinel so the distribution still sums to one.
    pub fn copy_prob(&self, token: &str, source: &[String]) -> f64 {
        if source.is_empty() {
            return 0.0;
        }
        let want = self.mlm.vocab.id_or_unk(token);
        let hits = source
            .iter()
            .filter(|s| self.mlm.vocab.id_or_unk(s) == want)
            .count();
        hits as f64 / source.len() as f64
    }

    // Floor keeping log-space finite when lambda = 1 meets a token absent
    // from the source.
    const STEP_FLOOR: f64 = 1e-300;

    fn mixed_step(
        &self,
        prev: Option<&str>,
        token: &str,
        next: Option<&str>,
        source: &[String],
    ) -> f64 {
        let mixed = self.lambda * self.copy_prob(token, source)
            + (1.0 - self.lambda) * self.mlm.step_prob(prev, token, next);
        mixed.max(Self::STEP_FLOOR)
    }
}

impl Scorer for ToyCmlm {
    fn score(&self, query: &ScoreQuery) -> Result<StepScores, ScorerError> {
        query.validate()?;
        let clm = match query.mode {
            ScorerMode::Cmlm => false,
            ScorerMode::Clm => true,
            ScorerMode::Mlm => return Err(ScorerError::ModeUnsupported(query.mode)),
        };
        let source = query.source_tokens.as_deref().expect("validated");
        let values = ToyMlm::span_steps(query, clm)
            .map(|(prev, w, next)| self.mixed_step(prev, w, next, source).ln())
            .collect();
        StepScores::checked(values, query.span.1)
    }
}
