//! Factuality-aware offline policy-gradient training at toy scale.
//!
//! The policy is the smallest architecture that can exhibit the
//! copy-vs-hallucinate trade-off the rewards are meant to shape: a logit
//! table over (previous token, action) pairs plus a scalar copy bonus
//! added to every action present in the current source,
//! `pi(a | prev, S) = softmax(theta[prev, a] + b * 1[a in S])`.
//!
//! Training is offline: trajectories are the reference summaries
//! (teacher-forced), rewards come from the factuality classifier
//! (`-r_nfe` for tokens inside entities predicted non-factual, the frozen
//! MLE policy's token probability otherwise), returns are discounted
//! suffix sums, and the gradient estimator weights each step by the
//! action probability under a Polyak-averaged slow copy of the policy
//! (treated as a constant; the fast-policy weight of the original
//! estimator is available as a config switch).

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{KnnModel, Prediction, Task, TaskLabel};
use crate::corpus::{
    extract_entities, DataError, Dataset, Document, EntityMention, SummaryKind, SummaryRecord,
};
use crate::features::{overlap, posterior_prob, prior_prob, FeatureVector, PosteriorMode};
use crate::metrics;
use crate::scorer::Scorer;

/// Start-of-sequence sentinel (the first `prev` token).
pub const BOS_TOKEN: &str = "<s>";
/// End-of-sequence sentinel action.
pub const EOS_TOKEN: &str = "</s>";

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("dataset has no records")]
    EmptyDataset,
    #[error("non-finite value at step {step}: {what}")]
    NonFinite { step: usize, what: &'static str },
    #[error("policy shapes differ: {0}")]
    ShapeMismatch(String),
    #[error("token {0:?} not in policy vocabulary")]
    UnknownToken(String),
    #[error("invalid parameter: {0}")]
    BadParam(String),
    #[error("reward labeling needs a factuality-task model, got {0:?}")]
    LabelerTask(Task),
    #[error("trajectory lengths differ: {actions} actions, {rewards} rewards, {returns} returns")]
    RaggedTrajectory {
        actions: usize,
        rewards: usize,
        returns: usize,
    },
    #[error(transparent)]
    Feature(#[from] crate::features::FeatureError),
    #[error(transparent)]
    Scorer(#[from] crate::scorer::ScorerError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Metric(#[from] metrics::MetricError),
    #[error("policy file: {0}")]
    BadPolicyFile(String),
    #[error("trajectory file line {line}: {message}")]
    BadTrajectoryFile { line: usize, message: String },
}

/// Reward definition: `-r_nfe` for tokens of entities predicted
/// non-factual, the frozen MLE policy's probability otherwise.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RewardSpec {
    pub r_nfe: f64,
    pub gamma: f64,
}

impl Default for RewardSpec {
    fn default() -> Self {
        Self {
            r_nfe: 2.0,
            gamma: 1.0,
        }
    }
}

/// Which policy supplies the importance weight `w_t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightSource {
    /// The Polyak slow copy (default).
    #[default]
    SlowCopy,
    /// The fast policy itself (still treated as a constant).
    FastPolicy,
}

/// One teacher-forced trajectory: the reference tokens plus the end
/// sentinel as actions, with per-token rewards and returns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub doc_id: String,
    pub source_tokens: Vec<String>,
    pub actions: Vec<String>,
    pub rewards: Vec<f64>,
    pub returns: Vec<f64>,
}

impl Trajectory {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.actions.len() != self.rewards.len() || self.actions.len() != self.returns.len() {
            return Err(TrainError::RaggedTrajectory {
                actions: self.actions.len(),
                rewards: self.rewards.len(),
                returns: self.returns.len(),
            });
        }
        Ok(())
    }

    /// Total (discounted) return, i.e. the return at the first step.
    pub fn total_return(&self) -> f64 {
        self.returns.first().copied().unwrap_or(0.0)
    }
}

/// Suffix-discounted returns, computed right to left:
/// `Q_t = r_t + gamma * Q_{t+1}`.
pub fn returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (i, r) in rewards.iter().enumerate().rev() {
        acc = r + gamma * acc;
        out[i] = acc;
    }
    out
}

#[derive(Serialize, Deserialize)]
struct PolicyWire {
    tokens: Vec<String>,
    theta: Vec<f64>,
    copy_bonus: f64,
}

/// Tabular softmax policy over (previous token, action) pairs with a
/// scalar source-copy bonus.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyPolicy {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    theta: Vec<f64>,
    copy_bonus: f64,
    bos: usize,
    eos: usize,
}

impl ToyPolicy {
    /// Builds a zero-initialized policy over the given tokens; the start
    /// and end sentinels are appended when missing.
    pub fn with_vocab(tokens: impl IntoIterator<Item = String>) -> Self {
        let mut seen = HashMap::new();
        let mut vocab = Vec::new();
        for token in tokens {
            if !seen.contains_key(&token) {
                seen.insert(token.clone(), vocab.len() as u32);
                vocab.push(token);
            }
        }
        for sentinel in [BOS_TOKEN, EOS_TOKEN] {
            if !seen.contains_key(sentinel) {
                seen.insert(sentinel.to_string(), vocab.len() as u32);
                vocab.push(sentinel.to_string());
            }
        }
        let v = vocab.len();
        let bos = seen[BOS_TOKEN] as usize;
        let eos = seen[EOS_TOKEN] as usize;
        Self {
            tokens: vocab,
            index: seen,
            theta: vec![0.0; v * v],
            copy_bonus: 0.0,
            bos,
            eos,
        }
    }

    /// Vocabulary from every document and summary token in the dataset.
    pub fn from_dataset(dataset: &Dataset) -> Result<Self, TrainError> {
        if dataset.is_empty() {
            return Err(TrainError::EmptyDataset);
        }
        let tokens = dataset.records.iter().flat_map(|r| {
            r.document
                .tokens
                .iter()
                .chain(r.summary.tokens.iter())
                .cloned()
        });
        Ok(Self::with_vocab(tokens))
    }

    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.tokens
    }

    pub fn copy_bonus(&self) -> f64 {
        self.copy_bonus
    }

    /// theta flattened row-major plus the copy bonus as the final entry.
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.theta.clone();
        p.push(self.copy_bonus);
        p
    }

    pub fn num_params(&self) -> usize {
        self.theta.len() + 1
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<(), TrainError> {
        if params.len() != self.num_params() {
            return Err(TrainError::ShapeMismatch(format!(
                "expected {} params, got {}",
                self.num_params(),
                params.len()
            )));
        }
        self.theta.copy_from_slice(&params[..params.len() - 1]);
        self.copy_bonus = params[params.len() - 1];
        Ok(())
    }

    fn token_id(&self, token: &str) -> Result<usize, TrainError> {
        self.index
            .get(token)
            .map(|&i| i as usize)
            .ok_or_else(|| TrainError::UnknownToken(token.to_string()))
    }

    /// Which vocabulary entries occur in the source (unknown source
    /// tokens are simply not members).
    pub fn source_mask(&self, source: &[String]) -> Vec<bool> {
        let mut mask = vec![false; self.tokens.len()];
        for token in source {
            if let Some(&id) = self.index.get(token) {
                mask[id as usize] = true;
            }
        }
        mask
    }

    /// Action distribution given the previous token and source mask.
    pub fn action_probs(&self, prev: usize, mask: &[bool]) -> Vec<f64> {
        let v = self.tokens.len();
        let row = &self.theta[prev * v..(prev + 1) * v];
        let mut logits: Vec<f64> = row
            .iter()
            .zip(mask)
            .map(|(t, &m)| t + if m { self.copy_bonus } else { 0.0 })
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for l in &mut logits {
            *l = (*l - max).exp();
            total += *l;
        }
        for l in &mut logits {
            *l /= total;
        }
        logits
    }

    /// `pi(action | prev, source)`.
    pub fn prob(&self, prev: &str, action: &str, source: &[String]) -> Result<f64, TrainError> {
        let mask = self.source_mask(source);
        Ok(self.action_probs(self.token_id(prev)?, &mask)[self.token_id(action)?])
    }

    /// Teacher-forced log-likelihood of the trajectory's actions.
    pub fn log_prob_trajectory(&self, trajectory: &Trajectory) -> Result<f64, TrainError> {
        let mask = self.source_mask(&trajectory.source_tokens);
        let mut prev = self.bos;
        let mut total = 0.0;
        for action in &trajectory.actions {
            let a = self.token_id(action)?;
            total += self.action_probs(prev, &mask)[a].ln();
            prev = a;
        }
        Ok(total)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TrainError> {
        let wire = PolicyWire {
            tokens: self.tokens.clone(),
            theta: self.theta.clone(),
            copy_bonus: self.copy_bonus,
        };
        let json =
            serde_json::to_string(&wire).map_err(|e| TrainError::BadPolicyFile(e.to_string()))?;
        std::fs::write(path, json).map_err(|e| TrainError::BadPolicyFile(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TrainError> {
        let json =
            std::fs::read_to_string(path).map_err(|e| TrainError::BadPolicyFile(e.to_string()))?;
        let wire: PolicyWire =
            serde_json::from_str(&json).map_err(|e| TrainError::BadPolicyFile(e.to_string()))?;
        let mut policy = Self::with_vocab(wire.tokens);
        if wire.theta.len() != policy.theta.len() {
            return Err(TrainError::BadPolicyFile("theta size mismatch".into()));
        }
        policy.theta = wire.theta;
        policy.copy_bonus = wire.copy_bonus;
        Ok(policy)
    }
}

/// Dense gradient over policy parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyGrad {
    pub theta: Vec<f64>,
    pub copy_bonus: f64,
}

impl PolicyGrad {
    fn zeros(policy: &ToyPolicy) -> Self {
        Self {
            theta: vec![0.0; policy.theta.len()],
            copy_bonus: 0.0,
        }
    }

    fn add_scaled(&mut self, other: &PolicyGrad, scale: f64) {
        for (a, b) in self.theta.iter_mut().zip(&other.theta) {
            *a += scale * b;
        }
        self.copy_bonus += scale * other.copy_bonus;
    }

    pub fn is_finite(&self) -> bool {
        self.copy_bonus.is_finite() && self.theta.iter().all(|v| v.is_finite())
    }

    /// Flattened view matching [`ToyPolicy::params`] order.
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.theta.clone();
        p.push(self.copy_bonus);
        p
    }
}

/// Accumulates `w * scale * grad log pi(action | prev)` into `grad`.
fn accumulate_log_pi_grad(
    policy: &ToyPolicy,
    grad: &mut PolicyGrad,
    prev: usize,
    action: usize,
    mask: &[bool],
    weight: f64,
) {
    let v = policy.tokens.len();
    let probs = policy.action_probs(prev, mask);
    let row = &mut grad.theta[prev * v..(prev + 1) * v];
    let mut expected_in_source = 0.0;
    for (a, p) in probs.iter().enumerate() {
        let indicator = if a == action { 1.0 } else { 0.0 };
        row[a] += weight * (indicator - p);
        if mask[a] {
            expected_in_source += p;
        }
    }
    let in_source = if mask[action] { 1.0 } else { 0.0 };
    grad.copy_bonus += weight * (in_source - expected_in_source);
}

/// Gradient of the teacher-forced trajectory log-likelihood,
/// `grad sum_t log pi(a_t | s_t)`.
pub fn log_prob_gradient(
    policy: &ToyPolicy,
    trajectory: &Trajectory,
) -> Result<PolicyGrad, TrainError> {
    let mut grad = PolicyGrad::zeros(policy);
    let mask = policy.source_mask(&trajectory.source_tokens);
    let mut prev = policy.bos;
    for action in &trajectory.actions {
        let a = policy.token_id(action)?;
        accumulate_log_pi_grad(policy, &mut grad, prev, a, &mask, 1.0);
        prev = a;
    }
    Ok(grad)
}

/// The importance-weighted policy gradient for one trajectory:
/// `sum_t w_t * grad log pi(a_t|s_t) * Q_t`, with `w_t` taken from the
/// slow copy (or the fast policy) and treated as a constant.
pub fn pg_gradient(
    policy: &ToyPolicy,
    slow: &ToyPolicy,
    trajectory: &Trajectory,
    weight_source: WeightSource,
) -> Result<PolicyGrad, TrainError> {
    Ok(pg_terms(policy, slow, trajectory, weight_source)?.0)
}

fn pg_terms(
    policy: &ToyPolicy,
    slow: &ToyPolicy,
    trajectory: &Trajectory,
    weight_source: WeightSource,
) -> Result<(PolicyGrad, f64), TrainError> {
    trajectory.validate()?;
    if slow.tokens != policy.tokens {
        return Err(TrainError::ShapeMismatch(
            "slow/fast vocabularies differ".into(),
        ));
    }
    let mask = policy.source_mask(&trajectory.source_tokens);
    let mut grad = PolicyGrad::zeros(policy);
    let mut surrogate = 0.0;
    let mut prev = policy.bos;
    for (action, q) in trajectory.actions.iter().zip(&trajectory.returns) {
        let a = policy.token_id(action)?;
        let fast_probs = policy.action_probs(prev, &mask);
        let weight = match weight_source {
            WeightSource::SlowCopy => slow.action_probs(prev, &mask)[a],
            WeightSource::FastPolicy => fast_probs[a],
        };
        accumulate_log_pi_grad(policy, &mut grad, prev, a, &mask, weight * q);
        surrogate += weight * fast_probs[a].ln() * q;
        prev = a;
    }
    if !grad.is_finite() || !surrogate.is_finite() {
        return Err(TrainError::NonFinite {
            step: 0,
            what: "policy gradient",
        });
    }
    Ok((grad, surrogate))
}

/// Elementwise Polyak average: `slow <- slow + tau * (fast - slow)`.
pub fn polyak_update(slow: &mut ToyPolicy, fast: &ToyPolicy, tau: f64) -> Result<(), TrainError> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(TrainError::BadParam(format!("tau {tau} outside (0, 1]")));
    }
    if slow.tokens != fast.tokens {
        return Err(TrainError::ShapeMismatch(
            "slow/fast vocabularies differ".into(),
        ));
    }
    for (s, f) in slow.theta.iter_mut().zip(&fast.theta) {
        *s += tau * (*f - *s);
    }
    slow.copy_bonus += tau * (fast.copy_bonus - slow.copy_bonus);
    Ok(())
}

/// Reference trajectory skeleton: the summary tokens plus the end
/// sentinel, with zeroed rewards.
pub fn reference_trajectory(document: &Document, summary: &SummaryRecord) -> Trajectory {
    let mut actions = summary.tokens.clone();
    actions.push(EOS_TOKEN.to_string());
    let n = actions.len();
    Trajectory {
        doc_id: document.id.clone(),
        source_tokens: document.tokens.clone(),
        actions,
        rewards: vec![0.0; n],
        returns: vec![0.0; n],
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MleConfig {
    pub steps: usize,
    pub lr: f64,
    pub seed: u64,
    pub batch_size: usize,
}

impl Default for MleConfig {
    fn default() -> Self {
        Self {
            steps: 800,
            lr: 0.5,
            seed: 0,
            batch_size: 32,
        }
    }
}

/// Per-step MLE training log entry.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MleLogEntry {
    pub step: usize,
    pub loss: f64,
    pub seed: u64,
}

/// Gradient ascent on the teacher-forced log-likelihood of the reference
/// summaries. Deterministic given the seed.
pub fn mle_train(
    init: &ToyPolicy,
    dataset: &Dataset,
    config: &MleConfig,
) -> Result<(ToyPolicy, Vec<MleLogEntry>), TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let trajectories: Vec<Trajectory> = dataset
        .records
        .iter()
        .map(|r| reference_trajectory(&r.document, &r.summary))
        .collect();
    let mut policy = init.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut log = Vec::new();
    let batch = config.batch_size.max(1).min(trajectories.len());
    for step in 1..=config.steps {
        let mut grad = PolicyGrad::zeros(&policy);
        let mut nll = 0.0;
        let mut tokens = 0usize;
        for b in 0..batch {
            // A batch covering the whole dataset is taken as-is; smaller
            // batches sample with replacement.
            let idx = if batch == trajectories.len() {
                b
            } else {
                rng.random_range(0..trajectories.len())
            };
            let t = &trajectories[idx];
            grad.add_scaled(&log_prob_gradient(&policy, t)?, 1.0);
            nll -= policy.log_prob_trajectory(t)?;
            tokens += t.actions.len();
        }
        let scale = config.lr / batch as f64;
        for (p, g) in policy.theta.iter_mut().zip(&grad.theta) {
            *p += scale * g;
        }
        policy.copy_bonus += scale * grad.copy_bonus;
        let loss = nll / tokens.max(1) as f64;
        if !loss.is_finite() || !policy.copy_bonus.is_finite() {
            return Err(TrainError::NonFinite {
                step,
                what: "mle loss",
            });
        }
        log.push(MleLogEntry {
            step,
            loss,
            seed: config.seed,
        });
    }
    Ok((policy, log))
}

/// Bundles the factuality classifier with the scorers it needs to label
/// reference entities.
pub struct FactualityLabeler<'a> {
    knn: &'a KnnModel,
    mlm: &'a dyn Scorer,
    cmlm: &'a dyn Scorer,
    posterior_mode: PosteriorMode,
}

impl<'a> FactualityLabeler<'a> {
    pub fn new(
        knn: &'a KnnModel,
        mlm: &'a dyn Scorer,
        cmlm: &'a dyn Scorer,
        posterior_mode: PosteriorMode,
    ) -> Result<Self, TrainError> {
        if knn.task() != Task::Factuality {
            return Err(TrainError::LabelerTask(knn.task()));
        }
        Ok(Self {
            knn,
            mlm,
            cmlm,
            posterior_mode,
        })
    }

    /// Tags entities with the corpus tagger and classifies each one.
    pub fn label_entities(
        &self,
        document: &Document,
        summary: &SummaryRecord,
    ) -> Result<Vec<(EntityMention, Prediction)>, TrainError> {
        let mut out = Vec::new();
        for mention in extract_entities(&summary.tokens) {
            let features = FeatureVector {
                prior: prior_prob(self.mlm, summary, &mention)?,
                posterior: posterior_prob(
                    self.cmlm,
                    document,
                    summary,
                    &mention,
                    self.posterior_mode,
                )?,
                overlap: overlap(document, summary, &mention),
            };
            out.push((mention, self.knn.predict(&features)));
        }
        Ok(out)
    }
}

/// Labels every reference trajectory with factuality rewards: tokens
/// inside entities predicted non-factual get `-r_nfe`, every other token
/// gets the frozen MLE policy's probability of that action.
pub fn label_rewards(
    dataset: &Dataset,
    labeler: &FactualityLabeler,
    mle_policy: &ToyPolicy,
    spec: &RewardSpec,
) -> Result<Vec<Trajectory>, TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut out = Vec::with_capacity(dataset.len());
    for record in &dataset.records {
        let mut trajectory = reference_trajectory(&record.document, &record.summary);
        let mut penalized = vec![false; record.summary.tokens.len()];
        for (mention, prediction) in labeler.label_entities(&record.document, &record.summary)? {
            if prediction.label == TaskLabel::NonFactual {
                penalized[mention.start..mention.end()].fill(true);
            }
        }
        let mask = mle_policy.source_mask(&trajectory.source_tokens);
        let mut prev = mle_policy.bos;
        for (t, action) in trajectory.actions.iter().enumerate() {
            let a = mle_policy.token_id(action)?;
            trajectory.rewards[t] = if t < penalized.len() && penalized[t] {
                -spec.r_nfe
            } else {
                mle_policy.action_probs(prev, &mask)[a]
            };
            prev = a;
        }
        trajectory.returns = returns(&trajectory.rewards, spec.gamma);
        out.push(trajectory);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OfflineConfig {
    pub steps: usize,
    pub lr: f64,
    pub seed: u64,
    pub batch_size: usize,
    /// Polyak rate for the slow copy.
    pub tau: f64,
    pub weight_source: WeightSource,
    /// Log (and evaluate ENFS) every this many steps.
    pub eval_every: usize,
    pub eval_max_len: usize,
}

impl Default for OfflineConfig {
    fn default() -> Self {
        Self {
            steps: 600,
            lr: 1.0,
            seed: 0,
            batch_size: 32,
            tau: 0.01,
            weight_source: WeightSource::SlowCopy,
            eval_every: 100,
            eval_max_len: 30,
        }
    }
}

/// One training-log row; `enfs_eval` is the ENFS of greedy generations on
/// the held-out documents (absent when none were supplied).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogEntry {
    pub step: usize,
    pub mean_return: f64,
    pub loss_surrogate: f64,
    pub enfs_eval: Option<f64>,
    pub seed: u64,
}

/// Offline policy-gradient training over pre-labeled trajectories, with a
/// Polyak-averaged slow copy supplying the importance weights.
pub fn offline_train(
    init: &ToyPolicy,
    trajectories: &[Trajectory],
    eval_docs: &[Document],
    config: &OfflineConfig,
) -> Result<(ToyPolicy, Vec<TrainLogEntry>), TrainError> {
    if trajectories.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    for t in trajectories {
        t.validate()?;
    }
    let mut policy = init.clone();
    let mut slow = init.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut log = Vec::new();
    let batch = config.batch_size.max(1).min(trajectories.len());
    for step in 1..=config.steps {
        let mut grad = PolicyGrad::zeros(&policy);
        let mut surrogate = 0.0;
        let mut mean_return = 0.0;
        for b in 0..batch {
            let idx = if batch == trajectories.len() {
                b
            } else {
                rng.random_range(0..trajectories.len())
            };
            let t = &trajectories[idx];
            let (g, s) = pg_terms(&policy, &slow, t, config.weight_source)?;
            grad.add_scaled(&g, 1.0);
            surrogate += s;
            mean_return += t.total_return();
        }
        let scale = config.lr / batch as f64;
        for (p, g) in policy.theta.iter_mut().zip(&grad.theta) {
            *p += scale * g;
        }
        policy.copy_bonus += scale * grad.copy_bonus;
        if !policy.copy_bonus.is_finite() || policy.theta.iter().any(|v| !v.is_finite()) {
            return Err(TrainError::NonFinite {
                step,
                what: "policy parameters",
            });
        }
        polyak_update(&mut slow, &policy, config.tau)?;
        if step % config.eval_every.max(1) == 0 || step == config.steps {
            let enfs_eval = if eval_docs.is_empty() {
                None
            } else {
                greedy_enfs(&policy, eval_docs, config.eval_max_len)?
            };
            log.push(TrainLogEntry {
                step,
                mean_return: mean_return / batch as f64,
                loss_surrogate: -surrogate / batch as f64,
                enfs_eval,
                seed: config.seed,
            });
        }
    }
    Ok((policy, log))
}

/// ENFS of greedy generations over the given documents.
pub fn greedy_enfs(
    policy: &ToyPolicy,
    docs: &[Document],
    max_len: usize,
) -> Result<Option<f64>, TrainError> {
    let mut records = Vec::with_capacity(docs.len());
    for doc in docs {
        let generated = generate(policy, &doc.tokens, max_len, GenMode::Greedy);
        records.push(crate::corpus::DatasetRecord::new(
            doc.clone(),
            SummaryRecord::new(doc.id.clone(), generated, SummaryKind::Generated, vec![])?,
        ));
    }
    Ok(metrics::enfs(&Dataset::new(records)?))
}

/// Decoding mode for [`generate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenMode {
    Greedy,
    Sample { seed: u64 },
}

/// Autoregressive decode; stops at the end sentinel or `max_len` tokens.
/// Greedy picks the highest-probability action (lowest index on exact
/// ties); sampling is reproducible from its seed.
pub fn generate(
    policy: &ToyPolicy,
    source: &[String],
    max_len: usize,
    mode: GenMode,
) -> Vec<String> {
    let mask = policy.source_mask(source);
    let mut rng = match mode {
        GenMode::Sample { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        GenMode::Greedy => None,
    };
    let mut prev = policy.bos;
    let mut out = Vec::new();
    while out.len() < max_len {
        let probs = policy.action_probs(prev, &mask);
        let action = match rng.as_mut() {
            None => {
                let mut best = 0;
                for (a, p) in probs.iter().enumerate() {
                    if *p > probs[best] {
                        best = a;
                    }
                }
                best
            }
            Some(rng) => {
                let draw: f64 = rng.random();
                let mut acc = 0.0;
                let mut chosen = probs.len() - 1;
                for (a, p) in probs.iter().enumerate() {
                    acc += p;
                    if draw < acc {
                        chosen = a;
                        break;
                    }
                }
                chosen
            }
        };
        if action == policy.eos {
            break;
        }
        out.push(policy.tokens[action].clone());
        prev = action;
    }
    out
}

/// One row of the noise-mixing experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseExpRow {
    pub ratio: f64,
    /// Percentage of generated entities the KNN classifier calls factual.
    pub knn_factual_pct: f64,
    /// Percentage of generated entities the word-overlap baseline calls
    /// factual (i.e. found in the source).
    pub overlap_factual_pct: f64,
    pub rouge1: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NoiseExpConfig {
    /// Training-set size drawn for every ratio.
    pub size: usize,
    pub seed: u64,
    pub mle: MleConfig,
    pub gen_max_len: usize,
    /// Sampled decoding exercises the learned distribution's tail;
    /// greedy would hide low-probability hallucinations.
    pub sample_decode: bool,
}

/// Trains one MLE policy per noise ratio on a fresh clean/noisy mixture
/// and scores its generations on held-out documents with the fixed
/// classifier, the word-overlap baseline and ROUGE-1.
pub fn noise_experiment(
    clean: &Dataset,
    noisy: &Dataset,
    ratios: &[f64],
    labeler: &FactualityLabeler,
    eval: &Dataset,
    config: &NoiseExpConfig,
) -> Result<Vec<NoiseExpRow>, TrainError> {
    let mut all_records = clean.records.clone();
    all_records.extend(noisy.records.clone());
    let vocab_policy = ToyPolicy::from_dataset(&Dataset {
        records: all_records,
    })?;
    let mut rows = Vec::with_capacity(ratios.len());
    for (i, &ratio) in ratios.iter().enumerate() {
        let mixed =
            crate::corpus::mix_datasets(clean, noisy, ratio, config.size, config.seed + i as u64)?;
        let (policy, _) = mle_train(&vocab_policy, &mixed, &config.mle)?;
        let mut knn_factual = 0usize;
        let mut overlap_factual = 0usize;
        let mut total_entities = 0usize;
        let mut rouge_sum = 0.0;
        for (j, record) in eval.records.iter().enumerate() {
            let mode = if config.sample_decode {
                GenMode::Sample {
                    seed: config.seed ^ (j as u64).wrapping_mul(0x9e3779b9),
                }
            } else {
                GenMode::Greedy
            };
            let generated = generate(&policy, &record.document.tokens, config.gen_max_len, mode);
            rouge_sum += metrics::rouge1(&generated, &record.summary.tokens)?;
            let summary = SummaryRecord::new(
                record.document.id.clone(),
                generated,
                SummaryKind::Generated,
                vec![],
            )?;
            for (mention, prediction) in labeler.label_entities(&record.document, &summary)? {
                total_entities += 1;
                if prediction.label == TaskLabel::Factual {
                    knn_factual += 1;
                }
                if overlap(&record.document, &summary, &mention) {
                    overlap_factual += 1;
                }
            }
        }
        let pct = |n: usize| {
            if total_entities == 0 {
                100.0
            } else {
                100.0 * n as f64 / total_entities as f64
            }
        };
        rows.push(NoiseExpRow {
            ratio,
            knn_factual_pct: pct(knn_factual),
            overlap_factual_pct: pct(overlap_factual),
            rouge1: rouge_sum / eval.len().max(1) as f64,
        });
    }
    Ok(rows)
}

pub fn save_noise_rows(rows: &[NoiseExpRow], path: impl AsRef<Path>) -> std::io::Result<()> {
    let mut out = String::from("ratio,knn_factual_pct,overlap_factual_pct,rouge1\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.ratio, r.knn_factual_pct, r.overlap_factual_pct, r.rouge1
        ));
    }
    std::fs::write(path, out)
}

pub fn save_trajectories(
    trajectories: &[Trajectory],
    path: impl AsRef<Path>,
) -> Result<(), TrainError> {
    let to_err = |e: std::io::Error| TrainError::BadTrajectoryFile {
        line: 0,
        message: e.to_string(),
    };
    let mut out = BufWriter::new(File::create(path.as_ref()).map_err(to_err)?);
    for t in trajectories {
        serde_json::to_writer(&mut out, t).map_err(|e| TrainError::BadTrajectoryFile {
            line: 0,
            message: e.to_string(),
        })?;
        out.write_all(b"\n").map_err(to_err)?;
    }
    out.flush().map_err(to_err)?;
    Ok(())
}

pub fn load_trajectories(path: impl AsRef<Path>) -> Result<Vec<Trajectory>, TrainError> {
    let file = File::open(path.as_ref()).map_err(|e| TrainError::BadTrajectoryFile {
        line: 0,
        message: e.to_string(),
    })?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| TrainError::BadTrajectoryFile {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let t: Trajectory =
            serde_json::from_str(&line).map_err(|e| TrainError::BadTrajectoryFile {
                line: line_no,
                message: e.to_string(),
            })?;
        t.validate()?;
        out.push(t);
    }
    Ok(out)
}

pub fn save_train_log(log: &[TrainLogEntry], path: impl AsRef<Path>) -> std::io::Result<()> {
    let mut out = String::new();
    for entry in log {
        out.push_str(&serde_json::to_string(entry).expect("log entry serializes"));
        out.push('\n');
    }
    std::fs::write(path, out)
}

pub fn save_mle_log(log: &[MleLogEntry], path: impl AsRef<Path>) -> std::io::Result<()> {
    let mut out = String::new();
    for entry in log {
        out.push_str(&serde_json::to_string(entry).expect("log entry serializes"));
        out.push('\n');
    }
    std::fs::write(path, out)
}
