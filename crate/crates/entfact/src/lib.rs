//! Entity-level hallucination detection and factuality checking for
//! abstractive summaries.
//!
//! The pipeline works on token-level entity mentions: each mention gets a
//! *prior* probability (masked LM without the source), a *posterior*
//! probability (conditional masked LM given the source) and a binary
//! source-overlap bit. A KNN discriminator over those three features
//! classifies mentions as hallucinated / factual, and the verdicts can be
//! turned into token-level rewards for an offline policy-gradient trainer.
//!
//! Modules, roughly bottom-up:
//!
//! - [`corpus`] — data model, tokenizer, rule-based entity tagger, dataset
//!   I/O and dataset transforms (span-annotation conversion, clean/noisy
//!   splitting and mixing).
//! - [`scorer`] — span log-probability scorers: count-based toy MLM/CMLM,
//!   a file-backed score store and an HTTP scorer client.
//! - [`features`] — per-entity (prior, posterior, overlap) feature tables.
//! - [`classifier`] — the KNN discriminator, two rule baselines and
//!   leave-one-out evaluation.
//! - [`metrics`] — classification metrics, correlations, summary-level
//!   scores, ENFS, novel n-grams, ROUGE, ROC/AUC and annotator agreement.
//! - [`rltrain`] — toy summarization policy, MLE pre-training, factuality
//!   rewards, the importance-weighted offline policy gradient and the
//!   noise-mixing experiment driver.
//! - [`analysis`] — posterior log-ratio (sigma) analysis with TF-IDF
//!   retrieval, plus probability-distribution export.
//! - [`synth`] — seeded synthetic corpus generator used by the examples,
//!   the experiment drivers and the test suite.
//! - [`cli`] — the `entfact` command-line surface.
//!
//! See the crate `examples/` directory for one runnable example per major
//! capability.

pub mod analysis;
pub mod classifier;
pub mod cli;
pub mod corpus;
pub mod features;
pub mod metrics;
pub mod rltrain;
pub mod scorer;
pub mod synth;
