//! Per-entity feature computation.
//!
//! Every non-intrinsic entity mention gets a three-component feature
//! vector: the prior probability of the span under a masked LM that never
//! sees the source, the posterior probability under a source-conditioned
//! model (CMLM by default, CLM if configured), and a binary bit saying
//! whether the span occurs contiguously in the source document. Features
//! are used raw in `[0, 1]^3`; probabilities are exponentiated here and
//! nowhere else.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{contains_span, Dataset, Document, EntityClass, EntityMention, SummaryRecord};
use crate::scorer::{ScoreFile, ScoreQuery, Scorer, ScorerError, ScorerMode};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("entity {doc_id}:{entity_index}: {source}")]
    Entity {
        doc_id: String,
        entity_index: usize,
        #[source]
        source: ScorerError,
    },
    #[error("entity {doc_id}:{entity_index}: score file has no CLM posterior")]
    ClmScoresMissing { doc_id: String, entity_index: usize },
    #[error("feature csv line {line}: {message}")]
    BadCsv { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Floor keeping log-space finite when a pure-copy posterior hits an
/// absent token.
const PROB_FLOOR: f64 = 1e-300;

/// Which model provides the posterior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PosteriorMode {
    Cmlm,
    Clm,
}

impl PosteriorMode {
    fn scorer_mode(self) -> ScorerMode {
        match self {
            PosteriorMode::Cmlm => ScorerMode::Cmlm,
            PosteriorMode::Clm => ScorerMode::Clm,
        }
    }
}

/// The feature triple for one entity. `prior` and `posterior` lie in
/// `(0, 1]`; the overlap bit shares the unit scale when used as a
/// coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub prior: f64,
    pub posterior: f64,
    pub overlap: bool,
}

impl FeatureVector {
    /// Coordinates restricted to the active subset, in (prior, posterior,
    /// overlap) order.
    pub fn coords(&self, subset: FeatureSubset) -> Vec<f64> {
        let mut out = Vec::with_capacity(3);
        if subset.prior {
            out.push(self.prior);
        }
        if subset.posterior {
            out.push(self.posterior);
        }
        if subset.overlap {
            out.push(if self.overlap { 1.0 } else { 0.0 });
        }
        out
    }
}

/// Active feature coordinates for the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSubset {
    pub prior: bool,
    pub posterior: bool,
    pub overlap: bool,
}

impl FeatureSubset {
    pub const ALL: Self = Self {
        prior: true,
        posterior: true,
        overlap: true,
    };
    pub const WITHOUT_OVERLAP: Self = Self {
        prior: true,
        posterior: true,
        overlap: false,
    };
    pub const WITHOUT_PRIOR: Self = Self {
        prior: false,
        posterior: true,
        overlap: true,
    };
    pub const WITHOUT_POSTERIOR: Self = Self {
        prior: true,
        posterior: false,
        overlap: true,
    };

    pub fn dims(&self) -> usize {
        usize::from(self.prior) + usize::from(self.posterior) + usize::from(self.overlap)
    }

    /// Accepts `all`, `no-prior`, `no-posterior`, `no-overlap`, or a
    /// comma-separated list of feature names.
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "all" => return Some(Self::ALL),
            "no-prior" => return Some(Self::WITHOUT_PRIOR),
            "no-posterior" => return Some(Self::WITHOUT_POSTERIOR),
            "no-overlap" => return Some(Self::WITHOUT_OVERLAP),
            _ => {}
        }
        let mut subset = Self {
            prior: false,
            posterior: false,
            overlap: false,
        };
        for part in s.split(',') {
            match part.trim() {
                "prior" => subset.prior = true,
                "posterior" => subset.posterior = true,
                "overlap" => subset.overlap = true,
                _ => return None,
            }
        }
        (subset.dims() > 0).then_some(subset)
    }

    pub fn label(&self) -> String {
        match (self.prior, self.posterior, self.overlap) {
            (true, true, true) => "all".into(),
            (false, true, true) => "no-prior".into(),
            (true, false, true) => "no-posterior".into(),
            (true, true, false) => "no-overlap".into(),
            _ => {
                let mut parts = Vec::new();
                if self.prior {
                    parts.push("prior");
                }
                if self.posterior {
                    parts.push("posterior");
                }
                if self.overlap {
                    parts.push("overlap");
                }
                parts.join(",")
            }
        }
    }
}

/// One feature-table row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub doc_id: String,
    /// Index of the mention within its record's entity list.
    pub entity_index: usize,
    pub features: FeatureVector,
    pub label: Option<EntityClass>,
}

/// Feature rows in deterministic `(doc_id, entity_index)` order, one per
/// non-intrinsic entity.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureTable {
    pub rows: Vec<FeatureRow>,
}

impl FeatureTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn save_csv(&self, path: impl AsRef<std::path::Path>) -> Result<(), FeatureError> {
        let mut w = csv::Writer::from_path(path.as_ref()).map_err(csv_err)?;
        w.write_record([
            "doc_id",
            "entity_index",
            "prior",
            "posterior",
            "overlap",
            "label",
        ])
        .map_err(csv_err)?;
        for row in &self.rows {
            w.write_record([
                row.doc_id.as_str(),
                &row.entity_index.to_string(),
                &row.features.prior.to_string(),
                &row.features.posterior.to_string(),
                if row.features.overlap { "1" } else { "0" },
                row.label.map(EntityClass::as_str).unwrap_or(""),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load_csv(path: impl AsRef<std::path::Path>) -> Result<Self, FeatureError> {
        let mut reader = csv::Reader::from_path(path.as_ref()).map_err(csv_err)?;
        let mut rows = Vec::new();
        for (idx, record) in reader.records().enumerate() {
            let line = idx + 2; // header is line 1
            let record = record.map_err(|e| FeatureError::BadCsv {
                line,
                message: e.to_string(),
            })?;
            let field = |i: usize| -> Result<&str, FeatureError> {
                record.get(i).ok_or_else(|| FeatureError::BadCsv {
                    line,
                    message: format!("missing column {i}"),
                })
            };
            let parse_f64 = |s: &str| -> Result<f64, FeatureError> {
                s.parse().map_err(|_| FeatureError::BadCsv {
                    line,
                    message: format!("bad number {s:?}"),
                })
            };
            let label = match field(5)? {
                "" => None,
                s => Some(EntityClass::parse(s).ok_or_else(|| FeatureError::BadCsv {
                    line,
                    message: format!("unknown label {s:?}"),
                })?),
            };
            rows.push(FeatureRow {
                doc_id: field(0)?.to_string(),
                entity_index: field(1)?.parse().map_err(|_| FeatureError::BadCsv {
                    line,
                    message: "bad entity_index".into(),
                })?,
                features: FeatureVector {
                    prior: parse_f64(field(2)?)?,
                    posterior: parse_f64(field(3)?)?,
                    overlap: field(4)? == "1",
                },
                label,
            });
        }
        Ok(Self { rows })
    }
}

fn csv_err(e: csv::Error) -> FeatureError {
    FeatureError::BadCsv {
        line: 0,
        message: e.to_string(),
    }
}

/// Prior probability of the mention: exp of the summed step log-probs
/// under MLM conditioning (context only, no source).
pub fn prior_prob(
    mlm: &dyn Scorer,
    record: &SummaryRecord,
    mention: &EntityMention,
) -> Result<f64, ScorerError> {
    let query = ScoreQuery::mlm(record.tokens.clone(), (mention.start, mention.length));
    Ok(exp_floor(mlm.score(&query)?.total()))
}

/// Posterior probability of the mention given its context and the source.
pub fn posterior_prob(
    scorer: &dyn Scorer,
    document: &Document,
    record: &SummaryRecord,
    mention: &EntityMention,
    mode: PosteriorMode,
) -> Result<f64, ScorerError> {
    let query = ScoreQuery::with_source(
        mode.scorer_mode(),
        document.tokens.clone(),
        record.tokens.clone(),
        (mention.start, mention.length),
    );
    Ok(exp_floor(scorer.score(&query)?.total()))
}

/// Binary source-overlap feature: 1 iff the mention's tokens occur
/// contiguously in the document (case-insensitive words, exact numerals).
pub fn overlap(document: &Document, record: &SummaryRecord, mention: &EntityMention) -> bool {
    contains_span(&document.tokens, mention.covered(&record.tokens))
}

fn exp_floor(log_prob: f64) -> f64 {
    log_prob.exp().max(PROB_FLOOR)
}

/// Where feature probabilities come from.
pub enum ScoreSource<'a> {
    /// In-process scorers (toy or remote): an MLM-mode scorer for the
    /// prior, a source-conditioned scorer for the posterior.
    Scorers {
        mlm: &'a dyn Scorer,
        cmlm: &'a dyn Scorer,
    },
    /// Precomputed whole-entity scores keyed by `(doc_id, entity_index)`.
    File(&'a ScoreFile),
}

/// Builds the labeled feature table for every non-intrinsic entity in the
/// dataset. Rows come out sorted by `(doc_id, entity_index)`; the first
/// scorer failure aborts with the offending key.
pub fn build_feature_table(
    dataset: &Dataset,
    source: &ScoreSource,
    mode: PosteriorMode,
) -> Result<FeatureTable, FeatureError> {
    let mut rows = Vec::new();
    for record in &dataset.records {
        for (entity_index, mention) in record.summary.entities.iter().enumerate() {
            if mention.label == Some(EntityClass::IntrinsicHallucination) {
                continue;
            }
            let doc_id = record.document.id.clone();
            let wrap = |source: ScorerError| FeatureError::Entity {
                doc_id: doc_id.clone(),
                entity_index,
                source,
            };
            let (prior, posterior) = match source {
                ScoreSource::Scorers { mlm, cmlm } => (
                    prior_prob(*mlm, &record.summary, mention).map_err(wrap)?,
                    posterior_prob(*cmlm, &record.document, &record.summary, mention, mode)
                        .map_err(wrap)?,
                ),
                ScoreSource::File(scores) => {
                    let entry = scores.lookup(&doc_id, entity_index).map_err(wrap)?;
                    let log_posterior = match mode {
                        PosteriorMode::Cmlm => entry.log_posterior,
                        PosteriorMode::Clm => entry.log_posterior_clm.ok_or_else(|| {
                            FeatureError::ClmScoresMissing {
                                doc_id: doc_id.clone(),
                                entity_index,
                            }
                        })?,
                    };
                    (exp_floor(entry.log_prior), exp_floor(log_posterior))
                }
            };
            rows.push(FeatureRow {
                doc_id,
                entity_index,
                features: FeatureVector {
                    prior,
                    posterior,
                    overlap: overlap(&record.document, &record.summary, mention),
                },
                label: mention.label,
            });
        }
    }
    rows.sort_by(|a, b| (&a.doc_id, a.entity_index).cmp(&(&b.doc_id, b.entity_index)));
    Ok(FeatureTable { rows })
}

/// Computes raw per-entity log scores for every non-intrinsic entity,
/// suitable for persisting as a score file. `with_clm` adds the CLM
/// posterior column (a second posterior query per entity).
pub fn compute_entity_scores(
    dataset: &Dataset,
    mlm: &dyn Scorer,
    cmlm: &dyn Scorer,
    with_clm: bool,
) -> Result<ScoreFile, FeatureError> {
    use crate::scorer::EntityScores;
    let mut out = ScoreFile::new();
    for record in &dataset.records {
        for (entity_index, mention) in record.summary.entities.iter().enumerate() {
            if mention.label == Some(EntityClass::IntrinsicHallucination) {
                continue;
            }
            let wrap = |source: ScorerError| FeatureError::Entity {
                doc_id: record.document.id.clone(),
                entity_index,
                source,
            };
            let span = (mention.start, mention.length);
            let prior_query = ScoreQuery::mlm(record.summary.tokens.clone(), span);
            let posterior_query = ScoreQuery::with_source(
                ScorerMode::Cmlm,
                record.document.tokens.clone(),
                record.summary.tokens.clone(),
                span,
            );
            let log_posterior_clm = if with_clm {
                let clm_query = ScoreQuery::with_source(
                    ScorerMode::Clm,
                    record.document.tokens.clone(),
                    record.summary.tokens.clone(),
                    span,
                );
                Some(cmlm.score(&clm_query).map_err(wrap)?.total())
            } else {
                None
            };
            out.insert(
                record.document.id.clone(),
                entity_index,
                EntityScores {
                    log_prior: mlm.score(&prior_query).map_err(wrap)?.total(),
                    log_posterior: cmlm.score(&posterior_query).map_err(wrap)?.total(),
                    log_posterior_clm,
                },
            );
        }
    }
    Ok(out)
}
