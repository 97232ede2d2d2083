//! File-backed entity score store.
//!
//! Holds whole-entity log probabilities keyed by `(doc_id, entity_index)`,
//! so externally computed features (e.g. from full-size language models)
//! can drive the classifier without any in-process scoring.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ScorerError;

/// Stored log probabilities for one entity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntityScores {
    pub log_prior: f64,
    pub log_posterior: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_posterior_clm: Option<f64>,
}

/// Map from `(doc_id, entity_index)` to stored scores.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreFile {
    entries: BTreeMap<(String, usize), EntityScores>,
}

#[derive(Serialize, Deserialize)]
struct WireScore {
    doc_id: String,
    entity_index: usize,
    log_prior: f64,
    log_posterior: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    log_posterior_clm: Option<f64>,
}

impl ScoreFile {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, doc_id: impl Into<String>, entity_index: usize, scores: EntityScores) {
        self.entries.insert((doc_id.into(), entity_index), scores);
    }

    pub fn lookup(&self, doc_id: &str, entity_index: usize) -> Result<EntityScores, ScorerError> {
        self.entries
            .get(&(doc_id.to_string(), entity_index))
            .copied()
            .ok_or_else(|| ScorerError::MissingKey {
                doc_id: doc_id.to_string(),
                entity_index,
            })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScorerError> {
        let file = File::open(path.as_ref()).map_err(|e| ScorerError::BadScoreFile {
            line: 0,
            message: e.to_string(),
        })?;
        let mut out = Self::new();
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line_no = idx + 1;
            let line = line.map_err(|e| ScorerError::BadScoreFile {
                line: line_no,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let wire: WireScore =
                serde_json::from_str(&line).map_err(|e| ScorerError::BadScoreFile {
                    line: line_no,
                    message: e.to_string(),
                })?;
            let finite = wire.log_prior.is_finite()
                && wire.log_posterior.is_finite()
                && wire.log_posterior_clm.is_none_or(|v| v.is_finite());
            if !finite {
                return Err(ScorerError::BadScoreFile {
                    line: line_no,
                    message: "log probabilities must be finite".into(),
                });
            }
            out.insert(
                wire.doc_id,
                wire.entity_index,
                EntityScores {
                    log_prior: wire.log_prior,
                    log_posterior: wire.log_posterior,
                    log_posterior_clm: wire.log_posterior_clm,
                },
            );
        }
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ScorerError> {
        let to_err = |e: std::io::Error| ScorerError::BadScoreFile {
            line: 0,
            message: e.to_string(),
        };
        let mut out = BufWriter::new(File::create(path.as_ref()).map_err(to_err)?);
        for ((doc_id, entity_index), scores) in &self.entries {
            let wire = WireScore {
                doc_id: doc_id.clone(),
                entity_index: *entity_index,
                log_prior: scores.log_prior,
                log_posterior: scores.log_posterior,
                log_posterior_clm: scores.log_posterior_clm,
            };
            serde_json::to_writer(&mut out, &wire).map_err(|e| ScorerError::BadScoreFile {
                line: 0,
                message: e.to_string(),
            })?;
            out.write_all(b"\n").map_err(to_err)?;
        }
        out.flush().map_err(to_err)?;
        Ok(())
    }
}
