//! Knowledge-source analysis: compares an entity's posterior probability
//! under two models trained on different corpora via the log-ratio
//! `sigma = log P_A - log P_B`, retrieves each entity's most similar
//! documents with TF-IDF, and counts entity occurrences in them. A large
//! positive sigma together with more occurrences in corpus A's neighbors
//! indicates corpus A supplied the knowledge behind the entity.
//!
//! Also exports the per-entity probability distribution for plotting.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::EntityPrediction;
use crate::corpus::{count_span_occurrences, tokenize, Document};
use crate::features::FeatureTable;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("probability {0} outside (0, 1]")]
    NonPositiveProbability(f64),
    #[error("k = {k} exceeds corpus size {size}")]
    BadK { k: usize, size: usize },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("query shares no vocabulary with the index")]
    EmptyQuery,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// `log(posterior_a) - log(posterior_b)` for probabilities in `(0, 1]`.
pub fn sigma(posterior_a: f64, posterior_b: f64) -> Result<f64, AnalysisError> {
    for p in [posterior_a, posterior_b] {
        if !(p > 0.0 && p <= 1.0) || !p.is_finite() {
            return Err(AnalysisError::NonPositiveProbability(p));
        }
    }
    Ok(posterior_a.ln() - posterior_b.ln())
}

/// Per-entity sigma record with occurrence counts in the retrieved
/// neighborhoods of the two corpora.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaRecord {
    pub doc_id: String,
    pub entity_index: usize,
    pub surface: String,
    pub log_posterior_a: f64,
    pub log_posterior_b: f64,
    pub sigma: f64,
    pub bucket: SigmaBucket,
    pub count_a: usize,
    pub count_b: usize,
}

/// Threshold bucket for a sigma value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaBucket {
    /// `sigma >= high` threshold (default 5).
    High,
    /// `sigma <= low` threshold (default 0).
    Low,
    Mid,
}

/// Bucket thresholds; defaults follow the high >= 5, low <= 0 convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaBuckets {
    pub high: f64,
    pub low: f64,
}

impl Default for SigmaBuckets {
    fn default() -> Self {
        Self {
            high: 5.0,
            low: 0.0,
        }
    }
}

impl SigmaBuckets {
    pub fn bucket(&self, sigma: f64) -> SigmaBucket {
        if sigma >= self.high {
            SigmaBucket::High
        } else if sigma <= self.low {
            SigmaBucket::Low
        } else {
            SigmaBucket::Mid
        }
    }
}

/// Mean occurrence count per bucket; empty buckets report `None`.
pub fn mean_occurrences(
    records: &[SigmaRecord],
    bucket: SigmaBucket,
) -> (Option<f64>, Option<f64>) {
    let selected: Vec<&SigmaRecord> = records.iter().filter(|r| r.bucket == bucket).collect();
    if selected.is_empty() {
        return (None, None);
    }
    let n = selected.len() as f64;
    let mean_a = selected.iter().map(|r| r.count_a as f64).sum::<f64>() / n;
    let mean_b = selected.iter().map(|r| r.count_b as f64).sum::<f64>() / n;
    (Some(mean_a), Some(mean_b))
}

/// Case-insensitive contiguous-token occurrence count of the entity
/// surface over the retrieved documents.
pub fn count_occurrences(surface: &str, documents: &[&Document]) -> usize {
    let needle = tokenize(surface);
    documents
        .iter()
        .map(|d| count_span_occurrences(&d.tokens, &needle))
        .sum()
}

/// TF-IDF index over a document corpus: raw term frequency,
/// `idf = ln(N / df)`, L2-normalized vectors, cosine ranking.
pub struct TfidfIndex {
    doc_ids: Vec<String>,
    /// Sparse L2-normalized tf-idf vectors, term id -> weight.
    vectors: Vec<HashMap<u32, f64>>,
    term_ids: HashMap<String, u32>,
    idf: Vec<f64>,
}

impl TfidfIndex {
    pub fn build(corpus: &[Document]) -> Result<Self, AnalysisError> {
        if corpus.is_empty() {
            return Err(AnalysisError::EmptyCorpus);
        }
        let mut term_ids: HashMap<String, u32> = HashMap::new();
        let mut doc_freq: Vec<u32> = Vec::new();
        let mut raw_counts: Vec<HashMap<u32, f64>> = Vec::with_capacity(corpus.len());
        for doc in corpus {
            let mut counts: HashMap<u32, f64> = HashMap::new();
            for token in &doc.tokens {
                let next_id = term_ids.len() as u32;
                let id = *term_ids.entry(token.clone()).or_insert(next_id);
                if id as usize == doc_freq.len() {
                    doc_freq.push(0);
                }
                *counts.entry(id).or_insert(0.0) += 1.0;
            }
            for &id in counts.keys() {
                doc_freq[id as usize] += 1;
            }
            raw_counts.push(counts);
        }
        let n = corpus.len() as f64;
        let idf: Vec<f64> = doc_freq.iter().map(|&df| (n / df as f64).ln()).collect();
        let vectors = raw_counts
            .into_iter()
            .map(|counts| {
                let mut v: HashMap<u32, f64> = counts
                    .into_iter()
                    .map(|(id, tf)| (id, tf * idf[id as usize]))
                    .collect();
                let norm = v.values().map(|w| w * w).sum::<f64>().sqrt();
                if norm > 0.0 {
                    for w in v.values_mut() {
                        *w /= norm;
                    }
                }
                v
            })
            .collect();
        Ok(Self {
            doc_ids: corpus.iter().map(|d| d.id.clone()).collect(),
            vectors,
            term_ids,
            idf,
        })
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    /// Query vector under the index's vocabulary and idf; terms unseen at
    /// build time are dropped.
    fn query_vector(&self, tokens: &[String]) -> Result<HashMap<u32, f64>, AnalysisError> {
        let mut counts: HashMap<u32, f64> = HashMap::new();
        for token in tokens {
            if let Some(&id) = self.term_ids.get(token) {
                *counts.entry(id).or_insert(0.0) += 1.0;
            }
        }
        if counts.is_empty() {
            return Err(AnalysisError::EmptyQuery);
        }
        let mut v: HashMap<u32, f64> = counts
            .into_iter()
            .map(|(id, tf)| (id, tf * self.idf[id as usize]))
            .collect();
        let norm = v.values().map(|w| w * w).sum::<f64>().sqrt();
        if norm > 0.0 {
            for w in v.values_mut() {
                *w /= norm;
            }
        }
        Ok(v)
    }

    /// Top-k document ids by cosine similarity, ties broken by ascending
    /// doc id.
    pub fn retrieve_topk(
        &self,
        query: &Document,
        k: usize,
    ) -> Result<Vec<(String, f64)>, AnalysisError> {
        if k > self.len() {
            return Err(AnalysisError::BadK {
                k,
                size: self.len(),
            });
        }
        let qv = self.query_vector(&query.tokens)?;
        let mut scored: Vec<(f64, &String)> = self
            .vectors
            .iter()
            .zip(&self.doc_ids)
            .map(|(v, id)| {
                let sim: f64 = qv
                    .iter()
                    .filter_map(|(term, w)| v.get(term).map(|u| u * w))
                    .sum();
                (sim, id)
            })
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)));
        Ok(scored
            .into_iter()
            .take(k)
            .map(|(sim, id)| (id.clone(), sim))
            .collect())
    }
}

/// Writes the sigma report CSV: entity, sigma, bucket, count_a, count_b.
pub fn save_sigma_report(
    records: &[SigmaRecord],
    path: impl AsRef<std::path::Path>,
) -> Result<(), AnalysisError> {
    let mut w = csv::Writer::from_path(path.as_ref()).map_err(io_like)?;
    w.write_record([
        "doc_id",
        "entity_index",
        "entity",
        "sigma",
        "bucket",
        "count_a",
        "count_b",
    ])
    .map_err(io_like)?;
    for r in records {
        let bucket = match r.bucket {
            SigmaBucket::High => "high",
            SigmaBucket::Low => "low",
            SigmaBucket::Mid => "mid",
        };
        w.write_record([
            r.doc_id.as_str(),
            &r.entity_index.to_string(),
            r.surface.as_str(),
            &r.sigma.to_string(),
            bucket,
            &r.count_a.to_string(),
            &r.count_b.to_string(),
        ])
        .map_err(io_like)?;
    }
    w.flush()?;
    Ok(())
}

fn io_like(e: csv::Error) -> AnalysisError {
    AnalysisError::Io(std::io::Error::other(e.to_string()))
}

/// Joins a feature table with predictions into a plotting-friendly CSV:
/// prior, posterior, overlap, gold label, predicted label, confidence.
pub fn export_distribution(
    table: &FeatureTable,
    predictions: &[EntityPrediction],
    path: impl AsRef<std::path::Path>,
) -> Result<(), AnalysisError> {
    let by_key: HashMap<(&str, usize), &EntityPrediction> = predictions
        .iter()
        .map(|p| ((p.doc_id.as_str(), p.entity_index), p))
        .collect();
    let mut w = csv::Writer::from_path(path.as_ref()).map_err(io_like)?;
    w.write_record([
        "doc_id",
        "entity_index",
        "prior",
        "posterior",
        "overlap",
        "gold_label",
        "predicted_label",
        "confidence",
    ])
    .map_err(io_like)?;
    for row in &table.rows {
        let prediction = by_key.get(&(row.doc_id.as_str(), row.entity_index));
        w.write_record([
            row.doc_id.as_str(),
            &row.entity_index.to_string(),
            &row.features.prior.to_string(),
            &row.features.posterior.to_string(),
            if row.features.overlap { "1" } else { "0" },
            row.label.map(|l| l.as_str()).unwrap_or(""),
            prediction.map(|p| p.label.as_str()).unwrap_or(""),
            &prediction
                .map(|p| p.confidence.to_string())
                .unwrap_or_default(),
        ])
        .map_err(io_like)?;
    }
    w.flush()?;
    Ok(())
}
