//! Data model for documents, summaries and entity mentions, plus the
//! dataset transforms built on top of it.
//!
//! Everything here is immutable after construction and free of shared
//! state, so records can be processed in parallel by callers.

mod io;
mod tag;

pub use io::{load_dataset, load_ment_annotations, save_dataset};
pub use tag::{
    contains_span, count_span_occurrences, extract_entities, is_numeric_token, tokenize,
    tokens_match,
};

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sentinel substituted for a masked entity span.
pub const MASK_TOKEN: &str = "<mask>";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("duplicate doc_id {0:?}")]
    DuplicateDocId(String),
    #[error("unknown doc_id {0:?}")]
    UnknownDocId(String),
    #[error("document has no tokens")]
    EmptyDocument,
    #[error("entity span {start}+{length} out of bounds for {len} tokens")]
    SpanOutOfBounds {
        start: usize,
        length: usize,
        len: usize,
    },
    #[error("entity span must cover at least one token")]
    EmptySpan,
    #[error("entity spans overlap or are unsorted at span starting {0}")]
    OverlappingSpans(usize),
    #[error("entity surface {surface:?} does not match covered tokens {covered:?}")]
    SurfaceMismatch { surface: String, covered: String },
    #[error("{pool} pool too small: need {needed}, have {available}")]
    PoolShortfall {
        pool: &'static str,
        needed: usize,
        available: usize,
    },
    #[error("noise ratio {0} outside [0, 1]")]
    BadNoiseRatio(f64),
}

/// Source document: an id and its token sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub tokens: Vec<String>,
}

impl Document {
    pub fn new(id: impl Into<String>, tokens: Vec<String>) -> Result<Self, DataError> {
        if tokens.is_empty() {
            return Err(DataError::EmptyDocument);
        }
        Ok(Self {
            id: id.into(),
            tokens,
        })
    }
}

/// Whether a summary was produced by a model or written as the reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummaryKind {
    Generated,
    Reference,
}

/// Four-way entity status. Intrinsic hallucinations are excluded from both
/// binary tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityClass {
    NonHallucinated,
    FactualHallucination,
    NonFactualHallucination,
    IntrinsicHallucination,
}

impl EntityClass {
    /// Binary view: is the mention hallucinated (extrinsic)?
    /// `None` for intrinsic mentions, which fall outside both tasks.
    pub fn is_hallucinated(self) -> Option<bool> {
        match self {
            EntityClass::NonHallucinated => Some(false),
            EntityClass::FactualHallucination | EntityClass::NonFactualHallucination => Some(true),
            EntityClass::IntrinsicHallucination => None,
        }
    }

    /// Binary view: is the mention factual?
    pub fn is_factual(self) -> Option<bool> {
        match self {
            EntityClass::NonHallucinated | EntityClass::FactualHallucination => Some(true),
            EntityClass::NonFactualHallucination => Some(false),
            EntityClass::IntrinsicHallucination => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EntityClass::NonHallucinated => "non_hallucinated",
            EntityClass::FactualHallucination => "factual_hallucination",
            EntityClass::NonFactualHallucination => "non_factual_hallucination",
            EntityClass::IntrinsicHallucination => "intrinsic_hallucination",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "non_hallucinated" => Some(EntityClass::NonHallucinated),
            "factual_hallucination" => Some(EntityClass::FactualHallucination),
            "non_factual_hallucination" => Some(EntityClass::NonFactualHallucination),
            "intrinsic_hallucination" => Some(EntityClass::IntrinsicHallucination),
            _ => None,
        }
    }
}

/// A token span inside a summary, with an optional gold class label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityMention {
    pub start: usize,
    pub length: usize,
    pub surface: String,
    pub label: Option<EntityClass>,
}

impl EntityMention {
    /// Builds a mention over `tokens[start..start+length]`, deriving the
    /// surface from the covered tokens.
    pub fn over(tokens: &[String], start: usize, length: usize) -> Result<Self, DataError> {
        if length == 0 {
            return Err(DataError::EmptySpan);
        }
        if start + length > tokens.len() {
            return Err(DataError::SpanOutOfBounds {
                start,
                length,
                len: tokens.len(),
            });
        }
        Ok(Self {
            start,
            length,
            surface: tokens[start..start + length].join(" "),
            label: None,
        })
    }

    pub fn with_label(mut self, label: EntityClass) -> Self {
        self.label = Some(label);
        self
    }

    pub fn end(&self) -> usize {
        self.start + self.length
    }

    /// The covered tokens as a slice of the summary tokens.
    pub fn covered<'a>(&self, tokens: &'a [String]) -> &'a [String] {
        &tokens[self.start..self.end()]
    }
}

/// A tokenized summary with its entity annotations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub doc_id: String,
    pub tokens: Vec<String>,
    pub kind: SummaryKind,
    pub entities: Vec<EntityMention>,
}

impl SummaryRecord {
    pub fn new(
        doc_id: impl Into<String>,
        tokens: Vec<String>,
        kind: SummaryKind,
        entities: Vec<EntityMention>,
    ) -> Result<Self, DataError> {
        let record = Self {
            doc_id: doc_id.into(),
            tokens,
            kind,
            entities,
        };
        record.validate()?;
        Ok(record)
    }

    /// Checks span bounds, ordering, non-overlap and surface consistency.
    pub fn validate(&self) -> Result<(), DataError> {
        let mut prev_end = 0usize;
        for (i, m) in self.entities.iter().enumerate() {
            if m.length == 0 {
                return Err(DataError::EmptySpan);
            }
            if m.end() > self.tokens.len() {
                return Err(DataError::SpanOutOfBounds {
                    start: m.start,
                    length: m.length,
                    len: self.tokens.len(),
                });
            }
            if i > 0 && m.start < prev_end {
                return Err(DataError::OverlappingSpans(m.start));
            }
            prev_end = m.end();
            let covered = m.covered(&self.tokens).join(" ");
            if covered != m.surface {
                return Err(DataError::SurfaceMismatch {
                    surface: m.surface.clone(),
                    covered,
                });
            }
        }
        Ok(())
    }
}

/// One dataset row: a source document paired with one summary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetRecord {
    pub document: Document,
    pub summary: SummaryRecord,
}

impl DatasetRecord {
    pub fn new(document: Document, summary: SummaryRecord) -> Self {
        debug_assert_eq!(document.id, summary.doc_id);
        Self { document, summary }
    }
}

/// A collection of records with unique doc ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub records: Vec<DatasetRecord>,
}

impl Dataset {
    pub fn new(records: Vec<DatasetRecord>) -> Result<Self, DataError> {
        let mut seen = HashSet::new();
        for r in &records {
            if !seen.insert(r.document.id.clone()) {
                return Err(DataError::DuplicateDocId(r.document.id.clone()));
            }
        }
        Ok(Self { records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, doc_id: &str) -> Option<&DatasetRecord> {
        self.records.iter().find(|r| r.document.id == doc_id)
    }
}

/// Span-level annotation of one summary: extrinsic hallucinated spans plus
/// an overall factuality verdict.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MentSpanAnnotation {
    pub doc_id: String,
    pub summary_tokens: Vec<String>,
    /// `(start, length)` token ranges.
    pub extrinsic_spans: Vec<(usize, usize)>,
    pub summary_factual: bool,
}

impl MentSpanAnnotation {
    fn span_contains(&self, mention: &EntityMention) -> bool {
        self.extrinsic_spans
            .iter()
            .any(|&(s, l)| mention.start >= s && mention.end() <= s + l)
    }
}

/// Replaces the mention's span with a single [`MASK_TOKEN`].
///
/// The result has `tokens.len() - length + 1` tokens.
pub fn mask_entity(
    record: &SummaryRecord,
    mention: &EntityMention,
) -> Result<Vec<String>, DataError> {
    mask_span(&record.tokens, mention.start, mention.length)
}

/// Span-level variant of [`mask_entity`] for callers without a full record.
pub fn mask_span(tokens: &[String], start: usize, length: usize) -> Result<Vec<String>, DataError> {
    if length == 0 {
        return Err(DataError::EmptySpan);
    }
    if start + length > tokens.len() {
        return Err(DataError::SpanOutOfBounds {
            start,
            length,
            len: tokens.len(),
        });
    }
    let mut out = Vec::with_capacity(tokens.len() - length + 1);
    out.extend_from_slice(&tokens[..start]);
    out.push(MASK_TOKEN.to_string());
    out.extend_from_slice(&tokens[start + length..]);
    Ok(out)
}

/// Converts span-level annotations into an entity-labeled dataset.
///
/// Entities are found by [`extract_entities`]. Mentions inside an extrinsic
/// span are dropped when their surface occurs in the source (the span label
/// contradicts the source evidence); the remaining in-span mentions are
/// labeled by the summary verdict, everything outside the spans is factual.
pub fn convert_ment(
    annotations: &[MentSpanAnnotation],
    docs: &Dataset,
) -> Result<Dataset, DataError> {
    let mut records = Vec::with_capacity(annotations.len());
    for ann in annotations {
        let doc = docs
            .get(&ann.doc_id)
            .ok_or_else(|| DataError::UnknownDocId(ann.doc_id.clone()))?;
        for &(s, l) in &ann.extrinsic_spans {
            if l == 0 {
                return Err(DataError::EmptySpan);
            }
            if s + l > ann.summary_tokens.len() {
                return Err(DataError::SpanOutOfBounds {
                    start: s,
                    length: l,
                    len: ann.summary_tokens.len(),
                });
            }
        }
        let mut entities = Vec::new();
        for mention in extract_entities(&ann.summary_tokens) {
            let in_span = ann.span_contains(&mention);
            let in_source =
                contains_span(&doc.document.tokens, mention.covered(&ann.summary_tokens));
            let label = if in_span {
                if in_source {
                    continue; // contradictory evidence: drop
                }
                if ann.summary_factual {
                    EntityClass::FactualHallucination
                } else {
                    EntityClass::NonFactualHallucination
                }
            } else {
                EntityClass::NonHallucinated
            };
            entities.push(mention.with_label(label));
        }
        records.push(DatasetRecord::new(
            doc.document.clone(),
            SummaryRecord::new(
                ann.doc_id.clone(),
                ann.summary_tokens.clone(),
                SummaryKind::Generated,
                entities,
            )?,
        ));
    }
    Dataset::new(records)
}

/// Splits reference records into clean and noisy pools.
///
/// A record is noisy iff at least one of its summary entities fails the
/// source-overlap test; records whose summaries have no entities are clean.
/// Uses the record's own entity annotations when present, otherwise runs
/// [`extract_entities`].
pub fn noise_split(dataset: &Dataset) -> (Dataset, Dataset) {
    let mut clean = Vec::new();
    let mut noisy = Vec::new();
    for record in &dataset.records {
        let extracted;
        let entities: &[EntityMention] = if record.summary.entities.is_empty() {
            extracted = extract_entities(&record.summary.tokens);
            &extracted
        } else {
            &record.summary.entities
        };
        let is_noisy = entities
            .iter()
            .any(|m| !contains_span(&record.document.tokens, m.covered(&record.summary.tokens)));
        if is_noisy {
            noisy.push(record.clone());
        } else {
            clean.push(record.clone());
        }
    }
    (Dataset { records: clean }, Dataset { records: noisy })
}

/// Draws a deterministic mixture of `size` records, `size * noise_ratio` of
/// them from the noisy pool, and shuffles the result by `seed`.
pub fn mix_datasets(
    clean: &Dataset,
    noisy: &Dataset,
    noise_ratio: f64,
    size: usize,
    seed: u64,
) -> Result<Dataset, DataError> {
    if !(0.0..=1.0).contains(&noise_ratio) || !noise_ratio.is_finite() {
        return Err(DataError::BadNoiseRatio(noise_ratio));
    }
    let want_noisy = (size as f64 * noise_ratio).round() as usize;
    let want_clean = size - want_noisy;
    if want_noisy > noisy.len() {
        return Err(DataError::PoolShortfall {
            pool: "noisy",
            needed: want_noisy,
            available: noisy.len(),
        });
    }
    if want_clean > clean.len() {
        return Err(DataError::PoolShortfall {
            pool: "clean",
            needed: want_clean,
            available: clean.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pick = |pool: &Dataset, n: usize| -> Vec<DatasetRecord> {
        let mut idx: Vec<usize> = (0..pool.len()).collect();
        idx.shuffle(&mut rng);
        idx.truncate(n);
        idx.into_iter().map(|i| pool.records[i].clone()).collect()
    };
    let mut records = pick(clean, want_clean);
    records.extend(pick(noisy, want_noisy));
    records.shuffle(&mut rng);
    Dataset::new(records)
}
