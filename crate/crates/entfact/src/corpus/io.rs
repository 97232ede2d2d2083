//! JSONL persistence for datasets and span annotations.
//!
//! One record per line; field order on save is fixed so that identical
//! inputs produce byte-identical files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    DataError, Dataset, DatasetRecord, Document, EntityClass, EntityMention, MentSpanAnnotation,
    SummaryKind, SummaryRecord,
};

#[derive(Serialize, Deserialize)]
struct WireEntity {
    start: usize,
    length: usize,
    surface: String,
    label: Option<EntityClass>,
}

#[derive(Serialize, Deserialize)]
struct WireRecord {
    doc_id: String,
    document_tokens: Vec<String>,
    summary_tokens: Vec<String>,
    kind: SummaryKind,
    entities: Vec<WireEntity>,
}

fn malformed(line: usize, message: impl ToString) -> DataError {
    DataError::Malformed {
        line,
        message: message.to_string(),
    }
}

/// Loads a dataset from JSONL, validating every record and reporting the
/// offending line number on failure.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset, DataError> {
    let file = File::open(path.as_ref())?;
    let mut records = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let wire: WireRecord = serde_json::from_str(&line).map_err(|e| malformed(line_no, e))?;
        let document = Document::new(wire.doc_id.clone(), wire.document_tokens)
            .map_err(|e| malformed(line_no, e))?;
        let entities = wire
            .entities
            .into_iter()
            .map(|e| EntityMention {
                start: e.start,
                length: e.length,
                surface: e.surface,
                label: e.label,
            })
            .collect();
        let summary = SummaryRecord::new(wire.doc_id, wire.summary_tokens, wire.kind, entities)
            .map_err(|e| malformed(line_no, e))?;
        records.push(DatasetRecord::new(document, summary));
    }
    Dataset::new(records)
}

/// Writes the dataset as JSONL with stable field order.
pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    for record in &dataset.records {
        let wire = WireRecord {
            doc_id: record.document.id.clone(),
            document_tokens: record.document.tokens.clone(),
            summary_tokens: record.summary.tokens.clone(),
            kind: record.summary.kind,
            entities: record
                .summary
                .entities
                .iter()
                .map(|e| WireEntity {
                    start: e.start,
                    length: e.length,
                    surface: e.surface.clone(),
                    label: e.label,
                })
                .collect(),
        };
        serde_json::to_writer(&mut out, &wire).map_err(|e| malformed(0, e))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct WireMent {
    doc_id: String,
    summary_tokens: Vec<String>,
    extrinsic_spans: Vec<(usize, usize)>,
    summary_factual: bool,
}

/// Loads span-level annotations from JSONL.
pub fn load_ment_annotations(path: impl AsRef<Path>) -> Result<Vec<MentSpanAnnotation>, DataError> {
    let file = File::open(path.as_ref())?;
    let mut anns = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let wire: WireMent = serde_json::from_str(&line).map_err(|e| malformed(line_no, e))?;
        anns.push(MentSpanAnnotation {
            doc_id: wire.doc_id,
            summary_tokens: wire.summary_tokens,
            extrinsic_spans: wire.extrinsic_spans,
            summary_factual: wire.summary_factual,
        });
    }
    Ok(anns)
}
