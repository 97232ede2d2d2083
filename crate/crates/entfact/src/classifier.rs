//! KNN discriminator over the entity feature triple, the two rule
//! baselines, and leave-one-out evaluation with feature ablations.
//!
//! Determinism contract: neighbors are ordered by (squared Euclidean
//! distance, training index); vote ties resolve to the task's unsafe
//! class (non-factual / hallucinated) unless flipped via
//! [`KnnModel::with_tie_break`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Document, EntityClass, EntityMention, SummaryRecord};
use crate::features::{overlap, FeatureSubset, FeatureTable, FeatureVector};
use crate::metrics::{classification_report, ClassificationReport, MetricError};

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("row {doc_id}:{entity_index} has no gold label")]
    UnlabeledRow { doc_id: String, entity_index: usize },
    #[error("k must satisfy 1 <= k <= {rows}, got {k}")]
    BadK { k: usize, rows: usize },
    #[error("leave-one-out needs at least k+1 = {need} rows, got {got}")]
    TooFewRows { need: usize, got: usize },
    #[error("task mismatch: expected {expected:?}, model is {got:?}")]
    TaskMismatch { expected: Task, got: Task },
    #[error("metric failure: {0}")]
    Metric(#[from] MetricError),
    #[error("model file: {0}")]
    BadModelFile(String),
    #[error("predictions csv line {line}: {message}")]
    BadCsv { line: usize, message: String },
}

/// Classification task the model is fit for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Hallucination,
    Factuality,
    ThreeClass,
}

/// Flat label space across the three tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskLabel {
    Hallucinated,
    NotHallucinated,
    Factual,
    NonFactual,
    NonHallucinated,
    FactualHallucination,
    NonFactualHallucination,
}

impl TaskLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskLabel::Hallucinated => "hallucinated",
            TaskLabel::NotHallucinated => "not_hallucinated",
            TaskLabel::Factual => "factual",
            TaskLabel::NonFactual => "non_factual",
            TaskLabel::NonHallucinated => "non_hallucinated",
            TaskLabel::FactualHallucination => "factual_hallucination",
            TaskLabel::NonFactualHallucination => "non_factual_hallucination",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "hallucinated" => Some(TaskLabel::Hallucinated),
            "not_hallucinated" => Some(TaskLabel::NotHallucinated),
            "factual" => Some(TaskLabel::Factual),
            "non_factual" => Some(TaskLabel::NonFactual),
            "non_hallucinated" => Some(TaskLabel::NonHallucinated),
            "factual_hallucination" => Some(TaskLabel::FactualHallucination),
            "non_factual_hallucination" => Some(TaskLabel::NonFactualHallucination),
            _ => None,
        }
    }
}

impl Task {
    /// Maps a gold entity class onto this task's label space; `None` for
    /// intrinsic mentions, which are outside every task.
    pub fn project(self, class: EntityClass) -> Option<TaskLabel> {
        match self {
            Task::Hallucination => class.is_hallucinated().map(|h| {
                if h {
                    TaskLabel::Hallucinated
                } else {
                    TaskLabel::NotHallucinated
                }
            }),
            Task::Factuality => class.is_factual().map(|f| {
                if f {
                    TaskLabel::Factual
                } else {
                    TaskLabel::NonFactual
                }
            }),
            Task::ThreeClass => match class {
                EntityClass::NonHallucinated => Some(TaskLabel::NonHallucinated),
                EntityClass::FactualHallucination => Some(TaskLabel::FactualHallucination),
                EntityClass::NonFactualHallucination => Some(TaskLabel::NonFactualHallucination),
                EntityClass::IntrinsicHallucination => None,
            },
        }
    }

    /// The task's classes, unsafe class first (also the vote tie order).
    pub fn classes(self) -> &'static [TaskLabel] {
        match self {
            Task::Hallucination => &[TaskLabel::Hallucinated, TaskLabel::NotHallucinated],
            Task::Factuality => &[TaskLabel::NonFactual, TaskLabel::Factual],
            Task::ThreeClass => &[
                TaskLabel::NonFactualHallucination,
                TaskLabel::FactualHallucination,
                TaskLabel::NonHallucinated,
            ],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Hallucination => "hallucination",
            Task::Factuality => "factuality",
            Task::ThreeClass => "three-class",
        }
    }

    /// The reference class whose confidence is reported in prediction
    /// output (factual / hallucinated; non-hallucinated for three-class).
    pub fn confidence_class(self) -> TaskLabel {
        match self {
            Task::Hallucination => TaskLabel::Hallucinated,
            Task::Factuality => TaskLabel::Factual,
            Task::ThreeClass => TaskLabel::NonHallucinated,
        }
    }
}

/// Vote tie resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// Prefer the unsafe class (non-factual / hallucinated).
    #[default]
    Unsafe,
    /// Prefer the safe class.
    Safe,
}

/// A prediction with per-class confidences (fractions of the k neighbors).
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: TaskLabel,
    pub confidences: Vec<(TaskLabel, f64)>,
}

impl Prediction {
    pub fn confidence(&self, label: TaskLabel) -> f64 {
        self.confidences
            .iter()
            .find(|(l, _)| *l == label)
            .map(|(_, c)| *c)
            .unwrap_or(0.0)
    }
}

/// Stored labeled feature points plus the neighbor count.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KnnModel {
    k: usize,
    task: Task,
    subset: FeatureSubset,
    points: Vec<(FeatureVector, TaskLabel)>,
    #[serde(default)]
    tie_break: TieBreak,
}

impl KnnModel {
    /// Fits the model: stores every labeled non-intrinsic row projected
    /// onto the task's label space.
    pub fn fit(
        table: &FeatureTable,
        k: usize,
        task: Task,
        subset: FeatureSubset,
    ) -> Result<Self, ClassifierError> {
        let mut points = Vec::with_capacity(table.len());
        for row in &table.rows {
            let class = row.label.ok_or_else(|| ClassifierError::UnlabeledRow {
                doc_id: row.doc_id.clone(),
                entity_index: row.entity_index,
            })?;
            // Intrinsic rows are excluded from every task.
            if let Some(label) = task.project(class) {
                points.push((row.features, label));
            }
        }
        if k == 0 || k > points.len() {
            return Err(ClassifierError::BadK {
                k,
                rows: points.len(),
            });
        }
        Ok(Self {
            k,
            task,
            subset,
            points,
            tie_break: TieBreak::Unsafe,
        })
    }

    pub fn with_tie_break(mut self, tie_break: TieBreak) -> Self {
        self.tie_break = tie_break;
        self
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn subset(&self) -> FeatureSubset {
        self.subset
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Majority vote among the k nearest stored points.
    pub fn predict(&self, x: &FeatureVector) -> Prediction {
        let query = x.coords(self.subset);
        let mut dists: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, (p, _))| (squared_distance(&p.coords(self.subset), &query), i))
            .collect();
        // Partial selection; the full order beyond k does not matter.
        let k = self.k;
        if k < dists.len() {
            dists.select_nth_unstable_by(k - 1, cmp_dist);
        }
        let neighbors = &dists[..k];
        vote(
            self.task,
            self.tie_break,
            k,
            neighbors.iter().map(|&(_, i)| self.points[i].1),
        )
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<(), ClassifierError> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| ClassifierError::BadModelFile(e.to_string()))?;
        std::fs::write(path, json).map_err(|e| ClassifierError::BadModelFile(e.to_string()))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, ClassifierError> {
        let json = std::fs::read_to_string(path)
            .map_err(|e| ClassifierError::BadModelFile(e.to_string()))?;
        serde_json::from_str(&json).map_err(|e| ClassifierError::BadModelFile(e.to_string()))
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn cmp_dist(a: &(f64, usize), b: &(f64, usize)) -> std::cmp::Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

fn vote(
    task: Task,
    tie_break: TieBreak,
    k: usize,
    neighbor_labels: impl Iterator<Item = TaskLabel>,
) -> Prediction {
    let classes = task.classes();
    let mut counts = vec![0usize; classes.len()];
    for label in neighbor_labels {
        let idx = classes
            .iter()
            .position(|c| *c == label)
            .expect("label belongs to task");
        counts[idx] += 1;
    }
    let best_count = *counts.iter().max().expect("non-empty class set");
    // classes() lists the unsafe class first, so the first maximal count
    // wins; Safe flips the scan direction.
    let label = match tie_break {
        TieBreak::Unsafe => classes
            .iter()
            .zip(&counts)
            .find(|(_, c)| **c == best_count)
            .map(|(l, _)| *l),
        TieBreak::Safe => classes
            .iter()
            .zip(&counts)
            .rev()
            .find(|(_, c)| **c == best_count)
            .map(|(l, _)| *l),
    }
    .expect("non-empty class set");
    let confidences = classes
        .iter()
        .zip(&counts)
        .map(|(l, c)| (*l, *c as f64 / k as f64))
        .collect();
    Prediction { label, confidences }
}

/// Per-row leave-one-out predictions: row `i` is predicted by the model
/// fit on all other rows, with neighbor ties still broken by the original
/// training index.
pub fn loo_predictions(
    table: &FeatureTable,
    k: usize,
    task: Task,
    subset: FeatureSubset,
) -> Result<Vec<(TaskLabel, Prediction)>, ClassifierError> {
    if k == 0 {
        return Err(ClassifierError::BadK {
            k,
            rows: table.len(),
        });
    }
    let model = KnnModel::fit(table, k, task, subset)?;
    if model.points.len() < k + 1 {
        return Err(ClassifierError::TooFewRows {
            need: k + 1,
            got: model.points.len(),
        });
    }
    let coords: Vec<Vec<f64>> = model.points.iter().map(|(p, _)| p.coords(subset)).collect();
    let mut out = Vec::with_capacity(model.points.len());
    for i in 0..model.points.len() {
        let mut dists: Vec<(f64, usize)> = (0..model.points.len())
            .filter(|&j| j != i)
            .map(|j| (squared_distance(&coords[j], &coords[i]), j))
            .collect();
        if k < dists.len() {
            dists.select_nth_unstable_by(k - 1, cmp_dist);
        }
        let prediction = vote(
            task,
            model.tie_break,
            k,
            dists[..k].iter().map(|&(_, j)| model.points[j].1),
        );
        out.push((model.points[i].1, prediction));
    }
    Ok(out)
}

/// Leave-one-out evaluation: accuracy, macro-F1 and per-class PRF.
pub fn loo_eval(
    table: &FeatureTable,
    k: usize,
    task: Task,
    subset: FeatureSubset,
) -> Result<ClassificationReport<TaskLabel>, ClassifierError> {
    let rows = loo_predictions(table, k, task, subset)?;
    let gold: Vec<TaskLabel> = rows.iter().map(|(g, _)| *g).collect();
    let pred: Vec<TaskLabel> = rows.iter().map(|(_, p)| p.label).collect();
    Ok(classification_report(&pred, &gold, task.classes())?)
}

/// The four feature-ablation subsets evaluated together.
pub fn ablation_grid(
    table: &FeatureTable,
    k: usize,
    task: Task,
) -> Result<Vec<(FeatureSubset, ClassificationReport<TaskLabel>)>, ClassifierError> {
    [
        FeatureSubset::ALL,
        FeatureSubset::WITHOUT_OVERLAP,
        FeatureSubset::WITHOUT_PRIOR,
        FeatureSubset::WITHOUT_POSTERIOR,
    ]
    .into_iter()
    .map(|subset| loo_eval(table, k, task, subset).map(|r| (subset, r)))
    .collect()
}

/// Word-overlap baseline: an entity absent from the source is both
/// hallucinated and non-factual.
pub fn baseline_overlap(
    document: &Document,
    record: &SummaryRecord,
    mention: &EntityMention,
) -> (TaskLabel, TaskLabel) {
    baseline_overlap_bit(overlap(document, record, mention))
}

/// [`baseline_overlap`] on a precomputed overlap bit.
pub fn baseline_overlap_bit(overlap: bool) -> (TaskLabel, TaskLabel) {
    if overlap {
        (TaskLabel::NotHallucinated, TaskLabel::Factual)
    } else {
        (TaskLabel::Hallucinated, TaskLabel::NonFactual)
    }
}

/// LM-based baseline: non-factual iff the entity is absent from the
/// source and its prior exceeds its posterior; the hallucination call
/// stays overlap-gated.
pub fn baseline_lm(prior: f64, posterior: f64, overlap: bool) -> (TaskLabel, TaskLabel) {
    let hallucination = if overlap {
        TaskLabel::NotHallucinated
    } else {
        TaskLabel::Hallucinated
    };
    let factuality = if !overlap && prior > posterior {
        TaskLabel::NonFactual
    } else {
        TaskLabel::Factual
    };
    (hallucination, factuality)
}

/// One row of prediction output.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityPrediction {
    pub doc_id: String,
    pub entity_index: usize,
    pub task: Task,
    pub label: TaskLabel,
    /// Confidence of the task's reference class (see
    /// [`Task::confidence_class`]).
    pub confidence: f64,
}

/// Runs both binary models over a feature table, producing deterministic
/// per-entity predictions for each task.
pub fn classify_dataset(
    model_h: &KnnModel,
    model_f: &KnnModel,
    table: &FeatureTable,
) -> Result<Vec<EntityPrediction>, ClassifierError> {
    if model_h.task != Task::Hallucination {
        return Err(ClassifierError::TaskMismatch {
            expected: Task::Hallucination,
            got: model_h.task,
        });
    }
    if model_f.task != Task::Factuality {
        return Err(ClassifierError::TaskMismatch {
            expected: Task::Factuality,
            got: model_f.task,
        });
    }
    let mut out = Vec::with_capacity(table.len() * 2);
    for row in &table.rows {
        for model in [model_h, model_f] {
            let prediction = model.predict(&row.features);
            out.push(EntityPrediction {
                doc_id: row.doc_id.clone(),
                entity_index: row.entity_index,
                task: model.task,
                label: prediction.label,
                confidence: prediction.confidence(model.task.confidence_class()),
            });
        }
    }
    Ok(out)
}

/// Writes predictions as CSV: doc_id, entity_index, task, label,
/// confidence (of the task's reference class).
pub fn save_predictions_csv(
    predictions: &[EntityPrediction],
    path: impl AsRef<std::path::Path>,
) -> Result<(), ClassifierError> {
    let to_err = |e: csv::Error| ClassifierError::BadCsv {
        line: 0,
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path.as_ref()).map_err(to_err)?;
    w.write_record(["doc_id", "entity_index", "task", "label", "confidence"])
        .map_err(to_err)?;
    for p in predictions {
        w.write_record([
            p.doc_id.as_str(),
            &p.entity_index.to_string(),
            p.task.as_str(),
            p.label.as_str(),
            &p.confidence.to_string(),
        ])
        .map_err(to_err)?;
    }
    w.flush().map_err(|e| ClassifierError::BadCsv {
        line: 0,
        message: e.to_string(),
    })?;
    Ok(())
}

pub fn load_predictions_csv(
    path: impl AsRef<std::path::Path>,
) -> Result<Vec<EntityPrediction>, ClassifierError> {
    let mut reader =
        csv::Reader::from_path(path.as_ref()).map_err(|e| ClassifierError::BadCsv {
            line: 0,
            message: e.to_string(),
        })?;
    let mut out = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2;
        let bad = |message: String| ClassifierError::BadCsv { line, message };
        let record = record.map_err(|e| bad(e.to_string()))?;
        let get = |i: usize| record.get(i).map(str::to_string).unwrap_or_default();
        let task = match get(2).as_str() {
            "hallucination" => Task::Hallucination,
            "factuality" => Task::Factuality,
            "three-class" => Task::ThreeClass,
            other => return Err(bad(format!("unknown task {other:?}"))),
        };
        out.push(EntityPrediction {
            doc_id: get(0),
            entity_index: get(1).parse().map_err(|_| bad("bad entity_index".into()))?,
            task,
            label: TaskLabel::parse(&get(3)).ok_or_else(|| bad("unknown label".into()))?,
            confidence: get(4).parse().map_err(|_| bad("bad confidence".into()))?,
        });
    }
    Ok(out)
}
