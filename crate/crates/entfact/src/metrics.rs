//! Evaluation computations: classification metrics, correlation with human
//! judgments, summary-level factuality scores, ENFS, novel n-grams,
//! simplified ROUGE, exact ROC/AUC and annotator-agreement statistics.
//!
//! ROUGE here is an F1 variant without stemming, synonym handling or
//! stopword removal; it is not a drop-in replacement for the standard
//! ROUGE toolkits.

use std::collections::{HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::corpus::{contains_span, extract_entities, Dataset};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("zero variance in {0}")]
    ZeroVariance(&'static str),
    #[error("covariate {index} has wrong length")]
    BadCovariate { index: usize },
    #[error("both classes required for ROC/AUC")]
    SingleClass,
    #[error("reference tokens are empty")]
    EmptyReference,
    #[error("agreement matrix row {row} sums to {got}, expected {want}")]
    BadAgreementRow { row: usize, got: u64, want: u64 },
    #[error("agreement matrix needs at least {0}")]
    DegenerateMatrix(&'static str),
    #[error("empty input")]
    EmptyInput,
}

/// Per-class confusion counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

impl ConfusionCounts {
    pub fn precision(&self) -> f64 {
        ratio(
            self.true_positives,
            self.true_positives + self.false_positives,
        )
    }

    pub fn recall(&self) -> f64 {
        ratio(
            self.true_positives,
            self.true_positives + self.false_negatives,
        )
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Accuracy, macro-F1 and per-class precision/recall/F1.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationReport<L> {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class: Vec<(L, ConfusionCounts)>,
}

/// Standard multi-class metrics over parallel prediction/gold slices.
///
/// `classes` fixes the class set: a class absent from the data still
/// contributes an F1 of zero to the macro mean.
pub fn classification_report<L: PartialEq + Clone>(
    predictions: &[L],
    gold: &[L],
    classes: &[L],
) -> Result<ClassificationReport<L>, MetricError> {
    if predictions.len() != gold.len() {
        return Err(MetricError::LengthMismatch(predictions.len(), gold.len()));
    }
    if predictions.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let correct = predictions.iter().zip(gold).filter(|(p, g)| p == g).count();
    let mut per_class = Vec::with_capacity(classes.len());
    for class in classes {
        let mut counts = ConfusionCounts::default();
        for (p, g) in predictions.iter().zip(gold) {
            match (p == class, g == class) {
                (true, true) => counts.true_positives += 1,
                (true, false) => counts.false_positives += 1,
                (false, true) => counts.false_negatives += 1,
                (false, false) => {}
            }
        }
        per_class.push((class.clone(), counts));
    }
    let macro_f1 =
        per_class.iter().map(|(_, c)| c.f1()).sum::<f64>() / per_class.len().max(1) as f64;
    Ok(ClassificationReport {
        accuracy: correct as f64 / predictions.len() as f64,
        macro_f1,
        per_class,
    })
}

pub fn accuracy<L: PartialEq>(predictions: &[L], gold: &[L]) -> Result<f64, MetricError> {
    if predictions.len() != gold.len() {
        return Err(MetricError::LengthMismatch(predictions.len(), gold.len()));
    }
    if predictions.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    Ok(
        predictions.iter().zip(gold).filter(|(p, g)| p == g).count() as f64
            / predictions.len() as f64,
    )
}

/// Summary-level factuality score: the lowest factual-class confidence
/// among the summary's entities; a summary with no entities scores 1.0.
pub fn summary_score(factual_confidences: &[f64]) -> f64 {
    factual_confidences.iter().copied().fold(1.0, f64::min)
}

/// Plain Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, MetricError> {
    if x.len() != y.len() {
        return Err(MetricError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(MetricError::TooFewSamples {
            need: 3,
            got: x.len(),
        });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in x.iter().zip(y) {
        cov += (a - mx) * (b - my);
        vx += (a - mx).powi(2);
        vy += (b - my).powi(2);
    }
    if vx <= 0.0 {
        return Err(MetricError::ZeroVariance("x"));
    }
    if vy <= 0.0 {
        return Err(MetricError::ZeroVariance("y"));
    }
    Ok(cov / (vx.sqrt() * vy.sqrt()))
}

/// Partial Pearson correlation: correlates the residuals of `x` and `y`
/// after least-squares projection onto the covariates plus an intercept.
///
/// Redundant covariate directions (e.g. a constant column, which the
/// intercept already spans) are dropped rather than rejected, so the
/// projection is always well defined; degenerate residuals surface as a
/// zero-variance error.
pub fn partial_pearson(x: &[f64], y: &[f64], covariates: &[Vec<f64>]) -> Result<f64, MetricError> {
    if x.len() != y.len() {
        return Err(MetricError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(MetricError::TooFewSamples {
            need: 3,
            got: x.len(),
        });
    }
    for (index, c) in covariates.iter().enumerate() {
        if c.len() != x.len() {
            return Err(MetricError::BadCovariate { index });
        }
    }
    let n = x.len();
    let mut columns: Vec<Vec<f64>> = vec![vec![1.0; n]];
    columns.extend(covariates.iter().cloned());
    let basis = orthonormal_basis(&columns);
    let rx = residual(x, &basis);
    let ry = residual(y, &basis);
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>();
    let (vx, vy) = (dot(&rx, &rx), dot(&ry, &ry));
    if vx <= 1e-24 {
        return Err(MetricError::ZeroVariance("x residuals"));
    }
    if vy <= 1e-24 {
        return Err(MetricError::ZeroVariance("y residuals"));
    }
    Ok(dot(&rx, &ry) / (vx.sqrt() * vy.sqrt()))
}

/// Modified Gram-Schmidt with column dropping.
fn orthonormal_basis(columns: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for col in columns {
        let norm0 = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut v = col.clone();
        for b in &basis {
            let proj: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi -= proj * bi;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-10 * norm0.max(1.0) {
            for vi in &mut v {
                *vi /= norm;
            }
            basis.push(v);
        }
    }
    basis
}

fn residual(y: &[f64], basis: &[Vec<f64>]) -> Vec<f64> {
    let mut r = y.to_vec();
    for b in basis {
        let proj: f64 = r.iter().zip(b).map(|(a, c)| a * c).sum();
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri -= proj * bi;
        }
    }
    r
}

/// Percentage of summary entities not found in their source document.
/// `None` when the dataset has no entities at all.
pub fn enfs(dataset: &Dataset) -> Option<f64> {
    let mut total = 0usize;
    let mut absent = 0usize;
    for record in &dataset.records {
        let extracted;
        let entities = if record.summary.entities.is_empty() {
            extracted = extract_entities(&record.summary.tokens);
            &extracted
        } else {
            &record.summary.entities
        };
        for mention in entities {
            total += 1;
            if !contains_span(
                &record.document.tokens,
                mention.covered(&record.summary.tokens),
            ) {
                absent += 1;
            }
        }
    }
    (total > 0).then(|| 100.0 * absent as f64 / total as f64)
}

/// Percentage of summary n-grams absent from the document. `None` when the
/// summary is shorter than `n` (or `n` is zero).
pub fn novel_ngrams(document: &[String], summary: &[String], n: usize) -> Option<f64> {
    if n == 0 || summary.len() < n {
        return None;
    }
    let doc_grams: HashSet<&[String]> = document.windows(n).collect();
    let total = summary.len() - n + 1;
    let novel = summary
        .windows(n)
        .filter(|w| !doc_grams.contains(w))
        .count();
    Some(100.0 * novel as f64 / total as f64)
}

/// Unigram-overlap F1 with clipped (multiset) counts.
pub fn rouge1(candidate: &[String], reference: &[String]) -> Result<f64, MetricError> {
    if reference.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    let mut counts: HashMap<&String, usize> = HashMap::new();
    for token in reference {
        *counts.entry(token).or_insert(0) += 1;
    }
    let mut overlap = 0usize;
    for token in candidate {
        if let Some(c) = counts.get_mut(token) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    Ok(2.0 * overlap as f64 / (candidate.len() + reference.len()) as f64)
}

/// Longest-common-subsequence F1.
pub fn rouge_l(candidate: &[String], reference: &[String]) -> Result<f64, MetricError> {
    if reference.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    if candidate.is_empty() {
        return Ok(0.0);
    }
    let mut prev = vec![0usize; reference.len() + 1];
    let mut row = vec![0usize; reference.len() + 1];
    for c in candidate {
        for (j, r) in reference.iter().enumerate() {
            row[j + 1] = if c == r {
                prev[j] + 1
            } else {
                prev[j + 1].max(row[j])
            };
        }
        std::mem::swap(&mut prev, &mut row);
    }
    let lcs = prev[reference.len()];
    Ok(2.0 * lcs as f64 / (candidate.len() + reference.len()) as f64)
}

/// Exact pairwise AUC: `P(score_pos > score_neg) + 0.5 * P(tie)`.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch(scores.len(), labels.len()));
    }
    let pos: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l)
        .map(|(s, _)| *s)
        .collect();
    let neg: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &l)| !l)
        .map(|(s, _)| *s)
        .collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(MetricError::SingleClass);
    }
    let mut wins = 0.0f64;
    for p in &pos {
        for n in &neg {
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    Ok(wins / (pos.len() as f64 * neg.len() as f64))
}

/// Items-by-categories vote counts with a fixed annotator count per item.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgreementMatrix {
    pub counts: Vec<Vec<u64>>,
    pub annotators: u64,
}

impl AgreementMatrix {
    pub fn new(counts: Vec<Vec<u64>>, annotators: u64) -> Result<Self, MetricError> {
        if annotators < 2 {
            return Err(MetricError::DegenerateMatrix("2 annotators"));
        }
        if counts.is_empty() {
            return Err(MetricError::DegenerateMatrix("1 item"));
        }
        for (row, item) in counts.iter().enumerate() {
            let got: u64 = item.iter().sum();
            if got != annotators {
                return Err(MetricError::BadAgreementRow {
                    row,
                    got,
                    want: annotators,
                });
            }
        }
        Ok(Self { counts, annotators })
    }
}

/// Fleiss' kappa. Unanimous agreement on every item gives 1 by convention
/// even when chance agreement is also perfect.
pub fn fleiss_kappa(matrix: &AgreementMatrix) -> f64 {
    let n = matrix.annotators as f64;
    let items = matrix.counts.len() as f64;
    let categories = matrix.counts.iter().map(Vec::len).max().unwrap_or(0);
    let p_bar = matrix
        .counts
        .iter()
        .map(|row| {
            let sq: f64 = row.iter().map(|&c| (c * c) as f64).sum();
            (sq - n) / (n * (n - 1.0))
        })
        .sum::<f64>()
        / items;
    let mut p_e = 0.0;
    for j in 0..categories {
        let share = matrix
            .counts
            .iter()
            .map(|row| row.get(j).copied().unwrap_or(0) as f64)
            .sum::<f64>()
            / (items * n);
        p_e += share * share;
    }
    if (1.0 - p_e).abs() < 1e-12 {
        return if p_bar >= 1.0 - 1e-12 { 1.0 } else { f64::NAN };
    }
    (p_bar - p_e) / (1.0 - p_e)
}

/// Mean fraction of annotators agreeing with each item's majority class.
pub fn majority_mu(matrix: &AgreementMatrix) -> f64 {
    let n = matrix.annotators as f64;
    matrix
        .counts
        .iter()
        .map(|row| row.iter().max().copied().unwrap_or(0) as f64 / n)
        .sum::<f64>()
        / matrix.counts.len() as f64
}

/// Flat key/value metrics report with stable ordering.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValueReport {
    pub entries: Vec<(String, String)>,
}

impl KeyValueReport {
    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn save_csv(&self, path: impl AsRef<std::path::Path>) -> std::io::Result<()> {
        let mut out = String::from("key,value\n");
        for (k, v) in &self.entries {
            out.push_str(&format!("{k},{v}\n"));
        }
        std::fs::write(path, out)
    }
}

impl fmt::Display for KeyValueReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.entries.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        for (k, v) in &self.entries {
            writeln!(f, "{k:width$}  {v}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn perfect_predictions() {
        let gold = ["a", "b", "a"];
        let report = classification_report(&gold, &gold, &["a", "b"]).unwrap();
        assert_eq!(report.accuracy, 1.0);
        assert_eq!(report.macro_f1, 1.0);
    }

    #[test]
    fn macro_f1_hand_fixture() {
        // Class A: TP 1, FP 1, FN 0; class B: TP 1, FP 0, FN 1.
        let gold = ["A", "B", "B"];
        let pred = ["A", "A", "B"];
        let report = classification_report(&pred, &gold, &["A", "B"]).unwrap();
        let a = &report.per_class[0].1;
        assert_eq!(
            (a.true_positives, a.false_positives, a.false_negatives),
            (1, 1, 0)
        );
        let b = &report.per_class[1].1;
        assert_eq!(
            (b.true_positives, b.false_positives, b.false_negatives),
            (1, 0, 1)
        );
        assert_relative_eq!(report.macro_f1, 2.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(report.accuracy, 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn absent_class_scores_zero_but_counts() {
        let gold = ["a", "a"];
        let pred = ["a", "a"];
        let report = classification_report(&pred, &gold, &["a", "ghost"]).unwrap();
        assert_relative_eq!(report.macro_f1, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(matches!(
            classification_report(&["a"], &["a", "b"], &["a", "b"]),
            Err(MetricError::LengthMismatch(1, 2))
        ));
    }

    #[test]
    fn summary_score_minimum_and_empty() {
        assert_eq!(summary_score(&[0.9, 0.3]), 0.3);
        assert_eq!(summary_score(&[]), 1.0);
        assert_eq!(summary_score(&[0.55]), 0.55);
    }

    #[test]
    fn pearson_exact_line() {
        let x = [1.0, 2.0, 3.0];
        let y = [2.0, 4.0, 6.0];
        assert_relative_eq!(pearson(&x, &y).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn pearson_preconditions() {
        assert!(matches!(
            pearson(&[1.0, 2.0], &[1.0, 2.0]),
            Err(MetricError::TooFewSamples { .. })
        ));
        assert!(matches!(
            pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(MetricError::ZeroVariance("x"))
        ));
    }

    #[test]
    fn partial_with_constant_covariate_equals_plain() {
        let x = [1.0, 2.0, 4.0, 3.0, 5.0];
        let y = [2.0, 1.0, 5.0, 4.0, 4.5];
        let constant = vec![7.0; 5];
        let plain = pearson(&x, &y).unwrap();
        let partial = partial_pearson(&x, &y, &[constant]).unwrap();
        assert_relative_eq!(partial, plain, epsilon = 1e-10);
    }

    #[test]
    fn partial_binary_covariate_hand_fixture() {
        // Residualizing on the group indicator makes the within-group
        // patterns align perfectly: rx = [-.5,.5,-.5,.5], ry = [-1,1,-1,1].
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [1.0, 3.0, 2.0, 4.0];
        let z = vec![0.0, 0.0, 1.0, 1.0];
        assert_relative_eq!(pearson(&x, &y).unwrap(), 0.8, epsilon = 1e-12);
        assert_relative_eq!(partial_pearson(&x, &y, &[z]).unwrap(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn partial_covariate_explaining_x_is_zero_variance() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [4.0, 2.0, 1.0, 3.0];
        let err = partial_pearson(&x, &y, &[x.to_vec()]);
        assert!(matches!(err, Err(MetricError::ZeroVariance(_))));
    }

    #[test]
    fn enfs_counts_absent_entities() {
        use crate::corpus::{DatasetRecord, Document, SummaryKind, SummaryRecord};
        let make = |id: &str, doc: &str, summary: &str| {
            DatasetRecord::new(
                Document::new(id, toks(doc)).unwrap(),
                SummaryRecord::new(id, toks(summary), SummaryKind::Generated, vec![]).unwrap(),
            )
        };
        let ds = Dataset::new(vec![make(
            "a",
            "talks in Cardiff",
            "Cardiff hosted Swansea",
        )])
        .unwrap();
        assert_relative_eq!(enfs(&ds).unwrap(), 50.0, epsilon = 1e-12);
        let ds = Dataset::new(vec![make("a", "talks in Cardiff", "talks in Cardiff")]).unwrap();
        assert_relative_eq!(enfs(&ds).unwrap(), 0.0, epsilon = 1e-12);
        let ds = Dataset::new(vec![make("a", "talks here", "no entities at all")]).unwrap();
        assert!(enfs(&ds).is_none());
    }

    #[test]
    fn novel_ngram_percentages() {
        let doc = toks("a b x");
        assert_relative_eq!(novel_ngrams(&doc, &doc, 1).unwrap(), 0.0, epsilon = 1e-12);
        // Summary bigrams {a b, b c}; document has only "a b".
        assert_relative_eq!(
            novel_ngrams(&doc, &toks("a b c"), 2).unwrap(),
            50.0,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            novel_ngrams(&toks("p q"), &toks("a b c"), 1).unwrap(),
            100.0,
            epsilon = 1e-12
        );
        assert!(novel_ngrams(&doc, &toks("a b"), 3).is_none());
    }

    #[test]
    fn rouge_fixtures() {
        let c = toks("a b c");
        let r = toks("a c d");
        assert_relative_eq!(rouge1(&c, &r).unwrap(), 2.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(rouge_l(&c, &r).unwrap(), 2.0 / 3.0, epsilon = 1e-12); // LCS "a c"
        assert_relative_eq!(rouge1(&c, &c).unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(rouge_l(&c, &c).unwrap(), 1.0, epsilon = 1e-12);
        assert!(matches!(rouge1(&c, &[]), Err(MetricError::EmptyReference)));
    }

    #[test]
    fn auc_fixtures() {
        assert_relative_eq!(
            roc_auc(&[0.9, 0.8, 0.1], &[true, true, false]).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            roc_auc(&[0.5, 0.5], &[true, false]).unwrap(),
            0.5,
            epsilon = 1e-12
        );
        // Brute-force over the 4 pairs: 3 wins, 1 loss.
        assert_relative_eq!(
            roc_auc(&[0.8, 0.4, 0.6, 0.2], &[true, true, false, false]).unwrap(),
            0.75,
            epsilon = 1e-12
        );
        assert!(matches!(
            roc_auc(&[0.5], &[true]),
            Err(MetricError::SingleClass)
        ));
    }

    #[test]
    fn fleiss_unanimity_and_hand_value() {
        let unanimous = AgreementMatrix::new(vec![vec![3, 0], vec![0, 3], vec![3, 0]], 3).unwrap();
        assert_eq!(fleiss_kappa(&unanimous), 1.0);
        assert_eq!(majority_mu(&unanimous), 1.0);
        // Five items, three annotators, two categories; by hand:
        // P_bar = 11/15, P_e = 13/25, kappa = 4/9.
        let m = AgreementMatrix::new(
            vec![vec![3, 0], vec![2, 1], vec![1, 2], vec![0, 3], vec![3, 0]],
            3,
        )
        .unwrap();
        assert_relative_eq!(fleiss_kappa(&m), 4.0 / 9.0, epsilon = 1e-9);
        assert_relative_eq!(majority_mu(&m), 13.0 / 15.0, epsilon = 1e-12);
        // Degenerate but unanimous: same category everywhere.
        let same = AgreementMatrix::new(vec![vec![3, 0], vec![3, 0]], 3).unwrap();
        assert_eq!(fleiss_kappa(&same), 1.0);
    }

    #[test]
    fn fleiss_random_votes_near_zero() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let counts: Vec<Vec<u64>> = (0..4000)
            .map(|_| {
                let mut row = vec![0u64; 3];
                for _ in 0..4 {
                    row[rng.random_range(0..3)] += 1;
                }
                row
            })
            .collect();
        let m = AgreementMatrix::new(counts, 4).unwrap();
        assert!(fleiss_kappa(&m).abs() < 0.1);
    }

    #[test]
    fn agreement_matrix_validation() {
        assert!(matches!(
            AgreementMatrix::new(vec![vec![2, 2]], 3),
            Err(MetricError::BadAgreementRow {
                row: 0,
                got: 4,
                want: 3
            })
        ));
        assert!(AgreementMatrix::new(vec![], 3).is_err());
        assert!(AgreementMatrix::new(vec![vec![1]], 1).is_err());
    }

    #[test]
    fn report_rendering() {
        let mut report = KeyValueReport::default();
        report.push("accuracy", 0.5);
        report.push("macro_f1", 0.25);
        let text = report.to_string();
        assert!(text.contains("accuracy"));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.csv");
        report.save_csv(&path).unwrap();
        let content = std::fs::read_to_string(path).unwrap();
        assert!(content.starts_with("key,value\n"));
    }

    proptest! {
        #[test]
        fn macro_f1_invariant_to_relabeling(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(4..40);
            let gold: Vec<u8> = (0..n).map(|_| rng.random_range(0..3)).collect();
            let pred: Vec<u8> = (0..n).map(|_| rng.random_range(0..3)).collect();
            let base = classification_report(&pred, &gold, &[0, 1, 2]).unwrap();
            // Swap labels 0 and 2 everywhere.
            let relabel = |v: &u8| match v { 0 => 2u8, 2 => 0u8, x => *x };
            let gold2: Vec<u8> = gold.iter().map(relabel).collect();
            let pred2: Vec<u8> = pred.iter().map(relabel).collect();
            let swapped = classification_report(&pred2, &gold2, &[0, 1, 2]).unwrap();
            prop_assert!((base.macro_f1 - swapped.macro_f1).abs() < 1e-12);
            prop_assert!((base.accuracy - swapped.accuracy).abs() < 1e-12);
        }

        #[test]
        fn summary_score_monotone(confs in proptest::collection::vec(0.0f64..=1.0, 1..8), idx in 0usize..8, delta in 0.0f64..0.5) {
            let idx = idx % confs.len();
            let base = summary_score(&confs);
            let mut lowered = confs.clone();
            lowered[idx] = (lowered[idx] - delta).max(0.0);
            prop_assert!(summary_score(&lowered) <= base + 1e-15);
        }

        #[test]
        fn pearson_sign_of_linear_maps(a in -5.0f64..5.0, b in -10.0f64..10.0) {
            prop_assume!(a.abs() > 1e-6);
            let x = [0.0, 1.0, 2.5, 4.0, 7.0];
            let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let r = pearson(&x, &y).unwrap();
            prop_assert!((r - a.signum()).abs() < 1e-9);
        }

        #[test]
        fn auc_invariant_under_monotone_transform(seed in 0u64..500) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(4..30);
            let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            let mut labels: Vec<bool> = (0..n).map(|_| rng.random()).collect();
            labels[0] = true;
            labels[1] = false;
            let base = roc_auc(&scores, &labels).unwrap();
            let transformed: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() + 1.0).collect();
            let same = roc_auc(&transformed, &labels).unwrap();
            prop_assert!((base - same).abs() < 1e-12);
        }

        #[test]
        fn rouge1_symmetric_in_argument_exchange(
            c in proptest::collection::vec(0u8..4, 1..12),
            r in proptest::collection::vec(0u8..4, 1..12),
        ) {
            let cs: Vec<String> = c.iter().map(|v| v.to_string()).collect();
            let rs: Vec<String> = r.iter().map(|v| v.to_string()).collect();
            let ab = rouge1(&cs, &rs).unwrap();
            let ba = rouge1(&rs, &cs).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);
        }
    }
}
