#![allow(dead_code)]

//! Shared brute-force oracles, independent of the library's
//! implementation paths: the KNN oracle sorts every distance with a
//! stable full sort, and the step-probability oracle recounts the corpus
//! from scratch on every call.

use entfact::classifier::{Task, TaskLabel};
use entfact::corpus::{EntityClass, MASK_TOKEN};
use entfact::features::{FeatureRow, FeatureSubset, FeatureTable, FeatureVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const UNK: &str = "<unk>";

/// Full-sort KNN oracle: squared Euclidean distance, ties by training
/// index, majority vote with the unsafe-first tie rule.
pub fn oracle_predict(
    points: &[(Vec<f64>, TaskLabel)],
    k: usize,
    task: Task,
    query: &[f64],
) -> (TaskLabel, Vec<(TaskLabel, f64)>) {
    let mut scored: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, (coords, _))| {
            let d: f64 = coords
                .iter()
                .zip(query)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            (d, i)
        })
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let classes = task.classes();
    let mut counts = vec![0usize; classes.len()];
    for &(_, i) in scored.iter().take(k) {
        let label = points[i].1;
        counts[classes.iter().position(|c| *c == label).unwrap()] += 1;
    }
    let best = *counts.iter().max().unwrap();
    let label = classes
        .iter()
        .zip(&counts)
        .find(|(_, c)| **c == best)
        .map(|(l, _)| *l)
        .unwrap();
    let confidences = classes
        .iter()
        .zip(&counts)
        .map(|(l, c)| (*l, *c as f64 / k as f64))
        .collect();
    (label, confidences)
}

/// Leave-one-out variant of [`oracle_predict`]: point `i` is excluded
/// while original indices keep breaking ties.
pub fn oracle_loo(
    points: &[(Vec<f64>, TaskLabel)],
    k: usize,
    task: Task,
) -> Vec<(TaskLabel, Vec<(TaskLabel, f64)>)> {
    (0..points.len())
        .map(|i| {
            let mut scored: Vec<(f64, usize)> = points
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(j, (coords, _))| {
                    let d: f64 = coords
                        .iter()
                        .zip(&points[i].0)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    (d, j)
                })
                .collect();
            scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let classes = task.classes();
            let mut counts = vec![0usize; classes.len()];
            for &(_, j) in scored.iter().take(k) {
                let label = points[j].1;
                counts[classes.iter().position(|c| *c == label).unwrap()] += 1;
            }
            let best = *counts.iter().max().unwrap();
            let label = classes
                .iter()
                .zip(&counts)
                .find(|(_, c)| **c == best)
                .map(|(l, _)| *l)
                .unwrap();
            let confidences = classes
                .iter()
                .zip(&counts)
                .map(|(l, c)| (*l, *c as f64 / k as f64))
                .collect();
            (label, confidences)
        })
        .collect()
}

/// Random labeled feature table over the three non-intrinsic classes.
pub fn random_table(rng: &mut ChaCha8Rng, rows: usize) -> FeatureTable {
    let classes = [
        EntityClass::NonHallucinated,
        EntityClass::FactualHallucination,
        EntityClass::NonFactualHallucination,
    ];
    FeatureTable {
        rows: (0..rows)
            .map(|i| FeatureRow {
                doc_id: format!("d{i:04}"),
                entity_index: 0,
                features: FeatureVector {
                    prior: rng.random_range(0.0..=1.0f64).max(1e-12),
                    posterior: rng.random_range(0.0..=1.0f64).max(1e-12),
                    overlap: rng.random::<f64>() < 0.5,
                },
                label: Some(classes[rng.random_range(0..classes.len())]),
            })
            .collect(),
    }
}

/// Task-projected coordinate/label pairs, mirroring what `KnnModel::fit`
/// stores (same subset, same ordering).
pub fn projected_points(
    table: &FeatureTable,
    task: Task,
    subset: FeatureSubset,
) -> Vec<(Vec<f64>, TaskLabel)> {
    table
        .rows
        .iter()
        .filter_map(|row| {
            task.project(row.label.expect("labeled"))
                .map(|label| (row.features.coords(subset), label))
        })
        .collect()
}

/// From-scratch recount of the smoothed trigram/bigram/unigram chain.
/// The vocabulary is the corpus plus `extra_vocab` types plus the two
/// sentinels; unknown tokens collapse onto the sentinel.
pub fn naive_mlm_step(
    corpus: &[Vec<String>],
    extra_vocab: &[Vec<String>],
    alpha: f64,
    prev: Option<&str>,
    token: &str,
    next: Option<&str>,
) -> f64 {
    let mut vocab: Vec<&str> = Vec::new();
    for seq in corpus.iter().chain(extra_vocab) {
        for t in seq {
            if !vocab.contains(&t.as_str()) {
                vocab.push(t);
            }
        }
    }
    for sentinel in [MASK_TOKEN, UNK] {
        if !vocab.contains(&sentinel) {
            vocab.push(sentinel);
        }
    }
    let map = |t: &str| -> String {
        if vocab.contains(&t) {
            t.to_string()
        } else {
            UNK.to_string()
        }
    };
    let w = map(token);
    let prev = prev.map(map);
    let next = next.map(map);

    let mut total_tokens = 0u64;
    let mut c1 = 0u64;
    let mut c2 = 0u64;
    let mut c2_ctx = 0u64;
    let mut c3 = 0u64;
    let mut c3_ctx = 0u64;
    for seq in corpus {
        for (i, raw) in seq.iter().enumerate() {
            let tok = map(raw);
            let tok_prev = if i > 0 { Some(map(&seq[i - 1])) } else { None };
            let tok_next = seq.get(i + 1).map(|t| map(t));
            total_tokens += 1;
            if tok == w {
                c1 += 1;
            }
            if tok_prev == prev {
                c2_ctx += 1;
                if tok == w {
                    c2 += 1;
                }
            }
            if let (Some(n), Some(q)) = (&tok_next, &next) {
                if tok_prev == prev && n == q {
                    c3_ctx += 1;
                    if tok == w {
                        c3 += 1;
                    }
                }
            }
        }
    }
    let p1 = (c1 as f64 + alpha) / (total_tokens as f64 + alpha * vocab.len() as f64);
    let p2 = (c2 as f64 + alpha * p1) / (c2_ctx as f64 + alpha);
    match next {
        None => p2,
        Some(_) => (c3 as f64 + alpha * p2) / (c3_ctx as f64 + alpha),
    }
}

/// Copy-mixture step matching the conditional toy model, on top of
/// [`naive_mlm_step`] counts.
#[allow(clippy::too_many_arguments)]
pub fn naive_cmlm_step(
    targets: &[Vec<String>],
    sources: &[Vec<String>],
    alpha: f64,
    lambda: f64,
    prev: Option<&str>,
    token: &str,
    next: Option<&str>,
    query_source: &[String],
) -> f64 {
    let mut vocab: Vec<&str> = Vec::new();
    for seq in targets.iter().chain(sources) {
        for t in seq {
            if !vocab.contains(&t.as_str()) {
                vocab.push(t);
            }
        }
    }
    let known = |t: &str| vocab.contains(&t) || t == MASK_TOKEN || t == UNK;
    let copy = if query_source.is_empty() {
        0.0
    } else if known(token) && token != UNK {
        query_source.iter().filter(|s| s.as_str() == token).count() as f64
            / query_source.len() as f64
    } else {
        // Unknown targets share the source's unknown mass.
        query_source.iter().filter(|s| !known(s)).count() as f64 / query_source.len() as f64
    };
    let mlm = naive_mlm_step(targets, sources, alpha, prev, token, next);
    (lambda * copy + (1.0 - lambda) * mlm).max(1e-300)
}

/// Minimal scorer server for exercising the remote client: answers every
/// `/v1/score` request with `-0.25` per span token.
#[allow(dead_code)]
pub fn spawn_score_server() -> String {
    use std::io::{BufRead, BufReader, Read, Write};
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { break };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut content_length = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).is_err() || line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    content_length = v.trim().parse().unwrap_or(0);
                }
            }
            let mut body = vec![0u8; content_length];
            let _ = reader.read_exact(&mut body);
            let length = serde_json::from_slice::<serde_json::Value>(&body)
                .ok()
                .and_then(|v| v["span"]["length"].as_u64())
                .unwrap_or(1) as usize;
            let logprobs: Vec<f64> = vec![-0.25; length];
            let json = serde_json::json!({ "step_logprobs": logprobs }).to_string();
            let response = format!(
                "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{}",
                json.len(),
                json
            );
            let _ = stream.write_all(response.as_bytes());
        }
    });
    format!("http://{addr}")
}

/// Span log-probability under the left-to-right fill convention, built on
/// the naive step functions.
pub fn naive_span_log_prob(
    step: impl Fn(Option<&str>, &str, Option<&str>) -> f64,
    target: &[String],
    start: usize,
    length: usize,
    clm: bool,
) -> f64 {
    let right = if clm || start + length >= target.len() {
        None
    } else {
        Some(target[start + length].as_str())
    };
    let mut total = 0.0;
    for t in 0..length {
        let prev = if t == 0 {
            if start > 0 {
                Some(target[start - 1].as_str())
            } else {
                None
            }
        } else {
            Some(target[start + t - 1].as_str())
        };
        total += step(prev, &target[start + t], right).ln();
    }
    total
}
