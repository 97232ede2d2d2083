//! Where did an entity's knowledge come from? Train two conditional
//! models on different corpora, compute the posterior log-ratio sigma for
//! each entity, and cross-check against TF-IDF occurrence counts in each
//! corpus's nearest documents.
//!
//! ```sh
//! cargo run --example knowledge_source
//! ```

use entfact::analysis::{
    count_occurrences, mean_occurrences, sigma, SigmaBucket, SigmaBuckets, SigmaRecord, TfidfIndex,
};
use entfact::corpus::Document;
use entfact::features::{posterior_prob, PosteriorMode};
use entfact::scorer::ToyCmlm;
use entfact::synth::{cmlm_pairs, corpus_pair, CITY_LANDMARKS, EXCLUSIVE_CITY_RANGE};

fn main() {
    // Corpus A mentions every city; corpus B never sees the exclusive ones.
    let (a, b) = corpus_pair(700, 21);
    let cmlm_a = ToyCmlm::train(&cmlm_pairs(&a), 0.1, 0.7).unwrap();
    let cmlm_b = ToyCmlm::train(&cmlm_pairs(&b), 0.1, 0.7).unwrap();
    let docs_a: Vec<Document> = a.records.iter().map(|r| r.document.clone()).collect();
    let docs_b: Vec<Document> = b.records.iter().map(|r| r.document.clone()).collect();
    let index_a = TfidfIndex::build(&docs_a).unwrap();
    let index_b = TfidfIndex::build(&docs_b).unwrap();
    let buckets = SigmaBuckets::default();

    // Score each entity of a slice of corpus A's own references.
    let mut records = Vec::new();
    for record in a.records.iter().take(120) {
        let retrieved_a: Vec<&Document> = index_a
            .retrieve_topk(&record.document, 10)
            .unwrap()
            .iter()
            .filter_map(|(id, _)| docs_a.iter().find(|d| &d.id == id))
            .collect();
        let retrieved_b: Vec<&Document> = index_b
            .retrieve_topk(&record.document, 10)
            .unwrap()
            .iter()
            .filter_map(|(id, _)| docs_b.iter().find(|d| &d.id == id))
            .collect();
        for (entity_index, mention) in entfact::corpus::extract_entities(&record.summary.tokens)
            .iter()
            .enumerate()
        {
            let pa = posterior_prob(
                &cmlm_a,
                &record.document,
                &record.summary,
                mention,
                PosteriorMode::Cmlm,
            )
            .unwrap();
            let pb = posterior_prob(
                &cmlm_b,
                &record.document,
                &record.summary,
                mention,
                PosteriorMode::Cmlm,
            )
            .unwrap();
            let s = sigma(pa, pb).unwrap();
            records.push(SigmaRecord {
                doc_id: record.document.id.clone(),
                entity_index,
                surface: mention.surface.clone(),
                log_posterior_a: pa.ln(),
                log_posterior_b: pb.ln(),
                sigma: s,
                bucket: buckets.bucket(s),
                count_a: count_occurrences(&mention.surface, &retrieved_a),
                count_b: count_occurrences(&mention.surface, &retrieved_b),
            });
        }
    }

    let exclusive: Vec<&str> = EXCLUSIVE_CITY_RANGE.map(|i| CITY_LANDMARKS[i].0).collect();
    let mean_sigma = |only_exclusive: bool| {
        let vals: Vec<f64> = records
            .iter()
            .filter(|r| exclusive.contains(&r.surface.as_str()) == only_exclusive)
            .map(|r| r.sigma)
            .collect();
        vals.iter().sum::<f64>() / vals.len().max(1) as f64
    };
    println!("entities scored: {}", records.len());
    println!(
        "mean sigma, corpus-A-exclusive entities: {:+.2}",
        mean_sigma(true)
    );
    println!(
        "mean sigma, shared entities:             {:+.2}",
        mean_sigma(false)
    );
    for (bucket, name) in [
        (SigmaBucket::High, "sigma >= 5"),
        (SigmaBucket::Low, "sigma <= 0"),
    ] {
        if let (Some(ma), Some(mb)) = mean_occurrences(&records, bucket) {
            println!("{name}: mean occurrences in retrieved docs  A {ma:.2}  B {mb:.2}");
        }
    }
}
