//! Summary-level factuality scores (minimum factual-class confidence over
//! a summary's entities) correlated with simulated human judgments,
//! including a partial correlation controlling for summary length.
//!
//! ```sh
//! cargo run --example summary_correlation
//! ```

use entfact::classifier::{KnnModel, Task};
use entfact::corpus::noise_split;
use entfact::features::{build_feature_table, FeatureSubset, PosteriorMode, ScoreSource};
use entfact::metrics::{partial_pearson, pearson, summary_score};
use entfact::scorer::{ToyCmlm, ToyMlm};
use entfact::synth::{cmlm_pairs, generate_world, scorer_corpus, SynthConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let world = generate_world(&SynthConfig::default());
    let (clean, _) = noise_split(&world.train);
    let mlm = ToyMlm::train(&scorer_corpus(&clean), 0.1).unwrap();
    let cmlm = ToyCmlm::train(&cmlm_pairs(&clean), 0.1, 0.7).unwrap();
    let table = build_feature_table(
        &world.labeled,
        &ScoreSource::Scorers {
            mlm: &mlm,
            cmlm: &cmlm,
        },
        PosteriorMode::Cmlm,
    )
    .unwrap();
    let knn = KnnModel::fit(&table, 20, Task::Factuality, FeatureSubset::ALL).unwrap();

    // One summary score per record: the lowest factual confidence among
    // its entities.
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut ours = Vec::new();
    let mut human = Vec::new();
    let mut lengths = Vec::new();
    for record in &world.labeled.records {
        let confidences: Vec<f64> = table
            .rows
            .iter()
            .filter(|r| r.doc_id == record.document.id)
            .map(|r| {
                knn.predict(&r.features)
                    .confidence(entfact::classifier::TaskLabel::Factual)
            })
            .collect();
        let score = summary_score(&confidences);
        // Simulated judge: agrees with the gold factuality rate, plus noise.
        let gold_rate = {
            let labels: Vec<bool> = record
                .summary
                .entities
                .iter()
                .filter_map(|e| e.label.and_then(|l| l.is_factual()))
                .collect();
            if labels.is_empty() {
                1.0
            } else {
                labels.iter().filter(|f| **f).count() as f64 / labels.len() as f64
            }
        };
        ours.push(score);
        human.push((gold_rate + rng.random_range(-0.15..0.15)).clamp(0.0, 1.0));
        lengths.push(record.summary.tokens.len() as f64);
    }

    let r = pearson(&ours, &human).unwrap();
    let partial = partial_pearson(&ours, &human, &[lengths]).unwrap();
    println!("summaries: {}", ours.len());
    println!("pearson vs human judgments:          {r:.3}");
    println!("partial pearson (length covariate):  {partial:.3}");
}
