//! Train one summarizer per clean/noisy mixture ratio and track how the
//! factual-entity rate of its generations degrades as the training data
//! gets noisier — and how the word-overlap baseline underestimates it by
//! missing factual hallucinations.
//!
//! ```sh
//! cargo run --example noise_mixing
//! ```

use entfact::classifier::{KnnModel, Task};
use entfact::corpus::noise_split;
use entfact::features::{build_feature_table, FeatureSubset, PosteriorMode, ScoreSource};
use entfact::rltrain::{noise_experiment, FactualityLabeler, MleConfig, NoiseExpConfig};
use entfact::scorer::{ToyCmlm, ToyMlm};
use entfact::synth::{cmlm_pairs, generate_world, scorer_corpus, SynthConfig};

fn main() {
    let world = generate_world(&SynthConfig {
        train_pairs: 2400,
        noise_rate: 0.55,
        ..SynthConfig::default()
    });
    let (clean, noisy) = noise_split(&world.train);
    println!(
        "pools: {} clean, {} noisy references",
        clean.len(),
        noisy.len()
    );

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
    let labeler = FactualityLabeler::new(&knn, &mlm, &cmlm, PosteriorMode::Cmlm).unwrap();

    let config = NoiseExpConfig {
        size: 900,
        seed: 5,
        mle: MleConfig {
            steps: 1200,
            lr: 0.5,
            seed: 7,
            batch_size: 32,
        },
        gen_max_len: 30,
        sample_decode: true,
    };
    let rows = noise_experiment(
        &clean,
        &noisy,
        &[0.0, 0.25, 0.5, 0.75, 1.0],
        &labeler,
        &world.eval,
        &config,
    )
    .unwrap();

    println!(
        "{:>6}  {:>12}  {:>16}  {:>8}",
        "ratio", "factual% knn", "factual% overlap", "rouge1"
    );
    for row in &rows {
        println!(
            "{:>6.2}  {:>12.2}  {:>16.2}  {:>8.2}",
            row.ratio,
            row.knn_factual_pct,
            row.overlap_factual_pct,
            100.0 * row.rouge1
        );
    }
}
