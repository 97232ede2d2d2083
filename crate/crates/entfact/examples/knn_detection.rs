//! Fit the KNN discriminator and evaluate it leave-one-out on both binary
//! tasks and the three-class view, including the feature-ablation grid.
//!
//! ```sh
//! cargo run --example knn_detection
//! ```

use entfact::classifier::{ablation_grid, loo_eval, Task};
use entfact::corpus::noise_split;
use entfact::features::{build_feature_table, FeatureSubset, PosteriorMode, ScoreSource};
use entfact::scorer::{ToyCmlm, ToyMlm};
use entfact::synth::{cmlm_pairs, generate_world, scorer_corpus, SynthConfig};

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
    let k = 20;

    for task in [Task::Hallucination, Task::Factuality] {
        let report = loo_eval(&table, k, task, FeatureSubset::ALL).unwrap();
        println!(
            "{:>13} (k={k}): accuracy {:.2}%  macro-F1 {:.2}%",
            task.as_str(),
            100.0 * report.accuracy,
            100.0 * report.macro_f1
        );
    }

    println!("\nthree-class leave-one-out, per class:");
    let report = loo_eval(&table, k, Task::ThreeClass, FeatureSubset::ALL).unwrap();
    for (label, counts) in &report.per_class {
        println!(
            "{:>28}: precision {:.2}  recall {:.2}  F1 {:.2}",
            label.as_str(),
            100.0 * counts.precision(),
            100.0 * counts.recall(),
            100.0 * counts.f1()
        );
    }

    println!("\nfactuality ablations (macro-F1):");
    for (subset, report) in ablation_grid(&table, k, Task::Factuality).unwrap() {
        println!("{:>14}: {:.2}", subset.label(), 100.0 * report.macro_f1);
    }
}
