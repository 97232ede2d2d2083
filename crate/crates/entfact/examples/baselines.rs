//! Compare the KNN discriminator against the word-overlap and LM-based
//! baselines on the same labeled entities.
//!
//! ```sh
//! cargo run --example baselines
//! ```

use entfact::classifier::{baseline_lm, baseline_overlap_bit, loo_predictions, Task, TaskLabel};
use entfact::corpus::noise_split;
use entfact::features::{build_feature_table, FeatureSubset, PosteriorMode, ScoreSource};
use entfact::metrics::classification_report;
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

    for task in [Task::Hallucination, Task::Factuality] {
        let gold: Vec<TaskLabel> = table
            .rows
            .iter()
            .map(|r| task.project(r.label.unwrap()).unwrap())
            .collect();
        let pick = |pair: (TaskLabel, TaskLabel)| match task {
            Task::Hallucination => pair.0,
            _ => pair.1,
        };
        let overlap_preds: Vec<TaskLabel> = table
            .rows
            .iter()
            .map(|r| pick(baseline_overlap_bit(r.features.overlap)))
            .collect();
        let lm_preds: Vec<TaskLabel> = table
            .rows
            .iter()
            .map(|r| {
                pick(baseline_lm(
                    r.features.prior,
                    r.features.posterior,
                    r.features.overlap,
                ))
            })
            .collect();
        let knn_preds: Vec<TaskLabel> = loo_predictions(&table, 20, task, FeatureSubset::ALL)
            .unwrap()
            .into_iter()
            .map(|(_, p)| p.label)
            .collect();

        println!("task: {}", task.as_str());
        for (name, preds) in [
            ("word overlap", &overlap_preds),
            ("lm-based", &lm_preds),
            ("knn (loo)", &knn_preds),
        ] {
            let report = classification_report(preds, &gold, task.classes()).unwrap();
            println!(
                "  {name:>12}: accuracy {:.2}%  macro-F1 {:.2}%",
                100.0 * report.accuracy,
                100.0 * report.macro_f1
            );
        }
    }
}
