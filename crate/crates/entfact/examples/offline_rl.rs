//! Factuality-aware offline policy-gradient training: label reference
//! tokens with classifier-driven rewards, train against the MLE policy
//! and compare ENFS and ROUGE-1 of greedy generations.
//!
//! ```sh
//! cargo run --example offline_rl
//! ```

use entfact::classifier::{KnnModel, Task};
use entfact::corpus::{noise_split, Document};
use entfact::features::{build_feature_table, FeatureSubset, PosteriorMode, ScoreSource};
use entfact::metrics::{novel_ngrams, rouge1};
use entfact::rltrain::{
    generate, greedy_enfs, label_rewards, mle_train, offline_train, FactualityLabeler, GenMode,
    MleConfig, OfflineConfig, RewardSpec, ToyPolicy, WeightSource,
};
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
    let knn = KnnModel::fit(&table, 20, Task::Factuality, FeatureSubset::ALL).unwrap();
    let labeler = FactualityLabeler::new(&knn, &mlm, &cmlm, PosteriorMode::Cmlm).unwrap();

    let init = ToyPolicy::from_dataset(&world.train).unwrap();
    let (mle_policy, _) = mle_train(
        &init,
        &world.train,
        &MleConfig {
            steps: 1200,
            lr: 0.5,
            seed: 11,
            batch_size: 32,
        },
    )
    .unwrap();

    let spec = RewardSpec {
        r_nfe: 2.0,
        gamma: 1.0,
    };
    let trajectories = label_rewards(&world.train, &labeler, &mle_policy, &spec).unwrap();
    let eval_docs: Vec<Document> = world
        .eval
        .records
        .iter()
        .map(|r| r.document.clone())
        .collect();
    let (rl_policy, log) = offline_train(
        &mle_policy,
        &trajectories,
        &eval_docs,
        &OfflineConfig {
            steps: 1000,
            lr: 1.0,
            seed: 13,
            batch_size: 32,
            tau: 0.01,
            weight_source: WeightSource::SlowCopy,
            eval_every: 250,
            eval_max_len: 30,
        },
    )
    .unwrap();
    for entry in &log {
        println!(
            "step {:>5}: mean return {:>7.3}  surrogate loss {:>7.3}  eval ENFS {:?}",
            entry.step, entry.mean_return, entry.loss_surrogate, entry.enfs_eval
        );
    }

    let mean_rouge = |policy: &ToyPolicy| {
        world
            .eval
            .records
            .iter()
            .map(|r| {
                let g = generate(policy, &r.document.tokens, 30, GenMode::Greedy);
                rouge1(&g, &r.summary.tokens).unwrap()
            })
            .sum::<f64>()
            / world.eval.len() as f64
    };
    // Novel-bigram percentage tracks abstractiveness: the reward should
    // suppress non-factual entities without making output extractive.
    let mean_novel = |policy: &ToyPolicy| {
        let values: Vec<f64> = world
            .eval
            .records
            .iter()
            .filter_map(|r| {
                let g = generate(policy, &r.document.tokens, 30, GenMode::Greedy);
                novel_ngrams(&r.document.tokens, &g, 2)
            })
            .collect();
        values.iter().sum::<f64>() / values.len().max(1) as f64
    };
    let enfs_mle = greedy_enfs(&mle_policy, &eval_docs, 30).unwrap().unwrap();
    let enfs_rl = greedy_enfs(&rl_policy, &eval_docs, 30).unwrap().unwrap();
    println!("\n{:>22}  {:>6}  {:>8}  {:>14}", "", "ENFS", "ROUGE-1", "novel bigrams");
    println!(
        "{:>22}  {:>6.2}  {:>8.2}  {:>14.2}",
        "MLE policy",
        enfs_mle,
        100.0 * mean_rouge(&mle_policy),
        mean_novel(&mle_policy)
    );
    println!(
        "{:>22}  {:>6.2}  {:>8.2}  {:>14.2}",
        "RL policy (r_nfe=2.0)",
        enfs_rl,
        100.0 * mean_rouge(&rl_policy),
        mean_novel(&rl_policy)
    );
    println!(
        "copy bonus: {:.2} -> {:.2}",
        mle_policy.copy_bonus(),
        rl_policy.copy_bonus()
    );
}
