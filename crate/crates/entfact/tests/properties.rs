//! Cross-module property tests that need the brute-force oracles or the
//! synthetic generator.

mod common;

use common::{oracle_predict, projected_points, random_table};
use entfact::analysis::sigma;
use entfact::classifier::{loo_predictions, KnnModel, Task, TaskLabel};
use entfact::corpus::noise_split;
use entfact::features::{
    build_feature_table, posterior_prob, FeatureSubset, FeatureVector, PosteriorMode, ScoreSource,
};
use entfact::scorer::{ToyCmlm, ToyMlm};
use entfact::synth::{
    cmlm_pairs, corpus_pair, generate_world, scorer_corpus, SynthConfig, CITY_LANDMARKS,
    EXCLUSIVE_CITY_RANGE,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dropping the overlap coordinate may only change a prediction when the
/// neighbor set itself changes; whenever the reduced-space neighbors are
/// the same points, the vote must match.
#[test]
fn subset_changes_require_different_neighbor_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED);
    let mut unchanged = 0usize;
    for _ in 0..60 {
        let rows = rng.random_range(20..80);
        let k = [1usize, 5][rng.random_range(0..2)];
        let table = random_table(&mut rng, rows);
        let full = KnnModel::fit(&table, k, Task::Factuality, FeatureSubset::ALL).unwrap();
        let reduced =
            KnnModel::fit(&table, k, Task::Factuality, FeatureSubset::WITHOUT_OVERLAP).unwrap();
        let points_full = projected_points(&table, Task::Factuality, FeatureSubset::ALL);
        let points_reduced =
            projected_points(&table, Task::Factuality, FeatureSubset::WITHOUT_OVERLAP);
        for _ in 0..15 {
            let query = FeatureVector {
                prior: rng.random_range(0.0..=1.0),
                posterior: rng.random_range(0.0..=1.0),
                overlap: rng.random::<f64>() < 0.5,
            };
            // Oracle neighbor sets (indices) in both spaces.
            let neighbor_set = |points: &[(Vec<f64>, TaskLabel)], coords: &[f64]| {
                let mut scored: Vec<(f64, usize)> = points
                    .iter()
                    .enumerate()
                    .map(|(i, (p, _))| {
                        (
                            p.iter()
                                .zip(coords)
                                .map(|(a, b)| (a - b) * (a - b))
                                .sum::<f64>(),
                            i,
                        )
                    })
                    .collect();
                scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let mut set: Vec<usize> = scored.iter().take(k).map(|&(_, i)| i).collect();
                set.sort_unstable();
                set
            };
            let set_full = neighbor_set(&points_full, &query.coords(FeatureSubset::ALL));
            let set_reduced = neighbor_set(
                &points_reduced,
                &query.coords(FeatureSubset::WITHOUT_OVERLAP),
            );
            if set_full == set_reduced {
                let a = full.predict(&query);
                let b = reduced.predict(&query);
                assert_eq!(a.label, b.label, "same neighbors must vote identically");
                assert_eq!(a.confidences, b.confidences);
                unchanged += 1;
            }
            // Both spaces still agree with the oracle.
            let (want, _) = oracle_predict(
                &points_reduced,
                k,
                Task::Factuality,
                &query.coords(FeatureSubset::WITHOUT_OVERLAP),
            );
            assert_eq!(reduced.predict(&query).label, want);
        }
    }
    assert!(
        unchanged > 30,
        "property needs shared-neighbor cases to bite ({unchanged})"
    );
}

/// Entities absent from the source with low posterior must be called
/// non-factual at a higher rate than in-source entities, for every
/// k in {1, 5, 20}.
#[test]
fn monotone_separation_on_the_generator() {
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
    let median_posterior = {
        let mut v: Vec<f64> = table.rows.iter().map(|r| r.features.posterior).collect();
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    for k in [1usize, 5, 20] {
        let rows = loo_predictions(&table, k, Task::Factuality, FeatureSubset::ALL).unwrap();
        let mut absent_low = (0usize, 0usize);
        let mut present = (0usize, 0usize);
        for (row, (_, prediction)) in table.rows.iter().zip(&rows) {
            let non_factual = prediction.label == TaskLabel::NonFactual;
            if !row.features.overlap && row.features.posterior < median_posterior {
                absent_low.0 += non_factual as usize;
                absent_low.1 += 1;
            } else if row.features.overlap {
                present.0 += non_factual as usize;
                present.1 += 1;
            }
        }
        let rate = |(hits, total): (usize, usize)| hits as f64 / total.max(1) as f64;
        assert!(
            rate(absent_low) > rate(present),
            "k={k}: absent/low rate {:.3} not above in-source rate {:.3}",
            rate(absent_low),
            rate(present)
        );
    }
}

/// Entities that exist only in corpus A's references earn a larger mean
/// posterior log-ratio (A over B) than entities common to both corpora.
#[test]
fn sigma_separates_corpus_exclusive_entities() {
    let (a, b) = corpus_pair(500, 3);
    let cmlm_a = ToyCmlm::train(&cmlm_pairs(&a), 0.1, 0.7).unwrap();
    let cmlm_b = ToyCmlm::train(&cmlm_pairs(&b), 0.1, 0.7).unwrap();
    let exclusive: Vec<&str> = EXCLUSIVE_CITY_RANGE.map(|i| CITY_LANDMARKS[i].0).collect();

    let mut exclusive_sigmas = Vec::new();
    let mut shared_sigmas = Vec::new();
    for record in a.records.iter().take(200) {
        for mention in entfact::corpus::extract_entities(&record.summary.tokens) {
            let post = |scorer: &ToyCmlm| {
                posterior_prob(
                    scorer,
                    &record.document,
                    &record.summary,
                    &mention,
                    PosteriorMode::Cmlm,
                )
                .unwrap()
            };
            let s = sigma(post(&cmlm_a), post(&cmlm_b)).unwrap();
            if exclusive.contains(&mention.surface.as_str()) {
                exclusive_sigmas.push(s);
            } else {
                shared_sigmas.push(s);
            }
        }
    }
    assert!(!exclusive_sigmas.is_empty() && !shared_sigmas.is_empty());
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(
        mean(&exclusive_sigmas) > mean(&shared_sigmas),
        "exclusive {:.2} vs shared {:.2}",
        mean(&exclusive_sigmas),
        mean(&shared_sigmas)
    );
}
