//! Train the toy scorers on a synthetic reference corpus and compute the
//! (prior, posterior, overlap) feature triple for every labeled entity.
//!
//! ```sh
//! cargo run --example score_entities
//! ```

use entfact::corpus::noise_split;
use entfact::features::{build_feature_table, PosteriorMode, ScoreSource};
use entfact::scorer::{ToyCmlm, ToyMlm};
use entfact::synth::{cmlm_pairs, generate_world, scorer_corpus, SynthConfig};

fn main() {
    let world = generate_world(&SynthConfig {
        train_pairs: 600,
        eval_pairs: 20,
        labeled_records: 60,
        ..SynthConfig::default()
    });
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

    println!(
        "{:>28}  {:>9}  {:>9}  overlap",
        "gold label", "prior", "posterior"
    );
    for row in table.rows.iter().take(20) {
        println!(
            "{:>28}  {:>9.5}  {:>9.5}  {}",
            row.label.unwrap().as_str(),
            row.features.prior,
            row.features.posterior,
            u8::from(row.features.overlap)
        );
    }
    println!("... {} rows total", table.len());
}
