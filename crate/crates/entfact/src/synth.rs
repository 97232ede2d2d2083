//! Seeded synthetic corpus generator for the examples, the experiment
//! drivers and the test suite.
//!
//! The world is a set of cities, each tied to one lowercase landmark noun
//! ("Edinburgh" goes with "zoo"), plus persons, amounts and dates. Every
//! record follows one template family, so the scorers see stereotyped
//! contexts:
//!
//! - document: council text mentioning the person, amount, city+landmark
//!   and a date;
//! - reference: one sentence re-stating them.
//!
//! Noise injection swaps the reference's city slot for a different city.
//! A *factual* swap keeps the city's true landmark (the world still
//! agrees with the claim, only the source does not support it); a
//! *non-factual* swap attaches a wrong landmark. Landmarks are lowercase
//! on purpose: the tagger then spans the city token alone, so the
//! landmark is right context. That makes wrong pairings visible to a
//! bidirectional scorer but invisible to a left-context-only one.
//!
//! City draws follow a head/tail split for training documents (a few
//! cities dominate) and are uniform for held-out ones, which gives an
//! MLE-trained policy a frequency incentive to hallucinate popular cities
//! on documents about rare ones.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{
    extract_entities, Dataset, DatasetRecord, Document, EntityClass, SummaryKind, SummaryRecord,
};

/// (city, landmark) world knowledge; landmarks are unique per city.
pub const CITY_LANDMARKS: [(&str, &str); 12] = [
    ("Cardiff", "bay"),
    ("Edinburgh", "zoo"),
    ("Swansea", "marina"),
    ("Glasgow", "subway"),
    ("Bristol", "harbour"),
    ("Leeds", "arena"),
    ("York", "minster"),
    ("Derby", "museum"),
    ("Oxford", "castle"),
    ("Durham", "cathedral"),
    ("Brighton", "pier"),
    ("Dundee", "stadium"),
];

const PERSONS: [(&str, &str); 12] = [
    ("Anna", "Reid"),
    ("John", "Law"),
    ("Mary", "Cole"),
    ("Peter", "Voss"),
    ("Sara", "Nolan"),
    ("Tom", "Barker"),
    ("Lucy", "Frame"),
    ("Omar", "Khan"),
    ("Nina", "Patel"),
    ("Carl", "Webb"),
    ("Ella", "Moore"),
    ("Hugo", "Flint"),
];

const AMOUNTS: [&str; 12] = [
    "450", "1,200", "3,000", "78", "24", "900", "65", "5,500", "130", "17", "2,400", "88",
];

const DAYS: [&str; 4] = ["3", "12", "21", "28"];

const MONTHS: [&str; 6] = ["January", "March", "May", "July", "September", "November"];

/// Capitalized names that never occur in any training corpus; scorers map
/// them onto the unknown sentinel.
pub const GARBAGE_NAMES: [&str; 4] = ["Vexbridge", "Quorrin", "Zabelton", "Mirefield"];

/// Cities present only in corpus A of [`corpus_pair`].
pub const EXCLUSIVE_CITY_RANGE: std::ops::Range<usize> = 9..12;

#[derive(Debug, Clone, Copy)]
pub struct SynthConfig {
    pub train_pairs: usize,
    pub eval_pairs: usize,
    pub labeled_records: usize,
    /// Fraction of training references carrying an out-of-source city.
    pub noise_rate: f64,
    /// Of the noisy references, the share whose injected pair is
    /// world-consistent (a factual hallucination).
    pub factual_noise_share: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            train_pairs: 2000,
            eval_pairs: 150,
            labeled_records: 300,
            noise_rate: 0.3,
            factual_noise_share: 0.5,
            seed: 17,
        }
    }
}

/// Generated corpora: noisy training pairs, clean held-out pairs, and a
/// gold-labeled generated-summary dataset.
pub struct SynthCorpus {
    pub train: Dataset,
    pub eval: Dataset,
    pub labeled: Dataset,
}

struct Slots {
    city: usize,
    person: usize,
    amount: usize,
    day: usize,
    month: usize,
}

/// Cities with index below this bound are "head" cities that dominate
/// the training distribution; the rest form a rare tail.
pub const HEAD_CITIES: usize = 3;
const HEAD_WEIGHT: f64 = 200.0;

fn city_weight(rank: usize) -> f64 {
    if rank < HEAD_CITIES {
        HEAD_WEIGHT
    } else {
        1.0
    }
}

fn weighted_city(rng: &mut ChaCha8Rng, cities: &[usize]) -> usize {
    let total: f64 = (0..cities.len()).map(city_weight).sum();
    let mut draw = rng.random_range(0.0..total);
    for (k, &city) in cities.iter().enumerate() {
        draw -= city_weight(k);
        if draw <= 0.0 {
            return city;
        }
    }
    cities[cities.len() - 1]
}

fn draw_slots(rng: &mut ChaCha8Rng, cities: &[usize], uniform_city: bool) -> Slots {
    Slots {
        city: if uniform_city {
            cities[rng.random_range(0..cities.len())]
        } else {
            weighted_city(rng, cities)
        },
        person: rng.random_range(0..PERSONS.len()),
        amount: rng.random_range(0..AMOUNTS.len()),
        day: rng.random_range(0..DAYS.len()),
        month: rng.random_range(0..MONTHS.len()),
    }
}

fn document_tokens(slots: &Slots) -> Vec<String> {
    let (city, landmark) = CITY_LANDMARKS[slots.city];
    let (first, last) = PERSONS[slots.person];
    [
        "The",
        "council",
        "said",
        first,
        last,
        "will",
        "open",
        "a",
        AMOUNTS[slots.amount],
        "project",
        "at",
        "the",
        city,
        landmark,
        "site",
        ".",
        "Work",
        "starts",
        "on",
        DAYS[slots.day],
        MONTHS[slots.month],
        ".",
        "Residents",
        "praised",
        "the",
        "plan",
        ".",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

/// The single reference template; `city_slot` fills the `{X} {Lx}` pair.
fn reference_tokens(slots: &Slots, city_slot: (&str, &str)) -> Vec<String> {
    let (first, last) = PERSONS[slots.person];
    [
        first,
        last,
        "said",
        "a",
        AMOUNTS[slots.amount],
        "project",
        "starts",
        "at",
        "the",
        city_slot.0,
        city_slot.1,
        ".",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

/// Index of the city token within [`reference_tokens`].
const CITY_TOKEN_INDEX: usize = 9;

fn pick_other_city(rng: &mut ChaCha8Rng, cities: &[usize], not: usize) -> usize {
    loop {
        let c = weighted_city(rng, cities);
        if c != not {
            return c;
        }
    }
}

fn wrong_landmark(rng: &mut ChaCha8Rng, city: usize) -> &'static str {
    loop {
        let l = rng.random_range(0..CITY_LANDMARKS.len());
        if l != city {
            return CITY_LANDMARKS[l].1;
        }
    }
}

fn reference_record(
    id: String,
    rng: &mut ChaCha8Rng,
    cities: &[usize],
    uniform_city: bool,
    noise_rate: f64,
    factual_noise_share: f64,
) -> DatasetRecord {
    let slots = draw_slots(rng, cities, uniform_city);
    let document = Document::new(id.clone(), document_tokens(&slots)).expect("non-empty");
    let roll: f64 = rng.random();
    let city_slot = if roll < noise_rate {
        let injected = pick_other_city(rng, cities, slots.city);
        if rng.random::<f64>() < factual_noise_share {
            CITY_LANDMARKS[injected] // world-consistent pair
        } else {
            (CITY_LANDMARKS[injected].0, wrong_landmark(rng, injected))
        }
    } else {
        CITY_LANDMARKS[slots.city]
    };
    let summary = SummaryRecord::new(
        id,
        reference_tokens(&slots, city_slot),
        SummaryKind::Reference,
        vec![],
    )
    .expect("template is valid");
    DatasetRecord::new(document, summary)
}

/// Gold class for the labeled dataset's city slot.
#[derive(Clone, Copy, PartialEq)]
enum LabeledKind {
    NonHallucinated,
    FactualHallucination,
    NonFactualWrongPair,
    NonFactualGarbage,
    IntrinsicAmount,
}

fn labeled_record(id: String, rng: &mut ChaCha8Rng, kind: LabeledKind) -> DatasetRecord {
    let all: Vec<usize> = (0..CITY_LANDMARKS.len()).collect();
    let slots = draw_slots(rng, &all, true);
    let document = Document::new(id.clone(), document_tokens(&slots)).expect("non-empty");
    let (city_slot, city_label) = match kind {
        LabeledKind::NonHallucinated | LabeledKind::IntrinsicAmount => {
            (CITY_LANDMARKS[slots.city], EntityClass::NonHallucinated)
        }
        LabeledKind::FactualHallucination => {
            let injected = pick_other_city(rng, &all, slots.city);
            (CITY_LANDMARKS[injected], EntityClass::FactualHallucination)
        }
        LabeledKind::NonFactualWrongPair => {
            let injected = pick_other_city(rng, &all, slots.city);
            (
                (CITY_LANDMARKS[injected].0, wrong_landmark(rng, injected)),
                EntityClass::NonFactualHallucination,
            )
        }
        LabeledKind::NonFactualGarbage => (
            (
                GARBAGE_NAMES[rng.random_range(0..GARBAGE_NAMES.len())],
                wrong_landmark(rng, slots.city),
            ),
            EntityClass::NonFactualHallucination,
        ),
    };
    let tokens = reference_tokens(&slots, city_slot);
    let mut entities = extract_entities(&tokens);
    for mention in &mut entities {
        mention.label = Some(if mention.start == CITY_TOKEN_INDEX {
            city_label
        } else if kind == LabeledKind::IntrinsicAmount && mention.length == 1 && mention.start == 4
        {
            EntityClass::IntrinsicHallucination
        } else {
            EntityClass::NonHallucinated
        });
    }
    let summary = SummaryRecord::new(id, tokens, SummaryKind::Generated, entities)
        .expect("template is valid");
    DatasetRecord::new(document, summary)
}

/// Generates the full synthetic world for one seed.
pub fn generate_world(config: &SynthConfig) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let all: Vec<usize> = (0..CITY_LANDMARKS.len()).collect();
    let train = Dataset::new(
        (0..config.train_pairs)
            .map(|i| {
                reference_record(
                    format!("train-{i}"),
                    &mut rng,
                    &all,
                    false,
                    config.noise_rate,
                    config.factual_noise_share,
                )
            })
            .collect(),
    )
    .expect("unique ids");
    let eval = Dataset::new(
        (0..config.eval_pairs)
            .map(|i| reference_record(format!("eval-{i}"), &mut rng, &all, true, 0.0, 0.0))
            .collect(),
    )
    .expect("unique ids");

    // Class mix loosely follows observed entity-status rates: two thirds
    // non-hallucinated, the rest split between factual and non-factual
    // hallucinations, plus a sliver of intrinsic mentions.
    let labeled = Dataset::new(
        (0..config.labeled_records)
            .map(|i| {
                let kind = match i % 20 {
                    0..=12 => LabeledKind::NonHallucinated,
                    13..=15 => LabeledKind::FactualHallucination,
                    16 => LabeledKind::NonFactualGarbage,
                    17..=18 => LabeledKind::NonFactualWrongPair,
                    _ => LabeledKind::IntrinsicAmount,
                };
                labeled_record(format!("lab-{i}"), &mut rng, kind)
            })
            .collect(),
    )
    .expect("unique ids");
    SynthCorpus {
        train,
        eval,
        labeled,
    }
}

/// Reference token sequences for MLM training.
pub fn scorer_corpus(dataset: &Dataset) -> Vec<Vec<String>> {
    dataset
        .records
        .iter()
        .map(|r| r.summary.tokens.clone())
        .collect()
}

/// (source, target) pairs for CMLM training.
pub fn cmlm_pairs(dataset: &Dataset) -> Vec<(Vec<String>, Vec<String>)> {
    dataset
        .records
        .iter()
        .map(|r| (r.document.tokens.clone(), r.summary.tokens.clone()))
        .collect()
}

/// Two clean reference corpora for knowledge-source analysis: corpus A
/// uses every city, corpus B never mentions the exclusive ones.
pub fn corpus_pair(pairs_each: usize, seed: u64) -> (Dataset, Dataset) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all: Vec<usize> = (0..CITY_LANDMARKS.len()).collect();
    let restricted: Vec<usize> = (0..EXCLUSIVE_CITY_RANGE.start).collect();
    let a = Dataset::new(
        (0..pairs_each)
            .map(|i| reference_record(format!("a-{i}"), &mut rng, &all, true, 0.0, 0.0))
            .collect(),
    )
    .expect("unique ids");
    let b = Dataset::new(
        (0..pairs_each)
            .map(|i| reference_record(format!("b-{i}"), &mut rng, &restricted, true, 0.0, 0.0))
            .collect(),
    )
    .expect("unique ids");
    (a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{contains_span, noise_split};

    #[test]
    fn world_is_deterministic() {
        let config = SynthConfig {
            train_pairs: 40,
            eval_pairs: 10,
            labeled_records: 20,
            ..Default::default()
        };
        let a = generate_world(&config);
        let b = generate_world(&config);
        assert_eq!(a.train, b.train);
        assert_eq!(a.eval, b.eval);
        assert_eq!(a.labeled, b.labeled);
    }

    #[test]
    fn noise_rate_matches_split() {
        let config = SynthConfig {
            train_pairs: 600,
            eval_pairs: 10,
            labeled_records: 20,
            noise_rate: 0.3,
            ..Default::default()
        };
        let world = generate_world(&config);
        let (clean, noisy) = noise_split(&world.train);
        let rate = noisy.len() as f64 / world.train.len() as f64;
        assert!((rate - 0.3).abs() < 0.06, "observed noise rate {rate}");
        assert_eq!(clean.len() + noisy.len(), world.train.len());
        // Held-out pairs are clean by construction.
        let (_, eval_noisy) = noise_split(&world.eval);
        assert!(eval_noisy.is_empty());
    }

    #[test]
    fn labeled_records_have_consistent_gold_labels() {
        let config = SynthConfig {
            train_pairs: 10,
            eval_pairs: 5,
            labeled_records: 200,
            ..Default::default()
        };
        let world = generate_world(&config);
        let mut class_seen = [false; 4];
        for record in &world.labeled.records {
            for mention in &record.summary.entities {
                let label = mention.label.expect("labeled dataset");
                let in_source = contains_span(
                    &record.document.tokens,
                    mention.covered(&record.summary.tokens),
                );
                match label {
                    EntityClass::NonHallucinated => {
                        class_seen[0] = true;
                        assert!(in_source, "non-hallucinated must be in source");
                    }
                    EntityClass::FactualHallucination => {
                        class_seen[1] = true;
                        assert!(!in_source, "hallucinations must be absent from source");
                    }
                    EntityClass::NonFactualHallucination => {
                        class_seen[2] = true;
                        assert!(!in_source);
                    }
                    EntityClass::IntrinsicHallucination => {
                        class_seen[3] = true;
                        assert!(in_source, "intrinsic mentions misuse in-source content");
                    }
                }
            }
        }
        assert!(class_seen.iter().all(|&b| b), "all four classes generated");
    }

    #[test]
    fn corpus_pair_keeps_exclusive_cities_out_of_b() {
        let (a, b) = corpus_pair(120, 5);
        let exclusive: Vec<&str> = EXCLUSIVE_CITY_RANGE.map(|i| CITY_LANDMARKS[i].0).collect();
        let mentions = |ds: &Dataset, city: &str| {
            ds.records
                .iter()
                .filter(|r| r.summary.tokens.iter().any(|t| t == city))
                .count()
        };
        for city in &exclusive {
            assert!(mentions(&a, city) > 0, "{city} should appear in corpus A");
            assert_eq!(mentions(&b, city), 0, "{city} must not appear in corpus B");
        }
    }

    #[test]
    fn garbage_names_stay_out_of_reference_corpora() {
        let world = generate_world(&SynthConfig {
            train_pairs: 300,
            eval_pairs: 50,
            labeled_records: 50,
            ..Default::default()
        });
        for ds in [&world.train, &world.eval] {
            for record in &ds.records {
                for token in record.summary.tokens.iter().chain(&record.document.tokens) {
                    assert!(!GARBAGE_NAMES.contains(&token.as_str()));
                }
            }
        }
    }
}
