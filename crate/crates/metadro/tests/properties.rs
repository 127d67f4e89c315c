//! Property-based invariants over the data pipeline, sampler, and metrics.

use std::collections::BTreeSet;

use metadro::autodiff::Tensor;
use metadro::dataset::{clean_text, load_store, write_store, EmbeddingRecord, EmbeddingStore, StoreFormat};
use metadro::dro::{rank_groups, GroupStats};
use metadro::episodes::{sample_episode, TaskSpec};
use metadro::synth::{generate, SynthSpec};
use metadro::trainer::{confidence_interval, MetricsRecord};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn record_strategy() -> impl Strategy<Value = Vec<EmbeddingRecord>> {
    // 2 classes × 2+ records with a fixed dim, unique ids by index.
    (2usize..5, 2usize..6, prop::collection::vec(-10.0f64..10.0, 3)).prop_flat_map(
        |(classes, per_class, _)| {
            prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 3), classes * per_class)
                .prop_map(move |vecs| {
                    vecs.into_iter()
                        .enumerate()
                        .map(|(i, v)| EmbeddingRecord {
                            id: format!("r{}", i),
                            patient_id: if i % 3 == 0 { Some(format!("p{}", i / 2)) } else { None },
                            vector: Tensor::vector(v),
                            label: format!("c{}", i % classes),
                            group: format!("g{}", i % 2),
                        })
                        .collect()
                })
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn clean_text_is_idempotent(text in ".{0,200}", max_tokens in 1usize..50) {
        let stops: BTreeSet<String> = ["the", "and", "of"].iter().map(|s| s.to_string()).collect();
        let once = clean_text(&text, &stops, max_tokens);
        let twice = clean_text(&once, &stops, max_tokens);
        prop_assert_eq!(&once, &twice);
        prop_assert!(once.split_whitespace().count() <= max_tokens);
        prop_assert!(once.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == ' ' || c.is_alphanumeric()));
    }

    #[test]
    fn store_round_trips_through_every_format(records in record_strategy()) {
        let store = EmbeddingStore::from_records(records).unwrap();
        let dir = tempfile::tempdir().unwrap();
        for (name, format) in [("s.csv", StoreFormat::Csv), ("s.jsonl", StoreFormat::Jsonl), ("s.bin", StoreFormat::Binary)] {
            let path = dir.path().join(name);
            write_store(&store, &path, format).unwrap();
            let back = load_store(&path, format).unwrap();
            prop_assert_eq!(back.len(), store.len());
            prop_assert_eq!(back.dim(), store.dim());
            for (a, b) in back.records().iter().zip(store.records()) {
                prop_assert_eq!(&a.id, &b.id);
                prop_assert_eq!(&a.patient_id, &b.patient_id);
                prop_assert_eq!(&a.label, &b.label);
                prop_assert_eq!(&a.group, &b.group);
                for (x, y) in a.vector.data().iter().zip(b.vector.data()) {
                    prop_assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn episodes_have_exact_shape_and_disjoint_ids(
        seed in 0u64..1000,
        n in 2usize..5,
        k in 1usize..4,
        q in 1usize..4,
    ) {
        let store = generate(&SynthSpec {
            dim: 4,
            classes: 6,
            groups_per_class: 2,
            records_per_class: 12,
            mean_scale: 3.0,
            noise_sigma: 1.0,
            shift_delta: 1.0,
            minority_frac: 0.2,
            seed: 9,
        }).unwrap();
        let task = TaskSpec::new(n, k, q).unwrap();
        let pool = store.classes();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ep = sample_episode(&store, &task, &pool, &mut rng).unwrap();
        prop_assert_eq!(ep.support.len(), n * k);
        prop_assert_eq!(ep.query.len(), n * q);
        prop_assert_eq!(ep.class_map.len(), n);
        let sids: BTreeSet<&str> = ep.support.iter().map(|s| s.record_id.as_str()).collect();
        prop_assert_eq!(sids.len(), n * k);
        for item in &ep.query {
            prop_assert!(!sids.contains(item.record_id.as_str()));
            prop_assert!(item.label < n);
        }
    }

    #[test]
    fn confidence_interval_brackets_the_data(values in prop::collection::vec(0.0f64..1.0, 2..40)) {
        let (mean, std, hw) = confidence_interval(&values);
        let lo = values.iter().cloned().fold(f64::MAX, f64::min);
        let hi = values.iter().cloned().fold(f64::MIN, f64::max);
        prop_assert!(mean >= lo - 1e-12 && mean <= hi + 1e-12);
        prop_assert!(std >= 0.0);
        prop_assert!(hw >= 0.0);
        let n = values.len() as f64;
        prop_assert!((hw - 1.96 * std / n.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn summary_row_round_trips(
        avg in 0.0f64..1.0, worst in 0.0f64..1.0, best in 0.0f64..1.0, middle in 0.0f64..1.0,
        hw in 0.0f64..0.5,
    ) {
        let rec = MetricsRecord {
            iteration: 1,
            avg, avg_hw: hw, avg_std: 0.0,
            worst, worst_hw: hw,
            best, best_hw: hw,
            middle, middle_hw: hw,
            worst_group: "w".into(), best_group: "b".into(), middle_group: "m".into(),
            groups: vec![],
        };
        let parsed = MetricsRecord::parse_summary_row(&rec.format_summary_row()).unwrap();
        // The ± format rounds to three decimals.
        prop_assert!((parsed.avg - avg).abs() <= 5e-4 + 1e-12);
        prop_assert!((parsed.worst - worst).abs() <= 5e-4 + 1e-12);
        prop_assert!((parsed.best - best).abs() <= 5e-4 + 1e-12);
        prop_assert!((parsed.middle - middle).abs() <= 5e-4 + 1e-12);
    }

    #[test]
    fn rank_groups_orders_by_mean_loss(
        entries in prop::collection::btree_map("g[a-e]", (1u64..50, 0.0f64..100.0), 1..5)
    ) {
        let stats = GroupStats::from_entries(
            entries.iter().map(|(g, (n, s))| (g.clone(), *n, *s))
        );
        let (worst, best, middle) = rank_groups(&stats).unwrap();
        let mean = |g: &str| stats.mean_loss(g).unwrap();
        for g in entries.keys() {
            prop_assert!(mean(&worst) >= mean(g) - 1e-12);
            prop_assert!(mean(&best) <= mean(g) + 1e-12);
        }
        prop_assert!(mean(&middle) >= mean(&best) - 1e-12);
        prop_assert!(mean(&middle) <= mean(&worst) + 1e-12);
    }
}
