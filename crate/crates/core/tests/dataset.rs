use elimrank::dataset::{
    apply_normalization, fit_normalization, parse_letor, Corpus, Item, QueryGroup,
};
use proptest::prelude::*;

fn arb_corpus() -> impl Strategy<Value = Corpus> {
    (1usize..6).prop_flat_map(|p| {
        let value = prop_oneof![Just(0.0), -1e6f64..1e6, -1.0f64..1.0];
        let item = (prop::collection::vec(value, p), 0u8..=4)
            .prop_map(|(features, relevance)| Item { features, relevance });
        prop::collection::vec(prop::collection::vec(item, 1..6), 1..5).prop_map(move |groups| Corpus {
            groups: groups
                .into_iter()
                .enumerate()
                .map(|(i, items)| QueryGroup {
                    query_id: format!("q{i}"),
                    items,
                })
                .collect(),
            feature_dim: p,
            norm_stats: None,
        })
    })
}

proptest! {
    #[test]
    fn letor_round_trip(corpus in arb_corpus()) {
        let text = corpus.to_letor();
        let back = parse_letor(text.as_bytes(), Some(corpus.feature_dim)).unwrap();
        prop_assert_eq!(back, corpus);
    }

    #[test]
    fn normalization_preserves_per_feature_order(corpus in arb_corpus()) {
        let stats = fit_normalization(&corpus).unwrap();
        let norm = apply_normalization(&corpus, &stats).unwrap();
        let raw: Vec<&Item> = corpus.items().collect();
        let out: Vec<&Item> = norm.items().collect();
        for i in 0..raw.len() {
            for j in 0..raw.len() {
                for d in 0..corpus.feature_dim {
                    let a = raw[i].features[d].partial_cmp(&raw[j].features[d]).unwrap();
                    let b = out[i].features[d].partial_cmp(&out[j].features[d]).unwrap();
                    prop_assert_eq!(a, b);
                }
            }
        }
    }

    #[test]
    fn renormalized_stats_are_standard(corpus in arb_corpus()) {
        let stats = fit_normalization(&corpus).unwrap();
        let again = fit_normalization(&apply_normalization(&corpus, &stats).unwrap()).unwrap();
        for d in 0..corpus.feature_dim {
            prop_assert!(again.mean[d].abs() < 1e-9, "mean {}", again.mean[d]);
            if stats.std[d] > 1e-3 {
                prop_assert!((again.std[d] - 1.0).abs() < 1e-6, "std {}", again.std[d]);
            }
        }
    }
}

#[test]
fn shuffled_query_blocks_are_rejected() {
    let text = "1 qid:a 1:1\n0 qid:b 1:2\n2 qid:a 1:3\n";
    let e = parse_letor(text.as_bytes(), None).unwrap_err();
    assert!(e.to_string().contains("non-contiguous"), "{e}");
}
