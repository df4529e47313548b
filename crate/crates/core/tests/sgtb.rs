use elimrank::choice_models::ChoiceModel;
use elimrank::dataset::{generate_synthetic, SyntheticSpec};
use elimrank::sgtb::{decode_ensemble, encode_ensemble, fit_sgtb, grow_tree, Node, SgtbConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn leaves_hold_routed_means(
        rows in prop::collection::vec((prop::collection::vec(-3.0f64..3.0, 3), -2.0f64..2.0), 1..300),
        seed in any::<u64>(),
        max_leaves in 2usize..40,
        min_node_size in 1usize..50,
    ) {
        let feats: Vec<&[f64]> = rows.iter().map(|(x, _)| x.as_slice()).collect();
        let targets: Vec<f64> = rows.iter().map(|(_, y)| *y).collect();
        let config = SgtbConfig { max_leaves, min_node_size, ..SgtbConfig::default() };
        let tree = grow_tree(&feats, &targets, &config, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert!(tree.num_leaves() <= max_leaves);

        let counts = tree.node_counts(&feats);
        let mut sums = vec![0.0; tree.nodes().len()];
        for (x, y) in feats.iter().zip(&targets) {
            sums[tree.route(x)] += y;
        }
        for (i, node) in tree.nodes().iter().enumerate() {
            match *node {
                Node::Leaf { value } => {
                    prop_assert!(counts[i] > 0);
                    prop_assert!((value - sums[i] / counts[i] as f64).abs() < 1e-9);
                }
                Node::Split { left, right, .. } => {
                    prop_assert!(counts[i] >= min_node_size);
                    prop_assert_eq!(counts[left] + counts[right], counts[i]);
                }
            }
        }
        // Splits reduce squared error: the tree fits at least as well as the mean.
        let mean = targets.iter().sum::<f64>() / targets.len() as f64;
        let sse = |pred: &dyn Fn(&[f64]) -> f64| -> f64 {
            feats.iter().zip(&targets).map(|(x, y)| (y - pred(x)).powi(2)).sum()
        };
        prop_assert!(sse(&|x| tree.predict(x)) <= sse(&|_| mean) + 1e-9);
    }
}

#[test]
fn boosting_is_deterministic_and_serializes() {
    let (c, _) = generate_synthetic(&SyntheticSpec::with_random_weights(30, 10, 5, 0.5, 2)).unwrap();
    let config = SgtbConfig { num_trees: 20, lr_init: 2.0, ..SgtbConfig::default() };
    let a = fit_sgtb(&c, ChoiceModel::PlackettLuce, &config).unwrap();
    let b = fit_sgtb(&c, ChoiceModel::PlackettLuce, &config).unwrap();
    assert_eq!(a.ensemble, b.ensemble);
    assert_eq!(decode_ensemble(&encode_ensemble(&a.ensemble)).unwrap(), a.ensemble);

    let losses: Vec<f64> = a.log.records.iter().map(|r| r.mean_loss).collect();
    let increases = losses.windows(2).filter(|w| w[1] > w[0]).count();
    assert_eq!(a.halvings, increases);
}
