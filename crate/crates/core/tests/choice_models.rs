use elimrank::choice_models::{enumerate_permutation_dist, loss_grad, ChoiceModel};
use proptest::prelude::*;

fn distinct_scores(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, n).prop_filter("distinct", |f| {
        let mut s = f.clone();
        s.sort_by(f64::total_cmp);
        s.windows(2).all(|w| w[1] - w[0] > 1e-6)
    })
}

proptest! {
    #[test]
    fn sorted_order_is_the_elimination_mode(f in (1usize..=5).prop_flat_map(distinct_scores)) {
        let dist = enumerate_permutation_dist(ChoiceModel::Elimination, &f).unwrap();
        let mut sorted: Vec<usize> = (0..f.len()).collect();
        sorted.sort_by(|&a, &b| f[b].total_cmp(&f[a]));
        let (best, p_best) = dist
            .iter()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        prop_assert_eq!(best.as_slice(), sorted.as_slice());
        for (perm, p) in &dist {
            if perm.as_slice() != sorted.as_slice() {
                prop_assert!(p < p_best);
            }
        }
    }

    #[test]
    fn gradients_sum_to_zero(f in prop::collection::vec(-30.0f64..30.0, 1..60)) {
        for model in [ChoiceModel::PlackettLuce, ChoiceModel::Elimination] {
            let g = loss_grad(model, &f).grad;
            prop_assert!(g.iter().sum::<f64>().abs() < 1e-9);
            prop_assert!(g.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn stable_at_extreme_scores(f in prop::collection::vec(-700.0f64..700.0, 1..30)) {
        for model in [ChoiceModel::PlackettLuce, ChoiceModel::Elimination] {
            let lg = loss_grad(model, &f);
            prop_assert!(lg.loss.is_finite() && lg.loss >= -1e-9);
            prop_assert!(lg.grad.iter().all(|v| v.is_finite()));
        }
    }
}

#[test]
fn guard_above_eight_items() {
    assert!(enumerate_permutation_dist(ChoiceModel::PlackettLuce, &[0.0; 9]).is_err());
    assert_eq!(enumerate_permutation_dist(ChoiceModel::PlackettLuce, &[0.0; 8]).unwrap().len(), 40320);
}
