//! Losses, gradients and full permutation distributions for both choice
//! models on a small score vector.
//!
//! cargo run --example choice_models

use elimrank::choice_models::{enumerate_permutation_dist, loss_grad, ChoiceModel};

fn main() {
    // Scores aligned to the ground-truth order: position 0 is the best item.
    let f = [1.2, 0.4, 0.5, -1.0];
    for model in [ChoiceModel::PlackettLuce, ChoiceModel::Elimination] {
        let lg = loss_grad(model, &f);
        println!("{:<14} loss {:.6}  grad {:?}", model.name(), lg.loss, rounded(&lg.grad));

        let mut dist = enumerate_permutation_dist(model, &f).unwrap();
        dist.sort_by(|a, b| b.1.total_cmp(&a.1));
        let total: f64 = dist.iter().map(|(_, p)| p).sum();
        println!("  {} orderings, total probability {total:.12}", dist.len());
        for (perm, p) in dist.iter().take(3) {
            println!("  {:?}  {p:.4}", perm.as_slice());
        }
    }
}

fn rounded(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| (x * 1e4).round() / 1e4).collect()
}
