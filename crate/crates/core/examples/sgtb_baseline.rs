//! Gradient tree boosting against the elimination loss.
//!
//! cargo run --release --example sgtb_baseline

use elimrank::prelude::*;

fn main() -> elimrank::Result<()> {
    let spec = SyntheticSpec::with_random_weights(150, 20, 8, 1.0, 5);
    let (train_set, _) = generate_synthetic(&spec)?;
    let (test_set, _) = generate_synthetic(&SyntheticSpec { rng_seed: 6, ..spec })?;

    let config = SgtbConfig { num_trees: 60, ..SgtbConfig::default() };
    let fit = fit_sgtb(&train_set, ChoiceModel::Elimination, &config)?;
    let first = fit.log.records.first().unwrap();
    let last = fit.log.records.last().unwrap();
    println!(
        "{} trees, loss {:.4} -> {:.4}, {} lr halvings, final lr {}",
        fit.ensemble.trees.len(),
        first.mean_loss,
        last.mean_loss,
        fit.halvings,
        last.lr
    );
    let leaves: Vec<usize> = fit.ensemble.trees.iter().map(|(_, t)| t.num_leaves()).collect();
    println!("leaves per tree: min {} max {}", leaves.iter().min().unwrap(), leaves.iter().max().unwrap());

    let report = evaluate(&fit.ensemble, &test_set, &[Metric::Ndcg(1), Metric::Err])?;
    print!("{}", report.to_table());
    Ok(())
}
