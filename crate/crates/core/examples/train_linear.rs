//! Train a linear scorer with both losses on a noisy synthetic corpus and
//! compare held-out NDCG and ERR.
//!
//! cargo run --release --example train_linear

use elimrank::prelude::*;

fn main() -> elimrank::Result<()> {
    let spec = SyntheticSpec::with_random_weights(200, 20, 10, 1.5, 42);
    let test_spec = SyntheticSpec { num_queries: 100, rng_seed: 43, ..spec.clone() };
    let (train_raw, _) = generate_synthetic(&spec)?;
    let (test_raw, _) = generate_synthetic(&test_spec)?;

    // Statistics come from the training split only.
    let stats = fit_normalization(&train_raw)?;
    let train_set = apply_normalization(&train_raw, &stats)?;
    let test_set = apply_normalization(&test_raw, &stats)?;

    let metrics = [Metric::Ndcg(1), Metric::Ndcg(5), Metric::Err];
    for kind in [ChoiceModel::Elimination, ChoiceModel::PlackettLuce] {
        let config = TrainConfig { loss_kind: kind, ..TrainConfig::default() };
        let (model, log) = train_model(&train_set, &RankFunctionSpec::Linear, &config)?;
        let report = evaluate(&model, &test_set, &metrics)?;
        println!(
            "{:<14} epochs {:>3}  final loss {:.4}  {}",
            kind.name(),
            log.records.len(),
            log.final_loss().unwrap_or(f64::NAN),
            metrics
                .iter()
                .zip(&report.means)
                .map(|(m, v)| format!("{m}={v:.4}"))
                .collect::<Vec<_>>()
                .join(" ")
        );
    }
    Ok(())
}
