//! Dropout grid for a 3-layer highway network, printed as a TSV table.
//!
//! cargo run --release --example dropout_sweep

use elimrank::cli::sweep::{dropout_sweep, grid, sweep_table};
use elimrank::prelude::*;

fn main() -> elimrank::Result<()> {
    let spec = SyntheticSpec::with_random_weights(80, 15, 6, 1.0, 11);
    let (train_set, _) = generate_synthetic(&spec)?;
    let (test_set, _) = generate_synthetic(&SyntheticSpec { rng_seed: 12, ..spec })?;

    let base = TrainConfig { max_epochs: 60, ..TrainConfig::default() };
    let points = grid(&[5, 10], &[0.0, 0.2, 0.3], &[0.0]);
    let rows = dropout_sweep(&train_set, &test_set, &base, 3, 0, &points, &[Metric::Ndcg(1), Metric::Err])?;
    print!("{}", sweep_table(&rows));
    Ok(())
}
