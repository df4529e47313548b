//! Forward/backward through a recurrent highway network, then a short
//! training run with dropout and max-norm.
//!
//! cargo run --release --example highway_network

use elimrank::prelude::*;
use elimrank::rank_functions::{highway_backward, highway_forward, max_row_norm, Mode};

fn main() -> elimrank::Result<()> {
    let net = init_highway(4, 6, 3, 7)?;
    let x = [0.5, -1.0, 0.25, 2.0];
    let (score, tape) = highway_forward(&net, &x, Mode::Infer)?;
    let grad = highway_backward(&net, &tape, 1.0)?;
    println!("{} parameters, score {score:.3e}", net.num_params());
    println!("mean gate per layer: {:?}", tape.gates().map(mean).collect::<Vec<_>>());
    println!("|d score / d w| = {:.3e}", grad.w_out.iter().map(|v| v * v).sum::<f64>().sqrt());

    let (corpus, _) = generate_synthetic(&SyntheticSpec::with_random_weights(60, 15, 4, 0.5, 1))?;
    let config = TrainConfig {
        dropout: DropoutConfig { p_vis: 0.0, p_hid: 0.3, rng_seed: 3 },
        ..TrainConfig::default()
    };
    let (trained, log) = train(&corpus, net, &config)?;
    let report = evaluate(&trained, &corpus, &[Metric::Ndcg(5), Metric::Err])?;
    println!(
        "trained {} epochs, loss {:.4}, max row norm {:.3}, train ndcg@5 {:.4} err {:.4}",
        log.records.len(),
        log.final_loss().unwrap(),
        max_row_norm(&trained),
        report.means[0],
        report.means[1]
    );
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}
