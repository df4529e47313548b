//! Monte Carlo check that Gompertz utilities reproduce the elimination
//! probabilities and Gumbel utilities reproduce Plackett-Luce.
//!
//! cargo run --release --example rut_validation [samples]

use elimrank::rut::{mc_elimination_check, mc_gumbel_ordering_check, validation_suite};

fn main() {
    let samples: usize = std::env::args()
        .nth(1)
        .map(|s| s.parse().expect("samples must be an integer"))
        .unwrap_or(200_000);

    let scores = [0.3, -0.5, 1.1];
    for b in [0.5, 2.0] {
        print!("{}", mc_elimination_check(&scores, samples, b, 1).unwrap().to_table());
    }
    print!("{}", mc_gumbel_ordering_check(&scores, samples, 2).unwrap().to_table());

    let suite = validation_suite(samples, 5, 3).unwrap();
    println!("full suite: {} reports, passed = {}", suite.reports.len(), suite.passed());
}
