//! NDCG@T and ERR on hand-written rankings.
//!
//! cargo run --example metrics

use elimrank::metrics::{err, kendall_tau, ndcg_at, Metric, MetricReport};

fn main() {
    for ranked in [&[4u8, 0][..], &[0, 4], &[3, 2, 4, 0, 1], &[0, 0, 0]] {
        println!(
            "{ranked:?}: ndcg@1 {:.6} ndcg@5 {:.6} err {:.6}",
            ndcg_at(ranked, 1),
            ndcg_at(ranked, 5),
            err(ranked)
        );
    }
    println!("kendall tau {:.3}", kendall_tau(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]));

    let metrics = [Metric::Ndcg(3), Metric::Err];
    let report = MetricReport::from_rankings(
        &metrics,
        [("q1", vec![4, 1, 0]), ("q2", vec![0, 2, 3])],
    );
    print!("{}", report.to_kv());
}
