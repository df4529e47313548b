//! Grid over hidden width and dropout rates for the highway network.

use std::fmt::Write as _;

use crate::dataset::Corpus;
use crate::error::Result;
use crate::metrics::{Metric, MetricReport};
use crate::rank_functions::DropoutConfig;
use crate::training::{evaluate, train_model, RankFunctionSpec, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub hidden: usize,
    pub p_hid: f64,
    pub p_vis: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub point: SweepPoint,
    pub final_train_loss: f64,
    pub epochs: usize,
    pub report: MetricReport,
}

/// Cartesian product in `hidden`, `p_hid`, `p_vis` order.
pub fn grid(hidden: &[usize], p_hid: &[f64], p_vis: &[f64]) -> Vec<SweepPoint> {
    let mut out = Vec::new();
    for &k in hidden {
        for &ph in p_hid {
            for &pv in p_vis {
                out.push(SweepPoint {
                    hidden: k,
                    p_hid: ph,
                    p_vis: pv,
                });
            }
        }
    }
    out
}

/// Trains one highway network per grid point on `train` and evaluates it on
/// `test`. Both corpora must already be normalized with training statistics.
pub fn dropout_sweep(
    train: &Corpus,
    test: &Corpus,
    base: &TrainConfig,
    layers: usize,
    init_seed: u64,
    points: &[SweepPoint],
    metrics: &[Metric],
) -> Result<Vec<SweepRow>> {
    points
        .iter()
        .map(|&point| {
            let config = TrainConfig {
                dropout: DropoutConfig {
                    p_vis: point.p_vis,
                    p_hid: point.p_hid,
                    rng_seed: base.dropout.rng_seed,
                },
                ..base.clone()
            };
            let spec = RankFunctionSpec::Highway {
                hidden: point.hidden,
                layers,
                init_seed,
            };
            let (model, log) = train_model(train, &spec, &config)?;
            let report = evaluate(&model, test, metrics)?;
            Ok(SweepRow {
                point,
                final_train_loss: log.final_loss().unwrap_or(f64::NAN),
                epochs: log.records.len(),
                report,
            })
        })
        .collect()
}

/// Tab-separated table, one row per grid point.
pub fn sweep_table(rows: &[SweepRow]) -> String {
    let mut out = String::from("K\tp_hid\tp_vis\tepochs\ttrain_loss");
    if let Some(first) = rows.first() {
        for m in &first.report.metrics {
            let _ = write!(out, "\t{m}");
        }
    }
    out.push('\n');
    for r in rows {
        let _ = write!(
            out,
            "{}\t{}\t{}\t{}\t{:.16e}",
            r.point.hidden, r.point.p_hid, r.point.p_vis, r.epochs, r.final_train_loss
        );
        for v in &r.report.means {
            let _ = write!(out, "\t{v:.16e}");
        }
        out.push('\n');
    }
    out
}
