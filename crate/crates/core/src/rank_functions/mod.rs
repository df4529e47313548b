//! Rank functions `f(x)`: a linear scorer and a recurrent highway network.

mod highway;
mod linear;
pub mod serialize;

pub use highway::{highway_backward, highway_forward, init_highway, max_row_norm, HighwayParams, HighwayTape};
pub use linear::{linear_forward, linear_grad, LinearParams, LinearTape};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Dropout probabilities for the input (visible) and hidden units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropoutConfig {
    pub p_vis: f64,
    pub p_hid: f64,
    pub rng_seed: u64,
}

impl Default for DropoutConfig {
    fn default() -> Self {
        DropoutConfig {
            p_vis: 0.0,
            p_hid: 0.0,
            rng_seed: 0,
        }
    }
}

impl DropoutConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("p_vis", self.p_vis), ("p_hid", self.p_hid)] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::Validation(format!("{name} must lie in [0, 1), got {p}")));
            }
        }
        Ok(())
    }

    pub fn is_active(&self) -> bool {
        self.p_vis > 0.0 || self.p_hid > 0.0
    }
}

/// Evaluation mode of a forward pass.
pub enum Mode<'a> {
    /// Deterministic, no dropout, consumes no randomness.
    Infer,
    /// Fresh inverted-dropout masks are drawn from `rng` per call.
    Train {
        dropout: &'a DropoutConfig,
        rng: &'a mut ChaCha8Rng,
    },
}

/// Inverted dropout mask: kept units carry `1 / (1 - p)`, dropped units 0.
/// Returns `None` when `p == 0`, in which case no randomness is consumed.
pub(crate) fn draw_mask(len: usize, p: f64, rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
    if p <= 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - p);
    Some(
        (0..len)
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect(),
    )
}

/// Anything that maps a feature vector to a worth score at inference time.
pub trait Scorer: Sync {
    fn feature_dim(&self) -> usize;
    fn score(&self, x: &[f64]) -> Result<f64>;
}

/// A differentiable scorer whose parameters can be trained by SGD.
///
/// Gradients are represented by a value of the same type (same shapes).
pub trait RankFunction: Scorer + Clone + Send {
    type Tape: Send;

    fn forward(&self, x: &[f64], mode: Mode<'_>) -> Result<(f64, Self::Tape)>;

    /// Adds `dscore * d score / d params` into `grad`.
    fn accumulate_grad(&self, tape: &Self::Tape, dscore: f64, grad: &mut Self) -> Result<()>;

    fn zeros_like(&self) -> Self;

    /// `self += alpha * other`.
    fn axpy(&mut self, alpha: f64, other: &Self);

    /// Caps the incoming weight norm of every hidden unit. No-op for models
    /// without hidden units.
    fn project_maxnorm(&mut self, cap: f64);

    fn all_finite(&self) -> bool;
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Validation(format!(
            "feature vector has length {got}, model expects {expected}"
        )));
    }
    Ok(())
}

/// Closed set of trainable models, used where the kind is chosen at run time.
#[derive(Debug, Clone, PartialEq)]
pub enum RankModel {
    Linear(LinearParams),
    Highway(HighwayParams),
}

impl Scorer for RankModel {
    fn feature_dim(&self) -> usize {
        match self {
            RankModel::Linear(m) => m.feature_dim(),
            RankModel::Highway(m) => m.feature_dim(),
        }
    }

    fn score(&self, x: &[f64]) -> Result<f64> {
        match self {
            RankModel::Linear(m) => m.score(x),
            RankModel::Highway(m) => m.score(x),
        }
    }
}
