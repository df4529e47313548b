//! Listwise learning to rank with two choice models: Plackett-Luce
//! (iterative selection of the best remaining item) and choice by
//! elimination (iterative removal of the worst remaining item).
//!
//! The crate provides losses and gradients for both models, linear and
//! highway-network rank functions trained by mini-batch gradient descent,
//! a stochastic gradient tree boosting baseline, NDCG/ERR evaluation, and
//! Monte Carlo checks of the random-utility derivations behind each model.
//!
//! ```no_run
//! use elimrank::prelude::*;
//!
//! let spec = SyntheticSpec::with_random_weights(50, 10, 5, 0.0, 1);
//! let (corpus, _) = generate_synthetic(&spec).unwrap();
//! let config = TrainConfig { max_epochs: 20, ..TrainConfig::default() };
//! let (model, _log) = train_model(&corpus, &RankFunctionSpec::Linear, &config).unwrap();
//! let report = evaluate(&model, &corpus, &[Metric::Ndcg(5), Metric::Err]).unwrap();
//! println!("{}", report.to_table());
//! ```

pub mod choice_models;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod metrics;
pub mod rank_functions;
pub mod rng;
pub mod rut;
pub mod sgtb;
pub mod training;

pub use error::{Error, Result};

/// The commonly used items in one import.
pub mod prelude {
    pub use crate::choice_models::{loss_grad, ChoiceModel, LossGrad, Permutation};
    pub use crate::dataset::{
        apply_normalization, fit_normalization, generate_synthetic, parse_letor, Corpus, Item,
        NormStats, QueryGroup, SyntheticSpec,
    };
    pub use crate::error::{Error, Result};
    pub use crate::metrics::{Metric, MetricReport};
    pub use crate::rank_functions::{
        init_highway, DropoutConfig, HighwayParams, LinearParams, RankFunction, RankModel, Scorer,
    };
    pub use crate::sgtb::{fit_sgtb, Ensemble, SgtbConfig};
    pub use crate::training::{evaluate, train, train_model, RankFunctionSpec, TrainConfig};
}
