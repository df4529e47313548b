//! Mini-batch SGD over queries with a halve-on-plateau learning rate.
//!
//! Each step draws a ground-truth permutation per query (grade descending,
//! ties shuffled), scores the items in rank order, turns the listwise
//! functional gradient into a parameter gradient by backpropagation, averages
//! it over the query's items and then over the queries of the batch.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::choice_models::{loss_grad, ChoiceModel, Permutation};
use crate::dataset::{Corpus, QueryGroup};
use crate::error::{Error, Result};
use crate::metrics::{Metric, MetricReport};
use crate::rank_functions::{
    init_highway, DropoutConfig, HighwayParams, LinearParams, Mode, RankFunction, RankModel, Scorer,
};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_queries: usize,
    pub lr_init: f64,
    pub lr_stop: f64,
    pub improvement_tol: f64,
    pub max_epochs: usize,
    pub loss_kind: ChoiceModel,
    pub dropout: DropoutConfig,
    pub maxnorm_cap: Option<f64>,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_queries: 2,
            lr_init: 0.1,
            lr_stop: 1e-4,
            improvement_tol: 1e-6,
            max_epochs: 500,
            loss_kind: ChoiceModel::Elimination,
            dropout: DropoutConfig::default(),
            maxnorm_cap: Some(1.0),
            rng_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_queries == 0 {
            return Err(Error::Validation("batch_queries must be >= 1".into()));
        }
        // lr_init = 0 is allowed: it runs a single epoch without moving the
        // parameters.
        if !(self.lr_init >= 0.0 && self.lr_stop > 0.0 && self.lr_init.is_finite()) {
            return Err(Error::Validation(format!(
                "need lr_init >= 0 and lr_stop > 0, got {} and {}",
                self.lr_init, self.lr_stop
            )));
        }
        if !(self.improvement_tol >= 0.0) {
            return Err(Error::Validation("improvement_tol must be >= 0".into()));
        }
        if let Some(cap) = self.maxnorm_cap {
            if !(cap > 0.0) {
                return Err(Error::Validation("maxnorm cap must be > 0".into()));
            }
        }
        self.dropout.validate()
    }
}

/// Halves the learning rate whenever the epoch loss fails to beat the best
/// loss seen so far by at least `tol`.
#[derive(Debug, Clone)]
pub struct LrSchedule {
    lr: f64,
    best: f64,
    tol: f64,
}

impl LrSchedule {
    pub fn new(lr_init: f64, tol: f64) -> Self {
        LrSchedule {
            lr: lr_init,
            best: f64::INFINITY,
            tol,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Feeds one epoch's mean loss; returns whether the rate was halved.
    pub fn observe(&mut self, loss: f64) -> bool {
        let stalled = loss > self.best - self.tol;
        if stalled {
            self.lr *= 0.5;
        }
        self.best = self.best.min(loss);
        stalled
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Learning rate used during this epoch.
    pub lr: f64,
}

/// Per-epoch training trace.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

impl TrainLog {
    /// Tab-separated `epoch mean_loss lr` with a header line; floats carry 17
    /// significant digits.
    pub fn to_text(&self) -> String {
        let mut out = String::from("epoch\tmean_loss\tlr\n");
        for r in &self.records {
            let _ = writeln!(out, "{}\t{:.16e}\t{:.16e}", r.epoch, r.mean_loss, r.lr);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let bad = || Error::Parse {
                line: i + 1,
                message: format!("expected epoch<TAB>mean_loss<TAB>lr, got {line:?}"),
            };
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(bad());
            }
            records.push(EpochRecord {
                epoch: cols[0].parse().map_err(|_| bad())?,
                mean_loss: cols[1].parse().map_err(|_| bad())?,
                lr: cols[2].parse().map_err(|_| bad())?,
            });
        }
        Ok(TrainLog { records })
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.mean_loss)
    }
}

/// Grade-descending ordering of a query's items; items with equal grades
/// are shuffled uniformly using `rng`.
pub fn label_permutation<R: Rng + ?Sized>(group: &QueryGroup, rng: &mut R) -> Permutation {
    let mut order: Vec<usize> = (0..group.len()).collect();
    order.shuffle(rng);
    order.sort_by(|&a, &b| group.items[b].relevance.cmp(&group.items[a].relevance));
    Permutation::new(order).expect("shuffled indices form a permutation")
}

/// Loss and parameter gradient (summed over items, not yet averaged) for a
/// single query ordered by `perm`.
pub fn query_loss_grad<F: RankFunction>(
    model: &F,
    group: &QueryGroup,
    perm: &Permutation,
    loss_kind: ChoiceModel,
    mut dropout: Option<(&DropoutConfig, &mut rand_chacha::ChaCha8Rng)>,
) -> Result<(f64, F)> {
    let mut scores = Vec::with_capacity(perm.len());
    let mut tapes = Vec::with_capacity(perm.len());
    for &idx in perm.as_slice() {
        let x = &group.items[idx].features;
        let mode = match dropout.as_mut() {
            Some((cfg, rng)) => Mode::Train {
                dropout: cfg,
                rng,
            },
            None => Mode::Infer,
        };
        let (s, tape) = model.forward(x, mode)?;
        scores.push(s);
        tapes.push(tape);
    }
    let lg = loss_grad(loss_kind, &scores);
    let mut grad = model.zeros_like();
    for (tape, &d) in tapes.iter().zip(&lg.grad) {
        model.accumulate_grad(tape, d, &mut grad)?;
    }
    Ok((lg.loss, grad))
}

/// Trains `model` in place of `init` and returns it with its epoch log.
pub fn train<F: RankFunction>(corpus: &Corpus, init: F, config: &TrainConfig) -> Result<(F, TrainLog)> {
    config.validate()?;
    if corpus.groups.is_empty() {
        return Err(Error::Validation("cannot train on an empty corpus".into()));
    }
    if init.feature_dim() != corpus.feature_dim {
        return Err(Error::Validation(format!(
            "model expects {} features, corpus has {}",
            init.feature_dim(),
            corpus.feature_dim
        )));
    }

    let mut model = init;
    let mut shuffle_rng = rng::stream(config.rng_seed, Stream::Shuffle);
    let mut tie_rng = rng::stream(config.rng_seed, Stream::TieBreak);
    let dropout_seed = config.dropout.rng_seed ^ config.rng_seed;
    let use_dropout = config.dropout.is_active();
    let mut schedule = LrSchedule::new(config.lr_init, config.improvement_tol);
    let mut log = TrainLog::default();
    let num_queries = corpus.groups.len();

    for epoch in 1..=config.max_epochs {
        let lr = schedule.lr();
        let mut order: Vec<usize> = (0..num_queries).collect();
        order.shuffle(&mut shuffle_rng);
        let perms: Vec<Permutation> = order
            .iter()
            .map(|&q| label_permutation(&corpus.groups[q], &mut tie_rng))
            .collect();

        let mut loss_sum = 0.0;
        for (batch, batch_perms) in order
            .chunks(config.batch_queries)
            .zip(perms.chunks(config.batch_queries))
        {
            let results: Vec<Result<(f64, F)>> = batch
                .par_iter()
                .zip(batch_perms)
                .map(|(&q, perm)| {
                    let group = &corpus.groups[q];
                    if use_dropout {
                        let mut rng = rng::substream(dropout_seed, Stream::Dropout, &[epoch as u64, q as u64]);
                        query_loss_grad(&model, group, perm, config.loss_kind, Some((&config.dropout, &mut rng)))
                    } else {
                        query_loss_grad(&model, group, perm, config.loss_kind, None)
                    }
                })
                .collect();

            let mut step = model.zeros_like();
            for (&q, res) in batch.iter().zip(results) {
                let (loss, grad) = res?;
                let group = &corpus.groups[q];
                if !loss.is_finite() || !grad.all_finite() {
                    return Err(Error::Numerical(format!(
                        "non-finite loss or gradient for query {} at epoch {epoch}",
                        group.query_id
                    )));
                }
                loss_sum += loss;
                step.axpy(1.0 / (group.len() as f64 * batch.len() as f64), &grad);
            }
            model.axpy(-lr, &step);
            if let Some(cap) = config.maxnorm_cap {
                model.project_maxnorm(cap);
            }
        }

        let mean_loss = loss_sum / num_queries as f64;
        log.records.push(EpochRecord { epoch, mean_loss, lr });
        schedule.observe(mean_loss);
        if schedule.lr() < config.lr_stop {
            break;
        }
    }
    Ok((model, log))
}

/// Which rank function to build before training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RankFunctionSpec {
    Linear,
    Highway {
        hidden: usize,
        layers: usize,
        init_seed: u64,
    },
}

impl RankFunctionSpec {
    pub fn init(&self, feature_dim: usize) -> Result<RankModel> {
        Ok(match *self {
            RankFunctionSpec::Linear => RankModel::Linear(LinearParams::zeros(feature_dim)),
            RankFunctionSpec::Highway {
                hidden,
                layers,
                init_seed,
            } => RankModel::Highway(init_highway(feature_dim, hidden, layers, init_seed)?),
        })
    }
}

/// Builds the rank function described by `spec` and trains it.
pub fn train_model(corpus: &Corpus, spec: &RankFunctionSpec, config: &TrainConfig) -> Result<(RankModel, TrainLog)> {
    match spec.init(corpus.feature_dim)? {
        RankModel::Linear(m) => train(corpus, m, config).map(|(m, l)| (RankModel::Linear(m), l)),
        RankModel::Highway(m) => {
            train::<HighwayParams>(corpus, m, config).map(|(m, l)| (RankModel::Highway(m), l))
        }
    }
}

/// Infer-mode scores of every item, grouped by query.
pub fn score_corpus<S: Scorer + ?Sized>(scorer: &S, corpus: &Corpus) -> Result<Vec<Vec<f64>>> {
    corpus
        .groups
        .par_iter()
        .map(|g| g.items.iter().map(|it| scorer.score(&it.features)).collect())
        .collect()
}

/// Item indices by descending score; equal scores keep their input order.
pub fn rank_by_scores(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// Ranks every query by `scorer` and averages `metrics` over queries.
pub fn evaluate<S: Scorer + ?Sized>(scorer: &S, corpus: &Corpus, metrics: &[Metric]) -> Result<MetricReport> {
    let scores = score_corpus(scorer, corpus)?;
    let rankings = corpus.groups.iter().zip(&scores).map(|(g, s)| {
        let ranked = rank_by_scores(s)
            .into_iter()
            .map(|i| g.items[i].relevance)
            .collect();
        (g.query_id.as_str(), ranked)
    });
    Ok(MetricReport::from_rankings(metrics, rankings))
}
