//! Stochastic gradient tree boosting over listwise functional gradients.
//!
//! Each round fits a regression tree to the negative functional gradients of
//! a random half of the queries. Split thresholds are drawn uniformly at
//! random between a feature's min and max in the node; among the features
//! sampled for the node, the one whose random threshold gives the largest
//! variance reduction wins. Trees grow best-first until the leaf budget is
//! spent or no node can be split.

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::choice_models::{loss_grad, ChoiceModel, Permutation};
use crate::dataset::Corpus;
use crate::error::{Error, Result};
use crate::rank_functions::serialize::{ByteReader, ByteWriter};
use crate::rank_functions::{check_dim, Scorer};
use crate::rng::{self, Stream};
use crate::training::{label_permutation, EpochRecord, TrainLog};

pub const ENSEMBLE_MAGIC: &[u8; 4] = b"RKTE";
pub const ENSEMBLE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct SgtbConfig {
    pub num_trees: usize,
    pub lr_init: f64,
    /// Fraction of queries used to grow each tree.
    pub row_subsample: f64,
    /// Fraction of features tried at each node.
    pub feature_subsample_per_node: f64,
    pub max_leaves: usize,
    pub min_node_size: usize,
    pub rng_seed: u64,
}

impl Default for SgtbConfig {
    fn default() -> Self {
        SgtbConfig {
            num_trees: 300,
            lr_init: 0.1,
            row_subsample: 0.5,
            feature_subsample_per_node: 1.0 / 3.0,
            max_leaves: 512,
            min_node_size: 40,
            rng_seed: 0,
        }
    }
}

impl SgtbConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("row_subsample", self.row_subsample),
            ("feature_subsample_per_node", self.feature_subsample_per_node),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Validation(format!("{name} must lie in (0, 1], got {v}")));
            }
        }
        if self.max_leaves == 0 || self.min_node_size == 0 {
            return Err(Error::Validation("max_leaves and min_node_size must be >= 1".into()));
        }
        if !(self.lr_init > 0.0 && self.lr_init.is_finite()) {
            return Err(Error::Validation("lr_init must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf {
        value: f64,
    },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Binary regression tree stored as a preorder arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn leaf(value: f64) -> Self {
        RegressionTree {
            nodes: vec![Node::Leaf { value }],
        }
    }

    /// Depth-one tree.
    pub fn stump(feature: usize, threshold: f64, left: f64, right: f64) -> Self {
        RegressionTree {
            nodes: vec![
                Node::Split {
                    feature,
                    threshold,
                    left: 1,
                    right: 2,
                },
                Node::Leaf { value: left },
                Node::Leaf { value: right },
            ],
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn num_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    /// Index of the leaf `x` falls into.
    pub fn route(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    /// Number of `rows` that pass through each node (arena order).
    pub fn node_counts(&self, rows: &[&[f64]]) -> Vec<usize> {
        let mut counts = vec![0; self.nodes.len()];
        for x in rows {
            let mut i = 0;
            loop {
                counts[i] += 1;
                match self.nodes[i] {
                    Node::Leaf { .. } => break,
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => i = if x[feature] <= threshold { left } else { right },
                }
            }
        }
        counts
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        match self.nodes[self.route(x)] {
            Node::Leaf { value } => value,
            Node::Split { .. } => unreachable!(),
        }
    }

    fn max_feature(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .max()
    }

    /// Rebuilds the arena in preorder so that equal trees compare equal
    /// regardless of growth order.
    fn into_preorder(self) -> Self {
        fn visit(src: &[Node], i: usize, out: &mut Vec<Node>) -> usize {
            let at = out.len();
            match src[i] {
                Node::Leaf { value } => out.push(Node::Leaf { value }),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    out.push(Node::Leaf { value: 0.0 });
                    let l = visit(src, left, out);
                    let r = visit(src, right, out);
                    out[at] = Node::Split {
                        feature,
                        threshold,
                        left: l,
                        right: r,
                    };
                }
            }
            at
        }
        let mut out = Vec::with_capacity(self.nodes.len());
        visit(&self.nodes, 0, &mut out);
        RegressionTree { nodes: out }
    }
}

struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
    left: Vec<usize>,
    right: Vec<usize>,
}

struct Frontier {
    node: usize,
    candidate: Option<Candidate>,
}

fn mean(targets: &[f64], rows: &[usize]) -> f64 {
    rows.iter().map(|&r| targets[r]).sum::<f64>() / rows.len() as f64
}

/// Sum of squared deviations from the mean, computed around `shift` for
/// numerical stability.
fn sse(targets: &[f64], rows: &[usize], shift: f64) -> f64 {
    let (mut s, mut s2) = (0.0, 0.0);
    for &r in rows {
        let d = targets[r] - shift;
        s += d;
        s2 += d * d;
    }
    (s2 - s * s / rows.len() as f64).max(0.0)
}

fn best_split(
    features: &[&[f64]],
    targets: &[f64],
    rows: &[usize],
    config: &SgtbConfig,
    rng: &mut ChaCha8Rng,
) -> Option<Candidate> {
    if rows.len() < config.min_node_size {
        return None;
    }
    let first = targets[rows[0]];
    if rows.iter().all(|&r| targets[r] == first) {
        return None;
    }
    let p = features[rows[0]].len();
    let tries = ((p as f64 * config.feature_subsample_per_node).ceil() as usize).clamp(1, p);
    let shift = mean(targets, rows);
    let parent = sse(targets, rows, shift);

    let mut best: Option<Candidate> = None;
    for feature in index::sample(rng, p, tries).into_iter() {
        let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
            let v = features[r][feature];
            (lo.min(v), hi.max(v))
        });
        if !(lo < hi) {
            continue;
        }
        let threshold = rng.random_range(lo..hi);
        let (left, right): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&r| features[r][feature] <= threshold);
        if left.is_empty() || right.is_empty() {
            continue;
        }
        let gain = parent - sse(targets, &left, shift) - sse(targets, &right, shift);
        if gain > 0.0 && best.as_ref().is_none_or(|b| gain > b.gain) {
            best = Some(Candidate {
                feature,
                threshold,
                gain,
                left,
                right,
            });
        }
    }
    best
}

/// Grows one tree on `(features[i], targets[i])`.
pub fn grow_tree(
    features: &[&[f64]],
    targets: &[f64],
    config: &SgtbConfig,
    rng: &mut ChaCha8Rng,
) -> Result<RegressionTree> {
    if features.is_empty() || features.len() != targets.len() {
        return Err(Error::Validation(format!(
            "grow_tree needs matching nonempty rows ({} features, {} targets)",
            features.len(),
            targets.len()
        )));
    }
    let all: Vec<usize> = (0..features.len()).collect();
    let mut nodes = vec![Node::Leaf {
        value: mean(targets, &all),
    }];
    let mut frontier = vec![Frontier {
        node: 0,
        candidate: best_split(features, targets, &all, config, rng),
    }];
    let mut leaves = 1;

    while leaves < config.max_leaves {
        // Best gain first; ties go to the earliest-created node.
        let pick = frontier
            .iter()
            .enumerate()
            .filter_map(|(i, f)| f.candidate.as_ref().map(|c| (i, c.gain, f.node)))
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.2.cmp(&a.2)));
        let Some((slot, _, _)) = pick else { break };
        let entry = frontier.swap_remove(slot);
        let c = entry.candidate.expect("picked entries have candidates");

        let left_id = nodes.len();
        nodes.push(Node::Leaf {
            value: mean(targets, &c.left),
        });
        let right_id = nodes.len();
        nodes.push(Node::Leaf {
            value: mean(targets, &c.right),
        });
        nodes[entry.node] = Node::Split {
            feature: c.feature,
            threshold: c.threshold,
            left: left_id,
            right: right_id,
        };
        leaves += 1;
        let left_cand = best_split(features, targets, &c.left, config, rng);
        let right_cand = best_split(features, targets, &c.right, config, rng);
        frontier.push(Frontier {
            node: left_id,
            candidate: left_cand,
        });
        frontier.push(Frontier {
            node: right_id,
            candidate: right_cand,
        });
    }
    Ok(RegressionTree { nodes }.into_preorder())
}

/// Additive model `sum_t lr_t * tree_t(x)` with base score 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub feature_dim: usize,
    pub trees: Vec<(f64, RegressionTree)>,
}

impl Ensemble {
    pub fn new(feature_dim: usize) -> Self {
        Ensemble {
            feature_dim,
            trees: Vec::new(),
        }
    }

    pub fn push(&mut self, lr: f64, tree: RegressionTree) {
        self.trees.push((lr, tree));
    }

    pub fn learning_rates(&self) -> Vec<f64> {
        self.trees.iter().map(|(lr, _)| *lr).collect()
    }
}

pub fn predict_ensemble(ensemble: &Ensemble, x: &[f64]) -> Result<f64> {
    check_dim(ensemble.feature_dim, x.len())?;
    Ok(ensemble
        .trees
        .iter()
        .map(|(lr, t)| lr * t.predict(x))
        .sum())
}

impl Scorer for Ensemble {
    fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    fn score(&self, x: &[f64]) -> Result<f64> {
        predict_ensemble(self, x)
    }
}

/// Halves the rate for later trees whenever the loss goes up.
#[derive(Debug, Clone)]
pub struct HalveOnIncrease {
    lr: f64,
    prev: f64,
    halvings: usize,
}

impl HalveOnIncrease {
    pub fn new(lr_init: f64, initial_loss: f64) -> Self {
        HalveOnIncrease {
            lr: lr_init,
            prev: initial_loss,
            halvings: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn halvings(&self) -> usize {
        self.halvings
    }

    pub fn observe(&mut self, loss: f64) -> bool {
        let increased = loss > self.prev;
        if increased {
            self.lr *= 0.5;
            self.halvings += 1;
        }
        self.prev = loss;
        increased
    }
}

/// Outcome of boosting: the model and its loss trace. Record 0 holds the
/// loss of the empty ensemble; record `t` is the loss after tree `t` and the
/// learning rate that tree was added with.
#[derive(Debug, Clone)]
pub struct SgtbFit {
    pub ensemble: Ensemble,
    pub log: TrainLog,
    pub halvings: usize,
    /// Per tree, the number of training rows that reached each node.
    pub node_rows: Vec<Vec<usize>>,
}

fn corpus_loss(
    corpus: &Corpus,
    perms: &[Permutation],
    scores: &[Vec<f64>],
    kind: ChoiceModel,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let per_query: Vec<(f64, Vec<f64>)> = perms
        .par_iter()
        .zip(scores)
        .map(|(perm, s)| {
            let lg = loss_grad(kind, &perm.align(s));
            (lg.loss, lg.grad)
        })
        .collect();
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(per_query.len());
    for ((loss, grad), g) in per_query.into_iter().zip(&corpus.groups) {
        if !loss.is_finite() || grad.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite loss or gradient for query {}",
                g.query_id
            )));
        }
        total += loss;
        grads.push(grad);
    }
    Ok((total / corpus.groups.len() as f64, grads))
}

/// Boosts `config.num_trees` trees against the chosen listwise loss.
///
/// Ground-truth permutations are drawn once (ties shuffled by the seed) so
/// that successive losses are comparable.
pub fn fit_sgtb(corpus: &Corpus, loss_kind: ChoiceModel, config: &SgtbConfig) -> Result<SgtbFit> {
    config.validate()?;
    if corpus.groups.is_empty() {
        return Err(Error::Validation("cannot boost on an empty corpus".into()));
    }
    let mut tie_rng = rng::stream(config.rng_seed, Stream::TieBreak);
    let mut tree_rng = rng::stream(config.rng_seed, Stream::Trees);
    let perms: Vec<Permutation> = corpus
        .groups
        .iter()
        .map(|g| label_permutation(g, &mut tie_rng))
        .collect();
    let mut scores: Vec<Vec<f64>> = corpus.groups.iter().map(|g| vec![0.0; g.len()]).collect();

    let mut ensemble = Ensemble::new(corpus.feature_dim);
    let (mut loss, mut grads) = corpus_loss(corpus, &perms, &scores, loss_kind)?;
    let mut schedule = HalveOnIncrease::new(config.lr_init, loss);
    let mut log = TrainLog {
        records: vec![EpochRecord {
            epoch: 0,
            mean_loss: loss,
            lr: config.lr_init,
        }],
    };

    let mut node_rows = Vec::with_capacity(config.num_trees);
    let nq = corpus.groups.len();
    let take = ((nq as f64 * config.row_subsample).ceil() as usize).clamp(1, nq);
    for t in 1..=config.num_trees {
        let mut sampled = index::sample(&mut tree_rng, nq, take).into_vec();
        sampled.sort_unstable();

        let mut features: Vec<&[f64]> = Vec::new();
        let mut targets = Vec::new();
        for &q in &sampled {
            let group = &corpus.groups[q];
            for (rank, &item) in perms[q].as_slice().iter().enumerate() {
                features.push(&group.items[item].features);
                targets.push(-grads[q][rank]);
            }
        }
        let tree = grow_tree(&features, &targets, config, &mut tree_rng)?;
        node_rows.push(tree.node_counts(&features));
        let lr = schedule.lr();
        scores
            .par_iter_mut()
            .zip(&corpus.groups)
            .for_each(|(s, g)| {
                for (v, it) in s.iter_mut().zip(&g.items) {
                    *v += lr * tree.predict(&it.features);
                }
            });
        ensemble.push(lr, tree);

        (loss, grads) = corpus_loss(corpus, &perms, &scores, loss_kind)?;
        log.records.push(EpochRecord {
            epoch: t,
            mean_loss: loss,
            lr,
        });
        schedule.observe(loss);
    }
    Ok(SgtbFit {
        ensemble,
        log,
        halvings: schedule.halvings(),
        node_rows,
    })
}

/// Serializes as:
///
/// ```text
/// magic b"RKTE" | u32 version (= 1) | u64 feature_dim | u64 num_trees
/// per tree: f64 lr | u64 node_count | node_count x
///     { u8 is_leaf | u64 feature | f64 threshold | f64 value }   (preorder)
/// ```
///
/// Leaves store `feature = 0, threshold = 0`; splits store `value = 0`.
/// Everything is little-endian.
pub fn encode_ensemble(ensemble: &Ensemble) -> Vec<u8> {
    let mut w = ByteWriter(Vec::new());
    w.0.extend_from_slice(ENSEMBLE_MAGIC);
    w.u32(ENSEMBLE_FORMAT_VERSION);
    w.u64(ensemble.feature_dim as u64);
    w.u64(ensemble.trees.len() as u64);
    for (lr, tree) in &ensemble.trees {
        w.f64(*lr);
        w.u64(tree.nodes.len() as u64);
        for node in &tree.nodes {
            match *node {
                Node::Leaf { value } => {
                    w.u8(1);
                    w.u64(0);
                    w.f64(0.0);
                    w.f64(value);
                }
                Node::Split {
                    feature, threshold, ..
                } => {
                    w.u8(0);
                    w.u64(feature as u64);
                    w.f64(threshold);
                    w.f64(0.0);
                }
            }
        }
    }
    w.0
}

pub fn decode_ensemble(bytes: &[u8]) -> Result<Ensemble> {
    let mut r = ByteReader::new(bytes);
    r.magic(ENSEMBLE_MAGIC)?;
    let version = r.u32()?;
    if version != ENSEMBLE_FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported ensemble version {version}")));
    }
    let feature_dim = r.usize()?;
    let num_trees = r.usize()?;
    let mut ensemble = Ensemble::new(feature_dim);
    for _ in 0..num_trees {
        let lr = r.f64()?;
        let count = r.usize()?;
        let mut flat = Vec::new();
        for _ in 0..count {
            let is_leaf = r.u8()?;
            let feature = r.usize()?;
            let threshold = r.f64()?;
            let value = r.f64()?;
            flat.push((is_leaf, feature, threshold, value));
        }
        let tree = rebuild_preorder(&flat)?;
        if tree.max_feature().is_some_and(|f| f >= feature_dim) {
            return Err(Error::Format("split feature exceeds feature_dim".into()));
        }
        ensemble.push(lr, tree);
    }
    r.finish()?;
    Ok(ensemble)
}

fn rebuild_preorder(flat: &[(u8, usize, f64, f64)]) -> Result<RegressionTree> {
    fn build(flat: &[(u8, usize, f64, f64)], pos: &mut usize, out: &mut Vec<Node>, depth: usize) -> Result<usize> {
        let Some(&(is_leaf, feature, threshold, value)) = flat.get(*pos) else {
            return Err(Error::Format("preorder node list ends early".into()));
        };
        if depth > flat.len() {
            return Err(Error::Format("malformed preorder tree".into()));
        }
        *pos += 1;
        let at = out.len();
        match is_leaf {
            1 => out.push(Node::Leaf { value }),
            0 => {
                out.push(Node::Leaf { value: 0.0 });
                let left = build(flat, pos, out, depth + 1)?;
                let right = build(flat, pos, out, depth + 1)?;
                out[at] = Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                };
            }
            other => return Err(Error::Format(format!("bad is_leaf flag {other}"))),
        }
        Ok(at)
    }
    let mut pos = 0;
    let mut nodes = Vec::with_capacity(flat.len());
    build(flat, &mut pos, &mut nodes, 0)?;
    if pos != flat.len() {
        return Err(Error::Format("extra nodes after tree".into()));
    }
    Ok(RegressionTree { nodes })
}
