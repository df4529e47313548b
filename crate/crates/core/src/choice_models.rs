//! Sequential choice models over a ranked list.
//!
//! Scores passed to every function here are *aligned to rank positions*:
//! `scores[i]` is the rank-function value of the item placed at rank `i`
//! (rank 0 is the best). Two models are provided:
//!
//! * **Plackett-Luce** (forward selection): the item at rank `i` is picked
//!   from ranks `i..N` with probability proportional to `exp(f)`.
//! * **Choice by elimination** (backward): the item at rank `i` is removed
//!   from ranks `0..=i` with probability proportional to `exp(-f)`, starting
//!   from the worst rank.
//!
//! Both losses and their functional gradients are evaluated in O(N) using
//! running log-sum-exp recurrences, so scores in the tens do not overflow.

use itertools::Itertools;

use crate::error::{Error, Result};

/// Largest list size accepted by [`enumerate_permutation_dist`].
pub const MAX_ENUMERATION: usize = 8;

/// Which listwise likelihood to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChoiceModel {
    PlackettLuce,
    Elimination,
}

impl ChoiceModel {
    pub fn name(self) -> &'static str {
        match self {
            ChoiceModel::PlackettLuce => "plackett-luce",
            ChoiceModel::Elimination => "elimination",
        }
    }
}

impl std::str::FromStr for ChoiceModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "plackett-luce" | "pl" | "listmle" => Ok(ChoiceModel::PlackettLuce),
            "elimination" | "elim" => Ok(ChoiceModel::Elimination),
            other => Err(Error::Validation(format!("unknown loss kind {other:?}"))),
        }
    }
}

/// A ranking: `order[i]` is the index of the item at rank `i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    /// Checks that `order` is a bijection on `0..order.len()`.
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; order.len()];
        for &i in &order {
            if i >= order.len() || std::mem::replace(&mut seen[i], true) {
                return Err(Error::Validation(format!(
                    "{order:?} is not a permutation"
                )));
            }
        }
        Ok(Permutation(order))
    }

    pub fn identity(n: usize) -> Self {
        Permutation((0..n).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<usize> {
        self.0
    }

    /// Reorders per-item values into rank positions.
    pub fn align<T: Copy>(&self, per_item: &[T]) -> Vec<T> {
        self.0.iter().map(|&i| per_item[i]).collect()
    }
}

/// Loss and per-rank-position functional gradient for one list.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grad: Vec<f64>,
}

#[inline]
pub(crate) fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Stable `log(sum(exp(values)))`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Plackett-Luce negative log-likelihood
/// `sum_{i<N-1} [ -f_i + log sum_{j>=i} exp(f_j) ]` and its gradient.
pub fn pl_loss_grad(scores: &[f64]) -> LossGrad {
    let n = scores.len();
    if n == 0 {
        return LossGrad {
            loss: 0.0,
            grad: Vec::new(),
        };
    }
    // suffix[i] = log sum_{j>=i} exp(f_j)
    let mut suffix = vec![0.0; n];
    suffix[n - 1] = scores[n - 1];
    for i in (0..n - 1).rev() {
        suffix[i] = log_add_exp(scores[i], suffix[i + 1]);
    }
    let loss = (0..n - 1).map(|i| suffix[i] - scores[i]).sum();

    // grad_k = -[k < N-1] + sum_{i <= min(k, N-2)} exp(f_k - suffix_i)
    let mut grad = vec![0.0; n];
    let mut log_inv = f64::NEG_INFINITY;
    for k in 0..n {
        if k < n - 1 {
            log_inv = log_add_exp(log_inv, -suffix[k]);
            grad[k] = (scores[k] + log_inv).exp() - 1.0;
        } else {
            grad[k] = (scores[k] + log_inv).exp();
        }
    }
    LossGrad { loss, grad }
}

/// Choice-by-elimination negative log-likelihood
/// `sum_i [ f_i + log Z_i ]`, `Z_i = sum_{j<=i} exp(-f_j)`, and its gradient
/// `1 - exp(-f_k) * sum_{i>=k} 1/Z_i`.
pub fn elim_loss_grad(scores: &[f64]) -> LossGrad {
    let n = scores.len();
    // log_z[i] = log Z_i, built forward
    let mut log_z = Vec::with_capacity(n);
    let mut acc = f64::NEG_INFINITY;
    for &f in scores {
        acc = log_add_exp(acc, -f);
        log_z.push(acc);
    }
    let loss = scores.iter().zip(&log_z).map(|(f, lz)| f + lz).sum();

    // suffix of 1/Z in log space, built backward
    let mut grad = vec![0.0; n];
    let mut log_s = f64::NEG_INFINITY;
    for k in (0..n).rev() {
        log_s = log_add_exp(log_s, -log_z[k]);
        grad[k] = 1.0 - (log_s - scores[k]).exp();
    }
    LossGrad { loss, grad }
}

pub fn loss_grad(model: ChoiceModel, scores: &[f64]) -> LossGrad {
    match model {
        ChoiceModel::PlackettLuce => pl_loss_grad(scores),
        ChoiceModel::Elimination => elim_loss_grad(scores),
    }
}

/// Probability that `eliminate` is the next item removed from `remaining`.
///
/// # Panics
///
/// If `eliminate` is out of bounds.
pub fn elim_choice_prob(remaining: &[f64], eliminate: usize) -> f64 {
    assert!(
        eliminate < remaining.len(),
        "eliminate index {eliminate} out of range for {} items",
        remaining.len()
    );
    let neg: Vec<f64> = remaining.iter().map(|f| -f).collect();
    (neg[eliminate] - log_sum_exp(&neg)).exp()
}

/// `log P(pi)` as a sum of stage-wise log conditionals.
pub fn permutation_log_prob(model: ChoiceModel, aligned: &[f64]) -> f64 {
    let n = aligned.len();
    match model {
        ChoiceModel::PlackettLuce => (0..n)
            .map(|i| aligned[i] - log_sum_exp(&aligned[i..]))
            .sum(),
        ChoiceModel::Elimination => (0..n)
            .map(|i| {
                let neg: Vec<f64> = aligned[..=i].iter().map(|f| -f).collect();
                -aligned[i] - log_sum_exp(&neg)
            })
            .sum(),
    }
}

/// Probability of every ordering of `scores` (indexed by item), in
/// lexicographic order of the permutations.
pub fn enumerate_permutation_dist(
    model: ChoiceModel,
    scores: &[f64],
) -> Result<Vec<(Permutation, f64)>> {
    let n = scores.len();
    if n > MAX_ENUMERATION {
        return Err(Error::Guard(format!(
            "refusing to enumerate {n}! permutations (limit {MAX_ENUMERATION})"
        )));
    }
    Ok((0..n)
        .permutations(n)
        .map(|order| {
            let perm = Permutation(order);
            let lp = permutation_log_prob(model, &perm.align(scores));
            (perm, lp.exp())
        })
        .collect())
}

/// Quadratic-time literal evaluation of the elimination loss. Test oracle.
pub fn naive_elim_loss(scores: &[f64]) -> f64 {
    let mut loss = 0.0;
    for i in 0..scores.len() {
        let z: f64 = scores[..=i].iter().map(|f| (-f).exp()).sum();
        loss += scores[i] + z.ln();
    }
    loss
}
