//! Monte Carlo checks of the random-utility view of both choice models.
//!
//! * Gompertz utilities with shape `eta_j = exp(-f_j)`: the item with the
//!   smallest utility is eliminated with probability `softmax(-f)`, for any
//!   scale `b`.
//! * Gumbel utilities with location `f_j` and unit scale: the item with the
//!   largest utility is chosen with probability `softmax(f)`, and sorting the
//!   utilities reproduces the whole Plackett-Luce ranking distribution.
//!
//! Sampling is split over a fixed number of shards with independent streams,
//! so results do not depend on the thread count.

use std::fmt::Write as _;

use rand::distr::Open01;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::choice_models::{elim_choice_prob, enumerate_permutation_dist, log_sum_exp, ChoiceModel};
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

/// Acceptance band in standard errors.
pub const SIGMA_BAND: f64 = 4.0;
const SHARDS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GompertzParams {
    pub b: f64,
    pub eta: f64,
}

impl GompertzParams {
    pub fn new(b: f64, eta: f64) -> Result<Self> {
        if !(b > 0.0 && eta > 0.0 && b.is_finite() && eta.is_finite()) {
            return Err(Error::Validation(format!(
                "Gompertz needs b > 0 and eta > 0, got b={b}, eta={eta}"
            )));
        }
        Ok(GompertzParams { b, eta })
    }

    /// `F(u) = 1 - exp(-eta (e^{b u} - 1))` for `u >= 0`.
    pub fn cdf(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        -(-self.eta * (self.b * u).exp_m1()).exp_m1()
    }

    /// Inverse CDF at `uniform` in `[0, 1)`.
    pub fn quantile(&self, uniform: f64) -> f64 {
        (-(-uniform).ln_1p() / self.eta).ln_1p() / self.b
    }
}

pub fn sample_gompertz<R: Rng + ?Sized>(params: &GompertzParams, rng: &mut R) -> f64 {
    params.quantile(rng.random::<f64>())
}

#[derive(Debug, Clone, PartialEq)]
pub struct McItem {
    pub label: String,
    pub frequency: f64,
    pub probability: f64,
    pub std_error: f64,
}

impl McItem {
    pub fn within_band(&self) -> bool {
        (self.frequency - self.probability).abs() < SIGMA_BAND * self.std_error
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McReport {
    pub title: String,
    pub samples: usize,
    pub items: Vec<McItem>,
}

impl McReport {
    fn from_counts(title: String, samples: usize, labels: Vec<String>, counts: &[u64], probs: &[f64]) -> Self {
        let n = samples as f64;
        let items = labels
            .into_iter()
            .zip(counts.iter().zip(probs))
            .map(|(label, (&c, &p))| McItem {
                label,
                frequency: c as f64 / n,
                probability: p,
                std_error: (p * (1.0 - p) / n).sqrt(),
            })
            .collect();
        McReport {
            title,
            samples,
            items,
        }
    }

    pub fn passed(&self) -> bool {
        self.items.iter().all(McItem::within_band)
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} ({} samples)", self.title, self.samples);
        let _ = writeln!(
            out,
            "  {:<12} {:>10} {:>10} {:>10} {:>8}  result",
            "item", "empirical", "analytic", "std_err", "z"
        );
        for it in &self.items {
            let z = if it.std_error > 0.0 {
                (it.frequency - it.probability) / it.std_error
            } else {
                0.0
            };
            let _ = writeln!(
                out,
                "  {:<12} {:>10.6} {:>10.6} {:>10.2e} {:>8.3}  {}",
                it.label,
                it.frequency,
                it.probability,
                it.std_error,
                z,
                if it.within_band() { "ok" } else { "FAIL" }
            );
        }
        out
    }
}

/// Runs `body` over `samples` draws split across fixed shards and sums the
/// per-outcome counts.
fn sharded_counts<F>(samples: usize, outcomes: usize, seed: u64, body: F) -> Vec<u64>
where
    F: Fn(&mut ChaCha8Rng, &mut [u64]) + Sync,
{
    (0..SHARDS)
        .into_par_iter()
        .map(|shard| {
            let n = samples / SHARDS + usize::from(shard < samples % SHARDS);
            let mut rng = rng::substream(seed, Stream::MonteCarlo, &[shard as u64]);
            let mut counts = vec![0u64; outcomes];
            for _ in 0..n {
                body(&mut rng, &mut counts);
            }
            counts
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(vec![0u64; outcomes], |mut acc, c| {
            for (a, v) in acc.iter_mut().zip(c) {
                *a += v;
            }
            acc
        })
}

fn fmt_scores(scores: &[f64]) -> String {
    let parts: Vec<String> = scores.iter().map(|s| format!("{s:.3}")).collect();
    format!("[{}]", parts.join(", "))
}

fn item_labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("item {i}")).collect()
}

/// First-elimination frequencies under Gompertz utilities with
/// `eta_j = exp(-f_j)` against `softmax(-f)`.
pub fn mc_elimination_check(scores: &[f64], samples: usize, b: f64, seed: u64) -> Result<McReport> {
    if scores.len() < 2 || samples == 0 {
        return Err(Error::Validation("need at least 2 items and 1 sample".into()));
    }
    let params: Vec<GompertzParams> = scores
        .iter()
        .map(|f| GompertzParams::new(b, (-f).exp()))
        .collect::<Result<_>>()?;
    let counts = sharded_counts(samples, scores.len(), seed, |rng, counts| {
        let mut best = 0;
        let mut best_u = f64::INFINITY;
        for (j, p) in params.iter().enumerate() {
            let u = sample_gompertz(p, rng);
            // strict comparison: ties go to the lower index
            if u < best_u {
                best_u = u;
                best = j;
            }
        }
        counts[best] += 1;
    });
    let probs: Vec<f64> = (0..scores.len()).map(|i| elim_choice_prob(scores, i)).collect();
    Ok(McReport::from_counts(
        format!("gompertz elimination f={} b={b}", fmt_scores(scores)),
        samples,
        item_labels(scores.len()),
        &counts,
        &probs,
    ))
}

fn gumbel<R: Rng + ?Sized>(location: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.sample(Open01);
    location - (-u.ln()).ln()
}

/// First-choice frequencies under Gumbel utilities against `softmax(f)`.
pub fn mc_gumbel_pl_check(scores: &[f64], samples: usize, seed: u64) -> Result<McReport> {
    if scores.len() < 2 || samples == 0 {
        return Err(Error::Validation("need at least 2 items and 1 sample".into()));
    }
    let counts = sharded_counts(samples, scores.len(), seed, |rng, counts| {
        let mut best = 0;
        let mut best_u = f64::NEG_INFINITY;
        for (j, &f) in scores.iter().enumerate() {
            let u = gumbel(f, rng);
            if u > best_u {
                best_u = u;
                best = j;
            }
        }
        counts[best] += 1;
    });
    let lse = log_sum_exp(scores);
    let probs: Vec<f64> = scores.iter().map(|f| (f - lse).exp()).collect();
    Ok(McReport::from_counts(
        format!("gumbel first choice f={}", fmt_scores(scores)),
        samples,
        item_labels(scores.len()),
        &counts,
        &probs,
    ))
}

/// Frequencies of complete orderings obtained by sorting Gumbel utilities,
/// against the Plackett-Luce enumeration.
pub fn mc_gumbel_ordering_check(scores: &[f64], samples: usize, seed: u64) -> Result<McReport> {
    if scores.len() < 2 || scores.len() > 5 || samples == 0 {
        return Err(Error::Validation("full-ordering check supports 2..=5 items".into()));
    }
    let dist = enumerate_permutation_dist(ChoiceModel::PlackettLuce, scores)?;
    let n = scores.len();
    let code = |order: &[usize]| order.iter().fold(0usize, |acc, &i| acc * n + i);
    let mut slot = vec![usize::MAX; n.pow(n as u32)];
    for (i, (perm, _)) in dist.iter().enumerate() {
        slot[code(perm.as_slice())] = i;
    }
    let counts = sharded_counts(samples, dist.len(), seed, |rng, counts| {
        let u: Vec<f64> = scores.iter().map(|&f| gumbel(f, rng)).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| u[b].total_cmp(&u[a]).then(a.cmp(&b)));
        counts[slot[code(&order)]] += 1;
    });
    let labels = dist
        .iter()
        .map(|(p, _)| {
            p.as_slice()
                .iter()
                .map(|i| i.to_string())
                .collect::<Vec<_>>()
                .join("")
        })
        .collect();
    let probs: Vec<f64> = dist.iter().map(|(_, p)| *p).collect();
    Ok(McReport::from_counts(
        format!("gumbel full ordering f={}", fmt_scores(scores)),
        samples,
        labels,
        &counts,
        &probs,
    ))
}

/// Pairwise check that elimination frequencies agree across scales:
/// `|f_a - f_b| < 4 * sqrt(se_a^2 + se_b^2)` for every item and pair.
pub fn scale_invariance(reports: &[McReport]) -> bool {
    for (i, a) in reports.iter().enumerate() {
        for b in &reports[i + 1..] {
            for (x, y) in a.items.iter().zip(&b.items) {
                let se = (x.std_error.powi(2) + y.std_error.powi(2)).sqrt();
                if (x.frequency - y.frequency).abs() >= SIGMA_BAND * se {
                    return false;
                }
            }
        }
    }
    true
}

/// Full set of checks run by the `validate-rut` command.
#[derive(Debug, Clone)]
pub struct RutSuite {
    pub reports: Vec<McReport>,
    /// `(description, passed)` for each scale-invariance group.
    pub invariance: Vec<(String, bool)>,
}

impl RutSuite {
    pub fn passed(&self) -> bool {
        self.reports.iter().all(McReport::passed) && self.invariance.iter().all(|(_, ok)| *ok)
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        for r in &self.reports {
            out.push_str(&r.to_table());
            out.push('\n');
        }
        for (name, ok) in &self.invariance {
            let _ = writeln!(out, "scale invariance {name}: {}", if *ok { "ok" } else { "FAIL" });
        }
        let _ = writeln!(out, "overall: {}", if self.passed() { "PASS" } else { "FAIL" });
        out
    }
}

pub const SCALES: [f64; 3] = [0.5, 1.0, 2.0];

/// Score vectors checked by [`validation_suite`]: two fixed cases followed by
/// `random` vectors with 2..=5 entries in `[-2, 2]`.
pub fn suite_instances(random: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng::substream(seed, Stream::MonteCarlo, &[u64::MAX]);
    let mut out = vec![vec![0.0, 0.0], vec![0.0, std::f64::consts::LN_2]];
    for _ in 0..random {
        let n = rng.random_range(2..=5);
        out.push((0..n).map(|_| rng.random_range(-2.0..=2.0)).collect());
    }
    out
}

pub fn validation_suite(samples: usize, random_instances: usize, seed: u64) -> Result<RutSuite> {
    let mut reports = Vec::new();
    let mut invariance = Vec::new();
    let mut stream_id = 0u64;
    let mut next_seed = || {
        stream_id += 1;
        seed.wrapping_add(stream_id.wrapping_mul(0x9E37_79B9_7F4A_7C15))
    };
    for scores in suite_instances(random_instances, seed) {
        let per_scale: Vec<McReport> = SCALES
            .iter()
            .map(|&b| mc_elimination_check(&scores, samples, b, next_seed()))
            .collect::<Result<_>>()?;
        invariance.push((fmt_scores(&scores), scale_invariance(&per_scale)));
        reports.extend(per_scale);
    }
    reports.push(mc_gumbel_pl_check(&[0.0, 0.0, 0.0], samples, next_seed())?);
    reports.push(mc_gumbel_pl_check(&[0.0, 3f64.ln()], samples, next_seed())?);
    reports.push(mc_gumbel_ordering_check(&[0.5, -0.3, 1.2], samples, next_seed())?);
    Ok(RutSuite { reports, invariance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn quantile_at_zero_and_inverse() {
        let g = GompertzParams::new(1.3, 0.7).unwrap();
        assert_eq!(g.quantile(0.0), 0.0);
        for u in [0.1, 0.5, 0.9, 0.999] {
            assert!((g.cdf(g.quantile(u)) - u).abs() < 1e-12);
        }
        assert!(GompertzParams::new(0.0, 1.0).is_err());
        assert!(GompertzParams::new(1.0, -1.0).is_err());
    }

    #[test]
    fn empirical_cdf_matches() {
        let g = GompertzParams::new(1.0, 1.0).unwrap();
        let n = 1_000_000;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let draws: Vec<f64> = (0..n).map(|_| sample_gompertz(&g, &mut rng)).collect();
        for u in [0.1, 0.5, 1.0] {
            let f = g.cdf(u);
            let emp = draws.iter().filter(|&&d| d <= u).count() as f64 / n as f64;
            assert!((emp - f).abs() < 3.0 * (f * (1.0 - f) / n as f64).sqrt(), "u={u}");
        }
    }

    #[test]
    fn larger_eta_is_stochastically_smaller() {
        let median = |eta: f64| {
            let g = GompertzParams::new(1.0, eta).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let mut d: Vec<f64> = (0..100_000).map(|_| sample_gompertz(&g, &mut rng)).collect();
            d.sort_by(f64::total_cmp);
            d[d.len() / 2]
        };
        assert!(median(4.0) < median(1.0));
    }

    #[test]
    fn elimination_examples() {
        let r = mc_elimination_check(&[0.0, 0.0], 1_000_000, 1.0, 1).unwrap();
        assert!(r.passed());
        assert!(r.items.iter().all(|it| (it.frequency - 0.5).abs() < 0.002));
        let r = mc_elimination_check(&[0.0, std::f64::consts::LN_2], 1_000_000, 1.0, 2).unwrap();
        assert!((r.items[0].probability - 2.0 / 3.0).abs() < 1e-15);
        assert!(r.passed(), "{}", r.to_table());
        let total: f64 = r.items.iter().map(|i| i.frequency).sum();
        assert!((total - 1.0).abs() <= 1.0 / r.samples as f64);
    }

    #[test]
    fn gumbel_examples() {
        let r = mc_gumbel_pl_check(&[0.0, 0.0, 0.0], 300_000, 5).unwrap();
        assert!(r.passed(), "{}", r.to_table());
        let r = mc_gumbel_pl_check(&[0.0, 3f64.ln()], 300_000, 6).unwrap();
        assert!((r.items[1].probability - 0.75).abs() < 1e-15);
        assert!(r.passed(), "{}", r.to_table());
    }

    #[test]
    fn ordering_check_is_sensitive() {
        // Sampling from the wrong model must fail: tilt the analytic side.
        let mut r = mc_gumbel_ordering_check(&[0.5, -0.3, 1.2], 200_000, 9).unwrap();
        assert!(r.passed(), "{}", r.to_table());
        r.items[0].probability += 0.02;
        assert!(!r.passed());
    }

    #[test]
    fn input_validation() {
        assert!(mc_elimination_check(&[1.0], 10, 1.0, 0).is_err());
        assert!(mc_gumbel_pl_check(&[1.0], 10, 0).is_err());
    }
}
