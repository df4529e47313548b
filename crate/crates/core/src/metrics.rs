//! Ranking quality metrics: NDCG@T and expected reciprocal rank.
//!
//! Every function takes relevance grades *in predicted order* (position 0 is
//! the top of the list).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};

#[inline]
fn gain(grade: u8) -> f64 {
    (1u32 << grade) as f64 - 1.0
}

fn dcg(grades: &[u8], cutoff: usize) -> f64 {
    grades
        .iter()
        .take(cutoff)
        .enumerate()
        .map(|(i, &g)| gain(g) / ((i + 2) as f64).log2())
        .sum()
}

/// NDCG truncated at `cutoff`, normalized by the ideal DCG at the same
/// cutoff. Lists with no relevant item score `0`.
pub fn ndcg_at(ranked: &[u8], cutoff: usize) -> f64 {
    let mut ideal = ranked.to_vec();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let best = dcg(&ideal, cutoff);
    if best == 0.0 {
        return 0.0;
    }
    dcg(ranked, cutoff) / best
}

/// Stop probability of the cascade model for a grade: `(2^g - 1) / 16`.
#[inline]
pub fn err_stop_prob(grade: u8) -> f64 {
    gain(grade) / 16.0
}

/// Expected reciprocal rank under the cascade model. Each position is
/// discounted by the probability that the user did not stop at any position
/// ranked above it.
pub fn err(ranked: &[u8]) -> f64 {
    let mut not_stopped = 1.0;
    let mut total = 0.0;
    for (i, &g) in ranked.iter().enumerate() {
        let r = err_stop_prob(g);
        total += not_stopped * r / (i + 1) as f64;
        not_stopped *= 1.0 - r;
    }
    total
}

/// Kendall rank correlation (tau-a) between two score vectors.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    if n < 2 {
        return 1.0;
    }
    let mut s = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            let x = (a[i] - a[j]).signum() * (b[i] - b[j]).signum();
            s += x as i64;
        }
    }
    s as f64 / (n * (n - 1) / 2) as f64
}

/// One requested metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    Ndcg(usize),
    Err,
}

impl Metric {
    pub fn evaluate(self, ranked: &[u8]) -> f64 {
        match self {
            Metric::Ndcg(t) => ndcg_at(ranked, t),
            Metric::Err => err(ranked),
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Metric::Ndcg(t) => write!(f, "ndcg@{t}"),
            Metric::Err => write!(f, "err"),
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "err" {
            return Ok(Metric::Err);
        }
        if let Some(t) = s.strip_prefix("ndcg@") {
            if let Ok(t) = t.parse::<usize>() {
                if t >= 1 {
                    return Ok(Metric::Ndcg(t));
                }
            }
        }
        Err(Error::Validation(format!(
            "unknown metric {s:?} (expected err or ndcg@T with T >= 1)"
        )))
    }
}

/// Comma-separated metric list, e.g. `ndcg@1,ndcg@5,err`.
pub fn parse_metric_list(s: &str) -> Result<Vec<Metric>> {
    let list: Vec<Metric> = s
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    if list.is_empty() {
        return Err(Error::Validation("empty metric list".into()));
    }
    Ok(list)
}

/// Averages over queries plus the per-query breakdown.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub metrics: Vec<Metric>,
    /// `means[m]` is the average of `per_query[*].1[m]`.
    pub means: Vec<f64>,
    pub per_query: Vec<(String, Vec<f64>)>,
}

impl MetricReport {
    /// Builds a report from `(query id, grades in predicted order)` lists.
    pub fn from_rankings<'a, I>(metrics: &[Metric], rankings: I) -> Self
    where
        I: IntoIterator<Item = (&'a str, Vec<u8>)>,
    {
        let per_query: Vec<(String, Vec<f64>)> = rankings
            .into_iter()
            .map(|(qid, ranked)| {
                let vals = metrics.iter().map(|m| m.evaluate(&ranked)).collect();
                (qid.to_string(), vals)
            })
            .collect();
        let n = per_query.len().max(1) as f64;
        let means = (0..metrics.len())
            .map(|m| per_query.iter().map(|(_, v)| v[m]).sum::<f64>() / n)
            .collect();
        MetricReport {
            metrics: metrics.to_vec(),
            means,
            per_query,
        }
    }

    pub fn mean(&self, metric: Metric) -> Option<f64> {
        self.metrics
            .iter()
            .position(|&m| m == metric)
            .map(|i| self.means[i])
    }

    /// Fixed-width table of averaged values.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<10} {:>10}", "metric", "mean");
        for (m, v) in self.metrics.iter().zip(&self.means) {
            let _ = writeln!(out, "{:<10} {:>10.6}", m.to_string(), v);
        }
        let _ = writeln!(out, "{:<10} {:>10}", "queries", self.per_query.len());
        out
    }

    /// `key=value` lines: `queries=<n>`, `mean.<metric>=<v>` and
    /// `query.<qid>.<metric>=<v>`, values with 17 significant digits.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "queries={}", self.per_query.len());
        for (m, v) in self.metrics.iter().zip(&self.means) {
            let _ = writeln!(out, "mean.{m}={v:.16e}");
        }
        for (qid, vals) in &self.per_query {
            for (m, v) in self.metrics.iter().zip(vals) {
                let _ = writeln!(out, "query.{qid}.{m}={v:.16e}");
            }
        }
        out
    }

    /// Parses the averaged values back out of [`MetricReport::to_kv`] output.
    pub fn means_from_kv(text: &str) -> Result<BTreeMap<String, f64>> {
        let mut out = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if let Some(rest) = line.strip_prefix("mean.") {
                let (k, v) = rest.split_once('=').ok_or_else(|| Error::Parse {
                    line: i + 1,
                    message: "expected key=value".into(),
                })?;
                let v: f64 = v.parse().map_err(|_| Error::Parse {
                    line: i + 1,
                    message: format!("bad value {v:?}"),
                })?;
                out.insert(k.to_string(), v);
            }
        }
        Ok(out)
    }
}
