//! LETOR / svmlight ranking files, z-score normalization and synthetic corpora.
//!
//! A line looks like `<grade> qid:<id> <fid>:<val> ... # comment`. Feature ids
//! are one-based in the file and become zero-based dense indices in memory;
//! ids that do not appear on a line are filled with `0.0`. Lines with the
//! same qid must form one contiguous block.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{self, Stream};

/// Highest relevance grade accepted.
pub const MAX_GRADE: u8 = 4;

/// Floor applied to per-feature standard deviations.
pub const STD_FLOOR: f64 = 1e-8;

/// One query-document pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Item {
    pub features: Vec<f64>,
    pub relevance: u8,
}

/// All items returned for one query, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryGroup {
    pub query_id: String,
    pub items: Vec<Item>,
}

impl QueryGroup {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn relevances(&self) -> Vec<u8> {
        self.items.iter().map(|it| it.relevance).collect()
    }
}

/// Per-feature mean and (floored) population standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Tab-separated `index mean std` lines, one per feature.
    pub fn to_text(&self) -> String {
        let mut out = String::from("feature\tmean\tstd\n");
        for (i, (m, s)) in self.mean.iter().zip(&self.std).enumerate() {
            let _ = writeln!(out, "{}\t{:.16e}\t{:.16e}", i + 1, m, s);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut mean = Vec::new();
        let mut std = Vec::new();
        for (lineno, line) in text.lines().enumerate().skip(1) {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let bad = || Error::Parse {
                line: lineno + 1,
                message: format!("expected `index<TAB>mean<TAB>std`, got {line:?}"),
            };
            if cols.len() != 3 {
                return Err(bad());
            }
            let m: f64 = cols[1].parse().map_err(|_| bad())?;
            let s: f64 = cols[2].parse().map_err(|_| bad())?;
            if !(m.is_finite() && s.is_finite() && s > 0.0) {
                return Err(bad());
            }
            mean.push(m);
            std.push(s);
        }
        Ok(NormStats { mean, std })
    }
}

/// A set of query groups sharing one feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub groups: Vec<QueryGroup>,
    pub feature_dim: usize,
    pub norm_stats: Option<NormStats>,
}

impl Corpus {
    pub fn num_items(&self) -> usize {
        self.groups.iter().map(QueryGroup::len).sum()
    }

    pub fn items(&self) -> impl Iterator<Item = &Item> {
        self.groups.iter().flat_map(|g| g.items.iter())
    }

    /// Serialize in LETOR format: feature ids ascending, zero values omitted,
    /// 17 significant digits per value.
    pub fn to_letor(&self) -> String {
        let mut out = String::new();
        for g in &self.groups {
            for it in &g.items {
                let _ = write!(out, "{} qid:{}", it.relevance, g.query_id);
                for (i, &v) in it.features.iter().enumerate() {
                    if v != 0.0 {
                        let _ = write!(out, " {}:{:.16e}", i + 1, v);
                    }
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn write_letor<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_letor().as_bytes())?;
        Ok(())
    }
}

struct ParsedLine {
    grade: u8,
    qid: String,
    features: Vec<(usize, f64)>,
}

fn parse_line(line: &str, lineno: usize) -> Result<Option<ParsedLine>> {
    let body = match line.find('#') {
        Some(pos) => &line[..pos],
        None => line,
    };
    let mut tokens = body.split_whitespace();
    let Some(grade_tok) = tokens.next() else {
        return Ok(None);
    };
    let perr = |message: String| Error::Parse { line: lineno, message };

    let grade: i64 = grade_tok
        .parse()
        .map_err(|_| perr(format!("invalid relevance grade {grade_tok:?}")))?;
    if !(0..=MAX_GRADE as i64).contains(&grade) {
        return Err(Error::Validation(format!(
            "line {lineno}: relevance grade {grade} outside 0..={MAX_GRADE}"
        )));
    }

    let qid_tok = tokens
        .next()
        .ok_or_else(|| perr("missing qid".to_string()))?;
    let qid = qid_tok
        .strip_prefix("qid:")
        .filter(|q| !q.is_empty())
        .ok_or_else(|| perr(format!("expected qid:<id>, got {qid_tok:?}")))?;

    let mut features = Vec::new();
    let mut last_fid = 0usize;
    for tok in tokens {
        let (fid, val) = tok
            .split_once(':')
            .ok_or_else(|| perr(format!("expected <fid>:<val>, got {tok:?}")))?;
        let fid: usize = fid
            .parse()
            .map_err(|_| perr(format!("invalid feature id in {tok:?}")))?;
        if fid == 0 {
            return Err(perr("feature ids are one-based".to_string()));
        }
        if fid <= last_fid {
            return Err(perr(format!(
                "feature ids must be strictly increasing ({fid} after {last_fid})"
            )));
        }
        let val: f64 = val
            .parse()
            .map_err(|_| perr(format!("invalid feature value in {tok:?}")))?;
        if !val.is_finite() {
            return Err(perr(format!("non-finite feature value in {tok:?}")));
        }
        last_fid = fid;
        features.push((fid - 1, val));
    }

    Ok(Some(ParsedLine {
        grade: grade as u8,
        qid: qid.to_string(),
        features,
    }))
}

/// Parse a LETOR stream.
///
/// When `feature_dim` is `None` the dimension is the largest feature id seen.
/// When it is given, any larger id is a validation error.
pub fn parse_letor<R: BufRead>(reader: R, feature_dim: Option<usize>) -> Result<Corpus> {
    let mut rows: Vec<ParsedLine> = Vec::new();
    let mut line_numbers = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if let Some(parsed) = parse_line(&line, idx + 1)? {
            rows.push(parsed);
            line_numbers.push(idx + 1);
        }
    }

    let max_fid = rows
        .iter()
        .filter_map(|r| r.features.last().map(|&(i, _)| i + 1))
        .max()
        .unwrap_or(0);
    let dim = match feature_dim {
        Some(p) => {
            if max_fid > p {
                let (row, lineno) = rows
                    .iter()
                    .zip(&line_numbers)
                    .find(|(r, _)| r.features.last().is_some_and(|&(i, _)| i + 1 > p))
                    .expect("some row exceeds p");
                return Err(Error::Validation(format!(
                    "line {lineno}: feature id {} exceeds declared dimension {p}",
                    row.features.last().unwrap().0 + 1
                )));
            }
            p
        }
        None => max_fid,
    };

    let mut groups: Vec<QueryGroup> = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (row, &lineno) in rows.into_iter().zip(&line_numbers) {
        let mut features = vec![0.0; dim];
        for (i, v) in row.features {
            features[i] = v;
        }
        let item = Item {
            features,
            relevance: row.grade,
        };
        match groups.last_mut() {
            Some(g) if g.query_id == row.qid => g.items.push(item),
            _ => {
                if !seen.insert(row.qid.clone()) {
                    return Err(Error::Parse {
                        line: lineno,
                        message: format!("non-contiguous qid blocks: qid {} reappears", row.qid),
                    });
                }
                groups.push(QueryGroup {
                    query_id: row.qid,
                    items: vec![item],
                });
            }
        }
    }

    Ok(Corpus {
        groups,
        feature_dim: dim,
        norm_stats: None,
    })
}

/// Per-feature mean and population standard deviation over every item of
/// every query in `corpus`.
pub fn fit_normalization(corpus: &Corpus) -> Result<NormStats> {
    let n = corpus.num_items();
    if n == 0 {
        return Err(Error::Validation(
            "cannot fit normalization on an empty corpus".into(),
        ));
    }
    let p = corpus.feature_dim;
    let mut mean = vec![0.0; p];
    for it in corpus.items() {
        for (m, v) in mean.iter_mut().zip(&it.features) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut var = vec![0.0; p];
    for it in corpus.items() {
        for ((s, v), m) in var.iter_mut().zip(&it.features).zip(&mean) {
            let d = v - m;
            *s += d * d;
        }
    }
    let std = var
        .into_iter()
        .map(|s| (s / n as f64).sqrt().max(STD_FLOOR))
        .collect();
    Ok(NormStats { mean, std })
}

/// Map every value to `(v - mean) / std` using `stats`, which should come
/// from the training corpus.
pub fn apply_normalization(corpus: &Corpus, stats: &NormStats) -> Result<Corpus> {
    if stats.dim() != corpus.feature_dim || stats.std.len() != stats.mean.len() {
        return Err(Error::Validation(format!(
            "normalization stats have dimension {}, corpus has {}",
            stats.dim(),
            corpus.feature_dim
        )));
    }
    let groups = corpus
        .groups
        .iter()
        .map(|g| QueryGroup {
            query_id: g.query_id.clone(),
            items: g
                .items
                .iter()
                .map(|it| Item {
                    features: it
                        .features
                        .iter()
                        .zip(stats.mean.iter().zip(&stats.std))
                        .map(|(v, (m, s))| (v - m) / s)
                        .collect(),
                    relevance: it.relevance,
                })
                .collect(),
        })
        .collect();
    Ok(Corpus {
        groups,
        feature_dim: corpus.feature_dim,
        norm_stats: Some(stats.clone()),
    })
}

/// Parameters for a synthetic corpus with a known linear scoring rule.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub num_queries: usize,
    pub items_per_query: usize,
    pub feature_dim: usize,
    pub true_weights: Vec<f64>,
    pub noise_std: f64,
    pub rng_seed: u64,
}

impl SyntheticSpec {
    /// Spec with ground-truth weights drawn i.i.d. standard normal from the
    /// seed's weight stream.
    pub fn with_random_weights(
        num_queries: usize,
        items_per_query: usize,
        feature_dim: usize,
        noise_std: f64,
        rng_seed: u64,
    ) -> Self {
        let mut rng = rng::stream(rng_seed, Stream::SynthWeights);
        let true_weights = (0..feature_dim)
            .map(|_| rng.sample(StandardNormal))
            .collect();
        SyntheticSpec {
            num_queries,
            items_per_query,
            feature_dim,
            true_weights,
            noise_std,
            rng_seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.items_per_query == 0 || self.feature_dim == 0 {
            return Err(Error::Validation(
                "synthetic spec needs items_per_query >= 1 and feature_dim >= 1".into(),
            ));
        }
        if self.true_weights.len() != self.feature_dim {
            return Err(Error::Validation(format!(
                "true_weights has length {}, feature_dim is {}",
                self.true_weights.len(),
                self.feature_dim
            )));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::Validation("noise_std must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Inner product helper shared by the synthetic generator and tests.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Draw a corpus whose grades are per-query quintile buckets of
/// `<true_weights, x> + noise`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(Corpus, Vec<f64>)> {
    spec.validate()?;
    let mut rng = rng::stream(spec.rng_seed, Stream::SynthFeatures);
    let n = spec.items_per_query;
    let buckets = MAX_GRADE as usize + 1;
    let mut groups = Vec::with_capacity(spec.num_queries);
    for q in 0..spec.num_queries {
        let mut items = Vec::with_capacity(n);
        let mut latent = Vec::with_capacity(n);
        for _ in 0..n {
            let features: Vec<f64> = (0..spec.feature_dim)
                .map(|_| rng.sample(StandardNormal))
                .collect();
            let noise: f64 = rng.sample(StandardNormal);
            latent.push(dot(&spec.true_weights, &features) + spec.noise_std * noise);
            items.push(Item {
                features,
                relevance: 0,
            });
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| latent[a].total_cmp(&latent[b]).then(a.cmp(&b)));
        for (rank, &idx) in order.iter().enumerate() {
            items[idx].relevance = (rank * buckets / n) as u8;
        }
        groups.push(QueryGroup {
            query_id: (q + 1).to_string(),
            items,
        });
    }
    Ok((
        Corpus {
            groups,
            feature_dim: spec.feature_dim,
            norm_stats: None,
        },
        spec.true_weights.clone(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, p: Option<usize>) -> Result<Corpus> {
        parse_letor(text.as_bytes(), p)
    }

    #[test]
    fn single_line_maps_fields() {
        let c = parse("2 qid:7 1:0.5 3:1.0", Some(3)).unwrap();
        assert_eq!(c.groups.len(), 1);
        assert_eq!(c.groups[0].query_id, "7");
        assert_eq!(c.groups[0].items[0].relevance, 2);
        assert_eq!(c.groups[0].items[0].features, vec![0.5, 0.0, 1.0]);
    }

    #[test]
    fn empty_stream_gives_empty_corpus() {
        let c = parse("", None).unwrap();
        assert!(c.groups.is_empty());
        assert_eq!(c.feature_dim, 0);
    }

    #[test]
    fn comments_and_blank_lines_skipped() {
        let c = parse("# header\n\n1 qid:a 2:3 # doc=xyz\n0 qid:a 1:1\n", None).unwrap();
        assert_eq!(c.feature_dim, 2);
        assert_eq!(c.groups[0].items.len(), 2);
        assert_eq!(c.groups[0].items[0].features, vec![0.0, 3.0]);
    }

    #[test]
    fn non_contiguous_qids_rejected() {
        let err = parse("1 qid:1 1:0\n0 qid:2 1:0\n2 qid:1 1:1\n", None).unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("non-contiguous"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_lines_carry_line_numbers() {
        for (text, want) in [
            ("1 qid:1 1:0\nx qid:1 1:0", 2),
            ("1 qid:1 1:0\n1 q:1 1:0", 2),
            ("1 qid:1 2:0 1:0", 1),
            ("1 qid:1 1:abc", 1),
            ("1 qid:1 1", 1),
        ] {
            match parse(text, None) {
                Err(Error::Parse { line, .. }) => assert_eq!(line, want, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn grade_and_dimension_validation() {
        assert!(matches!(
            parse("5 qid:1 1:0", None),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            parse("1 qid:1 4:0.2", Some(3)),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn fit_single_item_floors_std() {
        let c = parse("0 qid:1 1:2 2:4", None).unwrap();
        let s = fit_normalization(&c).unwrap();
        assert_eq!(s.mean, vec![2.0, 4.0]);
        assert_eq!(s.std, vec![STD_FLOOR, STD_FLOOR]);
    }

    #[test]
    fn fit_population_std() {
        let c = parse("0 qid:1\n1 qid:1 1:2", Some(2)).unwrap();
        let s = fit_normalization(&c).unwrap();
        assert_eq!(s.mean, vec![1.0, 0.0]);
        assert_eq!(s.std, vec![1.0, STD_FLOOR]);
    }

    #[test]
    fn fit_empty_corpus_errors() {
        let c = parse("", None).unwrap();
        assert!(fit_normalization(&c).is_err());
    }

    #[test]
    fn apply_definition_and_constant_feature() {
        let c = parse("0 qid:1 1:3 2:5\n1 qid:1 1:3 2:5", None).unwrap();
        let stats = NormStats {
            mean: vec![1.0, 5.0],
            std: vec![2.0, STD_FLOOR],
        };
        let n = apply_normalization(&c, &stats).unwrap();
        assert_eq!(n.groups[0].items[0].features, vec![1.0, 0.0]);

        let own = fit_normalization(&c).unwrap();
        let n = apply_normalization(&c, &own).unwrap();
        assert!(n.items().all(|it| it.features.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn apply_dimension_mismatch() {
        let c = parse("0 qid:1 1:3 2:5", None).unwrap();
        let stats = NormStats {
            mean: vec![0.0],
            std: vec![1.0],
        };
        assert!(matches!(
            apply_normalization(&c, &stats),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn fit_apply_fit_round_trip() {
        let spec = SyntheticSpec::with_random_weights(10, 7, 4, 0.5, 3);
        let (c, _) = generate_synthetic(&spec).unwrap();
        let stats = fit_normalization(&c).unwrap();
        let n = apply_normalization(&c, &stats).unwrap();
        let again = fit_normalization(&n).unwrap();
        for (m, s) in again.mean.iter().zip(&again.std) {
            assert!(m.abs() < 1e-9);
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn synthetic_counts_and_determinism() {
        let spec = SyntheticSpec::with_random_weights(100, 20, 10, 0.3, 11);
        let (a, w) = generate_synthetic(&spec).unwrap();
        let (b, _) = generate_synthetic(&spec).unwrap();
        assert_eq!(a.num_items(), 2000);
        assert_eq!(w.len(), 10);
        assert_eq!(a, b);
    }

    #[test]
    fn noiseless_synthetic_grades_follow_latent_order() {
        let spec = SyntheticSpec::with_random_weights(30, 5, 6, 0.0, 5);
        let (c, w) = generate_synthetic(&spec).unwrap();
        for g in &c.groups {
            let mut grades: Vec<(f64, u8)> = g
                .items
                .iter()
                .map(|it| (dot(&w, &it.features), it.relevance))
                .collect();
            grades.sort_by(|a, b| a.0.total_cmp(&b.0));
            let seq: Vec<u8> = grades.iter().map(|x| x.1).collect();
            assert_eq!(seq, vec![0, 1, 2, 3, 4]);
        }
    }

    #[test]
    fn norm_stats_text_round_trip() {
        let stats = NormStats {
            mean: vec![0.1, -3.25],
            std: vec![1.0 / 3.0, STD_FLOOR],
        };
        assert_eq!(NormStats::from_text(&stats.to_text()).unwrap(), stats);
    }
}
