//! Command-line driver.
//!
//! Exit codes: `0` success, `1` usage error, `2` data error, `3` numerical
//! failure (including a failed `validate-rut` check).

pub mod config;
pub mod sweep;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::choice_models::ChoiceModel;
use crate::dataset::{apply_normalization, fit_normalization, generate_synthetic, parse_letor, Corpus, NormStats, SyntheticSpec};
use crate::error::Error;
use crate::metrics::{parse_metric_list, Metric};
use crate::rank_functions::serialize::{decode_model, encode_model, MODEL_MAGIC};
use crate::rank_functions::{DropoutConfig, RankModel, Scorer};
use crate::rut::validation_suite;
use crate::sgtb::{decode_ensemble, encode_ensemble, fit_sgtb, Ensemble, SgtbConfig, ENSEMBLE_MAGIC};
use crate::training::{evaluate, score_corpus, train_model, RankFunctionSpec, TrainConfig};
use config::ConfigFile;
use sweep::{dropout_sweep, grid, sweep_table};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Numerical(_) | Error::Contract(_) => CliError::Numerical(e.to_string()),
            Error::Guard(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "elimrank", version, about = "Listwise learning to rank with choice-by-elimination")]
struct Cli {
    /// Flat key = value file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a rank function and write a checkpoint plus training log.
    Train(TrainCmd),
    /// Evaluate a checkpoint on a LETOR file.
    Eval(EvalCmd),
    /// Write `qid<TAB>score` for every item of a LETOR file.
    Predict(PredictCmd),
    /// Monte Carlo checks of the random-utility derivations.
    #[command(name = "validate-rut")]
    ValidateRut(ValidateCmd),
    /// Write a synthetic LETOR corpus.
    Synth(SynthCmd),
    /// Train and evaluate a highway network over a dropout grid.
    Sweep(SweepCmd),
}

#[derive(Debug, Args, Default)]
struct HyperArgs {
    /// elimination | plackett-luce
    #[arg(long)]
    loss: Option<String>,
    /// Hidden units of the highway network.
    #[arg(long = "K")]
    hidden: Option<usize>,
    /// Layers of the highway network.
    #[arg(long = "L")]
    layers: Option<usize>,
    #[arg(long = "p-vis")]
    p_vis: Option<f64>,
    #[arg(long = "p-hid")]
    p_hid: Option<f64>,
    /// Max-norm cap per hidden unit; 0 disables.
    #[arg(long)]
    maxnorm: Option<f64>,
    /// Queries per mini-batch.
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long = "lr-stop")]
    lr_stop: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long = "max-epochs")]
    max_epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct TrainCmd {
    #[arg(long)]
    train: Option<PathBuf>,
    /// linear | highway | sgtb
    #[arg(long)]
    model: Option<String>,
    #[arg(long = "out-model")]
    out_model: Option<PathBuf>,
    /// Defaults to `<out-model>.log`.
    #[arg(long = "out-log")]
    out_log: Option<PathBuf>,
    #[command(flatten)]
    hyper: HyperArgs,
    #[arg(long)]
    trees: Option<usize>,
    #[arg(long = "row-subsample")]
    row_subsample: Option<f64>,
    #[arg(long = "feature-subsample")]
    feature_subsample: Option<f64>,
    #[arg(long = "max-leaves")]
    max_leaves: Option<usize>,
    #[arg(long = "min-node-size")]
    min_node_size: Option<usize>,
}

#[derive(Debug, Args)]
struct EvalCmd {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    /// Defaults to `<model>.norm`.
    #[arg(long)]
    norm: Option<PathBuf>,
    /// Comma-separated, e.g. ndcg@1,ndcg@5,err
    #[arg(long)]
    metric: Option<String>,
    /// table | kv
    #[arg(long)]
    format: Option<String>,
    /// Defaults to standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PredictCmd {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    norm: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateCmd {
    #[arg(long)]
    samples: Option<usize>,
    /// Random score vectors beyond the two fixed cases.
    #[arg(long)]
    instances: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthCmd {
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    queries: Option<usize>,
    #[arg(long)]
    items: Option<usize>,
    #[arg(long)]
    features: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct SweepCmd {
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long = "K-grid")]
    k_grid: Option<String>,
    #[arg(long = "p-hid-grid")]
    p_hid_grid: Option<String>,
    #[arg(long = "p-vis-grid")]
    p_vis_grid: Option<String>,
    #[arg(long)]
    metric: Option<String>,
    #[command(flatten)]
    hyper: HyperArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code. Errors are reported on standard error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("elimrank: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> CliResult<()> {
    let cfg = match &cli.config {
        Some(path) => ConfigFile::parse(&read_text(path)?)?,
        None => ConfigFile::default(),
    };
    match cli.command {
        Command::Train(c) => cmd_train(c, &cfg),
        Command::Eval(c) => cmd_eval(c, &cfg),
        Command::Predict(c) => cmd_predict(c, &cfg),
        Command::ValidateRut(c) => cmd_validate(c, &cfg),
        Command::Synth(c) => cmd_synth(c, &cfg),
        Command::Sweep(c) => cmd_sweep(c, &cfg),
    }
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => write_file(p, text.as_bytes()),
        None => {
            use io::Write;
            io::stdout()
                .write_all(text.as_bytes())
                .map_err(|e| CliError::Data(e.to_string()))
        }
    }
}

fn required<T>(v: Option<T>, key: &str) -> CliResult<T> {
    v.ok_or_else(|| CliError::Usage(format!("missing required --{key}")))
}

fn parse_value<T: std::str::FromStr>(s: &str, key: &str) -> CliResult<T> {
    s.trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("--{key}: cannot parse {s:?}")))
}

fn parse_list<T: std::str::FromStr>(s: &str, key: &str) -> CliResult<Vec<T>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| parse_value(t, key))
        .collect()
}

fn load_corpus(path: &Path, feature_dim: Option<usize>) -> CliResult<Corpus> {
    let file = fs::File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    parse_letor(io::BufReader::new(file), feature_dim)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn parse_loss(s: &str) -> CliResult<ChoiceModel> {
    s.parse().map_err(|e: Error| CliError::Usage(e.to_string()))
}

fn train_config(h: HyperArgs, cfg: &ConfigFile) -> CliResult<(TrainConfig, usize, usize)> {
    let d = TrainConfig::default();
    let loss = parse_loss(&cfg.pick_or(h.loss, "loss", "elimination".to_string())?)?;
    let maxnorm = cfg.pick_or(h.maxnorm, "maxnorm", 1.0)?;
    let seed = cfg.pick_or(h.seed, "seed", 0)?;
    let config = TrainConfig {
        batch_queries: cfg.pick_or(h.batch, "batch", d.batch_queries)?,
        lr_init: cfg.pick_or(h.lr, "lr", d.lr_init)?,
        lr_stop: cfg.pick_or(h.lr_stop, "lr-stop", d.lr_stop)?,
        improvement_tol: cfg.pick_or(h.tol, "tol", d.improvement_tol)?,
        max_epochs: cfg.pick_or(h.max_epochs, "max-epochs", d.max_epochs)?,
        loss_kind: loss,
        dropout: DropoutConfig {
            p_vis: cfg.pick_or(h.p_vis, "p-vis", 0.0)?,
            p_hid: cfg.pick_or(h.p_hid, "p-hid", 0.3)?,
            rng_seed: seed,
        },
        maxnorm_cap: (maxnorm > 0.0).then_some(maxnorm),
        rng_seed: seed,
    };
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let hidden = cfg.pick_or(h.hidden, "K", 10)?;
    let layers = cfg.pick_or(h.layers, "L", 3)?;
    Ok((config, hidden, layers))
}

fn normalized_training_corpus(path: &Path) -> CliResult<(Corpus, NormStats)> {
    let raw = load_corpus(path, None)?;
    if raw.groups.is_empty() {
        return Err(CliError::Data(format!("{}: no items", path.display())));
    }
    let stats = fit_normalization(&raw)?;
    Ok((apply_normalization(&raw, &stats)?, stats))
}

fn cmd_train(c: TrainCmd, cfg: &ConfigFile) -> CliResult<()> {
    let train_path = required(cfg.pick(c.train, "train")?, "train")?;
    let out_model = required(cfg.pick(c.out_model, "out-model")?, "out-model")?;
    let out_log = cfg
        .pick(c.out_log, "out-log")?
        .unwrap_or_else(|| with_suffix(&out_model, ".log"));
    let kind = cfg.pick_or(c.model, "model", "highway".to_string())?;
    let (config, hidden, layers) = train_config(c.hyper, cfg)?;

    let (corpus, stats) = normalized_training_corpus(&train_path)?;

    let (bytes, log) = match kind.as_str() {
        "linear" | "highway" => {
            let spec = if kind == "linear" {
                RankFunctionSpec::Linear
            } else {
                RankFunctionSpec::Highway {
                    hidden,
                    layers,
                    init_seed: config.rng_seed,
                }
            };
            let (model, log) = train_model(&corpus, &spec, &config)?;
            (encode_model(&model), log)
        }
        "sgtb" => {
            let d = SgtbConfig::default();
            let sgtb = SgtbConfig {
                num_trees: cfg.pick_or(c.trees, "trees", d.num_trees)?,
                lr_init: config.lr_init,
                row_subsample: cfg.pick_or(c.row_subsample, "row-subsample", d.row_subsample)?,
                feature_subsample_per_node: cfg.pick_or(
                    c.feature_subsample,
                    "feature-subsample",
                    d.feature_subsample_per_node,
                )?,
                max_leaves: cfg.pick_or(c.max_leaves, "max-leaves", d.max_leaves)?,
                min_node_size: cfg.pick_or(c.min_node_size, "min-node-size", d.min_node_size)?,
                rng_seed: config.rng_seed,
            };
            sgtb.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            let fit = fit_sgtb(&corpus, config.loss_kind, &sgtb)?;
            (encode_ensemble(&fit.ensemble), fit.log)
        }
        other => return Err(CliError::Usage(format!("unknown --model {other:?}"))),
    };

    write_file(&out_model, &bytes)?;
    write_file(&with_suffix(&out_model, ".norm"), stats.to_text().as_bytes())?;
    write_file(&out_log, log.to_text().as_bytes())?;
    Ok(())
}

/// A checkpoint of any supported kind.
pub enum LoadedModel {
    Rank(RankModel),
    Trees(Ensemble),
}

impl Scorer for LoadedModel {
    fn feature_dim(&self) -> usize {
        match self {
            LoadedModel::Rank(m) => m.feature_dim(),
            LoadedModel::Trees(m) => m.feature_dim(),
        }
    }

    fn score(&self, x: &[f64]) -> crate::error::Result<f64> {
        match self {
            LoadedModel::Rank(m) => m.score(x),
            LoadedModel::Trees(m) => m.score(x),
        }
    }
}

pub fn load_model(bytes: &[u8]) -> crate::error::Result<LoadedModel> {
    if bytes.starts_with(MODEL_MAGIC) {
        decode_model(bytes).map(LoadedModel::Rank)
    } else if bytes.starts_with(ENSEMBLE_MAGIC) {
        decode_ensemble(bytes).map(LoadedModel::Trees)
    } else {
        Err(Error::Format("unrecognized checkpoint magic".into()))
    }
}

fn model_and_corpus(model: &Path, norm: Option<PathBuf>, data: &Path) -> CliResult<(LoadedModel, Corpus)> {
    let bytes = fs::read(model).map_err(|e| CliError::Data(format!("{}: {e}", model.display())))?;
    let model_obj = load_model(&bytes).map_err(|e| CliError::Data(format!("{}: {e}", model.display())))?;
    let norm = norm.unwrap_or_else(|| with_suffix(model, ".norm"));
    let stats = NormStats::from_text(&read_text(&norm)?)?;
    if stats.dim() != model_obj.feature_dim() {
        return Err(CliError::Data(format!(
            "normalization has {} features, model expects {}",
            stats.dim(),
            model_obj.feature_dim()
        )));
    }
    let corpus = load_corpus(data, Some(stats.dim()))?;
    let corpus = apply_normalization(&corpus, &stats)?;
    Ok((model_obj, corpus))
}

fn cmd_eval(c: EvalCmd, cfg: &ConfigFile) -> CliResult<()> {
    let model = required(cfg.pick(c.model, "model")?, "model")?;
    let test = required(cfg.pick(c.test, "test")?, "test")?;
    let metrics = metric_list(cfg.pick(c.metric, "metric")?)?;
    let format = cfg.pick_or(c.format, "format", "table".to_string())?;
    let out = cfg.pick(c.out, "out")?;
    let (scorer, corpus) = model_and_corpus(&model, cfg.pick(c.norm, "norm")?, &test)?;
    let report = evaluate(&scorer, &corpus, &metrics)?;
    let text = match format.as_str() {
        "table" => report.to_table(),
        "kv" => report.to_kv(),
        other => return Err(CliError::Usage(format!("unknown --format {other:?}"))),
    };
    emit(out.as_deref(), &text)
}

fn metric_list(s: Option<String>) -> CliResult<Vec<Metric>> {
    parse_metric_list(s.as_deref().unwrap_or("ndcg@1,ndcg@5,err")).map_err(|e| CliError::Usage(e.to_string()))
}

fn cmd_predict(c: PredictCmd, cfg: &ConfigFile) -> CliResult<()> {
    let model = required(cfg.pick(c.model, "model")?, "model")?;
    let input = required(cfg.pick(c.input, "input")?, "input")?;
    let out = cfg.pick(c.out, "out")?;
    let (scorer, corpus) = model_and_corpus(&model, cfg.pick(c.norm, "norm")?, &input)?;
    let scores = score_corpus(&scorer, &corpus)?;
    let mut text = String::new();
    for (g, s) in corpus.groups.iter().zip(&scores) {
        for v in s {
            let _ = writeln!(text, "{}\t{:.16e}", g.query_id, v);
        }
    }
    emit(out.as_deref(), &text)
}

fn cmd_validate(c: ValidateCmd, cfg: &ConfigFile) -> CliResult<()> {
    let samples = cfg.pick_or(c.samples, "samples", 1_000_000)?;
    let instances = cfg.pick_or(c.instances, "instances", 20)?;
    let seed = cfg.pick_or(c.seed, "seed", 0)?;
    if samples < 10_000 {
        return Err(CliError::Usage("--samples must be at least 10000".into()));
    }
    let suite = validation_suite(samples, instances, seed)?;
    emit(cfg.pick(c.out, "out")?.as_deref(), &suite.to_table())?;
    if suite.passed() {
        Ok(())
    } else {
        Err(CliError::Numerical("Monte Carlo check outside its 4-sigma band".into()))
    }
}

fn cmd_synth(c: SynthCmd, cfg: &ConfigFile) -> CliResult<()> {
    let out = required(cfg.pick(c.out, "out")?, "out")?;
    let spec = SyntheticSpec::with_random_weights(
        cfg.pick_or(c.queries, "queries", 100)?,
        cfg.pick_or(c.items, "items", 20)?,
        cfg.pick_or(c.features, "features", 10)?,
        cfg.pick_or(c.noise, "noise", 0.0)?,
        cfg.pick_or(c.seed, "seed", 0)?,
    );
    let (corpus, _) = generate_synthetic(&spec).map_err(|e| CliError::Usage(e.to_string()))?;
    write_file(&out, corpus.to_letor().as_bytes())
}

fn cmd_sweep(c: SweepCmd, cfg: &ConfigFile) -> CliResult<()> {
    let train_path = required(cfg.pick(c.train, "train")?, "train")?;
    let test_path = required(cfg.pick(c.test, "test")?, "test")?;
    let ks: Vec<usize> = parse_list(&cfg.pick_or(c.k_grid, "K-grid", "10".to_string())?, "K-grid")?;
    let phs: Vec<f64> = parse_list(&cfg.pick_or(c.p_hid_grid, "p-hid-grid", "0,0.2,0.3".to_string())?, "p-hid-grid")?;
    let pvs: Vec<f64> = parse_list(&cfg.pick_or(c.p_vis_grid, "p-vis-grid", "0".to_string())?, "p-vis-grid")?;
    let metrics = metric_list(cfg.pick(c.metric, "metric")?)?;
    let out = cfg.pick(c.out, "out")?;
    let (base, _, layers) = train_config(c.hyper, cfg)?;
    let points = grid(&ks, &phs, &pvs);
    if points.is_empty() {
        return Err(CliError::Usage("empty sweep grid".into()));
    }
    for p in &points {
        DropoutConfig {
            p_vis: p.p_vis,
            p_hid: p.p_hid,
            rng_seed: 0,
        }
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    }

    let (train, stats) = normalized_training_corpus(&train_path)?;
    let test = apply_normalization(&load_corpus(&test_path, Some(stats.dim()))?, &stats)?;
    let rows = dropout_sweep(&train, &test, &base, layers, base.rng_seed, &points, &metrics)?;
    emit(out.as_deref(), &sweep_table(&rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["elimrank", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["elimrank", "train", "--bogus"]), EXIT_USAGE);
        assert_eq!(run(["elimrank", "train"]), EXIT_USAGE);
        assert_eq!(run(["elimrank", "--help"]), EXIT_OK);
    }

    #[test]
    fn missing_file_is_data_error() {
        assert_eq!(
            run(["elimrank", "train", "--train", "/nonexistent/x.txt", "--out-model", "/tmp/m"]),
            EXIT_DATA
        );
    }
}
