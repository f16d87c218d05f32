//! Command-line front end for `indcal`.
//!
//! Every command reads an optional JSON config (unknown keys rejected),
//! applies flag overrides on top, and writes its artifacts into one output
//! directory. The directory is `--out` if given, else `$INDCAL_OUT_DIR`,
//! else `./out`.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 1 runtime failure.

use std::fmt;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use indcal::calibration::{evaluate, recalibrate, CalibrationReport, EvalOptions};
use indcal::data::{generate, Dataset, GeneratorSpec, LABEL_COLUMN};
use indcal::decision::{
    exponential_loss_pair, markov_check, run_credit_game, write_markov_csv, BankGameConfig,
    GameSummary, UtilityTable,
};
use indcal::forecast::Forecaster;
use indcal::seeds;
use indcal::training::{
    certify_mpaic, mpaic_to_paic, train, MpaicCertificate, PaicConversion, TrainConfig,
};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "INDCAL_OUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

/// Marker for errors caused by the invocation rather than the computation.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

/// Exit code for an error returned by [`run`].
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return EXIT_CONFIG;
        }
        if let Some(e) = cause.downcast_ref::<indcal::Error>() {
            return if e.is_config() {
                EXIT_CONFIG
            } else {
                EXIT_RUNTIME
            };
        }
        if cause.is::<serde_json::Error>() {
            return EXIT_CONFIG;
        }
    }
    EXIT_RUNTIME
}

#[derive(Debug, Parser)]
#[command(
    name = "indcal",
    version,
    about = "Train and evaluate individually calibrated randomized forecasters"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset and split it into train/val/test CSVs.
    Gen(GenArgs),
    /// Train a forecaster; writes a checkpoint, history CSV and certificate.
    Train(TrainArgs),
    /// Evaluate calibration and sharpness of a saved forecaster.
    Eval(EvalArgs),
    /// Train and evaluate over a grid of alphas and seeds.
    Sweep(SweepArgs),
    /// Play the credit-approval game against a saved forecaster.
    Simulate(SimulateArgs),
    /// Check the Markov-type bounds of Bayes decisions.
    Markov(MarkovArgs),
    /// Certify the seed-matching property on held-out data.
    Certify(CertifyArgs),
}

#[derive(Debug, Clone, Args)]
pub struct OutArgs {
    /// Output directory (default: $INDCAL_OUT_DIR, then ./out).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl OutArgs {
    pub fn resolve(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Linear,
    Toy,
    Heteroscedastic,
    Credit,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, value_enum)]
    pub kind: Option<Kind>,
    /// Generator spec JSON; flags override its size and seed.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Train/val/test fractions.
    #[arg(long, value_delimiter = ',', default_value = "0.6,0.2,0.2")]
    pub split: Vec<f64>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub val: PathBuf,
    #[arg(long, default_value = LABEL_COLUMN)]
    pub target: String,
    /// Training config JSON; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.1)]
    pub epsilon_prime: f64,
    #[arg(long, default_value_t = 0.05)]
    pub gamma: f64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = LABEL_COLUMN)]
    pub target: String,
    /// Evaluation options JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fit an isotonic recalibration map on `--recal-data` and report both
    /// the original and the recalibrated forecaster.
    #[arg(long, requires = "recal_data")]
    pub recalibrate: bool,
    #[arg(long)]
    pub recal_data: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Sweep config JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Directory holding train.csv, val.csv and test.csv. Ignored when the
    /// config names a generator.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Arrival stream CSV. Without it, arrivals are drawn from `--generator`.
    #[arg(long)]
    pub stream: Option<PathBuf>,
    /// Credit-like generator spec JSON, or the generator.json written by
    /// `gen`, for drawing arrivals.
    #[arg(long)]
    pub generator: Option<PathBuf>,
    /// Number of arrivals drawn from the generator.
    #[arg(long, default_value_t = 20_000)]
    pub n: usize,
    #[arg(long, default_value = LABEL_COLUMN)]
    pub target: String,
    #[arg(long)]
    pub y0: Option<f64>,
    /// Game config JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct MarkovArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = LABEL_COLUMN)]
    pub target: String,
    /// Markov config JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub ks: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = LABEL_COLUMN)]
    pub target: String,
    #[arg(long, default_value_t = 0.05)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.1)]
    pub epsilon_prime: f64,
    #[arg(long, default_value_t = 0.05)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

/// Metadata written next to generated CSVs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenOutput {
    pub spec: GeneratorSpec,
    pub y0: Option<f64>,
    pub split: Vec<f64>,
    pub sizes: Vec<usize>,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateOutput {
    pub certificate: MpaicCertificate,
    pub conversion: PaicConversion,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_epoch: Option<usize>,
}

/// One metric before and after recalibration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrePost {
    pub metric: String,
    pub pre: f64,
    pub post: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalOutput {
    pub seed: u64,
    pub options: EvalOptions,
    pub report: CalibrationReport,
    pub recalibrated: Option<CalibrationReport>,
    pub pre_post: Vec<PrePost>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateOutput {
    pub summary: GameSummary,
    /// Utility tables that differ from the defaults.
    pub overridden_tables: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MarkovConfig {
    pub ks: Vec<f64>,
    /// Center of the exponential loss pair; default the label median.
    pub center: Option<f64>,
    /// Rate of the exponential loss pair; default one over the label std.
    pub scale: Option<f64>,
}

impl Default for MarkovConfig {
    fn default() -> Self {
        Self {
            ks: vec![2.0, 4.0, 8.0, 16.0],
            center: None,
            scale: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub alphas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub train: TrainConfig,
    pub eval: EvalOptions,
    /// When set, each seed draws its own dataset from this generator.
    pub generator: Option<GeneratorSpec>,
    pub split: Vec<f64>,
    /// Group fraction at which `worst_group_err` is read off the curve.
    pub worst_group_delta: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            alphas: vec![0.1, 0.3, 0.5, 0.7, 1.0],
            seeds: (0..5).collect(),
            train: TrainConfig::default(),
            eval: EvalOptions::default(),
            generator: None,
            split: vec![0.6, 0.2, 0.2],
            worst_group_delta: 0.2,
        }
    }
}

/// One row of the sweep summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepRow {
    pub alpha: f64,
    pub seed: u64,
    pub nll: f64,
    pub mean_sigma: f64,
    pub worst_group_err: f64,
    pub worst_interp_err: f64,
}

pub const SWEEP_COLUMNS: [&str; 6] = [
    "alpha",
    "seed",
    "nll",
    "mean_sigma",
    "worst_group_err",
    "worst_interp_err",
];

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Gen(a) => cmd_gen(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Markov(a) => cmd_markov(&a),
        Command::Certify(a) => cmd_certify(&a),
    }
}

/// Parse a JSON config file; a missing file or a bad key is a config error.
pub fn read_config<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text =
        fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

fn load_dataset(path: &Path, target: &str) -> anyhow::Result<Dataset> {
    if !path.is_file() {
        return Err(config_err(format!("dataset not found: {}", path.display())));
    }
    Ok(Dataset::load_csv(path, target)?)
}

fn load_model(path: &Path) -> anyhow::Result<Forecaster> {
    if !path.is_file() {
        return Err(config_err(format!("model not found: {}", path.display())));
    }
    Ok(Forecaster::load(path)?)
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)
        .with_context(|| format!("serializing {}", path.display()))?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn check_split(split: &[f64]) -> anyhow::Result<()> {
    if split.len() != 3 {
        return Err(config_err(format!(
            "split needs 3 fractions (train,val,test), got {}",
            split.len()
        )));
    }
    Ok(())
}

fn default_spec(kind: Kind, n: usize, dim: usize, seed: u64) -> GeneratorSpec {
    match kind {
        Kind::Linear => GeneratorSpec::linear(n, vec![1.0; dim], 0.0, 0.5, seed),
        Kind::Toy => GeneratorSpec::toy(n, seed),
        Kind::Heteroscedastic => GeneratorSpec::heteroscedastic(n, dim, seed),
        Kind::Credit => GeneratorSpec::credit(n, dim, seed),
    }
}

fn kind_of(spec: &GeneratorSpec) -> Kind {
    match spec {
        GeneratorSpec::Linear { .. } => Kind::Linear,
        GeneratorSpec::ToyRegionBias { .. } => Kind::Toy,
        GeneratorSpec::HeteroscedasticSubgroups { .. } => Kind::Heteroscedastic,
        GeneratorSpec::CreditLike { .. } => Kind::Credit,
    }
}

pub fn cmd_gen(a: &GenArgs) -> anyhow::Result<()> {
    check_split(&a.split)?;
    let mut spec = match (&a.config, a.kind) {
        (Some(path), kind) => {
            let spec: GeneratorSpec = read_config(path)?;
            if let Some(k) = kind {
                if k != kind_of(&spec) {
                    return Err(config_err(
                        "kind: --kind disagrees with the kind in --config",
                    ));
                }
            }
            if a.dim.is_some_and(|d| d != spec.dim()) {
                return Err(config_err("dim: --dim disagrees with the generator config"));
            }
            spec
        }
        (None, Some(kind)) => default_spec(
            kind,
            a.n.unwrap_or(5000),
            a.dim.unwrap_or(8),
            a.seed.unwrap_or(0),
        ),
        (None, None) => return Err(config_err("kind: one of --kind or --config is required")),
    };
    spec = spec.with_size_and_seed(a.n.unwrap_or(spec.n()), a.seed.unwrap_or(spec.seed()));
    spec.validate()?;
    let generated = generate(&spec)?;
    let parts = generated
        .dataset
        .split(&a.split, seeds::derive(spec.seed(), "gen/split"))?;
    let dir = a.out.resolve();
    create_dir(&dir)?;
    let names = ["train.csv", "val.csv", "test.csv"];
    for (part, name) in parts.iter().zip(names) {
        part.save_csv(dir.join(name))?;
    }
    write_json(
        &dir.join("generator.json"),
        &GenOutput {
            spec,
            y0: generated.y0,
            split: a.split.clone(),
            sizes: parts.iter().map(Dataset::len).collect(),
            files: names.map(String::from).to_vec(),
        },
    )
}

fn certificate_output(
    forecaster: &Forecaster,
    data: &Dataset,
    epsilon: f64,
    epsilon_prime: f64,
    gamma: f64,
    seed: u64,
) -> anyhow::Result<CertificateOutput> {
    if epsilon_prime <= epsilon {
        return Err(config_err("epsilon_prime must exceed epsilon"));
    }
    let certificate = certify_mpaic(
        forecaster,
        data,
        epsilon,
        gamma,
        &mut seeds::stream(seed, "cli/certify"),
    )
    .map_err(|e| config_err(e.to_string()))?;
    let conversion = mpaic_to_paic(epsilon, certificate.bound.min(1.0), epsilon_prime)?;
    Ok(CertificateOutput {
        certificate,
        conversion,
        seed,
        best_epoch: None,
    })
}

pub fn cmd_train(a: &TrainArgs) -> anyhow::Result<()> {
    let mut cfg: TrainConfig = match &a.config {
        Some(p) => read_config(p)?,
        None => TrainConfig::default(),
    };
    if let Some(alpha) = a.alpha {
        cfg.alpha = alpha;
    }
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(epochs) = a.epochs {
        cfg.epochs = epochs;
    }
    cfg.validate()?;
    let train_set = load_dataset(&a.train, &a.target)?;
    let val_set = load_dataset(&a.val, &a.target)?;
    let dir = a.out.resolve();
    create_dir(&dir)?;
    let (net, history) = match train(&train_set, &val_set, &cfg) {
        Ok(v) => v,
        Err(indcal::Error::Training {
            epoch,
            message,
            last_good,
        }) => {
            if let Some(net) = last_good {
                Forecaster::trained(*net).save(dir.join("model.last_good.json"))?;
            }
            return Err(anyhow!("training diverged at epoch {epoch}: {message}"));
        }
        Err(e) => return Err(e.into()),
    };
    let forecaster = Forecaster::trained(net);
    forecaster.save(dir.join("model.json"))?;
    history.write_csv(create(&dir.join("history.csv"))?)?;
    let mut cert = certificate_output(
        &forecaster,
        &val_set,
        a.epsilon,
        a.epsilon_prime,
        a.gamma,
        cfg.seed,
    )?;
    cert.best_epoch = Some(history.best_epoch);
    write_json(&dir.join("certificate.json"), &cert)?;
    write_json(&dir.join("train_config.json"), &cfg)
}

fn pre_post(pre: &CalibrationReport, post: &CalibrationReport) -> Vec<PrePost> {
    let mut rows = vec![
        ("average_w1", pre.average_w1, post.average_w1),
        ("ece", pre.ece, post.ece),
        ("mean_nll", pre.sharpness.mean_nll, post.sharpness.mean_nll),
        (
            "mean_sigma",
            pre.sharpness.mean_sigma,
            post.sharpness.mean_sigma,
        ),
        (
            "mpaic_violation",
            pre.mpaic.empirical_violation,
            post.mpaic.empirical_violation,
        ),
    ]
    .into_iter()
    .map(|(m, a, b)| PrePost {
        metric: m.into(),
        pre: a,
        post: b,
    })
    .collect::<Vec<_>>();
    if let (Some(a), Some(b)) = (&pre.interpretable_worst, &post.interpretable_worst) {
        rows.push(PrePost {
            metric: "interpretable_worst".into(),
            pre: a.error,
            post: b.error,
        });
    }
    for (p, q) in pre.adversarial_curve.iter().zip(&post.adversarial_curve) {
        rows.push(PrePost {
            metric: format!("epsilon_hat@{}", p.delta),
            pre: p.epsilon_hat,
            post: q.epsilon_hat,
        });
    }
    rows
}

fn write_report_csvs(dir: &Path, report: &CalibrationReport, suffix: &str) -> anyhow::Result<()> {
    report.write_curve_csv(create(&dir.join(format!("curve{suffix}.csv")))?)?;
    report.write_groups_csv(create(&dir.join(format!("groups{suffix}.csv")))?)?;
    Ok(())
}

pub fn cmd_eval(a: &EvalArgs) -> anyhow::Result<()> {
    let options: EvalOptions = match &a.config {
        Some(p) => read_config(p)?,
        None => EvalOptions::default(),
    };
    let forecaster = load_model(&a.model)?;
    let data = load_dataset(&a.data, &a.target)?;
    let recal_data = match (&a.recalibrate, &a.recal_data) {
        (true, Some(p)) => Some(load_dataset(p, &a.target)?),
        (true, None) => return Err(config_err("recal_data: --recalibrate needs --recal-data")),
        (false, _) => None,
    };
    let report = evaluate(&forecaster, &data, &options, a.seed)?;
    let dir = a.out.resolve();
    create_dir(&dir)?;
    write_report_csvs(&dir, &report, "")?;
    let mut out = EvalOutput {
        seed: a.seed,
        options: options.clone(),
        report,
        recalibrated: None,
        pre_post: Vec::new(),
    };
    if let Some(val) = recal_data {
        let recal = recalibrate(
            &forecaster,
            &val,
            &mut seeds::stream(a.seed, "cli/recalibrate"),
        )?;
        let post = evaluate(&recal, &data, &options, a.seed)?;
        recal.save(dir.join("model_recalibrated.json"))?;
        write_report_csvs(&dir, &post, "_recalibrated")?;
        out.pre_post = pre_post(&out.report, &post);
        out.recalibrated = Some(post);
    }
    write_json(&dir.join("report.json"), &out)
}

/// Directory name of one sweep cell.
pub fn cell_name(alpha: f64, seed: u64) -> String {
    format!("alpha-{alpha}_seed-{seed}")
}

fn sweep_data(
    cfg: &SweepConfig,
    data_dir: Option<&Path>,
    seed: u64,
) -> anyhow::Result<[Dataset; 3]> {
    if let Some(spec) = &cfg.generator {
        let spec = spec.with_size_and_seed(spec.n(), seed);
        let data = generate(&spec)?.dataset;
        let mut parts = data
            .split(&cfg.split, seeds::derive(seed, "gen/split"))?
            .into_iter();
        let mut next = || parts.next().expect("three parts");
        return Ok([next(), next(), next()]);
    }
    let dir = data_dir
        .ok_or_else(|| config_err("data_dir: sweep needs --data-dir or a generator in --config"))?;
    Ok([
        load_dataset(&dir.join("train.csv"), LABEL_COLUMN)?,
        load_dataset(&dir.join("val.csv"), LABEL_COLUMN)?,
        load_dataset(&dir.join("test.csv"), LABEL_COLUMN)?,
    ])
}

fn sweep_cell(
    cfg: &SweepConfig,
    data_dir: Option<&Path>,
    out: &Path,
    alpha: f64,
    seed: u64,
) -> anyhow::Result<SweepRow> {
    let dir = out.join(cell_name(alpha, seed));
    let row_path = dir.join("row.json");
    if row_path.is_file() {
        return read_config(&row_path);
    }
    create_dir(&dir)?;
    let [train_set, val_set, test_set] = sweep_data(cfg, data_dir, seed)?;
    let tcfg = TrainConfig {
        alpha,
        seed,
        ..cfg.train.clone()
    };
    let (net, history) = train(&train_set, &val_set, &tcfg)?;
    let forecaster = Forecaster::trained(net);
    forecaster.save(dir.join("model.json"))?;
    history.write_csv(create(&dir.join("history.csv"))?)?;
    let report = evaluate(&forecaster, &test_set, &cfg.eval, seed)?;
    write_json(&dir.join("report.json"), &report)?;
    let row = SweepRow {
        alpha,
        seed,
        nll: report.sharpness.mean_nll,
        mean_sigma: report.sharpness.mean_sigma,
        worst_group_err: report
            .epsilon_at(cfg.worst_group_delta)
            .ok_or_else(|| config_err("eval.deltas must not be empty"))?,
        worst_interp_err: report.interpretable_worst.as_ref().map_or(0.0, |g| g.error),
    };
    // written last: its presence marks the cell complete
    write_json(&row_path, &row)?;
    Ok(row)
}

pub fn cmd_sweep(a: &SweepArgs) -> anyhow::Result<()> {
    let mut cfg: SweepConfig = match &a.config {
        Some(p) => read_config(p)?,
        None => SweepConfig::default(),
    };
    if let Some(alphas) = &a.alphas {
        cfg.alphas = alphas.clone();
    }
    if let Some(s) = &a.seeds {
        cfg.seeds = s.clone();
    }
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    check_split(&cfg.split)?;
    if cfg.alphas.is_empty() || cfg.seeds.is_empty() {
        return Err(config_err("alphas and seeds must not be empty"));
    }
    for &alpha in &cfg.alphas {
        TrainConfig {
            alpha,
            ..cfg.train.clone()
        }
        .validate()?;
    }
    if let Some(g) = &cfg.generator {
        g.validate()?;
    }
    let out = a.out.resolve();
    create_dir(&out)?;
    write_json(&out.join("sweep_config.json"), &cfg)?;
    let cells: Vec<(f64, u64)> = cfg
        .alphas
        .iter()
        .flat_map(|&alpha| cfg.seeds.iter().map(move |&s| (alpha, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.threads)
        .build()
        .context("building thread pool")?;
    let rows = pool.install(|| {
        cells
            .par_iter()
            .map(|&(alpha, seed)| {
                sweep_cell(&cfg, a.data_dir.as_deref(), &out, alpha, seed)
                    .with_context(|| format!("cell {}", cell_name(alpha, seed)))
            })
            .collect::<anyhow::Result<Vec<_>>>()
    })?;
    let mut w = csv::Writer::from_writer(create(&out.join("summary.csv"))?);
    w.write_record(SWEEP_COLUMNS)?;
    for r in &rows {
        w.write_record([
            r.alpha.to_string(),
            r.seed.to_string(),
            r.nll.to_string(),
            r.mean_sigma.to_string(),
            r.worst_group_err.to_string(),
            r.worst_interp_err.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn overridden_tables(cfg: &BankGameConfig) -> Vec<String> {
    let mut out = Vec::new();
    if cfg.bank_utility != UtilityTable::BANK {
        out.push("bank_utility".to_string());
    }
    if cfg.customer_utility != UtilityTable::CUSTOMER {
        out.push("customer_utility".to_string());
    }
    out
}

pub fn cmd_simulate(a: &SimulateArgs) -> anyhow::Result<()> {
    let mut cfg: BankGameConfig = match &a.config {
        Some(p) => read_config(p)?,
        None => BankGameConfig::default(),
    };
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let bank = load_model(&a.model)?;
    let stream = match (&a.stream, &a.generator) {
        (Some(p), None) => load_dataset(p, &a.target)?,
        (None, Some(p)) => {
            // accept a bare spec or the generator.json written by `gen`
            let spec = match read_config::<GenOutput>(p) {
                Ok(out) => out.spec,
                Err(_) => read_config::<GeneratorSpec>(p)?,
            };
            if !matches!(spec, GeneratorSpec::CreditLike { .. }) {
                return Err(config_err(
                    "generator: simulate draws arrivals from a credit-like generator",
                ));
            }
            let spec = spec.with_size_and_seed(a.n, seeds::derive(cfg.seed, "cli/stream"));
            let generated = generate(&spec)?;
            if let Some(y0) = generated.y0 {
                cfg.y0 = y0;
            }
            generated.dataset
        }
        (Some(_), Some(_)) => {
            return Err(config_err(
                "stream: give either --stream or --generator, not both",
            ))
        }
        (None, None) => {
            return Err(config_err(
                "stream: one of --stream or --generator is required",
            ))
        }
    };
    if let Some(y0) = a.y0 {
        cfg.y0 = y0;
    }
    if !cfg.y0.is_finite() {
        return Err(config_err("y0 must be finite"));
    }
    let (trace, summary) = run_credit_game(&bank, &stream, &cfg)?;
    let dir = a.out.resolve();
    create_dir(&dir)?;
    trace.write_csv(create(&dir.join("trace.csv"))?)?;
    write_json(
        &dir.join("summary.json"),
        &SimulateOutput {
            overridden_tables: overridden_tables(&summary.config),
            summary,
        },
    )
}

pub fn cmd_markov(a: &MarkovArgs) -> anyhow::Result<()> {
    let mut cfg: MarkovConfig = match &a.config {
        Some(p) => read_config(p)?,
        None => MarkovConfig::default(),
    };
    if let Some(ks) = &a.ks {
        cfg.ks = ks.clone();
    }
    if cfg.ks.is_empty() || cfg.ks.iter().any(|&k| !(k > 0.0 && k.is_finite())) {
        return Err(config_err(
            "ks must be a non-empty list of positive numbers",
        ));
    }
    let forecaster = load_model(&a.model)?;
    let data = load_dataset(&a.data, &a.target)?;
    let mut ys = data.labels().to_vec();
    ys.sort_by(f64::total_cmp);
    let center = cfg.center.unwrap_or(ys[ys.len() / 2]);
    let scale = match cfg.scale {
        Some(s) => s,
        None => {
            let mean = ys.iter().sum::<f64>() / ys.len() as f64;
            let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / ys.len() as f64;
            if var > 0.0 {
                1.0 / var.sqrt()
            } else {
                1.0
            }
        }
    };
    let loss = exponential_loss_pair(center, scale)?;
    let rows = markov_check(
        &forecaster,
        &data,
        &loss,
        &cfg.ks,
        &mut seeds::stream(a.seed, "cli/markov"),
    )?;
    let dir = a.out.resolve();
    create_dir(&dir)?;
    write_markov_csv(&rows, create(&dir.join("markov.csv"))?)?;
    Ok(())
}

pub fn cmd_certify(a: &CertifyArgs) -> anyhow::Result<()> {
    let forecaster = load_model(&a.model)?;
    let data = load_dataset(&a.data, &a.target)?;
    let cert = certificate_output(
        &forecaster,
        &data,
        a.epsilon,
        a.epsilon_prime,
        a.gamma,
        a.seed,
    )?;
    let dir = a.out.resolve();
    create_dir(&dir)?;
    write_json(&dir.join("certificate.json"), &cert)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_sweep_grid_has_25_cells() {
        let cfg = SweepConfig::default();
        assert_eq!(cfg.alphas, [0.1, 0.3, 0.5, 0.7, 1.0]);
        assert_eq!(cfg.alphas.len() * cfg.seeds.len(), 25);
    }

    #[test]
    fn config_errors_map_to_exit_two() {
        assert_eq!(exit_code(&config_err("x")), EXIT_CONFIG);
        let e: anyhow::Error = indcal::Error::Domain("x".into()).into();
        assert_eq!(exit_code(&e), EXIT_RUNTIME);
        assert_eq!(exit_code(&anyhow!("boom")), EXIT_RUNTIME);
    }

    #[test]
    fn explicit_out_beats_environment() {
        let args = OutArgs {
            out: Some(PathBuf::from("here")),
        };
        assert_eq!(args.resolve(), PathBuf::from("here"));
    }
}
