//! `madcluster` command line: `synth`, `train`, `score` and `eval`.
//!
//! Every subcommand accepts `--config FILE` (TOML). Values from the file
//! are applied first and explicit flags override them.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::embedder::{EmbedderConfig, EmbedderKind};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvalConfig};
use crate::model::ModelState;
use crate::scoring::{self, parse_scores_csv, ScoreSeries};
use crate::timeseries::{load_csv, parse_csv, synth_train_test, SynthSpec, TimeSeriesDataset};
use crate::trainer::{export_centroid_trajectory, fit, ClusterMode, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "madcluster", version, about = "Adaptive-center clustering anomaly detection for time series")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic train/test pair and a manifest.
    Synth(SynthArgs),
    /// Train a model on a normal-only CSV.
    Train(TrainArgs),
    /// Score a CSV with a trained model.
    Score(ScoreArgs),
    /// Compute the evaluation report against labelled data.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Single,
    Multi,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub length: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub anomaly_ratio: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub nu0: Option<f64>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Hidden feature size f.
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    /// dilated_rnn, gru or mlp_window.
    #[arg(long)]
    pub embedder: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Labelled test CSV.
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long, conflicts_with = "scores", required_unless_present = "scores")]
    pub model: Option<PathBuf>,
    /// Scores CSV written by `score`.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Sets the metric buffers (range buffer win/10, VUS grid up to win/2).
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Contents of a `--config` file. Every key is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub alpha: Option<f64>,
    pub train: TrainConfig,
    pub embedder: EmbedderFile,
    pub synth: SynthFile,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedderFile {
    pub kind: Option<EmbedderKind>,
    pub hidden_dim: Option<usize>,
    pub layers: Option<usize>,
    pub dilations: Option<Vec<usize>>,
    pub bias: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthFile {
    pub length: Option<usize>,
    pub dim: Option<usize>,
    pub anomaly_ratio: Option<f64>,
    pub noise: Option<f64>,
    pub seed: Option<u64>,
}

pub const DEFAULT_ALPHA: f64 = 0.1;

pub fn load_config(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        msg: e.to_string(),
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn synth_spec(args: &SynthArgs, file: &SynthFile) -> SynthSpec {
    let d = SynthSpec::default();
    SynthSpec {
        length: args.length.or(file.length).unwrap_or(d.length),
        dim: args.dim.or(file.dim).unwrap_or(d.dim),
        anomaly_ratio: args.anomaly_ratio.or(file.anomaly_ratio).unwrap_or(d.anomaly_ratio),
        seed: args.seed.or(file.seed).unwrap_or(d.seed),
        noise: args.noise.or(file.noise).unwrap_or(d.noise),
        amplitude: d.amplitude,
    }
}

pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let file = load_config(args.config.as_deref())?;
    let spec = synth_spec(args, &file.synth);
    let (train, test) = synth_train_test(&spec)?;
    create_dir(&args.out)?;
    train.write_csv(&args.out.join("train.csv"))?;
    test.write_csv(&args.out.join("test.csv"))?;
    let anomalies = test.labels().map_or(0, |l| l.iter().filter(|&&v| v == 1).count());
    let mut m = String::new();
    writeln!(m, "length={}", spec.length).unwrap();
    writeln!(m, "dim={}", spec.dim).unwrap();
    writeln!(m, "seed={}", spec.seed).unwrap();
    writeln!(m, "noise={}", spec.noise).unwrap();
    writeln!(m, "anomaly_ratio={}", spec.anomaly_ratio).unwrap();
    writeln!(m, "anomaly_points={anomalies}").unwrap();
    writeln!(m, "alpha_true={}", anomalies as f64 / spec.length as f64).unwrap();
    write(&args.out.join("manifest.txt"), &m)
}

/// Resolves the training and embedder configuration for `train`.
pub fn train_configs(args: &TrainArgs, file: &FileConfig, input_dim: usize) -> Result<(EmbedderConfig, TrainConfig)> {
    let mut cfg = file.train.clone();
    if let Some(w) = args.window {
        cfg.window = w;
        cfg.stride = w;
    }
    macro_rules! set {
        ($($field:ident),*) => { $( if let Some(v) = args.$field { cfg.$field = v; } )* };
    }
    set!(epochs, lr, rho, lambda, tau, nu0, k, seed);
    if let Some(m) = args.mode {
        cfg.mode = match m {
            ModeArg::Single => ClusterMode::Single,
            ModeArg::Multi => ClusterMode::Multi,
        };
    }

    let kind = match &args.embedder {
        Some(s) => s.parse()?,
        None => file.embedder.kind.unwrap_or(EmbedderKind::DilatedRnn),
    };
    let mut emb = EmbedderConfig::new(kind, input_dim);
    if let Some(h) = args.hidden_dim.or(file.embedder.hidden_dim) {
        emb.hidden_dim = h;
    }
    if let Some(l) = file.embedder.layers {
        emb.layers = l;
        emb.dilations = (0..l).map(|i| 1 << i).collect();
    }
    if let Some(d) = &file.embedder.dilations {
        emb.dilations = d.clone();
    }
    if let Some(b) = file.embedder.bias {
        emb.bias = b;
    }
    emb.validate()?;
    cfg.validate()?;
    Ok((emb, cfg))
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let file = load_config(args.config.as_deref())?;
    let raw = load_csv(&args.train, false)?;
    let (emb, cfg) = train_configs(args, &file, raw.dim())?;
    create_dir(&args.out)?;
    let outcome = fit(&raw, &emb, &cfg)?;
    outcome.model.save(&args.out.join("model.txt"))?;
    write(&args.out.join("train_log.csv"), &outcome.log.to_csv())?;
    write(
        &args.out.join("centroid_trajectory.csv"),
        &export_centroid_trajectory(&outcome.snapshots),
    )?;
    Ok(())
}

/// Loads a CSV whose trailing label column is optional: it is present when
/// the row has one more field than the model has channels.
pub fn load_for_model(path: &Path, input_dim: usize) -> Result<TimeSeriesDataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let fields = text
        .lines()
        .find(|l| !l.trim().is_empty())
        .map_or(0, |l| l.split(',').count());
    let has_labels = fields == input_dim + 1;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_csv(&text, has_labels, &name).map_err(|(line, msg)| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    })
}

pub fn cmd_score(args: &ScoreArgs) -> Result<()> {
    let file = load_config(args.config.as_deref())?;
    let alpha = args.alpha.or(file.alpha).unwrap_or(DEFAULT_ALPHA);
    let model = ModelState::load(&args.model)?;
    let data = load_for_model(&args.test, model.embedder.input_dim)?;
    let series = ScoreSeries::new(scoring::score(&data, &model)?, alpha)?;
    create_dir(&args.out)?;
    series.write_csv(&args.out.join("scores.csv"))
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let file = load_config(args.config.as_deref())?;
    let alpha = args.alpha.or(file.alpha).unwrap_or(DEFAULT_ALPHA);
    let (scores, truth, win) = match (&args.model, &args.scores) {
        (Some(m), _) => {
            let model = ModelState::load(m)?;
            let data = load_csv(&args.test, true)?;
            let s = scoring::score(&data, &model)?;
            (s, data.labels().unwrap().to_vec(), model.window)
        }
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let s = parse_scores_csv(&text)?;
            let text = std::fs::read_to_string(&args.test).map_err(|e| Error::io(&args.test, e))?;
            let dim = text
                .lines()
                .find(|l| !l.trim().is_empty())
                .map_or(1, |l| l.split(',').count().saturating_sub(1).max(1));
            let data = load_for_model(&args.test, dim)?;
            let truth = data
                .labels()
                .ok_or_else(|| Error::invalid("test file has no label column"))?
                .to_vec();
            (s, truth, file.train.window)
        }
        (None, None) => return Err(Error::invalid("eval needs --model or --scores")),
    };
    if scores.len() != truth.len() {
        return Err(Error::invalid(format!(
            "{} scores for {} labelled points",
            scores.len(),
            truth.len()
        )));
    }
    let win = args.window.unwrap_or(win);
    let report = evaluate(&scores, &truth, alpha, EvalConfig::for_window(win))?;
    create_dir(&args.out)?;
    write(&args.out.join("report.txt"), &report.to_text())?;
    write(&args.out.join("report.csv"), &report.to_csv())?;
    print!("{}", report.to_csv());
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Score(a) => cmd_score(a),
        Command::Eval(a) => cmd_eval(a),
    }
}

pub fn exit_code(err: &Error) -> i32 {
    if err.is_numeric() {
        EXIT_NUMERIC
    } else {
        EXIT_CONFIG
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
