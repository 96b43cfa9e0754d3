//! Command-line front end for training, sampling and evaluating flows.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use sinf::config::{parse_config, Mode, RunConfig};
use sinf::io::{load_dataset, read_matrix, write_csv, write_matrix, DataFormat};
use sinf::metrics::ood_report;
use sinf::model_file;
use sinf::preprocess::Preprocess;
use sinf::sliced::{equalize_sample_counts, max_k_swd_restarts, sliced_wasserstein, MaxSwdOptions};
use sinf::train::{train_gis, train_sig, TrainReport};
use sinf::{Flow, SinfError};

pub const DEFAULT_LOGIT_LAMBDA: f64 = 1e-6;

#[derive(Debug, Parser)]
#[command(name = "sinf", version, about = "Sliced iterative normalizing flows")]
pub struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model on a dataset.
    Train(TrainArgs),
    /// Draw samples from a model.
    Sample(SampleArgs),
    /// Per-row log-densities of a dataset under a model.
    Logp(LogpArgs),
    /// AUROC of model log-densities between in- and out-of-distribution data.
    Ood(OodArgs),
    /// Sliced and max K-sliced Wasserstein distances between two datasets.
    Swd(SwdArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Binary,
}

impl From<FormatArg> for DataFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => DataFormat::Csv,
            FormatArg::Binary => DataFormat::Binary,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Sig,
    Gis,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Input format; detected from the file when omitted.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Overrides the config's mode (default gis).
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Axes per iteration; overrides the config.
    #[arg(long)]
    pub k: Option<usize>,
    /// key = value training config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub max_layers: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Apply the logit transform with squeeze λ (data must lie in [0, 1]).
    #[arg(long, num_args = 0..=1, default_missing_value = "1e-6", value_name = "LAMBDA")]
    pub logit: Option<f64>,
    /// Model output path.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-iteration training log (CSV).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output path; CSV on stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output format; `.csv`/`.txt` paths default to CSV, others to binary.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
}

#[derive(Debug, Args)]
pub struct LogpArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// CSV output path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OodArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// In-distribution data.
    #[arg(long = "in")]
    pub inliers: PathBuf,
    /// Out-of-distribution data.
    #[arg(long = "out")]
    pub outliers: PathBuf,
}

#[derive(Debug, Args)]
pub struct SwdArgs {
    pub a: PathBuf,
    pub b: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// Random directions for the Monte Carlo sliced distance.
    #[arg(long, default_value_t = 1000)]
    pub projections: usize,
    #[arg(long, default_value_t = 1)]
    pub restarts: usize,
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub type CliResult<T> = std::result::Result<T, SinfError>;

fn output_format(path: &Path, explicit: Option<FormatArg>) -> DataFormat {
    match explicit {
        Some(f) => f.into(),
        None => match path.extension().and_then(|e| e.to_str()) {
            Some("csv") | Some("txt") => DataFormat::Csv,
            _ => DataFormat::Binary,
        },
    }
}

fn check_dim(flow: &Flow, d: usize, what: &Path) -> CliResult<()> {
    if flow.dim() != d {
        return Err(SinfError::InvalidData(format!(
            "{} has {d} columns but the model expects {}",
            what.display(),
            flow.dim()
        )));
    }
    Ok(())
}

fn model_logp(flow: &Flow, path: &Path, format: Option<DataFormat>) -> CliResult<Vec<f64>> {
    let x = read_matrix(path, format)?;
    check_dim(flow, x.ncols(), path)?;
    Ok(flow.log_density_batch(&x)?.iter().map(|r| r.logp).collect())
}

fn write_report(path: &Path, report: &TrainReport) -> CliResult<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "iteration,objective,validation_logp")?;
    let rows = report.objective.len().max(report.validation_logp.len());
    for i in 0..rows {
        let obj = report
            .objective
            .get(i)
            .map(|v| format!("{v:?}"))
            .unwrap_or_default();
        let val = report
            .validation_logp
            .get(i)
            .map(|v| format!("{v:?}"))
            .unwrap_or_default();
        writeln!(f, "{i},{obj},{val}")?;
    }
    f.flush()?;
    Ok(())
}

pub fn train(args: &TrainArgs, out: &mut dyn Write) -> CliResult<()> {
    let mut text = match &args.config {
        Some(path) => std::fs::read_to_string(path)?,
        None => String::new(),
    };
    match args.mode {
        Some(ModeArg::Sig) => text.push_str("\nmode = sig\n"),
        Some(ModeArg::Gis) => text.push_str("\nmode = gis\n"),
        None => {}
    }
    let mut cfg: RunConfig = parse_config(&text)?;
    if let Some(k) = args.k {
        cfg.train.k = k;
    }
    if let Some(l) = args.max_layers {
        cfg.train.max_layers = l;
    }
    if let Some(s) = args.seed {
        cfg.train.seed = s;
    }
    let preprocess = match args.logit {
        Some(lambda) => Preprocess::logit(lambda)?,
        None => Preprocess::Identity,
    };
    let dataset = load_dataset(&args.data, args.format.map(Into::into), preprocess)?;
    let x = dataset.preprocessed()?;
    if let Some((s, c)) = cfg.train.image_shape {
        if s * s * c != x.ncols() {
            return Err(SinfError::InvalidData(format!(
                "image shape {s}x{s}x{c} does not match {} columns",
                x.ncols()
            )));
        }
    }
    let (mut flow, report) = match cfg.mode {
        Mode::Sig => train_sig(&x, &cfg.train)?,
        Mode::Gis => train_gis(&x, &cfg.train)?,
    };
    flow.set_preprocess(preprocess);
    model_file::save(&args.out, &flow)?;
    if let Some(path) = &args.report {
        write_report(path, &report)?;
    }
    let best = report
        .validation_logp
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    write!(
        out,
        "layers_built={} layers_kept={} wall_time_s={:.3}",
        report.layers_built,
        report.layers_kept,
        report.wall_time.as_secs_f64()
    )?;
    if best.is_finite() {
        write!(out, " best_validation_logp={best:.6}")?;
    }
    writeln!(out)?;
    Ok(())
}

pub fn sample(args: &SampleArgs, out: &mut dyn Write) -> CliResult<()> {
    let flow = model_file::load(&args.model)?;
    let x = flow.sample(args.n, args.temperature, args.seed)?;
    match &args.out {
        Some(path) => write_matrix(path, &x, output_format(path, args.format))?,
        None => match args.format {
            Some(FormatArg::Binary) => out.write_all(&sinf::io::encode_tensor(&x))?,
            _ => write_csv(out, &x, None)?,
        },
    }
    Ok(())
}

pub fn logp(args: &LogpArgs, out: &mut dyn Write) -> CliResult<()> {
    let flow = model_file::load(&args.model)?;
    let scores = model_logp(&flow, &args.data, args.format.map(Into::into))?;
    let mut text = String::from("logp\n");
    for s in &scores {
        text.push_str(&format!("{s:?}\n"));
    }
    match &args.out {
        Some(path) => std::fs::write(path, text)?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

pub fn ood(args: &OodArgs, out: &mut dyn Write) -> CliResult<()> {
    let flow = model_file::load(&args.model)?;
    let s_in = model_logp(&flow, &args.inliers, None)?;
    let s_out = model_logp(&flow, &args.outliers, None)?;
    let r = ood_report(&s_in, &s_out)?;
    writeln!(
        out,
        "auroc={:.6} n_in={} n_out={} score=log_density",
        r.auroc, r.n_in, r.n_out
    )?;
    Ok(())
}

pub fn swd(args: &SwdArgs, out: &mut dyn Write) -> CliResult<()> {
    let a = read_matrix(&args.a, None)?;
    let b = read_matrix(&args.b, None)?;
    if a.ncols() != b.ncols() {
        return Err(SinfError::DimensionMismatch {
            expected: a.ncols(),
            got: b.ncols(),
        });
    }
    if args.k < 1 || args.k > a.ncols() {
        return Err(SinfError::InvalidArgument(format!(
            "--k must lie in 1..={}, got {}",
            a.ncols(),
            args.k
        )));
    }
    let (a, b) = equalize_sample_counts(&a, &b, args.seed);
    let sw = sliced_wasserstein(&a, &b, args.projections, 2.0, args.seed)?;
    let opts = MaxSwdOptions::new(args.k)
        .with_max_iter(args.max_iter)
        .with_seed(args.seed);
    let best = max_k_swd_restarts(&a, &b, &opts, args.restarts)?;
    writeln!(
        out,
        "swd={:.6} max_k_swd={:.6} k={} restarts={} n={}",
        sw,
        best.distance,
        args.k,
        args.restarts.max(1),
        a.nrows()
    )?;
    Ok(())
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> CliResult<()> {
    match &cli.command {
        Command::Train(a) => train(a, out),
        Command::Sample(a) => sample(a, out),
        Command::Logp(a) => logp(a, out),
        Command::Ood(a) => ood(a, out),
        Command::Swd(a) => swd(a, out),
    }
}
