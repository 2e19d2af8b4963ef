//! Command-line front end: `gen`, `features`, `train-tdtl`, `baseline`, `eval`.
//!
//! Exit codes: 0 success, 2 usage or bad input, 3 I/O, 4 numeric or
//! runtime failure. Every run writes a `run_meta` block next to its outputs.
//!
//! `--config FILE` reads `key=value` lines (keys are long flag names
//! without dashes); a flag given on the command line wins.

mod commands;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

/// Version of every text/binary format this build writes.
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "tdtl", version, about = "Transductive deep transfer learning and domain-adaptation baselines")]
pub struct Cli {
    /// Optional `key=value` file of flag defaults.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic two-domain benchmark.
    Gen(GenArgs),
    /// Extract LBP or SIFT descriptors from an image manifest.
    Features(FeaturesArgs),
    /// Train the transductive network and predict target labels.
    TrainTdtl(TrainArgs),
    /// Sweep a shallow adaptation baseline scored by 1-NN.
    Baseline(BaselineArgs),
    /// Score a predictions file.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Feature,
    Image,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, value_enum, default_value = "feature")]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    #[arg(long, default_value_t = 2)]
    pub views: usize,
    /// Samples per (class, view) in each domain.
    #[arg(long, default_value_t = 25)]
    pub per_cell: usize,
    /// Relative class frequencies, e.g. `4,4,4,1`.
    #[arg(long, value_delimiter = ',')]
    pub class_weights: Option<Vec<f64>>,
    #[arg(long, default_value_t = 2.5)]
    pub shift: f64,
    #[arg(long, default_value_t = 45.0)]
    pub shift_angle: f64,
    #[arg(long, default_value_t = 20.0)]
    pub rotation_step: f64,
    #[arg(long, default_value_t = 30.0)]
    pub target_rotation: f64,
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 1.25)]
    pub target_noise_scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FeatureKind {
    Lbp,
    Sift,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[arg(long, value_enum)]
    pub kind: FeatureKind,
    /// Image manifest; paths are relative to its directory.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Landmark CSV, required for SIFT.
    #[arg(long, required_if_eq("kind", "sift"))]
    pub landmarks: Option<PathBuf>,
    /// Output feature CSV.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

/// `λ1,λ2` pairs separated by `;`, cycled over steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Alternation(pub Vec<(f64, f64)>);

fn parse_alternation(s: &str) -> std::result::Result<Alternation, String> {
    let pairs = s
        .split(';')
        .map(|pair| {
            let (a, b) = pair
                .split_once(',')
                .ok_or_else(|| format!("expected `l1,l2` pairs, found {pair:?}"))?;
            let a: f64 = a.trim().parse().map_err(|_| format!("bad weight {a:?}"))?;
            let b: f64 = b.trim().parse().map_err(|_| format!("bad weight {b:?}"))?;
            Ok((a, b))
        })
        .collect::<std::result::Result<Vec<_>, String>>()?;
    Ok(Alternation(pairs))
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Labelled source feature CSV.
    #[arg(long)]
    pub source: PathBuf,
    /// Target feature CSV; labels, if present, are only used for scoring.
    #[arg(long)]
    pub target: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.5)]
    pub source_fraction: f64,
    /// Hidden layer widths.
    #[arg(long, value_delimiter = ',', default_value = "64,32")]
    pub hidden: Vec<usize>,
    #[arg(long, default_value_t = 0.5)]
    pub dropout: f64,
    #[arg(long, default_value_t = 0.01)]
    pub lr_backbone: f64,
    #[arg(long, default_value_t = 0.005)]
    pub lr_transfer: f64,
    /// Proximal step size on the target label matrix.
    #[arg(long, default_value_t = 0.05)]
    pub lr_labels: f64,
    #[arg(long, default_value_t = crate::tdtl::DEFAULT_ALPHA)]
    pub alpha: f64,
    /// Step weights, e.g. `1,0;0,1`.
    #[arg(long, value_parser = parse_alternation, default_value = "1,0;0,1")]
    pub schedule: Alternation,
    /// Relative epoch-loss change counted as converged.
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    /// Converged epochs in a row needed to stop.
    #[arg(long, default_value_t = 5)]
    pub window: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Sa,
    Gfk,
    Tca,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long, value_enum)]
    pub method: Method,
    #[arg(long)]
    pub source: PathBuf,
    /// Target feature CSV; its labels score the sweep.
    #[arg(long)]
    pub target: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    /// Grid override: dimensions for sa/gfk, `mu` values for tca.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    /// TCA transfer components.
    #[arg(long, default_value_t = crate::adapt::TCA_DEFAULT_COMPONENTS)]
    pub components: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Predictions CSV (`sample_id,predicted_class,true_class`).
    #[arg(long)]
    pub predictions: PathBuf,
    /// Truth: a predictions, manifest or feature CSV. Defaults to the
    /// predictions file's own `true_class` column.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Class count; defaults to the truth file's, else the largest index + 1.
    #[arg(long)]
    pub classes: Option<usize>,
    /// Output metrics CSV.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

/// Maps a library error onto the exit-code contract.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. } | Error::Image(_) => EXIT_IO,
        Error::Numeric { .. } | Error::Divergence { .. } | Error::Infeasible(_) => EXIT_RUNTIME,
        Error::Shape { .. }
        | Error::Contract(_)
        | Error::Parse { .. }
        | Error::Validation(_)
        | Error::Checkpoint(_) => EXIT_USAGE,
    }
}

/// Value of `--config` in raw arguments, if any.
fn config_path(args: &[OsString]) -> Option<PathBuf> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(v));
        }
    }
    None
}

/// `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_config(text: &str, path: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: path.to_string(),
            line: n + 1,
            message: format!("expected key=value, found {line:?}"),
        })?;
        out.insert(k.trim().trim_start_matches("--").to_string(), v.trim().to_string());
    }
    Ok(out)
}

/// Appends config entries whose flag is absent from the command line.
fn merge_config(mut args: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(&path).map_err(crate::error::io_err(&path))?;
    let entries = parse_config(&text, &path.display().to_string())?;
    for (key, value) in entries {
        if key == "config" {
            continue;
        }
        let flag = format!("--{key}");
        let given = args.iter().any(|a| {
            let s = a.to_string_lossy();
            s == flag || s.starts_with(&format!("{flag}="))
        });
        if !given {
            args.push(flag.into());
            args.push(value.into());
        }
    }
    Ok(args)
}

/// Deterministic `key=value` block: tool, subcommand, seed, format
/// versions, then every resolved flag in name order.
fn run_meta(subcommand: &str, seed: u64, matches: &ArgMatches) -> String {
    let mut flags = BTreeMap::new();
    for id in matches.ids() {
        let id = id.as_str();
        if let Ok(Some(values)) = matches.try_get_raw(id) {
            let joined: Vec<String> = values.map(|v| v.to_string_lossy().into_owned()).collect();
            flags.insert(id.to_string(), joined.join(","));
        }
    }
    let mut out = String::new();
    let _ = writeln!(out, "tool=tdtl {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(out, "subcommand={subcommand}");
    let _ = writeln!(out, "seed={seed}");
    for name in ["manifest", "features", "predictions", "metrics", "checkpoint", "landmarks", "sweep"] {
        let _ = writeln!(out, "format.{name}={FORMAT_VERSION}");
    }
    for (k, v) in flags {
        let _ = writeln!(out, "flag.{k}={v}");
    }
    out
}

/// Where the run_meta block goes for a file output: `<file>.run_meta.txt`.
fn meta_beside(file: &Path) -> PathBuf {
    let mut name = file.file_name().map(OsString::from).unwrap_or_default();
    name.push(".run_meta.txt");
    file.with_file_name(name)
}

/// Parses and runs one invocation; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match merge_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let matches = match Cli::command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return EXIT_USAGE;
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let result = match &cli.command {
        Command::Gen(a) => commands::gen(a, &run_meta(name, a.seed, sub)),
        Command::Features(a) => commands::features(a, &run_meta(name, a.seed, sub)),
        Command::TrainTdtl(a) => commands::train_tdtl(a, &run_meta(name, a.seed, sub)),
        Command::Baseline(a) => commands::baseline(a, &run_meta(name, a.seed, sub)),
        Command::Eval(a) => commands::eval(a, &run_meta(name, a.seed, sub)),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests;
