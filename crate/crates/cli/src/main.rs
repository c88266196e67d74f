//! `tsak`: two-stage semantic-aware knowledge distillation for wearable
//! activity recognition, end to end — synthetic data, preprocessing,
//! teacher/semantic/student training, cross-validated ablation sweeps,
//! efficiency profiling, and deployment of the distilled student.
//!
//! Every subcommand reads one JSON config (see `configs/`), optionally
//! overridden by flags, and works inside a run directory derived from the
//! config's identity hash, so staged commands share artifacts naturally.

mod commands;
mod config;
mod runctx;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tsak_core::distill::Strategy;
use tsak_core::{Error, Result};

use config::RunConfig;
use runctx::RunCtx;

#[derive(Parser)]
#[command(
    name = "tsak",
    version,
    about = "Two-stage semantic-aware knowledge distillation for wearable activity recognition"
)]
struct Cli {
    /// JSON run configuration; flags override individual fields.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Root for run directories (default `runs`, or $TSAK_RUN_ROOT).
    #[arg(long, global = true, value_name = "DIR")]
    run_root: Option<PathBuf>,

    /// Master seed; every random stream in the run derives from it.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate synthetic wearable recordings as session CSVs.
    Synth(SynthArgs),
    /// Resample, filter, and window session CSVs into the dataset container.
    Preprocess(PreprocessArgs),
    /// Train the stage-one teacher on one fold.
    TrainTeacher(FoldArgs),
    /// Train the semantic classifier on one fold's frozen teacher.
    TrainSc(FoldArgs),
    /// Distill a student on one fold under a chosen strategy.
    Distill(CellArgs),
    /// Cross-validate one (strategy, alpha, tau) cell and emit the tables.
    Evaluate(EvaluateArgs),
    /// Cross-validate the whole ablation grid and emit the tables.
    Sweep(SweepArgs),
    /// Measure model sizes, FLOPs, and batch-1 latency against the
    /// recorded reference figures.
    Profile(ProfileArgs),
    /// Pack a distilled student into a deployable bundle.
    Export(ExportArgs),
    /// Run the bundled student over windows from a CSV (or sampled from
    /// the run's dataset).
    Infer(InferArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Number of simulated users.
    #[arg(long)]
    users: Option<usize>,
    /// Sessions per user.
    #[arg(long)]
    sessions: Option<usize>,
    /// Session length in seconds.
    #[arg(long)]
    seconds: Option<f64>,
    /// Number of activity classes.
    #[arg(long)]
    classes: Option<usize>,
}

#[derive(Args)]
struct PreprocessArgs {
    /// Directory of session CSVs (default: the run's `sessions/`).
    #[arg(long, value_name = "DIR")]
    sessions_dir: Option<PathBuf>,
    /// Label scheme: `synth` or `openpack` (merges raw operation ids).
    #[arg(long, default_value = "synth")]
    labels: String,
}

#[derive(Args)]
struct FoldArgs {
    /// Fold index to train on.
    #[arg(long)]
    fold: Option<usize>,
}

#[derive(Args)]
struct CellArgs {
    /// Fold index to train on.
    #[arg(long)]
    fold: Option<usize>,
    /// Distillation strategy name.
    #[arg(long)]
    strategy: Option<String>,
    /// Cross-entropy weight in [0, 1]; 1 disables distillation.
    #[arg(long)]
    alpha: Option<f64>,
    /// Distillation temperature (the logit strategies).
    #[arg(long)]
    tau: Option<f64>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    cell: CellArgs,
    /// Cross-validation scheme: `loso` or `louo`.
    #[arg(long)]
    scheme: Option<String>,
    /// Evaluate only the first N folds.
    #[arg(long)]
    fold_limit: Option<usize>,
    /// Worker threads for grid cells.
    #[arg(long)]
    workers: Option<usize>,
    /// Skip the teacher reference rows.
    #[arg(long)]
    no_teacher: bool,
}

#[derive(Args)]
struct SweepArgs {
    /// Comma-separated strategy names for the grid.
    #[arg(long)]
    strategies: Option<String>,
    /// Comma-separated alpha values for the grid.
    #[arg(long)]
    alphas: Option<String>,
    /// Comma-separated tau values for the grid.
    #[arg(long)]
    taus: Option<String>,
    /// Cross-validation scheme: `loso` or `louo`.
    #[arg(long)]
    scheme: Option<String>,
    /// Evaluate only the first N folds.
    #[arg(long)]
    fold_limit: Option<usize>,
    /// Worker threads for grid cells.
    #[arg(long)]
    workers: Option<usize>,
    /// Skip the teacher reference rows.
    #[arg(long)]
    no_teacher: bool,
}

#[derive(Args)]
struct ProfileArgs {
    /// Teacher variant to profile: `factory` or `openpack`.
    #[arg(long)]
    variant: Option<String>,
    /// Warm-up forwards before timing.
    #[arg(long)]
    warmup: Option<usize>,
    /// Timed forwards (the latency is their median).
    #[arg(long)]
    timed: Option<usize>,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    cell: CellArgs,
    /// Output bundle path (default: `student.tsak` in the run directory).
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct InferArgs {
    /// Bundle path (default: `student.tsak` in the run directory).
    #[arg(long, value_name = "FILE")]
    bundle: Option<PathBuf>,
    /// Window CSV to read (default: sample from the run's dataset).
    #[arg(long, value_name = "FILE")]
    input: Option<PathBuf>,
    /// Predictions CSV to write (default: `predictions.csv` in the run
    /// directory).
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,
    /// How many dataset windows to sample when no --input is given.
    #[arg(long, default_value_t = 16)]
    sample: usize,
}

fn parse_list<T>(raw: &str, what: &str, parse: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for part in raw.split(',') {
        let part = part.trim();
        if part.is_empty() {
            return Err(Error::Config(format!("empty {what} entry in `{raw}`")));
        }
        out.push(parse(part)?);
    }
    Ok(out)
}

fn parse_f64(raw: &str, what: &str) -> Result<f64> {
    raw.parse()
        .map_err(|_| Error::Config(format!("cannot parse {what} value `{raw}`")))
}

fn apply_cell(cfg: &mut RunConfig, cell: &CellArgs) -> Result<()> {
    if let Some(fold) = cell.fold {
        cfg.fold = fold;
    }
    if let Some(name) = &cell.strategy {
        cfg.stages.student.strategy = Strategy::parse(name)?;
    }
    if let Some(alpha) = cell.alpha {
        cfg.stages.student.alpha = alpha;
    }
    if let Some(tau) = cell.tau {
        cfg.stages.student.tau = tau;
    }
    Ok(())
}

/// Folds the command's flags into the loaded config, so the effective
/// config is decided in one place before the run directory is derived.
fn apply_overrides(cfg: &mut RunConfig, cmd: &Cmd) -> Result<()> {
    match cmd {
        Cmd::Synth(args) => {
            if let Some(users) = args.users {
                cfg.synth.num_users = users;
            }
            if let Some(sessions) = args.sessions {
                cfg.synth.sessions_per_user = sessions;
            }
            if let Some(seconds) = args.seconds {
                cfg.synth.session_seconds = seconds;
            }
            if let Some(classes) = args.classes {
                cfg.synth.num_classes = classes;
            }
        }
        Cmd::Preprocess(_) | Cmd::Profile(_) | Cmd::Infer(_) => {}
        Cmd::TrainTeacher(args) | Cmd::TrainSc(args) => {
            if let Some(fold) = args.fold {
                cfg.fold = fold;
            }
        }
        Cmd::Distill(cell) => apply_cell(cfg, cell)?,
        Cmd::Export(args) => apply_cell(cfg, &args.cell)?,
        Cmd::Evaluate(args) => {
            apply_cell(cfg, &args.cell)?;
            if let Some(scheme) = &args.scheme {
                cfg.scheme = scheme.clone();
            }
            if let Some(limit) = args.fold_limit {
                cfg.fold_limit = Some(limit);
            }
            if let Some(workers) = args.workers {
                cfg.workers = workers;
            }
        }
        Cmd::Sweep(args) => {
            if let Some(raw) = &args.strategies {
                cfg.grid.strategies = parse_list(raw, "strategy", Strategy::parse)?;
            }
            if let Some(raw) = &args.alphas {
                cfg.grid.alphas = parse_list(raw, "alpha", |s| parse_f64(s, "alpha"))?;
            }
            if let Some(raw) = &args.taus {
                cfg.grid.taus = parse_list(raw, "tau", |s| parse_f64(s, "tau"))?;
            }
            if let Some(scheme) = &args.scheme {
                cfg.scheme = scheme.clone();
            }
            if let Some(limit) = args.fold_limit {
                cfg.fold_limit = Some(limit);
            }
            if let Some(workers) = args.workers {
                cfg.workers = workers;
            }
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    apply_overrides(&mut cfg, &cli.cmd)?;
    cfg.seal();
    cfg.validate()?;
    let run_root = cli
        .run_root
        .or_else(|| std::env::var_os("TSAK_RUN_ROOT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"));
    let ctx = RunCtx::new(cfg, run_root)?;
    match cli.cmd {
        Cmd::Synth(_) => commands::synth::run(&ctx),
        Cmd::Preprocess(args) => commands::preprocess::run(&ctx, args.sessions_dir, &args.labels),
        Cmd::TrainTeacher(_) => commands::train::teacher(&ctx),
        Cmd::TrainSc(_) => commands::train::semantic(&ctx),
        Cmd::Distill(_) => commands::train::distill(&ctx),
        Cmd::Evaluate(args) => commands::evaluate::evaluate(&ctx, !args.no_teacher),
        Cmd::Sweep(args) => commands::evaluate::sweep(&ctx, !args.no_teacher),
        Cmd::Profile(args) => commands::profile::run(&ctx, args.variant, args.warmup, args.timed),
        Cmd::Export(args) => commands::deploy::export(&ctx, args.output),
        Cmd::Infer(args) => {
            commands::deploy::infer(&ctx, args.bundle, args.input, args.output, args.sample)
        }
    }
}

/// Exit codes by error category, so scripts can tell a bad flag from a
/// corrupt artifact without parsing messages.
fn exit_code(category: &str) -> u8 {
    match category {
        "config" | "invalid-input" | "invalid-label" => 2,
        "format" => 3,
        "split" => 4,
        "io" => 5,
        "bundle" => 6,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(exit_code(e.category()))
        }
    }
}
