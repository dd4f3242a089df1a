use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use heterofuse_core::representation::OrdinalForm;
use heterofuse_core::Method;

mod fit;
mod output;
mod report;
mod represent;
mod synth;

#[derive(Parser, Debug)]
#[command(name = "heterofuse", version, about = "Fuse data blocks measured on different scales")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "HETEROFUSE_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a fusion model and write its artifacts.
    Fit(FitArgs),
    /// Write every variable's representation matrix.
    Represent(RepresentArgs),
    /// Write the association table of all variables.
    Assoc(AssocArgs),
    /// Combine fitted runs into comparison tables.
    Report(ReportArgs),
    /// Generate a synthetic dataset from a spec file.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Idiomix,
    OsSca,
    Gsca,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Idiomix => Method::Idiomix,
            MethodArg::OsSca => Method::OsSca,
            MethodArg::Gsca => Method::Gsca,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OrdinalArg {
    /// Outer product of standardized midranks.
    Midrank,
    /// Treat ordinal variables as nominal.
    Nominal,
}

impl From<OrdinalArg> for OrdinalForm {
    fn from(o: OrdinalArg) -> Self {
        match o {
            OrdinalArg::Midrank => OrdinalForm::MidrankOuter,
            OrdinalArg::Nominal => OrdinalForm::Nominal,
        }
    }
}

#[derive(Args, Debug, Clone)]
struct PolicyArgs {
    /// Representation used for ordinal variables.
    #[arg(long, value_enum, default_value = "midrank")]
    ordinal: OrdinalArg,
    /// Largest sample count for which I x I slabs are built.
    #[arg(long, default_value_t = heterofuse_core::representation::DEFAULT_MAX_SAMPLES)]
    max_samples: usize,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[arg(long, value_enum)]
    method: MethodArg,
    #[arg(long)]
    rank: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    schema: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    n_starts: Option<usize>,
    /// Overwrite an existing run directory.
    #[arg(long)]
    force: bool,
    #[command(flatten)]
    policy: PolicyArgs,
}

#[derive(Args, Debug)]
struct RepresentArgs {
    #[arg(long)]
    schema: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    policy: PolicyArgs,
}

#[derive(Args, Debug)]
struct AssocArgs {
    #[arg(long)]
    schema: PathBuf,
    /// Output CSV file.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    policy: PolicyArgs,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Run directories written by `fit`.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Block whose PCA is the congruence reference (default: first quantitative block).
    #[arg(long)]
    reference_block: Option<String>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Override the seed in the spec.
    #[arg(long)]
    seed: Option<u64>,
}

/// How a successful command ended.
enum Outcome {
    Done,
    NotConverged(String),
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    if let Some(n) = cli.threads {
        anyhow::ensure!(n > 0, "--threads must be at least 1");
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Fit(args) => fit::run(&args),
        Command::Represent(args) => represent::run_represent(&args).map(|_| Outcome::Done),
        Command::Assoc(args) => represent::run_assoc(&args).map(|_| Outcome::Done),
        Command::Report(args) => report::run(&args).map(|_| Outcome::Done),
        Command::Synth(args) => synth::run(&args).map(|_| Outcome::Done),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::NotConverged(msg)) => {
            eprintln!("warning: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
