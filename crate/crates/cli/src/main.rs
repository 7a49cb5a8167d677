use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qplab_cli::{run, run::PointStatus, ExperimentConfig, ExperimentKind, Format, RunOptions};

/// Experiments on quasi-periodic long-range operators.
#[derive(Parser)]
#[command(name = "qplab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Assemble restrictions H_Λ(θ) − E and check Hermiticity and the spectrum.
    Assemble(RunArgs),
    /// Solve for Green's functions and fit their off-diagonal decay.
    Green(RunArgs),
    /// Build the multi-scale stack: resonances, blocks and θ tracking.
    Msa(RunArgs),
    /// Evolve δ_0 and record moments, time averages and growth bounds.
    Dynamics(RunArgs),
    /// Eigenvector localization profiles and the arithmetic phase test.
    Localize(RunArgs),
    /// Randomized checks of the matrix and geometry lemmas.
    VerifyLemmas(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output bundle directory; defaults to `output.dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Abort on the first failing grid point.
    #[arg(long)]
    fail_fast: bool,
    /// Artifact table format.
    #[arg(long, value_enum)]
    format: Option<Format>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::Assemble(a) => (ExperimentKind::Assemble, a),
        Command::Green(a) => (ExperimentKind::Green, a),
        Command::Msa(a) => (ExperimentKind::Msa, a),
        Command::Dynamics(a) => (ExperimentKind::Dynamics, a),
        Command::Localize(a) => (ExperimentKind::Localize, a),
        Command::VerifyLemmas(a) => (ExperimentKind::VerifyLemmas, a),
    };
    match execute(kind, &args) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn execute(kind: ExperimentKind, args: &RunArgs) -> Result<u8, Box<dyn std::error::Error>> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| format!("reading {}: {e}", args.config.display()))?;
    let mut cfg = ExperimentConfig::from_toml(&text)?;
    if let Some(k) = cfg.kind {
        if k != kind {
            return Err(format!("config declares kind `{}` but the `{}` subcommand was used", k.name(), kind.name()).into());
        }
    }
    cfg.kind = Some(kind);
    let out = args.out.clone().or_else(|| cfg.output.dir.clone()).ok_or("no output directory: pass --out or set output.dir")?;
    let opts = RunOptions { jobs: args.jobs, fail_fast: args.fail_fast, format: args.format };
    let bundle = run(&cfg, &opts)?;
    bundle.write(&out)?;
    let (pass, fail, err) = (bundle.count(PointStatus::Pass), bundle.count(PointStatus::Fail), bundle.count(PointStatus::Error));
    println!("{}: {} points, {pass} pass, {fail} fail, {err} error -> {}", kind.name(), bundle.points.len(), out.display());
    Ok(bundle.exit_code() as u8)
}
