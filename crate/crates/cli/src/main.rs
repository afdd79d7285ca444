use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dynbv_cli::{execute, CliError, CommandKind, ExperimentConfig, OutputFormat};

#[derive(Parser, Debug)]
#[command(name = "dynbv", version, about = "Experiments for the (mu+1)-EA on dynamic BinVal")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Monte Carlo drift over a (c, eps) grid.
    Drift(Common),
    /// f0, f1, c0, eps* and mu0 over a c grid.
    Analytic(Common),
    /// Closed-form selection probabilities against exact enumeration.
    OracleCheck(Common),
    /// Generations to reach the optimum.
    Runtime(Common),
    /// Bisection for the sign change of the drift in c.
    Threshold(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Generation cap per trial.
    #[arg(long)]
    cap: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
    /// Override any config key, e.g. `--set ea.mu=3 --set drift.eps=0.01,0.02`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn load(kind: CommandKind, a: Common) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::load(a.config.as_deref(), &a.set)?;
    cfg.command = Some(kind);
    cfg.seed = a.seed.or(cfg.seed);
    cfg.trials = a.trials.unwrap_or(cfg.trials);
    cfg.threads = a.threads.or(cfg.threads);
    cfg.cap = a.cap.unwrap_or(cfg.cap);
    cfg.out = a.out.or(cfg.out);
    cfg.format = a.format.unwrap_or(cfg.format);
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, common) = match cli.command {
        Command::Drift(a) => (CommandKind::Drift, a),
        Command::Analytic(a) => (CommandKind::Analytic, a),
        Command::OracleCheck(a) => (CommandKind::OracleCheck, a),
        Command::Runtime(a) => (CommandKind::Runtime, a),
        Command::Threshold(a) => (CommandKind::Threshold, a),
    };
    match load(kind, common).and_then(|cfg| execute(&cfg)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dynbv {}: {e}", kind.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
