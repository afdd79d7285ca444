//! Batch experiments over the `dynbv-core` simulator and formulas.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

pub use config::{CommandKind, ExperimentConfig, OutputFormat};
pub use error::CliError;

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

/// Runs `cfg.command`, writes its output, and reports the exit status as
/// an error where one applies.
pub fn execute(cfg: &ExperimentConfig) -> Result<(), CliError> {
    if let Some(t) = cfg.threads {
        // Fails only if a pool already exists, which is fine.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let command = cfg.command.ok_or_else(|| CliError::Config("no command given".into()))?;
    let mut out = sink(cfg.out.as_deref())?;
    match command {
        CommandKind::Drift => {
            let res = commands::cmd_drift(cfg)?;
            match cfg.format {
                OutputFormat::Svg => output::write_svg(&res.heat_cells(), "c", "eps", &mut out)?,
                f => output::write_rows(&res.rows, f, &mut out)?,
            }
            out.flush()?;
            if !res.all_valid {
                return Err(CliError::Validity("a grid cell exceeded the abort limit".into()));
            }
        }
        CommandKind::Analytic => output::write_rows(&commands::cmd_analytic(cfg)?, cfg.format, &mut out)?,
        CommandKind::OracleCheck => {
            let rows = commands::cmd_oracle_check(cfg)?;
            output::write_rows(&rows, cfg.format, &mut out)?;
            out.flush()?;
            let failed = rows.iter().filter(|r| !r.pass).count();
            if failed > 0 {
                return Err(CliError::Verification(format!(
                    "{failed} of {} checks failed",
                    rows.len()
                )));
            }
        }
        CommandKind::Runtime => output::write_rows(&commands::cmd_runtime(cfg)?, cfg.format, &mut out)?,
        CommandKind::Threshold => output::write_rows(&[commands::cmd_threshold(cfg)?], cfg.format, &mut out)?,
    }
    out.flush()?;
    Ok(())
}
