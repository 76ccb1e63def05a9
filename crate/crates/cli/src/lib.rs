//! Command-line front end for the bill optimizer: run configs, the `bill`,
//! `sweep`, `bva` and `validate-tariff` commands, and their CSV outputs.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{cmd_bill, cmd_bva, cmd_sweep, cmd_validate_tariff, BillOutcome};
pub use config::{Inputs, Overrides, RunConfig};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "billopt", version, about = "Optimal TOU bills for PV + battery sites")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimal bill per configured tariff (annual, or the config's month).
    Bill(RunArgs),
    /// Annual bills over the configured asset-size sweeps.
    Sweep(RunArgs),
    /// Battery value added over the PV grid.
    Bva(RunArgs),
    /// Parse and coverage-check a tariff file.
    ValidateTariff {
        /// Tariff TOML file.
        path: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Solve resolution in minutes (15, 30 or 60).
    #[arg(long)]
    pub resolution: Option<u32>,
    /// Solver backend: bundled or external.
    #[arg(long)]
    pub solver: Option<String>,
    /// Tariff name to report results against.
    #[arg(long)]
    pub baseline: Option<String>,
}

impl RunArgs {
    fn load(&self) -> Result<(RunConfig, Inputs), CliError> {
        let overrides = Overrides {
            resolution: self.resolution,
            solver: self.solver.clone(),
            baseline: self.baseline.clone(),
        };
        let cfg = RunConfig::load(&self.config, &overrides)?;
        let inputs = Inputs::load(&cfg)?;
        Ok((cfg, inputs))
    }
}

/// Executes a parsed command; stdout lines are returned in order.
pub fn run(cli: &Cli) -> Result<Vec<String>, CliError> {
    let mut lines = Vec::new();
    match &cli.command {
        Command::Bill(a) => {
            let (cfg, inputs) = a.load()?;
            for o in cmd_bill(&cfg, &inputs, &a.out)? {
                if let Some(w) = &o.warning {
                    log::warn!("{w}");
                    lines.push(format!("warning: {w}"));
                }
                lines.push(format!("{}\ttotal\t{}\t{:.2}", o.tariff, o.total, o.total));
                lines.extend(o.files.iter().map(|f| format!("wrote {}", f.display())));
            }
        }
        Command::Sweep(a) => {
            let (cfg, inputs) = a.load()?;
            lines.extend(cmd_sweep(&cfg, &inputs, &a.out)?.iter().map(|f| format!("wrote {}", f.display())));
        }
        Command::Bva(a) => {
            let (cfg, inputs) = a.load()?;
            let (bva, files) = cmd_bva(&cfg, &inputs, &a.out)?;
            for b in &bva {
                if let (Some(v), Some(pv)) = (b.bva.last(), b.pv_capacity_kw.last()) {
                    lines.push(format!("{}\tbva_at_pv_{pv}\t{v}\t{v:.2}", b.tariff));
                }
            }
            lines.extend(files.iter().map(|f| format!("wrote {}", f.display())));
        }
        Command::ValidateTariff { path } => lines.push(cmd_validate_tariff(path)?),
    }
    Ok(lines)
}
