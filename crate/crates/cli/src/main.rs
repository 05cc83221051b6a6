//! Batch driver: reads one TOML config, runs the selected experiment, writes
//! CSV and field dumps plus a manifest, and prints a one-line verdict.

// negated comparisons reject NaN along with out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod output;
mod pipelines;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use flscat_core::estimates::PowerIteration;

use crate::config::Config;
use crate::output::{Manifest, OutputDir};

#[derive(Parser, Debug)]
#[command(name = "flscat", version, about = "Fractional Schrodinger scattering experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Directory receiving CSVs, field dumps and the manifest.
    #[arg(long, global = true, env = "FLSCAT_OUT", default_value = "flscat-out")]
    out: PathBuf,

    /// Worker threads for independent sweep points (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Start vector seed of the power iteration.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Operator-norm decay of the propagation estimate.
    VerifyPropagation,
    /// Cook integral against packet speed.
    CookIntegral,
    /// High-velocity functional against the smeared X-ray oracle.
    Scatter,
    /// Sinogram sampling and filtered backprojection.
    Reconstruct,
    /// Distinguishing two potentials from probe values of the functional.
    Uniqueness,
    /// Writes a packet or potential in the binary field format.
    DumpField,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::VerifyPropagation => "verify-propagation",
            Command::CookIntegral => "cook-integral",
            Command::Scatter => "scatter",
            Command::Reconstruct => "reconstruct",
            Command::Uniqueness => "uniqueness",
            Command::DumpField => "dump-field",
        }
    }
}

/// What a pipeline hands back to the driver.
pub struct Report {
    pub pass: bool,
    pub summary: String,
    pub files: Vec<String>,
}

/// Everything a pipeline needs besides its own config section.
pub struct Context {
    pub out: OutputDir,
    pub seed: u64,
}

fn run(cli: &Cli) -> anyhow::Result<Report> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!("config: --config <path> is required"))?;
    let (text, config) = Config::load(path)?;
    let out = OutputDir::create(&cli.out)?;
    let seed = cli.seed.unwrap_or(PowerIteration::default().seed);
    let ctx = Context { out, seed };

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            anyhow::bail!("usage: --jobs must be at least 1");
        }
        builder = builder.num_threads(jobs);
    }
    let pool = builder.build()?;

    let report = pool.install(|| pipelines::dispatch(cli.command, &config, &ctx))?;
    let mut files = report.files.clone();
    files.push(output::MANIFEST.to_string());
    Manifest {
        program: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        subcommand: cli.command.name().into(),
        seed,
        config_path: path.display().to_string(),
        outputs: files,
        pass: report.pass,
        summary: report.summary.clone(),
        config: text,
    }
    .write(&ctx.out)?;
    Ok(report)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(report) => {
            let verdict = if report.pass { "PASS" } else { "FAIL" };
            println!("{}: {} {verdict}", cli.command.name(), report.summary);
            if report.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
