//! One module per subcommand. Each reads its config section, fans
//! independent points out over the current rayon pool, and writes its files
//! from the calling thread once every point is back.

pub mod cook;
pub mod dump;
pub mod propagation;
pub mod reconstruct;
pub mod scatter;
pub mod uniqueness;

use flscat_core::potentials::PotentialSpec;
use flscat_core::wavepackets::EnvelopeSpec;

use crate::config::{section, Config};
use crate::{Command, Context, Report};

pub fn dispatch(command: Command, config: &Config, ctx: &Context) -> anyhow::Result<Report> {
    match command {
        Command::VerifyPropagation => propagation::run(section(&config.verify_propagation, "verify_propagation")?, ctx),
        Command::CookIntegral => cook::run(section(&config.cook_integral, "cook_integral")?, ctx),
        Command::Scatter => scatter::run(section(&config.scatter, "scatter")?, ctx),
        Command::Reconstruct => reconstruct::run(section(&config.reconstruct, "reconstruct")?, ctx),
        Command::Uniqueness => uniqueness::run(section(&config.uniqueness, "uniqueness")?, ctx),
        Command::DumpField => dump::run(section(&config.dump_field, "dump_field")?, ctx),
    }
}

/// Tags a library error with the module that raised it.
pub fn module(name: &'static str) -> impl Fn(flscat_core::Error) -> anyhow::Error {
    move |e| anyhow::anyhow!("{name}: {e}")
}

pub fn check_potential(v: &PotentialSpec, dim: usize) -> anyhow::Result<()> {
    v.validate().map_err(module("potentials"))?;
    v.check_dim(dim).map_err(module("potentials"))
}

pub fn check_envelope(e: &EnvelopeSpec, dim: usize) -> anyhow::Result<()> {
    e.validate().map_err(module("wavepackets"))?;
    if e.center.len() != dim {
        anyhow::bail!("wavepackets: envelope center has {} components, grid has {dim} axes", e.center.len());
    }
    Ok(())
}

/// Least-squares slope through `(x, y)` points.
pub fn slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx)
}

fn default_true() -> bool {
    true
}
