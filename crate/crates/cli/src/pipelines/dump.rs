//! `dump-field`: writes a packet, optionally boosted and evolved, or a
//! sampled potential in the binary field format.

use serde::Deserialize;

use flscat_core::dynamics::{free_evolve, interacting_evolve, EvolutionConfig};
use flscat_core::grid::save_field;
use flscat_core::potentials::PotentialSpec;
use flscat_core::wavepackets::{boost, make_envelope_state, EnvelopeSpec};
use flscat_core::{Field, GridSpec, Space};

use super::{check_envelope, check_potential, module};
use crate::{Context, Report};

fn default_file() -> String {
    "field.flsf".into()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DumpSource {
    Packet,
    Potential,
}

/// Evolution of the packet over time `t`; interacting when a potential is
/// given, exact free propagation otherwise.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Evolve {
    pub rho: f64,
    pub t: f64,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub wrap_guard: Option<f64>,
    #[serde(default)]
    pub mass_tolerance: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DumpSection {
    pub grid: GridSpec,
    pub source: DumpSource,
    #[serde(default)]
    pub envelope: Option<EnvelopeSpec>,
    #[serde(default)]
    pub velocity: Option<Vec<f64>>,
    #[serde(default)]
    pub potential: Option<PotentialSpec>,
    #[serde(default)]
    pub evolve: Option<Evolve>,
    #[serde(default)]
    pub space: Option<Space>,
    #[serde(default = "default_file")]
    pub file: String,
}

fn packet(cfg: &DumpSection) -> anyhow::Result<Field> {
    let dim = cfg.grid.dim();
    let envelope = cfg
        .envelope
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!("config: source = \"packet\" needs an envelope"))?;
    check_envelope(envelope, dim)?;
    let mut f = make_envelope_state(&cfg.grid, envelope).map_err(module("wavepackets"))?;
    if let Some(v) = &cfg.velocity {
        f = boost(&f, v).map_err(module("wavepackets"))?.field;
    }
    let Some(e) = &cfg.evolve else {
        return Ok(f);
    };
    match &cfg.potential {
        None => free_evolve(&f, e.t, e.rho).map_err(module("dynamics")),
        Some(v) => {
            check_potential(v, dim)?;
            let dt = e
                .dt
                .ok_or_else(|| anyhow::anyhow!("config: interacting evolution needs evolve.dt"))?;
            let mut evo = EvolutionConfig::new(e.rho, dt).map_err(module("dynamics"))?;
            if let Some(g) = e.wrap_guard {
                evo.wrap_guard = g;
            }
            if let Some(m) = e.mass_tolerance {
                evo.mass_tolerance = m;
            }
            interacting_evolve(&f, e.t, v, &evo).map_err(module("dynamics"))
        }
    }
}

pub fn run(cfg: &DumpSection, ctx: &Context) -> anyhow::Result<Report> {
    if cfg.file.contains(['/', '\\']) || cfg.file.is_empty() {
        anyhow::bail!("config: `file` must be a plain file name inside the output directory");
    }
    let field = match cfg.source {
        DumpSource::Packet => packet(cfg)?,
        DumpSource::Potential => {
            let v = cfg
                .potential
                .as_ref()
                .ok_or_else(|| anyhow::anyhow!("config: source = \"potential\" needs a potential"))?;
            check_potential(v, cfg.grid.dim())?;
            v.to_field(&cfg.grid).map_err(module("potentials"))?
        }
    };
    let field = field.in_space(cfg.space.unwrap_or(Space::Position));
    save_field(&field, ctx.out.path(&cfg.file)).map_err(module("grid_spectral"))?;
    Ok(Report {
        pass: true,
        summary: format!(
            "wrote {} ({} values, {} space, norm {:.6e})",
            cfg.file,
            field.values().len(),
            field.space(),
            field.norm()
        ),
        files: vec![cfg.file.clone()],
    })
}
