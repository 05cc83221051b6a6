//! `reconstruct`: a sinogram from line integrals or from scattering data,
//! inverted by filtered backprojection.

use rayon::prelude::*;
use serde::Deserialize;

use flscat_core::dynamics::EvolutionConfig;
use flscat_core::grid::save_field;
use flscat_core::potentials::{LineQuadrature, PotentialSpec};
use flscat_core::reconstruction::{
    fbp_invert_with, oracle_sinogram, relative_l2_error, uniform_angles, uniform_offsets, FbpConfig, Sinogram,
    SinogramSampler,
};
use flscat_core::scattering::{HvValue, ScatteringConfig};
use flscat_core::wavepackets::EnvelopeSpec;
use flscat_core::GridSpec;

use super::scatter::default_quadrature;
use super::{check_envelope, check_potential, module};
use crate::output::num;
use crate::{Context, Report};

pub const CSV: &str = "sinogram.csv";
pub const FIELD: &str = "reconstruction.flsf";
const HEADER: [&str; 5] = ["theta", "b", "value", "imag_diag", "rel_err_vs_oracle"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    /// Line integrals of the potential, no scattering.
    Oracle,
    /// Real part of the high-velocity functional per cell.
    Scattering,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputGrid {
    pub points: usize,
    pub half_width: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Measurement {
    pub grid: GridSpec,
    pub rho: f64,
    pub envelope: EnvelopeSpec,
    pub v_mag: f64,
    pub horizon: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_tail_tolerance")]
    pub tail_tolerance: f64,
    #[serde(default)]
    pub wrap_guard: Option<f64>,
    #[serde(default)]
    pub mass_tolerance: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructSection {
    pub potential: PotentialSpec,
    pub source: Source,
    pub angles: usize,
    pub offsets: usize,
    pub offset_half_width: f64,
    pub output: OutputGrid,
    #[serde(default)]
    pub fbp: FbpConfig,
    #[serde(default = "default_quadrature")]
    pub quadrature: LineQuadrature,
    #[serde(default = "default_max_rel_error")]
    pub max_rel_error: f64,
    /// Required when `source = "scattering"`.
    #[serde(default)]
    pub measurement: Option<Measurement>,
}

fn default_steps() -> usize {
    60
}

fn default_tail_tolerance() -> f64 {
    f64::INFINITY
}

fn default_max_rel_error() -> f64 {
    0.10
}

fn measured(cfg: &ReconstructSection, m: &Measurement, angles: &[f64], offsets: &[f64]) -> anyhow::Result<Sinogram> {
    check_envelope(&m.envelope, 2)?;
    if m.steps == 0 {
        anyhow::bail!("config: measurement.steps must be positive");
    }
    let mut evolution = EvolutionConfig::new(m.rho, m.horizon / m.steps as f64).map_err(module("dynamics"))?;
    if let Some(g) = m.wrap_guard {
        evolution.wrap_guard = g;
    }
    if let Some(t) = m.mass_tolerance {
        evolution.mass_tolerance = t;
    }
    let scattering = ScatteringConfig {
        horizon: m.horizon,
        tail_tolerance: m.tail_tolerance,
        evolution,
    };
    let sampler = SinogramSampler::new(&m.grid, &cfg.potential, &m.envelope, m.v_mag, &scattering)
        .map_err(module("reconstruction"))?;
    let cells: Vec<HvValue> = SinogramSampler::cells(angles, offsets)
        .par_iter()
        .map(|&(a, b)| sampler.cell(a, b).map_err(module("scattering")))
        .collect::<anyhow::Result<_>>()?;
    let mut s = sampler.assemble(angles, offsets, &cells).map_err(module("reconstruction"))?;
    let oracle = oracle_sinogram(&cfg.potential, angles, offsets, cfg.quadrature, Some(sampler.smear()))
        .map_err(module("reconstruction"))?;
    s.oracle = Some(oracle.values);
    Ok(s)
}

pub fn run(cfg: &ReconstructSection, ctx: &Context) -> anyhow::Result<Report> {
    check_potential(&cfg.potential, 2)?;
    let angles = uniform_angles(cfg.angles);
    let offsets = uniform_offsets(cfg.offsets, cfg.offset_half_width);
    let sinogram = match cfg.source {
        Source::Oracle => {
            let mut s = oracle_sinogram(&cfg.potential, &angles, &offsets, cfg.quadrature, None)
                .map_err(module("reconstruction"))?;
            s.oracle = Some(s.values.clone());
            s
        }
        Source::Scattering => {
            let m = cfg
                .measurement
                .as_ref()
                .ok_or_else(|| anyhow::anyhow!("config: source = \"scattering\" needs a [reconstruct.measurement] table"))?;
            measured(cfg, m, &angles, &offsets)?
        }
    };

    let rel = sinogram.relative_errors().unwrap_or_else(|| vec![f64::NAN; sinogram.values.len()]);
    let n = offsets.len();
    let rows: Vec<Vec<String>> = (0..sinogram.values.len())
        .map(|k| {
            [angles[k / n], offsets[k % n], sinogram.values[k], sinogram.imag[k], rel[k]]
                .into_iter()
                .map(num)
                .collect()
        })
        .collect();
    ctx.out.write_csv(CSV, &HEADER, &rows)?;

    let out = GridSpec::new(2, cfg.output.points, cfg.output.half_width).map_err(module("grid_spectral"))?;
    let image = fbp_invert_with(&sinogram, &out, &cfg.fbp).map_err(module("reconstruction"))?;
    save_field(&image, ctx.out.path(FIELD)).map_err(module("grid_spectral"))?;
    let truth = cfg.potential.to_field(&out).map_err(module("potentials"))?;
    let err = relative_l2_error(&image, &truth).map_err(module("reconstruction"))?;
    let sino_err = rel.iter().cloned().fold(0.0f64, f64::max);
    Ok(Report {
        pass: err <= cfg.max_rel_error,
        summary: format!(
            "L2 error={err:.4} <= {:.2} ({}x{} sinogram, max sinogram deviation {sino_err:.3e})",
            cfg.max_rel_error, cfg.angles, cfg.offsets
        ),
        files: vec![CSV.into(), FIELD.into()],
    })
}
