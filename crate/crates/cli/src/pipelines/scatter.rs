//! `scatter`: the high-velocity functional over speeds and directions,
//! compared with the X-ray transform smeared by the packet.

use rayon::prelude::*;
use serde::Deserialize;

use flscat_core::dynamics::EvolutionConfig;
use flscat_core::potentials::{LineQuadrature, PotentialSpec};
use flscat_core::scattering::{auto_points, default_horizon, hv_functional, smeared_xray_oracle, ScatteringConfig};
use flscat_core::wavepackets::{make_envelope_state, EnvelopeSpec};
use flscat_core::GridSpec;

use super::{check_envelope, check_potential, default_true, module};
use crate::output::num;
use crate::{Context, Report};

pub const CSV: &str = "scatter.csv";
const HEADER: [&str; 9] = [
    "v_mag",
    "direction_angle",
    "re_functional",
    "im_functional",
    "oracle_value",
    "rel_error",
    "tail_certificate",
    "T_used",
    "M_used",
];

/// Errors at or below this are roundoff and count as converged.
const ERROR_FLOOR: f64 = 1e-12;

/// `T(|v|) = reference (v_ref / |v|)^(2 rho - 1)`, capped at `max_travel`
/// length units of transport.
#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonRule {
    pub reference: f64,
    pub v_ref: f64,
    pub max_travel: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScatterSection {
    pub rho: f64,
    pub potential: PotentialSpec,
    pub envelope: EnvelopeSpec,
    pub half_width: f64,
    /// Points per axis; chosen per speed from the resolution rule when absent.
    #[serde(default)]
    pub points: Option<usize>,
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default = "default_min_points")]
    pub min_points: usize,
    #[serde(default = "default_max_points")]
    pub max_points: usize,
    pub speeds: Vec<f64>,
    /// Travel directions in radians from the first axis.
    #[serde(default = "default_angles")]
    pub angles: Vec<f64>,
    pub horizon: HorizonRule,
    /// Split steps per wave operator.
    #[serde(default = "default_steps")]
    pub steps: usize,
    /// Largest accepted Cook tail per wave operator; infinite reports only.
    #[serde(default = "default_tail_tolerance")]
    pub tail_tolerance: f64,
    #[serde(default)]
    pub wrap_guard: Option<f64>,
    #[serde(default)]
    pub mass_tolerance: Option<f64>,
    #[serde(default = "default_quadrature")]
    pub quadrature: LineQuadrature,
    #[serde(default = "default_max_rel_error")]
    pub max_rel_error: f64,
    #[serde(default = "default_max_imag_ratio")]
    pub max_imag_ratio: f64,
    #[serde(default = "default_true")]
    pub require_monotone: bool,
}

fn default_margin() -> f64 {
    1.0
}

fn default_min_points() -> usize {
    64
}

fn default_max_points() -> usize {
    1024
}

fn default_angles() -> Vec<f64> {
    vec![0.0]
}

fn default_steps() -> usize {
    60
}

fn default_tail_tolerance() -> f64 {
    f64::INFINITY
}

pub fn default_quadrature() -> LineQuadrature {
    LineQuadrature { t_max: 40.0, dt: 0.01 }
}

fn default_max_rel_error() -> f64 {
    0.05
}

fn default_max_imag_ratio() -> f64 {
    0.10
}

struct Row {
    v_mag: f64,
    angle: f64,
    re: f64,
    im: f64,
    oracle: f64,
    rel_error: f64,
    tail: f64,
    horizon: f64,
    points: usize,
}

fn evaluate(cfg: &ScatterSection, speed: f64, angle: f64) -> anyhow::Result<Row> {
    let points = match cfg.points {
        Some(m) => m,
        None => auto_points(cfg.half_width, speed, cfg.envelope.eta, cfg.margin, cfg.min_points, cfg.max_points)
            .map_err(module("scattering"))?,
    };
    let grid = GridSpec::new(2, points, cfg.half_width).map_err(module("grid_spectral"))?;
    let h = cfg.horizon;
    let horizon = default_horizon(h.reference, h.v_ref, speed, cfg.rho, h.max_travel).map_err(module("scattering"))?;
    let mut evolution = EvolutionConfig::new(cfg.rho, horizon / cfg.steps as f64).map_err(module("dynamics"))?;
    if let Some(g) = cfg.wrap_guard {
        evolution.wrap_guard = g;
    }
    if let Some(m) = cfg.mass_tolerance {
        evolution.mass_tolerance = m;
    }
    let scattering = ScatteringConfig {
        horizon,
        tail_tolerance: cfg.tail_tolerance,
        evolution,
    };
    let phi0 = make_envelope_state(&grid, &cfg.envelope).map_err(module("wavepackets"))?;
    let (s, c) = angle.sin_cos();
    let hv = hv_functional(&phi0, &phi0, &[speed * c, speed * s], &cfg.potential, &scattering)
        .map_err(module("scattering"))?;
    let v_mag = hv.velocity.iter().map(|x| x * x).sum::<f64>().sqrt();
    let dir: Vec<f64> = hv.velocity.iter().map(|x| x / v_mag).collect();
    let oracle = smeared_xray_oracle(&cfg.potential, &phi0, &phi0, &dir, cfg.quadrature)
        .map_err(module("scattering"))?
        .re;
    let diff = (hv.value.re - oracle).abs();
    let rel_error = if oracle != 0.0 { diff / oracle.abs() } else { diff };
    Ok(Row {
        v_mag,
        angle,
        re: hv.value.re,
        im: hv.value.im,
        oracle,
        rel_error,
        tail: hv.tail_certificate,
        horizon,
        points,
    })
}

pub fn run(cfg: &ScatterSection, ctx: &Context) -> anyhow::Result<Report> {
    check_potential(&cfg.potential, 2)?;
    check_envelope(&cfg.envelope, 2)?;
    if cfg.speeds.is_empty() || cfg.angles.is_empty() || cfg.steps == 0 {
        anyhow::bail!("config: need speeds, angles and a positive step count");
    }
    let mut speeds = cfg.speeds.clone();
    speeds.sort_by(f64::total_cmp);
    let tasks: Vec<(f64, f64)> = cfg
        .angles
        .iter()
        .flat_map(|&a| speeds.iter().map(move |&v| (v, a)))
        .collect();
    let rows: Vec<Row> = tasks
        .par_iter()
        .map(|&(v, a)| evaluate(cfg, v, a))
        .collect::<anyhow::Result<_>>()?;

    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut cells: Vec<String> = [r.v_mag, r.angle, r.re, r.im, r.oracle, r.rel_error, r.tail, r.horizon]
                .into_iter()
                .map(num)
                .collect();
            cells.push(r.points.to_string());
            cells
        })
        .collect();
    ctx.out.write_csv(CSV, &HEADER, &cells)?;

    let mut pass = true;
    let mut worst_final = 0.0f64;
    let mut worst_imag = 0.0f64;
    let mut monotone = true;
    for ray in rows.chunks(speeds.len()) {
        monotone &= ray.windows(2).all(|w| w[1].rel_error < w[0].rel_error || w[1].rel_error <= ERROR_FLOOR);
        let last = &ray[ray.len() - 1];
        worst_final = worst_final.max(last.rel_error);
        pass &= last.rel_error <= cfg.max_rel_error;
        pass &= last.im.abs() <= cfg.max_imag_ratio * last.re.abs() + ERROR_FLOOR;
        if last.re != 0.0 {
            worst_imag = worst_imag.max(last.im.abs() / last.re.abs());
        }
    }
    if cfg.require_monotone {
        pass &= monotone;
    }
    Ok(Report {
        pass,
        summary: format!(
            "final rel_error={worst_final:.3e} <= {:.2e}, monotone {monotone}, imag/real={worst_imag:.3} <= {:.2} ({} points)",
            cfg.max_rel_error,
            cfg.max_imag_ratio,
            rows.len()
        ),
        files: vec![CSV.into()],
    })
}
