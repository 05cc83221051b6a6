//! `cook-integral`: the Cook integral of boosted packets against speed, with
//! a fitted power of `|v|`.

use rayon::prelude::*;
use serde::Deserialize;

use flscat_core::dynamics::EvolutionConfig;
use flscat_core::estimates::cook_integral;
use flscat_core::potentials::PotentialSpec;
use flscat_core::symbol::FractionalOrder;
use flscat_core::wavepackets::{boost, make_envelope_state, EnvelopeSpec};
use flscat_core::GridSpec;

use super::{check_envelope, check_potential, module, slope};
use crate::output::num;
use crate::{Context, Report};

pub const CSV: &str = "cook.csv";
const HEADER: [&str; 8] = [
    "rho",
    "eta",
    "v_mag",
    "t",
    "scale_s",
    "norm_or_integral",
    "estimator_residual",
    "snap_error",
];

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CookSection {
    pub grid: GridSpec,
    pub rho: f64,
    pub potential: PotentialSpec,
    pub envelope: EnvelopeSpec,
    pub direction: Vec<f64>,
    pub speeds: Vec<f64>,
    /// Spatial travel `|v|^(2 rho - 1) T` covered by the horizon at every speed.
    pub travel: f64,
    /// Quadrature intervals over `[0, T]`.
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default)]
    pub wrap_guard: Option<f64>,
    #[serde(default)]
    pub mass_tolerance: Option<f64>,
    /// Target slope of `log integral` against `log |v|`; defaults to `1 - 2 rho`.
    #[serde(default)]
    pub expected_slope: Option<f64>,
    #[serde(default = "default_slope_tolerance")]
    pub slope_tolerance: f64,
}

fn default_steps() -> usize {
    100
}

fn default_slope_tolerance() -> f64 {
    0.15
}

struct Point {
    v_mag: f64,
    t: f64,
    quadrature: f64,
    tail: f64,
    snap_error: f64,
}

pub fn run(cfg: &CookSection, ctx: &Context) -> anyhow::Result<Report> {
    let dim = cfg.grid.dim();
    check_potential(&cfg.potential, dim)?;
    check_envelope(&cfg.envelope, dim)?;
    let order = FractionalOrder::new(cfg.rho).map_err(module("symbol"))?;
    if cfg.direction.len() != dim {
        anyhow::bail!("config: direction has {} components, grid has {dim} axes", cfg.direction.len());
    }
    let len = cfg.direction.iter().map(|c| c * c).sum::<f64>().sqrt();
    if !(len > 0.0) || cfg.speeds.is_empty() || !(cfg.travel > 0.0) || cfg.steps == 0 {
        anyhow::bail!("config: need a non-zero direction, speeds, positive travel and steps");
    }
    let phi0 = make_envelope_state(&cfg.grid, &cfg.envelope).map_err(module("wavepackets"))?;

    let points: Vec<Point> = cfg
        .speeds
        .par_iter()
        .map(|&speed| {
            let v: Vec<f64> = cfg.direction.iter().map(|c| c / len * speed).collect();
            let b = boost(&phi0, &v).map_err(module("wavepackets"))?;
            let v_mag = b.velocity.iter().map(|c| c * c).sum::<f64>().sqrt();
            let t = cfg.travel / order.group_speed(v_mag);
            let mut evo = EvolutionConfig::new(cfg.rho, t / cfg.steps as f64).map_err(module("dynamics"))?;
            if let Some(g) = cfg.wrap_guard {
                evo.wrap_guard = g;
            }
            if let Some(m) = cfg.mass_tolerance {
                evo.mass_tolerance = m;
            }
            let c = cook_integral(&cfg.potential, &b.field, t, &evo).map_err(module("estimates"))?;
            Ok(Point {
                v_mag,
                t,
                quadrature: c.quadrature,
                tail: c.tail,
                snap_error: b.snap_error,
            })
        })
        .collect::<anyhow::Result<_>>()?;

    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|p| {
            let total = p.quadrature + p.tail;
            [cfg.rho, cfg.envelope.eta, p.v_mag, p.t, cfg.travel, total, p.tail, p.snap_error]
                .into_iter()
                .map(num)
                .collect()
        })
        .collect();
    ctx.out.write_csv(CSV, &HEADER, &rows)?;

    // an uncertified tail leaves the quadrature as the best available value
    let uncertified = points.iter().filter(|p| !p.tail.is_finite()).count();
    let pts: Vec<(f64, f64)> = points
        .iter()
        .map(|p| {
            let value = if p.tail.is_finite() { p.quadrature + p.tail } else { p.quadrature };
            (p.v_mag.ln(), value.ln())
        })
        .collect();
    let expected = cfg.expected_slope.unwrap_or(1.0 - 2.0 * cfg.rho);
    let (pass, mut summary) = match slope(&pts) {
        Some(s) if s.is_finite() => (
            (s - expected).abs() <= cfg.slope_tolerance,
            format!("slope={s:.3} vs {expected:.3} +- {}", cfg.slope_tolerance),
        ),
        _ => (false, "slope undefined (need two distinct speeds with non-zero integrals)".to_string()),
    };
    if uncertified > 0 {
        summary.push_str(&format!(", {uncertified} tails uncertified"));
    }
    Ok(Report {
        pass,
        summary,
        files: vec![CSV.into()],
    })
}
