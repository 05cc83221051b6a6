//! `verify-propagation`: operator norms of the propagation-estimate sandwich
//! over a sweep, with a decay-slope fit and a scale-collapse check.

use rayon::prelude::*;
use serde::Deserialize;

use flscat_core::estimates::{fit_decay, sweep_point, PowerIteration, SweepRecord, NOISE_FLOOR};
use flscat_core::wavepackets::FrequencyFilter;
use flscat_core::{GridSpec, SymbolParams};

use super::module;
use crate::output::num;
use crate::{Context, Report};

pub const CSV: &str = "propagation.csv";
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
pub struct PropagationSection {
    pub grid: GridSpec,
    pub rho: f64,
    pub eta: f64,
    /// Direction of the velocity; only its orientation matters.
    pub direction: Vec<f64>,
    /// Speeds `|v|`, snapped to the frequency lattice per point.
    pub speeds: Vec<f64>,
    /// Times `t` paired with every speed. Exclusive with `scales`.
    #[serde(default)]
    pub times: Vec<f64>,
    /// Scales `s = |v|^(2 rho - 1) t` paired with every speed.
    #[serde(default)]
    pub scales: Vec<f64>,
    #[serde(default = "default_max_slope")]
    pub max_slope: f64,
    /// Smallest accepted ratio of the largest to the smallest fitted scale.
    #[serde(default = "default_min_span")]
    pub min_scale_span: f64,
    /// Largest accepted norm ratio between speeds at one scale; scale sweeps only.
    #[serde(default = "default_max_collapse")]
    pub max_collapse: f64,
    #[serde(default)]
    pub filter: FrequencyFilter,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_max_slope() -> f64 {
    -3.0
}

fn default_min_span() -> f64 {
    10.0
}

fn default_max_collapse() -> f64 {
    3.0
}

fn default_max_iters() -> usize {
    PowerIteration::default().max_iters
}

fn default_tol() -> f64 {
    PowerIteration::default().tol
}

pub fn run(cfg: &PropagationSection, ctx: &Context) -> anyhow::Result<Report> {
    let by_scale = match (cfg.times.is_empty(), cfg.scales.is_empty()) {
        (false, true) => false,
        (true, false) => true,
        _ => anyhow::bail!("config: give exactly one of `times` and `scales`"),
    };
    if cfg.speeds.is_empty() {
        anyhow::bail!("config: `speeds` is empty");
    }
    let base = SymbolParams::new(cfg.rho, cfg.eta, cfg.direction.clone()).map_err(module("symbol"))?;
    if cfg.direction.len() != cfg.grid.dim() {
        anyhow::bail!("config: direction has {} components, grid has {} axes", cfg.direction.len(), cfg.grid.dim());
    }
    let settings = PowerIteration {
        max_iters: cfg.max_iters,
        tol: cfg.tol,
        seed: ctx.seed,
    };
    let second = if by_scale { &cfg.scales } else { &cfg.times };
    let points: Vec<(f64, f64)> = cfg
        .speeds
        .iter()
        .flat_map(|&v| second.iter().map(move |&x| (v, x)))
        .collect();
    let records: Vec<SweepRecord> = points
        .par_iter()
        .map(|&(v, x)| {
            let t = if by_scale { x / v.powf(2.0 * cfg.rho - 1.0) } else { x };
            sweep_point(&base, v, t, &cfg.grid, &cfg.filter, &settings).map_err(module("estimates"))
        })
        .collect::<anyhow::Result<_>>()?;

    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            [r.rho, r.eta, r.v_mag, r.t, r.scale_s, r.norm_or_integral, r.estimator_residual, r.snap_error]
                .into_iter()
                .map(num)
                .collect()
        })
        .collect();
    ctx.out.write_csv(CSV, &HEADER, &rows)?;

    let fit = fit_decay(&records).map_err(module("estimates"))?;
    let mut pass = fit.slope <= cfg.max_slope && fit.scale_span >= cfg.min_scale_span;
    let mut summary = format!(
        "slope={:.2} <= {:.1} over s x{:.1} ({} records)",
        fit.slope, cfg.max_slope, fit.scale_span, fit.used
    );
    if by_scale && cfg.speeds.len() > 1 {
        let n = cfg.scales.len();
        let collapse = (0..n)
            .map(|j| {
                let norms = records
                    .iter()
                    .skip(j)
                    .step_by(n)
                    .map(|r| r.norm_or_integral)
                    .filter(|&x| x > NOISE_FLOOR);
                let (lo, hi) = norms.fold((f64::INFINITY, 0.0f64), |(lo, hi), x| (lo.min(x), hi.max(x)));
                if hi > 0.0 { hi / lo } else { 1.0 }
            })
            .fold(1.0f64, f64::max);
        pass &= collapse <= cfg.max_collapse;
        summary.push_str(&format!(", collapse {collapse:.2} <= {:.1}", cfg.max_collapse));
    }
    let unconverged = records.iter().filter(|r| !r.converged).count();
    if unconverged > 0 {
        summary.push_str(&format!(", {unconverged} unconverged"));
    }
    Ok(Report {
        pass,
        summary,
        files: vec![CSV.into()],
    })
}
