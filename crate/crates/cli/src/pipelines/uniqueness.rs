//! `uniqueness`: probe values of the functional for two potentials, with a
//! discretization noise floor and a rigid-shift control.

use std::f64::consts::PI;

use serde::Deserialize;

use flscat_core::dynamics::EvolutionConfig;
use flscat_core::potentials::PotentialSpec;
use flscat_core::reconstruction::{
    uniqueness_test, ProbePoint, UniquenessProbe, Verdict, DEFAULT_CONTROL_SHIFT, DEFAULT_HORIZON_FACTOR,
};
use flscat_core::scattering::ScatteringConfig;
use flscat_core::GridSpec;

use super::{check_potential, module};
use crate::output::num;
use crate::{Context, Report};

pub const CSV: &str = "uniqueness.csv";

/// Probes at `directions` angles evenly spread over `[0, pi)`, each at the
/// given signed offsets along the normal `(-sin, cos)`.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fan {
    pub speed: f64,
    pub directions: usize,
    pub offsets: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    Distinguishable,
    Indistinguishable,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniquenessSection {
    pub grid: GridSpec,
    pub rho: f64,
    pub eta: f64,
    pub first: PotentialSpec,
    /// The second potential; `first` translated by `translate` when absent.
    #[serde(default)]
    pub second: Option<PotentialSpec>,
    #[serde(default)]
    pub translate: Option<Vec<f64>>,
    #[serde(default)]
    pub fan: Option<Fan>,
    #[serde(default)]
    pub probes: Vec<ProbePoint>,
    pub horizon: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_tail_tolerance")]
    pub tail_tolerance: f64,
    #[serde(default)]
    pub wrap_guard: Option<f64>,
    #[serde(default)]
    pub mass_tolerance: Option<f64>,
    #[serde(default)]
    pub horizon_factor: Option<f64>,
    #[serde(default)]
    pub control_shift: Option<Vec<f64>>,
    #[serde(default = "default_expect")]
    pub expect: Expectation,
    /// Largest accepted control difference, in units of the noise floor.
    #[serde(default = "default_control_factor")]
    pub control_factor: f64,
}

fn default_steps() -> usize {
    60
}

fn default_tail_tolerance() -> f64 {
    f64::INFINITY
}

fn default_expect() -> Expectation {
    Expectation::Distinguishable
}

fn default_control_factor() -> f64 {
    2.0
}

fn fan_probes(fan: &Fan, dim: usize) -> anyhow::Result<Vec<ProbePoint>> {
    if dim != 2 {
        anyhow::bail!("config: a probe fan needs a two-dimensional grid; list `probes` instead");
    }
    let mut out = Vec::with_capacity(fan.directions * fan.offsets.len());
    for a in 0..fan.directions {
        let (s, c) = (a as f64 * PI / fan.directions as f64).sin_cos();
        for b in &fan.offsets {
            out.push(ProbePoint {
                velocity: vec![fan.speed * c, fan.speed * s],
                center: vec![-b * s, b * c],
            });
        }
    }
    Ok(out)
}

pub fn run(cfg: &UniquenessSection, ctx: &Context) -> anyhow::Result<Report> {
    let dim = cfg.grid.dim();
    check_potential(&cfg.first, dim)?;
    let second = match (&cfg.second, &cfg.translate) {
        (Some(v), None) => v.clone(),
        (None, Some(shift)) if shift.len() == dim => cfg.first.translated(shift),
        (None, Some(_)) => anyhow::bail!("config: translate needs one component per axis"),
        _ => anyhow::bail!("config: give exactly one of `second` and `translate`"),
    };
    check_potential(&second, dim)?;
    let mut probes = cfg.probes.clone();
    if let Some(fan) = &cfg.fan {
        probes.extend(fan_probes(fan, dim)?);
    }
    if cfg.steps == 0 {
        anyhow::bail!("config: steps must be positive");
    }
    let mut evolution = EvolutionConfig::new(cfg.rho, cfg.horizon / cfg.steps as f64).map_err(module("dynamics"))?;
    if let Some(g) = cfg.wrap_guard {
        evolution.wrap_guard = g;
    }
    if let Some(m) = cfg.mass_tolerance {
        evolution.mass_tolerance = m;
    }
    let probe = UniquenessProbe {
        grid: cfg.grid,
        eta: cfg.eta,
        probes,
        scattering: ScatteringConfig {
            horizon: cfg.horizon,
            tail_tolerance: cfg.tail_tolerance,
            evolution,
        },
        horizon_factor: cfg.horizon_factor.unwrap_or(DEFAULT_HORIZON_FACTOR),
        control_shift: cfg
            .control_shift
            .clone()
            .unwrap_or_else(|| DEFAULT_CONTROL_SHIFT[..dim].to_vec()),
    };
    let r = uniqueness_test(&cfg.first, &second, &probe).map_err(module("reconstruction"))?;

    let mut header: Vec<String> = (0..dim).map(|i| format!("v_{i}")).collect();
    header.extend((0..dim).map(|i| format!("center_{i}")));
    header.extend(
        ["re_first", "im_first", "re_second", "im_second", "difference", "noise", "re_control", "im_control"]
            .map(String::from),
    );
    let rows: Vec<Vec<String>> = r
        .records
        .iter()
        .map(|p| {
            let mut row: Vec<f64> = p.velocity.iter().chain(&p.center).cloned().collect();
            row.extend([
                p.first.re,
                p.first.im,
                p.second.re,
                p.second.im,
                (p.first - p.second).norm(),
                p.noise,
                p.control.re,
                p.control.im,
            ]);
            row.into_iter().map(num).collect()
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    ctx.out.write_csv(CSV, &header, &rows)?;

    let expected = match cfg.expect {
        Expectation::Distinguishable => Verdict::Distinguishable,
        Expectation::Indistinguishable => Verdict::Indistinguishable,
    };
    let control_ok = r.control_difference <= cfg.control_factor * r.noise_floor;
    Ok(Report {
        pass: r.verdict == expected && control_ok,
        summary: format!(
            "difference={:.3e} vs 10 x floor {:.3e} -> {:?} (expected {:?}), control {:.3e} <= {} x floor",
            r.max_difference, r.noise_floor, r.verdict, expected, r.control_difference, cfg.control_factor
        ),
        files: vec![CSV.into()],
    })
}
