//! Short-range potential families, a sampling validator for their decay, and
//! a quadrature X-ray transform used as ground truth for reconstruction.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, GridSpec, Space};
use crate::symbol::euclid;

/// One term of a potential.
///
/// `Gaussian` is `c exp(-|x - x0|^2 / (2 w^2))`; `InversePower` is
/// `c <x - x0>^(-gamma)` with `<y> = sqrt(1 + |y|^2)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialTerm {
    Gaussian {
        amplitude: f64,
        center: Vec<f64>,
        width: f64,
    },
    InversePower {
        amplitude: f64,
        center: Vec<f64>,
        gamma: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    Zero,
    Gaussian,
    InversePower,
    Sum,
}

/// A real potential given as a sum of terms; no terms means `V = 0`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub terms: Vec<PotentialTerm>,
}

impl PotentialTerm {
    fn center(&self) -> &[f64] {
        match self {
            PotentialTerm::Gaussian { center, .. } | PotentialTerm::InversePower { center, .. } => {
                center
            }
        }
    }

    fn amplitude(&self) -> f64 {
        match self {
            PotentialTerm::Gaussian { amplitude, .. }
            | PotentialTerm::InversePower { amplitude, .. } => *amplitude,
        }
    }

    fn validate(&self) -> Result<()> {
        if !self.amplitude().is_finite() || self.center().iter().any(|c| !c.is_finite()) {
            return Err(Error::param("potential amplitude and center must be finite"));
        }
        match self {
            PotentialTerm::Gaussian { width, .. } if !(width.is_finite() && *width > 0.0) => {
                Err(Error::param(format!("gaussian width {width} must be positive")))
            }
            PotentialTerm::InversePower { gamma, .. } if !(gamma.is_finite() && *gamma > 1.0) => {
                Err(Error::param(format!(
                    "decay rate gamma = {gamma} must exceed 1 for a short-range potential"
                )))
            }
            _ => Ok(()),
        }
    }

    /// Radial profile without the amplitude, as a function of `|x - x0|^2`.
    #[inline]
    fn profile(&self, r2: f64) -> f64 {
        match self {
            PotentialTerm::Gaussian { width, .. } => (-r2 / (2.0 * width * width)).exp(),
            PotentialTerm::InversePower { gamma, .. } => (1.0 + r2).powf(-0.5 * gamma),
        }
    }

    fn value(&self, x: &[f64]) -> f64 {
        let r2 = dist2(x, self.center());
        self.amplitude() * self.profile(r2)
    }

    fn add_grad(&self, x: &[f64], out: &mut [f64]) {
        let r2 = dist2(x, self.center());
        let coef = match self {
            PotentialTerm::Gaussian {
                amplitude, width, ..
            } => -amplitude * self.profile(r2) / (width * width),
            PotentialTerm::InversePower {
                amplitude, gamma, ..
            } => -amplitude * gamma * (1.0 + r2).powf(-0.5 * gamma - 1.0),
        };
        for ((o, xi), ci) in out.iter_mut().zip(x).zip(self.center()) {
            *o += coef * (xi - ci);
        }
    }

    /// Bound on `int_a^inf |term|` along a line whose squared distance from
    /// the center is `b2`, parametrized by arclength from the closest point.
    fn line_tail_bound(&self, b2: f64, a: f64) -> f64 {
        let c = self.amplitude().abs();
        match self {
            PotentialTerm::Gaussian { width, .. } => {
                c * (-b2 / (2.0 * width * width)).exp() * gaussian_tail(a, *width)
            }
            PotentialTerm::InversePower { gamma, .. } => {
                let big_b = (1.0 + b2).sqrt();
                let g = *gamma;
                // (B^2 + s^2)^(-g/2) <= B^(-g) on [a, B] and <= s^(-g) beyond B
                let flat = (big_b - a).max(0.0) * big_b.powf(-g);
                let from = a.max(big_b);
                c * (flat + from.powf(1.0 - g) / (g - 1.0))
            }
        }
    }
}

impl PotentialSpec {
    pub fn zero() -> Self {
        PotentialSpec::default()
    }

    pub fn gaussian(amplitude: f64, center: Vec<f64>, width: f64) -> Result<Self> {
        PotentialSpec::from_terms(vec![PotentialTerm::Gaussian {
            amplitude,
            center,
            width,
        }])
    }

    pub fn inverse_power(amplitude: f64, center: Vec<f64>, gamma: f64) -> Result<Self> {
        PotentialSpec::from_terms(vec![PotentialTerm::InversePower {
            amplitude,
            center,
            gamma,
        }])
    }

    pub fn from_terms(terms: Vec<PotentialTerm>) -> Result<Self> {
        let spec = PotentialSpec { terms };
        spec.validate()?;
        Ok(spec)
    }

    /// Sum of two potentials.
    pub fn plus(&self, other: &PotentialSpec) -> PotentialSpec {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        PotentialSpec { terms }
    }

    pub fn validate(&self) -> Result<()> {
        let dims: Vec<usize> = self.terms.iter().map(|t| t.center().len()).collect();
        if dims.windows(2).any(|w| w[0] != w[1]) {
            return Err(Error::param("potential terms have mismatched dimensions"));
        }
        self.terms.iter().try_for_each(PotentialTerm::validate)
    }

    /// Checks that every term lives in dimension `n`.
    pub fn check_dim(&self, n: usize) -> Result<()> {
        match self.terms.iter().find(|t| t.center().len() != n) {
            Some(t) => Err(Error::param(format!(
                "potential term of dimension {} on a {n}-dimensional grid",
                t.center().len()
            ))),
            None => Ok(()),
        }
    }

    pub fn family(&self) -> Family {
        match self.terms.as_slice() {
            [] => Family::Zero,
            [PotentialTerm::Gaussian { .. }] => Family::Gaussian,
            [PotentialTerm::InversePower { .. }] => Family::InversePower,
            _ => Family::Sum,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.amplitude() == 0.0)
    }

    /// Every center shifted by `shift`.
    pub fn translated(&self, shift: &[f64]) -> PotentialSpec {
        let terms = self
            .terms
            .iter()
            .cloned()
            .map(|mut t| {
                match &mut t {
                    PotentialTerm::Gaussian { center, .. }
                    | PotentialTerm::InversePower { center, .. } => {
                        center.iter_mut().zip(shift).for_each(|(c, s)| *c += s)
                    }
                }
                t
            })
            .collect();
        PotentialSpec { terms }
    }

    /// Every amplitude multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> PotentialSpec {
        let terms = self
            .terms
            .iter()
            .cloned()
            .map(|mut t| {
                match &mut t {
                    PotentialTerm::Gaussian { amplitude, .. }
                    | PotentialTerm::InversePower { amplitude, .. } => *amplitude *= factor,
                }
                t
            })
            .collect();
        PotentialSpec { terms }
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.value(x)).sum()
    }

    pub fn evaluate_grad(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        for t in &self.terms {
            t.add_grad(x, &mut g);
        }
        g
    }

    /// `sum |c_i| profile_i(x)`, an upper envelope of `|V|`.
    pub fn envelope(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| t.amplitude().abs() * t.profile(dist2(x, t.center())))
            .sum()
    }

    /// `V` at every position node of `grid`.
    pub fn sample_on_grid(&self, grid: &GridSpec) -> Result<Vec<f64>> {
        self.check_dim(grid.dim())?;
        Ok(grid.sample(Space::Position, |x| self.evaluate(x)))
    }

    /// `V` on `grid` as a real position-space field.
    pub fn to_field(&self, grid: &GridSpec) -> Result<Field> {
        self.check_dim(grid.dim())?;
        Ok(Field::from_fn(*grid, Space::Position, |x| self.evaluate(x).into()))
    }

    /// `int_0^inf envelope(start + s dir) ds` for a unit `dir`, by a mapped
    /// midpoint rule.
    pub fn envelope_ray_integral(&self, start: &[f64], dir: &[f64]) -> f64 {
        const NODES: usize = 4000;
        let scale = self
            .terms
            .iter()
            .map(|t| match t {
                PotentialTerm::Gaussian { width, .. } => *width,
                PotentialTerm::InversePower { .. } => 1.0,
            })
            .fold(1.0, f64::max)
            .max(euclid(start));
        let mut p = vec![0.0; start.len()];
        let mut sum = 0.0;
        for k in 0..NODES {
            let u = (k as f64 + 0.5) / NODES as f64;
            let s = scale * u / (1.0 - u);
            let jac = scale / ((1.0 - u) * (1.0 - u));
            for ((pi, a), d) in p.iter_mut().zip(start).zip(dir) {
                *pi = a + s * d;
            }
            sum += self.envelope(&p) * jac;
        }
        sum / NODES as f64
    }
}

fn dist2(x: &[f64], c: &[f64]) -> f64 {
    x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Complementary error function (Chebyshev fit, relative error below 1.2e-7).
pub(crate) fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let poly = -z * z - 1.265_512_23
        + t * (1.000_023_68
            + t * (0.374_091_96
                + t * (0.096_784_18
                    + t * (-0.186_288_06
                        + t * (0.278_868_07
                            + t * (-1.135_203_98
                                + t * (1.488_515_87 + t * (-0.822_152_23 + t * 0.170_872_77))))))));
    let r = t * poly.exp();
    if x >= 0.0 {
        r
    } else {
        2.0 - r
    }
}

/// `int_a^inf exp(-s^2 / (2 w^2)) ds`.
fn gaussian_tail(a: f64, w: f64) -> f64 {
    w * (PI / 2.0).sqrt() * erfc(a / (w * 2f64.sqrt()))
}

/// Result of [`verify_short_range`].
#[derive(Clone, Debug, PartialEq)]
pub struct ShortRangeReport {
    /// `sup <x>^gamma |V|` over the samples.
    pub c0: f64,
    /// `sup <x>^(gamma+1) |grad V|` over the samples.
    pub c1: f64,
    /// Radius where each supremum was attained.
    pub c0_radius: f64,
    pub c1_radius: f64,
    /// Least-squares slope of `log sup|V|` against `log <r>`.
    pub decay_slope: f64,
    /// Slopes of the weighted ratios over the outer half of the radii; a
    /// bounded ratio has slope near zero or below.
    pub ratio_slope_value: f64,
    pub ratio_slope_grad: f64,
    pub passes: bool,
}

/// Growth allowed in the weighted ratios before the claim is rejected.
const RATIO_SLOPE_TOLERANCE: f64 = 0.05;

/// Samples `|V|` and `|grad V|` on spheres of the given radii about the origin
/// and checks the decay `|d^beta V| <= C <x>^(-gamma - |beta|)` for `|beta| <= 1`.
pub fn verify_short_range(
    spec: &PotentialSpec,
    dim: usize,
    gamma_claim: f64,
    radii: &[f64],
) -> Result<ShortRangeReport> {
    if radii.is_empty() {
        return Err(Error::param("no radii to sample"));
    }
    if radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) || radii.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(Error::param("radii must be positive and increasing"));
    }
    if !(1..=3).contains(&dim) {
        return Err(Error::param(format!("dimension {dim} not in 1..=3")));
    }
    spec.check_dim(dim)?;
    let dirs = sphere_directions(dim);
    let mut sup_v = Vec::with_capacity(radii.len());
    let mut sup_g = Vec::with_capacity(radii.len());
    for &r in radii {
        let (mut mv, mut mg) = (0.0f64, 0.0f64);
        for d in &dirs {
            let x: Vec<f64> = d.iter().map(|c| c * r).collect();
            mv = mv.max(spec.evaluate(&x).abs());
            mg = mg.max(euclid(&spec.evaluate_grad(&x)));
        }
        sup_v.push(mv);
        sup_g.push(mg);
    }
    let bracket: Vec<f64> = radii.iter().map(|r| (1.0 + r * r).sqrt()).collect();
    let ratio_v: Vec<f64> = sup_v
        .iter()
        .zip(&bracket)
        .map(|(v, b)| v * b.powf(gamma_claim))
        .collect();
    let ratio_g: Vec<f64> = sup_g
        .iter()
        .zip(&bracket)
        .map(|(g, b)| g * b.powf(gamma_claim + 1.0))
        .collect();
    let argmax = |v: &[f64]| {
        v.iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, x)| if *x > acc.1 { (i, *x) } else { acc })
    };
    let (i0, c0) = argmax(&ratio_v);
    let (i1, c1) = argmax(&ratio_g);

    let log_b: Vec<f64> = bracket.iter().map(|b| b.ln()).collect();
    let decay_slope = loglog_slope(&log_b, &sup_v).unwrap_or(f64::NEG_INFINITY);
    let outer = radii.len() / 2;
    let ratio_slope_value =
        loglog_slope(&log_b[outer..], &ratio_v[outer..]).unwrap_or(f64::NEG_INFINITY);
    let ratio_slope_grad =
        loglog_slope(&log_b[outer..], &ratio_g[outer..]).unwrap_or(f64::NEG_INFINITY);
    let passes = c0.is_finite()
        && c1.is_finite()
        && ratio_slope_value <= RATIO_SLOPE_TOLERANCE
        && ratio_slope_grad <= RATIO_SLOPE_TOLERANCE;
    Ok(ShortRangeReport {
        c0,
        c1,
        c0_radius: radii[i0],
        c1_radius: radii[i1],
        decay_slope,
        ratio_slope_value,
        ratio_slope_grad,
        passes,
    })
}

/// Slope of `log y` against `x`, skipping non-positive `y`. `None` with fewer
/// than two usable points.
fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(_, y)| **y > 0.0 && y.is_finite())
        .map(|(x, y)| (*x, y.ln()))
        .collect();
    least_squares_slope(&pts)
}

pub(crate) fn least_squares_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        None
    } else {
        Some(sxy / sxx)
    }
}

fn sphere_directions(dim: usize) -> Vec<Vec<f64>> {
    match dim {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..64)
            .map(|k| {
                let a = 2.0 * PI * k as f64 / 64.0;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        _ => {
            // Fibonacci lattice on the unit sphere
            let n = 128;
            let golden = PI * (3.0 - 5f64.sqrt());
            (0..n)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
                    let r = (1.0 - z * z).sqrt();
                    let a = golden * k as f64;
                    vec![r * a.cos(), r * a.sin(), z]
                })
                .collect()
        }
    }
}

/// Integration window and step of the X-ray quadrature.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineQuadrature {
    pub t_max: f64,
    pub dt: f64,
}

/// A line integral together with a bound on the neglected tails `|t| > t_max`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct XrayValue {
    pub value: f64,
    pub tail_bound: f64,
}

/// `int_{-T}^{T} V(point + direction t) dt` by composite Simpson.
pub fn xray_oracle(
    spec: &PotentialSpec,
    direction: &[f64],
    point: &[f64],
    quadrature: LineQuadrature,
) -> Result<XrayValue> {
    if direction.len() != point.len() {
        return Err(Error::param("direction and point dimensions differ"));
    }
    if (euclid(direction) - 1.0).abs() > 1e-12 {
        return Err(Error::param(format!(
            "direction must be a unit vector (|d| = {})",
            euclid(direction)
        )));
    }
    let LineQuadrature { t_max, dt } = quadrature;
    if !(t_max > 0.0 && dt > 0.0 && dt <= t_max) {
        return Err(Error::param("quadrature needs 0 < dt <= t_max"));
    }
    let mut intervals = (2.0 * t_max / dt).ceil() as usize;
    if intervals % 2 == 1 {
        intervals += 1;
    }
    let h = 2.0 * t_max / intervals as f64;
    let mut p = vec![0.0; point.len()];
    let mut at = |t: f64| {
        for ((pi, a), d) in p.iter_mut().zip(point).zip(direction) {
            *pi = a + t * d;
        }
        spec.evaluate(&p)
    };
    let mut sum = at(-t_max) + at(t_max);
    for k in 1..intervals {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * at(-t_max + k as f64 * h);
    }
    let value = sum * h / 3.0;

    let tail_bound = spec
        .terms
        .iter()
        .map(|term| {
            // closest approach of the line to the term center
            let rel: Vec<f64> = point.iter().zip(term.center()).map(|(a, c)| a - c).collect();
            let along: f64 = rel.iter().zip(direction).map(|(r, d)| r * d).sum();
            let b2 = (dist2(point, term.center()) - along * along).max(0.0);
            // t + along is the arclength from the closest point
            term.line_tail_bound(b2, t_max + along) + term.line_tail_bound(b2, t_max - along)
        })
        .sum();
    Ok(XrayValue { value, tail_bound })
}
