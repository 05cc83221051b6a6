//! Frequency-localized packets, lattice boosts, and the spatial cutoffs used
//! by the propagation estimate.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, GridSpec, Space};
use crate::symbol::FractionalOrder;

/// Frequency envelope shape. Only the compactly supported bump is offered.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeShape {
    #[default]
    Bump,
}

/// A packet whose Fourier transform is `exp(-1/(1 - |xi/eta|^2))` inside the
/// ball of radius `eta` and zero outside, translated to `center`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeSpec {
    pub eta: f64,
    #[serde(default)]
    pub shape: EnvelopeShape,
    pub center: Vec<f64>,
}

impl EnvelopeSpec {
    pub fn new(eta: f64, center: Vec<f64>) -> Result<Self> {
        let spec = EnvelopeSpec {
            eta,
            shape: EnvelopeShape::Bump,
            center,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::param(format!("eta = {} must be positive", self.eta)));
        }
        if self.center.iter().any(|c| !c.is_finite()) {
            return Err(Error::param("envelope center must be finite"));
        }
        Ok(())
    }

    pub fn with_center(&self, center: Vec<f64>) -> EnvelopeSpec {
        EnvelopeSpec {
            center,
            ..self.clone()
        }
    }
}

/// `exp(-1/(1 - r^2))` for `r < 1`, zero otherwise.
#[inline]
pub fn bump(r: f64) -> f64 {
    if r < 1.0 {
        (-1.0 / (1.0 - r * r)).exp()
    } else {
        0.0
    }
}

/// The normalized packet of `spec`, returned in frequency space so that the
/// support is exact.
pub fn make_envelope_state(grid: &GridSpec, spec: &EnvelopeSpec) -> Result<Field> {
    spec.validate()?;
    if spec.center.len() != grid.dim() {
        return Err(Error::param(format!(
            "envelope center has {} components on a {}-dimensional grid",
            spec.center.len(),
            grid.dim()
        )));
    }
    if 2.0 * spec.eta > grid.nyquist() {
        return Err(Error::resolution(format!(
            "eta = {} needs a Nyquist frequency of at least {}, grid has {}",
            spec.eta,
            2.0 * spec.eta,
            grid.nyquist()
        )));
    }
    if spec.eta <= 2.0 * grid.freq_spacing() {
        return Err(Error::resolution(format!(
            "eta = {} spans too few frequency bins (spacing {})",
            spec.eta,
            grid.freq_spacing()
        )));
    }
    let field = Field::from_fn(*grid, Space::Frequency, |xi| {
        let r2: f64 = xi.iter().map(|x| x * x).sum();
        let amp = bump(r2.sqrt() / spec.eta);
        if amp == 0.0 {
            return Complex64::default();
        }
        let phase: f64 = xi.iter().zip(&spec.center).map(|(x, c)| x * c).sum();
        Complex64::from_polar(amp, -phase)
    });
    let norm = field.norm();
    Ok(field.scaled(Complex64::from(1.0 / norm)))
}

/// A boosted packet with the lattice velocity actually used.
#[derive(Clone, Debug)]
pub struct Boosted {
    pub field: Field,
    pub velocity: Vec<f64>,
    /// Distance between the requested and the snapped velocity.
    pub snap_error: f64,
}

/// Relative magnitude below which a frequency coefficient counts as empty
/// when measuring support radii.
const SUPPORT_FLOOR: f64 = 1e-14;

/// Radius of the smallest origin-centered ball holding the frequency support.
pub fn frequency_support_radius(field: &Field) -> f64 {
    let freq = field.in_space(Space::Frequency);
    let peak = freq.values().iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut radius = 0.0f64;
    field.grid().for_each_node(Space::Frequency, |i, xi| {
        if freq.values()[i].norm() > SUPPORT_FLOOR * peak {
            radius = radius.max(xi.iter().map(|x| x * x).sum::<f64>().sqrt());
        }
    });
    radius
}

/// Largest `|xi_i + v_i|` over the frequency support of `field`.
fn shifted_axis_reach(field: &Field, v: &[f64]) -> f64 {
    let freq = field.in_space(Space::Frequency);
    let peak = freq.values().iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut reach = 0.0f64;
    field.grid().for_each_node(Space::Frequency, |i, xi| {
        if freq.values()[i].norm() > SUPPORT_FLOOR * peak {
            for (x, c) in xi.iter().zip(v) {
                reach = reach.max((x + c).abs());
            }
        }
    });
    reach
}

/// Multiplies by `exp(i v.x)` with `v` snapped to the frequency lattice. The
/// shift is carried out on frequency bins, so support moves bin-exactly.
pub fn boost(phi0: &Field, v: &[f64]) -> Result<Boosted> {
    let grid = *phi0.grid();
    if v.len() != grid.dim() || v.iter().any(|c| !c.is_finite()) {
        return Err(Error::param("boost velocity must be finite with one component per axis"));
    }
    let (velocity, snap_error) = grid.snap_to_lattice(v);
    let reach = shifted_axis_reach(phi0, &velocity);
    if reach >= grid.nyquist() {
        return Err(Error::resolution(format!(
            "boosted support reaches |xi_i| = {reach}, Nyquist frequency is {}",
            grid.nyquist()
        )));
    }
    let m = grid.points() as i64;
    let dk = grid.freq_spacing();
    let shift: Vec<i64> = velocity.iter().map(|c| (c / dk).round() as i64).collect();
    let freq = phi0.in_space(Space::Frequency);
    let src = freq.values();
    let mut out = vec![Complex64::default(); src.len()];
    let dim = grid.dim();
    for (flat, value) in src.iter().enumerate() {
        if *value == Complex64::default() {
            continue;
        }
        let mut rest = flat;
        let mut target = 0i64;
        let mut stride = 1i64;
        for a in (0..dim).rev() {
            let idx = (rest % grid.points()) as i64;
            rest /= grid.points();
            target += (idx + shift[a]).rem_euclid(m) * stride;
            stride *= m;
        }
        out[target as usize] = *value;
    }
    let field = Field::new(grid, Space::Frequency, out)?.in_space(phi0.space());
    Ok(Boosted {
        field,
        velocity,
        snap_error,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoffKind {
    SharpBall,
    SmoothChi,
}

/// Smooth radial step: 0 for `s <= 1`, 1 for `s >= 2`, monotone in between.
pub fn chi(s: f64) -> f64 {
    let g = |u: f64| if u > 0.0 { (-1.0 / u).exp() } else { 0.0 };
    if s <= 1.0 {
        0.0
    } else if s >= 2.0 {
        1.0
    } else {
        let a = g(s - 1.0);
        a / (a + g(2.0 - s))
    }
}

/// Real mask on the position nodes, with distances taken on the torus.
pub fn cutoff(grid: &GridSpec, kind: CutoffKind, center: &[f64], radius: f64) -> Result<Vec<f64>> {
    if center.len() != grid.dim() {
        return Err(Error::param("cutoff center dimension does not match the grid"));
    }
    if !(radius > 2.0 * grid.spacing()) {
        return Err(Error::resolution(format!(
            "cutoff radius {radius} must exceed twice the spacing {}",
            grid.spacing()
        )));
    }
    Ok(grid.sample(Space::Position, |x| {
        let r = periodic_distance(grid, x, center);
        match kind {
            CutoffKind::SharpBall => {
                if r <= radius {
                    1.0
                } else {
                    0.0
                }
            }
            CutoffKind::SmoothChi => chi(r / radius),
        }
    }))
}

pub(crate) fn periodic_distance(grid: &GridSpec, x: &[f64], c: &[f64]) -> f64 {
    x.iter()
        .zip(c)
        .map(|(a, b)| grid.periodic_delta(*a, *b).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Frequency filter for the propagation estimate: a bump of radius `eta`
/// around `v`, further tapered by a Gaussian so that its transform decays
/// fast at the scales a finite grid can reach. Bounded by 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyFilter {
    /// Gaussian taper `exp(-taper r^2)` in units of `r = |xi - v| / eta`.
    pub taper: f64,
    /// Exponent applied to the unit-height bump `exp(-r^2/(1 - r^2))`.
    pub power: f64,
}

impl Default for FrequencyFilter {
    fn default() -> Self {
        FrequencyFilter {
            taper: 8.0,
            power: 1.0,
        }
    }
}

impl FrequencyFilter {
    /// Value at relative radius `r = |xi - v| / eta`.
    pub fn profile(&self, r: f64) -> f64 {
        if r >= 1.0 {
            return 0.0;
        }
        let r2 = r * r;
        (-self.taper * r2 - self.power * r2 / (1.0 - r2)).exp()
    }

    /// The filter on every frequency node.
    pub fn mask(&self, grid: &GridSpec, v: &[f64], eta: f64) -> Vec<f64> {
        grid.sample(Space::Frequency, |xi| {
            let r2: f64 = xi.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
            self.profile(r2.sqrt() / eta)
        })
    }
}

/// Expectation of position, `int x |f|^2 / int |f|^2`, in plain coordinates.
pub fn position_centroid(field: &Field) -> Vec<f64> {
    weighted_mean(field, Space::Position, |x, out| out.copy_from_slice(x))
}

/// Mean of `grad omega` under the frequency density of `field`.
pub fn mean_group_velocity(field: &Field, order: FractionalOrder) -> Result<Vec<f64>> {
    let freq = field.in_space(Space::Frequency);
    let mut singular = false;
    let mean = weighted_mean(&freq, Space::Frequency, |xi, out| match order.grad(xi) {
        Ok(g) => out.copy_from_slice(&g),
        Err(_) => {
            singular = true;
            out.iter_mut().for_each(|o| *o = 0.0);
        }
    });
    if singular {
        return Err(Error::Singularity { rho: order.value() });
    }
    Ok(mean)
}

fn weighted_mean(field: &Field, space: Space, mut g: impl FnMut(&[f64], &mut [f64])) -> Vec<f64> {
    let f = field.in_space(space);
    let dim = f.grid().dim();
    let mut acc = vec![0.0; dim];
    let mut val = vec![0.0; dim];
    let mut total = 0.0;
    f.grid().for_each_node(space, |i, x| {
        let w = f.values()[i].norm_sqr();
        if w == 0.0 {
            return;
        }
        g(x, &mut val);
        total += w;
        acc.iter_mut().zip(&val).for_each(|(a, v)| *a += w * v);
    });
    acc.iter().map(|a| a / total).collect()
}
