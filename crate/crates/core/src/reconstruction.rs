//! Sinograms of the high-velocity functional, their inversion by filtered
//! backprojection, and an empirical uniqueness probe.
//!
//! Angle `theta` selects the travel direction `(cos theta, sin theta)`; the
//! offset `b` places the packets at `b n` with `n = (-sin theta, cos theta)`.
//! A sinogram value is therefore a line integral over the line `x . n = b`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftDirection;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::fft_nd;
use crate::grid::{Field, GridSpec, Space};
use crate::potentials::{xray_oracle, LineQuadrature, PotentialSpec};
use crate::scattering::{require_above_half, HvValue, Scatterer, ScatteringConfig};
use crate::wavepackets::{make_envelope_state, EnvelopeSpec};

pub const MIN_ANGLES: usize = 16;
pub const MIN_OFFSETS: usize = 32;

/// Transverse marginal of the packet density `|Phi_0|^2`, as a density in
/// the offset relative to the packet center.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Smear {
    pub positions: Vec<f64>,
    pub density: Vec<f64>,
}

impl Smear {
    /// Marginal of `|phi0|^2` along the first axis. For radial packets it
    /// is the marginal across every direction.
    pub fn from_packet(phi0: &Field) -> Result<Smear> {
        let grid = *phi0.grid();
        if grid.dim() != 2 {
            return Err(Error::param("smear descriptors are two-dimensional"));
        }
        let p = phi0.in_space(Space::Position);
        let m = grid.points();
        let dx = grid.spacing();
        let total = p.norm_sqr();
        let mut density: Vec<f64> = (0..m)
            .map(|i| p.values()[i * m..(i + 1) * m].iter().map(|c| c.norm_sqr()).sum::<f64>() * dx / total)
            .collect();
        let mut positions = grid.position_axis();
        // the node at -L is also the node at +L: split it to keep the marginal even
        density[0] /= 2.0;
        density.push(density[0]);
        positions.push(grid.half_width());
        Ok(Smear { positions, density })
    }

    fn spacing(&self) -> f64 {
        self.positions[1] - self.positions[0]
    }

    /// `int m(s) exp(-i k s) ds`.
    pub fn transform(&self, k: f64) -> Complex64 {
        let h = self.spacing();
        self.positions
            .iter()
            .zip(&self.density)
            .map(|(s, m)| Complex64::from_polar(*m, -k * s))
            .sum::<Complex64>()
            * h
    }

    /// Second moment `int s^2 m(s) ds`.
    pub fn variance(&self) -> f64 {
        let h = self.spacing();
        self.positions.iter().zip(&self.density).map(|(s, m)| s * s * m).sum::<f64>() * h
    }
}

/// Sampled line integrals indexed by angle (rows) and offset (columns).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sinogram {
    pub angles: Vec<f64>,
    pub offsets: Vec<f64>,
    pub values: Vec<f64>,
    /// Imaginary part of the functional; zero for oracle sinograms.
    pub imag: Vec<f64>,
    /// Reference values for the same cells, when known.
    pub oracle: Option<Vec<f64>>,
    pub smear: Option<Smear>,
}

impl Sinogram {
    pub fn new(angles: Vec<f64>, offsets: Vec<f64>, values: Vec<f64>) -> Result<Sinogram> {
        let imag = vec![0.0; values.len()];
        let s = Sinogram {
            angles,
            offsets,
            values,
            imag,
            oracle: None,
            smear: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn zeros(angles: Vec<f64>, offsets: Vec<f64>) -> Sinogram {
        let n = angles.len() * offsets.len();
        Sinogram {
            angles,
            offsets,
            values: vec![0.0; n],
            imag: vec![0.0; n],
            oracle: None,
            smear: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.angles.len() * self.offsets.len();
        if self.values.len() != n || self.imag.len() != n {
            return Err(Error::Shape(format!(
                "{} angles x {} offsets needs {n} values, got {}",
                self.angles.len(),
                self.offsets.len(),
                self.values.len()
            )));
        }
        if self.oracle.as_ref().is_some_and(|o| o.len() != n) {
            return Err(Error::Shape("oracle values do not match the sinogram shape".into()));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(&self.values) || !finite(&self.imag) || !finite(&self.angles) || !finite(&self.offsets) {
            return Err(Error::param("sinogram entries must be finite"));
        }
        Ok(())
    }

    pub fn value(&self, angle: usize, offset: usize) -> f64 {
        self.values[angle * self.offsets.len() + offset]
    }

    pub fn row(&self, angle: usize) -> &[f64] {
        let n = self.offsets.len();
        &self.values[angle * n..(angle + 1) * n]
    }

    /// Cellwise sum, keeping the smear of `self`.
    pub fn add(&self, other: &Sinogram) -> Result<Sinogram> {
        if self.angles != other.angles || self.offsets != other.offsets {
            return Err(Error::Shape("sinograms are sampled differently".into()));
        }
        let sum = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + y).collect();
        Ok(Sinogram {
            angles: self.angles.clone(),
            offsets: self.offsets.clone(),
            values: sum(&self.values, &other.values),
            imag: sum(&self.imag, &other.imag),
            oracle: None,
            smear: self.smear.clone(),
        })
    }

    /// `|value - oracle| / max |oracle|` per cell.
    pub fn relative_errors(&self) -> Option<Vec<f64>> {
        let oracle = self.oracle.as_ref()?;
        let scale = oracle.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Some(
            self.values
                .iter()
                .zip(oracle)
                .map(|(v, o)| if scale > 0.0 { (v - o).abs() / scale } else { (v - o).abs() })
                .collect(),
        )
    }
}

/// `K` equally spaced angles `k pi / K` in `[0, pi)`.
pub fn uniform_angles(count: usize) -> Vec<f64> {
    (0..count).map(|k| k as f64 * PI / count as f64).collect()
}

/// `count` equally spaced offsets on `[-half_width, half_width]`.
pub fn uniform_offsets(count: usize, half_width: f64) -> Vec<f64> {
    if count < 2 {
        return vec![0.0; count];
    }
    let h = 2.0 * half_width / (count - 1) as f64;
    (0..count).map(|k| -half_width + k as f64 * h).collect()
}

fn unit(theta: f64) -> ([f64; 2], [f64; 2]) {
    let (s, c) = theta.sin_cos();
    ([c, s], [-s, c])
}

/// Runs the functional for packets translated across the lines of a sinogram.
pub struct SinogramSampler {
    grid: GridSpec,
    envelope: EnvelopeSpec,
    v_mag: f64,
    scatterer: Scatterer,
    smear: Smear,
}

impl SinogramSampler {
    pub fn new(
        grid: &GridSpec,
        potential: &PotentialSpec,
        envelope: &EnvelopeSpec,
        v_mag: f64,
        cfg: &ScatteringConfig,
    ) -> Result<Self> {
        require_above_half(cfg.evolution.rho)?;
        if grid.dim() != 2 {
            return Err(Error::param(format!(
                "sinograms are sampled in two dimensions, grid has {}",
                grid.dim()
            )));
        }
        if !(v_mag > 0.0 && v_mag.is_finite()) {
            return Err(Error::param(format!("|v| = {v_mag} must be positive")));
        }
        potential.check_dim(2)?;
        let centered = envelope.with_center(vec![0.0, 0.0]);
        let smear = Smear::from_packet(&make_envelope_state(grid, &centered)?)?;
        Ok(SinogramSampler {
            grid: *grid,
            envelope: centered,
            v_mag,
            scatterer: Scatterer::new(grid, potential, cfg)?,
            smear,
        })
    }

    pub fn smear(&self) -> &Smear {
        &self.smear
    }

    /// The functional for travel angle `theta` and packets centered at `b n`.
    pub fn cell(&self, theta: f64, b: f64) -> Result<HvValue> {
        let (dir, normal) = unit(theta);
        let packet = make_envelope_state(&self.grid, &self.envelope.with_center(vec![b * normal[0], b * normal[1]]))?;
        let v = [self.v_mag * dir[0], self.v_mag * dir[1]];
        self.scatterer.hv_functional(&packet, &packet, &v)
    }

    /// Every cell, angle-major.
    pub fn cells(angles: &[f64], offsets: &[f64]) -> Vec<(f64, f64)> {
        angles
            .iter()
            .flat_map(|&a| offsets.iter().map(move |&b| (a, b)))
            .collect()
    }

    /// Builds the sinogram from values computed for [`SinogramSampler::cells`].
    pub fn assemble(&self, angles: &[f64], offsets: &[f64], cells: &[HvValue]) -> Result<Sinogram> {
        let mut s = Sinogram::zeros(angles.to_vec(), offsets.to_vec());
        if cells.len() != s.values.len() {
            return Err(Error::Shape(format!("expected {} cells, got {}", s.values.len(), cells.len())));
        }
        for (k, hv) in cells.iter().enumerate() {
            s.values[k] = hv.value.re;
            s.imag[k] = hv.value.im;
        }
        s.smear = Some(self.smear.clone());
        s.validate()?;
        Ok(s)
    }

    pub fn sample(&self, angles: &[f64], offsets: &[f64]) -> Result<Sinogram> {
        let cells = Self::cells(angles, offsets)
            .into_iter()
            .map(|(a, b)| self.cell(a, b))
            .collect::<Result<Vec<_>>>()?;
        self.assemble(angles, offsets, &cells)
    }
}

/// Real parts of the high-velocity functional over `angles x offsets`, with
/// imaginary parts kept as a diagnostic.
pub fn sample_sinogram(
    grid: &GridSpec,
    potential: &PotentialSpec,
    envelope: &EnvelopeSpec,
    v_mag: f64,
    angles: &[f64],
    offsets: &[f64],
    cfg: &ScatteringConfig,
) -> Result<Sinogram> {
    SinogramSampler::new(grid, potential, envelope, v_mag, cfg)?.sample(angles, offsets)
}

/// Line integrals of `potential` over `angles x offsets`, optionally
/// convolved with a packet marginal.
pub fn oracle_sinogram(
    potential: &PotentialSpec,
    angles: &[f64],
    offsets: &[f64],
    quadrature: LineQuadrature,
    smear: Option<&Smear>,
) -> Result<Sinogram> {
    potential.check_dim(2)?;
    let mut s = Sinogram::zeros(angles.to_vec(), offsets.to_vec());
    let n = offsets.len();
    for (i, &theta) in angles.iter().enumerate() {
        let (dir, normal) = unit(theta);
        let line = |b: f64| xray_oracle(potential, &dir, &[b * normal[0], b * normal[1]], quadrature).map(|x| x.value);
        match smear {
            None => {
                for (j, &b) in offsets.iter().enumerate() {
                    s.values[i * n + j] = line(b)?;
                }
            }
            Some(m) => {
                // tabulate the row once on a lattice aligned with the smear
                let h = m.spacing() / 2.0;
                let lo = offsets.iter().fold(f64::INFINITY, |a, b| a.min(*b)) + m.positions[0] - h;
                let hi = offsets.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b)) + m.positions[m.positions.len() - 1] + h;
                let count = ((hi - lo) / h).ceil() as usize + 2;
                let table = (0..count).map(|k| line(lo + k as f64 * h)).collect::<Result<Vec<_>>>()?;
                for (j, &b) in offsets.iter().enumerate() {
                    s.values[i * n + j] = m
                        .positions
                        .iter()
                        .zip(&m.density)
                        .map(|(p, w)| w * interpolate(&table, lo, h, b + p))
                        .sum::<f64>()
                        * m.spacing();
                }
            }
        }
    }
    s.smear = smear.cloned();
    s.validate()?;
    Ok(s)
}

/// Linear interpolation of samples `table[k]` at `lo + k h`; zero outside.
fn interpolate(table: &[f64], lo: f64, h: f64, x: f64) -> f64 {
    let pos = (x - lo) / h;
    if !(pos >= 0.0) || pos > (table.len() - 1) as f64 {
        return 0.0;
    }
    let k = (pos.floor() as usize).min(table.len() - 2);
    let frac = pos - k as f64;
    table[k] * (1.0 - frac) + table[k + 1] * frac
}

/// Inversion options. Deconvolution divides each projection by the smear
/// transform with a Tikhonov floor `epsilon` (relative to the zero frequency).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FbpConfig {
    #[serde(default)]
    pub deconvolve: bool,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_epsilon() -> f64 {
    1e-3
}

impl Default for FbpConfig {
    fn default() -> Self {
        FbpConfig {
            deconvolve: false,
            epsilon: default_epsilon(),
        }
    }
}

/// Filtered backprojection with the Ram-Lak filter (hard cutoff at the
/// offset Nyquist frequency), without deconvolution.
pub fn fbp_invert(s: &Sinogram, out_grid: &GridSpec) -> Result<Field> {
    fbp_invert_with(s, out_grid, &FbpConfig::default())
}

pub fn fbp_invert_with(s: &Sinogram, out_grid: &GridSpec, cfg: &FbpConfig) -> Result<Field> {
    s.validate()?;
    let k = s.angles.len();
    let n = s.offsets.len();
    if k < MIN_ANGLES || n < MIN_OFFSETS {
        return Err(Error::param(format!(
            "filtered backprojection needs at least {MIN_ANGLES} angles and {MIN_OFFSETS} offsets, got {k} x {n}"
        )));
    }
    if out_grid.dim() != 2 {
        return Err(Error::param("backprojection targets a two-dimensional grid"));
    }
    let dtheta = PI / k as f64;
    for (i, a) in s.angles.iter().enumerate() {
        if (a - s.angles[0] - i as f64 * dtheta).abs() > 1e-9 {
            return Err(Error::param("angles must be equally spaced by pi / count"));
        }
    }
    let tau = s.offsets[1] - s.offsets[0];
    if !(tau > 0.0) {
        return Err(Error::param("offsets must increase"));
    }
    for (j, b) in s.offsets.iter().enumerate() {
        if (b - s.offsets[0] - j as f64 * tau).abs() > 1e-9 * tau.max(1.0) {
            return Err(Error::param("offsets must be equally spaced"));
        }
    }
    if cfg.deconvolve && !(cfg.epsilon > 0.0) {
        return Err(Error::param("the Tikhonov floor must be positive"));
    }
    let smear = match (cfg.deconvolve, &s.smear) {
        (true, Some(m)) => Some(m),
        (true, None) => return Err(Error::param("deconvolution needs the sinogram's smear descriptor")),
        (false, _) => None,
    };

    let kernel = ram_lak(n, tau);
    let filtered: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            let row = match smear {
                Some(m) => deconvolve_row(s.row(i), tau, m, cfg.epsilon),
                None => s.row(i).to_vec(),
            };
            (0..n)
                .map(|j| {
                    (0..n)
                        .map(|l| row[l] * kernel[j.abs_diff(l)])
                        .sum::<f64>()
                        * tau
                })
                .collect()
        })
        .collect();

    let frames: Vec<[f64; 2]> = s.angles.iter().map(|&a| unit(a).1).collect();
    let b0 = s.offsets[0];
    let field = Field::from_fn(*out_grid, Space::Position, |x| {
        let sum: f64 = frames
            .iter()
            .zip(&filtered)
            .map(|(nrm, q)| interpolate(q, b0, tau, x[0] * nrm[0] + x[1] * nrm[1]))
            .sum();
        Complex64::from(sum * dtheta)
    });
    Ok(field)
}

/// Spatial Ram-Lak taps `h[|j|]`.
fn ram_lak(n: usize, tau: f64) -> Vec<f64> {
    (0..n)
        .map(|j| match j {
            0 => 1.0 / (4.0 * tau * tau),
            j if j % 2 == 1 => -1.0 / ((j * j) as f64 * PI * PI * tau * tau),
            _ => 0.0,
        })
        .collect()
}

/// `row / K` in the Fourier domain as `conj(K) / (|K|^2 + epsilon)`, with
/// zero padding against wrap-around.
fn deconvolve_row(row: &[f64], tau: f64, smear: &Smear, epsilon: f64) -> Vec<f64> {
    let p = (2 * row.len()).next_power_of_two();
    let mut buf: Vec<Complex64> = row.iter().map(|v| Complex64::from(*v)).collect();
    buf.resize(p, Complex64::default());
    fft_nd(&mut buf, 1, p, FftDirection::Forward);
    for (q, c) in buf.iter_mut().enumerate() {
        let signed = if q < p / 2 { q as f64 } else { q as f64 - p as f64 };
        let kk = smear.transform(2.0 * PI * signed / (p as f64 * tau));
        *c *= kk.conj() / (kk.norm_sqr() + epsilon);
    }
    fft_nd(&mut buf, 1, p, FftDirection::Inverse);
    buf[..row.len()].iter().map(|c| c.re / p as f64).collect()
}

/// `||a - b|| / ||b||` over the real parts of two fields on one grid.
pub fn relative_l2_error(a: &Field, b: &Field) -> Result<f64> {
    let diff = a.sub(b)?;
    let denom = b.norm();
    if denom == 0.0 {
        return Err(Error::param("reference field is zero"));
    }
    Ok(diff.norm() / denom)
}

/// One probe of the uniqueness test: a velocity and a common packet center.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbePoint {
    pub velocity: Vec<f64>,
    pub center: Vec<f64>,
}

/// Probe set and numerics of the uniqueness test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniquenessProbe {
    pub grid: GridSpec,
    pub eta: f64,
    pub probes: Vec<ProbePoint>,
    pub scattering: ScatteringConfig,
    /// Horizon of the convergence comparison, relative to the main one.
    #[serde(default = "default_horizon_factor")]
    pub horizon_factor: f64,
    /// Rigid offset of the control run, in grid spacings per axis.
    #[serde(default = "default_control_shift")]
    pub control_shift: Vec<f64>,
}

pub const DEFAULT_HORIZON_FACTOR: f64 = 1.25;

/// Default control offset per axis, in grid spacings; a run uses the first
/// `n` components.
pub const DEFAULT_CONTROL_SHIFT: [f64; 3] = [0.37, 0.61, 0.23];

fn default_horizon_factor() -> f64 {
    DEFAULT_HORIZON_FACTOR
}

fn default_control_shift() -> Vec<f64> {
    DEFAULT_CONTROL_SHIFT[..2].to_vec()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub velocity: Vec<f64>,
    pub center: Vec<f64>,
    pub first: Complex64,
    pub second: Complex64,
    /// Discretization noise of this probe for either potential.
    pub noise: f64,
    /// `V1` evaluated with the whole setup rigidly shifted.
    pub control: Complex64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Distinguishable,
    Indistinguishable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    pub max_difference: f64,
    pub noise_floor: f64,
    pub control_difference: f64,
    pub verdict: Verdict,
    pub records: Vec<ProbeRecord>,
}

/// Compares the functional of two potentials over a probe set.
///
/// The noise floor is the largest change of any probe value under halving
/// the time step plus its change under a different horizon. The control
/// evaluates `V1` again with potential and packets translated by a
/// sub-lattice shift, which the exact problem does not see. The verdict is
/// distinguishable iff the largest difference exceeds ten times the floor.
pub fn uniqueness_test(v1: &PotentialSpec, v2: &PotentialSpec, probe: &UniquenessProbe) -> Result<UniquenessReport> {
    let grid = probe.grid;
    let dim = grid.dim();
    v1.check_dim(dim)?;
    v2.check_dim(dim)?;
    if probe.probes.is_empty() {
        return Err(Error::param("the probe set is empty"));
    }
    if !(probe.horizon_factor > 0.0 && probe.horizon_factor.is_finite() && probe.horizon_factor != 1.0) {
        return Err(Error::param("horizon factor must be positive and differ from 1"));
    }
    if probe.control_shift.len() != dim {
        return Err(Error::param("control shift needs one component per axis"));
    }
    let base = probe.scattering;
    let fine = ScatteringConfig {
        evolution: base.evolution.with_dt(base.evolution.dt / 2.0)?,
        ..base
    };
    let other = ScatteringConfig {
        horizon: base.horizon * probe.horizon_factor,
        ..base
    };
    let shift: Vec<f64> = probe.control_shift.iter().map(|s| s * grid.spacing()).collect();
    let envelope = EnvelopeSpec::new(probe.eta, vec![0.0; dim])?;

    let setups = |v: &PotentialSpec| -> Result<[Scatterer; 3]> {
        Ok([
            Scatterer::new(&grid, v, &base)?,
            Scatterer::new(&grid, v, &fine)?,
            Scatterer::new(&grid, v, &other)?,
        ])
    };
    let first = setups(v1)?;
    let second = setups(v2)?;
    let control = Scatterer::new(&grid, &v1.translated(&shift), &base)?;

    let mut records = Vec::with_capacity(probe.probes.len());
    for point in &probe.probes {
        if point.velocity.len() != dim || point.center.len() != dim {
            return Err(Error::param("probe vectors need one component per axis"));
        }
        let packet = make_envelope_state(&grid, &envelope.with_center(point.center.clone()))?;
        let eval = |s: &Scatterer| s.hv_functional(&packet, &packet, &point.velocity).map(|h| h.value);
        let mut noise = 0.0f64;
        let mut values = [Complex64::default(); 2];
        for (slot, set) in [&first, &second].into_iter().enumerate() {
            let main = eval(&set[0])?;
            noise = noise.max((main - eval(&set[1])?).norm() + (main - eval(&set[2])?).norm());
            values[slot] = main;
        }
        let moved: Vec<f64> = point.center.iter().zip(&shift).map(|(c, s)| c + s).collect();
        let shifted = make_envelope_state(&grid, &envelope.with_center(moved))?;
        let control_value = control.hv_functional(&shifted, &shifted, &point.velocity)?.value;
        records.push(ProbeRecord {
            velocity: point.velocity.clone(),
            center: point.center.clone(),
            first: values[0],
            second: values[1],
            noise,
            control: control_value,
        });
    }
    let max_difference = records.iter().map(|r| (r.first - r.second).norm()).fold(0.0, f64::max);
    let noise_floor = records.iter().map(|r| r.noise).fold(0.0, f64::max);
    let control_difference = records.iter().map(|r| (r.first - r.control).norm()).fold(0.0, f64::max);
    let verdict = if max_difference > 10.0 * noise_floor {
        Verdict::Distinguishable
    } else {
        Verdict::Indistinguishable
    };
    Ok(UniquenessReport {
        max_difference,
        noise_floor,
        control_difference,
        verdict,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::EvolutionConfig;
    use crate::scattering::HALF_ORDER_EXCLUDED;

    const QUAD: LineQuadrature = LineQuadrature { t_max: 20.0, dt: 0.02 };

    fn phantom() -> PotentialSpec {
        PotentialSpec::gaussian(1.0, vec![0.5, -0.3], 1.2).unwrap()
    }

    fn out_grid() -> GridSpec {
        GridSpec::new(2, 64, 6.0).unwrap()
    }

    fn sampled(v: &PotentialSpec, grid: &GridSpec) -> Field {
        let s = v.sample_on_grid(grid).unwrap();
        Field::new(*grid, Space::Position, s.into_iter().map(Complex64::from).collect()).unwrap()
    }

    #[test]
    fn oracle_round_trip_recovers_a_gaussian() {
        let s = oracle_sinogram(&phantom(), &uniform_angles(60), &uniform_offsets(128, 8.0), QUAD, None).unwrap();
        let f = fbp_invert(&s, &out_grid()).unwrap();
        let err = relative_l2_error(&f, &sampled(&phantom(), &out_grid())).unwrap();
        assert!(err < 0.1, "{err}");
        assert!(f.values().iter().all(|c| c.im == 0.0));
    }

    #[test]
    fn two_bumps_are_recovered_at_their_centers() {
        let a = PotentialSpec::gaussian(1.0, vec![-2.5, 1.0], 0.8).unwrap();
        let b = PotentialSpec::gaussian(1.0, vec![2.0, -1.5], 0.8).unwrap();
        let s = oracle_sinogram(&a.plus(&b), &uniform_angles(60), &uniform_offsets(128, 8.0), QUAD, None).unwrap();
        let grid = out_grid();
        let f = fbp_invert(&s, &grid).unwrap();
        let axis = grid.position_axis();
        let m = grid.points();
        // strongest pixel in each half plane
        let peak = |left: bool| {
            let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
            for i in 0..m {
                for j in 0..m {
                    let (x, y) = (axis[i], axis[j]);
                    if (x < 0.0) == left && f.values()[i * m + j].re > best.0 {
                        best = (f.values()[i * m + j].re, x, y);
                    }
                }
            }
            (best.1, best.2)
        };
        let dx = grid.spacing();
        for ((x, y), (cx, cy)) in [(peak(true), (-2.5, 1.0)), (peak(false), (2.0, -1.5))] {
            assert!((x - cx).abs() <= dx && (y - cy).abs() <= dx, "({x}, {y}) vs ({cx}, {cy})");
        }
    }

    #[test]
    fn inversion_is_linear() {
        let angles = uniform_angles(20);
        let offsets = uniform_offsets(40, 6.0);
        let s1 = oracle_sinogram(&phantom(), &angles, &offsets, QUAD, None).unwrap();
        let other = PotentialSpec::inverse_power(0.4, vec![1.0, 1.0], 2.5).unwrap();
        let s2 = oracle_sinogram(&other, &angles, &offsets, QUAD, None).unwrap();
        let grid = GridSpec::new(2, 32, 5.0).unwrap();
        let sum = fbp_invert(&s1.add(&s2).unwrap(), &grid).unwrap();
        let parts = fbp_invert(&s1, &grid).unwrap().add(&fbp_invert(&s2, &grid).unwrap()).unwrap();
        assert!(sum.sub(&parts).unwrap().norm() <= 1e-10 * sum.norm());
    }

    #[test]
    fn zero_sinogram_inverts_to_zero() {
        let s = Sinogram::zeros(uniform_angles(16), uniform_offsets(32, 4.0));
        let f = fbp_invert(&s, &out_grid()).unwrap();
        assert_eq!(f.norm(), 0.0);
    }

    #[test]
    fn sparse_sampling_is_refused() {
        let s = Sinogram::zeros(uniform_angles(15), uniform_offsets(64, 4.0));
        let err = fbp_invert(&s, &out_grid()).unwrap_err().to_string();
        assert!(err.contains("16") && err.contains("32"), "{err}");
        let s = Sinogram::zeros(uniform_angles(32), uniform_offsets(31, 4.0));
        assert!(fbp_invert(&s, &out_grid()).is_err());
    }

    #[test]
    fn opposite_directions_give_the_same_line() {
        let v = PotentialSpec::gaussian(1.0, vec![0.7, -0.4], 1.0)
            .unwrap()
            .plus(&PotentialSpec::inverse_power(0.3, vec![-1.0, 0.5], 2.0).unwrap());
        let offsets = uniform_offsets(33, 4.0);
        let flipped: Vec<f64> = offsets.iter().map(|b| -b).collect();
        for theta in [0.0, 0.4, 1.3, 2.9] {
            let a = oracle_sinogram(&v, &[theta], &offsets, QUAD, None).unwrap();
            let b = oracle_sinogram(&v, &[theta + PI], &flipped, QUAD, None).unwrap();
            for (x, y) in a.values.iter().zip(&b.values) {
                assert!((x - y).abs() < 1e-8, "{x} {y}");
            }
        }
    }

    #[test]
    fn radial_potential_gives_angle_independent_rows() {
        let v = PotentialSpec::gaussian(1.0, vec![0.0, 0.0], 1.0).unwrap();
        let s = oracle_sinogram(&v, &uniform_angles(8), &uniform_offsets(17, 3.0), QUAD, None).unwrap();
        for i in 1..8 {
            for j in 0..17 {
                assert!((s.value(i, j) - s.value(0, j)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn smear_is_a_probability_density() {
        let grid = GridSpec::new(2, 128, 12.0).unwrap();
        let phi0 = make_envelope_state(&grid, &EnvelopeSpec::new(1.0, vec![0.0, 0.0]).unwrap()).unwrap();
        let m = Smear::from_packet(&phi0).unwrap();
        assert!((m.transform(0.0).re - 1.0).abs() < 1e-12);
        assert!(m.transform(0.7).im.abs() < 1e-10);
        // |Phi_0|^2 has frequency support in the ball of radius 2 eta
        assert!(m.transform(2.2).norm() < 1e-3);
        assert!(m.variance() > 0.0);
    }

    #[test]
    fn deconvolution_undoes_a_wide_smear() {
        let grid = GridSpec::new(2, 128, 12.0).unwrap();
        let phi0 = make_envelope_state(&grid, &EnvelopeSpec::new(1.0, vec![0.0, 0.0]).unwrap()).unwrap();
        let m = Smear::from_packet(&phi0).unwrap();
        let v = PotentialSpec::gaussian(1.0, vec![0.5, 0.0], 2.0).unwrap();
        let (angles, offsets) = (uniform_angles(60), uniform_offsets(128, 10.0));
        let s = oracle_sinogram(&v, &angles, &offsets, QUAD, Some(&m)).unwrap();
        let out = out_grid();
        let truth = sampled(&v, &out);
        let plain = relative_l2_error(&fbp_invert(&s, &out).unwrap(), &truth).unwrap();
        let cfg = FbpConfig {
            deconvolve: true,
            ..FbpConfig::default()
        };
        let sharp = relative_l2_error(&fbp_invert_with(&s, &out, &cfg).unwrap(), &truth).unwrap();
        assert!(sharp < 0.1 && sharp < plain / 2.0, "{sharp} vs {plain}");
        let bare = Sinogram { smear: None, ..s };
        assert!(fbp_invert_with(&bare, &out, &cfg).is_err());
    }

    fn scatter_cfg(rho: f64) -> ScatteringConfig {
        let mut evolution = EvolutionConfig::new(rho, 0.05).unwrap();
        evolution.mass_tolerance = 1.0;
        ScatteringConfig {
            horizon: 2.5,
            tail_tolerance: 10.0,
            evolution,
        }
    }

    #[test]
    fn sampled_sinogram_tracks_the_smeared_oracle() {
        let grid = GridSpec::new(2, 128, 12.0).unwrap();
        let env = EnvelopeSpec::new(1.0, vec![0.0, 0.0]).unwrap();
        let v = PotentialSpec::gaussian(0.3, vec![0.0, 0.5], 1.2).unwrap();
        let (angles, offsets) = ([0.3, 1.9], [-1.0, 0.0, 1.5]);
        let sampler = SinogramSampler::new(&grid, &v, &env, 8.0, &scatter_cfg(0.75)).unwrap();
        let s = sampler.sample(&angles, &offsets).unwrap();
        let o = oracle_sinogram(&v, &angles, &offsets, QUAD, Some(sampler.smear())).unwrap();
        for (x, y) in s.values.iter().zip(&o.values) {
            assert!((x - y).abs() < 0.05 * y.abs().max(0.1), "{x} {y}");
        }
        let zero = sampler.assemble(&angles, &offsets, &vec![sampler.cell(0.0, 0.0).unwrap(); 6]).unwrap();
        assert_eq!(zero.values.len(), 6);
        let free = sample_sinogram(&grid, &PotentialSpec::zero(), &env, 8.0, &angles, &offsets, &scatter_cfg(0.75)).unwrap();
        assert!(free.values.iter().all(|x| x.abs() < 1e-8));
    }

    #[test]
    fn half_order_and_other_dimensions_are_refused() {
        let grid = GridSpec::new(2, 64, 12.0).unwrap();
        let env = EnvelopeSpec::new(1.0, vec![0.0, 0.0]).unwrap();
        let err = SinogramSampler::new(&grid, &phantom(), &env, 8.0, &scatter_cfg(0.5)).err().unwrap();
        assert!(matches!(err, Error::Scope(ref m) if m == HALF_ORDER_EXCLUDED));
        let line = GridSpec::new(1, 64, 12.0).unwrap();
        let env1 = EnvelopeSpec::new(1.0, vec![0.0]).unwrap();
        let v1 = PotentialSpec::gaussian(1.0, vec![0.0], 1.0).unwrap();
        assert!(SinogramSampler::new(&line, &v1, &env1, 8.0, &scatter_cfg(0.75)).is_err());
    }

    fn probe(grid: GridSpec) -> UniquenessProbe {
        let mut evolution = EvolutionConfig::new(0.75, 0.1).unwrap();
        evolution.mass_tolerance = 1.0;
        UniquenessProbe {
            grid,
            eta: 1.0,
            probes: [0.0, 1.0, 2.0]
                .iter()
                .map(|&b| ProbePoint {
                    velocity: vec![8.0, 0.0],
                    center: vec![0.0, b],
                })
                .collect(),
            scattering: ScatteringConfig {
                horizon: 2.5,
                tail_tolerance: 10.0,
                evolution,
            },
            horizon_factor: 1.25,
            control_shift: vec![0.37, 0.61],
        }
    }

    #[test]
    fn identical_potentials_are_indistinguishable() {
        let grid = GridSpec::new(2, 128, 12.0).unwrap();
        let v = PotentialSpec::gaussian(0.3, vec![0.0, 0.5], 1.2).unwrap();
        let r = uniqueness_test(&v, &v, &probe(grid)).unwrap();
        assert_eq!(r.verdict, Verdict::Indistinguishable);
        assert_eq!(r.max_difference, 0.0);
        assert!(r.control_difference <= 2.0 * r.noise_floor, "{r:?}");
    }

    #[test]
    fn scaled_potential_is_distinguishable_by_its_excess() {
        let grid = GridSpec::new(2, 128, 12.0).unwrap();
        let v = PotentialSpec::gaussian(0.1, vec![0.0, 0.5], 1.2).unwrap();
        let r = uniqueness_test(&v, &v.scaled(1.5), &probe(grid)).unwrap();
        assert_eq!(r.verdict, Verdict::Distinguishable, "{r:?}");
        let largest = r.records.iter().map(|x| x.first.norm()).fold(0.0, f64::max);
        assert!((r.max_difference - 0.5 * largest).abs() < 0.05 * largest, "{r:?}");
    }
}
