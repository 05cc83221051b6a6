//! Periodic lattice discretization of `R^n`, unitary Fourier transforms and
//! Fourier multipliers.
//!
//! Position nodes are `x_j = -L + j dx` with `dx = 2L/M`. Frequency nodes are
//! `xi_k = (pi/L) k` for `k = -M/2 .. M/2-1`; frequency arrays are stored in
//! that centered order, so index `i` along an axis holds `k = i - M/2` and the
//! Nyquist mode sits at index 0.
//!
//! Frequency values approximate the continuous transform
//! `(F phi)(xi) = (2 pi)^(-n/2) int e^(-i x.xi) phi(x) dx`; inner products use
//! the cell volume `dx^n` in position space and `(pi/L)^n` in frequency space,
//! which makes the discrete Parseval identity exact.

use std::f64::consts::PI;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;
use rustfft::FftDirection;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{checkerboard_scale, fft_nd};

/// Which representation a [`Field`] holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Space {
    Position,
    Frequency,
}

impl fmt::Display for Space {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Space::Position => f.write_str("position"),
            Space::Frequency => f.write_str("frequency"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    ToFrequency,
    ToPosition,
}

/// Periodic lattice `[-L, L)^n` with `M` points per axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid")]
pub struct GridSpec {
    dim: usize,
    points: usize,
    half_width: f64,
}

#[derive(Deserialize)]
struct RawGrid {
    dim: usize,
    points: usize,
    half_width: f64,
}

impl TryFrom<RawGrid> for GridSpec {
    type Error = Error;

    fn try_from(raw: RawGrid) -> Result<Self> {
        GridSpec::new(raw.dim, raw.points, raw.half_width)
    }
}

impl GridSpec {
    pub fn new(dim: usize, points: usize, half_width: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::param(format!("dimension {dim} not in 1..=3")));
        }
        if points < 8 || !points.is_power_of_two() {
            return Err(Error::param(format!(
                "points per axis {points} must be a power of two >= 8"
            )));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::param(format!("half width {half_width} must be positive")));
        }
        Ok(GridSpec {
            dim,
            points,
            half_width,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    /// Total number of nodes, `M^n`.
    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.points as f64
    }

    pub fn freq_spacing(&self) -> f64 {
        PI / self.half_width
    }

    /// Largest resolved frequency per axis, `pi M / (2L)`.
    pub fn nyquist(&self) -> f64 {
        PI * self.points as f64 / (2.0 * self.half_width)
    }

    pub fn cell_volume(&self, space: Space) -> f64 {
        let h = match space {
            Space::Position => self.spacing(),
            Space::Frequency => self.freq_spacing(),
        };
        h.powi(self.dim as i32)
    }

    pub fn position_axis(&self) -> Vec<f64> {
        let dx = self.spacing();
        (0..self.points)
            .map(|j| -self.half_width + j as f64 * dx)
            .collect()
    }

    pub fn frequency_axis(&self) -> Vec<f64> {
        let dk = self.freq_spacing();
        let half = (self.points / 2) as i64;
        (0..self.points as i64).map(|i| (i - half) as f64 * dk).collect()
    }

    pub fn axis(&self, space: Space) -> Vec<f64> {
        match space {
            Space::Position => self.position_axis(),
            Space::Frequency => self.frequency_axis(),
        }
    }

    /// Visits every node in storage order with its flat index and coordinates.
    pub fn for_each_node(&self, space: Space, mut f: impl FnMut(usize, &[f64])) {
        let axis = self.axis(space);
        let m = self.points;
        let mut idx = [0usize; 3];
        let mut coord = [0.0; 3];
        for flat in 0..self.len() {
            let mut rest = flat;
            for a in (0..self.dim).rev() {
                idx[a] = rest % m;
                rest /= m;
                coord[a] = axis[idx[a]];
            }
            f(flat, &coord[..self.dim]);
        }
    }

    /// Samples `f` at every node.
    pub fn sample<T>(&self, space: Space, mut f: impl FnMut(&[f64]) -> T) -> Vec<T> {
        let mut out = Vec::with_capacity(self.len());
        self.for_each_node(space, |_, x| out.push(f(x)));
        out
    }

    /// Minimum-image displacement `x - c` on the torus, per component.
    pub fn periodic_delta(&self, x: f64, c: f64) -> f64 {
        let period = 2.0 * self.half_width;
        let d = x - c;
        d - period * (d / period).round()
    }

    /// Nearest frequency-lattice point to `v`, and the distance moved.
    pub fn snap_to_lattice(&self, v: &[f64]) -> (Vec<f64>, f64) {
        let dk = self.freq_spacing();
        let snapped: Vec<f64> = v.iter().map(|c| (c / dk).round() * dk).collect();
        let err = snapped
            .iter()
            .zip(v)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        (snapped, err)
    }
}

/// Complex amplitudes on a [`GridSpec`], in position or frequency representation.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: GridSpec,
    space: Space,
    values: Vec<Complex64>,
}

impl Field {
    pub fn new(grid: GridSpec, space: Space, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Field {
            grid,
            space,
            values,
        })
    }

    pub fn zeros(grid: GridSpec, space: Space) -> Self {
        Field {
            grid,
            space,
            values: vec![Complex64::default(); grid.len()],
        }
    }

    pub fn from_fn(grid: GridSpec, space: Space, f: impl FnMut(&[f64]) -> Complex64) -> Self {
        Field {
            grid,
            space,
            values: grid.sample(space, f),
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    /// Unitary transform between representations.
    pub fn transform(&self, direction: Direction) -> Result<Field> {
        let expected = match direction {
            Direction::ToFrequency => Space::Position,
            Direction::ToPosition => Space::Frequency,
        };
        if self.space != expected {
            return Err(Error::State {
                expected,
                found: self.space,
            });
        }
        let mut out = self.clone();
        match direction {
            Direction::ToFrequency => forward_in_place(&self.grid, &mut out.values),
            Direction::ToPosition => inverse_in_place(&self.grid, &mut out.values),
        }
        out.space = match direction {
            Direction::ToFrequency => Space::Frequency,
            Direction::ToPosition => Space::Position,
        };
        Ok(out)
    }

    /// The same field in the requested representation.
    pub fn in_space(&self, space: Space) -> Field {
        match (self.space, space) {
            (a, b) if a == b => self.clone(),
            (Space::Position, _) => self.transform(Direction::ToFrequency).expect("space checked"),
            (Space::Frequency, _) => self.transform(Direction::ToPosition).expect("space checked"),
        }
    }

    /// Multiplies the frequency coefficients by `m(xi_k)`; the result is
    /// returned in the caller's representation.
    pub fn apply_multiplier(&self, mut m: impl FnMut(&[f64]) -> Complex64) -> Result<Field> {
        let mut freq = self.in_space(Space::Frequency);
        let mut bad = None;
        self.grid.for_each_node(Space::Frequency, |i, xi| {
            if bad.is_some() {
                return;
            }
            let factor = m(xi);
            if factor.re.is_finite() && factor.im.is_finite() {
                freq.values[i] *= factor;
            } else {
                bad = Some(xi.to_vec());
            }
        });
        if let Some(xi) = bad {
            return Err(Error::NonFinite { xi });
        }
        Ok(freq.in_space(self.space))
    }

    /// `sum f conj(g) dV`, linear in the first argument.
    pub fn inner_product(&self, other: &Field) -> Result<Complex64> {
        self.check_compatible(other)?;
        let s: Complex64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b.conj())
            .sum();
        Ok(s * self.grid.cell_volume(self.space))
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.cell_volume(self.space)
    }

    pub fn scaled(&self, c: Complex64) -> Field {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Field, f: impl Fn(Complex64, Complex64) -> Complex64) -> Result<Field> {
        self.check_compatible(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| f(*a, *b))
            .collect();
        Ok(Field {
            grid: self.grid,
            space: self.space,
            values,
        })
    }

    /// Pointwise product with a real mask in the current representation.
    pub fn masked(&self, mask: &[f64]) -> Result<Field> {
        if mask.len() != self.values.len() {
            return Err(Error::Shape(format!(
                "mask of {} values for {} nodes",
                mask.len(),
                self.values.len()
            )));
        }
        let mut out = self.clone();
        out.values.iter_mut().zip(mask).for_each(|(v, m)| *v *= *m);
        Ok(out)
    }

    fn check_compatible(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::Shape(format!(
                "grids differ: {:?} vs {:?}",
                self.grid, other.grid
            )));
        }
        if self.space != other.space {
            return Err(Error::State {
                expected: self.space,
                found: other.space,
            });
        }
        Ok(())
    }
}

pub(crate) fn forward_in_place(grid: &GridSpec, values: &mut [Complex64]) {
    let (n, m) = (grid.dim, grid.points);
    checkerboard_scale(values, n, m, 1.0);
    fft_nd(values, n, m, FftDirection::Forward);
    let scale = (grid.spacing() / (2.0 * PI).sqrt()).powi(n as i32);
    checkerboard_scale(values, n, m, scale);
}

pub(crate) fn inverse_in_place(grid: &GridSpec, values: &mut [Complex64]) {
    let (n, m) = (grid.dim, grid.points);
    checkerboard_scale(values, n, m, 1.0);
    fft_nd(values, n, m, FftDirection::Inverse);
    let scale = (grid.freq_spacing() / (2.0 * PI).sqrt()).powi(n as i32);
    checkerboard_scale(values, n, m, scale);
}

const MAGIC: &[u8; 4] = b"FLSF";
const VERSION: u32 = 1;

/// Writes the binary field dump: magic, version, n, M, L, space flag, then
/// little-endian `(re, im)` pairs in storage order.
pub fn write_field(field: &Field, mut w: impl Write) -> Result<()> {
    let g = field.grid();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(g.dim() as u32).to_le_bytes())?;
    w.write_all(&(g.points() as u32).to_le_bytes())?;
    w.write_all(&g.half_width().to_le_bytes())?;
    w.write_all(&[match field.space() {
        Space::Position => 0u8,
        Space::Frequency => 1u8,
    }])?;
    let mut buf = Vec::with_capacity(16 * field.values().len());
    for v in field.values() {
        buf.extend_from_slice(&v.re.to_le_bytes());
        buf.extend_from_slice(&v.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_field(mut r: impl Read) -> Result<Field> {
    let mut head = [0u8; 4 + 4 + 4 + 4 + 8 + 1];
    r.read_exact(&mut head)?;
    if &head[0..4] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(head[o..o + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let dim = u32_at(8) as usize;
    let points = u32_at(12) as usize;
    let half_width = f64::from_le_bytes(head[16..24].try_into().unwrap());
    let space = match head[24] {
        0 => Space::Position,
        1 => Space::Frequency,
        other => return Err(Error::Format(format!("space flag {other}"))),
    };
    let grid = GridSpec::new(dim, points, half_width).map_err(|e| Error::Format(e.to_string()))?;
    let mut raw = vec![0u8; 16 * grid.len()];
    r.read_exact(&mut raw)?;
    let values = raw
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[0..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..16].try_into().unwrap()),
            )
        })
        .collect();
    Field::new(grid, space, values)
}

pub fn save_field(field: &Field, path: impl AsRef<Path>) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_field(field, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_field(path: impl AsRef<Path>) -> Result<Field> {
    let file = std::fs::File::open(path)?;
    read_field(std::io::BufReader::new(file))
}
