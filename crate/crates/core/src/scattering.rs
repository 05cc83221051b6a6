//! Finite-horizon wave operators, scattering matrix elements, and the
//! high-velocity functional whose limit is the X-ray transform of `V`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{escaped_mass_fraction, free_evolve, EvolutionConfig, SplitStepper};
use crate::error::{Error, Result};
use crate::estimates::cook_tail_one_sided;
use crate::grid::{Field, GridSpec, Space};
use crate::potentials::{xray_oracle, LineQuadrature, PotentialSpec};
use crate::symbol::{velocity_admissible, FractionalOrder, SymbolParams};
use crate::wavepackets::{boost, frequency_support_radius};

/// Which wave operator: `+` pairs with `t -> +inf`, `-` with `t -> -inf`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    fn factor(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// Horizon and accuracy settings shared by the scattering computations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatteringConfig {
    /// Time horizon `T`.
    pub horizon: f64,
    /// Largest accepted Cook tail per wave operator.
    pub tail_tolerance: f64,
    pub evolution: EvolutionConfig,
}

#[derive(Clone, Debug)]
pub struct WaveImage {
    pub field: Field,
    /// Estimate of `int_{|t| > T} ||V exp(-itH0) psi|| dt` on the relevant side,
    /// which bounds the distance to the infinite-horizon limit.
    pub tail_certificate: f64,
}

/// Wave operators for one potential on one grid, reusing the split-step tables.
pub struct Scatterer {
    potential: PotentialSpec,
    stepper: SplitStepper,
    cfg: ScatteringConfig,
}

impl Scatterer {
    pub fn new(grid: &GridSpec, v: &PotentialSpec, cfg: &ScatteringConfig) -> Result<Self> {
        if !(cfg.horizon > 0.0 && cfg.horizon.is_finite()) {
            return Err(Error::param(format!("horizon T = {} must be positive", cfg.horizon)));
        }
        if !(cfg.tail_tolerance > 0.0) {
            return Err(Error::param("tail tolerance must be positive"));
        }
        Ok(Scatterer {
            potential: v.clone(),
            stepper: SplitStepper::new(grid, v, &cfg.evolution)?,
            cfg: *cfg,
        })
    }

    pub fn config(&self) -> &ScatteringConfig {
        &self.cfg
    }

    /// `exp(+-iTH) exp(-+iTH0) psi` with its Cook tail certificate.
    pub fn wave_operator_apply(&self, psi: &Field, sign: Sign) -> Result<WaveImage> {
        let t = sign.factor() * self.cfg.horizon;
        let evo = &self.cfg.evolution;
        let tail = cook_tail_one_sided(&self.potential, psi, self.cfg.horizon, evo, sign.factor())?;
        if tail > self.cfg.tail_tolerance {
            let suggested = suggest_horizon(&self.potential, psi, &self.cfg, sign)?;
            return Err(Error::HorizonTooShort {
                horizon: self.cfg.horizon,
                tail,
                tolerance: self.cfg.tail_tolerance,
                suggested,
            });
        }
        let free = free_evolve(psi, t, evo.rho)?;
        let mass = escaped_mass_fraction(&free, evo.wrap_guard);
        if mass > evo.mass_tolerance {
            return Err(Error::DomainEscape { step: 0, mass });
        }
        let field = self.stepper.evolve(&free, -t)?.in_space(psi.space());
        Ok(WaveImage {
            field,
            tail_certificate: tail,
        })
    }

    /// `(S phi, psi) = <W- phi, W+ psi>` and the summed tail certificates.
    pub fn s_matrix_element(&self, phi: &Field, psi: &Field) -> Result<(Complex64, f64)> {
        let minus = self.wave_operator_apply(phi, Sign::Minus)?;
        let plus = self.wave_operator_apply(psi, Sign::Plus)?;
        let value = minus
            .field
            .in_space(Space::Position)
            .inner_product(&plus.field.in_space(Space::Position))?;
        Ok((value, minus.tail_certificate + plus.tail_certificate))
    }
}

/// Smallest horizon, by doubling from the current one, whose modeled tail
/// meets the tolerance; infinite when 64 doublings do not suffice.
fn suggest_horizon(v: &PotentialSpec, psi: &Field, cfg: &ScatteringConfig, sign: Sign) -> Result<f64> {
    let mut t = cfg.horizon;
    for _ in 0..64 {
        t *= 2.0;
        // evaluated on the free trajectory without the guard: only the model matters here
        let mut relaxed = cfg.evolution;
        relaxed.mass_tolerance = 1.0;
        if cook_tail_one_sided(v, psi, t, &relaxed, sign.factor())? <= cfg.tail_tolerance {
            return Ok(t);
        }
    }
    Ok(f64::INFINITY)
}

/// `exp(+-iTH) exp(-+iTH0) psi`, see [`Scatterer::wave_operator_apply`].
pub fn wave_operator_apply(psi: &Field, sign: Sign, v: &PotentialSpec, cfg: &ScatteringConfig) -> Result<WaveImage> {
    Scatterer::new(psi.grid(), v, cfg)?.wave_operator_apply(psi, sign)
}

/// `(S phi, psi)` with the summed tail certificates.
pub fn s_matrix_element(phi: &Field, psi: &Field, v: &PotentialSpec, cfg: &ScatteringConfig) -> Result<(Complex64, f64)> {
    Scatterer::new(phi.grid(), v, cfg)?.s_matrix_element(phi, psi)
}

/// Message carried by the scope error for `rho = 1/2`.
pub const HALF_ORDER_EXCLUDED: &str =
    "rho=1/2 is excluded in this theorem (high-velocity reconstruction needs 1/2 < rho <= 1)";

pub(crate) fn require_above_half(rho: f64) -> Result<FractionalOrder> {
    let order = FractionalOrder::new(rho)?;
    if rho == 0.5 {
        return Err(Error::Scope(HALF_ORDER_EXCLUDED.into()));
    }
    Ok(order)
}

#[derive(Clone, Debug, PartialEq)]
pub struct HvValue {
    /// `|v|^(2 rho - 1) i ((S - 1) Phi_v, Psi_v)`.
    pub value: Complex64,
    /// `|v|^(2 rho - 1)` times the summed Cook tails.
    pub tail_certificate: f64,
    /// Lattice velocity used.
    pub velocity: Vec<f64>,
    pub snap_error: f64,
    /// Whether `(v, eta, rho)` satisfies the propagation-estimate condition,
    /// with `eta` the frequency radius of the packets.
    pub admissible: bool,
}

impl Scatterer {
    /// The high-velocity functional for packets `phi0`, `psi0` boosted by `v`.
    pub fn hv_functional(&self, phi0: &Field, psi0: &Field, v: &[f64]) -> Result<HvValue> {
        let rho = self.cfg.evolution.rho;
        let order = require_above_half(rho)?;
        let phi = boost(phi0, v)?;
        let psi = boost(psi0, v)?;
        let vmag = phi.velocity.iter().map(|c| c * c).sum::<f64>().sqrt();
        let eta = frequency_support_radius(phi0).max(frequency_support_radius(psi0));
        let admissible = vmag > eta
            && eta > 0.0
            && velocity_admissible(&SymbolParams::new(rho, eta, phi.velocity.clone())?, phi0.grid().dim())?;
        let (s, tails) = self.s_matrix_element(&phi.field, &psi.field)?;
        let free = phi
            .field
            .in_space(Space::Position)
            .inner_product(&psi.field.in_space(Space::Position))?;
        let u = order.group_speed(vmag);
        Ok(HvValue {
            value: Complex64::i() * (s - free) * u,
            tail_certificate: u * tails,
            velocity: phi.velocity,
            snap_error: phi.snap_error,
            admissible,
        })
    }
}

/// `|v|^(2 rho - 1) i ((S - 1) Phi_v, Psi_v)` with `Phi_v = exp(iv.x) Phi_0`.
pub fn hv_functional(
    phi0: &Field,
    psi0: &Field,
    v: &[f64],
    potential: &PotentialSpec,
    cfg: &ScatteringConfig,
) -> Result<HvValue> {
    require_above_half(cfg.evolution.rho)?;
    Scatterer::new(phi0.grid(), potential, cfg)?.hv_functional(phi0, psi0, v)
}

/// `int (V(x + d t) Phi_0, Psi_0) dt`: the X-ray transform of `V` along
/// direction `d`, weighted by `Phi_0 conj(Psi_0)`.
///
/// The line integral depends only on the transverse coordinate, so it is
/// tabulated on a fine transverse lattice and interpolated linearly.
pub fn smeared_xray_oracle(
    potential: &PotentialSpec,
    phi0: &Field,
    psi0: &Field,
    direction: &[f64],
    quadrature: LineQuadrature,
) -> Result<Complex64> {
    let grid = *phi0.grid();
    if grid.dim() != 2 || direction.len() != 2 {
        return Err(Error::param("the smeared oracle is implemented in two dimensions"));
    }
    let a = phi0.in_space(Space::Position);
    let b = psi0.in_space(Space::Position);
    let normal = [-direction[1], direction[0]];
    let weights: Vec<(f64, Complex64)> = {
        let mut w = Vec::new();
        let peak = a
            .values()
            .iter()
            .zip(b.values())
            .map(|(p, q)| (p * q.conj()).norm())
            .fold(0.0, f64::max);
        grid.for_each_node(Space::Position, |i, x| {
            let c = a.values()[i] * b.values()[i].conj();
            if c.norm() > 1e-16 * peak {
                w.push((x[0] * normal[0] + x[1] * normal[1], c));
            }
        });
        w
    };
    if weights.is_empty() {
        return Ok(Complex64::default());
    }
    let lo = weights.iter().map(|w| w.0).fold(f64::INFINITY, f64::min);
    let hi = weights.iter().map(|w| w.0).fold(f64::NEG_INFINITY, f64::max);
    let h = grid.spacing() / 8.0;
    let n = ((hi - lo) / h).ceil() as usize + 2;
    let table: Vec<f64> = (0..n)
        .map(|k| {
            let bb = lo + k as f64 * h;
            xray_oracle(potential, direction, &[bb * normal[0], bb * normal[1]], quadrature).map(|x| x.value)
        })
        .collect::<Result<_>>()?;
    let cell = grid.cell_volume(Space::Position);
    let sum: Complex64 = weights
        .iter()
        .map(|(bb, c)| {
            let pos = (bb - lo) / h;
            let k = (pos.floor() as usize).min(n - 2);
            let frac = pos - k as f64;
            c * (table[k] * (1.0 - frac) + table[k + 1] * frac)
        })
        .sum();
    Ok(sum * cell)
}

/// `T(|v|) = T_ref (|v_ref| / |v|)^(2 rho - 1)`, capped so the packet
/// travels at most `max_travel`.
pub fn default_horizon(t_ref: f64, v_ref: f64, v_mag: f64, rho: f64, max_travel: f64) -> Result<f64> {
    let order = FractionalOrder::new(rho)?;
    if !(t_ref > 0.0 && v_ref > 0.0 && v_mag > 0.0 && max_travel > 0.0) {
        return Err(Error::param("horizon scaling needs positive reference values"));
    }
    let t = t_ref * (v_ref / v_mag).powf(2.0 * rho - 1.0);
    Ok(t.min(max_travel / order.group_speed(v_mag)))
}

/// Smallest power-of-two `M >= min_points` whose Nyquist frequency exceeds
/// `margin (|v| + eta)`.
pub fn auto_points(half_width: f64, v_mag: f64, eta: f64, margin: f64, min_points: usize, max_points: usize) -> Result<usize> {
    let need = margin * (v_mag + eta);
    let mut m = min_points.max(8).next_power_of_two();
    while std::f64::consts::PI * m as f64 / (2.0 * half_width) <= need {
        m *= 2;
        if m > max_points {
            return Err(Error::resolution(format!(
                "resolving |v| + eta = {} on half-width {half_width} needs more than {max_points} points",
                v_mag + eta
            )));
        }
    }
    Ok(m)
}
