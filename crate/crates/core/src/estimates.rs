//! Numerical probes of the propagation estimate (operator norms of the
//! cutoff sandwich) and of the Cook integral `int ||V exp(-itH0) phi|| dt`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{escaped_mass_fraction, omega_table, EvolutionConfig};
use crate::error::{Error, Result};
use crate::grid::{forward_in_place, inverse_in_place, Field, GridSpec, Space};
use crate::potentials::{least_squares_slope, PotentialSpec};
use crate::symbol::{velocity_admissible, SymbolParams};
use crate::wavepackets::{cutoff, CutoffKind, FrequencyFilter};

/// A bounded linear map on fields over one grid, with its adjoint.
pub trait LinearOperator {
    fn grid(&self) -> &GridSpec;
    fn apply(&self, psi: &Field) -> Result<Field>;
    fn apply_adjoint(&self, psi: &Field) -> Result<Field>;
}

/// `chi((x - grad omega(v) t) / (s/4)) exp(-itH0) f(D - v) F(|x| <= s/16)`
/// with `s = |v|^(2 rho - 1) |t|`.
pub struct PropagationOperator {
    grid: GridSpec,
    ball: Vec<f64>,
    filter: Vec<f64>,
    chi: Vec<f64>,
    kinetic: Vec<Complex64>,
    scale: f64,
}

impl PropagationOperator {
    pub fn new(grid: &GridSpec, p: &SymbolParams, t: f64, filter: &FrequencyFilter) -> Result<Self> {
        if p.v().len() != grid.dim() {
            return Err(Error::param("velocity dimension does not match the grid"));
        }
        if t == 0.0 || !t.is_finite() {
            return Err(Error::Precondition("time must be finite and non-zero".into()));
        }
        if !velocity_admissible(p, grid.dim())? {
            return Err(Error::Precondition(format!(
                "velocity |v| = {} is not admissible for eta = {}, rho = {} in dimension {}",
                p.v_mag(),
                p.eta(),
                p.rho(),
                grid.dim()
            )));
        }
        let s = p.transport_scale(t);
        let drift: Vec<f64> = p.order().grad(p.v())?.iter().map(|g| g * t).collect();
        let origin = vec![0.0; grid.dim()];
        let ball = cutoff(grid, CutoffKind::SharpBall, &origin, s / 16.0)?;
        let chi = cutoff(grid, CutoffKind::SmoothChi, &drift, s / 4.0)?;
        let filter = filter.mask(grid, p.v(), p.eta());
        let order = p.order();
        let kinetic = omega_table(grid, order)
            .into_iter()
            .map(|w| Complex64::from_polar(1.0, -t * w))
            .collect();
        Ok(PropagationOperator {
            grid: *grid,
            ball,
            filter,
            chi,
            kinetic,
            scale: s,
        })
    }

    /// The composite `|v|^(2 rho - 1) |t|`.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    fn run(&self, psi: &Field, first: &[f64], last: &[f64], conj: bool) -> Result<Field> {
        if psi.grid() != &self.grid {
            return Err(Error::Shape("field grid differs from the operator grid".into()));
        }
        let mut v = psi.in_space(Space::Position).into_values();
        v.iter_mut().zip(first).for_each(|(a, m)| *a *= m);
        forward_in_place(&self.grid, &mut v);
        for ((a, f), k) in v.iter_mut().zip(&self.filter).zip(&self.kinetic) {
            *a *= if conj { k.conj() } else { *k } * f;
        }
        inverse_in_place(&self.grid, &mut v);
        v.iter_mut().zip(last).for_each(|(a, m)| *a *= m);
        Ok(Field::new(self.grid, Space::Position, v)?.in_space(psi.space()))
    }
}

impl LinearOperator for PropagationOperator {
    fn grid(&self) -> &GridSpec {
        &self.grid
    }

    fn apply(&self, psi: &Field) -> Result<Field> {
        self.run(psi, &self.ball, &self.chi, false)
    }

    fn apply_adjoint(&self, psi: &Field) -> Result<Field> {
        self.run(psi, &self.chi, &self.ball, true)
    }
}

/// Applies the propagation-estimate operator to `psi`.
pub fn propagation_apply(psi: &Field, t: f64, p: &SymbolParams, filter: &FrequencyFilter) -> Result<Field> {
    PropagationOperator::new(psi.grid(), p, t, filter)?.apply(psi)
}

/// Settings of the power iteration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerIteration {
    pub max_iters: usize,
    /// Relative eigen-residual `||A*A x - lambda x|| / lambda` at which to stop.
    pub tol: f64,
    pub seed: u64,
}

impl Default for PowerIteration {
    fn default() -> Self {
        PowerIteration {
            max_iters: 400,
            tol: 1e-6,
            seed: 0x5eed_f1a5_c0de,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OpNormEstimate {
    pub value: f64,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

/// Largest singular value of `op` by power iteration on `A*A` from a seeded
/// random start. Non-convergence is reported in the result, not raised.
pub fn opnorm_estimate(op: &dyn LinearOperator, settings: &PowerIteration) -> Result<OpNormEstimate> {
    let grid = *op.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let start: Vec<Complex64> = (0..grid.len())
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let mut x = Field::new(grid, Space::Position, start)?;
    x = x.scaled(Complex64::from(1.0 / x.norm()));
    let mut lambda = 0.0;
    let mut residual = f64::INFINITY;
    for k in 1..=settings.max_iters.max(1) {
        let y = op.apply_adjoint(&op.apply(&x)?)?;
        lambda = x.inner_product(&y)?.re;
        let ny = y.norm();
        if ny == 0.0 || lambda <= 0.0 {
            return Ok(OpNormEstimate {
                value: 0.0,
                iterations: k,
                residual: 0.0,
                converged: true,
            });
        }
        residual = y.sub(&x.scaled(Complex64::from(lambda)))?.norm() / lambda;
        if residual <= settings.tol {
            return Ok(OpNormEstimate {
                value: lambda.sqrt(),
                iterations: k,
                residual,
                converged: true,
            });
        }
        x = y.scaled(Complex64::from(1.0 / ny));
    }
    Ok(OpNormEstimate {
        value: lambda.max(0.0).sqrt(),
        iterations: settings.max_iters.max(1),
        residual,
        converged: false,
    })
}

/// One measured point of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub rho: f64,
    pub eta: f64,
    pub v_mag: f64,
    pub t: f64,
    pub scale_s: f64,
    pub norm_or_integral: f64,
    pub estimator_residual: f64,
    pub snap_error: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Norm of the propagation-estimate operator at speed `v_mag` along the
/// direction of `p_base.v`, snapped to the frequency lattice.
pub fn sweep_point(
    p_base: &SymbolParams,
    v_mag: f64,
    t: f64,
    grid: &GridSpec,
    filter: &FrequencyFilter,
    settings: &PowerIteration,
) -> Result<SweepRecord> {
    let dir_len = p_base.v_mag();
    let requested: Vec<f64> = p_base.v().iter().map(|c| c / dir_len * v_mag).collect();
    let (snapped, snap_error) = grid.snap_to_lattice(&requested);
    let p = p_base.with_velocity(snapped)?;
    // the filter ball must sit inside the frequency box on every axis
    let reach = p.v().iter().fold(0.0f64, |m, c| m.max(c.abs())) + p.eta();
    if reach >= grid.nyquist() {
        return Err(Error::resolution(format!(
            "max |v_i| + eta = {reach} reaches the Nyquist frequency {}",
            grid.nyquist()
        )));
    }
    let op = PropagationOperator::new(grid, &p, t, filter)?;
    let est = opnorm_estimate(&op, settings)?;
    Ok(SweepRecord {
        rho: p.rho(),
        eta: p.eta(),
        v_mag: p.v_mag(),
        t,
        scale_s: op.scale(),
        norm_or_integral: est.value,
        estimator_residual: est.residual,
        snap_error,
        iterations: est.iterations,
        converged: est.converged,
    })
}

/// Every `(v_mag, t)` pair of the cartesian product, in row-major order.
pub fn decay_sweep(
    p_base: &SymbolParams,
    v_magnitudes: &[f64],
    t_values: &[f64],
    grid: &GridSpec,
    filter: &FrequencyFilter,
    settings: &PowerIteration,
) -> Result<Vec<SweepRecord>> {
    let mut out = Vec::with_capacity(v_magnitudes.len() * t_values.len());
    for &v in v_magnitudes {
        for &t in t_values {
            out.push(sweep_point(p_base, v, t, grid, filter, settings)?);
        }
    }
    Ok(out)
}

/// Records at or below this value are roundoff and excluded from fits.
pub const NOISE_FLOOR: f64 = 1e-13;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayFit {
    pub slope: f64,
    pub used: usize,
    /// Ratio of the largest to the smallest `s` among the records used.
    pub scale_span: f64,
}

/// Least-squares slope of `log(norm)` against `log(1 + s)` over the records
/// above [`NOISE_FLOOR`].
pub fn fit_decay(records: &[SweepRecord]) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.norm_or_integral > NOISE_FLOOR)
        .map(|r| ((1.0 + r.scale_s).ln(), r.norm_or_integral.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} records above the {NOISE_FLOOR:e} floor, need at least 3",
            pts.len()
        )));
    }
    let slope = least_squares_slope(&pts)
        .ok_or_else(|| Error::InsufficientData("all records share one scale".into()))?;
    let scales: Vec<f64> = records
        .iter()
        .filter(|r| r.norm_or_integral > NOISE_FLOOR)
        .map(|r| r.scale_s)
        .collect();
    let lo = scales.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = scales.iter().cloned().fold(0.0, f64::max);
    Ok(DecayFit {
        slope,
        used: pts.len(),
        scale_span: hi / lo,
    })
}

/// Cook integral split into the quadrature over `[-T, T]` and the estimated
/// contribution of `|t| > T`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CookIntegral {
    pub quadrature: f64,
    pub tail: f64,
    pub nodes: usize,
}

impl CookIntegral {
    pub fn total(&self) -> f64 {
        self.quadrature + self.tail
    }
}

/// Free evaluator of `t -> ||V exp(-itH0) phi||` on one grid.
pub(crate) struct CookIntegrand {
    grid: GridSpec,
    potential: Vec<f64>,
    omega: Vec<f64>,
    freq: Vec<Complex64>,
    wrap_guard: f64,
    mass_tolerance: f64,
}

impl CookIntegrand {
    pub(crate) fn new(v: &PotentialSpec, phi: &Field, cfg: &EvolutionConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = *phi.grid();
        Ok(CookIntegrand {
            grid,
            potential: v.sample_on_grid(&grid)?,
            omega: omega_table(&grid, cfg.order()),
            freq: phi.in_space(Space::Frequency).into_values(),
            wrap_guard: cfg.wrap_guard,
            mass_tolerance: cfg.mass_tolerance,
        })
    }

    pub(crate) fn evolved(&self, t: f64) -> Result<Field> {
        let mut psi: Vec<Complex64> = self
            .freq
            .iter()
            .zip(&self.omega)
            .map(|(c, w)| c * Complex64::from_polar(1.0, -t * w))
            .collect();
        inverse_in_place(&self.grid, &mut psi);
        Field::new(self.grid, Space::Position, psi)
    }

    /// `||V exp(-itH0) phi||`, failing when the packet has reached the guard.
    pub(crate) fn value(&self, t: f64, step: usize) -> Result<f64> {
        let psi = self.evolved(t)?;
        let mass = escaped_mass_fraction(&psi, self.wrap_guard);
        if mass > self.mass_tolerance {
            return Err(Error::DomainEscape { step, mass });
        }
        let s: f64 = psi
            .values()
            .iter()
            .zip(&self.potential)
            .map(|(p, v)| (p * v).norm_sqr())
            .sum();
        Ok((s * self.grid.cell_volume(Space::Position)).sqrt())
    }
}

/// `int_{-T}^{T} ||V exp(-itH0) phi|| dt` by composite Simpson with step
/// close to `cfg.dt`, plus a tail estimate for `|t| > T`.
pub fn cook_integral(
    v: &PotentialSpec,
    phi_v: &Field,
    t_max: f64,
    cfg: &EvolutionConfig,
) -> Result<CookIntegral> {
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(Error::param(format!("horizon T = {t_max} must be positive")));
    }
    if v.is_zero() {
        return Ok(CookIntegral {
            quadrature: 0.0,
            tail: 0.0,
            nodes: 0,
        });
    }
    let integrand = CookIntegrand::new(v, phi_v, cfg)?;
    let mut intervals = (2.0 * t_max / cfg.dt).ceil().max(2.0) as usize;
    if intervals % 2 == 1 {
        intervals += 1;
    }
    let h = 2.0 * t_max / intervals as f64;
    let samples: Vec<f64> = (0..=intervals)
        .map(|k| integrand.value(-t_max + k as f64 * h, k))
        .collect::<Result<_>>()?;
    let sum: f64 = samples
        .iter()
        .enumerate()
        .map(|(k, g)| {
            let w = if k == 0 || k == intervals {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            w * g
        })
        .sum();
    let times: Vec<f64> = (0..=intervals).map(|k| -t_max + k as f64 * h).collect();
    let side = |sign: f64| {
        envelope_tail(
            times.iter().zip(&samples).filter(|(t, _)| sign * **t > 0.0).map(|(t, g)| (t.abs(), *g)),
            t_max,
        )
    };
    let tail = side(1.0) + side(-1.0);
    Ok(CookIntegral {
        quadrature: sum * h / 3.0,
        tail,
        nodes: intervals + 1,
    })
}

/// Estimate of `int_T^inf ||V exp(-i sign t H0) phi|| dt`, see [`envelope_tail`].
pub(crate) fn cook_tail_one_sided(
    v: &PotentialSpec,
    phi: &Field,
    t_max: f64,
    cfg: &EvolutionConfig,
    sign: f64,
) -> Result<f64> {
    if v.is_zero() {
        return Ok(0.0);
    }
    let integrand = CookIntegrand::new(v, phi, cfg)?;
    let samples = (0..=TAIL_SAMPLES)
        .map(|k| {
            let t = t_max * (0.5 + 0.5 * k as f64 / TAIL_SAMPLES as f64);
            integrand.value(sign * t, 0).map(|g| (t, g))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(envelope_tail(samples.into_iter(), t_max))
}

const TAIL_SAMPLES: usize = 8;

/// `int_T^inf g` for a power law `A (t / (3T/4))^(-p)` fitted to the upper
/// envelope of `g`: `A` is the largest sample in `[3T/4, T]` and `p` follows
/// from the largest sample in `[T/2, 3T/4]`. Window maxima ride over the
/// lobes of oscillating tails; for monotone `g` the fit reproduces `g` at
/// `T/2` and `3T/4`. Infinite when `p <= 1`.
pub(crate) fn envelope_tail(samples: impl Iterator<Item = (f64, f64)>, t_edge: f64) -> f64 {
    let (mut early, mut late) = (0.0f64, 0.0f64);
    for (t, g) in samples {
        if t >= 0.5 * t_edge && t <= 0.75 * t_edge {
            early = early.max(g);
        }
        if t >= 0.75 * t_edge && t <= t_edge {
            late = late.max(g);
        }
    }
    if late == 0.0 {
        return 0.0;
    }
    let p = (early / late).ln() / 1.5f64.ln();
    if p.is_finite() && p > 1.0 {
        late * 0.75f64.powf(p) * t_edge / (p - 1.0)
    } else {
        f64::INFINITY
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::free_evolve;
    use crate::wavepackets::{boost, make_envelope_state, EnvelopeSpec};
    use nalgebra::DMatrix;

    /// Dense complex matrix acting on the node values of a 1D grid.
    struct Dense {
        grid: GridSpec,
        a: DMatrix<Complex64>,
    }

    impl LinearOperator for Dense {
        fn grid(&self) -> &GridSpec {
            &self.grid
        }
        fn apply(&self, psi: &Field) -> Result<Field> {
            let x = DMatrix::from_column_slice(psi.values().len(), 1, psi.values());
            Field::new(self.grid, psi.space(), (&self.a * x).as_slice().to_vec())
        }
        fn apply_adjoint(&self, psi: &Field) -> Result<Field> {
            let x = DMatrix::from_column_slice(psi.values().len(), 1, psi.values());
            Field::new(self.grid, psi.space(), (self.a.adjoint() * x).as_slice().to_vec())
        }
    }

    fn dense_of(op: &dyn LinearOperator) -> DMatrix<Complex64> {
        let grid = *op.grid();
        let n = grid.len();
        let mut a = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = vec![Complex64::default(); n];
            e[j] = Complex64::from(1.0);
            let col = op.apply(&Field::new(grid, Space::Position, e).unwrap()).unwrap();
            for i in 0..n {
                a[(i, j)] = col.values()[i];
            }
        }
        a
    }

    fn strict() -> PowerIteration {
        PowerIteration {
            max_iters: 20000,
            tol: 1e-12,
            seed: 7,
        }
    }

    #[test]
    fn opnorm_of_identity_and_masks() {
        let grid = GridSpec::new(1, 64, 5.0).unwrap();
        let id = Dense {
            grid,
            a: DMatrix::identity(64, 64),
        };
        let est = opnorm_estimate(&id, &PowerIteration::default()).unwrap();
        assert!((est.value - 1.0).abs() < 1e-6 && est.converged);

        let mask: Vec<f64> = (0..64).map(|i| (i as f64 * 0.37).sin()).collect();
        let diag = Dense {
            grid,
            a: DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                64,
                mask.iter().map(|m| Complex64::from(*m)),
            )),
        };
        let est = opnorm_estimate(&diag, &strict()).unwrap();
        let peak = mask.iter().map(|m| m.abs()).fold(0.0, f64::max);
        assert!((est.value - peak).abs() < 1e-6, "{} vs {peak}", est.value);
    }

    #[test]
    fn opnorm_matches_dense_svd_on_random_matrix() {
        let grid = GridSpec::new(1, 64, 5.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = DMatrix::from_fn(64, 64, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let sigma = a.clone().svd(false, false).singular_values.max();
        let est = opnorm_estimate(&Dense { grid, a }, &strict()).unwrap();
        assert!(est.converged);
        assert!((est.value - sigma).abs() < 1e-8 * sigma, "{} vs {sigma}", est.value);
    }

    #[test]
    fn opnorm_flags_non_convergence() {
        let grid = GridSpec::new(1, 64, 5.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = DMatrix::from_fn(64, 64, |_, _| Complex64::new(rng.random_range(-1.0..1.0), 0.0));
        let settings = PowerIteration {
            max_iters: 2,
            tol: 1e-14,
            seed: 1,
        };
        let est = opnorm_estimate(&Dense { grid, a }, &settings).unwrap();
        assert!(!est.converged);
        assert_eq!(est.iterations, 2);
    }

    fn small_setup() -> (GridSpec, SymbolParams, f64) {
        // rho = 1, |v| = 8 eta is the admissibility threshold
        let grid = GridSpec::new(1, 64, 20.0).unwrap();
        let p = SymbolParams::new(1.0, 0.5, vec![4.0]).unwrap();
        (grid, p, 8.0)
    }

    #[test]
    fn propagation_operator_operator_matches_dense_svd() {
        let (grid, p, t) = small_setup();
        let op = PropagationOperator::new(&grid, &p, t, &FrequencyFilter::default()).unwrap();
        let a = dense_of(&op);
        let sigma = a.svd(false, false).singular_values.max();
        let est = opnorm_estimate(&op, &strict()).unwrap();
        assert!((est.value - sigma).abs() < 1e-6, "{} vs {sigma}", est.value);
    }

    #[test]
    fn propagation_operator_adjoint_is_consistent() {
        let (grid, p, t) = small_setup();
        let op = PropagationOperator::new(&grid, &p, t, &FrequencyFilter::default()).unwrap();
        let a = dense_of(&op);
        let n = grid.len();
        for j in [0, 17, 40] {
            let mut e = vec![Complex64::default(); n];
            e[j] = Complex64::from(1.0);
            let col = op.apply_adjoint(&Field::new(grid, Space::Position, e).unwrap()).unwrap();
            for i in 0..n {
                assert!((col.values()[i] - a[(j, i)].conj()).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn propagation_operator_matches_a_scripted_composition() {
        let grid = GridSpec::new(2, 128, 24.0).unwrap();
        let p = SymbolParams::new(0.75, 0.4, vec![2.8, 2.8]).unwrap();
        let t = 8.0;
        let filter = FrequencyFilter::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let psi = Field::from_fn(grid, Space::Position, |_| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let out = propagation_apply(&psi, t, &p, &filter).unwrap();

        let s = p.v_mag().powf(2.0 * 0.75 - 1.0) * t;
        let ball = cutoff(&grid, CutoffKind::SharpBall, &[0.0, 0.0], s / 16.0).unwrap();
        let g = p.order().grad(p.v()).unwrap();
        let chi = cutoff(&grid, CutoffKind::SmoothChi, &[g[0] * t, g[1] * t], s / 4.0).unwrap();
        let step1 = psi.masked(&ball).unwrap();
        let step2 = step1
            .apply_multiplier(|xi| {
                let r = ((xi[0] - p.v()[0]).powi(2) + (xi[1] - p.v()[1]).powi(2)).sqrt();
                Complex64::from(filter.profile(r / p.eta()))
            })
            .unwrap();
        let step3 = free_evolve(&step2, t, 0.75).unwrap();
        let step4 = step3.masked(&chi).unwrap();
        for (a, b) in out.values().iter().zip(step4.values()) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn propagation_operator_examples() {
        let (grid, p, t) = small_setup();
        let filter = FrequencyFilter::default();
        // s = 32, F radius 2: a field supported outside is annihilated
        let outside = Field::from_fn(grid, Space::Position, |x| {
            Complex64::from(if x[0].abs() > 2.5 { 1.0 } else { 0.0 })
        });
        let out = propagation_apply(&outside, t, &p, &filter).unwrap();
        assert!(out.values().iter().all(|c| *c == Complex64::default()));

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let psi = Field::from_fn(grid, Space::Position, |_| Complex64::new(rng.random_range(-1.0..1.0), 0.0));
        let out = propagation_apply(&psi, t, &p, &filter).unwrap();
        assert!(out.norm() <= psi.norm() * (1.0 + 1e-12));

        let slow = SymbolParams::new(1.0, 0.5, vec![3.0]).unwrap();
        assert!(matches!(propagation_apply(&psi, t, &slow, &filter), Err(Error::Precondition(_))));
        assert!(matches!(propagation_apply(&psi, 0.0, &p, &filter), Err(Error::Precondition(_))));
        assert!(matches!(propagation_apply(&psi, 0.5, &p, &filter), Err(Error::Resolution(_))));
    }

    fn record(s: f64, value: f64) -> SweepRecord {
        SweepRecord {
            rho: 1.0,
            eta: 1.0,
            v_mag: 8.0,
            t: s / 8.0,
            scale_s: s,
            norm_or_integral: value,
            estimator_residual: 0.0,
            snap_error: 0.0,
            iterations: 1,
            converged: true,
        }
    }

    #[test]
    fn fit_recovers_a_power_law_and_skips_the_floor() {
        let recs: Vec<SweepRecord> = [10.0, 20.0, 40.0, 80.0]
            .iter()
            .map(|s: &f64| record(*s, 3.0 * (1.0 + s).powf(-4.0)))
            .chain([record(500.0, 1e-14)])
            .collect();
        let fit = fit_decay(&recs).unwrap();
        assert!((fit.slope + 4.0).abs() < 1e-12);
        assert_eq!(fit.used, 4);
        assert!((fit.scale_span - 8.0).abs() < 1e-12);
        let few = [record(10.0, 1.0), record(20.0, 1e-20), record(30.0, 0.5)];
        assert!(matches!(fit_decay(&few), Err(Error::InsufficientData(_))));
    }

    fn cook_setup(v_mag: f64, shift: [f64; 2]) -> (PotentialSpec, Field, EvolutionConfig) {
        let grid = GridSpec::new(2, 256, 48.0).unwrap();
        let phi0 = make_envelope_state(&grid, &EnvelopeSpec::new(1.5, vec![shift[0], shift[1]]).unwrap()).unwrap();
        let phi = boost(&phi0, &[v_mag, 0.0]).unwrap().field;
        let v = PotentialSpec::gaussian(1.0, vec![shift[0], 1.0 + shift[1]], 2.0).unwrap();
        let mut cfg = EvolutionConfig::new(1.0, 0.1).unwrap();
        cfg.mass_tolerance = 1e-4;
        (v, phi, cfg)
    }

    #[test]
    fn cook_integral_examples() {
        let (v, phi, cfg) = cook_setup(4.0, [0.0, 0.0]);
        let zero = cook_integral(&PotentialSpec::zero(), &phi, 8.0, &cfg).unwrap();
        fn sampled(g: impl Fn(f64) -> f64) -> impl Iterator<Item = (f64, f64)> {
            (0..=16).map(move |k| (1.0 + k as f64 / 16.0, g(1.0 + k as f64 / 16.0)))
        }
        assert_eq!(envelope_tail(sampled(|_| 0.0), 2.0), 0.0);
        // g = t^-3 from T = 2: int_2^inf t^-3 dt = 1/8
        assert!((envelope_tail(sampled(|t| t.powi(-3)), 2.0) - 0.125).abs() < 1e-12);
        assert!(envelope_tail(sampled(|_| 1.0), 2.0).is_infinite());
        // lobes: the envelope fit stays above the smooth law
        let lobed = envelope_tail(sampled(|t| t.powi(-3) * (8.0 * t).cos().abs()), 2.0);
        assert!(lobed.is_finite() && lobed > 0.0);
        assert_eq!(zero.total(), 0.0);

        let integrand = CookIntegrand::new(&v, &phi, &cfg).unwrap();
        let direct = phi
            .in_space(Space::Position)
            .masked(&v.sample_on_grid(phi.grid()).unwrap())
            .unwrap()
            .norm();
        assert!((integrand.value(0.0, 0).unwrap() - direct).abs() < 1e-13);

        let c = cook_integral(&v, &phi, 5.0, &cfg).unwrap();
        let longer = cook_integral(&v, &phi, 6.0, &cfg).unwrap();
        assert!(c.quadrature > 0.0 && c.tail >= 0.0);
        assert!((c.total() - longer.total()).abs() < 0.05 * longer.total());
    }

    #[test]
    fn cook_integral_is_translation_invariant() {
        let (v, phi, cfg) = cook_setup(4.0, [0.0, 0.0]);
        // shifts by whole lattice cells keep the sampled problem identical
        let dx = phi.grid().spacing();
        let (v2, phi2, _) = cook_setup(4.0, [3.0 * dx, -2.0 * dx]);
        let a = cook_integral(&v, &phi, 6.0, &cfg).unwrap();
        let b = cook_integral(&v2, &phi2, 6.0, &cfg).unwrap();
        assert!((a.quadrature - b.quadrature).abs() < 1e-8);
    }

    #[test]
    fn cook_integral_reports_escape() {
        let (v, phi, mut cfg) = cook_setup(4.0, [0.0, 0.0]);
        cfg.mass_tolerance = 1e-6;
        let err = cook_integral(&v, &phi, 30.0, &cfg);
        assert!(matches!(err, Err(Error::DomainEscape { .. })));
    }
}
