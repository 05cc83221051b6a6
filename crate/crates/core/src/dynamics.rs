//! Free propagation as an exact Fourier multiplier and interacting
//! propagation by Strang splitting.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{forward_in_place, inverse_in_place, Field, GridSpec, Space};
use crate::potentials::PotentialSpec;
use crate::symbol::FractionalOrder;

fn default_wrap_guard() -> f64 {
    0.9
}

fn default_mass_tolerance() -> f64 {
    1e-6
}

/// Step size and wrap-around guard of the split-step integrator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub rho: f64,
    pub dt: f64,
    /// Fraction of the half-width beyond which mass counts as escaping.
    #[serde(default = "default_wrap_guard")]
    pub wrap_guard: f64,
    /// Largest tolerated escaping mass fraction.
    #[serde(default = "default_mass_tolerance")]
    pub mass_tolerance: f64,
}

impl EvolutionConfig {
    pub fn new(rho: f64, dt: f64) -> Result<Self> {
        let cfg = EvolutionConfig {
            rho,
            dt,
            wrap_guard: default_wrap_guard(),
            mass_tolerance: default_mass_tolerance(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_dt(&self, dt: f64) -> Result<Self> {
        let cfg = EvolutionConfig { dt, ..*self };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        FractionalOrder::new(self.rho)?;
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::param(format!("time step dt = {} must be positive", self.dt)));
        }
        if !(self.wrap_guard > 0.0 && self.wrap_guard < 1.0) {
            return Err(Error::param(format!(
                "wrap_guard = {} must lie in (0, 1)",
                self.wrap_guard
            )));
        }
        if !(self.mass_tolerance > 0.0) {
            return Err(Error::param("mass_tolerance must be positive"));
        }
        Ok(())
    }

    pub fn order(&self) -> FractionalOrder {
        FractionalOrder::new(self.rho).expect("validated")
    }
}

/// `omega` on every frequency node.
pub(crate) fn omega_table(grid: &GridSpec, order: FractionalOrder) -> Vec<f64> {
    grid.sample(Space::Frequency, |xi| order.omega(xi))
}

fn phases(values: &[f64], scale: f64) -> Vec<Complex64> {
    values
        .iter()
        .map(|w| Complex64::from_polar(1.0, -scale * w))
        .collect()
}

/// `exp(-i t omega(D)) f`, in the caller's representation.
pub fn free_evolve(f: &Field, t: f64, rho: f64) -> Result<Field> {
    let order = FractionalOrder::new(rho)?;
    if !t.is_finite() {
        return Err(Error::param("evolution time must be finite"));
    }
    f.apply_multiplier(|xi| Complex64::from_polar(1.0, -t * order.omega(xi)))
}

/// Fraction of `|f|^2` at position nodes with some `|x_i| > guard L`.
pub fn escaped_mass_fraction(f: &Field, guard: f64) -> f64 {
    let pos = f.in_space(Space::Position);
    let outside = outside_mask(pos.grid(), guard);
    escaped(pos.values(), &outside)
}

fn outside_mask(grid: &GridSpec, guard: f64) -> Vec<bool> {
    let limit = guard * grid.half_width();
    grid.sample(Space::Position, |x| x.iter().any(|c| c.abs() > limit))
}

fn escaped(values: &[Complex64], outside: &[bool]) -> f64 {
    let (mut out, mut total) = (0.0, 0.0);
    for (v, o) in values.iter().zip(outside) {
        let w = v.norm_sqr();
        total += w;
        if *o {
            out += w;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        out / total
    }
}

/// Reusable split-step propagator `exp(-i t (omega(D) + V))` on one grid.
pub struct SplitStepper {
    grid: GridSpec,
    cfg: EvolutionConfig,
    potential: Vec<f64>,
    omega: Vec<f64>,
    outside: Vec<bool>,
}

impl SplitStepper {
    pub fn new(grid: &GridSpec, v: &PotentialSpec, cfg: &EvolutionConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(SplitStepper {
            grid: *grid,
            cfg: *cfg,
            potential: v.sample_on_grid(grid)?,
            omega: omega_table(grid, cfg.order()),
            outside: outside_mask(grid, cfg.wrap_guard),
        })
    }

    pub fn config(&self) -> &EvolutionConfig {
        &self.cfg
    }

    /// Step lengths for a total time `|t|`: full steps then one shortened
    /// remainder.
    fn schedule(&self, t: f64) -> Vec<f64> {
        let span = t.abs();
        let dt = self.cfg.dt;
        let mut full = (span / dt).floor() as usize;
        let mut rest = span - full as f64 * dt;
        // absorb roundoff-sized remainders
        if rest <= 1e-12 * dt {
            rest = 0.0;
        } else if dt - rest <= 1e-12 * dt {
            full += 1;
            rest = 0.0;
        }
        let mut steps = vec![dt; full];
        if rest > 0.0 {
            steps.push(rest);
        }
        steps
    }

    /// Evolves `f` over time `t`. Negative `t` applies the exact adjoint of
    /// the forward stepper for `|t|`: reversed step order, conjugated phases.
    pub fn evolve(&self, f: &Field, t: f64) -> Result<Field> {
        if f.grid() != &self.grid {
            return Err(Error::Shape("field grid differs from the propagator grid".into()));
        }
        if !t.is_finite() {
            return Err(Error::param("evolution time must be finite"));
        }
        let mut steps = self.schedule(t);
        let sign = if t < 0.0 {
            steps.reverse();
            -1.0
        } else {
            1.0
        };
        let mut psi = f.in_space(Space::Position).into_values();
        self.check_guard(&psi, 0)?;
        let mut cache: Option<(f64, Vec<Complex64>, Vec<Complex64>)> = None;
        for (k, h) in steps.iter().enumerate() {
            let tau = sign * h;
            if cache.as_ref().is_none_or(|c| c.0 != tau) {
                cache = Some((
                    tau,
                    phases(&self.potential, 0.5 * tau),
                    phases(&self.omega, tau),
                ));
            }
            let (_, half_v, kin) = cache.as_ref().expect("filled above");
            mul(&mut psi, half_v);
            forward_in_place(&self.grid, &mut psi);
            mul(&mut psi, kin);
            inverse_in_place(&self.grid, &mut psi);
            mul(&mut psi, half_v);
            self.check_guard(&psi, k + 1)?;
        }
        Field::new(self.grid, Space::Position, psi).map(|p| p.in_space(f.space()))
    }

    fn check_guard(&self, psi: &[Complex64], step: usize) -> Result<()> {
        let mass = escaped(psi, &self.outside);
        if mass > self.cfg.mass_tolerance {
            Err(Error::DomainEscape { step, mass })
        } else {
            Ok(())
        }
    }
}

fn mul(a: &mut [Complex64], b: &[Complex64]) {
    a.iter_mut().zip(b).for_each(|(x, y)| *x *= y);
}

/// `exp(-i t (omega(D) + V)) f` by Strang splitting with step `cfg.dt`.
pub fn interacting_evolve(
    f: &Field,
    t: f64,
    v: &PotentialSpec,
    cfg: &EvolutionConfig,
) -> Result<Field> {
    SplitStepper::new(f.grid(), v, cfg)?.evolve(f, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavepackets::{boost, make_envelope_state, EnvelopeSpec};

    fn packet(grid: &GridSpec, eta: f64, center: Vec<f64>) -> Field {
        make_envelope_state(grid, &EnvelopeSpec::new(eta, center).unwrap()).unwrap()
    }

    #[test]
    fn free_evolution_examples() {
        let grid = GridSpec::new(2, 64, 10.0).unwrap();
        let f = packet(&grid, 2.0, vec![1.0, 0.0]).in_space(Space::Position);
        let same = free_evolve(&f, 0.0, 0.75).unwrap();
        for (a, b) in same.values().iter().zip(f.values()) {
            assert!((a - b).norm() < 1e-14);
        }
        let a = free_evolve(&free_evolve(&f, 0.7, 0.75).unwrap(), 1.9, 0.75).unwrap();
        let b = free_evolve(&f, 2.6, 0.75).unwrap();
        assert!(a.sub(&b).unwrap().norm() < 1e-12);
        assert!((b.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn plane_wave_is_an_eigenmode() {
        let grid = GridSpec::new(2, 32, 6.0).unwrap();
        let dk = grid.freq_spacing();
        let k = [3.0 * dk, -5.0 * dk];
        let wave = Field::from_fn(grid, Space::Position, |x| {
            Complex64::from_polar(1.0, k[0] * x[0] + k[1] * x[1])
        });
        let t = 3.3;
        for rho in [0.5, 0.75, 1.0] {
            let out = free_evolve(&wave, t, rho).unwrap();
            let w = FractionalOrder::new(rho).unwrap().omega(&k);
            let phase = Complex64::from_polar(1.0, -t * w);
            for (o, i) in out.values().iter().zip(wave.values()) {
                assert!((o - phase * i).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn free_evolution_keeps_the_support() {
        let grid = GridSpec::new(2, 64, 10.0).unwrap();
        let f = packet(&grid, 2.0, vec![0.0, 0.0]);
        let out = free_evolve(&f, 5.0, 0.6).unwrap();
        for (a, b) in out.values().iter().zip(f.values()) {
            assert_eq!(*a == Complex64::default(), *b == Complex64::default());
        }
    }

    #[test]
    fn zero_potential_matches_free_evolution() {
        let grid = GridSpec::new(2, 64, 24.0).unwrap();
        let f = packet(&grid, 2.0, vec![0.0, 0.0]);
        let cfg = EvolutionConfig::new(0.75, 0.13).unwrap();
        let a = interacting_evolve(&f, 1.0, &PotentialSpec::zero(), &cfg).unwrap();
        let b = free_evolve(&f, 1.0, 0.75).unwrap();
        assert!(a.sub(&b).unwrap().norm() < 1e-10);
    }

    #[test]
    fn interacting_evolution_is_unitary_and_reversible() {
        let grid = GridSpec::new(2, 64, 24.0).unwrap();
        let f = packet(&grid, 2.0, vec![1.0, -1.0]);
        let v = PotentialSpec::gaussian(3.0, vec![0.5, 0.0], 1.0).unwrap();
        let cfg = EvolutionConfig::new(0.75, 0.05).unwrap();
        let fwd = interacting_evolve(&f, 1.03, &v, &cfg).unwrap();
        assert!((fwd.norm() - 1.0).abs() < 1e-10);
        let back = interacting_evolve(&fwd, -1.03, &v, &cfg).unwrap();
        assert!(back.sub(&f).unwrap().norm() < 1e-8);
    }

    #[test]
    fn splitting_converges_at_second_order() {
        let grid = GridSpec::new(2, 64, 24.0).unwrap();
        let f = packet(&grid, 2.0, vec![-1.0, 0.0]);
        let v = PotentialSpec::gaussian(2.0, vec![0.0, 0.0], 1.0).unwrap();
        let run = |dt: f64| interacting_evolve(&f, 1.0, &v, &EvolutionConfig::new(1.0, dt).unwrap()).unwrap();
        let (a, b, c) = (run(0.1), run(0.05), run(0.025));
        let ratio = a.sub(&b).unwrap().norm() / b.sub(&c).unwrap().norm();
        assert!((3.2..=4.8).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn schedule_shortens_the_last_step() {
        let grid = GridSpec::new(1, 16, 4.0).unwrap();
        let s = SplitStepper::new(&grid, &PotentialSpec::zero(), &EvolutionConfig::new(1.0, 0.3).unwrap()).unwrap();
        let steps = s.schedule(1.0);
        assert_eq!(steps.len(), 4);
        assert!((steps[3] - 0.1).abs() < 1e-12);
        assert_eq!(s.schedule(0.9).len(), 3);
        assert!(s.schedule(0.0).is_empty());
    }

    #[test]
    fn wrap_guard_trips_with_step_index() {
        let grid = GridSpec::new(1, 512, 40.0).unwrap();
        let f = packet(&grid, 1.0, vec![0.0]);
        let fast = boost(&f, &[10.0]).unwrap().field;
        let cfg = EvolutionConfig::new(1.0, 0.1).unwrap();
        match interacting_evolve(&fast, 6.0, &PotentialSpec::zero(), &cfg) {
            Err(Error::DomainEscape { step, mass }) => {
                assert!(step > 0 && step < 60, "step {step}");
                assert!(mass > 1e-6);
            }
            other => panic!("expected a domain escape, got {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        assert!(EvolutionConfig::new(0.75, 0.0).is_err());
        assert!(EvolutionConfig::new(0.75, -1.0).is_err());
        assert!(EvolutionConfig::new(0.3, 0.1).is_err());
        let mut cfg = EvolutionConfig::new(0.75, 0.1).unwrap();
        cfg.wrap_guard = 1.0;
        assert!(cfg.validate().is_err());
        let parsed: EvolutionConfig = from_pairs("rho = 0.75\ndt = 0.1\n");
        assert_eq!(parsed.wrap_guard, 0.9);
        assert_eq!(parsed.mass_tolerance, 1e-6);
    }

    fn from_pairs(src: &str) -> EvolutionConfig {
        use serde::de::value::MapDeserializer;
        let pairs: Vec<(String, f64)> = src
            .lines()
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.trim().to_string(), v.trim().parse().unwrap()))
            .collect();
        let de: MapDeserializer<'_, _, serde::de::value::Error> = MapDeserializer::new(pairs.into_iter());
        EvolutionConfig::deserialize(de).unwrap()
    }
}
