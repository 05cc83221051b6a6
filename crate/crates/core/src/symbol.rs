//! Closed-form mathematics of the fractional dispersion relation
//! `omega(xi) = |xi|^(2 rho) / (2 rho)` for `1/2 <= rho <= 1`.

use crate::error::{Error, Result};

/// Fractional order `rho`, validated to lie in `[1/2, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct FractionalOrder(f64);

impl FractionalOrder {
    pub fn new(rho: f64) -> Result<Self> {
        if rho.is_finite() && (0.5..=1.0).contains(&rho) {
            Ok(FractionalOrder(rho))
        } else {
            Err(Error::param(format!("rho = {rho} outside [1/2, 1]")))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn is_schrodinger(self) -> bool {
        self.0 == 1.0
    }

    /// `omega` as a function of `r = |xi|`.
    #[inline]
    pub fn omega_radial(self, r: f64) -> f64 {
        if r == 0.0 {
            0.0
        } else {
            r.powf(2.0 * self.0) / (2.0 * self.0)
        }
    }

    #[inline]
    pub fn omega(self, xi: &[f64]) -> f64 {
        self.omega_radial(euclid(xi))
    }

    /// Group speed `|grad omega|` at radius `r`, i.e. `r^(2 rho - 1)`.
    #[inline]
    pub fn group_speed(self, r: f64) -> f64 {
        r.powf(2.0 * self.0 - 1.0)
    }

    /// `|xi|^(2 rho - 2) xi`. Singular at the origin unless `rho = 1`.
    pub fn grad(self, xi: &[f64]) -> Result<Vec<f64>> {
        let r = euclid(xi);
        if r == 0.0 {
            return if self.is_schrodinger() {
                Ok(vec![0.0; xi.len()])
            } else {
                Err(Error::Singularity { rho: self.0 })
            };
        }
        let scale = r.powf(2.0 * self.0 - 2.0);
        Ok(xi.iter().map(|x| scale * x).collect())
    }

    /// Maximum absolute row sum of the Hessian of `omega` at `xi`.
    pub fn hessian_rowsum(self, xi: &[f64]) -> Result<f64> {
        let r = euclid(xi);
        if r == 0.0 {
            return if self.is_schrodinger() {
                Ok(1.0)
            } else {
                Err(Error::Singularity { rho: self.0 })
            };
        }
        let scale = r.powf(2.0 * self.0 - 2.0);
        let cross = (2.0 * self.0 - 2.0) / (r * r);
        let rowsum = (0..xi.len())
            .map(|j| {
                (0..xi.len())
                    .map(|k| {
                        let delta = if j == k { 1.0 } else { 0.0 };
                        (scale * (delta + cross * xi[j] * xi[k])).abs()
                    })
                    .sum::<f64>()
            })
            .fold(0.0, f64::max);
        Ok(rowsum)
    }
}

pub(crate) fn euclid(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `|xi|^(2 rho) / (2 rho)`, validating `rho`.
pub fn omega_rho(xi: &[f64], rho: f64) -> Result<f64> {
    Ok(FractionalOrder::new(rho)?.omega(xi))
}

/// `|xi|^(2 rho - 2) xi`, validating `rho`.
pub fn grad_omega(xi: &[f64], rho: f64) -> Result<Vec<f64>> {
    FractionalOrder::new(rho)?.grad(xi)
}

pub fn hessian_rowsum(xi: &[f64], rho: f64) -> Result<f64> {
    FractionalOrder::new(rho)?.hessian_rowsum(xi)
}

/// Order, frequency radius `eta` and boost velocity `v` of a propagation experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolParams {
    order: FractionalOrder,
    eta: f64,
    v: Vec<f64>,
}

impl SymbolParams {
    pub fn new(rho: f64, eta: f64, v: Vec<f64>) -> Result<Self> {
        let order = FractionalOrder::new(rho)?;
        if !(eta.is_finite() && eta > 0.0) {
            return Err(Error::param(format!("eta = {eta} must be positive")));
        }
        if v.is_empty() || v.iter().any(|c| !c.is_finite()) {
            return Err(Error::param("velocity must be a finite non-empty vector"));
        }
        Ok(SymbolParams { order, eta, v })
    }

    pub fn order(&self) -> FractionalOrder {
        self.order
    }

    pub fn rho(&self) -> f64 {
        self.order.value()
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn v_mag(&self) -> f64 {
        euclid(&self.v)
    }

    /// Copy with the velocity replaced.
    pub fn with_velocity(&self, v: Vec<f64>) -> Result<Self> {
        SymbolParams::new(self.rho(), self.eta, v)
    }

    /// The composite `|v|^(2 rho - 1) |t|` that controls the decay.
    pub fn transport_scale(&self, t: f64) -> f64 {
        self.order.group_speed(self.v_mag()) * t.abs()
    }

    pub(crate) fn require_fast(&self) -> Result<()> {
        if self.v_mag() > self.eta {
            Ok(())
        } else {
            Err(Error::Precondition(format!(
                "|v| = {} must exceed eta = {}",
                self.v_mag(),
                self.eta
            )))
        }
    }
}

/// Velocity condition for the propagation estimate in dimension `n`.
///
/// For `rho < 1`: `16 n (1 - rho) (|v| - eta)^(2 rho - 2) eta <= |v|^(2 rho - 1)`;
/// for `rho = 1`: `8 eta <= |v|`. Both non-strict.
pub fn velocity_admissible(p: &SymbolParams, n: usize) -> Result<bool> {
    p.require_fast()?;
    let rho = p.rho();
    let v = p.v_mag();
    let eta = p.eta();
    if p.order().is_schrodinger() {
        return Ok(8.0 * eta <= v);
    }
    let lhs = 16.0 * n as f64 * (1.0 - rho) * (v - eta).powf(2.0 * rho - 2.0) * eta;
    Ok(lhs <= v.powf(2.0 * rho - 1.0))
}

/// Smallest admissible `|v|` for the given order, `eta` and dimension, found by bisection.
pub fn min_admissible_speed(rho: f64, eta: f64, n: usize) -> Result<f64> {
    let order = FractionalOrder::new(rho)?;
    if order.is_schrodinger() {
        return Ok(8.0 * eta);
    }
    let ok = |v: f64| {
        16.0 * n as f64 * (1.0 - rho) * (v - eta).powf(2.0 * rho - 2.0) * eta
            <= v.powf(2.0 * rho - 1.0)
    };
    let (mut lo, mut hi) = (eta, 2.0 * eta);
    while !ok(hi) {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn fd_hessian_rowsum(xi: &[f64], rho: f64, h: f64) -> f64 {
        let n = xi.len();
        let w = |p: &[f64]| omega_rho(p, rho).unwrap();
        let mut best: f64 = 0.0;
        for j in 0..n {
            let mut row = 0.0;
            for k in 0..n {
                let mut pp = xi.to_vec();
                let mut pm = xi.to_vec();
                let mut mp = xi.to_vec();
                let mut mm = xi.to_vec();
                pp[j] += h;
                pp[k] += h;
                pm[j] += h;
                pm[k] -= h;
                mp[j] -= h;
                mp[k] += h;
                mm[j] -= h;
                mm[k] -= h;
                row += ((w(&pp) - w(&pm) - w(&mp) + w(&mm)) / (4.0 * h * h)).abs();
            }
            best = best.max(row);
        }
        best
    }

    #[test]
    fn omega_examples() {
        assert_relative_eq!(omega_rho(&[1.0, 0.0], 1.0).unwrap(), 0.5);
        assert_eq!(omega_rho(&[0.0, 0.0], 0.75).unwrap(), 0.0);
        assert_relative_eq!(omega_rho(&[3.0, 4.0], 0.5).unwrap(), 5.0, epsilon = 1e-14);
        assert!(matches!(omega_rho(&[1.0], 0.4), Err(Error::Parameter(_))));
        assert!(matches!(omega_rho(&[1.0], 1.1), Err(Error::Parameter(_))));
    }

    #[test]
    fn grad_examples() {
        assert_eq!(grad_omega(&[2.0, 0.0], 1.0).unwrap(), vec![2.0, 0.0]);
        let g = grad_omega(&[3.0, 4.0], 0.5).unwrap();
        assert_relative_eq!(g[0], 0.6, epsilon = 1e-14);
        assert_relative_eq!(g[1], 0.8, epsilon = 1e-14);
        // independent scalar route: 2^(2*0.75-2) * 2
        let expect = 2f64.powf(-0.5) * 2.0;
        let g = grad_omega(&[2.0, 0.0], 0.75).unwrap();
        assert_relative_eq!(g[0], expect, epsilon = 1e-14);
        assert_relative_eq!(g[0], std::f64::consts::SQRT_2, epsilon = 1e-14);
        assert_eq!(g[1], 0.0);
        assert!(matches!(grad_omega(&[0.0, 0.0], 0.75), Err(Error::Singularity { .. })));
        assert_eq!(grad_omega(&[0.0, 0.0], 1.0).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn hessian_examples_match_finite_differences() {
        let fd = fd_hessian_rowsum(&[1.0, 0.0], 0.75, 1e-4);
        assert_relative_eq!(fd, 1.0, epsilon = 1e-6);
        assert_relative_eq!(hessian_rowsum(&[1.0, 0.0], 0.75).unwrap(), 1.0, epsilon = 1e-14);

        // scaling of the unit case by |xi|^(2 rho - 2) = 3^(-1/2)
        let fd = fd_hessian_rowsum(&[0.0, 3.0], 0.75, 1e-4);
        let closed = hessian_rowsum(&[0.0, 3.0], 0.75).unwrap();
        assert_relative_eq!(closed, 3f64.powf(-0.5), epsilon = 1e-14);
        assert_relative_eq!(closed, fd, epsilon = 1e-6);

        assert!(matches!(hessian_rowsum(&[0.0, 0.0], 0.6), Err(Error::Singularity { .. })));
    }

    #[test]
    fn admissibility_examples() {
        let p = SymbolParams::new(1.0, 1.0, vec![8.0, 0.0]).unwrap();
        assert!(velocity_admissible(&p, 2).unwrap());
        let p = SymbolParams::new(1.0, 1.0, vec![7.9, 0.0]).unwrap();
        assert!(!velocity_admissible(&p, 2).unwrap());

        let p = SymbolParams::new(0.75, 1.0, vec![0.0, 20.0]).unwrap();
        let lhs = 16.0 * 2.0 * 0.25 / 19f64.sqrt();
        let rhs = 20f64.sqrt();
        assert_eq!(velocity_admissible(&p, 2).unwrap(), lhs <= rhs);
        assert!(velocity_admissible(&p, 2).unwrap());

        let p = SymbolParams::new(0.75, 1.0, vec![1.0, 0.0]).unwrap();
        assert!(matches!(velocity_admissible(&p, 2), Err(Error::Precondition(_))));
    }

    #[test]
    fn min_admissible_speed_is_the_threshold() {
        for &rho in &[0.5, 0.6, 0.75, 0.9, 1.0] {
            for n in 1..=3 {
                let v = min_admissible_speed(rho, 1.0, n).unwrap();
                let at = SymbolParams::new(rho, 1.0, vec![v]).unwrap();
                assert!(velocity_admissible(&at, n).unwrap());
                let below = SymbolParams::new(rho, 1.0, vec![v * (1.0 - 1e-9)]).unwrap();
                assert!(!velocity_admissible(&below, n).unwrap(), "rho={rho} n={n}");
            }
        }
        // rho = 1/2: 8 n eta / (|v| - eta) <= 1
        assert_relative_eq!(min_admissible_speed(0.5, 1.0, 2).unwrap(), 17.0, epsilon = 1e-9);
    }

    fn rotate2(x: [f64; 2], a: f64) -> [f64; 2] {
        [a.cos() * x[0] - a.sin() * x[1], a.sin() * x[0] + a.cos() * x[1]]
    }

    proptest! {
        #[test]
        fn omega_is_radial(x in -10.0..10.0f64, y in -10.0..10.0f64, a in 0.0..6.3f64, rho in 0.5..=1.0f64) {
            let w0 = omega_rho(&[x, y], rho).unwrap();
            let w1 = omega_rho(&rotate2([x, y], a), rho).unwrap();
            prop_assert!((w0 - w1).abs() <= 1e-12 * w0.max(1.0));
        }

        #[test]
        fn gradient_matches_central_differences(
            x in -5.0..5.0f64, y in -5.0..5.0f64, rho in 0.5..=1.0f64
        ) {
            prop_assume!((x * x + y * y).sqrt() >= 0.1);
            let h = 1e-5;
            let g = grad_omega(&[x, y], rho).unwrap();
            let dx = (omega_rho(&[x + h, y], rho).unwrap() - omega_rho(&[x - h, y], rho).unwrap()) / (2.0 * h);
            let dy = (omega_rho(&[x, y + h], rho).unwrap() - omega_rho(&[x, y - h], rho).unwrap()) / (2.0 * h);
            prop_assert!((g[0] - dx).abs() < 1e-6);
            prop_assert!((g[1] - dy).abs() < 1e-6);
        }
    }

    /// Dense sampling of the ball `|xi| <= eta` and `theta in [0, 1]`.
    fn ball_samples(eta: f64, n: usize) -> Vec<[f64; 2]> {
        let mut out = Vec::new();
        for i in 0..=n {
            let r = eta * i as f64 / n as f64;
            for k in 0..(4 * n) {
                let a = std::f64::consts::TAU * k as f64 / (4 * n) as f64;
                out.push([r * a.cos(), r * a.sin()]);
            }
        }
        out
    }

    #[test]
    fn hessian_bound_holds_along_segments() {
        let n = 2;
        // the row-sum constant 2n(1 - rho) only dominates up to rho ~ 0.72 for n = 2
        for &rho in &[0.5, 0.6, 0.7] {
            for &(eta, vmag) in &[(1.0f64, 3.0f64), (1.0, 10.0), (0.5, 2.0), (2.0, 40.0)] {
                let bound = 2.0 * n as f64 * (1.0 - rho) * (vmag - eta).powf(2.0 * rho - 2.0);
                let v = [vmag * 0.6, vmag * 0.8];
                for xi in ball_samples(eta, 12) {
                    for s in 0..=10 {
                        let th = s as f64 / 10.0;
                        let p = [v[0] + th * xi[0], v[1] + th * xi[1]];
                        let h = hessian_rowsum(&p, rho).unwrap();
                        assert!(h <= bound * (1.0 + 1e-12), "rho={rho} h={h} bound={bound}");
                    }
                }
            }
        }
    }

    #[test]
    fn admissible_velocity_controls_gradient_deviation() {
        for &rho in &[0.5, 0.6, 0.7, 0.75, 1.0] {
            for &eta in &[0.5, 1.0, 2.0] {
                let vmin = min_admissible_speed(rho, eta, 2).unwrap();
                for &factor in &[1.0 + 1e-9, 1.5, 4.0] {
                    let vmag = vmin * factor;
                    let v = [vmag / 2f64.sqrt(), vmag / 2f64.sqrt()];
                    let p = SymbolParams::new(rho, eta, v.to_vec()).unwrap();
                    assert!(velocity_admissible(&p, 2).unwrap());
                    let gv = grad_omega(&v, rho).unwrap();
                    let limit = vmag.powf(2.0 * rho - 1.0) / 8.0;
                    for xi in ball_samples(eta, 16) {
                        let g = grad_omega(&[v[0] + xi[0], v[1] + xi[1]], rho).unwrap();
                        let dev = ((g[0] - gv[0]).powi(2) + (g[1] - gv[1]).powi(2)).sqrt();
                        assert!(dev <= limit * (1.0 + 1e-12), "rho={rho} dev={dev} limit={limit}");
                    }
                }
            }
        }
    }

    #[test]
    fn row_sum_bound_fails_near_the_schrodinger_limit() {
        // unit xi at angle pi/8 from the first axis, rho = 0.75: row sum 0.75 + sqrt(2)/4
        let a = std::f64::consts::PI / 8.0;
        let h = hessian_rowsum(&[a.cos(), a.sin()], 0.75).unwrap();
        assert_relative_eq!(h, 0.75 + 2f64.sqrt() / 4.0, epsilon = 1e-12);
        assert!(h > 2.0 * 2.0 * (1.0 - 0.75));
        let h = hessian_rowsum(&[1.0, 0.0], 0.9).unwrap();
        assert!(h > 2.0 * 2.0 * (1.0 - 0.9));
    }

    #[test]
    fn admissibility_does_not_bound_the_deviation_for_rho_near_one() {
        let (rho, eta) = (0.9, 1.0);
        let vmag = min_admissible_speed(rho, eta, 2).unwrap() * (1.0 + 1e-9);
        let p = SymbolParams::new(rho, eta, vec![vmag, 0.0]).unwrap();
        assert!(velocity_admissible(&p, 2).unwrap());
        let gv = grad_omega(&[vmag, 0.0], rho).unwrap();
        let g = grad_omega(&[vmag - eta, 0.0], rho).unwrap();
        assert!((g[0] - gv[0]).abs() > vmag.powf(2.0 * rho - 1.0) / 8.0);
    }
}
