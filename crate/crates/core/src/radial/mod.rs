//! The autonomous radial diffusion `V = 1 - |X|^2`:
//!
//! ```text
//! dV = -2 V^r gamma(V) sqrt(1 - V) dbeta + [2 g(V)(1 - V) - n V^{2r} gamma(V)^2] dt
//! ```
//!
//! Coefficients here are functions of `v = 1 - |x|^2`, not of `u = |x|`. For
//! constant coefficients the two readings agree.

mod drift_check;
mod feller;

pub use drift_check::{verify_drift_of_yp, DriftReport};
pub use feller::{classify_boundary, BoundaryClassification, FellerIntegral, IntegralStatus, Verdict};

use serde::{Deserialize, Serialize};

use crate::coeffs::{self, BallModel, CoeffFn};
use crate::error::{Error, Result};
use crate::quadrature::{self, Tolerance};
use crate::seeding;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialModel {
    pub n: usize,
    pub r: f64,
    pub gamma: CoeffFn,
    pub g: CoeffFn,
}

impl RadialModel {
    pub fn new(n: usize, r: f64, gamma: CoeffFn, g: CoeffFn) -> Result<Self> {
        // Same admissibility rules as the ball model.
        let BallModel { n, r, gamma, g } = BallModel::new(n, r, gamma, g)?;
        Ok(Self { n, r, gamma, g })
    }

    pub fn constant(n: usize, r: f64, gamma: f64, g: f64) -> Result<Self> {
        Self::new(n, r, CoeffFn::constant(gamma)?, CoeffFn::constant(g)?)
    }

    /// Reads the ball model's coefficient functions as functions of `v`.
    pub fn from_ball(model: &BallModel) -> Self {
        Self {
            n: model.n,
            r: model.r,
            gamma: model.gamma.clone(),
            g: model.g.clone(),
        }
    }

    /// `b(v) = 2 g(v)(1 - v) - n v^{2r} gamma(v)^2`.
    #[inline]
    pub fn drift(&self, v: f64) -> f64 {
        let gam = self.gamma.eval(v);
        2.0 * self.g.eval(v) * (1.0 - v) - self.n as f64 * v.powf(2.0 * self.r) * gam * gam
    }

    /// `sigma(v) = 2 v^r gamma(v) sqrt(1 - v)`, the noise coefficient of `V`.
    #[inline]
    pub fn diffusion(&self, v: f64) -> f64 {
        if v <= 0.0 {
            return 0.0;
        }
        2.0 * v.powf(self.r) * self.gamma.eval(v) * (1.0 - v).max(0.0).sqrt()
    }

    /// `sigma(v)^2 = 4 v^{2r} gamma(v)^2 (1 - v)`.
    #[inline]
    pub fn variance(&self, v: f64) -> f64 {
        let gam = self.gamma.eval(v);
        4.0 * v.powf(2.0 * self.r) * gam * gam * (1.0 - v)
    }

    /// `2 b / sigma^2`, the logarithmic derivative of the inverse scale density.
    #[inline]
    pub fn scale_integrand(&self, w: f64) -> f64 {
        let gam2 = self.gamma.eval(w).powi(2);
        let w2r = w.powf(2.0 * self.r);
        (2.0 * self.g.eval(w) * (1.0 - w) - self.n as f64 * w2r * gam2) / (2.0 * w2r * gam2 * (1.0 - w))
    }

    /// Largest `eps <= 1/2` with `p > 1 - g(v)/gamma(v)^2` for all `v` in `[0, eps)`.
    pub fn epsilon_for_p(&self, p: f64) -> Result<f64> {
        coeffs::shell_width(&self.gamma, &self.g, p, 0.0, |eps| (0.0, eps))
    }
}

/// Scale density `s'(v) = exp(-int_0^v 2b/sigma^2)`, normalized by `s'(0) = 1`.
///
/// Defined only for `r < 1/2`, where the integrand `~ w^{-2r}` is integrable at 0.
/// The substitution `w = tau^{1/(1-2r)}` removes that endpoint singularity.
pub fn scale_prime(model: &RadialModel, v: f64) -> Result<f64> {
    if model.r >= 0.5 {
        return Err(Error::ClassificationOnly(model.r));
    }
    if !(v > 0.0 && v < 1.0) {
        return Err(Error::Domain(format!("scale density needs v in (0, 1), got {v}")));
    }
    let k = 1.0 / (1.0 - 2.0 * model.r);
    let upper = v.powf(1.0 - 2.0 * model.r);
    let est = quadrature::integrate(
        |tau: f64| {
            if tau <= 0.0 {
                // tau -> 0: w^{-2r} * dw/dtau -> k * (g/gamma^2)(0)
                let gam2 = model.gamma.eval(0.0).powi(2);
                return k * model.g.eval(0.0) / gam2;
            }
            let w = tau.powf(k);
            model.scale_integrand(w) * k * w / tau
        },
        0.0,
        upper,
        Tolerance {
            abs: 1e-15,
            rel: 1e-13,
            max_intervals: 4000,
        },
    );
    if !est.converged || !est.value.is_finite() {
        return Err(Error::Numeric(format!("scale integral did not converge at v = {v}")));
    }
    Ok((-est.value).exp())
}

/// One Euler step of `V`, clamped to `[0, 1)`.
#[inline]
pub fn radial_step(model: &RadialModel, v: f64, dt: f64, dw: f64) -> f64 {
    let next = v + model.drift(v) * dt + model.diffusion(v) * dw;
    next.clamp(0.0, 1.0 - f64::EPSILON)
}

/// Euler path of `V` from `v0` with `ceil(T/dt)` steps; `V_0` is included.
pub fn simulate_radial(model: &RadialModel, v0: f64, horizon: f64, dt: f64, seed: u64) -> Result<Vec<f64>> {
    let mut rng = seeding::stream(seed);
    simulate_radial_with(model, v0, horizon, dt, || dt.sqrt() * seeding::gaussian(&mut rng))
}

/// Same scheme with an arbitrary increment source.
pub fn simulate_radial_with(
    model: &RadialModel,
    v0: f64,
    horizon: f64,
    dt: f64,
    mut increment: impl FnMut() -> f64,
) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&v0) {
        return Err(Error::Domain(format!("initial radial value {v0} outside [0, 1)")));
    }
    if !(horizon > 0.0 && dt > 0.0) {
        return Err(Error::Numeric("horizon and time step must be positive".into()));
    }
    let steps = crate::ball_sde::step_count(horizon, dt);
    let mut path = Vec::with_capacity(steps + 1);
    let mut v = v0;
    path.push(v);
    for _ in 0..steps {
        v = radial_step(model, v, dt, increment());
        path.push(v);
    }
    Ok(path)
}

/// `V_T` without storing the path.
pub fn terminal_radial(model: &RadialModel, v0: f64, horizon: f64, dt: f64, seed: u64) -> f64 {
    let mut rng = seeding::stream(seed);
    let sd = dt.sqrt();
    let mut v = v0;
    for _ in 0..crate::ball_sde::step_count(horizon, dt) {
        v = radial_step(model, v, dt, sd * seeding::gaussian(&mut rng));
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::SQRT_2;

    fn closed_form(v: f64) -> f64 {
        // r = 1/4, n = 2, gamma = sqrt 2, g = 1: integrand 1/(2 sqrt w) - 1/(1 - w).
        (-v.sqrt()).exp() / (1.0 - v)
    }

    #[test]
    fn scale_prime_matches_closed_form() {
        let m = RadialModel::constant(2, 0.25, SQRT_2, 1.0).unwrap();
        let v = scale_prime(&m, 0.25).unwrap();
        assert!((v - 0.808_707_546_283_5).abs() < 1e-9, "{v}");
        let half = scale_prime(&m, 0.5).unwrap();
        assert!(((half - closed_form(0.5)) / closed_form(0.5)).abs() < 1e-8);
        for i in 0..=89 {
            let v = 0.01 + 0.01 * i as f64;
            let got = scale_prime(&m, v).unwrap();
            assert!(got > 0.0);
            assert!(((got - closed_form(v)) / closed_form(v)).abs() < 1e-8, "v = {v}");
        }
    }

    #[test]
    fn scale_prime_tends_to_one_at_boundary() {
        let m = RadialModel::new(
            3,
            0.3,
            CoeffFn::affine(1.0, 0.5).unwrap(),
            CoeffFn::table(vec![(0.0, 0.4), (0.5, 1.2), (1.0, 0.9)]).unwrap(),
        )
        .unwrap();
        let near = scale_prime(&m, 1e-12).unwrap();
        assert!((near - 1.0).abs() < 1e-3, "{near}");
    }

    #[test]
    fn scale_prime_errors() {
        let m = RadialModel::constant(2, 0.5, SQRT_2, 1.0).unwrap();
        assert!(matches!(scale_prime(&m, 0.3), Err(Error::ClassificationOnly(_))));
        let m = RadialModel::constant(2, 0.25, SQRT_2, 1.0).unwrap();
        assert!(matches!(scale_prime(&m, 1.0), Err(Error::Domain(_))));
        assert!(matches!(scale_prime(&m, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn first_step_from_boundary_has_mean_2c_dt() {
        let c = 1.3;
        let m = RadialModel::constant(2, 0.5, SQRT_2, c).unwrap();
        let dt = 1e-4;
        // Diffusion vanishes at v = 0, so every replica moves by exactly 2c dt.
        for seed in 0..5 {
            let path = simulate_radial(&m, 0.0, dt, dt, seed).unwrap();
            assert!((path[1] - 2.0 * c * dt).abs() < 1e-18);
        }
    }

    #[test]
    fn zero_noise_follows_euler_ode() {
        let m = RadialModel::constant(3, 0.5, 1.1, 0.8).unwrap();
        let path = simulate_radial_with(&m, 0.2, 0.1, 0.01, || 0.0).unwrap();
        let mut v = 0.2;
        for &got in &path[1..] {
            v += m.drift(v) * 0.01;
            assert_eq!(got, v);
        }
    }

    #[test]
    fn radial_paths_are_reproducible_and_clamped() {
        let m = RadialModel::constant(2, 0.5, SQRT_2, 0.4).unwrap();
        let a = simulate_radial(&m, 0.0, 1.0, 1e-3, 21).unwrap();
        assert_eq!(a, simulate_radial(&m, 0.0, 1.0, 1e-3, 21).unwrap());
        assert!(a.iter().all(|v| (0.0..1.0).contains(v)));
        assert_eq!(*a.last().unwrap(), terminal_radial(&m, 0.0, 1.0, 1e-3, 21));
    }
}
