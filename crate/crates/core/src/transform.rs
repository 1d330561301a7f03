//! Boundary chart `(v, y) = (1 - |x|^2, x'/|x|)` near the north pole.
//!
//! In these coordinates the ball SDE becomes
//!
//! ```text
//! dV = -2 V^r gamma(V) sqrt(1 - V) dbeta + [2 g(V)(1 - V) - n V^{2r} gamma(V)^2] dt
//! dY = V^r gamma(V) (1 - V)^{-1/2} A(Y)^{1/2} dM - (n - 1)/2 (1 - V)^{-1} V^{2r} gamma(V)^2 Y dt
//! ```
//!
//! with `A(y) = I - y y^T` and `(beta, M)` an `n`-dimensional Brownian motion.
//! As in [`crate::radial`], coefficients are read as functions of `V`.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::ball_sde::{norm_sq, step_count};
use crate::coeffs::BallModel;
use crate::error::{ensure_finite, Error, Result};
use crate::radial::RadialModel;
use crate::seeding;

/// `V` is kept below `1 - DELTA_CAP`.
pub const DELTA_CAP: f64 = 1e-6;
/// Radius of the region where `A(y) >= 3/4 I`.
pub const OPERATING_RADIUS: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransformedState {
    pub v: f64,
    pub y: Vec<f64>,
}

pub fn forward_map(x: &[f64]) -> Result<TransformedState> {
    ensure_finite("point", x)?;
    if x.len() < 2 {
        return Err(Error::Domain("chart needs n >= 2".into()));
    }
    let nsq = norm_sq(x);
    if nsq == 0.0 {
        return Err(Error::Domain("chart is undefined at the origin".into()));
    }
    let norm = nsq.sqrt();
    Ok(TransformedState {
        v: 1.0 - nsq,
        y: x[..x.len() - 1].iter().map(|c| c / norm).collect(),
    })
}

/// Point with `|x|^2 = 1 - v`, `x_i = y_i |x|` and `x_n >= 0`.
pub fn inverse_map(state: &TransformedState) -> Result<Vec<f64>> {
    if !(state.v < 1.0 && state.v >= 0.0) {
        return Err(Error::Domain(format!("v = {} is outside [0, 1)", state.v)));
    }
    let ysq = norm_sq(&state.y);
    if ysq > 1.0 {
        return Err(Error::Domain("|y| exceeds 1".into()));
    }
    let norm = (1.0 - state.v).sqrt();
    let mut x: Vec<f64> = state.y.iter().map(|c| c * norm).collect();
    x.push(norm * (1.0 - ysq).sqrt());
    Ok(x)
}

/// `A(y)` with entries `1 - y_i^2` on the diagonal and `-y_i y_j` off it.
pub fn a_matrix(y: &[f64]) -> DMatrix<f64> {
    let m = y.len();
    let yv = DVector::from_column_slice(y);
    DMatrix::identity(m, m) - &yv * yv.transpose()
}

/// `<A(y) xi, xi> = |xi|^2 - <xi, y>^2`.
pub fn a_quadratic_form(y: &[f64], xi: &[f64]) -> f64 {
    let dot: f64 = y.iter().zip(xi).map(|(a, b)| a * b).sum();
    norm_sq(xi) - dot * dot
}

/// Coefficient `c` in `A(y)^{1/2} = I - c y y^T`, `c = 1/(1 + sqrt(1 - |y|^2))`.
fn sqrt_coefficient(ysq: f64) -> f64 {
    1.0 / (1.0 + (1.0 - ysq).sqrt())
}

/// Symmetric positive-definite square root of `A(y)`.
pub fn a_sqrt(y: &[f64]) -> Result<DMatrix<f64>> {
    let ysq = norm_sq(y);
    if !(ysq < 1.0) {
        return Err(Error::Singular(format!("A(y) is singular for |y| = {}", ysq.sqrt())));
    }
    let m = y.len();
    let yv = DVector::from_column_slice(y);
    Ok(DMatrix::identity(m, m) - (&yv * yv.transpose()) * sqrt_coefficient(ysq))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransformedPath {
    pub dt: f64,
    pub seed: u64,
    pub states: Vec<TransformedState>,
    /// First step index with `|y| > 1/2`; `Y` is frozen from there on while `V` continues.
    pub truncated_at: Option<usize>,
}

impl TransformedPath {
    pub fn terminal_v(&self) -> f64 {
        self.states.last().map(|s| s.v).unwrap_or(f64::NAN)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let m = self.states.first().map(|s| s.y.len()).unwrap_or(0);
        write!(w, "t,v")?;
        for i in 1..=m {
            write!(w, ",y_{i}")?;
        }
        writeln!(w, ",truncated")?;
        for (k, s) in self.states.iter().enumerate() {
            write!(w, "{},{:e}", k as f64 * self.dt, s.v)?;
            for c in &s.y {
                write!(w, ",{c:e}")?;
            }
            let flag = self.truncated_at.is_some_and(|j| k >= j);
            writeln!(w, ",{}", u8::from(flag))?;
        }
        Ok(())
    }
}

struct Chart {
    radial: RadialModel,
    n: usize,
}

impl Chart {
    /// Advances `(v, y)` in place with `dbeta = db[0]`, `dM = db[1..]`.
    fn step(&self, v: &mut f64, y: &mut [f64], frozen: bool, dt: f64, db: &[f64]) {
        let v0 = *v;
        if !frozen && v0 > 0.0 {
            let gam = self.radial.gamma.eval(v0);
            let vr = v0.powf(self.radial.r);
            let noise = vr * gam / (1.0 - v0).sqrt();
            let pull = 0.5 * (self.n - 1) as f64 * vr * vr * gam * gam / (1.0 - v0) * dt;
            let ysq = norm_sq(y);
            let c = sqrt_coefficient(ysq.min(1.0));
            let proj: f64 = y.iter().zip(&db[1..]).map(|(a, b)| a * b).sum();
            let y_old: Vec<f64> = y.to_vec();
            for (i, yi) in y.iter_mut().enumerate() {
                // A^{1/2} dM = dM - c <y, dM> y
                let a_dm = db[1 + i] - c * proj * y_old[i];
                *yi = y_old[i] + noise * a_dm - pull * y_old[i];
            }
        }
        let next = v0 + self.radial.drift(v0) * dt + self.radial.diffusion(v0) * -db[0];
        *v = next.clamp(0.0, 1.0 - DELTA_CAP);
    }
}

/// Euler scheme for `(V, Y)` from `(0, 0)` with an arbitrary increment source
/// filling `n` standard increments of variance `dt` per step.
pub fn simulate_transformed_with(
    model: &BallModel,
    horizon: f64,
    dt: f64,
    seed: u64,
    mut increments: impl FnMut(&mut [f64]),
) -> Result<TransformedPath> {
    model.validate()?;
    if !(horizon > 0.0 && dt > 0.0) {
        return Err(Error::Numeric("horizon and time step must be positive".into()));
    }
    let chart = Chart {
        radial: RadialModel::from_ball(model),
        n: model.n,
    };
    let steps = step_count(horizon, dt);
    let mut v = 0.0;
    let mut y = vec![0.0; model.n - 1];
    let mut db = vec![0.0; model.n];
    let mut states = Vec::with_capacity(steps + 1);
    let mut truncated_at = None;
    states.push(TransformedState { v, y: y.clone() });
    for k in 0..steps {
        increments(&mut db);
        chart.step(&mut v, &mut y, truncated_at.is_some(), dt, &db);
        if !(v.is_finite() && y.iter().all(|c| c.is_finite())) {
            return Err(Error::Numeric(format!(
                "non-finite transformed state at step {}",
                k + 1
            )));
        }
        if truncated_at.is_none() && norm_sq(&y) > OPERATING_RADIUS * OPERATING_RADIUS {
            truncated_at = Some(k + 1);
        }
        states.push(TransformedState { v, y: y.clone() });
    }
    Ok(TransformedPath {
        dt,
        seed,
        states,
        truncated_at,
    })
}

/// Euler scheme for `(V, Y)` from `(0, 0)`; deterministic given `seed`.
pub fn simulate_transformed(model: &BallModel, horizon: f64, dt: f64, seed: u64) -> Result<TransformedPath> {
    let mut rng = seeding::stream(seed);
    simulate_transformed_with(model, horizon, dt, seed, |db| seeding::fill_gaussian(&mut rng, dt, db))
}

/// `V_T` of the transformed scheme without storing the path.
pub fn terminal_transformed_v(model: &BallModel, horizon: f64, dt: f64, seed: u64) -> Result<f64> {
    model.validate()?;
    if !(horizon > 0.0 && dt > 0.0) {
        return Err(Error::Numeric("horizon and time step must be positive".into()));
    }
    let chart = Chart {
        radial: RadialModel::from_ball(model),
        n: model.n,
    };
    let mut rng = seeding::stream(seed);
    let (mut v, mut y) = (0.0, vec![0.0; model.n - 1]);
    let mut frozen = false;
    let mut db = vec![0.0; model.n];
    for _ in 0..step_count(horizon, dt) {
        seeding::fill_gaussian(&mut rng, dt, &mut db);
        chart.step(&mut v, &mut y, frozen, dt, &db);
        frozen = frozen || norm_sq(&y) > OPERATING_RADIUS * OPERATING_RADIUS;
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;
    use rand::Rng;
    use std::f64::consts::SQRT_2;

    #[test]
    fn forward_map_examples() {
        let s = forward_map(&[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(
            s,
            TransformedState {
                v: 0.0,
                y: vec![0.0, 0.0]
            }
        );
        let s = forward_map(&[0.3, 0.4]).unwrap();
        assert!((s.v - 0.75).abs() < 1e-15 && (s.y[0] - 0.6).abs() < 1e-15);
        let s = forward_map(&[0.6, 0.8]).unwrap();
        assert!(s.v.abs() < 1e-15 && (s.y[0] - 0.6).abs() < 1e-15);
        assert!(matches!(forward_map(&[0.0, 0.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn round_trip_on_chart() {
        let mut rng = seeding::stream(17);
        for _ in 0..10_000 {
            let mut x: Vec<f64> = (0..3).map(|_| seeding::gaussian(&mut rng)).collect();
            x[2] = x[2].abs() + 1.0;
            let s = (rng.random::<f64>() * 0.99 + 0.01) / norm_sq(&x).sqrt();
            x.iter_mut().for_each(|c| *c *= s);
            let back = inverse_map(&forward_map(&x).unwrap()).unwrap();
            for (a, b) in x.iter().zip(&back) {
                assert!((a - b).abs() < 1e-14, "{x:?} {back:?}");
            }
        }
    }

    #[test]
    fn a_sqrt_squares_back_and_matches_spectrum() {
        assert_eq!(a_matrix(&[0.0, 0.0]), DMatrix::identity(2, 2));
        assert_eq!(a_sqrt(&[0.0]).unwrap(), DMatrix::identity(1, 1));
        let mut rng = seeding::stream(5);
        for m in 1..5 {
            for _ in 0..200 {
                let mut y: Vec<f64> = (0..m).map(|_| seeding::gaussian(&mut rng)).collect();
                let s = 0.9 * rng.random::<f64>() / norm_sq(&y).sqrt();
                y.iter_mut().for_each(|c| *c *= s);
                let a = a_matrix(&y);
                let r = a_sqrt(&y).unwrap();
                assert!((&r * &r - &a).norm() <= 1e-12 * a.norm());
                let eig = SymmetricEigen::new(a.clone());
                let mut ev: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
                ev.sort_by(f64::total_cmp);
                assert!((ev[0] - (1.0 - norm_sq(&y))).abs() < 1e-12);
                assert!(ev[1..].iter().all(|e| (e - 1.0).abs() < 1e-12));
                // Oracle square root from the eigendecomposition.
                let oracle = &eig.eigenvectors
                    * DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt))
                    * eig.eigenvectors.transpose();
                assert!((&oracle - &r).norm() < 1e-12);
            }
        }
        assert!(matches!(a_sqrt(&[0.6, 0.8]), Err(Error::Singular(_))));
    }

    #[test]
    fn quadratic_form_identity_and_ellipticity() {
        let mut rng = seeding::stream(8);
        for _ in 0..20_000 {
            let y: Vec<f64> = (0..3).map(|_| 0.5 * (2.0 * rng.random::<f64>() - 1.0)).collect();
            let xi: Vec<f64> = (0..3).map(|_| seeding::gaussian(&mut rng)).collect();
            let a = a_matrix(&y);
            let xv = DVector::from_column_slice(&xi);
            let direct = (xv.transpose() * &a * &xv)[(0, 0)];
            let identity = a_quadratic_form(&y, &xi);
            assert!((direct - identity).abs() <= 1e-14 * norm_sq(&xi).max(1e-300) * 4.0);
            if norm_sq(&y) <= 0.25 {
                assert!(identity >= 0.75 * norm_sq(&xi) * (1.0 - 1e-15));
            }
        }
    }

    #[test]
    fn zero_noise_follows_radial_ode() {
        let m = BallModel::constant(3, 1.1, 0.8).unwrap();
        let path = simulate_transformed_with(&m, 0.1, 0.01, 0, |db| db.fill(0.0)).unwrap();
        let radial = RadialModel::from_ball(&m);
        let mut v = 0.0;
        for s in &path.states[1..] {
            v += radial.drift(v) * 0.01;
            assert_eq!(s.v, v);
            assert!(s.y.iter().all(|&c| c == 0.0));
        }
        assert_eq!(path.truncated_at, None);
    }

    #[test]
    fn first_step_moves_only_v() {
        let m = BallModel::constant(2, SQRT_2, 1.3).unwrap();
        for seed in 0..5 {
            let p = simulate_transformed(&m, 1e-4, 1e-4, seed).unwrap();
            assert!((p.states[1].v - 2.0 * 1.3 * 1e-4).abs() < 1e-18);
            assert_eq!(p.states[1].y, vec![0.0]);
        }
    }

    #[test]
    fn reproducible_and_terminal_agrees() {
        let m = BallModel::constant(3, SQRT_2, 1.0).unwrap();
        let a = simulate_transformed(&m, 0.5, 1e-3, 11).unwrap();
        assert_eq!(a, simulate_transformed(&m, 0.5, 1e-3, 11).unwrap());
        assert_eq!(a.terminal_v(), terminal_transformed_v(&m, 0.5, 1e-3, 11).unwrap());
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,v,y_1,y_2,truncated\n"));
        assert_eq!(text.lines().count(), a.states.len() + 1);
    }
}
