//! Monte Carlo check of the drift of `Y^p` for `r = 1/2`.
//!
//! One Euler step of the full `n`-dimensional SDE from a point with
//! `1 - |x|^2 = v` gives `E[Y_dt^p - v^p] / dt`, which is compared with
//! `2p(1 - v) v^{p-1} [g + (p - 1) gamma^2] - n p gamma^2 v^p`.

use rayon::prelude::*;
use serde::Serialize;

use super::RadialModel;
use crate::error::{Error, Result};
use crate::seeding;

const BLOCK: usize = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftReport {
    pub p: f64,
    pub v: f64,
    pub dt: f64,
    pub replicas: usize,
    pub empirical: f64,
    pub formula: f64,
    pub std_error: f64,
    pub z: f64,
}

/// Itô drift of `Y^p` at `Y = v`.
pub fn drift_formula(model: &RadialModel, p: f64, v: f64) -> f64 {
    let gam2 = model.gamma.eval(v).powi(2);
    let g = model.g.eval(v);
    2.0 * p * (1.0 - v) * v.powf(p - 1.0) * (g + (p - 1.0) * gam2) - model.n as f64 * p * gam2 * v.powf(p)
}

/// Estimates the drift of `Y^p` at `Y = v` from `replicas` one-step paths.
///
/// Paths come in antithetic pairs `(dB, -dB)`, so `replicas` is rounded up to
/// an even number and the standard error is taken over pair means.
pub fn verify_drift_of_yp(
    model: &RadialModel,
    p: f64,
    v: f64,
    dt: f64,
    replicas: usize,
    seed: u64,
) -> Result<DriftReport> {
    if model.r != 0.5 {
        return Err(Error::InvalidModel(format!(
            "drift of Y^p is checked for r = 1/2 only, got r = {}",
            model.r
        )));
    }
    if !(p > 0.5 && p < 1.0) {
        return Err(Error::Infeasible(format!("p = {p} is outside (1/2, 1)")));
    }
    let eps = model.epsilon_for_p(p)?;
    if !(v > 0.0 && v < eps) {
        return Err(Error::Infeasible(format!("v = {v} is outside (0, {eps}) for p = {p}")));
    }
    if !(dt > 0.0) || replicas < 4 {
        return Err(Error::Numeric("need dt > 0 and at least 4 replicas".into()));
    }

    let n = model.n;
    let pairs = replicas.div_ceil(2);
    let gam = model.gamma.eval(v);
    let g = model.g.eval(v);
    let top = (1.0 - v).sqrt();
    let noise = v.sqrt() * gam;
    let vp = v.powf(p);
    let blocks = pairs.div_ceil(BLOCK);

    let sample = |db: &[f64], sign: f64| {
        // x0 = (0, ..., 0, sqrt(1 - v))
        let mut norm2 = 0.0;
        for (i, &d) in db.iter().enumerate() {
            let base = if i == n - 1 { top * (1.0 - g * dt) } else { 0.0 };
            let xi = base + sign * noise * d;
            norm2 += xi * xi;
        }
        ((1.0 - norm2).max(0.0).powf(p) - vp) / dt
    };

    let sums: Vec<(f64, f64, usize)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = seeding::stream(seeding::derive_seed(seed, &[b as u64]));
            let count = BLOCK.min(pairs - b * BLOCK);
            let mut db = vec![0.0; n];
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..count {
                seeding::fill_gaussian(&mut rng, dt, &mut db);
                let pair = 0.5 * (sample(&db, 1.0) + sample(&db, -1.0));
                s += pair;
                s2 += pair * pair;
            }
            (s, s2, count)
        })
        .collect();
    let (s, s2, count) = sums
        .iter()
        .fold((0.0, 0.0, 0usize), |acc, x| (acc.0 + x.0, acc.1 + x.1, acc.2 + x.2));
    let mean = s / count as f64;
    let var = (s2 / count as f64 - mean * mean).max(0.0) * count as f64 / (count as f64 - 1.0);
    let std_error = (var / count as f64).sqrt();
    let formula = drift_formula(model, p, v);
    Ok(DriftReport {
        p,
        v,
        dt,
        replicas: 2 * pairs,
        empirical: mean,
        formula,
        std_error,
        z: (mean - formula) / std_error,
    })
}
