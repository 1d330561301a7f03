//! Boundary-preserving Euler–Maruyama simulation of
//! `dX = (1 - |X|^2)^r gamma(|X|) dB - g(|X|) X dt` on the closed unit ball.
//!
//! Proposals that leave the ball are rescaled radially back onto the sphere.
//! The radial value `Y = 1 - |X|^2` is always recomputed from the state and
//! clamped at zero before fractional powers are taken.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::coeffs::BallModel;
use crate::error::{ensure_finite, Error, Result};
use crate::seeding::{self, derive_seed, label_tag, Stream};

/// Time-stepping scheme.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "kebab-case")]
pub enum SchemeSpec {
    #[default]
    EulerProject,
    /// Steps starting with `Y < trigger` are split into `factor` substeps whose
    /// increments sum to the coarse increment.
    EulerSubstep { trigger: f64, factor: u32 },
}

impl SchemeSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::EulerProject => Ok(()),
            Self::EulerSubstep { trigger, factor } => {
                if !(trigger > 0.0 && trigger < 1.0) {
                    return Err(Error::InvalidModel(format!(
                        "substep trigger {trigger} must lie in (0, 1)"
                    )));
                }
                if factor < 2 {
                    return Err(Error::InvalidModel(format!(
                        "substep factor {factor} must be at least 2"
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn tag(&self) -> String {
        match self {
            Self::EulerProject => "euler-project".to_string(),
            Self::EulerSubstep { trigger, factor } => format!("euler-substep(trigger={trigger},factor={factor})"),
        }
    }
}

/// `1 - |x|^2` clamped at zero.
#[inline]
pub fn radial_value(x: &[f64]) -> f64 {
    (1.0 - norm_sq(x)).max(0.0)
}

#[inline]
pub(crate) fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Rescales `x` radially so that `|x| <= 1`; returns whether it moved.
#[inline]
pub(crate) fn project_to_ball(x: &mut [f64]) -> bool {
    let nsq = norm_sq(x);
    if nsq <= 1.0 {
        return false;
    }
    let inv = 1.0 / nsq.sqrt();
    x.iter_mut().for_each(|v| *v *= inv);
    while norm_sq(x) > 1.0 {
        x.iter_mut().for_each(|v| *v *= 1.0 - f64::EPSILON);
    }
    true
}

/// Euler proposal plus projection, written into `out`. No argument checks.
#[inline]
pub(crate) fn step_into(model: &BallModel, x: &[f64], dt: f64, db: &[f64], out: &mut [f64]) {
    let nsq = norm_sq(x);
    let u = nsq.sqrt().min(1.0);
    let y = (1.0 - nsq).max(0.0);
    let diffusion = if y == 0.0 {
        0.0
    } else {
        y.powf(model.r) * model.gamma.eval(u)
    };
    let drift = model.g.eval(u) * dt;
    for ((o, &xi), &bi) in out.iter_mut().zip(x).zip(db) {
        *o = xi + diffusion * bi - drift * xi;
    }
    project_to_ball(out);
}

/// One scheme step from `x` with time step `dt` and Brownian increment `db`.
pub fn step(model: &BallModel, x: &[f64], dt: f64, db: &[f64]) -> Result<Vec<f64>> {
    ensure_finite("state", x)?;
    ensure_finite("increment", db)?;
    if !dt.is_finite() || dt <= 0.0 {
        return Err(Error::Numeric(format!("time step {dt} must be positive and finite")));
    }
    if x.len() != model.n || db.len() != model.n {
        return Err(Error::Domain(format!("expected {}-vectors", model.n)));
    }
    if norm_sq(x) > 1.0 + 1e-12 {
        return Err(Error::Domain("state lies outside the closed unit ball".into()));
    }
    let mut out = vec![0.0; model.n];
    step_into(model, x, dt, db, &mut out);
    ensure_finite("next state", &out)?;
    Ok(out)
}

/// Number of coarse steps covering `[0, horizon]`.
pub fn step_count(horizon: f64, dt: f64) -> usize {
    ((horizon / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize
}

/// Drives the scheme and hands every coarse step to `visit(k, x_k, y_k, db_k)`,
/// where `db_k` is the increment that moves `x_k` to `x_{k+1}`. The final state
/// is visited with an empty increment.
pub fn drive<V>(
    model: &BallModel,
    x0: &[f64],
    horizon: f64,
    dt: f64,
    seed: u64,
    scheme: SchemeSpec,
    mut visit: V,
) -> Result<()>
where
    V: FnMut(usize, &[f64], f64, &[f64]),
{
    model.validate()?;
    scheme.validate()?;
    if x0.len() != model.n {
        return Err(Error::Domain(format!("initial state must be a {}-vector", model.n)));
    }
    ensure_finite("initial state", x0)?;
    if norm_sq(x0) > 1.0 + 1e-12 {
        return Err(Error::Domain("initial state lies outside the closed unit ball".into()));
    }
    if !(horizon > 0.0 && dt > 0.0) {
        return Err(Error::Numeric("horizon and time step must be positive".into()));
    }

    let n = model.n;
    let steps = step_count(horizon, dt);
    let mut rng = seeding::stream(seed);
    let mut bridge_rng: Option<Stream> = None;
    let mut x = x0.to_vec();
    project_to_ball(&mut x);
    let mut next = vec![0.0; n];
    let mut db = vec![0.0; n];
    let mut sub = vec![0.0; n];
    let mut sub_sum = vec![0.0; n];
    let mut sub_noise: Vec<f64> = Vec::new();

    for k in 0..steps {
        seeding::fill_gaussian(&mut rng, dt, &mut db);
        let y = radial_value(&x);
        visit(k, &x, y, &db);
        match scheme {
            SchemeSpec::EulerSubstep { trigger, factor } if y < trigger => {
                let m = factor as usize;
                let h = dt / m as f64;
                let brng =
                    bridge_rng.get_or_insert_with(|| seeding::stream(derive_seed(seed, &[label_tag("substep")])));
                sub_noise.resize(m * n, 0.0);
                seeding::fill_gaussian(brng, h, &mut sub_noise);
                sub_sum.iter_mut().for_each(|s| *s = 0.0);
                for chunk in sub_noise.chunks(n) {
                    sub_sum.iter_mut().zip(chunk).for_each(|(s, c)| *s += c);
                }
                // Conditioned on summing to db: shift each substep by (db - sum)/m.
                let mut cur = x.clone();
                for chunk in sub_noise.chunks(n) {
                    for i in 0..n {
                        sub[i] = chunk[i] + (db[i] - sub_sum[i]) / m as f64;
                    }
                    step_into(model, &cur, h, &sub, &mut next);
                    cur.copy_from_slice(&next);
                }
                next.copy_from_slice(&cur);
            }
            _ => step_into(model, &x, dt, &db, &mut next),
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite state at step {}", k + 1)));
        }
        std::mem::swap(&mut x, &mut next);
    }
    visit(steps, &x, radial_value(&x), &[]);
    Ok(())
}

/// A recorded path on the coarse grid `t_k = k dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub n: usize,
    pub dt: f64,
    pub seed: u64,
    pub scheme: SchemeSpec,
    /// Row-major `(steps + 1) x n` states.
    pub states: Vec<f64>,
    /// `Y_k = 1 - |X_k|^2`, clamped at zero.
    pub radial: Vec<f64>,
    /// Row-major `steps x n` Brownian increments.
    pub increments: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.radial.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radial.is_empty()
    }

    pub fn steps(&self) -> usize {
        self.radial.len().saturating_sub(1)
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.n..(k + 1) * self.n]
    }

    pub fn increment(&self, k: usize) -> &[f64] {
        &self.increments[k * self.n..(k + 1) * self.n]
    }

    pub fn final_state(&self) -> &[f64] {
        self.state(self.steps())
    }

    /// CSV with columns `t, x_1..x_n, Y`; metadata goes in leading `#` comments.
    pub fn write_csv<W: Write>(&self, mut w: W, model: &BallModel) -> io::Result<()> {
        writeln!(w, "# model: {model}")?;
        writeln!(w, "# seed: {}", self.seed)?;
        writeln!(w, "# scheme: {}", self.scheme.tag())?;
        write!(w, "t")?;
        for i in 1..=self.n {
            write!(w, ",x_{i}")?;
        }
        writeln!(w, ",Y")?;
        for k in 0..self.len() {
            write!(w, "{}", self.time(k))?;
            for v in self.state(k) {
                write!(w, ",{v}")?;
            }
            writeln!(w, ",{}", self.radial[k])?;
        }
        Ok(())
    }
}

/// Simulates `ceil(T/dt)` coarse steps from `x0`.
pub fn simulate(
    model: &BallModel,
    x0: &[f64],
    horizon: f64,
    dt: f64,
    seed: u64,
    scheme: SchemeSpec,
) -> Result<Trajectory> {
    let steps = step_count(horizon, dt);
    let n = model.n;
    let mut states = Vec::with_capacity((steps + 1) * n);
    let mut radial = Vec::with_capacity(steps + 1);
    let mut increments = Vec::with_capacity(steps * n);
    drive(model, x0, horizon, dt, seed, scheme, |_, x, y, db| {
        states.extend_from_slice(x);
        radial.push(y);
        increments.extend_from_slice(db);
    })?;
    Ok(Trajectory {
        n,
        dt,
        seed,
        scheme,
        states,
        radial,
        increments,
    })
}

/// Terminal radial value `Y_T` only, without storing the path.
pub fn terminal_radial(
    model: &BallModel,
    x0: &[f64],
    horizon: f64,
    dt: f64,
    seed: u64,
    scheme: SchemeSpec,
) -> Result<f64> {
    let mut last = f64::NAN;
    drive(model, x0, horizon, dt, seed, scheme, |_, _, y, db| {
        if db.is_empty() {
            last = y;
        }
    })?;
    Ok(last)
}

/// Fraction of coarse steps `k < N` that start in the shell `Y_k <= delta`.
pub fn occupation_near_boundary(traj: &Trajectory, delta: f64) -> f64 {
    occupation_fraction(&traj.radial[..traj.steps().max(1).min(traj.radial.len())], delta)
}

pub(crate) fn occupation_fraction(radial: &[f64], delta: f64) -> f64 {
    if radial.is_empty() {
        return 0.0;
    }
    radial.iter().filter(|&&y| y <= delta).count() as f64 / radial.len() as f64
}

/// Boundary occupation fractions for several shell widths, measured on one path
/// without storing it.
pub fn occupation_profile(
    model: &BallModel,
    x0: &[f64],
    horizon: f64,
    dt: f64,
    seed: u64,
    scheme: SchemeSpec,
    deltas: &[f64],
) -> Result<Vec<f64>> {
    let mut counts = vec![0usize; deltas.len()];
    let mut total = 0usize;
    drive(model, x0, horizon, dt, seed, scheme, |_, _, y, db| {
        if db.is_empty() {
            return;
        }
        total += 1;
        for (c, &d) in counts.iter_mut().zip(deltas) {
            if y <= d {
                *c += 1;
            }
        }
    })?;
    Ok(counts.into_iter().map(|c| c as f64 / total as f64).collect())
}
