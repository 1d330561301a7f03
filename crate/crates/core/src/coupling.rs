//! Two solutions of the ball SDE driven by the same Brownian increments.
//!
//! With `Y = 1 - |X|^2`, `Y~ = 1 - |X~|^2` and `p` in `(1/2, 1)` the run tracks
//!
//! ```text
//! W = (Y^p - Y~^p)^2 + |X - X~|^2
//! Z = (Y^p - Y~^p)(Y~^{p-1} - Y^{p-1})
//! ```
//!
//! and the five drift terms of `d(Y^p - Y~^p)`, `d(Y^p - Y~^p)^2` and
//! `d|X - X~|^2`. Near the boundary the three singular ones obey
//!
//! ```text
//! 2(Y^p - Y~^p) I1 + I3 + I5 <= K Z + C |X - X~|^2
//! ```
//!
//! with explicit `K` and `C` computed by [`ShellConstants`]. When `g/gamma^2`
//! exceeds `sqrt 2 - 1` on the boundary, `eps` can be chosen so that `K < 0`.

use std::io::{self, Write};

use serde::Serialize;

use crate::ball_sde::{self, norm_sq, radial_value};
use crate::coeffs::{epsilon_for_p, BallModel};
use crate::error::{ensure_finite, Error, Result};
use crate::inequalities;
use crate::seeding;
use crate::stats;

/// `F(p) = (1 - p) + (2p - 1)^2 / (4(1 - p))`.
pub fn exponent_objective(p: f64) -> f64 {
    (1.0 - p) + (2.0 * p - 1.0).powi(2) / (4.0 * (1.0 - p))
}

/// `F(a) - F(b)` in factored form, `(q_a - q_b)(2 - 1/(4 q_a q_b))` with `q = 1 - p`.
fn objective_difference(a: f64, b: f64) -> f64 {
    let (qa, qb) = (1.0 - a, 1.0 - b);
    (qa - qb) * (2.0 - 1.0 / (4.0 * qa * qb))
}

/// Minimizer and minimum of [`exponent_objective`] on `(1/2, 1)` by golden-section search.
///
/// Near the minimum `F` is flat to rounding, so points are compared through
/// their factored difference rather than two evaluations.
pub fn optimal_p() -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.5, 1.0 - 1e-9);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    while b - a > 1e-12 {
        if objective_difference(c, d) < 0.0 {
            b = d;
            d = c;
            c = b - inv_phi * (b - a);
        } else {
            a = c;
            c = d;
            d = a + inv_phi * (b - a);
        }
    }
    let p = 0.5 * (a + b);
    (p, exponent_objective(p))
}

/// Threshold value of `g/gamma^2` at the boundary, `sqrt 2 - 1`.
pub fn threshold_ratio() -> f64 {
    std::f64::consts::SQRT_2 - 1.0
}

fn require_half(model: &BallModel) -> Result<()> {
    if model.r != 0.5 {
        return Err(Error::InvalidModel(format!(
            "coupling diagnostics need r = 1/2, got r = {}",
            model.r
        )));
    }
    Ok(())
}

fn require_p(p: f64) -> Result<()> {
    if p > 0.5 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("p = {p} is outside (1/2, 1)")))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct SingularTerms {
    pub i1: f64,
    pub i2: f64,
    pub i3: f64,
    pub i4: f64,
    pub i5: f64,
    pub z: f64,
}

/// The drift terms for the pair `(x, xt)`; both radial values must be positive.
pub fn singular_terms(model: &BallModel, x: &[f64], xt: &[f64], p: f64) -> Result<SingularTerms> {
    require_half(model)?;
    require_p(p)?;
    if x.len() != model.n || xt.len() != model.n {
        return Err(Error::Domain(format!("expected {}-vectors", model.n)));
    }
    ensure_finite("state", x)?;
    ensure_finite("state", xt)?;
    let (y, yt) = (1.0 - norm_sq(x), 1.0 - norm_sq(xt));
    if !(y > 0.0 && yt > 0.0) {
        return Err(Error::Domain(format!(
            "radial values must be positive, got ({y}, {yt})"
        )));
    }
    Ok(terms_unchecked(model, x, xt, y, yt, p))
}

fn terms_unchecked(model: &BallModel, x: &[f64], xt: &[f64], y: f64, yt: f64, p: f64) -> SingularTerms {
    let n = model.n as f64;
    let (nx, nxt) = (norm_sq(x), norm_sq(xt));
    let (u, ut) = (nx.sqrt().min(1.0), nxt.sqrt().min(1.0));
    let (gam, gamt) = (model.gamma.eval(u), model.gamma.eval(ut));
    let (g, gt) = (model.g.eval(u), model.g.eval(ut));
    let big_g = g + (p - 1.0) * gam * gam;
    let big_gt = gt + (p - 1.0) * gamt * gamt;

    let i1 = 2.0 * p * (nx * y.powf(p - 1.0) * big_g - nxt * yt.powf(p - 1.0) * big_gt);
    let i2 = -n * p * (gam * gam * y.powf(p) - gamt * gamt * yt.powf(p));
    let (a, b) = (gam * y.powf(p - 0.5), gamt * yt.powf(p - 0.5));
    let mut i3 = 0.0;
    let mut i4 = 0.0;
    for (&xj, &xtj) in x.iter().zip(xt) {
        i3 += (a * xj - b * xtj).powi(2);
        i4 += (xj - xtj) * (g * xj - gt * xtj);
    }
    let i3 = 4.0 * p * p * i3;
    let i4 = -2.0 * i4;
    let i5 = n * (y.sqrt() * gam - yt.sqrt() * gamt).powi(2);
    SingularTerms {
        i1,
        i2,
        i3,
        i4,
        i5,
        z: z_value(y, yt, p),
    }
}

/// `Z = (Y^p - Y~^p)(Y~^{p-1} - Y^{p-1})`, computed without cancellation.
pub fn z_value(y: f64, yt: f64, p: f64) -> f64 {
    if y == yt {
        return 0.0;
    }
    inequalities::pow_diff(y, yt, p) * inequalities::pow_diff(yt, y, p - 1.0)
}

/// Grid points of the shell `u^2 >= 1 - eps` with the coefficient breakpoints.
fn shell_points(model: &BallModel, eps: f64) -> Vec<f64> {
    let lo = (1.0 - eps).sqrt();
    let mut pts: Vec<f64> = (0..=256).map(|i| lo + (1.0 - lo) * i as f64 / 256.0).collect();
    pts.extend(
        model
            .gamma
            .breakpoints()
            .into_iter()
            .chain(model.g.breakpoints())
            .filter(|&u| u > lo && u < 1.0),
    );
    pts
}

/// Shell bound on the coefficient of `Z`:
/// `4p(1 - eps)[inf gamma^2][-inf g/gamma^2 + F(p)] + C(eps + eps^{2-p})`, where the
/// infima run over `u^2 >= 1 - eps`. When the bracket is positive `sup gamma^2` and
/// `|X| <= 1` give the bound instead.
pub fn lemma37_k(model: &BallModel, p: f64, eps: f64, c: f64) -> Result<f64> {
    require_half(model)?;
    require_p(p)?;
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::Domain(format!("eps = {eps} is outside (0, 1/2)")));
    }
    if !(c >= 0.0) {
        return Err(Error::Domain(format!("constant C = {c} must be nonnegative")));
    }
    let pts = shell_points(model, eps);
    let ratio_inf = pts
        .iter()
        .map(|&u| model.g.eval(u) / model.gamma.eval(u).powi(2))
        .fold(f64::INFINITY, f64::min);
    let gam2: Vec<f64> = pts.iter().map(|&u| model.gamma.eval(u).powi(2)).collect();
    let bracket = -ratio_inf + exponent_objective(p);
    let lead = if bracket < 0.0 {
        4.0 * p * (1.0 - eps) * gam2.iter().cloned().fold(f64::INFINITY, f64::min) * bracket
    } else {
        4.0 * p * gam2.iter().cloned().fold(0.0, f64::max) * bracket
    };
    Ok(lead + c * (eps + eps.powf(2.0 - p)))
}

/// Explicit constants for the shell `Y, Y~ <= eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShellConstants {
    pub p: f64,
    pub eps: f64,
    /// `sup (1 - u)/(1 - u^{1-p})`.
    pub c31: f64,
    /// `sup (1 - w^{p-1/2})(1 - w)/((1 - w^p)(1 - w^{1-p}))`.
    pub c33: f64,
    /// `sup (1 - w)^2/((1 - w^{2p})(1 - w^{2-2p}))`.
    pub c36: f64,
    pub gamma_max: f64,
    pub lip_gamma: f64,
    /// Lipschitz bound for `u gamma(u)`.
    pub lip_u_gamma: f64,
    /// Lipschitz bound for `u^2 G(u)`, `G = g + (p - 1) gamma^2`.
    pub lip_u2_g: f64,
    /// `1/(|X| + |X~|)` bound on the shell.
    pub kappa: f64,
    /// `(Y^p - Y~^p) I1 + 2p Z |x|^2 G(|x|) <= first_order * eps * Z`.
    pub first_order: f64,
    /// `I3 <= p(2p-1)^2/(1-p) gamma^2 |x|^2 Z + i3_z * eps * Z + i3_gap |x - x~|^2`.
    pub i3_z: f64,
    pub i3_gap: f64,
    /// `I5 <= i5_z * eps^{2-2p} Z + i5_gap |x - x~|^2`.
    pub i5_z: f64,
    pub i5_gap: f64,
    /// `C` in `2(Y^p - Y~^p) I1 + I3 + I5 <= K Z + C |x - x~|^2`.
    pub c_hat: f64,
}

/// The three `p`-dependent suprema `(c31, c33, c36)`.
fn exponent_suprema(p: f64) -> Result<(f64, f64, f64)> {
    Ok((
        inequalities::lemma31_sup(p)?,
        inequalities::lemma33_constant(p)?.supremum,
        inequalities::lemma36_sup(p)?,
    ))
}

impl ShellConstants {
    pub fn new(model: &BallModel, p: f64, eps: f64) -> Result<Self> {
        require_half(model)?;
        require_p(p)?;
        Self::with_suprema(model, p, eps, exponent_suprema(p)?)
    }

    fn with_suprema(model: &BallModel, p: f64, eps: f64, (c31, c33, c36): (f64, f64, f64)) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::Domain(format!("eps = {eps} is outside (0, 1)")));
        }
        let n = model.n as f64;
        let gamma_max = model.gamma.max_value();
        let lip_gamma = model.gamma.lipschitz_constant();
        let lip_g = model.g.lipschitz_constant();
        let lip_u_gamma = gamma_max + lip_gamma;
        let big_g_max = model.g.max_value().max((1.0 - p) * gamma_max * gamma_max);
        let lip_big_g = lip_g + (1.0 - p) * 2.0 * gamma_max * lip_gamma;
        let lip_u2_g = 2.0 * big_g_max + lip_big_g;
        let kappa = 1.0 / (2.0 * (1.0 - eps).sqrt());

        let first_order = 2.0 * p * lip_u2_g * kappa * c31;
        let i3_z = 8.0 * p * p * gamma_max * lip_u_gamma * kappa * c33;
        let i3_gap = 4.0 * p * p * ((gamma_max + lip_gamma).powi(2) + lip_u_gamma.powi(2));
        let i5_z = 2.0 * n * gamma_max * gamma_max * c36;
        let i5_gap = 2.0 * n * eps * lip_gamma * lip_gamma;
        Ok(Self {
            p,
            eps,
            c31,
            c33,
            c36,
            gamma_max,
            lip_gamma,
            lip_u_gamma,
            lip_u2_g,
            kappa,
            first_order,
            i3_z,
            i3_gap,
            i5_z,
            i5_gap,
            c_hat: i3_gap + i5_gap,
        })
    }

    /// Coefficient of `Z` at `|X| = u`.
    pub fn k_at(&self, model: &BallModel, u: f64) -> f64 {
        let (p, eps) = (self.p, self.eps);
        let gam2 = model.gamma.eval(u).powi(2);
        let lead = 4.0 * p * u * u * (-model.g.eval(u) + exponent_objective(p) * gam2);
        lead + (2.0 * self.first_order + self.i3_z) * eps + self.i5_z * eps.powf(2.0 - 2.0 * p)
    }

    /// Largest coefficient of `Z` over the shell.
    pub fn k_sup(&self, model: &BallModel) -> f64 {
        shell_points(model, self.eps)
            .into_iter()
            .map(|u| self.k_at(model, u))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Shell width used by the coupling: `epsilon_for_p`, shrunk until the explicit
/// `Z` coefficient is negative when that is possible. The flag reports whether it is.
pub fn coupling_epsilon(model: &BallModel, p: f64) -> Result<(f64, bool)> {
    require_half(model)?;
    require_p(p)?;
    let eps_p = epsilon_for_p(model, p)?.min(0.5 - 1e-12);
    let sups = exponent_suprema(p)?;
    let negative =
        |eps: f64| -> Result<bool> { Ok(ShellConstants::with_suprema(model, p, eps, sups)?.k_sup(model) < 0.0) };
    if negative(eps_p)? {
        return Ok((eps_p, true));
    }
    let mut hi = eps_p;
    for _ in 0..60 {
        let lo = 0.5 * hi;
        if negative(lo)? {
            let (mut good, mut bad) = (lo, hi);
            for _ in 0..40 {
                let mid = 0.5 * (good + bad);
                if negative(mid)? {
                    good = mid;
                } else {
                    bad = mid;
                }
            }
            return Ok((good, true));
        }
        hi = lo;
    }
    Ok((eps_p, false))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CouplingStep {
    pub k: usize,
    pub t: f64,
    pub w: f64,
    pub gap: f64,
    /// Present while `k < tau` and both radial values are positive.
    pub terms: Option<SingularTerms>,
    /// `(Y^p - Y~^p) I1`.
    pub good: f64,
    /// `(Y^p - Y~^p) I2`.
    pub drift_cross: f64,
    pub k_negative: Option<bool>,
}

/// Left-point time integrals over `[0, tau)` of the recorded quantities.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct CouplingIntegrals {
    pub i1: f64,
    pub i2: f64,
    pub i3: f64,
    pub i4: f64,
    pub i5: f64,
    pub z: f64,
    pub good: f64,
    pub drift_cross: f64,
    /// `int [2(Y^p - Y~^p) I1 + I3 + I5]`.
    pub singular: f64,
    /// `int |X - X~|^2`.
    pub gap_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoupledDiagnostics {
    pub p: f64,
    pub eps: f64,
    pub dt: f64,
    pub seed: u64,
    pub constants: ShellConstants,
    /// Whether the explicit `Z` coefficient is negative on the whole shell.
    pub k_negative_on_shell: bool,
    #[serde(skip)]
    pub steps: Vec<CouplingStep>,
    pub integrals: CouplingIntegrals,
    /// First step index with `Y > eps` or `Y~ > eps`.
    pub tau_index: Option<usize>,
    /// Steps before `tau` skipped because a radial value was zero.
    pub excluded_steps: usize,
    pub sup_w_before_tau: f64,
    pub initial_w: f64,
    pub initial_gap: f64,
    pub final_gap: f64,
    /// `int singular / int |X - X~|^2` along this path.
    pub empirical_c: f64,
    /// `int singular <= 1.05 c_hat int |X - X~|^2`.
    pub inequality_held: bool,
}

/// Safety factor applied to the explicit constant.
pub const SAFETY: f64 = 1.05;

impl CoupledDiagnostics {
    /// Per-step CSV with a `#` comment header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# p={} eps={} dt={} seed={}", self.p, self.eps, self.dt, self.seed)?;
        writeln!(w, "k,t,W,gap,Z,I1,I2,I3,I4,I5,good,drift_cross,K_negative")?;
        for s in &self.steps {
            let t = s.terms.unwrap_or_default();
            let kneg = match s.k_negative {
                Some(true) => "1",
                Some(false) => "0",
                None => "",
            };
            if s.terms.is_some() {
                writeln!(
                    w,
                    "{},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{}",
                    s.k, s.t, s.w, s.gap, t.z, t.i1, t.i2, t.i3, t.i4, t.i5, s.good, s.drift_cross, kneg
                )?;
            } else {
                writeln!(w, "{},{},{:e},{:e},,,,,,,,,{}", s.k, s.t, s.w, s.gap, kneg)?;
            }
        }
        Ok(())
    }
}

/// Exponent, shell width and explicit constants shared by every run of one model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CouplingSetup {
    pub p: f64,
    pub eps: f64,
    pub k_negative_on_shell: bool,
    pub constants: ShellConstants,
}

impl CouplingSetup {
    pub fn new(model: &BallModel, p: f64) -> Result<Self> {
        model.validate()?;
        let (eps, k_negative_on_shell) = coupling_epsilon(model, p)?;
        Ok(Self {
            p,
            eps,
            k_negative_on_shell,
            constants: ShellConstants::new(model, p, eps)?,
        })
    }
}

/// Coupled run reusing a precomputed setup; `record` keeps the per-step diagnostics.
#[allow(clippy::too_many_arguments)]
pub fn run_coupled_with(
    model: &BallModel,
    setup: &CouplingSetup,
    x0: &[f64],
    xt0: &[f64],
    horizon: f64,
    dt: f64,
    seed: u64,
    record: bool,
) -> Result<CoupledDiagnostics> {
    require_half(model)?;
    let CouplingSetup {
        p,
        eps,
        k_negative_on_shell,
        constants,
    } = *setup;
    for v in [x0, xt0] {
        if v.len() != model.n {
            return Err(Error::Domain(format!("initial states must be {}-vectors", model.n)));
        }
        ensure_finite("initial state", v)?;
        if norm_sq(v) > 1.0 + 1e-12 {
            return Err(Error::Domain("initial state lies outside the closed unit ball".into()));
        }
    }
    if !(horizon > 0.0 && dt > 0.0) {
        return Err(Error::Numeric("horizon and time step must be positive".into()));
    }
    let n = model.n;
    let steps = ball_sde::step_count(horizon, dt);
    let mut rng = seeding::stream(seed);
    let mut x = x0.to_vec();
    let mut xt = xt0.to_vec();
    ball_sde::project_to_ball(&mut x);
    ball_sde::project_to_ball(&mut xt);
    let mut nx = vec![0.0; n];
    let mut nxt = vec![0.0; n];
    let mut db = vec![0.0; n];

    let w_of = |x: &[f64], xt: &[f64]| {
        let (y, yt) = (radial_value(x), radial_value(xt));
        let d = inequalities_pow_gap(y, yt, p);
        let gap2: f64 = x.iter().zip(xt).map(|(a, b)| (a - b) * (a - b)).sum();
        (d * d + gap2, gap2)
    };
    let (initial_w, initial_gap2) = w_of(&x, &xt);

    let mut integrals = CouplingIntegrals::default();
    let mut tau_index = None;
    let mut excluded_steps = 0;
    let mut sup_w = initial_w;
    let mut recorded = Vec::with_capacity(if record { steps + 1 } else { 0 });

    for k in 0..=steps {
        let (y, yt) = (radial_value(&x), radial_value(&xt));
        let (w, gap2) = w_of(&x, &xt);
        if tau_index.is_none() && (y > eps || yt > eps) {
            tau_index = Some(k);
        }
        let active = tau_index.is_none() && k < steps;
        let mut step = CouplingStep {
            k,
            t: k as f64 * dt,
            w,
            gap: gap2.sqrt(),
            terms: None,
            good: 0.0,
            drift_cross: 0.0,
            k_negative: None,
        };
        if active {
            sup_w = sup_w.max(w);
            if y > 0.0 && yt > 0.0 {
                let t = terms_unchecked(model, &x, &xt, y, yt, p);
                let d = inequalities_pow_gap(y, yt, p);
                step.good = d * t.i1;
                step.drift_cross = d * t.i2;
                step.k_negative = Some(constants.k_at(model, norm_sq(&x).sqrt().min(1.0)) < 0.0);
                integrals.i1 += t.i1 * dt;
                integrals.i2 += t.i2 * dt;
                integrals.i3 += t.i3 * dt;
                integrals.i4 += t.i4 * dt;
                integrals.i5 += t.i5 * dt;
                integrals.z += t.z * dt;
                integrals.good += step.good * dt;
                integrals.drift_cross += step.drift_cross * dt;
                integrals.singular += (2.0 * step.good + t.i3 + t.i5) * dt;
                integrals.gap_sq += gap2 * dt;
                step.terms = Some(t);
            } else {
                excluded_steps += 1;
            }
        }
        if record {
            recorded.push(step);
        }
        if k == steps {
            break;
        }
        seeding::fill_gaussian(&mut rng, dt, &mut db);
        ball_sde::step_into(model, &x, dt, &db, &mut nx);
        ball_sde::step_into(model, &xt, dt, &db, &mut nxt);
        if nx.iter().chain(nxt.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite coupled state at step {}", k + 1)));
        }
        std::mem::swap(&mut x, &mut nx);
        std::mem::swap(&mut xt, &mut nxt);
    }

    let final_gap = x.iter().zip(&xt).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let bound = SAFETY * constants.c_hat * integrals.gap_sq;
    let empirical_c = if integrals.gap_sq > 0.0 {
        integrals.singular / integrals.gap_sq
    } else {
        0.0
    };
    Ok(CoupledDiagnostics {
        p,
        eps,
        dt,
        seed,
        constants,
        k_negative_on_shell,
        steps: recorded,
        integrals,
        tau_index,
        excluded_steps,
        sup_w_before_tau: sup_w,
        initial_w,
        initial_gap: initial_gap2.sqrt(),
        final_gap,
        empirical_c,
        inequality_held: integrals.singular <= bound + 1e-12 * integrals.singular.abs(),
    })
}

fn inequalities_pow_gap(y: f64, yt: f64, p: f64) -> f64 {
    if y == yt {
        0.0
    } else if y == 0.0 || yt == 0.0 {
        y.powf(p) - yt.powf(p)
    } else {
        inequalities::pow_diff(y, yt, p)
    }
}

/// Runs both chains on `[0, T]` with shared increments and records every step.
pub fn run_coupled(
    model: &BallModel,
    x0: &[f64],
    xt0: &[f64],
    horizon: f64,
    dt: f64,
    seed: u64,
    p: f64,
) -> Result<CoupledDiagnostics> {
    run_coupled_with(model, &CouplingSetup::new(model, p)?, x0, xt0, horizon, dt, seed, true)
}

/// Same as [`run_coupled`] without the per-step record.
pub fn run_coupled_summary(
    model: &BallModel,
    x0: &[f64],
    xt0: &[f64],
    horizon: f64,
    dt: f64,
    seed: u64,
    p: f64,
) -> Result<CoupledDiagnostics> {
    run_coupled_with(model, &CouplingSetup::new(model, p)?, x0, xt0, horizon, dt, seed, false)
}

/// Boundary pair: `e_n` and its rotation toward `e_1` at chord distance `gap`.
pub fn boundary_pair(n: usize, gap: f64) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    x[n - 1] = 1.0;
    let theta = 2.0 * (0.5 * gap).asin();
    let mut xt = vec![0.0; n];
    xt[0] = theta.sin();
    xt[n - 1] = theta.cos();
    (x, xt)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Above,
    Threshold,
    Below,
}

impl Regime {
    pub fn of(model: &BallModel) -> Self {
        let ratio = model.boundary_ratio();
        let star = threshold_ratio();
        if (ratio - star).abs() <= 1e-9 * star {
            Regime::Threshold
        } else if ratio > star {
            Regime::Above
        } else {
            Regime::Below
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Above => "above",
            Regime::Threshold => "threshold",
            Regime::Below => "below",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepParams {
    pub replicas: usize,
    pub horizon: f64,
    pub dt: f64,
    pub seed: u64,
    /// Initial chord distance of the boundary pair.
    pub gap: f64,
    /// Exponent; `None` picks `p*` when admissible and the midpoint of the admissible range otherwise.
    pub p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub c: f64,
    pub replicas: usize,
    pub median_ratio: f64,
    pub p95_ratio: f64,
    pub ineq_held_fraction: f64,
    pub p: f64,
    pub eps: f64,
    pub dt: f64,
    pub seed: u64,
    pub regime: Regime,
}

/// Exponent for a sweep row: `p*` when `p* > 1 - g(1)/gamma(1)^2`, else the midpoint of
/// `(max(1/2, 1 - g(1)/gamma(1)^2), 1)`.
pub fn sweep_exponent(model: &BallModel) -> f64 {
    let (p_star, _) = optimal_p();
    let lower = (1.0 - model.boundary_ratio()).max(0.5);
    if p_star > lower && epsilon_for_p(model, p_star).is_ok() {
        p_star
    } else {
        0.5 * (lower + 1.0)
    }
}

/// Coupling statistics for `g = c` over the grid `cs`, keeping `n`, `r` and `gamma`
/// from `template`. Replica `j` of row `i` uses seed `derive_seed(seed, [i, j])`.
pub fn threshold_sweep(template: &BallModel, cs: &[f64], params: &SweepParams) -> Result<Vec<SweepRow>> {
    use rayon::prelude::*;
    if params.replicas == 0 {
        return Err(Error::Domain("sweep needs at least one replica".into()));
    }
    if !(params.gap > 0.0 && params.gap < 2.0) {
        return Err(Error::Domain(format!("initial gap {} is outside (0, 2)", params.gap)));
    }
    let (x0, xt0) = boundary_pair(template.n, params.gap);
    let mut rows = Vec::with_capacity(cs.len());
    for (i, &c) in cs.iter().enumerate() {
        if !(c > 0.0) {
            return Err(Error::Domain(format!("sweep drift c = {c} must be positive")));
        }
        let model = BallModel::new(
            template.n,
            template.r,
            template.gamma.clone(),
            crate::CoeffFn::constant(c)?,
        )?;
        let p = params.p.unwrap_or_else(|| sweep_exponent(&model));
        let setup = CouplingSetup::new(&model, p)?;
        let runs: Vec<Result<CoupledDiagnostics>> = (0..params.replicas)
            .into_par_iter()
            .map(|j| {
                let seed = seeding::derive_seed(params.seed, &[i as u64, j as u64]);
                run_coupled_with(&model, &setup, &x0, &xt0, params.horizon, params.dt, seed, false)
            })
            .collect();
        let runs: Vec<CoupledDiagnostics> = runs.into_iter().collect::<Result<_>>()?;
        let ratios: Vec<f64> = runs.iter().map(|d| d.final_gap / d.initial_gap).collect();
        let held = runs.iter().filter(|d| d.inequality_held).count();
        rows.push(SweepRow {
            c,
            replicas: params.replicas,
            median_ratio: stats::quantile(&ratios, 0.5),
            p95_ratio: stats::quantile(&ratios, 0.95),
            ineq_held_fraction: held as f64 / runs.len() as f64,
            p,
            eps: runs[0].eps,
            dt: params.dt,
            seed: params.seed,
            regime: Regime::of(&model),
        });
    }
    Ok(rows)
}

pub const SWEEP_HEADER: &str = "c,replicas,median_ratio,p95_ratio,ineq_held_fraction,p,eps,dt,seed,regime";

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut w: W) -> io::Result<()> {
    writeln!(w, "{SWEEP_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            r.c,
            r.replicas,
            r.median_ratio,
            r.p95_ratio,
            r.ineq_held_fraction,
            r.p,
            r.eps,
            r.dt,
            r.seed,
            r.regime.as_str()
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use std::f64::consts::SQRT_2;

    #[test]
    fn optimal_exponent() {
        let (p, f) = optimal_p();
        assert!((p - (1.0 - SQRT_2 / 4.0)).abs() < 1e-9);
        assert!((f - (SQRT_2 - 1.0)).abs() < 1e-9);
        assert!((exponent_objective(0.75) - 0.5).abs() < 1e-15);
    }

    /// Generator of the coupled diffusion applied to `(Y^p - Y~^p)`, its square and
    /// `|x - x~|^2`, from the analytic gradient and Hessian of `y -> y^p`.
    fn generator_oracle(model: &BallModel, x: &[f64], xt: &[f64], p: f64) -> (f64, f64, f64, f64) {
        let n = x.len();
        let part = |v: &[f64]| {
            let nv = norm_sq(v);
            let u = nv.sqrt();
            let y = 1.0 - nv;
            let s = y.sqrt() * model.gamma.eval(u);
            let g = model.g.eval(u);
            // grad y^p = -2p y^{p-1} v, Hessian = -2p y^{p-1} I + 4p(p-1) y^{p-2} v v^T
            let grad: Vec<f64> = v.iter().map(|vi| -2.0 * p * y.powf(p - 1.0) * vi).collect();
            let trace = -2.0 * p * y.powf(p - 1.0) * n as f64 + 4.0 * p * (p - 1.0) * y.powf(p - 2.0) * nv;
            let drift: Vec<f64> = v.iter().map(|vi| -g * vi).collect();
            let l = grad.iter().zip(&drift).map(|(a, b)| a * b).sum::<f64>() + 0.5 * s * s * trace;
            (y.powf(p), grad, drift, s, l)
        };
        let (fp, gx, bx, sx, lx) = part(x);
        let (ftp, gxt, bxt, sxt, lxt) = part(xt);
        let d = fp - ftp;
        let drift_d = lx - lxt;
        // Quadratic variation of d: |sx gx - sxt gxt|^2 (same Brownian motion).
        let qv: f64 = (0..n).map(|j| (sx * gx[j] - sxt * gxt[j]).powi(2)).sum();
        let l_sq = 2.0 * d * drift_d + qv;
        let gap_drift: f64 = (0..n).map(|j| 2.0 * (x[j] - xt[j]) * (bx[j] - bxt[j])).sum();
        let gap_qv = n as f64 * (sx - sxt).powi(2);
        (drift_d, l_sq - 2.0 * d * drift_d, gap_drift, gap_qv)
    }

    #[test]
    fn singular_terms_match_generator() {
        let m = BallModel::constant(2, SQRT_2, 1.0).unwrap();
        let (x, xt) = ([0.9, 0.0], [0.8, 0.0]);
        let t = singular_terms(&m, &x, &xt, 0.75).unwrap();
        let (d, q, gd, gq) = generator_oracle(&m, &x, &xt, 0.75);
        assert!((t.i1 + t.i2 - d).abs() < 1e-12, "{t:?} {d}");
        assert!((t.i3 - q).abs() < 1e-12);
        assert!((t.i4 - gd).abs() < 1e-12);
        assert!((t.i5 - gq).abs() < 1e-12);
        // I2 alone: -np[gamma^2 Y^p - gamma^2 Y~^p] with Y = 0.19, Y~ = 0.36.
        let i2 = -2.0 * 0.75 * 2.0 * (0.19f64.powf(0.75) - 0.36f64.powf(0.75));
        assert!((t.i2 - i2).abs() < 1e-12);

        let m = BallModel::new(
            3,
            0.5,
            crate::CoeffFn::affine(1.0, 0.4).unwrap(),
            crate::CoeffFn::table(vec![(0.0, 0.3), (0.9, 1.1), (1.0, 1.4)]).unwrap(),
        )
        .unwrap();
        let (x, xt) = ([0.3, -0.5, 0.7], [0.35, -0.45, 0.72]);
        let t = singular_terms(&m, &x, &xt, 0.66).unwrap();
        let (d, q, gd, gq) = generator_oracle(&m, &x, &xt, 0.66);
        assert!((t.i1 + t.i2 - d).abs() < 1e-12);
        assert!((t.i3 - q).abs() < 1e-12);
        assert!((t.i4 - gd).abs() < 1e-12);
        assert!((t.i5 - gq).abs() < 1e-12);
    }

    #[test]
    fn identical_states_give_zero_terms() {
        let m = BallModel::constant(2, SQRT_2, 1.0).unwrap();
        let t = singular_terms(&m, &[0.6, 0.1], &[0.6, 0.1], 0.7).unwrap();
        assert_eq!(t, SingularTerms::default());
        assert!(matches!(
            singular_terms(&m, &[1.0, 0.0], &[0.6, 0.1], 0.7),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn k_sign_examples() {
        let (p, _) = optimal_p();
        let m = BallModel::constant(2, SQRT_2, 1.5).unwrap();
        for eps in [0.01, 0.2, 0.49] {
            let k = lemma37_k(&m, p, eps, 0.0).unwrap();
            let expect = 4.0 * p * (1.0 - eps) * 2.0 * (-0.75 + exponent_objective(p));
            assert!((k - expect).abs() < 1e-12 && k < 0.0);
        }
        let m = BallModel::constant(2, SQRT_2, 0.5).unwrap();
        assert!(lemma37_k(&m, p, 0.1, 0.0).unwrap() > 0.0);
    }

    #[test]
    fn shell_bounds_hold_on_random_pairs() {
        let (p, _) = optimal_p();
        let models = [
            BallModel::constant(2, SQRT_2, 1.5).unwrap(),
            BallModel::new(
                3,
                0.5,
                crate::CoeffFn::affine(1.2, 0.3).unwrap(),
                crate::CoeffFn::affine(0.4, 1.0).unwrap(),
            )
            .unwrap(),
        ];
        let mut rng = seeding::stream(3);
        for m in &models {
            let eps = coupling_epsilon(m, p).unwrap().0;
            let k = ShellConstants::new(m, p, eps).unwrap();
            for _ in 0..20_000 {
                let n = m.n;
                let draw = |rng: &mut seeding::Stream| {
                    let y: f64 = eps * (1.0 - rng.random::<f64>());
                    let mut v: Vec<f64> = (0..n).map(|_| seeding::gaussian(rng)).collect();
                    let s = (1.0 - y).sqrt() / norm_sq(&v).sqrt();
                    v.iter_mut().for_each(|c| *c *= s);
                    v
                };
                let x = draw(&mut rng);
                // Nearby partner: perturb and renormalize into the shell.
                let mut xt: Vec<f64> = x.iter().map(|c| c + 0.05 * seeding::gaussian(&mut rng)).collect();
                let yt: f64 = eps * (1.0 - rng.random::<f64>());
                let s = (1.0 - yt).sqrt() / norm_sq(&xt).sqrt();
                xt.iter_mut().for_each(|c| *c *= s);
                let (y, yt) = (1.0 - norm_sq(&x), 1.0 - norm_sq(&xt));
                if !(y > 0.0 && yt > 0.0 && y <= eps && yt <= eps) {
                    continue;
                }
                let t = singular_terms(m, &x, &xt, p).unwrap();
                let d = y.powf(p) - yt.powf(p);
                let u = norm_sq(&x).sqrt();
                let gam2 = m.gamma.eval(u).powi(2);
                let big_g = m.g.eval(u) + (p - 1.0) * gam2;
                let gap2: f64 = x.iter().zip(&xt).map(|(a, b)| (a - b) * (a - b)).sum();
                let tiny = 1e-12 * (t.z + gap2);

                let lhs31 = d * t.i1 + 2.0 * p * t.z * u * u * big_g;
                assert!(lhs31 <= SAFETY * k.first_order * eps * t.z + tiny, "first-order bound");
                let lead = p * (2.0 * p - 1.0).powi(2) / (1.0 - p) * gam2 * u * u * t.z;
                assert!(
                    t.i3 <= lead + SAFETY * (k.i3_gap * gap2 + k.i3_z * eps * t.z) + tiny,
                    "I3 bound"
                );
                assert!(
                    t.i5 <= SAFETY * (k.i5_z * eps.powf(2.0 - 2.0 * p) * t.z + k.i5_gap * gap2) + tiny,
                    "I5 bound"
                );
                let total = 2.0 * d * t.i1 + t.i3 + t.i5;
                assert!(total <= k.k_at(m, u) * t.z + k.c_hat * gap2 + tiny, "combined bound");
            }
        }
    }

    #[test]
    fn epsilon_makes_k_negative_above_threshold() {
        let (p, _) = optimal_p();
        let m = BallModel::constant(2, SQRT_2, 1.5).unwrap();
        let (eps, ok) = coupling_epsilon(&m, p).unwrap();
        assert!(ok && eps > 0.0 && eps < 0.5);
        assert!(ShellConstants::new(&m, p, eps).unwrap().k_sup(&m) < 0.0);
        let m = BallModel::constant(2, SQRT_2, 2.0 * (SQRT_2 - 1.0)).unwrap();
        assert!(!coupling_epsilon(&m, p).unwrap().1);
        assert_eq!(Regime::of(&m), Regime::Threshold);
    }

    #[test]
    fn identical_starts_stay_identical() {
        let (p, _) = optimal_p();
        let m = BallModel::constant(2, SQRT_2, 1.5).unwrap();
        let x = [0.0, 1.0];
        let d = run_coupled(&m, &x, &x, 0.01, 1e-4, 9, p).unwrap();
        assert!(d.steps.iter().all(|s| s.w == 0.0));
        assert!(d.inequality_held);
    }

    #[test]
    fn coupled_run_invariants() {
        let (p, _) = optimal_p();
        let m = BallModel::constant(2, SQRT_2, 1.5).unwrap();
        let (x, xt) = boundary_pair(2, 1e-3);
        assert!((x.iter().zip(&xt).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() - 1e-3).abs() < 1e-15);
        let d = run_coupled(&m, &x, &xt, 0.05, 1e-5, 4, p).unwrap();
        assert!(d.steps.iter().all(|s| s.w >= 0.0));
        assert!(d
            .steps
            .iter()
            .filter_map(|s| s.terms)
            .all(|t| t.z >= 0.0 && t.i3 >= 0.0 && t.i5 >= 0.0));
        assert!(d.inequality_held, "{:?}", d.integrals);
        assert_eq!(d, run_coupled(&m, &x, &xt, 0.05, 1e-5, 4, p).unwrap());
    }
}
