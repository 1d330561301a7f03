//! Feller classification of the boundary `v = 0` of the radial diffusion.
//!
//! With `x = 1/2` as reference point, `s'` the scale density and `m = 2/(sigma^2 s')`
//! the speed density, the boundary is attainable iff
//! `Sigma = int_0^x s'(eta) M[eta, x] d eta` is finite, and an entrance point
//! of the non-attainable kind iff `N = int_0^x m(eta) S[eta, x] d eta` is finite.
//!
//! Everything is computed in `t = -ln v` and in log scale, so steep cases such as
//! `r > 1/2` never form `inf * 0`. The half-line is swept in unit chunks and each
//! integral is declared finite once its chunk contributions decay geometrically
//! below tolerance, or infinite once it exceeds `1e12` or stops decaying.

use serde::Serialize;

use super::RadialModel;
use crate::error::Result;
use crate::quadrature::{integrate, Tolerance};

const REFERENCE: f64 = 0.5;
const T_MAX: f64 = 700.0;
const CHUNK: f64 = 1.0;
const DIVERGENCE_LEVEL: f64 = 1e12;
const TAIL_REL: f64 = 1e-9;
const STALL_RATIO: f64 = 1.0 - 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    #[serde(rename = "attainable-regular")]
    Regular,
    #[serde(rename = "attainable-exit")]
    Exit,
    #[serde(rename = "unattainable-entrance")]
    Entrance,
    #[serde(rename = "unattainable-natural")]
    Natural,
    #[serde(rename = "inconclusive")]
    Inconclusive,
}

impl Verdict {
    pub fn attainable(self) -> Option<bool> {
        match self {
            Verdict::Regular | Verdict::Exit => Some(true),
            Verdict::Entrance | Verdict::Natural => Some(false),
            Verdict::Inconclusive => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Regular => "attainable-regular",
            Verdict::Exit => "attainable-exit",
            Verdict::Entrance => "unattainable-entrance",
            Verdict::Natural => "unattainable-natural",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum IntegralStatus {
    Finite,
    Infinite,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FellerIntegral {
    pub status: IntegralStatus,
    /// Value when finite, otherwise the partial sum at the point of decision.
    pub value: f64,
    pub abs_error: f64,
    /// Smallest `v` the sweep reached for this integral.
    pub swept_to: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryClassification {
    pub verdict: Verdict,
    pub attainable: Option<bool>,
    pub reference: f64,
    /// `Sigma`, finite iff the boundary is attainable.
    pub integral_i: FellerIntegral,
    /// `N`, finite iff the boundary is regular or entrance.
    pub integral_j: FellerIntegral,
    /// `S(0, x]`.
    pub scale: FellerIntegral,
    /// `M(0, x]`.
    pub speed: FellerIntegral,
}

struct Tracker {
    total: f64,
    error: f64,
    previous: Option<f64>,
    decaying: usize,
    reached: f64,
    status: Option<IntegralStatus>,
}

impl Tracker {
    fn new() -> Self {
        Self {
            total: 0.0,
            error: 0.0,
            previous: None,
            decaying: 0,
            reached: REFERENCE,
            status: None,
        }
    }

    fn open(&self) -> bool {
        self.status.is_none()
    }

    /// Chunk tolerance: relative to the chunk, but never finer than the running total needs.
    fn tolerance(&self) -> Tolerance {
        Tolerance {
            abs: (1e-3 * TAIL_REL * self.total).max(1e-300),
            rel: 1e-11,
            max_intervals: 400,
        }
    }

    fn push(&mut self, contribution: f64, error: f64, t_end: f64) {
        self.total += contribution;
        self.error += error;
        self.reached = (-t_end).exp();
        if !self.total.is_finite() || self.total > DIVERGENCE_LEVEL {
            self.status = Some(IntegralStatus::Infinite);
            return;
        }
        if contribution == 0.0 && self.previous.is_some() {
            self.status = Some(IntegralStatus::Finite);
            return;
        }
        if let Some(prev) = self.previous.filter(|p| *p > 0.0) {
            let ratio = contribution / prev;
            if ratio < 1.0 {
                self.decaying += 1;
                let tail = contribution * ratio / (1.0 - ratio);
                if self.decaying >= 2 && tail <= TAIL_REL * self.total {
                    self.error += tail;
                    self.total += tail;
                    self.status = Some(IntegralStatus::Finite);
                }
            } else {
                self.decaying = 0;
            }
            if self.status.is_none() && t_end + CHUNK > T_MAX {
                self.status = Some(if ratio >= STALL_RATIO {
                    IntegralStatus::Infinite
                } else {
                    IntegralStatus::Inconclusive
                });
            }
        }
        self.previous = Some(contribution);
    }

    fn finish(&self) -> FellerIntegral {
        FellerIntegral {
            status: self.status.unwrap_or(IntegralStatus::Inconclusive),
            value: self.total,
            abs_error: self.error,
            swept_to: self.reached,
        }
    }
}

struct Integrands<'a> {
    model: &'a RadialModel,
    inner: Tolerance,
}

impl Integrands<'_> {
    /// `d Phi / d t` where `Phi(t) = int_x^{e^{-t}} 2b/sigma^2`.
    fn phi_rate(&self, t: f64) -> f64 {
        let m = self.model;
        let w = (-t).exp();
        let gam2 = m.gamma.eval(w).powi(2);
        let lead = m.g.eval(w) / gam2 * (-(1.0 - 2.0 * m.r) * t).exp();
        -(lead - m.n as f64 * w / (2.0 * (1.0 - w)))
    }

    fn log_variance(&self, t: f64) -> f64 {
        let m = self.model;
        let w = (-t).exp();
        4f64.ln() - 2.0 * m.r * t + 2.0 * m.gamma.eval(w).ln() + (-w).ln_1p()
    }

    /// `Phi(t) - Phi(s)`.
    fn rise(&self, s: f64, t: f64) -> f64 {
        integrate(|u| self.phi_rate(u), s, t, self.inner).value
    }

    /// `int_a^t f`, on panels whose width doubles away from `t`, starting at the
    /// local length scale `1 / |Phi'(t)|` of integrands concentrated near `t`.
    fn graded<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, t: f64) -> f64 {
        let mut width = 1.0 / (1.0 + self.phi_rate(t).abs());
        let mut hi = t;
        let mut total = 0.0_f64;
        while hi > a {
            let lo = (hi - width).max(a);
            let tol = Tolerance {
                abs: (self.inner.rel * total.abs()).max(1e-300),
                ..self.inner
            };
            total += integrate(&mut f, lo, hi, tol).value;
            hi = lo;
            width *= 2.0;
        }
        total
    }
}

/// Classifies `v = 0` for the radial diffusion of `model`.
pub fn classify_boundary(model: &RadialModel) -> Result<BoundaryClassification> {
    let ctx = Integrands {
        model,
        inner: Tolerance {
            abs: 1e-300,
            rel: 1e-13,
            max_intervals: 200,
        },
    };

    let mut scale = Tracker::new();
    let mut speed = Tracker::new();
    let mut sigma = Tracker::new();
    let mut entrance = Tracker::new();

    // Rescaled running integrals: a_tilde = e^{-Phi} M[e^{-t}, x], s_tilde = e^{Phi} S[e^{-t}, x].
    let mut a_tilde = 0.0;
    let mut s_tilde = 0.0;
    let mut phi_a = 0.0;
    let mut a = -REFERENCE.ln();

    while [&scale, &speed, &sigma, &entrance].iter().any(|t| t.open()) && a + CHUNK <= T_MAX {
        let b = a + CHUNK;
        let phi_b = phi_a + ctx.rise(a, b);

        if scale.open() {
            let est = integrate(|t| (-phi_a - ctx.rise(a, t) - t).exp(), a, b, scale.tolerance());
            scale.push(est.value, est.abs_error, b);
        }
        if speed.open() {
            let est = integrate(
                |t| 2.0 * (phi_a + ctx.rise(a, t) - t - ctx.log_variance(t)).exp(),
                a,
                b,
                speed.tolerance(),
            );
            speed.push(est.value, est.abs_error, b);
        }
        let a_tilde_at = |t: f64| {
            let fresh = ctx.graded(|s| 2.0 * (-ctx.rise(s, t) - s - ctx.log_variance(s)).exp(), a, t);
            (-ctx.rise(a, t)).exp() * a_tilde + fresh
        };
        let s_tilde_at = |t: f64| {
            let fresh = ctx.graded(|s| (ctx.rise(s, t) - s).exp(), a, t);
            ctx.rise(a, t).exp() * s_tilde + fresh
        };
        if sigma.open() {
            let est = integrate(|t| a_tilde_at(t) * (-t).exp(), a, b, sigma.tolerance());
            sigma.push(est.value, est.abs_error, b);
        }
        if entrance.open() {
            let est = integrate(
                |t| 2.0 * (-ctx.log_variance(t) - t).exp() * s_tilde_at(t),
                a,
                b,
                entrance.tolerance(),
            );
            entrance.push(est.value, est.abs_error, b);
        }
        if sigma.open() {
            a_tilde = a_tilde_at(b);
        }
        if entrance.open() {
            s_tilde = s_tilde_at(b);
        }
        phi_a = phi_b;
        a = b;
    }

    let integral_i = sigma.finish();
    let integral_j = entrance.finish();
    use IntegralStatus::*;
    let verdict = match (integral_i.status, integral_j.status) {
        (Finite, Finite) => Verdict::Regular,
        (Finite, Infinite) => Verdict::Exit,
        (Infinite, Finite) => Verdict::Entrance,
        (Infinite, Infinite) => Verdict::Natural,
        _ => Verdict::Inconclusive,
    };
    Ok(BoundaryClassification {
        verdict,
        attainable: verdict.attainable(),
        reference: REFERENCE,
        integral_i,
        integral_j,
        scale: scale.finish(),
        speed: speed.finish(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::SQRT_2;

    #[test]
    fn half_exponent_threshold() {
        for (c, expect) in [
            (0.5, Verdict::Regular),
            (1.5, Verdict::Regular),
            (2.5, Verdict::Entrance),
            (4.0, Verdict::Entrance),
        ] {
            let m = RadialModel::constant(2, 0.5, SQRT_2, c).unwrap();
            let cls = classify_boundary(&m).unwrap();
            assert_eq!(cls.verdict, expect, "c = {c}: {cls:?}");
        }
    }

    #[test]
    fn critical_drift_is_unattainable() {
        let m = RadialModel::constant(2, 0.5, SQRT_2, 2.0).unwrap();
        let cls = classify_boundary(&m).unwrap();
        assert_eq!(cls.integral_i.status, IntegralStatus::Infinite, "{cls:?}");
        assert_eq!(cls.attainable, Some(false));
    }

    #[test]
    fn scale_integral_matches_closed_form() {
        // r = 1/2, n = 2, gamma = sqrt 2, g = 1: s'(v) = (2v)^{-1/2} / (2(1 - v)) relative to x = 1/2,
        // and v = u^2/2 turns S(0, 1/2] into int_0^1 du / (2 - u^2) = atanh(1/sqrt 2)/sqrt 2.
        let m = RadialModel::constant(2, 0.5, SQRT_2, 1.0).unwrap();
        let cls = classify_boundary(&m).unwrap();
        let exact = (1.0 / SQRT_2).atanh() / SQRT_2;
        assert_eq!(cls.scale.status, IntegralStatus::Finite);
        assert!(
            ((cls.scale.value - exact) / exact).abs() < 1e-8,
            "{} vs {exact}",
            cls.scale.value
        );
    }

    #[test]
    fn steep_exponent_is_entrance_and_small_exponent_regular() {
        let m = RadialModel::constant(2, 0.75, SQRT_2, 1.0).unwrap();
        assert_eq!(classify_boundary(&m).unwrap().verdict, Verdict::Entrance);
        let m = RadialModel::constant(3, 0.25, 1.0, 0.2).unwrap();
        assert_eq!(classify_boundary(&m).unwrap().verdict, Verdict::Regular);
    }

    #[test]
    fn report_serializes() {
        let m = RadialModel::constant(2, 0.5, SQRT_2, 3.0).unwrap();
        let json = serde_json::to_string(&classify_boundary(&m).unwrap()).unwrap();
        assert!(json.contains("\"unattainable-entrance\""), "{json}");
        assert!(json.contains("\"infinite\""));
    }
}
