//! Numerical verification of the power-difference inequalities behind the
//! coupling argument, the suprema that feed its constants, and the sign chain
//! `f1 <= 0, f2 <= 0, f3 >= 0, f4 <= 0` that makes `f` decreasing.
//!
//! Differences such as `x^a - y^a` and `1 - z^a` are evaluated through
//! `expm1`/`ln_1p`, which keeps full relative accuracy as `x -> y` and `z -> 1`.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::seeding;

/// Relative tolerance for suprema.
pub const SUP_TOL: f64 = 1e-6;
/// Relative slack for pointwise inequalities.
pub const POINT_SLACK: f64 = 1e-12;

/// `ln(x / y)` without cancellation when `x ~ y`.
fn log_ratio(x: f64, y: f64) -> f64 {
    let r = x / y;
    if (0.5..=2.0).contains(&r) {
        ((x - y) / y).ln_1p()
    } else {
        r.ln()
    }
}

/// `x^a - y^a`.
pub fn pow_diff(x: f64, y: f64, a: f64) -> f64 {
    y.powf(a) * (a * log_ratio(x, y)).exp_m1()
}

/// `1 - z^a` for `z` in `(0, 1]`.
pub fn one_minus_pow(z: f64, a: f64) -> f64 {
    -(a * z.ln()).exp_m1()
}

fn check_p(p: f64) -> Result<()> {
    if p > 0.5 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("p = {p} is outside (1/2, 1)")))
    }
}

fn check_q(q: f64) -> Result<()> {
    if q > 1.0 && q < 2.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("q = {q} is outside (1, 2)")))
    }
}

fn check_pair(x: f64, y: f64) -> Result<()> {
    if x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("need positive x, y, got ({x}, {y})")))
    }
}

/// `(2p - 1)^2 / (4p(1 - p))`.
pub fn a1_constant(p: f64) -> f64 {
    (2.0 * p - 1.0).powi(2) / (4.0 * p * (1.0 - p))
}

/// `(x^p - y^p)(y^{p-1} - x^{p-1})`, nonnegative for `p < 1`.
fn cross_product(x: f64, y: f64, p: f64) -> f64 {
    pow_diff(x, y, p) * pow_diff(y, x, p - 1.0)
}

/// `(lhs, rhs)` of `(x^{p-1/2} - y^{p-1/2})^2 <= (2p-1)^2/(4p(1-p)) (x^p - y^p)(y^{p-1} - x^{p-1})`.
pub fn lemma_a1_check(x: f64, y: f64, p: f64) -> Result<(f64, f64)> {
    check_pair(x, y)?;
    check_p(p)?;
    let lhs = pow_diff(x, y, p - 0.5).powi(2);
    Ok((lhs, a1_constant(p) * cross_product(x, y, p)))
}

/// Where a supremum over an open interval is reached.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "at", content = "w", rename_all = "kebab-case")]
pub enum Attainment {
    LeftLimit,
    RightLimit,
    Interior(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupremumReport {
    /// Closed-form value the supremum is checked against.
    pub claimed: f64,
    /// Largest value on the finest grid.
    pub grid_estimate: f64,
    /// Grid maximum after each refinement; nested grids make this nondecreasing.
    pub level_estimates: Vec<f64>,
    pub argmax: f64,
    pub left_limit: f64,
    pub right_limit: f64,
    /// `max(grid estimate, endpoint limits)`.
    pub supremum: f64,
    pub attained: Attainment,
    pub tolerance: f64,
    /// First grid point exceeding `claimed * (1 + tolerance)`.
    pub violation: Option<f64>,
}

impl SupremumReport {
    pub fn passed(&self) -> bool {
        self.violation.is_none() && ((self.supremum - self.claimed) / self.claimed).abs() <= self.tolerance
    }
}

const GRID_LEVELS: usize = 8;

/// Nested grid on `(0, 1)` for level `level >= 1`: uniform spacing `1/(64 2^level)`
/// plus the geometric points `2^{-k}` and `1 - 2^{-k}`, `k <= 6 level`.
fn level_grid(level: usize) -> Vec<f64> {
    let m = 64usize << level;
    let mut pts: Vec<f64> = (1..m).map(|j| j as f64 / m as f64).collect();
    for k in 1..=(6 * level).min(52) {
        let d = (0.5f64).powi(k as i32);
        pts.push(d);
        pts.push(1.0 - d);
    }
    pts
}

/// Supremum of `h` over `(0, 1)` by nested grid refinement toward both ends,
/// combined with the analytic endpoint limits.
pub fn open_supremum(
    h: impl Fn(f64) -> f64,
    left_limit: f64,
    right_limit: f64,
    claimed: f64,
    tolerance: f64,
) -> SupremumReport {
    let mut level_estimates = Vec::with_capacity(GRID_LEVELS);
    let mut best = (f64::NEG_INFINITY, 0.5);
    let mut violation = None;
    for level in 1..=GRID_LEVELS {
        for z in level_grid(level) {
            let v = h(z);
            if v > best.0 {
                best = (v, z);
            }
            if violation.is_none() && v > claimed * (1.0 + tolerance) {
                violation = Some(z);
            }
        }
        level_estimates.push(best.0);
    }
    let (grid_estimate, argmax) = best;
    let (supremum, attained) = if left_limit >= right_limit && left_limit >= grid_estimate {
        (left_limit, Attainment::LeftLimit)
    } else if right_limit >= grid_estimate {
        (right_limit, Attainment::RightLimit)
    } else if (grid_estimate - left_limit.max(right_limit)) <= tolerance * grid_estimate.abs() {
        // Grid maximum sits next to an endpoint and agrees with its limit.
        if argmax > 0.5 {
            (grid_estimate, Attainment::RightLimit)
        } else {
            (grid_estimate, Attainment::LeftLimit)
        }
    } else {
        (grid_estimate, Attainment::Interior(argmax))
    };
    SupremumReport {
        claimed,
        grid_estimate,
        level_estimates,
        argmax,
        left_limit,
        right_limit,
        supremum,
        attained,
        tolerance,
        violation,
    }
}

/// `z^{2-q}(1 - z^{q-1})^2 / ((1 - z^q)(1 - z^{2-q}))`.
pub fn a1_ratio(z: f64, q: f64) -> f64 {
    z.powf(2.0 - q) * one_minus_pow(z, q - 1.0).powi(2) / (one_minus_pow(z, q) * one_minus_pow(z, 2.0 - q))
}

/// Checks `sup_{0<z<1} a1_ratio = (q-1)^2/(q(2-q))`, reached as `z -> 1`.
pub fn a1_supremum(q: f64) -> Result<SupremumReport> {
    check_q(q)?;
    let claimed = (q - 1.0).powi(2) / (q * (2.0 - q));
    Ok(open_supremum(|z| a1_ratio(z, q), 0.0, claimed, claimed, SUP_TOL))
}

/// `f = 1 / a1_ratio`.
pub fn f_value(z: f64, q: f64) -> f64 {
    one_minus_pow(z, q) * one_minus_pow(z, 2.0 - q) / (z.powf(2.0 - q) * one_minus_pow(z, q - 1.0).powi(2))
}

pub fn f_limit(q: f64) -> f64 {
    q * (2.0 - q) / (q - 1.0).powi(2)
}

pub fn f1(z: f64, q: f64) -> f64 {
    (q + 1.0) * z - q - z.powf(1.0 - q)
}

pub fn f1_prime(z: f64, q: f64) -> f64 {
    q + 1.0 + (q - 1.0) * z.powf(-q)
}

pub fn f2(z: f64, q: f64) -> f64 {
    -(q + 1.0) * (2.0 - q) * z.powf(q) - q * (q - 1.0) * z.powf(q - 1.0) + q * (3.0 - q) * z - (q - 1.0) * (2.0 - q)
}

pub fn f3(z: f64, q: f64) -> f64 {
    -(q + 1.0) * (2.0 - q) * z * z - 2.0 * q * (q - 1.0) * z + q * (q - 1.0) + 2.0 * q * z.powf(3.0 - q)
        - 2.0 * (q - 1.0) * z.powf(2.0 - q)
}

pub fn f4(z: f64, q: f64) -> f64 {
    -(2.0 - q) * z.powf(q + 1.0) - 2.0 * (q - 1.0) * z.powf(q) + q * z.powf(q - 1.0) + q * z * z
        - 2.0 * (q - 1.0) * z
        - (2.0 - q)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotoneReport {
    pub q: f64,
    pub grid_size: usize,
    pub violations: usize,
    /// Largest `f(z_{i+1}) - f(z_i)`; negative when strictly decreasing.
    pub worst_increase: f64,
    pub limit: f64,
    /// `f` at the last grid point.
    pub last_value: f64,
    /// Points where `f` does not exceed its limit.
    pub below_limit: usize,
}

impl MonotoneReport {
    pub fn passed(&self) -> bool {
        self.violations == 0 && self.below_limit == 0
    }
}

/// Checks that `f` decreases on `z_i = i/(N+1)` and stays above its `z -> 1` limit.
pub fn f_monotone_check(q: f64, grid_size: usize) -> Result<MonotoneReport> {
    check_q(q)?;
    if grid_size < 2 {
        return Err(Error::Domain("grid needs at least two points".into()));
    }
    let limit = f_limit(q);
    let values: Vec<f64> = (1..=grid_size)
        .map(|i| f_value(i as f64 / (grid_size + 1) as f64, q))
        .collect();
    let mut violations = 0;
    let mut worst_increase = f64::NEG_INFINITY;
    for w in values.windows(2) {
        let inc = w[1] - w[0];
        worst_increase = worst_increase.max(inc);
        if inc > 1e-12 {
            violations += 1;
        }
    }
    Ok(MonotoneReport {
        q,
        grid_size,
        violations,
        worst_increase,
        limit,
        last_value: *values.last().expect("grid is nonempty"),
        below_limit: values.iter().filter(|&&v| v <= limit).count(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainReport {
    pub q: f64,
    pub grid_size: usize,
    /// Sign failures of `f1 <= 0, f2 <= 0, f3 >= 0, f4 <= 0` on the grid.
    pub sign_violations: [usize; 4],
    /// `f1(1), ..., f4(1)`.
    pub endpoint_values: [f64; 4],
    /// Points where `f1' <= 0`.
    pub f1_prime_violations: usize,
    /// Worst relative mismatch of `f3' = 2 z^{1-q} f2`, `f4' = z^{q-2} f3`
    /// and `f' = f4 / (z^{3-q}(1 - z^{q-1})^3)` against central differences.
    pub derivative_mismatch: [f64; 3],
    /// Grid points where the exact derivative is too small for a relative comparison.
    pub derivative_skipped: usize,
}

/// Endpoint values may differ from zero by rounding of the coefficients.
pub const ENDPOINT_TOL: f64 = 1e-14;
pub const DERIVATIVE_TOL: f64 = 1e-5;
/// Absolute slack for the sign conditions.
pub const SIGN_SLACK: f64 = 1e-12;

impl ChainReport {
    pub fn passed(&self) -> bool {
        self.sign_violations.iter().all(|&v| v == 0)
            && self.endpoint_values.iter().all(|v| v.abs() <= ENDPOINT_TOL)
            && self.f1_prime_violations == 0
            && self.derivative_mismatch.iter().all(|&m| m <= DERIVATIVE_TOL)
    }
}

/// Five-point central difference.
fn central_difference(f: impl Fn(f64) -> f64, z: f64) -> f64 {
    let h = 1e-2 * z.min(1.0 - z);
    (f(z - 2.0 * h) - 8.0 * f(z - h) + 8.0 * f(z + h) - f(z + 2.0 * h)) / (12.0 * h)
}

/// Sign chain on `z_i = i/N`, `i = 1..=N`, with endpoint and derivative checks.
pub fn f_chain_signs(q: f64, grid_size: usize) -> Result<ChainReport> {
    check_q(q)?;
    if grid_size < 2 {
        return Err(Error::Domain("grid needs at least two points".into()));
    }
    let mut sign_violations = [0usize; 4];
    let mut f1_prime_violations = 0;
    let mut mismatch = [0.0f64; 3];
    let mut skipped = 0;
    for i in 1..=grid_size {
        let z = i as f64 / grid_size as f64;
        let vals = [f1(z, q), f2(z, q), f3(z, q), f4(z, q)];
        // All four vanish at z = 1, so nearby values are pure rounding.
        let ok = [
            vals[0] <= SIGN_SLACK,
            vals[1] <= SIGN_SLACK,
            vals[2] >= -SIGN_SLACK,
            vals[3] <= SIGN_SLACK,
        ];
        for k in 0..4 {
            if !ok[k] {
                sign_violations[k] += 1;
            }
        }
        if f1_prime(z, q) <= 0.0 {
            f1_prime_violations += 1;
        }
        if !(0.01..=0.99).contains(&z) {
            continue;
        }
        let exact = [
            2.0 * z.powf(1.0 - q) * vals[1],
            z.powf(q - 2.0) * vals[2],
            vals[3] / (z.powf(3.0 - q) * one_minus_pow(z, q - 1.0).powi(3)),
        ];
        let fd = [
            central_difference(|s| f3(s, q), z),
            central_difference(|s| f4(s, q), z),
            central_difference(|s| f_value(s, q), z),
        ];
        for k in 0..3 {
            // Near the common zero at z = 1 the difference quotient is all rounding.
            if exact[k].abs() < 1e-5 {
                skipped += 1;
                continue;
            }
            mismatch[k] = mismatch[k].max(((fd[k] - exact[k]) / exact[k]).abs());
        }
    }
    Ok(ChainReport {
        q,
        grid_size,
        sign_violations,
        endpoint_values: [f1(1.0, q), f2(1.0, q), f3(1.0, q), f4(1.0, q)],
        f1_prime_violations,
        derivative_mismatch: mismatch,
        derivative_skipped: skipped,
    })
}

/// `(1 - w^{p-1/2})(1 - w) / ((1 - w^p)(1 - w^{1-p}))`.
pub fn lemma33_ratio(w: f64, p: f64) -> f64 {
    one_minus_pow(w, p - 0.5) * (1.0 - w) / (one_minus_pow(w, p) * one_minus_pow(w, 1.0 - p))
}

/// Supremum of [`lemma33_ratio`] over `(0, 1)`. The `claimed` field holds the
/// larger endpoint limit, `1` at `w -> 0` and `(p-1/2)/(p(1-p))` at `w -> 1`;
/// `attained` reports where the supremum actually sits.
pub fn lemma33_constant(p: f64) -> Result<SupremumReport> {
    check_p(p)?;
    let right = (p - 0.5) / (p * (1.0 - p));
    Ok(open_supremum(
        |w| lemma33_ratio(w, p),
        1.0,
        right,
        right.max(1.0),
        SUP_TOL,
    ))
}

/// `(lhs, bound)` of `|x^{p-1/2} - y^{p-1/2}| |x - y| <= C(p) max(x^{1/2} y^{1-p}, y^{1/2} x^{1-p}) (x^p - y^p)(y^{p-1} - x^{p-1})`.
pub fn lemma33_check(x: f64, y: f64, p: f64) -> Result<(f64, f64)> {
    let c = lemma33_constant(p)?.supremum;
    lemma33_check_with(x, y, p, c)
}

/// [`lemma33_check`] with a precomputed constant.
pub fn lemma33_check_with(x: f64, y: f64, p: f64, c: f64) -> Result<(f64, f64)> {
    check_pair(x, y)?;
    check_p(p)?;
    let lhs = pow_diff(x, y, p - 0.5).abs() * (x - y).abs();
    let weight = (x.sqrt() * y.powf(1.0 - p)).max(y.sqrt() * x.powf(1.0 - p));
    Ok((lhs, c * weight * cross_product(x, y, p)))
}

pub fn lemma31_ratio(u: f64, p: f64) -> f64 {
    (1.0 - u) / one_minus_pow(u, 1.0 - p)
}

pub fn lemma31_report(p: f64) -> Result<SupremumReport> {
    check_p(p)?;
    let limit = 1.0 / (1.0 - p);
    Ok(open_supremum(|u| lemma31_ratio(u, p), 1.0, limit, limit, SUP_TOL))
}

/// `sup_{0<u<1} (1 - u)/(1 - u^{1-p}) = 1/(1-p)`.
pub fn lemma31_sup(p: f64) -> Result<f64> {
    Ok(lemma31_report(p)?.supremum)
}

pub fn lemma36_ratio(w: f64, p: f64) -> f64 {
    (1.0 - w).powi(2) / (one_minus_pow(w, 2.0 * p) * one_minus_pow(w, 2.0 - 2.0 * p))
}

pub fn lemma36_report(p: f64) -> Result<SupremumReport> {
    check_p(p)?;
    let limit = 1.0 / (4.0 * p * (1.0 - p));
    Ok(open_supremum(|w| lemma36_ratio(w, p), 1.0, limit, limit, SUP_TOL))
}

/// `sup_{0<w<1} (1 - w)^2/((1 - w^{2p})(1 - w^{2-2p}))`, reached as `w -> 1`.
pub fn lemma36_sup(p: f64) -> Result<f64> {
    Ok(lemma36_report(p)?.supremum)
}

/// One line of the aggregate report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckEntry {
    pub name: String,
    pub passed: bool,
    pub samples: usize,
    /// Largest signed margin: `lhs/rhs - 1` for inequalities, relative error for suprema,
    /// largest increase for monotonicity. Nonpositive (or within tolerance) means pass.
    pub worst_margin: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityReport {
    pub seed: u64,
    pub samples: usize,
    pub entries: Vec<CheckEntry>,
}

impl InequalityReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }
}

/// Largest `lhs/rhs - 1` over `samples` random `(x, y)` in `(0, 1]^2` with `p` from `draw_p`.
fn random_pairs<T: Copy>(
    samples: usize,
    seed: u64,
    mut draw_p: impl FnMut(&mut seeding::Stream) -> T,
    check: impl Fn(f64, f64, T) -> (f64, f64),
) -> (usize, f64, Option<(f64, f64, T)>) {
    let mut rng = seeding::stream(seed);
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    let mut worst_at = None;
    for _ in 0..samples {
        let x = 1.0 - rng.random::<f64>();
        let y = 1.0 - rng.random::<f64>();
        let k = draw_p(&mut rng);
        if x == y {
            continue;
        }
        let (lhs, rhs) = check(x, y, k);
        let margin = lhs / rhs - 1.0;
        if margin > worst {
            worst = margin;
            worst_at = Some((x, y, k));
        }
        if lhs > rhs * (1.0 + POINT_SLACK) {
            violations += 1;
        }
    }
    (violations, worst, worst_at)
}

const LEMMA33_TABLE: usize = 200;

/// The `q` values used for the appendix checks: `1.05, 1.10, ..., 1.95`.
pub fn q_grid() -> Vec<f64> {
    (1..=19).map(|k| 1.0 + 0.05 * k as f64).collect()
}

/// The 49 exponents `0.51, 0.52, ..., 0.99`.
pub fn p_grid() -> Vec<f64> {
    (51..=99).map(|k| k as f64 / 100.0).collect()
}

/// Runs every check and collects one entry per claim.
pub fn verify_all(samples: usize, seed: u64) -> Result<InequalityReport> {
    let mut entries = Vec::new();

    let (violations, worst, at) = random_pairs(
        samples,
        seeding::derive_seed(seed, &[1]),
        |rng| (0.5 + 0.5 * (1.0 - rng.random::<f64>())).min(1.0 - 1e-12),
        |x, y, p| lemma_a1_check(x, y, p).expect("admissible sample"),
    );
    entries.push(CheckEntry {
        name: "lemma_a1_check".into(),
        passed: violations == 0,
        samples,
        worst_margin: worst,
        detail: format!("{violations} violations; worst at {at:?}"),
    });

    let p_star = 1.0 - std::f64::consts::SQRT_2 / 4.0;
    let qs = [1.1, 1.5, 1.9, 2.0 * p_star];
    let reports: Vec<SupremumReport> = qs.iter().map(|&q| a1_supremum(q)).collect::<Result<_>>()?;
    entries.push(CheckEntry {
        name: "a1_supremum".into(),
        passed: reports.iter().all(SupremumReport::passed),
        samples: reports.len(),
        worst_margin: reports
            .iter()
            .map(|r| ((r.grid_estimate - r.claimed) / r.claimed).abs())
            .fold(0.0, f64::max),
        detail: format!("q = {qs:?}"),
    });

    let grid = 10_000;
    let mono: Vec<MonotoneReport> = q_grid()
        .iter()
        .map(|&q| f_monotone_check(q, grid))
        .collect::<Result<_>>()?;
    entries.push(CheckEntry {
        name: "f_monotone_check".into(),
        passed: mono.iter().all(MonotoneReport::passed),
        samples: mono.len() * grid,
        worst_margin: mono.iter().map(|r| r.worst_increase).fold(f64::NEG_INFINITY, f64::max),
        detail: format!(
            "{} monotonicity violations, {} points at or below the limit",
            mono.iter().map(|r| r.violations).sum::<usize>(),
            mono.iter().map(|r| r.below_limit).sum::<usize>()
        ),
    });

    let chain: Vec<ChainReport> = q_grid()
        .iter()
        .map(|&q| f_chain_signs(q, grid))
        .collect::<Result<_>>()?;
    entries.push(CheckEntry {
        name: "f_chain_signs".into(),
        passed: chain.iter().all(ChainReport::passed),
        samples: chain.len() * grid,
        worst_margin: chain.iter().flat_map(|r| r.derivative_mismatch).fold(0.0, f64::max),
        detail: format!(
            "sign violations {:?}; max |f_i(1)| = {:e}",
            chain.iter().fold([0usize; 4], |mut acc, r| {
                for (a, v) in acc.iter_mut().zip(r.sign_violations) {
                    *a += v;
                }
                acc
            }),
            chain
                .iter()
                .flat_map(|r| r.endpoint_values)
                .fold(0.0f64, |m, v| m.max(v.abs()))
        ),
    });

    // The supremum is costly, so p is drawn from a table of precomputed constants.
    let table: Vec<(f64, f64)> = (1..LEMMA33_TABLE)
        .map(|k| {
            let p = 0.5 + 0.5 * k as f64 / LEMMA33_TABLE as f64;
            lemma33_constant(p).map(|r| (p, r.supremum))
        })
        .collect::<Result<_>>()?;
    let (violations, worst, at) = random_pairs(
        samples,
        seeding::derive_seed(seed, &[2]),
        |rng| rng.random_range(0..table.len()),
        |x, y, k| lemma33_check_with(x, y, table[k].0, table[k].1).expect("admissible sample"),
    );
    let at = at.map(|(x, y, k)| (x, y, table[k].0));
    entries.push(CheckEntry {
        name: "lemma33_check".into(),
        passed: violations == 0,
        samples,
        worst_margin: worst,
        detail: format!(
            "{violations} violations; worst at {at:?}; p from {} tabulated constants",
            table.len()
        ),
    });

    for (name, report) in [
        ("lemma31_sup", lemma31_report as fn(f64) -> Result<SupremumReport>),
        ("lemma36_sup", lemma36_report),
        ("lemma33_constant", lemma33_constant),
    ] {
        let reps: Vec<SupremumReport> = p_grid().iter().map(|&p| report(p)).collect::<Result<_>>()?;
        let interior: Vec<f64> = reps
            .iter()
            .filter_map(|r| match r.attained {
                Attainment::Interior(w) => Some(w),
                _ => None,
            })
            .collect();
        entries.push(CheckEntry {
            name: name.into(),
            passed: reps.iter().all(|r| r.passed() && r.supremum.is_finite()),
            samples: reps.len(),
            worst_margin: reps
                .iter()
                .map(|r| ((r.supremum - r.claimed) / r.claimed).abs())
                .fold(0.0, f64::max),
            detail: format!(
                "left-limit {} / right-limit {} / interior {:?}",
                reps.iter().filter(|r| r.attained == Attainment::LeftLimit).count(),
                reps.iter().filter(|r| r.attained == Attainment::RightLimit).count(),
                interior
            ),
        });
    }

    Ok(InequalityReport { seed, samples, entries })
}
