//! Degenerate diffusions on a domain `D = {phi > 0}`:
//!
//! ```text
//! dX = h(X)^{1/2} sigma(X) dB + b(X) dt
//! ```
//!
//! Near the boundary the drift splits as `b = g grad h/|grad h| + beta` with
//! `beta` tangent to the level sets of `h`, and the boundary constant is
//! `alpha = 2 g |grad h| / <a grad h, grad h>` with `a = sigma sigma^T`.

use std::fmt;
use std::sync::Arc;

use evalexpr::{ContextWithMutableVariables, HashMapContext, Node, Value};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::ball_sde::{norm_sq, step_count};
use crate::coeffs::CoeffFn;
use crate::error::{ensure_finite, Error, Result};
use crate::seeding;

/// Step of the central differences used for expression fields.
pub const FD_STEP: f64 = 1e-5;
/// Bisection iterations when backtracking a step into the closed domain.
pub const BACKTRACK_ITERATIONS: usize = 40;
/// Largest accepted violation `phi(X) >= -PHI_SLACK`.
pub const PHI_SLACK: f64 = 1e-10;

/// A compiled arithmetic expression in the coordinates `x1, ..., xn`
/// (also `x, y, z` when `n <= 3`).
#[derive(Clone)]
pub struct Expression {
    source: String,
    n: usize,
    node: Arc<Node>,
}

impl fmt::Debug for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expression({:?})", self.source)
    }
}

impl PartialEq for Expression {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source && self.n == other.n
    }
}

/// Appends `.0` to bare integer literals so that `1/4` is not integer division.
fn floatify(src: &str) -> String {
    let chars: Vec<char> = src.chars().collect();
    let mut out = String::with_capacity(src.len() + 8);
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let starts_number = c.is_ascii_digit()
            && (i == 0 || !(chars[i - 1].is_alphanumeric() || chars[i - 1] == '_' || chars[i - 1] == '.'));
        if !starts_number {
            out.push(c);
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && chars[i].is_ascii_digit() {
            i += 1;
        }
        out.extend(&chars[start..i]);
        let continues = i < chars.len() && matches!(chars[i], '.' | 'e' | 'E');
        if !continues {
            out.push_str(".0");
        }
    }
    out
}

fn coordinate_names(n: usize) -> Vec<Vec<String>> {
    (0..n)
        .map(|i| {
            let mut names = vec![format!("x{}", i + 1)];
            if n <= 3 {
                names.push(["x", "y", "z"][i].to_string());
            }
            names
        })
        .collect()
}

impl Expression {
    pub fn parse(source: &str, n: usize) -> Result<Self> {
        let node = evalexpr::build_operator_tree(&floatify(source))
            .map_err(|e| Error::Parse(format!("expression {source:?}: {e}")))?;
        let names = coordinate_names(n);
        for id in node.iter_variable_identifiers() {
            if !names.iter().flatten().any(|v| v == id) {
                return Err(Error::Parse(format!("expression {source:?}: unknown variable {id:?}")));
            }
        }
        let expr = Self {
            source: source.to_string(),
            n,
            node: Arc::new(node),
        };
        expr.eval(&vec![0.5 / n as f64; n])?;
        Ok(expr)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let mut ctx = HashMapContext::new();
        for (names, &v) in coordinate_names(self.n).iter().zip(x) {
            for name in names {
                ctx.set_value(name.clone(), Value::Float(v))
                    .map_err(|e| Error::Parse(e.to_string()))?;
            }
        }
        self.node
            .eval_number_with_context(&ctx)
            .map_err(|e| Error::Parse(format!("expression {:?}: {e}", self.source)))
    }
}

fn central_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + FD_STEP;
            let up = f(&probe);
            probe[i] = x[i] - FD_STEP;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

/// Defining function or degeneracy function.
#[derive(Debug, Clone, PartialEq)]
pub enum ScalarField {
    /// `1 - |x|^2`.
    UnitBall,
    /// `1 - sum x_i^2 / a_i^2`.
    Ellipsoid {
        axes: Vec<f64>,
    },
    Expression(Expression),
}

impl ScalarField {
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Self::UnitBall => 1.0 - norm_sq(x),
            Self::Ellipsoid { axes } => 1.0 - x.iter().zip(axes).map(|(c, a)| (c / a).powi(2)).sum::<f64>(),
            Self::Expression(e) => e.eval(x).unwrap_or(f64::NAN),
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Self::UnitBall => x.iter().map(|c| -2.0 * c).collect(),
            Self::Ellipsoid { axes } => x.iter().zip(axes).map(|(c, a)| -2.0 * c / (a * a)).collect(),
            Self::Expression(_) => central_gradient(|p| self.value(p), x),
        }
    }
}

/// Noise matrix field.
#[derive(Debug, Clone, PartialEq)]
pub enum SigmaField {
    /// `gamma(|x|) I`.
    ScaledIdentity(CoeffFn),
    Constant(DMatrix<f64>),
}

impl SigmaField {
    pub fn value(&self, x: &[f64]) -> DMatrix<f64> {
        match self {
            Self::ScaledIdentity(gamma) => DMatrix::identity(x.len(), x.len()) * gamma.eval(norm_sq(x).sqrt().min(1.0)),
            Self::Constant(m) => m.clone(),
        }
    }
}

/// Drift field.
#[derive(Debug, Clone, PartialEq)]
pub enum DriftField {
    /// `-g(|x|) x`.
    Radial(CoeffFn),
    /// `grad h`.
    GradientOfH,
    /// `-x`.
    Contracting,
    Expression(Vec<Expression>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    pub n: usize,
    pub phi: ScalarField,
    pub h: ScalarField,
    pub sigma: SigmaField,
    pub b: DriftField,
}

impl DomainSpec {
    /// Unit ball with `h = 1 - |x|^2`, `sigma = gamma(|x|) I`, `b = -g(|x|) x`.
    pub fn sphere(n: usize, gamma: CoeffFn, g: CoeffFn) -> Result<Self> {
        Self::new(
            n,
            ScalarField::UnitBall,
            ScalarField::UnitBall,
            SigmaField::ScaledIdentity(gamma),
            DriftField::Radial(g),
        )
    }

    /// Ellipsoid with semi-axes `axes`, `h = phi`.
    pub fn ellipsoid(axes: Vec<f64>, sigma: SigmaField, b: DriftField) -> Result<Self> {
        if axes.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(Error::InvalidModel("ellipsoid semi-axes must be positive".into()));
        }
        let field = ScalarField::Ellipsoid { axes: axes.clone() };
        Self::new(axes.len(), field.clone(), field, sigma, b)
    }

    pub fn new(n: usize, phi: ScalarField, h: ScalarField, sigma: SigmaField, b: DriftField) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidModel(format!("dimension n = {n} must be at least 2")));
        }
        if let ScalarField::Ellipsoid { axes } = &phi {
            if axes.len() != n {
                return Err(Error::InvalidModel("one semi-axis per coordinate is required".into()));
            }
        }
        if let SigmaField::Constant(m) = &sigma {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::InvalidModel(format!("sigma must be {n}x{n}")));
            }
        }
        if let DriftField::Expression(parts) = &b {
            if parts.len() != n {
                return Err(Error::InvalidModel(format!("drift needs {n} components")));
            }
        }
        let spec = Self { n, phi, h, sigma, b };
        if !(spec.phi.value(&vec![0.0; n]) > 0.0) {
            return Err(Error::InvalidModel("the origin must lie inside the domain".into()));
        }
        Ok(spec)
    }

    pub fn drift(&self, x: &[f64]) -> Vec<f64> {
        match &self.b {
            DriftField::Radial(g) => {
                let gv = g.eval(norm_sq(x).sqrt().min(1.0));
                x.iter().map(|c| -gv * c).collect()
            }
            DriftField::GradientOfH => self.h.gradient(x),
            DriftField::Contracting => x.iter().map(|c| -c).collect(),
            DriftField::Expression(parts) => parts.iter().map(|e| e.eval(x).unwrap_or(f64::NAN)).collect(),
        }
    }

    /// `a = sigma sigma^T`.
    pub fn diffusion_matrix(&self, x: &[f64]) -> DMatrix<f64> {
        let s = self.sigma.value(x);
        &s * s.transpose()
    }
}

/// `(g, beta)` with `g = <b, grad h>/|grad h|` and `beta = b - g grad h/|grad h|`.
pub fn decompose_drift(spec: &DomainSpec, x: &[f64]) -> Result<(f64, Vec<f64>)> {
    ensure_finite("point", x)?;
    let grad = spec.h.gradient(x);
    let norm = norm_sq(&grad).sqrt();
    if !(norm > 0.0) {
        return Err(Error::Domain("grad h vanishes".into()));
    }
    let b = spec.drift(x);
    ensure_finite("drift", &b)?;
    let g = b.iter().zip(&grad).map(|(a, c)| a * c).sum::<f64>() / norm;
    if !(g > 0.0) {
        return Err(Error::HypothesisViolation(format!(
            "normal drift g = {g} is not inward"
        )));
    }
    let beta = b.iter().zip(&grad).map(|(a, c)| a - g * c / norm).collect();
    Ok((g, beta))
}

/// `g |grad h|`, the normal drift scaled by the gradient length.
pub fn normal_drift(spec: &DomainSpec, x: &[f64]) -> f64 {
    let grad = spec.h.gradient(x);
    spec.drift(x).iter().zip(&grad).map(|(a, c)| a * c).sum()
}

/// `<a grad h, grad h>`.
pub fn normal_diffusion(spec: &DomainSpec, x: &[f64]) -> f64 {
    let grad = DVector::from_vec(spec.h.gradient(x));
    (grad.transpose() * spec.diffusion_matrix(x) * &grad)[(0, 0)]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaReport {
    pub values: Vec<f64>,
    pub min: f64,
    pub max: f64,
    /// `(max - min)/|max|`.
    pub spread: f64,
    pub constant: bool,
}

/// Relative spread below which `alpha` counts as constant.
pub const ALPHA_SPREAD_TOL: f64 = 1e-6;

/// `alpha = 2 g |grad h| / <a grad h, grad h>` at each boundary sample.
pub fn alpha(spec: &DomainSpec, samples: &[Vec<f64>]) -> Result<AlphaReport> {
    if samples.is_empty() {
        return Err(Error::Domain("alpha needs at least one boundary sample".into()));
    }
    let mut values = Vec::with_capacity(samples.len());
    for x in samples {
        let (g, _) = decompose_drift(spec, x)?;
        let grad_norm = norm_sq(&spec.h.gradient(x)).sqrt();
        let quad = normal_diffusion(spec, x);
        if !(quad > 0.0) {
            return Err(Error::HypothesisViolation(
                "<a grad h, grad h> vanishes at a boundary sample".into(),
            ));
        }
        values.push(2.0 * g * grad_norm / quad);
    }
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let spread = (max - min) / max.abs();
    Ok(AlphaReport {
        values,
        min,
        max,
        spread,
        constant: spread < ALPHA_SPREAD_TOL,
    })
}

/// Newton projection `x - phi grad phi/|grad phi|^2` onto `phi = 0`.
fn newton_to_boundary(phi: &ScalarField, mut x: Vec<f64>) -> Vec<f64> {
    for _ in 0..50 {
        let v = phi.value(&x);
        if v.abs() < 1e-14 {
            break;
        }
        let grad = phi.gradient(&x);
        let gsq = norm_sq(&grad);
        if !(gsq > 0.0) {
            break;
        }
        x.iter_mut().zip(&grad).for_each(|(c, d)| *c -= v * d / gsq);
    }
    x
}

/// Largest `t` with `phi(t d) >= 0` along the ray `d`, by bracketing and bisection.
fn ray_exit(phi: &ScalarField, d: &[f64]) -> Option<f64> {
    let at = |t: f64| phi.value(&d.iter().map(|c| c * t).collect::<Vec<_>>());
    let mut hi = 1.0;
    let mut tries = 0;
    while at(hi) > 0.0 {
        hi *= 2.0;
        tries += 1;
        if tries > 60 {
            return None;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if at(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(lo)
}

/// Points on `phi = 0` along uniformly random rays from the origin, polished by Newton steps.
pub fn boundary_samples(spec: &DomainSpec, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut rng = seeding::stream(seed);
    let mut out = Vec::with_capacity(count);
    let mut d = vec![0.0; spec.n];
    while out.len() < count {
        d.iter_mut().for_each(|c| *c = seeding::gaussian(&mut rng));
        let norm = norm_sq(&d).sqrt();
        if norm == 0.0 {
            continue;
        }
        d.iter_mut().for_each(|c| *c /= norm);
        let t = ray_exit(&spec.phi, &d).ok_or_else(|| Error::Domain("domain is unbounded along a ray".into()))?;
        let x = newton_to_boundary(&spec.phi, d.iter().map(|c| c * t).collect());
        if spec.phi.value(&x).abs() > 1e-12 {
            return Err(Error::Numeric("boundary projection did not converge".into()));
        }
        out.push(x);
    }
    Ok(out)
}

/// Default width of the boundary neighborhood `{0 < h < h_N}`: a tenth of the sampled maximum of `h`.
pub fn default_neighborhood_width(spec: &DomainSpec, seed: u64) -> Result<f64> {
    let mut rng = seeding::stream(seed);
    let mut best = spec.h.value(&vec![0.0; spec.n]);
    for x in boundary_samples(spec, 64, seed)? {
        for _ in 0..16 {
            let s: f64 = rng.random();
            let p: Vec<f64> = x.iter().map(|c| c * s).collect();
            best = best.max(spec.h.value(&p));
        }
    }
    Ok(0.1 * best)
}

/// Points with `0 < h < width`, drawn on random rays between the origin and the boundary.
pub fn neighborhood_samples(spec: &DomainSpec, count: usize, width: f64, seed: u64) -> Result<Vec<Vec<f64>>> {
    if !(width > 0.0) {
        return Err(Error::Domain(format!("neighborhood width {width} must be positive")));
    }
    let mut rng = seeding::stream(seeding::derive_seed(seed, &[1]));
    let boundary = boundary_samples(spec, count, seed)?;
    let mut out = Vec::with_capacity(count);
    for x in &boundary {
        // Bisect for the scale with h = width along the ray, then sample below it.
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        let at = |s: f64| spec.h.value(&x.iter().map(|c| c * s).collect::<Vec<_>>());
        if at(0.0) <= width {
            lo = 0.0;
        } else {
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if at(mid) > width {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
        }
        for _ in 0..100 {
            let s = lo + (1.0 - lo) * rng.random::<f64>();
            let p: Vec<f64> = x.iter().map(|c| c * s).collect();
            let hv = spec.h.value(&p);
            if hv > 0.0 && hv < width {
                out.push(p);
                break;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FunctionOfHReport {
    pub is_function: bool,
    /// Lipschitz estimate of `f = fbar(h)`, from bin means at least a tenth of the h-range apart.
    pub lipschitz: f64,
    pub bin_width: f64,
    /// Largest `f`-spread inside one bin.
    pub worst_spread: f64,
    pub occupied_bins: usize,
}

/// Bin test for `f = fbar(h)`: bins of width `10^{-3}` of the sampled h-range,
/// failing when a bin's spread exceeds `10^{-6} + L bin_width`.
pub fn is_function_of_h(
    spec: &DomainSpec,
    f: impl Fn(&[f64]) -> f64,
    samples: &[Vec<f64>],
) -> Result<FunctionOfHReport> {
    if samples.len() < 2 {
        return Err(Error::Domain("function-of-h test needs at least two samples".into()));
    }
    let hs: Vec<f64> = samples.iter().map(|x| spec.h.value(x)).collect();
    let fs: Vec<f64> = samples.iter().map(|x| f(x)).collect();
    ensure_finite("h samples", &hs)?;
    ensure_finite("f samples", &fs)?;
    let lo = hs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = hs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    const BINS: usize = 1000;
    let bin_width = if range > 0.0 { range / BINS as f64 } else { 0.0 };
    let mut bins = vec![(f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize, 0.0); BINS];
    for (&h, &v) in hs.iter().zip(&fs) {
        let i = if range > 0.0 {
            (((h - lo) / bin_width) as usize).min(BINS - 1)
        } else {
            0
        };
        let b = &mut bins[i];
        b.0 = b.0.min(v);
        b.1 = b.1.max(v);
        b.2 += v;
        b.3 += 1;
        b.4 += h;
    }
    let occupied: Vec<(f64, f64, f64)> = bins
        .iter()
        .filter(|b| b.3 > 0)
        .map(|b| (b.4 / b.3 as f64, b.2 / b.3 as f64, b.1 - b.0))
        .collect();
    let mut lipschitz: f64 = 0.0;
    for (i, a) in occupied.iter().enumerate() {
        for b in &occupied[i + 1..] {
            let dh = (b.0 - a.0).abs();
            if dh >= 0.1 * range {
                lipschitz = lipschitz.max((b.1 - a.1).abs() / dh);
            }
        }
    }
    let worst_spread = occupied.iter().map(|b| b.2).fold(0.0, f64::max);
    Ok(FunctionOfHReport {
        is_function: worst_spread <= 1e-6 + lipschitz * bin_width,
        lipschitz,
        bin_width,
        worst_spread,
        occupied_bins: occupied.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DomainPath {
    pub n: usize,
    pub dt: f64,
    pub seed: u64,
    /// Row-major states, `steps + 1` rows.
    pub states: Vec<f64>,
    /// Steps shortened by backtracking.
    pub backtracked: usize,
}

impl DomainPath {
    pub fn len(&self) -> usize {
        self.states.len() / self.n
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.n..(k + 1) * self.n]
    }

    pub fn final_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }
}

/// One Euler step with backtracking along the step direction into `phi >= 0`.
/// Returns whether the step was shortened.
pub fn domain_step(spec: &DomainSpec, x: &[f64], dt: f64, db: &[f64], out: &mut [f64]) -> Result<bool> {
    let hv = spec.h.value(x).max(0.0);
    let b = spec.drift(x);
    let step: Vec<f64> = if hv > 0.0 {
        let noise = spec.sigma.value(x) * DVector::from_column_slice(db);
        let root = hv.sqrt();
        (0..spec.n).map(|i| root * noise[i] + b[i] * dt).collect()
    } else {
        b.iter().map(|c| c * dt).collect()
    };
    for i in 0..spec.n {
        out[i] = x[i] + step[i];
    }
    if spec.phi.value(out) >= 0.0 {
        return Ok(false);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..BACKTRACK_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        for i in 0..spec.n {
            out[i] = x[i] + mid * step[i];
        }
        if spec.phi.value(out) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    for i in 0..spec.n {
        out[i] = x[i] + lo * step[i];
    }
    if spec.phi.value(out) < -PHI_SLACK {
        return Err(Error::StepRejected(format!(
            "backtracking left phi = {}",
            spec.phi.value(out)
        )));
    }
    Ok(true)
}

/// Euler path of the domain SDE from `x0` with an arbitrary increment source.
pub fn simulate_domain_with(
    spec: &DomainSpec,
    x0: &[f64],
    horizon: f64,
    dt: f64,
    seed: u64,
    mut increments: impl FnMut(&mut [f64]),
) -> Result<DomainPath> {
    if x0.len() != spec.n {
        return Err(Error::Domain(format!("initial state must be a {}-vector", spec.n)));
    }
    ensure_finite("initial state", x0)?;
    if spec.phi.value(x0) < -PHI_SLACK {
        return Err(Error::Domain("initial state lies outside the closed domain".into()));
    }
    if !(horizon > 0.0 && dt > 0.0) {
        return Err(Error::Numeric("horizon and time step must be positive".into()));
    }
    let steps = step_count(horizon, dt);
    let mut states = Vec::with_capacity((steps + 1) * spec.n);
    states.extend_from_slice(x0);
    let mut x = x0.to_vec();
    let mut next = vec![0.0; spec.n];
    let mut db = vec![0.0; spec.n];
    let mut backtracked = 0;
    for k in 0..steps {
        increments(&mut db);
        if domain_step(spec, &x, dt, &db, &mut next)? {
            backtracked += 1;
        }
        if next.iter().any(|c| !c.is_finite()) {
            return Err(Error::Numeric(format!("non-finite state at step {}", k + 1)));
        }
        std::mem::swap(&mut x, &mut next);
        states.extend_from_slice(&x);
    }
    Ok(DomainPath {
        n: spec.n,
        dt,
        seed,
        states,
        backtracked,
    })
}

pub fn simulate_domain(spec: &DomainSpec, x0: &[f64], horizon: f64, dt: f64, seed: u64) -> Result<DomainPath> {
    let mut rng = seeding::stream(seed);
    simulate_domain_with(spec, x0, horizon, dt, seed, |db| {
        seeding::fill_gaussian(&mut rng, dt, db)
    })
}

/// `X_T` without storing the path.
pub fn terminal_domain(spec: &DomainSpec, x0: &[f64], horizon: f64, dt: f64, seed: u64) -> Result<Vec<f64>> {
    let mut rng = seeding::stream(seed);
    let mut x = x0.to_vec();
    let mut next = vec![0.0; spec.n];
    let mut db = vec![0.0; spec.n];
    for _ in 0..step_count(horizon, dt) {
        seeding::fill_gaussian(&mut rng, dt, &mut db);
        domain_step(spec, &x, dt, &db, &mut next)?;
        std::mem::swap(&mut x, &mut next);
    }
    Ok(x)
}
