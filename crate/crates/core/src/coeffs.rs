//! Scalar coefficient functions on `[0, 1]` and the ball model built from them.
//!
//! Coefficients are restricted to constant, affine and piecewise-linear
//! representations. All three have exact Lipschitz constants and exact minima,
//! which is what the positivity and shell-radius certificates rely on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A strictly positive Lipschitz function on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CoeffSpec", into = "CoeffSpec")]
pub enum CoeffFn {
    Constant(f64),
    Affine {
        intercept: f64,
        slope: f64,
    },
    /// Breakpoints `(u_i, f_i)`, strictly increasing in `u`, from `u = 0` to `u = 1`.
    Table(Vec<(f64, f64)>),
}

impl CoeffFn {
    pub fn constant(value: f64) -> Result<Self> {
        Self::Constant(value).validated()
    }

    pub fn affine(intercept: f64, slope: f64) -> Result<Self> {
        Self::Affine { intercept, slope }.validated()
    }

    pub fn table(points: Vec<(f64, f64)>) -> Result<Self> {
        Self::Table(points).validated()
    }

    fn validated(self) -> Result<Self> {
        match &self {
            Self::Constant(c) => {
                if !(c.is_finite() && *c > 0.0) {
                    return Err(Error::InvalidModel(format!("constant {c} is not positive")));
                }
            }
            Self::Affine { intercept, slope } => {
                if !(intercept.is_finite() && slope.is_finite()) {
                    return Err(Error::InvalidModel("affine parameters must be finite".into()));
                }
                if *intercept <= 0.0 || intercept + slope <= 0.0 {
                    return Err(Error::InvalidModel(format!(
                        "affine {intercept} + {slope}u is not positive on [0, 1]"
                    )));
                }
            }
            Self::Table(points) => {
                if points.len() < 2 {
                    return Err(Error::InvalidModel("table needs at least two breakpoints".into()));
                }
                if points[0].0 != 0.0 || points[points.len() - 1].0 != 1.0 {
                    return Err(Error::InvalidModel(
                        "table breakpoints must start at 0 and end at 1".into(),
                    ));
                }
                if points.windows(2).any(|w| !(w[1].0 > w[0].0)) {
                    return Err(Error::InvalidModel(
                        "table breakpoints must be strictly increasing".into(),
                    ));
                }
                if points
                    .iter()
                    .any(|&(u, f)| !(u.is_finite() && f.is_finite() && f > 0.0))
                {
                    return Err(Error::InvalidModel("table values must be finite and positive".into()));
                }
            }
        }
        Ok(self)
    }

    /// `f(u)` for `u` in `[0, 1]`.
    pub fn evaluate(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::Domain(format!("coefficient argument {u} outside [0, 1]")));
        }
        Ok(self.eval(u))
    }

    /// Unchecked evaluation; arguments are clamped into `[0, 1]`.
    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match self {
            Self::Constant(c) => *c,
            Self::Affine { intercept, slope } => intercept + slope * u,
            Self::Table(points) => {
                let i = points.partition_point(|&(x, _)| x <= u);
                if i == 0 {
                    return points[0].1;
                }
                if i == points.len() {
                    return points[points.len() - 1].1;
                }
                let (u0, f0) = points[i - 1];
                let (u1, f1) = points[i];
                if u == u0 {
                    return f0;
                }
                f0 + (f1 - f0) * (u - u0) / (u1 - u0)
            }
        }
    }

    /// Smallest `L` with `|f(u) - f(v)| <= L |u - v|` for this representation.
    pub fn lipschitz_constant(&self) -> f64 {
        match self {
            Self::Constant(_) => 0.0,
            Self::Affine { slope, .. } => slope.abs(),
            Self::Table(points) => points
                .windows(2)
                .map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs())
                .fold(0.0, f64::max),
        }
    }

    /// Points where the representation may change slope, always including 0 and 1.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Self::Table(points) => points.iter().map(|p| p.0).collect(),
            _ => vec![0.0, 1.0],
        }
    }

    /// Exact maximum over `[0, 1]` (attained at a breakpoint).
    pub fn max_value(&self) -> f64 {
        self.breakpoints()
            .into_iter()
            .map(|u| self.eval(u))
            .fold(f64::MIN, f64::max)
    }

    /// Exact minimum over `[0, 1]`.
    pub fn min_value(&self) -> f64 {
        self.breakpoints()
            .into_iter()
            .map(|u| self.eval(u))
            .fold(f64::MAX, f64::min)
    }

    /// `(intercept, slope)` of the linear piece containing `[lo, hi]`.
    fn piece(&self, lo: f64, hi: f64) -> (f64, f64) {
        let (a, b) = (self.eval(lo), self.eval(hi));
        if hi > lo {
            let slope = (b - a) / (hi - lo);
            (a - slope * lo, slope)
        } else {
            (a, 0.0)
        }
    }
}

impl std::fmt::Display for CoeffFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Constant(c) => write!(f, "constant({c})"),
            Self::Affine { intercept, slope } => write!(f, "affine({intercept},{slope})"),
            Self::Table(points) => {
                write!(f, "table(")?;
                for (i, (u, v)) in points.iter().enumerate() {
                    if i > 0 {
                        write!(f, " ")?;
                    }
                    write!(f, "{u}:{v}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// Serialized form: a kind tag plus parameters, breakpoints as `"u:value"` strings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum CoeffSpec {
    Constant { value: f64 },
    Affine { intercept: f64, slope: f64 },
    Table { points: Vec<String> },
}

impl TryFrom<CoeffSpec> for CoeffFn {
    type Error = Error;

    fn try_from(spec: CoeffSpec) -> Result<Self> {
        match spec {
            CoeffSpec::Constant { value } => CoeffFn::constant(value),
            CoeffSpec::Affine { intercept, slope } => CoeffFn::affine(intercept, slope),
            CoeffSpec::Table { points } => {
                let parsed = points.iter().map(|s| parse_breakpoint(s)).collect::<Result<Vec<_>>>()?;
                CoeffFn::table(parsed)
            }
        }
    }
}

impl From<CoeffFn> for CoeffSpec {
    fn from(f: CoeffFn) -> Self {
        match f {
            CoeffFn::Constant(value) => CoeffSpec::Constant { value },
            CoeffFn::Affine { intercept, slope } => CoeffSpec::Affine { intercept, slope },
            CoeffFn::Table(points) => CoeffSpec::Table {
                points: points.iter().map(|(u, v)| format!("{u}:{v}")).collect(),
            },
        }
    }
}

fn parse_breakpoint(s: &str) -> Result<(f64, f64)> {
    let (u, v) = s
        .split_once(':')
        .ok_or_else(|| Error::Parse(format!("breakpoint {s:?} is not of the form u:value")))?;
    let parse = |t: &str| {
        t.trim()
            .parse::<f64>()
            .map_err(|_| Error::Parse(format!("bad number {t:?} in breakpoint {s:?}")))
    };
    Ok((parse(u)?, parse(v)?))
}

/// Full description of ball dynamics
/// `dX = (1 - |X|^2)^r gamma(|X|) dB - g(|X|) X dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallModel {
    pub n: usize,
    pub r: f64,
    pub gamma: CoeffFn,
    pub g: CoeffFn,
}

impl BallModel {
    pub fn new(n: usize, r: f64, gamma: CoeffFn, g: CoeffFn) -> Result<Self> {
        let model = Self { n, r, gamma, g };
        model.validate()?;
        Ok(model)
    }

    /// Constant coefficients `gamma`, `g` with the square-root exponent.
    pub fn constant(n: usize, gamma: f64, g: f64) -> Result<Self> {
        Self::new(n, 0.5, CoeffFn::constant(gamma)?, CoeffFn::constant(g)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidModel(format!(
                "dimension n = {} must be at least 2",
                self.n
            )));
        }
        if !(self.r > 0.0 && self.r <= 1.0) {
            return Err(Error::InvalidModel(format!(
                "exponent r = {} must lie in (0, 1]",
                self.r
            )));
        }
        self.gamma.clone().validated()?;
        self.g.clone().validated()?;
        Ok(())
    }

    /// `g(1) / gamma(1)^2`, the boundary ratio that governs the coupling threshold.
    pub fn boundary_ratio(&self) -> f64 {
        self.g.eval(1.0) / self.gamma.eval(1.0).powi(2)
    }
}

impl std::fmt::Display for BallModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "n={} r={} gamma={} g={}", self.n, self.r, self.gamma, self.g)
    }
}

/// Minimum of `g + (p - 1) gamma^2` over `[lo, hi]`, exact for piecewise-linear inputs.
pub(crate) fn min_shifted_drift(gamma: &CoeffFn, g: &CoeffFn, p: f64, lo: f64, hi: f64) -> f64 {
    let mut knots: Vec<f64> = gamma
        .breakpoints()
        .into_iter()
        .chain(g.breakpoints())
        .filter(|&u| u > lo && u < hi)
        .collect();
    knots.push(lo);
    knots.push(hi);
    knots.sort_by(f64::total_cmp);
    knots.dedup();

    let value = |u: f64| g.eval(u) + (p - 1.0) * gamma.eval(u).powi(2);
    let mut best = f64::INFINITY;
    for w in knots.windows(2) {
        let (a, b) = (w[0], w[1]);
        best = best.min(value(a)).min(value(b));
        // On a segment: g = g0 + g1 u, gamma = c0 + c1 u, so the combination is
        // quadratic with leading coefficient (p - 1) c1^2 <= 0: no interior minimum
        // unless it is linear, in which case the endpoints suffice as well.
        let (_, c1) = gamma.piece(a, b);
        let lead = (p - 1.0) * c1 * c1;
        if lead > 0.0 {
            let (c0, _) = gamma.piece(a, b);
            let (_, g1) = g.piece(a, b);
            let vertex = -(g1 + 2.0 * (p - 1.0) * c0 * c1) / (2.0 * lead);
            if vertex > a && vertex < b {
                best = best.min(value(vertex));
            }
        }
    }
    best
}

/// Largest `eps` in `(0, 1/2]` with `p > 1 - g/gamma^2` on the whole boundary shell of
/// width `eps`. `shell(eps)` maps a width to the closed argument interval it covers.
pub(crate) fn shell_width(
    gamma: &CoeffFn,
    g: &CoeffFn,
    p: f64,
    boundary_arg: f64,
    shell: impl Fn(f64) -> (f64, f64),
) -> Result<f64> {
    let at_boundary = g.eval(boundary_arg) + (p - 1.0) * gamma.eval(boundary_arg).powi(2);
    if !(at_boundary > 0.0) {
        return Err(Error::Infeasible(format!(
            "p = {p} does not exceed 1 - g/gamma^2 = {} at the boundary",
            1.0 - g.eval(boundary_arg) / gamma.eval(boundary_arg).powi(2)
        )));
    }
    let holds = |eps: f64| {
        let (lo, hi) = shell(eps);
        min_shifted_drift(gamma, g, p, lo, hi) > 0.0
    };
    if holds(0.5) {
        return Ok(0.5);
    }
    let (mut lo, mut hi) = (0.0, 0.5);
    for _ in 0..64 {
        let mid = 0.5 * (lo + hi);
        if holds(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if lo > 0.0 {
        Ok(lo)
    } else {
        Err(Error::Infeasible(format!("no positive shell width found for p = {p}")))
    }
}

/// Largest `eps <= 1/2` such that `p > 1 - g(u)/gamma(u)^2` for every `u` in `(1 - eps, 1]`.
pub fn epsilon_for_p(model: &BallModel, p: f64) -> Result<f64> {
    shell_width(&model.gamma, &model.g, p, 1.0, |eps| (1.0 - eps, 1.0))
}

/// Grid infimum of `g/gamma^2` over `[lo, hi]`, breakpoints included.
pub fn ratio_infimum(gamma: &CoeffFn, g: &CoeffFn, lo: f64, hi: f64, points: usize) -> f64 {
    let ratio = |u: f64| g.eval(u) / gamma.eval(u).powi(2);
    let grid = (0..=points).map(|i| lo + (hi - lo) * i as f64 / points as f64);
    let knots = gamma
        .breakpoints()
        .into_iter()
        .chain(g.breakpoints())
        .filter(|&u| u >= lo && u <= hi);
    grid.chain(knots).map(ratio).fold(f64::INFINITY, f64::min)
}
