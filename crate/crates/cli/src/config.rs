//! Experiment configuration: a TOML file with `model`, `numeric` and `output`
//! blocks plus one optional block per experiment kind.

use std::fmt;
use std::path::{Path, PathBuf};

use degen_core::{BallModel, CoeffFn};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Simulate,
    Couple,
    Sweep,
    Classify,
    VerifyInequalities,
    Occupation,
    TransformCheck,
    Domain,
    PaperTables,
}

impl Kind {
    pub const ALL: [Kind; 9] = [
        Kind::Simulate,
        Kind::Couple,
        Kind::Sweep,
        Kind::Classify,
        Kind::VerifyInequalities,
        Kind::Occupation,
        Kind::TransformCheck,
        Kind::Domain,
        Kind::PaperTables,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Simulate => "simulate",
            Kind::Couple => "couple",
            Kind::Sweep => "sweep",
            Kind::Classify => "classify",
            Kind::VerifyInequalities => "verify-inequalities",
            Kind::Occupation => "occupation",
            Kind::TransformCheck => "transform-check",
            Kind::Domain => "domain",
            Kind::PaperTables => "paper-tables",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }

    fn default_replicas(self) -> usize {
        match self {
            Kind::TransformCheck => 100_000,
            Kind::Occupation => 1000,
            Kind::Sweep => 200,
            Kind::Simulate | Kind::Couple | Kind::Domain => 1,
            _ => 1,
        }
    }

    fn default_dt(self) -> f64 {
        match self {
            Kind::Couple | Kind::Sweep | Kind::Occupation => 1e-5,
            _ => 1e-3,
        }
    }

    fn default_horizon(self) -> f64 {
        match self {
            Kind::Couple | Kind::Sweep => 0.05,
            _ => 1.0,
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericBlock {
    #[serde(rename = "T")]
    pub horizon: Option<f64>,
    pub dt: Option<f64>,
    pub replicas: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateBlock {
    pub x0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoupleBlock {
    pub x0: Option<Vec<f64>>,
    pub x0_tilde: Option<Vec<f64>>,
    pub gap: Option<f64>,
    pub p: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    pub cs: Option<Vec<f64>>,
    pub gap: Option<f64>,
    pub p: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyBlock {
    pub rs: Option<Vec<f64>>,
    pub cs: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InequalityBlock {
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OccupationBlock {
    pub deltas: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformBlock {
    pub ks_threshold: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainBlock {
    /// `sphere`, `ellipsoid` or `expression`.
    pub shape: Option<String>,
    pub axes: Option<Vec<f64>>,
    pub phi: Option<String>,
    pub h: Option<String>,
    /// Scalar multiple of the identity for `ellipsoid` and `expression` shapes.
    pub sigma: Option<f64>,
    /// `radial`, `contracting`, `gradient`, or one expression per coordinate.
    pub drift: Option<DriftSpec>,
    pub x0: Option<Vec<f64>>,
    pub samples: Option<usize>,
    pub neighborhood: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DriftSpec {
    Named(String),
    Expressions(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<String>,
    #[serde(default = "default_model")]
    pub model: BallModel,
    #[serde(default)]
    pub numeric: NumericBlock,
    #[serde(default)]
    pub output: OutputBlock,
    #[serde(default)]
    pub simulate: SimulateBlock,
    #[serde(default)]
    pub couple: CoupleBlock,
    #[serde(default)]
    pub sweep: SweepBlock,
    #[serde(default)]
    pub classify: ClassifyBlock,
    #[serde(default)]
    pub inequalities: InequalityBlock,
    #[serde(default)]
    pub occupation: OccupationBlock,
    #[serde(default)]
    pub transform: TransformBlock,
    #[serde(default)]
    pub domain: DomainBlock,
}

fn default_model() -> BallModel {
    BallModel::constant(2, std::f64::consts::SQRT_2, 1.0).expect("default model is valid")
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config parses")
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError(format!("config: {}", e.to_string().trim_end())))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Fills every default for `kind` and validates; the result is what the manifest records.
    pub fn resolve(mut self, kind: Kind) -> Result<Self, ConfigError> {
        if let Some(name) = &self.experiment {
            match Kind::parse(name) {
                None => return Err(ConfigError(format!("experiment: unknown experiment kind {name:?}"))),
                Some(k) if k != kind => {
                    return Err(ConfigError(format!(
                        "experiment: config declares {name:?} but the command is {kind}"
                    )))
                }
                Some(_) => {}
            }
        }
        self.experiment = Some(kind.as_str().to_string());
        self.model.validate().map_err(|e| ConfigError(format!("model: {e}")))?;

        let num = &mut self.numeric;
        let horizon = *num.horizon.get_or_insert(kind.default_horizon());
        let dt = *num.dt.get_or_insert(kind.default_dt());
        let replicas = *num.replicas.get_or_insert(kind.default_replicas());
        num.seed.get_or_insert(1);
        positive("numeric.T", horizon)?;
        positive("numeric.dt", dt)?;
        if dt > horizon {
            return Err(ConfigError("numeric.dt must not exceed numeric.T".into()));
        }
        if replicas == 0 {
            return Err(ConfigError("numeric.replicas must be positive".into()));
        }
        self.output.dir.get_or_insert_with(|| PathBuf::from("out"));

        let n = self.model.n;
        match kind {
            Kind::Simulate => {
                let x0 = self.simulate.x0.get_or_insert_with(|| north_pole(n));
                in_ball("simulate.x0", x0, n)?;
            }
            Kind::Couple => {
                let gap = *self.couple.gap.get_or_insert(1e-3);
                if !(gap > 0.0 && gap < 2.0) {
                    return Err(ConfigError("couple.gap must lie in (0, 2)".into()));
                }
                let (a, b) = degen_core::coupling::boundary_pair(n, gap);
                let x0 = self.couple.x0.get_or_insert(a);
                in_ball("couple.x0", x0, n)?;
                let xt = self.couple.x0_tilde.get_or_insert(b);
                in_ball("couple.x0_tilde", xt, n)?;
                let p = *self.couple.p.get_or_insert(degen_core::coupling::optimal_p().0);
                exponent("couple.p", p)?;
                half_exponent(&self.model)?;
            }
            Kind::Sweep => {
                let cs = self
                    .sweep
                    .cs
                    .get_or_insert_with(|| vec![0.3, 0.5, 0.7, 2.0 * (std::f64::consts::SQRT_2 - 1.0), 1.0, 1.2, 1.5]);
                if cs.is_empty() {
                    return Err(ConfigError("sweep.cs must not be empty".into()));
                }
                for &c in cs.iter() {
                    positive("sweep.cs", c)?;
                }
                let gap = *self.sweep.gap.get_or_insert(1e-3);
                if !(gap > 0.0 && gap < 2.0) {
                    return Err(ConfigError("sweep.gap must lie in (0, 2)".into()));
                }
                if let Some(p) = self.sweep.p {
                    exponent("sweep.p", p)?;
                }
                half_exponent(&self.model)?;
            }
            Kind::Classify => {
                let rs = self.classify.rs.get_or_insert_with(|| vec![0.25, 0.5, 0.75, 1.0]);
                for &r in rs.iter() {
                    if !(r > 0.0 && r <= 1.0) {
                        return Err(ConfigError("classify.rs entries must lie in (0, 1]".into()));
                    }
                }
                let cs = self.classify.cs.get_or_insert_with(|| vec![0.5, 1.0, 1.9, 2.1, 3.0]);
                for &c in cs.iter() {
                    positive("classify.cs", c)?;
                }
            }
            Kind::VerifyInequalities | Kind::PaperTables => {
                let s = *self.inequalities.samples.get_or_insert(100_000);
                if s == 0 {
                    return Err(ConfigError("inequalities.samples must be positive".into()));
                }
                if kind == Kind::PaperTables {
                    self.classify.rs.get_or_insert_with(|| vec![0.25, 0.5, 0.75, 1.0]);
                    self.classify.cs.get_or_insert_with(|| vec![0.5, 1.0, 1.9, 2.1, 3.0]);
                }
            }
            Kind::Occupation => {
                let deltas = self.occupation.deltas.get_or_insert_with(|| vec![1e-3, 1e-2, 1e-1]);
                if deltas.len() < 2
                    || deltas
                        .windows(2)
                        .any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater))
                {
                    return Err(ConfigError(
                        "occupation.deltas must hold at least two increasing values".into(),
                    ));
                }
                for &d in deltas.iter() {
                    if !(d > 0.0 && d < 1.0) {
                        return Err(ConfigError("occupation.deltas entries must lie in (0, 1)".into()));
                    }
                }
            }
            Kind::TransformCheck => {
                // The chart reads coefficients as functions of V, the ball as functions of |x|.
                let constant = |f: &CoeffFn| matches!(f, CoeffFn::Constant(_));
                if !(constant(&self.model.gamma) && constant(&self.model.g)) {
                    return Err(ConfigError(
                        "model: transform-check compares simulators only for constant gamma and g".into(),
                    ));
                }
                let t = *self.transform.ks_threshold.get_or_insert(0.02);
                positive("transform.ks_threshold", t)?;
            }
            Kind::Domain => {
                let d = &mut self.domain;
                let shape = d.shape.get_or_insert_with(|| "sphere".into()).clone();
                match shape.as_str() {
                    "sphere" => {}
                    "ellipsoid" => {
                        let axes = d
                            .axes
                            .get_or_insert_with(|| (0..n).map(|i| if i == n - 1 { 2.0 } else { 1.0 }).collect());
                        if axes.len() != n
                            || axes
                                .iter()
                                .any(|a| a.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater))
                        {
                            return Err(ConfigError(format!("domain.axes must hold {n} positive values")));
                        }
                    }
                    "expression" => {
                        if d.phi.is_none() {
                            return Err(ConfigError("domain.phi is required for shape \"expression\"".into()));
                        }
                        d.h.get_or_insert_with(|| d.phi.clone().unwrap_or_default());
                    }
                    other => return Err(ConfigError(format!("domain.shape: unknown shape {other:?}"))),
                }
                if shape != "sphere" {
                    positive("domain.sigma", *d.sigma.get_or_insert(1.0))?;
                }
                let drift = d.drift.get_or_insert_with(|| {
                    DriftSpec::Named(if shape == "sphere" { "radial" } else { "contracting" }.into())
                });
                match drift {
                    DriftSpec::Named(name) if ["radial", "contracting", "gradient"].contains(&name.as_str()) => {
                        if name == "radial" && shape != "sphere" {
                            return Err(ConfigError("domain.drift: \"radial\" needs shape \"sphere\"".into()));
                        }
                    }
                    DriftSpec::Named(name) => return Err(ConfigError(format!("domain.drift: unknown drift {name:?}"))),
                    DriftSpec::Expressions(parts) if parts.len() != n => {
                        return Err(ConfigError(format!("domain.drift needs {n} expressions")))
                    }
                    DriftSpec::Expressions(_) => {}
                }
                let x0 = d.x0.get_or_insert_with(|| vec![0.0; n]);
                if x0.len() != n {
                    return Err(ConfigError(format!("domain.x0 must have {n} entries")));
                }
                if *d.samples.get_or_insert(2000) < 2 {
                    return Err(ConfigError("domain.samples must be at least 2".into()));
                }
                if let Some(w) = d.neighborhood {
                    positive("domain.neighborhood", w)?;
                }
            }
        }
        Ok(self)
    }

    pub fn horizon(&self) -> f64 {
        self.numeric.horizon.expect("resolved")
    }

    pub fn dt(&self) -> f64 {
        self.numeric.dt.expect("resolved")
    }

    pub fn replicas(&self) -> usize {
        self.numeric.replicas.expect("resolved")
    }

    pub fn seed(&self) -> u64 {
        self.numeric.seed.expect("resolved")
    }

    pub fn out_dir(&self) -> &Path {
        self.output.dir.as_deref().expect("resolved")
    }

    /// Same model with `g` replaced by the constant `c` and `r` by `r`.
    pub fn model_with(&self, r: f64, c: f64) -> Result<BallModel, ConfigError> {
        let g = CoeffFn::constant(c).map_err(|e| ConfigError(format!("model.g: {e}")))?;
        BallModel::new(self.model.n, r, self.model.gamma.clone(), g).map_err(|e| ConfigError(format!("model: {e}")))
    }
}

fn north_pole(n: usize) -> Vec<f64> {
    let mut x = vec![0.0; n];
    x[n - 1] = 1.0;
    x
}

fn positive(key: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ConfigError(format!("{key} must be positive and finite, got {v}")))
    }
}

fn exponent(key: &str, p: f64) -> Result<(), ConfigError> {
    if p > 0.5 && p < 1.0 {
        Ok(())
    } else {
        Err(ConfigError(format!("{key} must lie in (1/2, 1), got {p}")))
    }
}

fn half_exponent(model: &BallModel) -> Result<(), ConfigError> {
    if model.r == 0.5 {
        Ok(())
    } else {
        Err(ConfigError(format!(
            "model.r must be 0.5 for coupling, got {}",
            model.r
        )))
    }
}

fn in_ball(key: &str, x: &[f64], n: usize) -> Result<(), ConfigError> {
    if x.len() != n {
        return Err(ConfigError(format!("{key} must have {n} entries")));
    }
    if x.iter().any(|c| !c.is_finite()) || x.iter().map(|c| c * c).sum::<f64>() > 1.0 + 1e-12 {
        return Err(ConfigError(format!("{key} must lie in the closed unit ball")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_resolves_for_every_kind() {
        for kind in Kind::ALL {
            let cfg = ExperimentConfig::default().resolve(kind).unwrap();
            assert_eq!(cfg.experiment.as_deref(), Some(kind.as_str()));
        }
    }

    #[test]
    fn errors_name_the_key() {
        let e = ExperimentConfig::from_toml("[numeric]\ndtt = 1e-3\n").unwrap_err();
        assert!(e.0.contains("dtt"), "{e}");
        let e = ExperimentConfig::from_toml("[numeric]\ndt = -1.0\n")
            .unwrap()
            .resolve(Kind::Simulate)
            .unwrap_err();
        assert!(e.0.contains("numeric.dt"), "{e}");
        let e = ExperimentConfig::from_toml("experiment = \"bogus\"\n")
            .unwrap()
            .resolve(Kind::Simulate)
            .unwrap_err();
        assert!(e.0.contains("experiment"), "{e}");
        let e = ExperimentConfig::from_toml("[model]\nn = 1\nr = 0.5\ngamma = { kind = \"constant\", value = 1.0 }\ng = { kind = \"constant\", value = 1.0 }\n")
            .unwrap()
            .resolve(Kind::Simulate)
            .unwrap_err();
        assert!(e.0.starts_with("model"), "{e}");
    }

    #[test]
    fn coefficient_tables_parse() {
        let cfg = ExperimentConfig::from_toml(
            "[model]\nn = 3\nr = 0.5\ngamma = { kind = \"table\", points = [\"0:1\", \"1:2\"] }\ng = { kind = \"affine\", intercept = 1.0, slope = 0.5 }\n",
        )
        .unwrap();
        assert_eq!(cfg.model.gamma.eval(0.5), 1.5);
        assert_eq!(cfg.model.g.eval(1.0), 1.5);
    }
}
