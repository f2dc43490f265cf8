//! Flat `section.key = value` experiment configuration.
//!
//! ```text
//! # Default setup
//! model.dim = 1
//! model.s0 = 8
//! model.mu = 0
//! model.sigma = 1
//! model.horizon = 1
//! payoff.kind = basket_call
//! payoff.a = 1
//! payoff.b = -8
//! impact.a_risk = 0.1, 0.25, 0.5, 1, 2, 4
//! impact.lambda = 0.4, 0.2, 0.1, 0.05
//! numerics.seed = 42
//! ```
//!
//! Lists are comma separated, `model.sigma` is row-major and `eval.points`
//! separates points with `;`. Every key has a fixed section; unknown keys,
//! duplicates and malformed values are rejected with the offending line.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use indiff::market::named_generic_payoff;
use indiff::quadrature::{build_gauss_hermite, default_pricing_rule};
use indiff::{BachelierModel, Payoff, Pricer, QuadratureRule, SpdMatrix};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown key '{key}'")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key '{key}'")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: key '{key}': {message}")]
    BadValue { line: usize, key: String, message: String },
    #[error("missing required key '{0}'")]
    Missing(String),
    #[error("key '{key}': {message}")]
    Invalid { key: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayoffKind {
    BasketCall,
    Zero,
    Generic,
}

impl PayoffKind {
    fn as_str(self) -> &'static str {
        match self {
            Self::BasketCall => "basket_call",
            Self::Zero => "zero",
            Self::Generic => "generic",
        }
    }
}

/// `auto` or an explicit value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Auto<T> {
    Auto,
    Value(T),
}

impl<T: std::fmt::Display> std::fmt::Display for Auto<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Auto::Auto => f.write_str("auto"),
            Auto::Value(v) => v.fmt(f),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBlock {
    pub dim: usize,
    pub s0: Vec<f64>,
    pub mu: Vec<f64>,
    /// Row-major `d×d`.
    pub sigma: Vec<f64>,
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PayoffBlock {
    pub kind: PayoffKind,
    pub a: Vec<f64>,
    pub b: f64,
    /// Name understood by [`named_generic_payoff`] when `kind = generic`.
    pub name: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImpactBlock {
    pub a_risk: Vec<f64>,
    pub lambda: Vec<f64>,
    pub phi0: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NumericsBlock {
    pub n_paths: usize,
    pub n_steps: Auto<usize>,
    /// Gauss-Hermite nodes per axis for generic payoffs.
    pub quadrature_m: Auto<usize>,
    pub fd_step: Auto<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputBlock {
    pub csv: Option<String>,
    pub precision: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalBlock {
    pub times: Vec<f64>,
    /// Empty means `s0` only.
    pub points: Vec<Vec<f64>>,
    pub dual_specs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelBlock,
    pub payoff: PayoffBlock,
    pub impact: ImpactBlock,
    pub numerics: NumericsBlock,
    pub output: OutputBlock,
    pub eval: EvalBlock,
}

const KEYS: &[&str] = &[
    "model.dim",
    "model.s0",
    "model.mu",
    "model.sigma",
    "model.horizon",
    "payoff.kind",
    "payoff.a",
    "payoff.b",
    "payoff.name",
    "impact.a_risk",
    "impact.lambda",
    "impact.phi0",
    "numerics.n_paths",
    "numerics.n_steps",
    "numerics.quadrature_m",
    "numerics.fd_step",
    "numerics.seed",
    "output.csv",
    "output.precision",
    "eval.times",
    "eval.points",
    "eval.dual_specs",
];

struct RawEntries {
    values: BTreeMap<&'static str, (usize, String)>,
}

impl RawEntries {
    fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::Syntax { line, message: format!("expected 'key = value', found '{content}'") });
            };
            let key = key.trim();
            let Some(known) = KEYS.iter().find(|k| **k == key) else {
                return Err(ConfigError::UnknownKey { line, key: key.to_string() });
            };
            if values.insert(*known, (line, value.trim().to_string())).is_some() {
                return Err(ConfigError::DuplicateKey { line, key: key.to_string() });
            }
        }
        Ok(Self { values })
    }

    fn get(&self, key: &'static str) -> Option<&(usize, String)> {
        self.values.get(key)
    }

    fn required(&self, key: &'static str) -> Result<&(usize, String), ConfigError> {
        self.get(key).ok_or_else(|| ConfigError::Missing(key.to_string()))
    }

    fn parse_with<T>(&self, key: &'static str, f: impl Fn(&str) -> Result<T, String>) -> Result<Option<T>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some((line, v)) => f(v).map(Some).map_err(|message| ConfigError::BadValue { line: *line, key: key.to_string(), message }),
        }
    }

    fn parse_required<T>(&self, key: &'static str, f: impl Fn(&str) -> Result<T, String>) -> Result<T, ConfigError> {
        let (line, v) = self.required(key)?;
        f(v).map_err(|message| ConfigError::BadValue { line: *line, key: key.to_string(), message })
    }
}

fn real(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("'{}' is not a number", s.trim()))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("'{}' is not finite", s.trim()))
    }
}

fn reals(s: &str) -> Result<Vec<f64>, String> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(real).collect()
}

fn count(s: &str) -> Result<usize, String> {
    s.trim().parse().map_err(|_| format!("'{}' is not a non-negative integer", s.trim()))
}

fn auto_or<T>(f: impl Fn(&str) -> Result<T, String>) -> impl Fn(&str) -> Result<Auto<T>, String> {
    move |s| if s.trim() == "auto" { Ok(Auto::Auto) } else { f(s).map(Auto::Value) }
}

fn points(s: &str) -> Result<Vec<Vec<f64>>, String> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(';').map(reals).collect()
}

fn names(s: &str) -> Result<Vec<String>, String> {
    let out: Vec<String> = s.split(',').map(|n| n.trim().to_string()).filter(|n| !n.is_empty()).collect();
    if out.is_empty() {
        Err("expected at least one entry".into())
    } else {
        Ok(out)
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.to_string(), message: message.into() }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let raw = RawEntries::parse(text)?;
        let dim = raw.parse_required("model.dim", count)?;
        let zeros = vec![0.0; dim];
        let model = ModelBlock {
            dim,
            s0: raw.parse_required("model.s0", reals)?,
            mu: raw.parse_with("model.mu", reals)?.unwrap_or_else(|| zeros.clone()),
            sigma: raw.parse_required("model.sigma", reals)?,
            horizon: raw.parse_required("model.horizon", real)?,
        };
        let kind = raw.parse_required("payoff.kind", |s| match s {
            "basket_call" => Ok(PayoffKind::BasketCall),
            "zero" => Ok(PayoffKind::Zero),
            "generic" => Ok(PayoffKind::Generic),
            other => Err(format!("unknown payoff kind '{other}' (basket_call, zero, generic)")),
        })?;
        let payoff = PayoffBlock {
            kind,
            a: raw.parse_with("payoff.a", reals)?.unwrap_or_else(|| zeros.clone()),
            b: raw.parse_with("payoff.b", real)?.unwrap_or(0.0),
            name: raw.parse_with("payoff.name", |s| Ok(s.to_string()))?.unwrap_or_default(),
        };
        let impact = ImpactBlock {
            a_risk: raw.parse_required("impact.a_risk", reals)?,
            lambda: raw.parse_required("impact.lambda", reals)?,
            phi0: raw.parse_with("impact.phi0", reals)?.unwrap_or_else(|| zeros.clone()),
        };
        let numerics = NumericsBlock {
            n_paths: raw.parse_with("numerics.n_paths", count)?.unwrap_or(10_000),
            n_steps: raw.parse_with("numerics.n_steps", auto_or(count))?.unwrap_or(Auto::Auto),
            quadrature_m: raw.parse_with("numerics.quadrature_m", auto_or(count))?.unwrap_or(Auto::Auto),
            fd_step: raw.parse_with("numerics.fd_step", auto_or(real))?.unwrap_or(Auto::Auto),
            seed: raw.parse_required("numerics.seed", |s| s.parse::<u64>().map_err(|_| format!("'{s}' is not a u64 seed")))?,
        };
        let output = OutputBlock {
            csv: raw.parse_with("output.csv", |s| Ok(s.to_string()))?.filter(|s| !s.is_empty()),
            precision: raw.parse_with("output.precision", count)?.unwrap_or(9),
        };
        let eval = EvalBlock {
            times: raw.parse_with("eval.times", reals)?.unwrap_or_else(|| vec![0.0]),
            points: raw.parse_with("eval.points", points)?.unwrap_or_default(),
            dual_specs: raw.parse_with("eval.dual_specs", names)?.unwrap_or_else(|| vec!["zero".into(), "optimal".into()]),
        };
        let config = Self { model, payoff, impact, numerics, output, eval };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let d = self.model.dim;
        if d == 0 {
            return Err(invalid("model.dim", "must be ≥ 1"));
        }
        let check_len = |key: &str, v: &[f64], n: usize| {
            if v.len() == n {
                Ok(())
            } else {
                Err(invalid(key, format!("expected {n} entries, found {}", v.len())))
            }
        };
        check_len("model.s0", &self.model.s0, d)?;
        check_len("model.mu", &self.model.mu, d)?;
        check_len("model.sigma", &self.model.sigma, d * d)?;
        check_len("payoff.a", &self.payoff.a, d)?;
        check_len("impact.phi0", &self.impact.phi0, d)?;
        if !(self.model.horizon > 0.0) {
            return Err(invalid("model.horizon", "must be positive"));
        }
        if self.payoff.kind == PayoffKind::Generic && self.payoff.name.is_empty() {
            return Err(invalid("payoff.name", "required when payoff.kind = generic"));
        }
        for (key, list) in [("impact.a_risk", &self.impact.a_risk), ("impact.lambda", &self.impact.lambda)] {
            if list.is_empty() || list.iter().any(|v| !(*v > 0.0)) {
                return Err(invalid(key, "expected a non-empty list of positive numbers"));
            }
        }
        if self.numerics.n_paths < 2 {
            return Err(invalid("numerics.n_paths", "must be ≥ 2"));
        }
        if self.numerics.n_steps == Auto::Value(0) {
            return Err(invalid("numerics.n_steps", "must be ≥ 1"));
        }
        if let Auto::Value(m) = self.numerics.quadrature_m {
            if m == 0 {
                return Err(invalid("numerics.quadrature_m", "must be ≥ 1"));
            }
        }
        if let Auto::Value(h) = self.numerics.fd_step {
            if !(h > 0.0) {
                return Err(invalid("numerics.fd_step", "must be positive"));
            }
        }
        if !(1..=17).contains(&self.output.precision) {
            return Err(invalid("output.precision", "must lie in 1..=17"));
        }
        if self.eval.times.iter().any(|t| !(0.0..=self.model.horizon).contains(t)) {
            return Err(invalid("eval.times", "times must lie in [0, horizon]"));
        }
        if let Some(p) = self.eval.points.iter().find(|p| p.len() != d) {
            return Err(invalid("eval.points", format!("point {p:?} does not have {d} coordinates")));
        }
        for spec in &self.eval.dual_specs {
            parse_dual_spec(spec, d).map_err(|m| invalid("eval.dual_specs", m))?;
        }
        // surfaces NotSymmetric / NotPositiveDefinite and payoff-name errors at load
        self.model().map_err(|e| invalid("model.sigma", e.to_string()))?;
        self.payoff().map_err(|e| invalid("payoff", e.to_string()))?;
        Ok(())
    }

    /// Canonical text form; `parse(emit(c)) == c`.
    pub fn emit(&self) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        line("model.dim", self.model.dim.to_string());
        line("model.s0", join(&self.model.s0));
        line("model.mu", join(&self.model.mu));
        line("model.sigma", join(&self.model.sigma));
        line("model.horizon", self.model.horizon.to_string());
        line("payoff.kind", self.payoff.kind.as_str().to_string());
        line("payoff.a", join(&self.payoff.a));
        line("payoff.b", self.payoff.b.to_string());
        if !self.payoff.name.is_empty() {
            line("payoff.name", self.payoff.name.clone());
        }
        line("impact.a_risk", join(&self.impact.a_risk));
        line("impact.lambda", join(&self.impact.lambda));
        line("impact.phi0", join(&self.impact.phi0));
        line("numerics.n_paths", self.numerics.n_paths.to_string());
        line("numerics.n_steps", self.numerics.n_steps.to_string());
        line("numerics.quadrature_m", self.numerics.quadrature_m.to_string());
        line("numerics.fd_step", self.numerics.fd_step.to_string());
        line("numerics.seed", self.numerics.seed.to_string());
        if let Some(csv) = &self.output.csv {
            line("output.csv", csv.clone());
        }
        line("output.precision", self.output.precision.to_string());
        line("eval.times", join(&self.eval.times));
        line("eval.points", self.eval.points.iter().map(|p| join(p)).collect::<Vec<_>>().join("; "));
        line("eval.dual_specs", self.eval.dual_specs.join(", "));
        out
    }

    /// SHA-256 of the canonical form, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.emit().as_bytes()))
    }

    pub fn model(&self) -> indiff::Result<BachelierModel> {
        let d = self.model.dim;
        let rows: Vec<&[f64]> = self.model.sigma.chunks(d).collect();
        BachelierModel::new(self.model.s0.clone(), self.model.mu.clone(), SpdMatrix::from_rows(&rows)?, self.model.horizon)
    }

    pub fn payoff(&self) -> indiff::Result<Payoff> {
        match self.payoff.kind {
            PayoffKind::BasketCall => Ok(Payoff::basket_call(self.payoff.a.clone(), self.payoff.b)),
            PayoffKind::Zero => Ok(Payoff::zero(self.model.dim)),
            PayoffKind::Generic => named_generic_payoff(&self.payoff.name, self.model.dim, &self.payoff.a, self.payoff.b),
        }
    }

    pub fn pricing_rule(&self) -> indiff::Result<QuadratureRule> {
        match self.numerics.quadrature_m {
            Auto::Auto => default_pricing_rule(self.model.dim),
            Auto::Value(m) => build_gauss_hermite(m, self.model.dim),
        }
    }

    pub fn pricer(&self, a_risk: f64) -> indiff::Result<Pricer> {
        Pricer::new(a_risk, self.model()?, self.payoff()?, Arc::new(self.pricing_rule()?))
    }

    /// Evaluation points, defaulting to `s0`.
    pub fn eval_points(&self) -> Vec<Vec<f64>> {
        if self.eval.points.is_empty() {
            vec![self.model.s0.clone()]
        } else {
            self.eval.points.clone()
        }
    }
}

/// Dual spec names: `zero`, `optimal`, or `constant:y1:y2:…`.
#[derive(Debug, Clone, PartialEq)]
pub enum DualSpecName {
    Zero,
    Optimal,
    Constant(Vec<f64>),
}

pub fn parse_dual_spec(name: &str, dim: usize) -> Result<DualSpecName, String> {
    match name {
        "zero" => Ok(DualSpecName::Zero),
        "optimal" => Ok(DualSpecName::Optimal),
        other => {
            let Some(rest) = other.strip_prefix("constant:") else {
                return Err(format!("unknown dual spec '{other}' (zero, optimal, constant:y1:…)"));
            };
            let y = rest.split(':').map(real).collect::<Result<Vec<_>, _>>()?;
            if y.len() != dim {
                return Err(format!("constant spec '{other}' needs {dim} coordinates"));
            }
            Ok(DualSpecName::Constant(y))
        }
    }
}

/// One-asset at-the-money call over the A grid, with the Λ grid of the convergence study.
pub const DEFAULT_CONFIG: &str = "\
model.dim = 1
model.s0 = 8
model.mu = 0
model.sigma = 1
model.horizon = 1
payoff.kind = basket_call
payoff.a = 1
payoff.b = -8
impact.a_risk = 0.1, 0.25, 0.5, 1, 2, 4
impact.lambda = 0.4, 0.2, 0.1, 0.05
impact.phi0 = 0
numerics.n_paths = 100000
numerics.n_steps = auto
numerics.seed = 42
";

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_config_loads() {
        let c = ExperimentConfig::parse(DEFAULT_CONFIG).unwrap();
        assert_eq!(c.model.s0, vec![8.0]);
        assert_eq!(c.impact.lambda, vec![0.4, 0.2, 0.1, 0.05]);
        assert_eq!(c.numerics.n_steps, Auto::Auto);
        assert_eq!(c.output.precision, 9);
        assert_eq!(c.eval_points(), vec![vec![8.0]]);
    }

    #[test]
    fn diagnostics_name_line_and_key() {
        let bad = DEFAULT_CONFIG.replace("model.mu = 0", "model.nu = 0");
        assert_eq!(ExperimentConfig::parse(&bad), Err(ConfigError::UnknownKey { line: 3, key: "model.nu".into() }));
        let dup = format!("{DEFAULT_CONFIG}model.s0 = 9\n");
        assert!(matches!(ExperimentConfig::parse(&dup), Err(ConfigError::DuplicateKey { line: 15, .. })));
        let nan = DEFAULT_CONFIG.replace("model.s0 = 8", "model.s0 = x");
        assert!(matches!(ExperimentConfig::parse(&nan), Err(ConfigError::BadValue { line: 2, .. })));
        let missing = DEFAULT_CONFIG.replace("numerics.seed = 42\n", "");
        assert_eq!(ExperimentConfig::parse(&missing), Err(ConfigError::Missing("numerics.seed".into())));
        assert!(ExperimentConfig::parse("model.dim 1").is_err());
    }

    #[test]
    fn non_spd_sigma_is_rejected_at_load() {
        let text = DEFAULT_CONFIG.replace("model.dim = 1", "model.dim = 2").replace("model.s0 = 8", "model.s0 = 8, 8")
            .replace("model.mu = 0", "model.mu = 0, 0").replace("model.sigma = 1", "model.sigma = 1, 2, 2, 1")
            .replace("payoff.a = 1", "payoff.a = 1, 0").replace("impact.phi0 = 0", "impact.phi0 = 0, 0");
        let err = ExperimentConfig::parse(&text).unwrap_err();
        assert!(err.to_string().contains("positive definite"), "{err}");
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = format!("# header\n\n{}", DEFAULT_CONFIG.replace("model.s0 = 8", "model.s0 = 8   # initial price"));
        assert_eq!(ExperimentConfig::parse(&text).unwrap(), ExperimentConfig::parse(DEFAULT_CONFIG).unwrap());
    }

    #[test]
    fn dual_spec_names() {
        assert_eq!(parse_dual_spec("constant:0.5:-1", 2), Ok(DualSpecName::Constant(vec![0.5, -1.0])));
        assert!(parse_dual_spec("constant:0.5", 2).is_err());
        assert!(parse_dual_spec("best", 1).is_err());
    }

    proptest! {
        #[test]
        fn load_emit_load_is_idempotent(
            s0 in -10.0f64..10.0, sig in 0.1f64..3.0, b in -10.0f64..10.0, a_risk in 0.01f64..10.0,
            lambda in prop::collection::vec(0.01f64..1.0, 1..5), seed in any::<u64>(), paths in 2usize..100_000,
            steps in prop::option::of(1usize..5000), csv in prop::option::of("[a-z]{1,8}\\.csv"),
        ) {
            let mut text = DEFAULT_CONFIG
                .replace("model.s0 = 8", &format!("model.s0 = {s0}"))
                .replace("model.sigma = 1", &format!("model.sigma = {sig}"))
                .replace("payoff.b = -8", &format!("payoff.b = {b}"))
                .replace("impact.a_risk = 0.1, 0.25, 0.5, 1, 2, 4", &format!("impact.a_risk = {a_risk}"))
                .replace("impact.lambda = 0.4, 0.2, 0.1, 0.05", &format!("impact.lambda = {}", join(&lambda)))
                .replace("numerics.seed = 42", &format!("numerics.seed = {seed}"))
                .replace("numerics.n_paths = 100000", &format!("numerics.n_paths = {paths}"));
            if let Some(n) = steps {
                text = text.replace("numerics.n_steps = auto", &format!("numerics.n_steps = {n}"));
            }
            if let Some(csv) = csv {
                text.push_str(&format!("output.csv = {csv}\n"));
            }
            let first = ExperimentConfig::parse(&text).unwrap();
            let emitted = first.emit();
            let second = ExperimentConfig::parse(&emitted).unwrap();
            prop_assert_eq!(&first, &second);
            prop_assert_eq!(emitted, second.emit());
            prop_assert_eq!(first.hash(), second.hash());
        }
    }
}
