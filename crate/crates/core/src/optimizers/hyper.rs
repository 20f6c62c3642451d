//! Hyperparameter schemas and validated values.

use std::collections::BTreeMap;

use super::linesearch::LineSearchMode;
use super::methods::Method;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Linear,
    Log,
}

/// One tunable hyperparameter: its default and its search interval.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ParamSpec {
    pub name: &'static str,
    pub default: f64,
    pub low: f64,
    pub high: f64,
    pub scale: Scale,
    /// Part of the method's published search space; the rest are held at their default.
    pub tuned: bool,
}

const fn spec(name: &'static str, default: f64, low: f64, high: f64, scale: Scale) -> ParamSpec {
    ParamSpec { name, default, low, high, scale, tuned: true }
}

const fn fixed(name: &'static str, default: f64, low: f64, high: f64, scale: Scale) -> ParamSpec {
    ParamSpec { name, default, low, high, scale, tuned: false }
}

use Scale::{Linear, Log};

pub(crate) static BFGS: [ParamSpec; 4] = [
    spec("alpha", 0.70, 1e-5, 0.99, Log),
    spec("beta", 0.8, 0.8, 0.9, Linear),
    spec("c1", 1e-4, 1e-5, 5.0, Log),
    spec("c2", 1.0, 0.1, 1.0, Linear),
];

pub(crate) static DFP: [ParamSpec; 4] = [
    spec("alpha", 0.37, 1e-5, 0.99, Log),
    spec("beta", 0.89, 0.8, 0.9, Linear),
    spec("c1", 0.0017, 1e-5, 5.0, Log),
    spec("c2", 1.0, 0.1, 1.0, Linear),
];

pub(crate) static NCG: [ParamSpec; 5] = [
    spec("alpha", 0.99, 1e-5, 0.99, Log),
    spec("beta", 0.83, 0.8, 0.9, Linear),
    spec("c1", 0.34, 1e-5, 5.0, Log),
    spec("c2", 0.59, 0.1, 1.0, Linear),
    fixed("sigma", 1.0, 1.0, 100.0, Log),
];

pub(crate) static SR1: [ParamSpec; 4] = [
    spec("alpha", 0.48, 1e-5, 0.99, Log),
    spec("beta", 0.83, 0.8, 0.9, Linear),
    spec("c1", 1e-5, 1e-5, 5.0, Log),
    spec("c2", 1.0, 0.1, 1.0, Linear),
];

pub(crate) static SP_BFGS: [ParamSpec; 6] = [
    spec("alpha", 0.049, 1e-5, 0.99, Log),
    spec("beta", 0.82, 0.8, 0.9, Linear),
    spec("n0", 1e-5, 1e-5, 1.0, Log),
    spec("ns", 1e-5, 1e-5, 1.0, Log),
    spec("c1", 1.67e-5, 1e-5, 1.0, Log),
    spec("c2", 1.0, 0.1, 1.0, Linear),
];

pub(crate) static QNG_BLOCK: [ParamSpec; 1] = [spec("alpha", 0.0016, 1e-5, 0.99, Log)];
pub(crate) static QNG_DIAG: [ParamSpec; 1] = [spec("alpha", 0.0026, 1e-5, 0.99, Log)];

pub(crate) static QBROYDEN: [ParamSpec; 2] =
    [spec("alpha", 0.0088, 1e-5, 0.99, Log), spec("epsilon", 0.0003, 1e-5, 0.99, Log)];

pub(crate) static QBANG: [ParamSpec; 4] = [
    spec("alpha", 0.14, 1e-5, 0.99, Log),
    spec("epsilon", 5.06e-5, 1e-5, 0.98, Log),
    spec("beta1", 0.0078, 1e-5, 0.99, Log),
    spec("beta2", 0.0001, 1e-5, 0.99, Log),
];

pub(crate) static M_QNG: [ParamSpec; 4] = [
    spec("alpha", 0.14, 1e-5, 0.99, Log),
    spec("epsilon", 5.06e-5, 1e-5, 0.99, Log),
    spec("beta1", 0.0078, 1e-5, 0.99, Log),
    spec("beta2", 0.0001, 1e-5, 0.99, Log),
];

pub(crate) static SPSA: [ParamSpec; 5] = [
    spec("a_init", 0.01, 1e-4, 1.0, Log),
    spec("c_init", 0.1, 1e-3, 1.0, Log),
    spec("big_a", 20.0, 1.0, 100.0, Log),
    spec("alpha", 0.602, 0.3, 1.0, Linear),
    spec("gamma", 0.101, 0.05, 0.5, Linear),
];

pub(crate) static SPSA2: [ParamSpec; 7] = [
    spec("a_init", 0.01, 1e-4, 1.0, Log),
    spec("c_init", 0.1, 1e-3, 1.0, Log),
    spec("ah_init", 0.01, 1e-4, 1.0, Log),
    spec("ch_init", 0.1, 1e-3, 1.0, Log),
    spec("big_a", 20.0, 1.0, 100.0, Log),
    spec("alpha", 0.602, 0.3, 1.0, Linear),
    spec("gamma", 0.101, 0.05, 0.5, Linear),
];

pub(crate) static QNSPSA: [ParamSpec; 2] =
    [spec("alpha", 0.01, 1e-4, 1.0, Log), spec("epsilon", 0.01, 1e-3, 0.5, Log)];

pub(crate) static RCD: [ParamSpec; 2] =
    [spec("alpha", 0.01, 1e-4, 1.0, Log), spec("gamma", 0.101, 0.0, 1.0, Linear)];

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum HyperError {
    #[error("unknown hyperparameter `{key}` for {method}; expected one of: {expected}")]
    Unknown { method: &'static str, key: String, expected: String },
    #[error("missing hyperparameter `{key}` for {method}")]
    Missing { method: &'static str, key: &'static str },
    #[error("hyperparameter `{key}` = {value} is not finite")]
    NonFinite { key: String, value: f64 },
}

/// A complete, schema-checked set of hyperparameter values for one method.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct Hyper {
    values: BTreeMap<String, f64>,
}

impl Hyper {
    pub fn defaults(method: Method) -> Self {
        Self { values: method.schema().iter().map(|s| (s.name.to_string(), s.default)).collect() }
    }

    /// Requires every schema key and rejects any other key.
    pub fn from_map(method: Method, map: &BTreeMap<String, f64>) -> Result<Self, HyperError> {
        let schema = method.schema();
        for (key, &value) in map {
            if !schema.iter().any(|s| s.name == key) {
                return Err(HyperError::Unknown {
                    method: method.id(),
                    key: key.clone(),
                    expected: schema.iter().map(|s| s.name).collect::<Vec<_>>().join(", "),
                });
            }
            if !value.is_finite() {
                return Err(HyperError::NonFinite { key: key.clone(), value });
            }
        }
        if let Some(missing) = schema.iter().find(|s| !map.contains_key(s.name)) {
            return Err(HyperError::Missing { method: method.id(), key: missing.name });
        }
        Ok(Self { values: map.clone() })
    }

    /// Replaces one known key.
    pub fn with(mut self, key: &str, value: f64) -> Self {
        let slot = self.values.get_mut(key).unwrap_or_else(|| panic!("unknown hyperparameter `{key}`"));
        *slot = value;
        self
    }

    pub fn get(&self, key: &str) -> f64 {
        *self.values.get(key).unwrap_or_else(|| panic!("hyperparameter `{key}` not in schema"))
    }

    pub fn as_map(&self) -> &BTreeMap<String, f64> {
        &self.values
    }
}

/// How the SP-BFGS rank-one correction is weighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpBfgsCorrection {
    /// `(γ − ω)·yᵀBy`.
    #[default]
    GammaMinusOmega,
    /// Reads the undefined coefficient as `ω`, i.e. drops the `yᵀBy` term.
    Zero,
}

/// Numerical knobs outside the published search spaces.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodOptions {
    /// Overrides the per-method line-search acceptance rule.
    pub line_search_mode: Option<LineSearchMode>,
    pub max_backtracks: usize,
    /// Relative SR1 skip threshold `r`.
    pub sr1_skip: f64,
    pub sp_bfgs_correction: SpBfgsCorrection,
    /// Tikhonov shift `λ` added to metric tensors before solving.
    pub metric_regularization: f64,
    /// Eigenvalue floor applied to the 2SPSA / QNSPSA running curvature estimates.
    pub curvature_floor: f64,
    /// Adam-style denominator offset for qBang and m-QNG.
    pub adam_delta: f64,
}

impl Default for MethodOptions {
    fn default() -> Self {
        Self {
            line_search_mode: None,
            max_backtracks: 20,
            sr1_skip: 1e-8,
            sp_bfgs_correction: SpBfgsCorrection::GammaMinusOmega,
            metric_regularization: 1e-6,
            curvature_floor: 1e-4,
            adam_delta: 1e-8,
        }
    }
}
