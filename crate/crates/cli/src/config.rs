//! Experiment configuration files and hyperparameter files.
//!
//! Configs are TOML. Every table rejects unknown keys, relative paths resolve
//! against the directory of the file that names them, and everything is
//! validated before any computation starts.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use qnbench::bench::{LipschitzPooling, MethodSpec, Problem, Protocol, StopMode};
use qnbench::optimizers::{Hyper, Method, MethodOptions};
use qnbench::problems::{generate_problem, WeightedGraph};
use qnbench::tuner::TunerOptions;
use qnbench::ShotMode;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// `"exact"` or a positive shot count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ShotsRepr", into = "ShotsRepr")]
pub struct Shots(pub ShotMode);

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ShotsRepr {
    Count(usize),
    Name(String),
}

impl TryFrom<ShotsRepr> for Shots {
    type Error = String;

    fn try_from(r: ShotsRepr) -> Result<Self, String> {
        match r {
            ShotsRepr::Count(0) => Err("shots must be positive (or \"exact\")".into()),
            ShotsRepr::Count(shots) => Ok(Shots(ShotMode::Sampled { shots })),
            ShotsRepr::Name(s) => s.parse(),
        }
    }
}

impl From<Shots> for ShotsRepr {
    fn from(s: Shots) -> Self {
        match s.0 {
            ShotMode::Exact => ShotsRepr::Name("exact".into()),
            ShotMode::Sampled { shots } => ShotsRepr::Count(shots),
        }
    }
}

impl FromStr for Shots {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "exact" {
            return Ok(Shots(ShotMode::Exact));
        }
        match s.parse::<usize>() {
            Ok(0) | Err(_) => Err(format!("expected \"exact\" or a positive shot count, got {s:?}")),
            Ok(shots) => Ok(Shots(ShotMode::Sampled { shots })),
        }
    }
}

impl fmt::Display for Shots {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            ShotMode::Exact => write!(f, "exact"),
            ShotMode::Sampled { shots } => write!(f, "{shots}"),
        }
    }
}

/// Stop-mode names used in configs and flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
pub enum StopName {
    /// Run to the iteration cap.
    #[serde(rename = "max-iter")]
    #[value(name = "max-iter")]
    MaxIter,
    /// Also stop once within ρ of the optimum.
    #[serde(rename = "tol")]
    #[value(name = "tol")]
    Tol,
}

impl StopName {
    pub fn mode(self, rho: f64) -> StopMode {
        match self {
            StopName::MaxIter => StopMode::MaxIterations,
            StopName::Tol => StopMode::Tolerance { rho },
        }
    }
}

/// A graph read from a fixture file or generated from its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemEntry {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vertices: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<[f64; 2]>,
}

pub const DEFAULT_DENSITY: f64 = 1.0;
pub const DEFAULT_WEIGHTS: [f64; 2] = [1.0, 1.0];

/// An optimizer with its hyperparameters: defaults, a hyper file, or inline values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodEntry {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hyper: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<BTreeMap<String, f64>>,
}

/// Benchmark protocol. Omitted keys take the documented defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolSection {
    pub restarts: usize,
    pub layers: usize,
    pub shots: Shots,
    pub quasi_newton_cap: usize,
    pub natural_gradient_cap: usize,
    pub stochastic_cap: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
    pub stop_modes: Vec<StopName>,
    /// Relative tolerance of the convergence flag and of the `tol` stop mode.
    pub rho: f64,
    pub lipschitz_rho: f64,
    pub lipschitz_cap: usize,
    pub lipschitz_pooling: LipschitzPooling,
    pub hamming_shots: usize,
    pub options: MethodOptions,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        let p = Protocol::default();
        Self {
            restarts: p.restarts,
            layers: p.layers,
            shots: Shots(p.shot_mode),
            quasi_newton_cap: p.quasi_newton_cap,
            natural_gradient_cap: p.natural_gradient_cap,
            stochastic_cap: p.stochastic_cap,
            max_iterations: p.max_iterations,
            stop_modes: vec![StopName::MaxIter, StopName::Tol],
            rho: p.convergence_rho,
            lipschitz_rho: p.lipschitz_rho,
            lipschitz_cap: p.lipschitz_cap,
            lipschitz_pooling: p.lipschitz_pooling,
            hamming_shots: p.hamming_shots,
            options: p.method_options,
        }
    }
}

impl ProtocolSection {
    pub fn to_protocol(&self) -> Protocol {
        let mut stop_modes: Vec<StopMode> = Vec::new();
        for s in &self.stop_modes {
            let m = s.mode(self.rho);
            if !stop_modes.contains(&m) {
                stop_modes.push(m);
            }
        }
        Protocol {
            restarts: self.restarts,
            layers: self.layers,
            shot_mode: self.shots.0,
            quasi_newton_cap: self.quasi_newton_cap,
            natural_gradient_cap: self.natural_gradient_cap,
            stochastic_cap: self.stochastic_cap,
            max_iterations: self.max_iterations,
            stop_modes,
            convergence_rho: self.rho,
            lipschitz_rho: self.lipschitz_rho,
            lipschitz_cap: self.lipschitz_cap,
            lipschitz_pooling: self.lipschitz_pooling,
            hamming_shots: self.hamming_shots,
            method_options: self.options.clone(),
        }
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.restarts == 0 {
            return Err(CliError::Config("protocol.restarts must be positive".into()));
        }
        if self.layers == 0 {
            return Err(CliError::Config("protocol.layers must be positive".into()));
        }
        if self.stop_modes.is_empty() {
            return Err(CliError::Config("protocol.stop_modes must name at least one of \"max-iter\", \"tol\"".into()));
        }
        for (key, v) in [("rho", self.rho), ("lipschitz_rho", self.lipschitz_rho)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(CliError::Config(format!("protocol.{key} must be a finite non-negative number, got {v}")));
            }
        }
        if self.hamming_shots == 0 {
            return Err(CliError::Config("protocol.hamming_shots must be positive".into()));
        }
        Ok(())
    }
}

/// A benchmark experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; every run stream derives from it by label hashing.
    pub seed: u64,
    /// Output directory (the `--out` flag takes precedence).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub problems: Vec<ProblemEntry>,
    #[serde(default)]
    pub methods: Vec<MethodEntry>,
    #[serde(default)]
    pub protocol: ProtocolSection,
}

/// A validated experiment ready to run.
#[derive(Debug)]
pub struct Experiment {
    /// The config with defaults filled in, paths absolute and hyperparameters inline.
    pub effective: ExperimentConfig,
    pub problems: Vec<Problem>,
    pub methods: Vec<MethodSpec>,
    pub protocol: Protocol,
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(CliError::io(path))
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Names become directory names in the output tree.
pub fn check_name(kind: &str, name: &str) -> Result<(), CliError> {
    let ok = !name.is_empty()
        && name != "."
        && name != ".."
        && name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(CliError::Config(format!("{kind} name {name:?} may only contain letters, digits, '-', '_' and '.'")))
    }
}

pub fn parse_method(id: &str) -> Result<Method, CliError> {
    Method::from_id(id).ok_or_else(|| CliError::Config(format!("unknown method `{id}`; valid ids: {}", Method::valid_ids())))
}

pub fn read_graph(path: &Path) -> Result<WeightedGraph, CliError> {
    let text = read_text(path)?;
    WeightedGraph::from_text(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// A hyper file: a TOML (or, with a `.json` extension, JSON) table holding
/// every hyperparameter of the method's schema and nothing else.
pub fn read_hyper(method: Method, path: &Path) -> Result<Hyper, CliError> {
    let text = read_text(path)?;
    let map: BTreeMap<String, f64> = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
    } else {
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
    };
    Hyper::from_map(method, &map).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Hyperparameters from an optional hyper file, defaults otherwise.
pub fn hyper_or_defaults(method: Method, path: Option<&Path>) -> Result<Hyper, CliError> {
    match path {
        Some(p) => read_hyper(method, p),
        None => Ok(Hyper::defaults(method)),
    }
}

/// Reads a TOML file into `T`, naming the file in errors.
pub fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = read_text(path)?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn read_method_options(path: Option<&Path>) -> Result<MethodOptions, CliError> {
    path.map_or_else(|| Ok(MethodOptions::default()), read_toml)
}

pub fn read_tuner_options(path: Option<&Path>) -> Result<TunerOptions, CliError> {
    path.map_or_else(|| Ok(TunerOptions::default()), read_toml)
}

fn build_problem(entry: &ProblemEntry, base: &Path) -> Result<(ProblemEntry, Problem), CliError> {
    check_name("problem", &entry.name)?;
    let mut effective = entry.clone();
    let graph = match (&entry.file, entry.vertices) {
        (Some(file), None) => {
            if entry.graph_seed.is_some() || entry.density.is_some() || entry.weights.is_some() {
                return Err(CliError::Config(format!(
                    "problem `{}`: `file` excludes graph_seed, density and weights", entry.name)));
            }
            let path = resolve(base, file);
            effective.file = Some(path.clone());
            read_graph(&path)?
        }
        (None, Some(n)) => {
            let seed = entry.graph_seed.ok_or_else(|| {
                CliError::Config(format!("problem `{}`: generated graphs need `graph_seed`", entry.name))
            })?;
            let density = entry.density.unwrap_or(DEFAULT_DENSITY);
            let [low, high] = entry.weights.unwrap_or(DEFAULT_WEIGHTS);
            effective.density = Some(density);
            effective.weights = Some([low, high]);
            generate_problem(n, seed, density, (low, high))
                .map_err(|e| CliError::Config(format!("problem `{}`: {e}", entry.name)))?
        }
        _ => {
            return Err(CliError::Config(format!(
                "problem `{}` needs exactly one of `file` or `vertices`", entry.name)))
        }
    };
    let problem = Problem::new(entry.name.clone(), graph)?;
    Ok((effective, problem))
}

fn build_method(entry: &MethodEntry, base: &Path) -> Result<(MethodEntry, MethodSpec), CliError> {
    let method = parse_method(&entry.id)?;
    let label = entry.label.clone().unwrap_or_else(|| method.id().to_string());
    check_name("method label", &label)?;
    let hyper = match (&entry.hyper, &entry.values) {
        (Some(_), Some(_)) => {
            return Err(CliError::Config(format!("method `{label}`: give either `hyper` or `values`, not both")))
        }
        (Some(path), None) => read_hyper(method, &resolve(base, path))?,
        (None, Some(values)) => Hyper::from_map(method, values).map_err(|e| CliError::Config(format!("method `{label}`: {e}")))?,
        (None, None) => Hyper::defaults(method),
    };
    let effective = MethodEntry { id: method.id().into(), label: Some(label.clone()), hyper: None, values: Some(hyper.as_map().clone()) };
    Ok((effective, MethodSpec { label, method, hyper }))
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        read_toml(path)
    }

    /// Validates everything and resolves files relative to `base`.
    pub fn resolve(&self, base: &Path) -> Result<Experiment, CliError> {
        self.protocol.validate()?;
        if self.problems.is_empty() {
            return Err(CliError::Config("config names no problems".into()));
        }
        let mut effective = self.clone();
        let mut problems = Vec::new();
        for (i, entry) in self.problems.iter().enumerate() {
            let (e, p) = build_problem(entry, base)?;
            if problems.iter().any(|q: &Problem| q.name == p.name) {
                return Err(CliError::Config(format!("duplicate problem name `{}`", p.name)));
            }
            effective.problems[i] = e;
            problems.push(p);
        }
        let mut methods = Vec::new();
        for (i, entry) in self.methods.iter().enumerate() {
            let (e, m) = build_method(entry, base)?;
            if methods.iter().any(|n: &MethodSpec| n.label == m.label) {
                return Err(CliError::Config(format!("duplicate method label `{}`; set distinct `label`s", m.label)));
            }
            effective.methods[i] = e;
            methods.push(m);
        }
        effective.output = self.output.as_ref().map(|o| resolve(base, o));
        let protocol = self.protocol.to_protocol();
        Ok(Experiment { effective, problems, methods, protocol })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shots_parse_both_forms() {
        assert_eq!("exact".parse::<Shots>().unwrap(), Shots(ShotMode::Exact));
        assert_eq!("512".parse::<Shots>().unwrap(), Shots(ShotMode::Sampled { shots: 512 }));
        assert!("0".parse::<Shots>().is_err());
        assert!("many".parse::<Shots>().is_err());
        let p: ProtocolSection = toml::from_str("shots = 64").unwrap();
        assert_eq!(p.shots, Shots(ShotMode::Sampled { shots: 64 }));
        let p: ProtocolSection = toml::from_str("shots = \"exact\"").unwrap();
        assert_eq!(p.shots, Shots(ShotMode::Exact));
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = toml::from_str::<ExperimentConfig>("seed = 1\nproblems = []\ncolour = 3").unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
        let err = toml::from_str::<ProtocolSection>("restart = 2").unwrap_err();
        assert!(err.to_string().contains("restart"), "{err}");
    }

    #[test]
    fn protocol_defaults_round_trip() {
        let p = ProtocolSection::default();
        assert_eq!(p.to_protocol(), Protocol::default());
        let text = toml::to_string(&p).unwrap();
        assert_eq!(toml::from_str::<ProtocolSection>(&text).unwrap(), p);
    }

    #[test]
    fn names_are_path_safe() {
        assert!(check_name("problem", "n3-s32_v1.0").is_ok());
        for bad in ["", "..", "a/b", "a b"] {
            assert!(check_name("problem", bad).is_err());
        }
    }

    #[test]
    fn resolve_generated_problem_and_inline_values() {
        let cfg: ExperimentConfig = toml::from_str(
            r#"
            seed = 7
            [[problems]]
            name = "tri"
            vertices = 3
            graph_seed = 32
            [[methods]]
            id = "rcd"
            values = { alpha = 0.3, gamma = 0.0 }
            "#,
        )
        .unwrap();
        let exp = cfg.resolve(Path::new(".")).unwrap();
        assert_eq!(exp.problems[0].truth.optimal_value, -2.0);
        assert_eq!(exp.methods[0].hyper.get("alpha"), 0.3);
        assert_eq!(exp.effective.problems[0].weights, Some(DEFAULT_WEIGHTS));
    }

    #[test]
    fn duplicate_labels_and_missing_values_rejected() {
        let dup: ExperimentConfig = toml::from_str(
            "seed = 1\n[[problems]]\nname = \"a\"\nvertices = 3\ngraph_seed = 1\n[[methods]]\nid = \"bfgs\"\n[[methods]]\nid = \"bfgs\"\n",
        )
        .unwrap();
        assert!(dup.resolve(Path::new(".")).unwrap_err().to_string().contains("duplicate"));
        let partial: ExperimentConfig = toml::from_str(
            "seed = 1\n[[problems]]\nname = \"a\"\nvertices = 3\ngraph_seed = 1\n[[methods]]\nid = \"rcd\"\nvalues = { alpha = 0.3 }\n",
        )
        .unwrap();
        assert!(partial.resolve(Path::new(".")).unwrap_err().to_string().contains("gamma"));
    }
}
