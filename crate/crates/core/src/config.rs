//! Experiment configuration files.
//!
//! A config is a flat TOML document with an explicit `schema_version`.
//! Parsing collects every problem it finds instead of stopping at the first.

use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::engine::{InitSpec, JumpMeasures, JumpPolicy};
use crate::error::{ConfigIssue, FvError, Result};
use crate::geometry::Domain;
use crate::sde::{DiffusionModel, ModelConfig, StepOptions};

pub const SCHEMA_VERSION: i64 = 1;

/// Environment variable that overrides the seed in the config file.
pub const SEED_ENV: &str = "FVLAB_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Tightness,
    Convergence,
    NonExplosion,
    Compliance,
    Hypothesis,
    Qsd,
    Proximity,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Tightness => "tightness",
            ExperimentKind::Convergence => "convergence",
            ExperimentKind::NonExplosion => "non_explosion",
            ExperimentKind::Compliance => "compliance",
            ExperimentKind::Hypothesis => "hypothesis",
            ExperimentKind::Qsd => "qsd",
            ExperimentKind::Proximity => "proximity",
        }
    }
}

/// Pass/fail thresholds declared by the experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Target boundary mass for the tightness sweep.
    pub epsilon: f64,
    /// Smallest N the tightness bound must hold for.
    pub n_epsilon: usize,
    /// Standard errors of slack in statistical comparisons.
    pub se_multiplier: f64,
    /// Largest allowed |particle estimate - oracle| of a boundary mass.
    pub oracle_tolerance: f64,
    /// Largest allowed Kolmogorov distance.
    pub ks: f64,
    /// Relative tolerance of the spectral eigenvalue.
    pub eigen_rel: f64,
    /// Allowed growth factor of `P(both within a) * log(...)` over the grid.
    pub log_factor: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            n_epsilon: 0,
            se_multiplier: 3.0,
            oracle_tolerance: 0.03,
            ks: 0.05,
            eigen_rel: 1e-3,
            log_factor: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HypothesisSettings {
    pub samples: usize,
    pub t_max: f64,
}

impl Default for HypothesisSettings {
    fn default() -> Self {
        Self { samples: 2000, t_max: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComplianceSettings {
    pub trials: usize,
    pub n: usize,
}

impl Default for ComplianceSettings {
    fn default() -> Self {
        Self { trials: 10_000, n: 100 }
    }
}

/// A fully validated experiment description.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub schema_version: i64,
    pub experiment: ExperimentKind,
    /// Seed from the file; see [`resolve_seed`] for overrides.
    pub seed: Option<u64>,
    pub dt: f64,
    pub domain: Domain,
    pub model: ModelConfig,
    pub policy: JumpPolicy,
    /// Policy applied to soft kills; defaults to `policy`.
    pub soft_policy: JumpPolicy,
    pub init: InitSpec,
    pub n: Vec<usize>,
    pub t0: f64,
    pub horizons: Vec<f64>,
    pub a: Vec<f64>,
    pub gamma: f64,
    pub pair: [usize; 2],
    pub replicas: usize,
    pub oracle_attempts: usize,
    pub spectral_grid: usize,
    /// Not part of the echo or hash: where results go does not change them.
    #[serde(skip)]
    pub output_dir: PathBuf,
    pub explosion_cap: f64,
    pub bridge: bool,
    pub thresholds: Thresholds,
    pub hypothesis: HypothesisSettings,
    pub compliance: ComplianceSettings,
}

impl ExperimentConfig {
    pub fn diffusion_model(&self) -> Result<DiffusionModel> {
        DiffusionModel::from_config(&self.model, self.domain.dim())
    }

    pub fn measures(&self) -> JumpMeasures {
        JumpMeasures {
            hard: self.policy.clone(),
            soft: self.soft_policy.clone(),
        }
    }

    pub fn step_options(&self) -> StepOptions {
        StepOptions { bridge: self.bridge }
    }

    /// Largest horizon.
    pub fn horizon(&self) -> f64 {
        self.horizons.iter().copied().fold(0.0, f64::max)
    }

    /// Canonical JSON echo: the config with the effective seed.
    pub fn echo(&self, seed: u64) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        v["seed"] = seed.into();
        v
    }

    /// Hex SHA-256 of the canonical echo.
    pub fn hash(&self, seed: u64) -> String {
        let canonical = serde_json::to_string(&self.echo(seed)).expect("json");
        Sha256::digest(canonical.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Seed precedence: command line, then `FVLAB_SEED`, then the config file.
pub fn resolve_seed(cli: Option<u64>, env: Option<&str>, config: Option<u64>) -> Result<u64> {
    if let Some(s) = cli {
        return Ok(s);
    }
    if let Some(raw) = env {
        return raw
            .trim()
            .parse()
            .map_err(|_| FvError::config(SEED_ENV, format!("not an unsigned 64-bit integer: {raw:?}")));
    }
    config.ok_or_else(|| FvError::config("seed", "no seed given (config, --seed or FVLAB_SEED); there is no clock default"))
}

const KNOWN_KEYS: &[&str] = &[
    "schema_version",
    "experiment",
    "seed",
    "dt",
    "domain",
    "model",
    "policy",
    "soft_policy",
    "init",
    "n",
    "t0",
    "horizons",
    "a",
    "gamma",
    "pair",
    "replicas",
    "oracle_attempts",
    "spectral_grid",
    "output_dir",
    "explosion_cap",
    "bridge",
    "thresholds",
    "hypothesis",
    "compliance",
];

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

struct Reader {
    table: toml::Table,
    issues: Vec<ConfigIssue>,
}

impl Reader {
    fn issue(&mut self, key: &str, message: impl Into<String>) {
        self.issues.push(ConfigIssue {
            key: key.to_string(),
            message: message.into(),
        });
    }

    fn get<T: DeserializeOwned>(&mut self, key: &str) -> Option<T> {
        let value = self.table.get(key)?.clone();
        match value.try_into::<T>() {
            Ok(v) => Some(v),
            Err(e) => {
                self.issue(key, e.message().trim().to_string());
                None
            }
        }
    }

    fn or<T: DeserializeOwned>(&mut self, key: &str, default: T) -> T {
        self.get(key).unwrap_or(default)
    }

    fn required<T: DeserializeOwned>(&mut self, key: &str) -> Option<T> {
        if !self.table.contains_key(key) {
            self.issue(key, "missing required key");
            return None;
        }
        self.get(key)
    }
}

/// Parses and validates a config, reporting every violation found.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
        let key = match e.span() {
            Some(span) => {
                let (line, col) = line_col(text, span.start);
                format!("line {line}, column {col}")
            }
            None => "syntax".to_string(),
        };
        FvError::config(key, e.message().trim().to_string())
    })?;
    let mut r = Reader { table, issues: Vec::new() };
    let unknown: Vec<String> = r.table.keys().filter(|k| !KNOWN_KEYS.contains(&k.as_str())).cloned().collect();
    for k in unknown {
        r.issue(&k, "unknown key");
    }

    let schema_version = r.required::<i64>("schema_version");
    if let Some(v) = schema_version {
        if v != SCHEMA_VERSION {
            r.issue("schema_version", format!("unsupported version {v}; this build reads version {SCHEMA_VERSION}"));
        }
    }
    let experiment = r.required::<ExperimentKind>("experiment");
    let seed = r.get::<u64>("seed");
    let dt: f64 = r.or("dt", 1e-3);
    if !(dt > 0.0 && dt.is_finite()) {
        r.issue("dt", format!("must be positive, got {dt}"));
    }
    let domain = r.required::<Domain>("domain");
    let model = r.required::<ModelConfig>("model");
    let policy = r.or("policy", JumpPolicy::FlemingViot);
    let soft_policy = r.get::<JumpPolicy>("soft_policy").unwrap_or_else(|| policy.clone());
    for (key, p) in [("policy", &policy), ("soft_policy", &soft_policy)] {
        r.issues.extend(p.issues(key));
    }
    let init = r.or("init", InitSpec::Uniform);
    let n = r.or("n", vec![100usize]);
    if n.is_empty() {
        r.issue("n", "need at least one system size");
    }
    if let Some(&bad) = n.iter().find(|&&k| k < 2) {
        r.issue("n", format!("every system needs at least 2 particles, got {bad}"));
    }
    let t0: f64 = r.or("t0", 0.25);
    if !(t0 > 0.0) {
        r.issue("t0", format!("must be positive, got {t0}"));
    }
    let horizons: Vec<f64> = r.or("horizons", vec![t0]);
    if horizons.is_empty() {
        r.issue("horizons", "need at least one horizon");
    }
    if horizons.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
        r.issue("horizons", "horizons must be positive");
    }
    let a: Vec<f64> = r.or("a", vec![0.01, 0.02, 0.05, 0.1]);
    if a.is_empty() || a.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        r.issue("a", "need one or more positive band widths");
    }
    let gamma: f64 = r.or("gamma", 0.25);
    if !(gamma > 0.0) {
        r.issue("gamma", format!("must be positive, got {gamma}"));
    }
    let pair = r.or("pair", [0usize, 1]);
    let replicas = r.or("replicas", 20usize);
    if replicas == 0 {
        r.issue("replicas", "need at least one replica");
    }
    let oracle_attempts = r.or("oracle_attempts", 100_000usize);
    let spectral_grid = r.or("spectral_grid", 1025usize);
    if spectral_grid < 3 {
        r.issue("spectral_grid", "need at least 3 grid points");
    }
    let output_dir = PathBuf::from(r.or("output_dir", "out".to_string()));
    let explosion_cap: f64 = r.or("explosion_cap", 50.0);
    if !(explosion_cap > 0.0) {
        r.issue("explosion_cap", format!("must be positive, got {explosion_cap}"));
    }
    let bridge = r.or("bridge", false);
    let thresholds: Thresholds = r.or("thresholds", Thresholds::default());
    let hypothesis: HypothesisSettings = r.or("hypothesis", HypothesisSettings::default());
    let compliance: ComplianceSettings = r.or("compliance", ComplianceSettings::default());
    if compliance.n < 2 {
        r.issue("compliance.n", "need at least 2 particles");
    }

    // Cross-field checks.
    if let (Some(domain), Some(model)) = (&domain, &model) {
        if let Err(FvError::Config(issues)) = DiffusionModel::from_config(model, domain.dim()) {
            r.issues.extend(issues);
        }
        if let Err(e) = init.validate(domain) {
            r.issue("init", e.to_string());
        }
    }
    if let Some(kind) = experiment {
        match kind {
            ExperimentKind::Tightness => {
                if let Some(&t) = horizons.iter().find(|&&t| t < t0) {
                    r.issue("horizons", format!("T = {t} is before t0 = {t0}; tightness needs T >= t0"));
                }
                if replicas < 2 {
                    r.issue("replicas", "need at least 2 replicas for a standard error");
                }
            }
            ExperimentKind::Convergence => {
                if replicas < 2 {
                    r.issue("replicas", "need at least 2 replicas for a standard error");
                }
                if oracle_attempts == 0 {
                    r.issue("oracle_attempts", "the oracle needs at least one path");
                }
            }
            ExperimentKind::Qsd => {
                if domain.as_ref().is_some_and(|d| d.dim() != 1) {
                    r.issue("domain", "the spectral solver supports intervals only");
                }
                if model.as_ref().is_some_and(|m| !matches!(m.spec, crate::sde::ModelSpec::Bm { .. })) {
                    r.issue("model.name", "the spectral solver needs the \"bm\" model");
                }
            }
            ExperimentKind::Proximity => {
                if pair[0] == pair[1] || n.iter().any(|&k| pair[0] >= k || pair[1] >= k) {
                    r.issue("pair", "need two distinct particle indices below every N");
                }
                if replicas < 2 {
                    r.issue("replicas", "need at least 2 replicas for a standard error");
                }
            }
            ExperimentKind::NonExplosion | ExperimentKind::Compliance | ExperimentKind::Hypothesis => {}
        }
    }

    match (schema_version, experiment, domain, model) {
        (Some(schema_version), Some(experiment), Some(domain), Some(model)) if r.issues.is_empty() => Ok(ExperimentConfig {
            schema_version,
            experiment,
            seed,
            dt,
            domain,
            model,
            policy,
            soft_policy,
            init,
            n,
            t0,
            horizons,
            a,
            gamma,
            pair,
            replicas,
            oracle_attempts,
            spectral_grid,
            output_dir,
            explosion_cap,
            bridge,
            thresholds,
            hypothesis,
            compliance,
        }),
        _ => Err(FvError::Config(r.issues)),
    }
}

pub fn load_config(path: &std::path::Path) -> Result<ExperimentConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1
experiment = "tightness"
seed = 7
domain = { kind = "interval", a = 0.0, b = 1.0 }
model = { name = "bm", bounds = { a0 = 0.1, A = 2.0, c0 = 0.5, C0 = 2.0, k_g = 1.0 } }
"#;

    fn issues(text: &str) -> Vec<ConfigIssue> {
        match parse_config(text) {
            Err(FvError::Config(v)) => v,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.experiment, ExperimentKind::Tightness);
        assert_eq!(c.seed, Some(7));
        assert_eq!(c.dt, 1e-3);
        assert_eq!(c.policy, JumpPolicy::FlemingViot);
        assert_eq!(c.soft_policy, JumpPolicy::FlemingViot);
        assert_eq!(c.init, InitSpec::Uniform);
        assert_eq!(c.horizons, vec![0.25]);
        assert_eq!(c.explosion_cap, 50.0);
        assert_eq!(c.thresholds, Thresholds::default());
        assert!(!c.bridge);
    }

    #[test]
    fn negative_dt_is_named() {
        let v = issues(&format!("{MINIMAL}dt = -0.01\n"));
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].key, "dt");
    }

    #[test]
    fn horizon_before_t0_is_rejected() {
        let v = issues(&format!("{MINIMAL}t0 = 0.25\nhorizons = [0.1]\n"));
        assert!(v.iter().any(|i| i.key == "horizons"), "{v:?}");
    }

    #[test]
    fn all_violations_are_collected() {
        let text = MINIMAL.replace("C0 = 2.0", "C0 = 0.1") + "dt = 0\nreplicas = 1\nbogus = 3\nn = [1]\n";
        let keys: Vec<String> = issues(&text).into_iter().map(|i| i.key).collect();
        for k in ["dt", "replicas", "bogus", "n", "model.bounds.C0"] {
            assert!(keys.iter().any(|x| x == k), "{k} missing from {keys:?}");
        }
    }

    #[test]
    fn missing_required_keys() {
        let keys: Vec<String> = issues("schema_version = 1\n").into_iter().map(|i| i.key).collect();
        assert_eq!(keys, ["experiment", "domain", "model"]);
        let v = issues(&MINIMAL.replace("schema_version = 1", "schema_version = 2"));
        assert_eq!(v[0].key, "schema_version");
    }

    #[test]
    fn syntax_errors_carry_position() {
        let v = issues("schema_version = 1\nexperiment = \n");
        assert!(v[0].key.starts_with("line 2"), "{v:?}");
    }

    #[test]
    fn mismatched_model_dimension() {
        let text = MINIMAL.replace(r#"name = "bm","#, r#"name = "bm_drift", drift = [1.0, 2.0],"#);
        let v = issues(&text);
        assert_eq!(v[0].key, "model.drift");
    }

    #[test]
    fn seed_precedence() {
        assert_eq!(resolve_seed(Some(1), Some("2"), Some(3)).unwrap(), 1);
        assert_eq!(resolve_seed(None, Some(" 2 "), Some(3)).unwrap(), 2);
        assert_eq!(resolve_seed(None, None, Some(3)).unwrap(), 3);
        assert!(matches!(resolve_seed(None, None, None), Err(FvError::Config(_))));
        assert!(matches!(resolve_seed(None, Some("x"), Some(3)), Err(FvError::Config(_))));
    }

    #[test]
    fn hash_ignores_output_dir_but_not_seed() {
        let a = parse_config(MINIMAL).unwrap();
        let b = parse_config(&format!("{MINIMAL}output_dir = \"elsewhere\"\n")).unwrap();
        assert_eq!(a.hash(1), b.hash(1));
        assert_ne!(a.hash(1), a.hash(2));
        assert_eq!(a.hash(1).len(), 64);
    }
}
