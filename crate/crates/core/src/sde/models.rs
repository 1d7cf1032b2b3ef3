//! Built-in diffusion models.
//!
//! Each model provides the environment coefficients `s` (d x d) and `m` (d),
//! the position coefficients `sigma` (d' x d') and `eta` (d'), a killing rate
//! `kappa`, and the declared smooth part `f` of the boundary-normal variance
//! `grad(phi)^T sigma sigma^T grad(phi) = f + g`.

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{ConfigIssue, FvError, Result};
use crate::geometry::{Domain, Point};

/// Row-major small matrix storage.
pub type Matrix = SmallVec<[f64; 9]>;

/// Declared regularity constants `(a0, A, c0, C0, k_g)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypothesisConstants {
    pub a0: f64,
    #[serde(rename = "A")]
    pub a_bound: f64,
    pub c0: f64,
    #[serde(rename = "C0")]
    pub c0_upper: f64,
    pub k_g: f64,
}

impl HypothesisConstants {
    pub fn issues(&self) -> Vec<ConfigIssue> {
        let mut out = Vec::new();
        let mut bad = |k: &str, m: &str| {
            out.push(ConfigIssue {
                key: format!("model.bounds.{k}"),
                message: m.to_string(),
            })
        };
        if !(self.a0 > 0.0) {
            bad("a0", "must be positive");
        }
        if !(self.a_bound > 0.0) {
            bad("A", "must be positive");
        }
        if !(self.c0 > 0.0) {
            bad("c0", "must be positive");
        }
        if !(self.c0 < self.c0_upper) {
            bad("C0", "must exceed c0");
        }
        if !(self.k_g >= 0.0) {
            bad("k_g", "must be non-negative");
        }
        out
    }

    /// `sqrt(c0 / C0)`, the ratio limiting the pair-proximity range.
    pub fn ellipticity_ratio(&self) -> f64 {
        (self.c0 / self.c0_upper).sqrt()
    }
}

fn one() -> f64 {
    1.0
}
fn zero() -> f64 {
    0.0
}
fn half() -> f64 {
    0.5
}

/// Config-file form: `model = { name = "bm", sigma = 1.0, bounds = { ... } }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum ModelSpec {
    /// Brownian motion `sigma * I` with constant killing rate.
    Bm {
        #[serde(default = "one")]
        sigma: f64,
        #[serde(default = "zero")]
        kappa: f64,
    },
    /// `c * I`, no drift, no soft killing.
    ScaledBm { c: f64 },
    /// Constant drift vector.
    BmDrift {
        drift: Vec<f64>,
        #[serde(default = "one")]
        sigma: f64,
        #[serde(default = "zero")]
        kappa: f64,
    },
    /// Time-inhomogeneous drift `v * sin(omega * t)`.
    SinDrift {
        drift: Vec<f64>,
        omega: f64,
        #[serde(default = "one")]
        sigma: f64,
        #[serde(default = "zero")]
        kappa: f64,
    },
    /// Scalar Ornstein-Uhlenbeck environment `de = -theta e dt + env_sigma dbeta`
    /// driving the drift `eta = e * direction`.
    OuEnv {
        direction: Vec<f64>,
        #[serde(default = "one")]
        theta: f64,
        #[serde(default = "half")]
        env_sigma: f64,
        #[serde(default = "one")]
        env_bound: f64,
        #[serde(default = "one")]
        sigma: f64,
        #[serde(default = "zero")]
        kappa: f64,
    },
    /// `sigma = (1 + phi(x)) I`, declared smooth part `f = 1`.
    PhiScaled,
}

/// Model plus declared constants, as written in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(flatten)]
    pub spec: ModelSpec,
    pub bounds: HypothesisConstants,
}

/// Values of all coefficients at one point `(t, e, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub s: Matrix,
    pub m: Point,
    pub sigma: Matrix,
    pub eta: Point,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionModel {
    spec: ModelSpec,
    bounds: HypothesisConstants,
    space_dim: usize,
}

fn identity(d: usize, scale: f64) -> Matrix {
    let mut m: Matrix = SmallVec::from_elem(0.0, d * d);
    for k in 0..d {
        m[k * d + k] = scale;
    }
    m
}

impl DiffusionModel {
    pub fn new(spec: ModelSpec, bounds: HypothesisConstants, space_dim: usize) -> Result<Self> {
        let mut issues = bounds.issues();
        let mut bad = |k: &str, m: String| {
            issues.push(ConfigIssue {
                key: format!("model.{k}"),
                message: m,
            })
        };
        let check_vec = |v: &Vec<f64>, key: &str, bad: &mut dyn FnMut(&str, String)| {
            if v.len() != space_dim {
                bad(key, format!("expected {space_dim} components, got {}", v.len()));
            }
            if v.iter().any(|x| !x.is_finite()) {
                bad(key, "must be finite".into());
            }
        };
        let check_rate = |k: f64, bad: &mut dyn FnMut(&str, String)| {
            if !(k >= 0.0 && k.is_finite()) {
                bad("kappa", format!("must be a non-negative rate, got {k}"));
            }
        };
        match &spec {
            ModelSpec::Bm { sigma, kappa } => {
                if !sigma.is_finite() {
                    bad("sigma", "must be finite".into());
                }
                check_rate(*kappa, &mut bad);
            }
            ModelSpec::ScaledBm { c } => {
                if !c.is_finite() {
                    bad("c", "must be finite".into());
                }
            }
            ModelSpec::BmDrift { drift, kappa, .. } => {
                check_vec(drift, "drift", &mut bad);
                check_rate(*kappa, &mut bad);
            }
            ModelSpec::SinDrift { drift, kappa, omega, .. } => {
                check_vec(drift, "drift", &mut bad);
                check_rate(*kappa, &mut bad);
                if !omega.is_finite() {
                    bad("omega", "must be finite".into());
                }
            }
            ModelSpec::OuEnv {
                direction,
                theta,
                env_bound,
                kappa,
                ..
            } => {
                check_vec(direction, "direction", &mut bad);
                check_rate(*kappa, &mut bad);
                if !(*theta > 0.0) {
                    bad("theta", "mean reversion must be positive".into());
                }
                if !(*env_bound > 0.0) {
                    bad("env_bound", "must be positive".into());
                }
            }
            ModelSpec::PhiScaled => {}
        }
        if issues.is_empty() {
            Ok(Self {
                spec,
                bounds,
                space_dim,
            })
        } else {
            Err(FvError::Config(issues))
        }
    }

    pub fn from_config(cfg: &ModelConfig, space_dim: usize) -> Result<Self> {
        Self::new(cfg.spec.clone(), cfg.bounds, space_dim)
    }

    /// Brownian motion with unit diffusion and the given declared bounds.
    pub fn brownian(bounds: HypothesisConstants, space_dim: usize) -> Self {
        Self::new(ModelSpec::Bm { sigma: 1.0, kappa: 0.0 }, bounds, space_dim)
            .expect("brownian motion is always valid")
    }

    pub fn name(&self) -> &'static str {
        match self.spec {
            ModelSpec::Bm { .. } => "bm",
            ModelSpec::ScaledBm { .. } => "scaled_bm",
            ModelSpec::BmDrift { .. } => "bm_drift",
            ModelSpec::SinDrift { .. } => "sin_drift",
            ModelSpec::OuEnv { .. } => "ou_env",
            ModelSpec::PhiScaled => "phi_scaled",
        }
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn bounds(&self) -> &HypothesisConstants {
        &self.bounds
    }

    pub fn with_bounds(&self, bounds: HypothesisConstants) -> Self {
        Self {
            bounds,
            ..self.clone()
        }
    }

    pub fn space_dim(&self) -> usize {
        self.space_dim
    }

    pub fn env_dim(&self) -> usize {
        match self.spec {
            ModelSpec::OuEnv { .. } => 1,
            _ => 0,
        }
    }

    /// Bounding box of the environment space `E`.
    pub fn env_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self.spec {
            ModelSpec::OuEnv { env_bound, .. } => (vec![-env_bound], vec![env_bound]),
            _ => (vec![], vec![]),
        }
    }

    pub fn default_env(&self) -> Point {
        SmallVec::from_elem(0.0, self.env_dim())
    }

    /// Constant scalar multiple of the identity used for `sigma`, if any.
    fn isotropic_scale(&self) -> Option<f64> {
        match self.spec {
            ModelSpec::Bm { sigma, .. }
            | ModelSpec::BmDrift { sigma, .. }
            | ModelSpec::SinDrift { sigma, .. }
            | ModelSpec::OuEnv { sigma, .. } => Some(sigma),
            ModelSpec::ScaledBm { c } => Some(c),
            ModelSpec::PhiScaled => None,
        }
    }

    pub fn kappa(&self, _t: f64, _e: &[f64], _x: &[f64]) -> f64 {
        match self.spec {
            ModelSpec::Bm { kappa, .. }
            | ModelSpec::BmDrift { kappa, .. }
            | ModelSpec::SinDrift { kappa, .. }
            | ModelSpec::OuEnv { kappa, .. } => kappa,
            ModelSpec::ScaledBm { .. } | ModelSpec::PhiScaled => 0.0,
        }
    }

    /// Scalar diffusion coefficient when `sigma = c(t, e, x) I`.
    pub fn sigma_scalar(&self, domain: &Domain, x: &[f64]) -> f64 {
        self.isotropic_scale().unwrap_or_else(|| 1.0 + domain.phi(x))
    }

    pub fn eta(&self, t: f64, e: &[f64], _x: &[f64]) -> Point {
        match &self.spec {
            ModelSpec::BmDrift { drift, .. } => drift.iter().copied().collect(),
            ModelSpec::SinDrift { drift, omega, .. } => {
                let s = (omega * t).sin();
                drift.iter().map(|v| v * s).collect()
            }
            ModelSpec::OuEnv { direction, .. } => direction.iter().map(|u| u * e[0]).collect(),
            _ => SmallVec::from_elem(0.0, self.space_dim),
        }
    }

    pub fn env_drift(&self, _t: f64, e: &[f64], _x: &[f64]) -> Point {
        match self.spec {
            ModelSpec::OuEnv { theta, .. } => SmallVec::from_elem(-theta * e[0], 1),
            _ => SmallVec::new(),
        }
    }

    pub fn env_diffusion(&self, _t: f64, _e: &[f64], _x: &[f64]) -> Matrix {
        match self.spec {
            ModelSpec::OuEnv { env_sigma, .. } => SmallVec::from_elem(env_sigma, 1),
            _ => SmallVec::new(),
        }
    }

    /// All coefficients at `(t, e, x)` without the domain check.
    pub fn coefficients(&self, domain: &Domain, t: f64, e: &[f64], x: &[f64]) -> Coefficients {
        Coefficients {
            s: self.env_diffusion(t, e, x),
            m: self.env_drift(t, e, x),
            sigma: identity(self.space_dim, self.sigma_scalar(domain, x)),
            eta: self.eta(t, e, x),
            kappa: self.kappa(t, e, x),
        }
    }

    /// Declared smooth part `f` of the boundary-normal variance.
    pub fn smooth_part(&self, _t: f64, _e: &[f64], _x: &[f64]) -> f64 {
        match self.isotropic_scale() {
            Some(c) => c * c,
            None => 1.0,
        }
    }
}

/// Checked coefficient evaluation; `x` must lie in the domain.
pub fn eval_coefficients(
    model: &DiffusionModel,
    domain: &Domain,
    t: f64,
    e: &[f64],
    x: &[f64],
) -> Result<Coefficients> {
    if !domain.contains(x) {
        return Err(FvError::DomainViolation { point: x.to_vec() });
    }
    Ok(model.coefficients(domain, t, e, x))
}

/// Splits `grad(phi)^T sigma sigma^T grad(phi)` into the declared smooth part
/// `f` and the remainder `g`.
pub fn fg_decomposition(
    model: &DiffusionModel,
    domain: &Domain,
    t: f64,
    e: &[f64],
    x: &[f64],
) -> Result<(f64, f64)> {
    let grad = domain.grad_phi(x)?;
    let c = model.coefficients(domain, t, e, x);
    let d = grad.len();
    // |sigma^T grad|^2
    let mut q = 0.0;
    for l in 0..d {
        let v: f64 = (0..d).map(|k| c.sigma[k * d + l] * grad[k]).sum();
        q += v * v;
    }
    let f = model.smooth_part(t, e, x);
    Ok((f, q - f))
}
