//! Killed diffusions: built-in models, the Euler-Maruyama kernel with hard
//! and soft kill detection, and the regularity validator.

mod hypothesis;
mod models;

pub use hypothesis::{validate_hypothesis1, ClauseReport, HypothesisReport, SampleWitness};
pub use models::{
    eval_coefficients, fg_decomposition, Coefficients, DiffusionModel, HypothesisConstants, Matrix,
    ModelConfig, ModelSpec,
};

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{FvError, Result};
use crate::geometry::{Domain, Point};
use crate::rng::CounterRng;

/// State `(t, e, x)` of one diffusing particle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub t: f64,
    pub e: Point,
    pub x: Point,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KillKind {
    Hard,
    Soft,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KillEvent {
    pub kind: KillKind,
    /// End of the step in which the kill was detected.
    pub time: f64,
    /// Last in-domain state before the kill.
    pub pre_kill: Particle,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepOutcome {
    Alive(Particle),
    Killed(KillEvent),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepOptions {
    /// Brownian-bridge crossing correction; only applied in one dimension.
    pub bridge: bool,
}

/// The random inputs of one step. Increments are already scaled by `sqrt(dt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepNoise {
    pub kill_uniform: f64,
    pub env_increment: Point,
    pub space_increment: Point,
    pub bridge_uniform: f64,
}

/// Probability of soft killing within a step of length `dt` at rate `kappa`.
pub fn soft_kill_probability(kappa: f64, dt: f64) -> f64 {
    -(-kappa * dt).exp_m1()
}

/// Probability that a Brownian bridge with variance rate `var` crosses the
/// nearest boundary between two interior points at distances `phi0`, `phi1`.
pub fn bridge_crossing_probability(phi0: f64, phi1: f64, var: f64, dt: f64) -> f64 {
    if var <= 0.0 {
        return 0.0;
    }
    (-2.0 * phi0 * phi1 / (var * dt)).exp()
}

/// One Euler-Maruyama step with kill detection, drawing noise from `rng`.
pub fn step(
    model: &DiffusionModel,
    domain: &Domain,
    p: &Particle,
    dt: f64,
    opts: StepOptions,
    rng: &mut CounterRng,
) -> Result<StepOutcome> {
    if !(dt > 0.0) {
        return Err(FvError::InvalidStep(dt));
    }
    let kappa = model.kappa(p.t, &p.e, &p.x);
    let kill_uniform = if kappa > 0.0 { rng.open01() } else { 1.0 };
    if kill_uniform < soft_kill_probability(kappa, dt) {
        return Ok(soft_killed(p, dt));
    }
    let sqdt = dt.sqrt();
    let mut normal = || -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        z * sqdt
    };
    let env_increment: Point = (0..model.env_dim()).map(|_| normal()).collect();
    let space_increment: Point = (0..domain.dim()).map(|_| normal()).collect();
    let bridge_uniform = if opts.bridge && domain.dim() == 1 {
        rng.open01()
    } else {
        1.0
    };
    step_with_noise(
        model,
        domain,
        p,
        dt,
        opts,
        &StepNoise {
            kill_uniform,
            env_increment,
            space_increment,
            bridge_uniform,
        },
    )
}

fn soft_killed(p: &Particle, dt: f64) -> StepOutcome {
    StepOutcome::Killed(KillEvent {
        kind: KillKind::Soft,
        time: p.t + dt,
        pre_kill: p.clone(),
    })
}

/// Deterministic step given explicit noise.
pub fn step_with_noise(
    model: &DiffusionModel,
    domain: &Domain,
    p: &Particle,
    dt: f64,
    opts: StepOptions,
    noise: &StepNoise,
) -> Result<StepOutcome> {
    if !(dt > 0.0) {
        return Err(FvError::InvalidStep(dt));
    }
    let (t, e, x) = (p.t, &p.e[..], &p.x[..]);
    // Soft kill is resolved before the move.
    let kappa = model.kappa(t, e, x);
    if kappa > 0.0 && noise.kill_uniform < soft_kill_probability(kappa, dt) {
        return Ok(soft_killed(p, dt));
    }

    let mut e_new = p.e.clone();
    if !e_new.is_empty() {
        let m = model.env_drift(t, e, x);
        let s = model.env_diffusion(t, e, x);
        let d = e_new.len();
        for k in 0..d {
            let diff: f64 = (0..d).map(|l| s[k * d + l] * noise.env_increment[l]).sum();
            e_new[k] += m[k] * dt + diff;
        }
    }

    let c = model.sigma_scalar(domain, x);
    let eta = model.eta(t, e, x);
    let mut x_new = p.x.clone();
    for k in 0..x_new.len() {
        x_new[k] += eta[k] * dt + c * noise.space_increment[k];
    }

    let phi_new = domain.phi(&x_new);
    let hard = phi_new <= 0.0
        || (opts.bridge
            && x_new.len() == 1
            && noise.bridge_uniform < bridge_crossing_probability(domain.phi(x), phi_new, c * c, dt));
    if hard {
        return Ok(StepOutcome::Killed(KillEvent {
            kind: KillKind::Hard,
            time: t + dt,
            pre_kill: p.clone(),
        }));
    }
    Ok(StepOutcome::Alive(Particle {
        t: t + dt,
        e: e_new,
        x: x_new,
    }))
}
