//! Replicated experiments on boundary mass and pair proximity.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{InitSpec, JumpMeasures, ParticleSystem, SystemConfig};
use crate::error::{FvError, Result};
use crate::geometry::{BoundaryBand, Domain};
use crate::rng::derive_seed;
use crate::sde::{DiffusionModel, StepOptions};

/// Sample mean and its standard error (`sd / sqrt(n)`, unbiased variance).
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub n_values: Vec<usize>,
    pub horizons: Vec<f64>,
    pub a_values: Vec<f64>,
}

/// Everything a tightness sweep needs.
#[derive(Debug, Clone)]
pub struct TightnessSweep {
    pub grid: SweepGrid,
    pub model: DiffusionModel,
    pub domain: Domain,
    pub measures: JumpMeasures,
    pub init: InitSpec,
    pub replicas: usize,
    pub t0: f64,
    pub dt: f64,
    pub options: StepOptions,
    pub explosion_cap: f64,
    pub base_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TightnessRow {
    pub n: usize,
    pub t: f64,
    pub a: f64,
    pub replicas: usize,
    pub estimate: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TightnessTable {
    pub rows: Vec<TightnessRow>,
}

impl TightnessTable {
    pub fn get(&self, n: usize, t: f64, a: f64) -> Option<&TightnessRow> {
        self.rows.iter().find(|r| r.n == n && r.t == t && r.a == a)
    }

    /// Largest tested `a` whose estimate is at most `epsilon + k_se * stderr`
    /// for every row with `N >= n_min`, provided every smaller tested `a`
    /// qualifies too.
    pub fn a_epsilon(&self, epsilon: f64, n_min: usize, k_se: f64) -> Option<f64> {
        let mut a_values: Vec<f64> = self.rows.iter().map(|r| r.a).collect();
        a_values.sort_by(f64::total_cmp);
        a_values.dedup();
        let mut best = None;
        for a in a_values {
            let ok = self
                .rows
                .iter()
                .filter(|r| r.a == a && r.n >= n_min)
                .all(|r| r.estimate <= epsilon + k_se * r.stderr);
            if !ok {
                break;
            }
            best = Some(a);
        }
        best
    }
}

fn system_config(s: &TightnessSweep, n: usize, init: InitSpec) -> SystemConfig {
    let mut cfg = SystemConfig::new(n, s.dt, s.domain.clone(), s.model.clone(), init);
    cfg.options = s.options;
    cfg.explosion_cap = s.explosion_cap;
    cfg.record_events = false;
    cfg
}

/// For each `(N, T)`, averages `mu^N_T(D^a)` over independent replicas.
pub fn tightness_sweep(s: &TightnessSweep) -> Result<TightnessTable> {
    let grid = &s.grid;
    if s.replicas < 2 {
        return Err(FvError::config("replicas", "a sweep needs at least 2 replicas"));
    }
    if !(s.t0 > 0.0) || grid.horizons.iter().any(|&t| t < s.t0) {
        return Err(FvError::config("horizons", "every horizon T must satisfy T >= t0 > 0"));
    }
    let bands = grid
        .a_values
        .iter()
        .map(|&a| BoundaryBand::new(a))
        .collect::<Result<Vec<_>>>()?;
    let t_max = grid.horizons.iter().copied().fold(0.0, f64::max);

    let mut rows = Vec::new();
    for &n in &grid.n_values {
        // masses[replica][horizon][band]
        let masses = (0..s.replicas as u64)
            .into_par_iter()
            .map(|r| -> Result<Vec<Vec<f64>>> {
                let seed = derive_seed(s.base_seed, &[n as u64, r]);
                let mut sys = ParticleSystem::new(system_config(s, n, s.init.clone()), seed)?;
                let mut out = vec![Vec::new(); grid.horizons.len()];
                sys.run(&s.measures, t_max, &grid.horizons, |k, mu| {
                    out[k] = bands.iter().map(|&b| mu.boundary_mass(&s.domain, b)).collect();
                })?;
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()?;
        for (k, &t) in grid.horizons.iter().enumerate() {
            for (b, &a) in grid.a_values.iter().enumerate() {
                let v: Vec<f64> = masses.iter().map(|m| m[k][b]).collect();
                let (estimate, stderr) = mean_and_stderr(&v);
                rows.push(TightnessRow {
                    n,
                    t,
                    a,
                    replicas: s.replicas,
                    estimate,
                    stderr,
                });
            }
        }
    }
    Ok(TightnessTable { rows })
}

/// Pair-proximity experiment: every particle starts at distance `gamma`
/// from boundary face 0, so particle `i` has already reached distance
/// `gamma` at time zero.
#[derive(Debug, Clone)]
pub struct PairProximity {
    pub model: DiffusionModel,
    pub domain: Domain,
    pub measures: JumpMeasures,
    pub n: usize,
    pub i: usize,
    pub j: usize,
    pub gamma: f64,
    pub a_values: Vec<f64>,
    pub t0: f64,
    pub replicas: usize,
    pub dt: f64,
    pub options: StepOptions,
    pub explosion_cap: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairProximityStat {
    pub i: usize,
    pub j: usize,
    pub gamma: f64,
    pub a: f64,
    pub t0: f64,
    pub n: usize,
    pub replicas: usize,
    /// Estimate of `P(phi(X^i_t0) <= a and phi(X^j_t0) <= a)`.
    pub estimate: f64,
    pub stderr: f64,
}

/// Estimates the joint near-boundary probability of particles `i` and `j`
/// at `t0` for each `a`, all from the same runs.
pub fn pair_proximity(p: &PairProximity) -> Result<Vec<PairProximityStat>> {
    if p.i == p.j || p.i >= p.n || p.j >= p.n {
        return Err(FvError::Range(format!("need distinct particle indices below {}, got ({}, {})", p.n, p.i, p.j)));
    }
    let limit = p.gamma * p.model.bounds().ellipticity_ratio();
    if let Some(a) = p.a_values.iter().find(|&&a| !(a >= 0.0 && a < limit)) {
        return Err(FvError::Range(format!("a = {a} must lie in [0, gamma sqrt(c0/C0)) = [0, {limit})")));
    }
    if p.replicas < 2 {
        return Err(FvError::config("replicas", "need at least 2 replicas"));
    }
    let init = InitSpec::Boundary { distance: p.gamma, face: 0 };
    let pairs = (0..p.replicas as u64)
        .into_par_iter()
        .map(|r| -> Result<(f64, f64)> {
            let mut cfg = SystemConfig::new(p.n, p.dt, p.domain.clone(), p.model.clone(), init.clone());
            cfg.options = p.options;
            cfg.explosion_cap = p.explosion_cap;
            cfg.record_events = false;
            let mut sys = ParticleSystem::new(cfg, derive_seed(p.seed, &[p.n as u64, r]))?;
            sys.run(&p.measures, p.t0, &[], |_, _| {})?;
            let ps = sys.particles();
            Ok((p.domain.phi(&ps[p.i].x), p.domain.phi(&ps[p.j].x)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(p
        .a_values
        .iter()
        .map(|&a| {
            let hits: Vec<f64> = pairs
                .iter()
                .map(|&(pi, pj)| f64::from(u8::from(pi <= a && pj <= a)))
                .collect();
            let (estimate, stderr) = mean_and_stderr(&hits);
            PairProximityStat {
                i: p.i,
                j: p.j,
                gamma: p.gamma,
                a,
                t0: p.t0,
                n: p.n,
                replicas: p.replicas,
                estimate,
                stderr,
            }
        })
        .collect())
}
