//! The N-particle system: independent diffusion between kills, sequential
//! jump resolution, and the explosion guard.

mod compliance;
mod log;
mod policy;

pub use compliance::{check_compliance, check_compliance_with, uniform_kill_configuration, ComplianceReport, KillConfiguration};
pub use log::{JumpEvent, JumpLog};
pub use policy::{HFunction, JumpMeasures, JumpPolicy, WeightFn};

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FvError, Result};
use crate::geometry::{Domain, Point};
use crate::rng::{CounterRng, INIT_STEP, JUMP_STREAM};
use crate::sde::{self, DiffusionModel, KillKind, Particle, StepOptions, StepOutcome};
use crate::stats::EmpiricalMeasure;

/// Systems at least this large step their particles on the rayon pool.
const PARALLEL_STEP_THRESHOLD: usize = 4096;

/// Initial distribution of every particle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSpec {
    Point { x0: Vec<f64> },
    Uniform,
    /// Point at distance `distance` from boundary face `face`
    /// (see [`Domain::point_near_face`]).
    Boundary {
        distance: f64,
        #[serde(default)]
        face: usize,
    },
}

impl InitSpec {
    /// Checks the spec against the domain.
    pub fn validate(&self, domain: &Domain) -> Result<()> {
        match self {
            InitSpec::Point { x0 } => {
                if domain.contains(x0) {
                    Ok(())
                } else {
                    Err(FvError::config("init.x0", format!("{x0:?} is not inside the domain")))
                }
            }
            InitSpec::Uniform => Ok(()),
            InitSpec::Boundary { distance, face } => domain.point_near_face(*distance, *face).map(|_| ()),
        }
    }

    pub fn sample(&self, domain: &Domain, rng: &mut CounterRng) -> Result<Point> {
        match self {
            InitSpec::Point { x0 } => {
                self.validate(domain)?;
                Ok(x0.iter().copied().collect())
            }
            InitSpec::Uniform => Ok(domain.sample_uniform(rng)),
            InitSpec::Boundary { distance, face } => domain.point_near_face(*distance, *face),
        }
    }
}

/// Static description of a particle system.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub n: usize,
    pub dt: f64,
    pub domain: Domain,
    pub model: DiffusionModel,
    pub init: InitSpec,
    pub options: StepOptions,
    /// Jumps allowed per unit time window, as a multiple of `N * max(A, 1)`.
    pub explosion_cap: f64,
    /// Keep every jump event (window counts are always kept).
    pub record_events: bool,
}

impl SystemConfig {
    pub fn new(n: usize, dt: f64, domain: Domain, model: DiffusionModel, init: InitSpec) -> Self {
        Self {
            n,
            dt,
            domain,
            model,
            init,
            options: StepOptions::default(),
            explosion_cap: 50.0,
            record_events: true,
        }
    }

    pub fn jump_cap(&self) -> u64 {
        (self.explosion_cap * self.n as f64 * self.model.bounds().a_bound.max(1.0)).ceil() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub n: usize,
    pub final_time: f64,
    pub steps: u64,
    pub total_jumps: u64,
    pub max_window_count: u64,
    pub wall_time_secs: f64,
    pub final_state: Vec<Particle>,
}

#[derive(Debug, Clone)]
pub struct ParticleSystem {
    config: SystemConfig,
    seed: u64,
    particles: Vec<Particle>,
    step_index: u64,
    jump_log: JumpLog,
}

impl ParticleSystem {
    /// Draws the N initial particles i.i.d. from `config.init`.
    pub fn new(config: SystemConfig, seed: u64) -> Result<Self> {
        if config.n < 2 {
            return Err(FvError::config("n", format!("need at least 2 particles, got {}", config.n)));
        }
        if !(config.dt > 0.0 && config.dt.is_finite()) {
            return Err(FvError::config("dt", format!("must be positive, got {}", config.dt)));
        }
        if config.model.space_dim() != config.domain.dim() {
            return Err(FvError::config("model", "model and domain dimensions differ"));
        }
        config.init.validate(&config.domain)?;
        let particles = (0..config.n)
            .map(|i| {
                let mut rng = CounterRng::new(seed, i as u64, INIT_STEP);
                Ok(Particle {
                    t: 0.0,
                    e: config.model.default_env(),
                    x: config.init.sample(&config.domain, &mut rng)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            jump_log: JumpLog::new(config.record_events),
            config,
            seed,
            particles,
            step_index: 0,
        })
    }

    /// Replaces the particle states, e.g. to start from a relabelled configuration.
    pub fn with_particles(mut self, particles: Vec<Particle>) -> Result<Self> {
        if particles.len() != self.config.n || particles.iter().any(|p| !self.config.domain.contains(&p.x)) {
            return Err(FvError::config("particles", "need N particles inside the domain"));
        }
        self.particles = particles;
        Ok(self)
    }

    pub fn config(&self) -> &SystemConfig {
        &self.config
    }

    pub fn n(&self) -> usize {
        self.config.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn time(&self) -> f64 {
        self.step_index as f64 * self.config.dt
    }

    pub fn steps_taken(&self) -> u64 {
        self.step_index
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn jump_log(&self) -> &JumpLog {
        &self.jump_log
    }

    pub fn snapshot(&self) -> EmpiricalMeasure {
        EmpiricalMeasure::snapshot(self)
    }

    /// Resolves a kill of particle `i` and logs it. Only particle `i` moves.
    pub fn resolve_jump(
        &mut self,
        i: usize,
        kind: KillKind,
        policy: &JumpPolicy,
        rng: &mut CounterRng,
    ) -> Result<Option<usize>> {
        let donor = policy.resolve(i, &mut self.particles, &self.config.domain, &self.config.model, rng)?;
        let time = self.time();
        let window = ((self.step_index.saturating_sub(1)) as f64 * self.config.dt).floor() as u64;
        let count = self.jump_log.push(
            JumpEvent {
                time,
                particle: i,
                kind,
                donor,
            },
            window,
        );
        let cap = self.config.jump_cap();
        if count > cap {
            return Err(FvError::ExplosionGuard { window, count, cap });
        }
        Ok(donor)
    }

    /// Advances every particle by one step of `dt`, then resolves kills in
    /// ascending particle order.
    pub fn advance(&mut self, measures: &JumpMeasures) -> Result<Vec<JumpEvent>> {
        let cfg = &self.config;
        let (seed, step) = (self.seed, self.step_index);
        let step_one = |(i, p): (usize, &Particle)| {
            let mut rng = CounterRng::new(seed, i as u64, step);
            sde::step(&cfg.model, &cfg.domain, p, cfg.dt, cfg.options, &mut rng)
        };
        let outcomes: Vec<StepOutcome> = if self.particles.len() >= PARALLEL_STEP_THRESHOLD {
            self.particles.par_iter().enumerate().map(step_one).collect::<Result<_>>()?
        } else {
            self.particles.iter().enumerate().map(step_one).collect::<Result<_>>()?
        };

        let mut killed = Vec::new();
        for (i, (p, out)) in self.particles.iter_mut().zip(outcomes).enumerate() {
            match out {
                StepOutcome::Alive(q) => *p = q,
                StepOutcome::Killed(k) => {
                    // Sits at its last in-domain state until resolved.
                    *p = k.pre_kill;
                    p.t = k.time;
                    killed.push((i, k.kind));
                }
            }
        }
        self.step_index += 1;
        // Keep particle clocks on the grid instead of accumulating `t + dt`.
        let now = self.time();
        self.particles.iter_mut().for_each(|p| p.t = now);

        let first = self.jump_log.events().len();
        let mut jump_rng = CounterRng::new(seed, JUMP_STREAM, step);
        for &(i, kind) in &killed {
            self.resolve_jump(i, kind, measures.for_kind(kind), &mut jump_rng)?;
        }
        if self.config.record_events {
            Ok(self.jump_log.events()[first..].to_vec())
        } else {
            let time = self.time();
            Ok(killed
                .into_iter()
                .map(|(particle, kind)| JumpEvent { time, particle, kind, donor: None })
                .collect())
        }
    }

    /// Runs until the clock reaches `horizon`, calling `on_snapshot` at the
    /// first grid time at or after each observer time.
    pub fn run(
        &mut self,
        measures: &JumpMeasures,
        horizon: f64,
        observer_times: &[f64],
        mut on_snapshot: impl FnMut(usize, EmpiricalMeasure),
    ) -> Result<RunReport> {
        if !(horizon >= 0.0) {
            return Err(FvError::Range(format!("horizon must be non-negative, got {horizon}")));
        }
        if let Some(t) = observer_times.iter().find(|&&t| !(t >= 0.0 && t <= horizon)) {
            return Err(FvError::Range(format!("observer time {t} outside [0, {horizon}]")));
        }
        let start = Instant::now();
        let dt = self.config.dt;
        let eps = 1e-9 * dt;
        let mut order: Vec<usize> = (0..observer_times.len()).collect();
        order.sort_by(|&a, &b| observer_times[a].total_cmp(&observer_times[b]));
        let mut next = 0;
        let mut fire = |sys: &Self, next: &mut usize| {
            while *next < order.len() && observer_times[order[*next]] <= sys.time() + eps {
                on_snapshot(order[*next], sys.snapshot());
                *next += 1;
            }
        };
        fire(self, &mut next);
        let steps_start = self.step_index;
        while self.time() < horizon - eps {
            self.advance(measures)?;
            fire(self, &mut next);
        }
        Ok(RunReport {
            n: self.n(),
            final_time: self.time(),
            steps: self.step_index - steps_start,
            total_jumps: self.jump_log.total(),
            max_window_count: self.jump_log.max_window_count(),
            wall_time_secs: start.elapsed().as_secs_f64(),
            final_state: self.particles.clone(),
        })
    }
}
