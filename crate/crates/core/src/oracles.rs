//! Ground truth the particle system can be compared against: plain
//! rejection sampling of the conditioned diffusion, and the leading
//! Dirichlet eigenfunction on an interval.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::InitSpec;
use crate::error::{FvError, Result};
use crate::geometry::{Domain, Point};
use crate::rng::{CounterRng, INIT_STEP};
use crate::sde::{self, DiffusionModel, Particle, StepOptions, StepOutcome};
use crate::stats::EmpiricalMeasure;

/// Positions at time `t` of the independent paths that were still alive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalSample {
    pub t: f64,
    pub survivors: Vec<Point>,
    pub attempts: usize,
    pub survival_rate: f64,
}

impl ConditionalSample {
    pub fn measure(&self) -> Result<EmpiricalMeasure> {
        EmpiricalMeasure::new(self.t, self.survivors.clone())
    }
}

/// Simulates `attempts` independent killed paths from `init` with the same
/// stepping kernel as the particle system and keeps the survivors at `t`.
///
/// Path `k` uses stream `k` of `seed`, so its trajectory matches that of
/// particle `k` of a system with the same seed up to its first kill.
#[allow(clippy::too_many_arguments)]
pub fn rejection_conditional(
    model: &DiffusionModel,
    domain: &Domain,
    init: &InitSpec,
    t: f64,
    attempts: usize,
    dt: f64,
    seed: u64,
    opts: StepOptions,
) -> Result<ConditionalSample> {
    if !(t > 0.0) {
        return Err(FvError::Range(format!("horizon must be positive, got {t}")));
    }
    if attempts == 0 {
        return Err(FvError::Range("need at least one attempt".into()));
    }
    if !(dt > 0.0) {
        return Err(FvError::InvalidStep(dt));
    }
    init.validate(domain)?;
    let steps = (t / dt - 1e-9).ceil().max(1.0) as u64;
    let survivors: Vec<Point> = (0..attempts as u64)
        .into_par_iter()
        .map(|k| -> Result<Option<Point>> {
            let mut p = Particle {
                t: 0.0,
                e: model.default_env(),
                x: init.sample(domain, &mut CounterRng::new(seed, k, INIT_STEP))?,
            };
            for s in 0..steps {
                let mut rng = CounterRng::new(seed, k, s);
                match sde::step(model, domain, &p, dt, opts, &mut rng)? {
                    StepOutcome::Alive(q) => p = q,
                    StepOutcome::Killed(_) => return Ok(None),
                }
            }
            Ok(Some(p.x))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    if survivors.is_empty() {
        return Err(FvError::AllKilled { attempts, t });
    }
    Ok(ConditionalSample {
        t,
        survival_rate: survivors.len() as f64 / attempts as f64,
        survivors,
        attempts,
    })
}

/// Leading Dirichlet eigenpair of `(1/2) d^2/dx^2` on an interval,
/// normalised to a probability density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralQSD {
    /// Interior grid points.
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    /// Decay rate of the survival probability (positive).
    pub eigenvalue: f64,
    pub lo: f64,
    pub hi: f64,
    /// CDF at the nodes `lo, grid.., hi`.
    cumulative: Vec<f64>,
}

const MAX_ITERATIONS: usize = 500;
const TOLERANCE: f64 = 1e-12;

/// Solves the tridiagonal system `T x = d` with constant diagonal `diag` and
/// off-diagonals `off` (Thomas algorithm).
fn solve_tridiagonal(diag: f64, off: f64, d: &[f64], scratch: &mut [f64], out: &mut [f64]) {
    let n = d.len();
    scratch[0] = off / diag;
    out[0] = d[0] / diag;
    for i in 1..n {
        let m = diag - off * scratch[i - 1];
        scratch[i] = off / m;
        out[i] = (d[i] - off * out[i - 1]) / m;
    }
    for i in (0..n - 1).rev() {
        out[i] -= scratch[i] * out[i + 1];
    }
}

/// Leading eigenpair by inverse power iteration on `n` interior points.
pub fn spectral_qsd_interval(domain: &Domain, n: usize) -> Result<SpectralQSD> {
    if domain.dim() != 1 {
        return Err(FvError::Dimension(domain.dim()));
    }
    if n < 3 {
        return Err(FvError::Range(format!("need at least 3 grid points, got {n}")));
    }
    let (lo, hi) = domain.bounding_box();
    let (lo, hi) = (lo[0], hi[0]);
    let h = (hi - lo) / (n + 1) as f64;
    // -(1/2) second difference: SPD with diagonal 1/h^2, off-diagonal -1/(2h^2).
    let diag = 1.0 / (h * h);
    let off = -0.5 / (h * h);
    let grid: Vec<f64> = (1..=n).map(|i| lo + i as f64 * h).collect();

    let normalize = |v: &mut [f64]| {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
    };
    let mut v: Vec<f64> = grid.iter().map(|&x| (x - lo) * (hi - x)).collect();
    normalize(&mut v);
    let mut w = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let mut change = f64::INFINITY;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        solve_tridiagonal(diag, off, &v, &mut scratch, &mut w);
        normalize(&mut w);
        change = v.iter().zip(&w).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        std::mem::swap(&mut v, &mut w);
        if change < TOLERANCE {
            break;
        }
    }
    if !(change < TOLERANCE) {
        return Err(FvError::Convergence { residual: change, iterations });
    }
    // Rayleigh quotient v^T T v with |v| = 1.
    let eigenvalue = (0..n)
        .map(|i| {
            let left = if i > 0 { v[i - 1] } else { 0.0 };
            let right = if i + 1 < n { v[i + 1] } else { 0.0 };
            v[i] * (diag * v[i] + off * (left + right))
        })
        .sum::<f64>();

    let sign = if v.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
    // Trapezoid rule with zero boundary values reduces to h * sum.
    let mass = h * v.iter().map(|x| sign * x).sum::<f64>();
    let density: Vec<f64> = v.iter().map(|x| (sign * x / mass).max(0.0)).collect();
    let mut cumulative = Vec::with_capacity(n + 2);
    let mut acc = 0.0;
    cumulative.push(0.0);
    for j in 0..=n {
        let left = if j == 0 { 0.0 } else { density[j - 1] };
        let right = if j == n { 0.0 } else { density[j] };
        acc += 0.5 * h * (left + right);
        cumulative.push(acc);
    }
    Ok(SpectralQSD { grid, density, eigenvalue, lo, hi, cumulative })
}

impl SpectralQSD {
    fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.grid.len() + 1) as f64
    }

    /// Piecewise-linear interpolation, zero at and beyond the endpoints.
    pub fn density_at(&self, x: f64) -> f64 {
        if !(x > self.lo && x < self.hi) {
            return 0.0;
        }
        let h = self.step();
        let s = (x - self.lo) / h;
        let k = (s.floor() as usize).min(self.grid.len());
        let node = |j: usize| if j == 0 || j > self.grid.len() { 0.0 } else { self.density[j - 1] };
        let frac = s - k as f64;
        node(k) * (1.0 - frac) + node(k + 1) * frac
    }

    /// Exact integral of the interpolated density from the left endpoint.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.lo {
            return 0.0;
        }
        if x >= self.hi {
            return 1.0;
        }
        let h = self.step();
        let s = (x - self.lo) / h;
        let k = (s.floor() as usize).min(self.grid.len());
        let node = |j: usize| if j == 0 || j > self.grid.len() { 0.0 } else { self.density[j - 1] };
        let full = self.cumulative[k];
        let frac = s - k as f64;
        let partial = h * frac * (node(k) + 0.5 * frac * (node(k + 1) - node(k)));
        (full + partial).min(1.0)
    }
}
