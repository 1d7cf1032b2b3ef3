//! Empirical measures of the particle positions and distances between them.

mod sweep;

pub use sweep::{
    mean_and_stderr, pair_proximity, tightness_sweep, PairProximity, PairProximityStat, SweepGrid, TightnessRow,
    TightnessSweep, TightnessTable,
};

use serde::{Deserialize, Serialize};

use crate::engine::ParticleSystem;
use crate::error::{FvError, Result};
use crate::geometry::{BoundaryBand, Domain, Point};

/// `(1/N) sum_i delta_{x_i}` at time `t`. Environments are not kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    t: f64,
    dim: usize,
    positions: Vec<Point>,
}

impl EmpiricalMeasure {
    pub fn new(t: f64, positions: Vec<Point>) -> Result<Self> {
        let dim = positions.first().map_or(0, |p| p.len());
        if positions.is_empty() || positions.iter().any(|p| p.len() != dim) {
            return Err(FvError::Range("a measure needs at least one atom of consistent dimension".into()));
        }
        Ok(Self { t, dim, positions })
    }

    /// One-dimensional measure from plain values.
    pub fn from_values(t: f64, values: &[f64]) -> Result<Self> {
        Self::new(t, values.iter().map(|&v| smallvec::smallvec![v]).collect())
    }

    pub fn snapshot(system: &ParticleSystem) -> Self {
        Self {
            t: system.time(),
            dim: system.config().domain.dim(),
            positions: system.particles().iter().map(|p| p.x.clone()).collect(),
        }
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn atom_weight(&self) -> f64 {
        1.0 / self.positions.len() as f64
    }

    /// Mass of the set `{x : pred(x)}`.
    pub fn mass_where(&self, mut pred: impl FnMut(&[f64]) -> bool) -> f64 {
        self.positions.iter().filter(|p| pred(p)).count() as f64 * self.atom_weight()
    }

    /// `mu(D^a)`: fraction of atoms with `0 < phi < a`.
    pub fn boundary_mass(&self, domain: &Domain, band: BoundaryBand) -> f64 {
        self.mass_where(|x| domain.in_band(x, band))
    }

    /// Sorted coordinates of a one-dimensional measure.
    pub fn sorted_values(&self) -> Result<Vec<f64>> {
        if self.dim != 1 {
            return Err(FvError::Dimension(self.dim));
        }
        let mut v: Vec<f64> = self.positions.iter().map(|p| p[0]).collect();
        v.sort_by(f64::total_cmp);
        Ok(v)
    }
}

/// Two-sample Kolmogorov distance `sup_x |F1(x) - F2(x)|` of 1D measures.
pub fn kolmogorov_distance(mu1: &EmpiricalMeasure, mu2: &EmpiricalMeasure) -> Result<f64> {
    let a = mu1.sorted_values()?;
    let b = mu2.sorted_values()?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() || j < b.len() {
        let v = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Kolmogorov distance between a 1D measure and a continuous CDF.
pub fn kolmogorov_to_cdf(mu: &EmpiricalMeasure, cdf: impl Fn(f64) -> f64) -> Result<f64> {
    let v = mu.sorted_values()?;
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    let mut k = 0;
    while k < v.len() {
        let x = v[k];
        let below = k as f64 / n;
        while k < v.len() && v[k] == x {
            k += 1;
        }
        let at = k as f64 / n;
        let f = cdf(x);
        d = d.max((f - below).abs()).max((at - f).abs());
    }
    Ok(d)
}

/// Regular grid of bins over `[lo, hi]`, `counts[k]` cells along axis `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bins {
    lo: Vec<f64>,
    hi: Vec<f64>,
    counts: Vec<usize>,
}

impl Bins {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, counts: Vec<usize>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() || lo.len() != counts.len() {
            return Err(FvError::Bin("bin grid dimensions disagree".into()));
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(l < h)) || counts.contains(&0) {
            return Err(FvError::Bin("empty bin grid".into()));
        }
        Ok(Self { lo, hi, counts })
    }

    /// Grid over the bounding box of `domain`.
    pub fn covering(domain: &Domain, per_axis: usize) -> Result<Self> {
        let (lo, hi) = domain.bounding_box();
        let d = lo.len();
        Self::new(lo, hi, vec![per_axis; d])
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn covers(&self, domain: &Domain) -> bool {
        let (lo, hi) = domain.bounding_box();
        lo.len() == self.lo.len()
            && lo.iter().zip(&self.lo).all(|(d, b)| d >= b)
            && hi.iter().zip(&self.hi).all(|(d, b)| d <= b)
    }

    /// Flat index of the cell containing `x`; the upper faces are closed.
    #[allow(clippy::needless_range_loop)]
    pub fn index(&self, x: &[f64]) -> Option<usize> {
        let mut idx = 0;
        for k in 0..self.lo.len() {
            let (l, h, c) = (self.lo[k], self.hi[k], self.counts[k]);
            if !(x[k] >= l && x[k] <= h) {
                return None;
            }
            let cell = (((x[k] - l) / (h - l)) * c as f64).floor() as usize;
            idx = idx * c + cell.min(c - 1);
        }
        Some(idx)
    }

    fn histogram(&self, mu: &EmpiricalMeasure) -> Result<Vec<f64>> {
        let mut h = vec![0.0; self.len()];
        let w = mu.atom_weight();
        for p in mu.positions() {
            let i = self
                .index(p)
                .ok_or_else(|| FvError::Bin(format!("atom {:?} lies outside the bins", p.as_slice())))?;
            h[i] += w;
        }
        Ok(h)
    }
}

/// `sum_b |mu1(b) - mu2(b)|` over bins that cover the domain.
pub fn histogram_l1(mu1: &EmpiricalMeasure, mu2: &EmpiricalMeasure, bins: &Bins, domain: &Domain) -> Result<f64> {
    if !bins.covers(domain) {
        return Err(FvError::Bin("bins do not cover the domain".into()));
    }
    let h1 = bins.histogram(mu1)?;
    let h2 = bins.histogram(mu2)?;
    Ok(h1.iter().zip(&h2).map(|(a, b)| (a - b).abs()).sum())
}
