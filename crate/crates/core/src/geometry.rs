//! Bounded open domains and their distance-to-boundary function.
//!
//! `phi` is the Euclidean distance to the boundary inside the domain and is
//! clamped to zero outside it, which keeps it total and 1-Lipschitz.

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{FvError, Result};
use crate::rng::CounterRng;

/// A point of the ambient space. Inline storage covers the common d <= 4.
pub type Point = SmallVec<[f64; 4]>;

/// Config-file form of a domain: `domain = { kind = "interval", a = 0.0, b = 1.0 }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainSpec {
    Interval { a: f64, b: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DomainSpec", into = "DomainSpec")]
pub struct Domain {
    shape: Shape,
}

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    Interval { a: f64, b: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

/// Width of the boundary neighbourhood `D^a = { x in D : phi(x) < a }`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct BoundaryBand(f64);

impl BoundaryBand {
    pub fn new(a: f64) -> Result<Self> {
        if a > 0.0 && a.is_finite() {
            Ok(Self(a))
        } else {
            Err(FvError::Range(format!("band width must be positive, got {a}")))
        }
    }

    pub fn width(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for BoundaryBand {
    type Error = FvError;
    fn try_from(a: f64) -> Result<Self> {
        Self::new(a)
    }
}

impl From<BoundaryBand> for f64 {
    fn from(b: BoundaryBand) -> f64 {
        b.0
    }
}

impl TryFrom<DomainSpec> for Domain {
    type Error = FvError;

    fn try_from(spec: DomainSpec) -> Result<Self> {
        match spec {
            DomainSpec::Interval { a, b } => Domain::interval(a, b),
            DomainSpec::Box { lo, hi } => Domain::box_(lo, hi),
            DomainSpec::Ball { center, radius } => Domain::ball(center, radius),
        }
    }
}

impl From<Domain> for DomainSpec {
    fn from(d: Domain) -> Self {
        match d.shape {
            Shape::Interval { a, b } => DomainSpec::Interval { a, b },
            Shape::Box { lo, hi } => DomainSpec::Box { lo, hi },
            Shape::Ball { center, radius } => DomainSpec::Ball { center, radius },
        }
    }
}

fn finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

impl Domain {
    pub fn interval(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(FvError::config("domain", format!("interval needs a < b, got ({a}, {b})")));
        }
        Ok(Self { shape: Shape::Interval { a, b } })
    }

    pub fn box_(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(FvError::config("domain", "box corners must be non-empty and of equal length"));
        }
        if !finite(&lo) || !finite(&hi) || lo.iter().zip(&hi).any(|(l, h)| l >= h) {
            return Err(FvError::config("domain", "box needs lo < hi componentwise"));
        }
        Ok(Self { shape: Shape::Box { lo, hi } })
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.is_empty() || !finite(&center) {
            return Err(FvError::config("domain", "ball center must be a non-empty finite vector"));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(FvError::config("domain", format!("ball radius must be positive, got {radius}")));
        }
        Ok(Self { shape: Shape::Ball { center, radius } })
    }

    pub fn dim(&self) -> usize {
        match &self.shape {
            Shape::Interval { .. } => 1,
            Shape::Box { lo, .. } => lo.len(),
            Shape::Ball { center, .. } => center.len(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.shape {
            Shape::Interval { .. } => "interval",
            Shape::Box { .. } => "box",
            Shape::Ball { .. } => "ball",
        }
    }

    /// Distance to the boundary, zero on and outside the boundary.
    pub fn phi(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        let d = match &self.shape {
            Shape::Interval { a, b } => (x[0] - a).min(b - x[0]),
            Shape::Box { lo, hi } => lo
                .iter()
                .zip(hi)
                .zip(x)
                .map(|((l, h), xi)| (xi - l).min(h - xi))
                .fold(f64::INFINITY, f64::min),
            Shape::Ball { center, radius } => radius - norm_diff(x, center),
        };
        // NaN coordinates also land here.
        if d > 0.0 {
            d
        } else {
            0.0
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && self.phi(x) > 0.0
    }

    pub fn in_band(&self, x: &[f64], band: BoundaryBand) -> bool {
        let p = self.phi(x);
        p > 0.0 && p < band.width()
    }

    /// Largest value of `phi` over the domain.
    pub fn sup_phi(&self) -> f64 {
        match &self.shape {
            Shape::Interval { a, b } => 0.5 * (b - a),
            Shape::Box { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(l, h)| 0.5 * (h - l))
                .fold(f64::INFINITY, f64::min),
            Shape::Ball { radius, .. } => *radius,
        }
    }

    pub fn diameter(&self) -> f64 {
        match &self.shape {
            Shape::Interval { a, b } => b - a,
            Shape::Box { lo, hi } => norm_diff(hi, lo),
            Shape::Ball { radius, .. } => 2.0 * radius,
        }
    }

    /// Axis-aligned bounding box `(lo, hi)` of the closure.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match &self.shape {
            Shape::Interval { a, b } => (vec![*a], vec![*b]),
            Shape::Box { lo, hi } => (lo.clone(), hi.clone()),
            Shape::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
        }
    }

    /// Gradient of `phi` at a point where it is differentiable.
    pub fn grad_phi(&self, x: &[f64]) -> Result<Point> {
        self.check_inside(x)?;
        let non_smooth = || FvError::NonSmoothPoint { point: x.to_vec() };
        match &self.shape {
            Shape::Interval { a, b } => {
                let (left, right) = (x[0] - a, b - x[0]);
                if left == right {
                    return Err(non_smooth());
                }
                Ok(SmallVec::from_elem(if left < right { 1.0 } else { -1.0 }, 1))
            }
            Shape::Box { .. } => {
                let (axis, sign) = self.nearest_face(x).ok_or_else(non_smooth)?;
                let mut g: Point = SmallVec::from_elem(0.0, x.len());
                g[axis] = sign;
                Ok(g)
            }
            Shape::Ball { center, .. } => {
                let r = norm_diff(x, center);
                if r == 0.0 {
                    return Err(non_smooth());
                }
                Ok(x.iter().zip(center).map(|(xi, ci)| -(xi - ci) / r).collect())
            }
        }
    }

    /// Hessian of `phi`, row-major `dim x dim`.
    pub fn hess_phi(&self, x: &[f64]) -> Result<Vec<f64>> {
        let g = self.grad_phi(x)?;
        let d = x.len();
        let mut h = vec![0.0; d * d];
        if let Shape::Ball { center, .. } = &self.shape {
            // phi = R - |x - c|, so Hess = -(I - u u^T) / |x - c| with u = -grad.
            let r = norm_diff(x, center);
            for k in 0..d {
                for l in 0..d {
                    let id = if k == l { 1.0 } else { 0.0 };
                    h[k * d + l] = -(id - g[k] * g[l]) / r;
                }
            }
        }
        Ok(h)
    }

    /// Axis and inward sign of the unique nearest box face, `None` on ties.
    fn nearest_face(&self, x: &[f64]) -> Option<(usize, f64)> {
        let Shape::Box { lo, hi } = &self.shape else {
            return None;
        };
        let mut best = (f64::INFINITY, 0, 0.0);
        let mut tie = false;
        for k in 0..lo.len() {
            for (dist, sign) in [(x[k] - lo[k], 1.0), (hi[k] - x[k], -1.0)] {
                if dist < best.0 {
                    best = (dist, k, sign);
                    tie = false;
                } else if dist == best.0 {
                    tie = true;
                }
            }
        }
        (!tie).then_some((best.1, best.2))
    }

    /// Number of box faces within distance `a` of `x`; 1 for smooth band
    /// regions, 2 or more near edges and corners. Always 1 for other shapes.
    pub fn faces_within(&self, x: &[f64], a: f64) -> usize {
        match &self.shape {
            Shape::Box { lo, hi } => (0..lo.len())
                .map(|k| usize::from(x[k] - lo[k] < a) + usize::from(hi[k] - x[k] < a))
                .sum(),
            _ => 1,
        }
    }

    fn check_inside(&self, x: &[f64]) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(FvError::DomainViolation { point: x.to_vec() })
        }
    }

    /// Uniform point of the domain by rejection from the bounding box.
    pub fn sample_uniform(&self, rng: &mut CounterRng) -> Point {
        let (lo, hi) = self.bounding_box();
        loop {
            let x: Point = lo
                .iter()
                .zip(&hi)
                .map(|(l, h)| l + (h - l) * rng.open01())
                .collect();
            if self.contains(&x) {
                return x;
            }
        }
    }

    /// Uniform point of the band `D^a` by rejection from the domain.
    pub fn sample_band(&self, band: BoundaryBand, rng: &mut CounterRng) -> Point {
        loop {
            let x = self.sample_uniform(rng);
            if self.in_band(&x, band) {
                return x;
            }
        }
    }

    /// Uniform point of the boundary (faces weighted by measure for boxes).
    pub fn sample_boundary(&self, rng: &mut CounterRng) -> Point {
        match &self.shape {
            Shape::Interval { a, b } => {
                SmallVec::from_elem(if rng.open01() < 0.5 { *a } else { *b }, 1)
            }
            Shape::Box { lo, hi } => {
                let d = lo.len();
                let face_area = |k: usize| -> f64 {
                    (0..d).filter(|&m| m != k).map(|m| hi[m] - lo[m]).product()
                };
                let total: f64 = (0..d).map(|k| 2.0 * face_area(k)).sum();
                let mut u = rng.open01() * total;
                let mut face = (d - 1, true);
                'outer: for k in 0..d {
                    for upper in [false, true] {
                        u -= face_area(k);
                        if u <= 0.0 {
                            face = (k, upper);
                            break 'outer;
                        }
                    }
                }
                let mut x: Point = lo
                    .iter()
                    .zip(hi)
                    .map(|(l, h)| l + (h - l) * rng.open01())
                    .collect();
                x[face.0] = if face.1 { hi[face.0] } else { lo[face.0] };
                x
            }
            Shape::Ball { center, radius } => {
                use rand_distr::{Distribution, StandardNormal};
                loop {
                    let z: Point = (0..center.len())
                        .map(|_| StandardNormal.sample(rng))
                        .collect();
                    let n = z.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if n > 0.0 {
                        return z.iter().zip(center).map(|(zi, c)| c + radius * zi / n).collect();
                    }
                }
            }
        }
    }

    /// The point at distance `delta` from boundary face `face`.
    ///
    /// Interval faces are 0 (left) and 1 (right); box face `2k` is the lower
    /// face of axis `k` and `2k + 1` the upper one, with the other coordinates
    /// at the box centre; for a ball, face `k` is the pole in direction `+e_k`.
    pub fn point_near_face(&self, delta: f64, face: usize) -> Result<Point> {
        if !(delta > 0.0) {
            return Err(FvError::config("init.distance", format!("must be positive, got {delta}")));
        }
        let too_far = |limit: f64| {
            FvError::config(
                "init.distance",
                format!("distance {delta} must be below {limit} for this domain"),
            )
        };
        let bad_face = || FvError::config("init.face", format!("face {face} does not exist"));
        match &self.shape {
            Shape::Interval { a, b } => {
                let half = 0.5 * (b - a);
                if delta >= half {
                    return Err(too_far(half));
                }
                match face {
                    0 => Ok(SmallVec::from_elem(a + delta, 1)),
                    1 => Ok(SmallVec::from_elem(b - delta, 1)),
                    _ => Err(bad_face()),
                }
            }
            Shape::Box { lo, hi } => {
                let k = face / 2;
                if k >= lo.len() {
                    return Err(bad_face());
                }
                let half = 0.5 * (hi[k] - lo[k]);
                if delta >= half {
                    return Err(too_far(half));
                }
                let mut x: Point = lo.iter().zip(hi).map(|(l, h)| 0.5 * (l + h)).collect();
                x[k] = if face.is_multiple_of(2) { lo[k] + delta } else { hi[k] - delta };
                Ok(x)
            }
            Shape::Ball { center, radius } => {
                if face >= center.len() {
                    return Err(bad_face());
                }
                if delta >= *radius {
                    return Err(too_far(*radius));
                }
                let mut x: Point = center.iter().copied().collect();
                x[face] += radius - delta;
                Ok(x)
            }
        }
    }
}

fn norm_diff(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}
