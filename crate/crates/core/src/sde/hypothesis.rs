//! Monte Carlo check of the regularity assumptions a model declares through
//! its [`HypothesisConstants`].
//!
//! Points `(t, e, x)` are sampled uniformly in `[0, t_max] x E x D^{a0}`
//! (`kappa` is checked on the whole of `D`). Points where `phi` is not
//! differentiable are skipped and counted.

use serde::{Deserialize, Serialize};

use super::models::{fg_decomposition, DiffusionModel, HypothesisConstants};
use crate::error::FvError;
use crate::geometry::{BoundaryBand, Domain, Point};
use crate::rng::{CounterRng, AUX_STREAM};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleWitness {
    pub t: f64,
    pub e: Vec<f64>,
    pub x: Vec<f64>,
    /// Checked quantity.
    pub value: f64,
    /// Bound it was compared with.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClauseReport {
    pub clause: String,
    pub passed: bool,
    pub checked: usize,
    pub skipped: usize,
    /// Sample with the largest `value - bound` (or smallest margin for lower bounds).
    pub worst: Option<SampleWitness>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub model: String,
    pub domain: String,
    pub declared: HypothesisConstants,
    pub samples: usize,
    pub t_max: f64,
    pub clauses: Vec<ClauseReport>,
    pub passed: bool,
}

impl HypothesisReport {
    pub fn clause(&self, prefix: &str) -> Option<&ClauseReport> {
        self.clauses.iter().find(|c| c.clause.starts_with(prefix))
    }
}

/// Tracks the sample with the largest excess `value - bound`.
struct Worst {
    excess: f64,
    witness: Option<SampleWitness>,
    violated: bool,
    checked: usize,
}

impl Worst {
    fn new() -> Self {
        Self {
            excess: f64::NEG_INFINITY,
            witness: None,
            violated: false,
            checked: 0,
        }
    }

    /// Records `value <= bound` (or `<` when `strict`) as an upper-bound check.
    fn upper(&mut self, s: &Sample, value: f64, bound: f64, strict: bool) {
        self.record(s, value, bound, value - bound, if strict { value >= bound } else { value > bound });
    }

    /// Records `value > bound` as a strict lower-bound check.
    fn lower(&mut self, s: &Sample, value: f64, bound: f64) {
        self.record(s, value, bound, bound - value, value <= bound);
    }

    fn record(&mut self, s: &Sample, value: f64, bound: f64, excess: f64, violated: bool) {
        if excess > self.excess || (violated && !self.violated) {
            self.excess = excess;
            self.witness = Some(SampleWitness {
                t: s.t,
                e: s.e.to_vec(),
                x: s.x.to_vec(),
                value,
                bound,
            });
        }
        self.violated |= violated;
    }

    fn report(self, clause: &str, skipped: usize, note: Option<String>) -> ClauseReport {
        ClauseReport {
            clause: clause.to_string(),
            passed: !self.violated,
            checked: self.checked,
            skipped,
            worst: self.witness,
            note,
        }
    }
}

struct Sample {
    t: f64,
    e: Point,
    x: Point,
}

fn sample_env(model: &DiffusionModel, rng: &mut CounterRng) -> Point {
    let (lo, hi) = model.env_box();
    lo.iter().zip(&hi).map(|(l, h)| l + (h - l) * rng.open01()).collect()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Largest absolute finite-difference derivative of `f`: first order in
/// `t`, first and second order in `(e, x)`.
fn f_derivative_bound(model: &DiffusionModel, domain: &Domain, s: &Sample) -> Option<f64> {
    let h1 = 1e-5;
    let h2 = 1e-4;
    let ne = s.e.len();
    let coords: Vec<f64> = s.e.iter().chain(s.x.iter()).copied().collect();
    let f_at = |t: f64, c: &[f64]| -> Option<f64> {
        let (e, x) = c.split_at(ne);
        domain.contains(x).then(|| model.smooth_part(t, e, x))
    };
    let mut worst: f64 = 0.0;
    let f0 = f_at(s.t, &coords)?;
    let tm = (s.t - h1).max(0.0);
    worst = worst.max(((f_at(s.t + h1, &coords)? - f_at(tm, &coords)?) / (s.t + h1 - tm)).abs());
    let shifted = |moves: &[(usize, f64)]| {
        let mut c = coords.clone();
        for &(k, dv) in moves {
            c[k] += dv;
        }
        f_at(s.t, &c)
    };
    for k in 0..coords.len() {
        let d1 = (shifted(&[(k, h1)])? - shifted(&[(k, -h1)])?) / (2.0 * h1);
        worst = worst.max(d1.abs());
        for l in k..coords.len() {
            let d2 = if k == l {
                (shifted(&[(k, h2)])? - 2.0 * f0 + shifted(&[(k, -h2)])?) / (h2 * h2)
            } else {
                (shifted(&[(k, h2), (l, h2)])? - shifted(&[(k, h2), (l, -h2)])?
                    - shifted(&[(k, -h2), (l, h2)])?
                    + shifted(&[(k, -h2), (l, -h2)])?)
                    / (4.0 * h2 * h2)
            };
            worst = worst.max(d2.abs());
        }
    }
    Some(worst)
}

fn smoothness_clause(model: &DiffusionModel, domain: &Domain, band_samples: &[Sample]) -> ClauseReport {
    let a0 = model.bounds().a0;
    let sup = domain.sup_phi();
    let (passed, note) = match domain.kind() {
        "box" => {
            let corner = band_samples
                .iter()
                .filter(|s| domain.faces_within(&s.x, a0) >= 2)
                .count();
            let frac = corner as f64 / band_samples.len().max(1) as f64;
            (
                a0 <= sup,
                Some(format!(
                    "box domain: phi is not C2 near edges and corners; {:.4} of band samples lie within a0 of two or more faces",
                    frac
                )),
            )
        }
        "ball" => (a0 < sup, None),
        _ => (a0 <= sup, None),
    };
    let note = if passed {
        note
    } else {
        Some(format!("a0 = {a0} reaches the ridge of phi at depth {sup}"))
    };
    ClauseReport {
        clause: "1:phi_c2_on_band".into(),
        passed,
        checked: band_samples.len(),
        skipped: 0,
        worst: None,
        note,
    }
}

/// Samples `n_samples` points and checks every declared clause.
pub fn validate_hypothesis1(
    model: &DiffusionModel,
    domain: &Domain,
    n_samples: usize,
    t_max: f64,
    seed: u64,
) -> HypothesisReport {
    let bounds = *model.bounds();
    let band = BoundaryBand::new(bounds.a0.min(domain.sup_phi() * 2.0)).expect("a0 > 0");
    let a = bounds.a_bound;

    let mut kappa = Worst::new();
    let mut coeff = Worst::new();
    let mut deriv = Worst::new();
    let mut g_bound = Worst::new();
    let mut f_bounds = Worst::new();
    let mut skipped = 0;
    let mut deriv_skipped = 0;
    let mut band_samples = Vec::with_capacity(n_samples);

    for i in 0..n_samples as u64 {
        let mut rng = CounterRng::new(seed, AUX_STREAM, i);
        let t = t_max * rng.open01();

        // kappa on all of D
        let s = Sample {
            t,
            e: sample_env(model, &mut rng),
            x: domain.sample_uniform(&mut rng),
        };
        kappa.checked += 1;
        kappa.upper(&s, model.kappa(s.t, &s.e, &s.x), a, false);

        let s = Sample {
            t,
            e: sample_env(model, &mut rng),
            x: domain.sample_band(band, &mut rng),
        };
        let c = model.coefficients(domain, s.t, &s.e, &s.x);
        let norm = [max_abs(&c.s), max_abs(&c.m), max_abs(&c.sigma), max_abs(&c.eta)]
            .into_iter()
            .fold(0.0, f64::max);
        coeff.checked += 1;
        coeff.upper(&s, norm, a, false);

        match f_derivative_bound(model, domain, &s) {
            Some(v) => {
                deriv.checked += 1;
                deriv.upper(&s, v, a, false);
            }
            None => deriv_skipped += 1,
        }

        match fg_decomposition(model, domain, s.t, &s.e, &s.x) {
            Ok((f, g)) => {
                let phi = domain.phi(&s.x);
                g_bound.checked += 1;
                g_bound.upper(&s, g.abs(), bounds.k_g * phi, false);
                f_bounds.checked += 1;
                for v in [f, f + g] {
                    f_bounds.lower(&s, v, bounds.c0);
                    f_bounds.upper(&s, v, bounds.c0_upper, true);
                }
            }
            Err(FvError::NonSmoothPoint { .. }) => skipped += 1,
            Err(e) => unreachable!("band samples lie in the domain: {e}"),
        }
        band_samples.push(s);
    }

    let clauses = vec![
        smoothness_clause(model, domain, &band_samples),
        kappa.report("2:kappa_bounded_by_A", 0, None),
        coeff.report(
            "2:coefficients_bounded_by_A",
            0,
            Some("largest absolute entry of s, m, sigma, eta on the band".into()),
        ),
        deriv.report(
            "3a:f_derivatives_bounded_by_A",
            deriv_skipped,
            Some(format!("finite differences; t restricted to [0, {t_max}]")),
        ),
        g_bound.report("3b:g_bounded_by_k_g_phi", skipped, None),
        f_bounds.report("3c:c0_lt_f_and_f_plus_g_lt_C0", skipped, None),
    ];
    let passed = clauses.iter().all(|c| c.passed);
    HypothesisReport {
        model: model.name().to_string(),
        domain: domain.kind().to_string(),
        declared: bounds,
        samples: n_samples,
        t_max,
        clauses,
        passed,
    }
}
