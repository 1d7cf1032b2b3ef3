//! Empirical membership frequencies of post-jump configurations in the sets
//!
//! * `A_i = { y : exists j != i with phi(y_i) >= h(phi(y_j)) }`, which must
//!   have probability at least `p0`, and
//! * `B_x = { y : phi(y_k) >= phi(x_k) for every k }`, which must have
//!   probability one,
//!
//! for configurations `x` where particle `i` sits on the boundary.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::policy::JumpPolicy;
use crate::error::Result;
use crate::geometry::Domain;
use crate::rng::{CounterRng, AUX_STREAM};
use crate::sde::{DiffusionModel, Particle};

/// A configuration just before a hard kill of `killed`.
#[derive(Debug, Clone, PartialEq)]
pub struct KillConfiguration {
    pub killed: usize,
    pub particles: Vec<Particle>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplianceReport {
    pub policy: String,
    pub n: usize,
    pub trials: usize,
    pub a_frequency: f64,
    pub a_stderr: f64,
    pub b_frequency: f64,
    pub declared_p0: f64,
    /// `a_frequency >= p0`
    pub a_pass: bool,
    /// `b_frequency == 1`
    pub b_pass: bool,
}

/// Particle `killed` (uniform index) on the boundary, all others uniform in D.
pub fn uniform_kill_configuration(
    n: usize,
    domain: &Domain,
    model: &DiffusionModel,
    rng: &mut CounterRng,
) -> KillConfiguration {
    let killed = rng.random_range(0..n);
    let particles = (0..n)
        .map(|k| Particle {
            t: 0.0,
            e: model.default_env(),
            x: if k == killed {
                domain.sample_boundary(rng)
            } else {
                domain.sample_uniform(rng)
            },
        })
        .collect();
    KillConfiguration { killed, particles }
}

/// Runs `trials` jumps on configurations drawn by `generator`.
pub fn check_compliance_with(
    policy: &JumpPolicy,
    domain: &Domain,
    model: &DiffusionModel,
    trials: usize,
    seed: u64,
    mut generator: impl FnMut(&mut CounterRng) -> KillConfiguration,
) -> Result<ComplianceReport> {
    let (h, p0) = policy.compliance();
    let (mut in_a, mut in_b) = (0usize, 0usize);
    let mut n = 0;
    for trial in 0..trials as u64 {
        let mut rng = CounterRng::new(seed, AUX_STREAM, trial);
        let KillConfiguration { killed: i, particles: before } = generator(&mut rng);
        n = before.len();
        let mut after = before.clone();
        policy.resolve(i, &mut after, domain, model, &mut rng)?;

        let phi_after: Vec<f64> = after.iter().map(|p| domain.phi(&p.x)).collect();
        let inside = phi_after.iter().all(|&p| p > 0.0);
        let a = inside && (0..n).any(|j| j != i && phi_after[i] >= h.eval(phi_after[j]));
        let b = inside
            && before
                .iter()
                .zip(&phi_after)
                .all(|(x, &phi_y)| phi_y >= domain.phi(&x.x));
        in_a += usize::from(a);
        in_b += usize::from(b);
    }
    let t = trials.max(1) as f64;
    let a_frequency = in_a as f64 / t;
    let b_frequency = in_b as f64 / t;
    Ok(ComplianceReport {
        policy: policy.name().to_string(),
        n,
        trials,
        a_frequency,
        a_stderr: (a_frequency * (1.0 - a_frequency) / t).sqrt(),
        b_frequency,
        declared_p0: p0,
        a_pass: a_frequency >= p0,
        b_pass: in_b == trials,
    })
}

/// [`check_compliance_with`] using [`uniform_kill_configuration`].
pub fn check_compliance(
    policy: &JumpPolicy,
    domain: &Domain,
    model: &DiffusionModel,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<ComplianceReport> {
    check_compliance_with(policy, domain, model, trials, seed, |rng| {
        uniform_kill_configuration(n, domain, model, rng)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{HFunction, WeightFn};
    use crate::sde::HypothesisConstants;

    fn setup() -> (Domain, DiffusionModel) {
        (
            Domain::interval(0.0, 1.0).unwrap(),
            DiffusionModel::brownian(HypothesisConstants { a0: 0.1, a_bound: 2.0, c0: 0.5, c0_upper: 2.0, k_g: 1.0 }, 1),
        )
    }

    #[test]
    fn fleming_viot_is_fully_compliant() {
        let (d, m) = setup();
        let r = check_compliance(&JumpPolicy::FlemingViot, &d, &m, 5, 2000, 1).unwrap();
        assert_eq!(r.a_frequency, 1.0);
        assert_eq!(r.b_frequency, 1.0);
        assert!(r.a_pass && r.b_pass);
    }

    #[test]
    fn weighted_donor_near_boundary_is_compliant() {
        let (d, m) = setup();
        let p = JumpPolicy::WeightedDonor {
            weight: WeightFn::Below { threshold: 0.01 },
            h: HFunction::Identity,
            p0: 1.0,
        };
        let r = check_compliance(&p, &d, &m, 5, 2000, 2).unwrap();
        assert_eq!((r.a_frequency, r.b_frequency), (1.0, 1.0));
    }

    #[test]
    fn uniform_teleport_violates_a() {
        // With the others i.i.d. uniform, y_i is the closest to the boundary
        // with probability exactly 1/N, which is when A fails.
        let (d, m) = setup();
        let n = 4;
        let trials = 20_000;
        let r = check_compliance(&JumpPolicy::UniformTeleport, &d, &m, n, trials, 3).unwrap();
        let expected = 1.0 - 1.0 / n as f64;
        let se = (expected * (1.0 - expected) / trials as f64).sqrt();
        assert!((r.a_frequency - expected).abs() < 4.0 * se, "{r:?}");
        assert!(!r.a_pass);
        assert!(r.b_pass);
    }

    #[test]
    fn custom_generator() {
        let (d, m) = setup();
        let r = check_compliance_with(&JumpPolicy::FlemingViot, &d, &m, 10, 0, |_| KillConfiguration {
            killed: 0,
            particles: [0.0, 0.2, 0.9]
                .iter()
                .map(|&x| Particle { t: 0.0, e: Default::default(), x: smallvec::smallvec![x] })
                .collect(),
        })
        .unwrap();
        assert_eq!(r.n, 3);
        assert_eq!(r.a_frequency, 1.0);
    }
}
