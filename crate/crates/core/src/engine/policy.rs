use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ConfigIssue, FvError, Result};
use crate::geometry::Domain;
use crate::rng::CounterRng;
use crate::sde::{DiffusionModel, KillKind, Particle};

fn one() -> f64 {
    1.0
}

/// Donor weight `w(phi(x_j))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightFn {
    /// `w(u) = u`
    Identity,
    /// `w(u) = 1{u < threshold}`
    Below { threshold: f64 },
    /// `w(u) = u^exponent`
    Power { exponent: f64 },
}

impl WeightFn {
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            WeightFn::Identity => u,
            WeightFn::Below { threshold } => f64::from(u8::from(u < threshold)),
            WeightFn::Power { exponent } => u.powf(exponent),
        }
    }
}

/// Non-decreasing `h` with `h(0) = 0`, vanishing only at zero.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HFunction {
    #[default]
    Identity,
    Power { exponent: f64 },
    Scaled { factor: f64 },
}

impl HFunction {
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            HFunction::Identity => u,
            HFunction::Power { exponent } => u.powf(exponent),
            HFunction::Scaled { factor } => factor * u,
        }
    }

    fn valid(&self) -> bool {
        match *self {
            HFunction::Identity => true,
            HFunction::Power { exponent } => exponent > 0.0 && exponent.is_finite(),
            HFunction::Scaled { factor } => factor > 0.0 && factor.is_finite(),
        }
    }
}

/// Where a killed particle jumps to.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum JumpPolicy {
    /// Copy the state of a uniformly chosen other particle.
    #[default]
    FlemingViot,
    /// Copy the state of another particle chosen with probability
    /// proportional to `weight(phi(x_j))`; uniform when all weights vanish.
    WeightedDonor {
        weight: WeightFn,
        #[serde(default)]
        h: HFunction,
        #[serde(default = "one")]
        p0: f64,
    },
    /// Move the killed particle to an independent uniform point of the
    /// domain, resetting its environment. Declares `h(u) = u, p0 = 1`, which
    /// it does not satisfy; used as a negative control for compliance checks.
    UniformTeleport,
}


impl JumpPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            JumpPolicy::FlemingViot => "fleming_viot",
            JumpPolicy::WeightedDonor { .. } => "weighted_donor",
            JumpPolicy::UniformTeleport => "uniform_teleport",
        }
    }

    /// Declared `(h, p0)`.
    pub fn compliance(&self) -> (HFunction, f64) {
        match self {
            JumpPolicy::FlemingViot | JumpPolicy::UniformTeleport => (HFunction::Identity, 1.0),
            JumpPolicy::WeightedDonor { h, p0, .. } => (h.clone(), *p0),
        }
    }

    pub fn issues(&self, key: &str) -> Vec<ConfigIssue> {
        let mut out = Vec::new();
        if let JumpPolicy::WeightedDonor { weight, h, p0 } = self {
            if !(*p0 > 0.0 && *p0 <= 1.0) {
                out.push(ConfigIssue {
                    key: format!("{key}.p0"),
                    message: format!("must lie in (0, 1], got {p0}"),
                });
            }
            if !h.valid() {
                out.push(ConfigIssue {
                    key: format!("{key}.h"),
                    message: "h must be increasing and vanish only at 0".into(),
                });
            }
            let bad_weight = match *weight {
                WeightFn::Identity => false,
                WeightFn::Below { threshold } => !(threshold > 0.0),
                WeightFn::Power { exponent } => !exponent.is_finite(),
            };
            if bad_weight {
                out.push(ConfigIssue {
                    key: format!("{key}.weight"),
                    message: "weight parameters out of range".into(),
                });
            }
        }
        out
    }

    /// Relocates particle `i`; only `particles[i]` changes. Returns the donor.
    pub fn resolve(
        &self,
        i: usize,
        particles: &mut [Particle],
        domain: &Domain,
        model: &DiffusionModel,
        rng: &mut CounterRng,
    ) -> Result<Option<usize>> {
        let n = particles.len();
        if n < 2 || i >= n {
            return Err(FvError::NoDonor(i));
        }
        let uniform_other = |rng: &mut CounterRng| {
            let r = rng.random_range(0..n - 1);
            if r >= i {
                r + 1
            } else {
                r
            }
        };
        let donor = match self {
            JumpPolicy::FlemingViot => uniform_other(rng),
            JumpPolicy::WeightedDonor { weight, .. } => {
                let w: Vec<f64> = particles
                    .iter()
                    .enumerate()
                    .map(|(j, p)| if j == i { 0.0 } else { weight.eval(domain.phi(&p.x)).max(0.0) })
                    .collect();
                let total: f64 = w.iter().sum();
                if total > 0.0 && total.is_finite() {
                    let mut u = rng.open01() * total;
                    let mut pick = None;
                    for (j, wj) in w.iter().enumerate() {
                        if *wj > 0.0 {
                            pick = Some(j);
                            u -= wj;
                            if u <= 0.0 {
                                break;
                            }
                        }
                    }
                    pick.ok_or(FvError::NoDonor(i))?
                } else {
                    uniform_other(rng)
                }
            }
            JumpPolicy::UniformTeleport => {
                let x = domain.sample_uniform(rng);
                let p = &mut particles[i];
                p.x = x;
                p.e = model.default_env();
                return Ok(None);
            }
        };
        let (e, x) = (particles[donor].e.clone(), particles[donor].x.clone());
        let p = &mut particles[i];
        p.e = e;
        p.x = x;
        Ok(Some(donor))
    }
}

/// Jump measures for hard and soft kills.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct JumpMeasures {
    pub hard: JumpPolicy,
    pub soft: JumpPolicy,
}

impl JumpMeasures {
    pub fn same(policy: JumpPolicy) -> Self {
        Self {
            hard: policy.clone(),
            soft: policy,
        }
    }

    pub fn fleming_viot() -> Self {
        Self::same(JumpPolicy::FlemingViot)
    }

    pub fn for_kind(&self, kind: KillKind) -> &JumpPolicy {
        match kind {
            KillKind::Hard => &self.hard,
            KillKind::Soft => &self.soft,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::HypothesisConstants;
    use smallvec::smallvec;

    fn setup(xs: &[f64]) -> (Domain, DiffusionModel, Vec<Particle>) {
        let dom = Domain::interval(0.0, 1.0).unwrap();
        let model = DiffusionModel::brownian(
            HypothesisConstants { a0: 0.1, a_bound: 2.0, c0: 0.5, c0_upper: 2.0, k_g: 1.0 },
            1,
        );
        let ps = xs
            .iter()
            .map(|&x| Particle { t: 0.0, e: smallvec![], x: smallvec![x] })
            .collect();
        (dom, model, ps)
    }

    fn donor_frequencies(policy: &JumpPolicy, xs: &[f64], i: usize, trials: u64) -> Vec<f64> {
        let (dom, model, ps) = setup(xs);
        let mut counts = vec![0usize; xs.len()];
        for t in 0..trials {
            let mut p = ps.clone();
            let j = policy
                .resolve(i, &mut p, &dom, &model, &mut CounterRng::new(2, 0, t))
                .unwrap()
                .unwrap();
            assert_ne!(j, i);
            assert_eq!(p[i].x, p[j].x);
            for k in (0..xs.len()).filter(|&k| k != i) {
                assert_eq!(p[k], ps[k]);
            }
            counts[j] += 1;
        }
        counts.iter().map(|&c| c as f64 / trials as f64).collect()
    }

    #[test]
    fn fleming_viot_donor_is_uniform() {
        let f = donor_frequencies(&JumpPolicy::FlemingViot, &[0.0, 0.3, 0.7], 0, 40_000);
        let se = (0.25f64 / 40_000.0).sqrt();
        assert_eq!(f[0], 0.0);
        assert!((f[1] - 0.5).abs() < 4.0 * se);
        assert!((f[2] - 0.5).abs() < 4.0 * se);
    }

    #[test]
    fn two_particles_force_the_donor() {
        let f = donor_frequencies(&JumpPolicy::FlemingViot, &[0.4, 0.0], 1, 100);
        assert_eq!(f, vec![1.0, 0.0]);
    }

    #[test]
    fn weighted_donor_normalizes_weights() {
        let policy = JumpPolicy::WeightedDonor { weight: WeightFn::Identity, h: HFunction::Identity, p0: 1.0 };
        let f = donor_frequencies(&policy, &[0.0, 0.1, 0.3], 0, 40_000);
        let se = (0.25f64 * 0.75 / 40_000.0).sqrt();
        assert!((f[1] - 0.25).abs() < 4.0 * se, "{f:?}");
        assert!((f[2] - 0.75).abs() < 4.0 * se, "{f:?}");
    }

    #[test]
    fn zero_weights_fall_back_to_uniform() {
        let policy = JumpPolicy::WeightedDonor {
            weight: WeightFn::Below { threshold: 0.01 },
            h: HFunction::Identity,
            p0: 1.0,
        };
        let f = donor_frequencies(&policy, &[0.0, 0.3, 0.4], 0, 10_000);
        assert!(f[1] > 0.4 && f[2] > 0.4);
    }

    #[test]
    fn single_particle_has_no_donor() {
        let (dom, model, mut ps) = setup(&[0.5]);
        assert!(matches!(
            JumpPolicy::FlemingViot.resolve(0, &mut ps, &dom, &model, &mut CounterRng::new(0, 0, 0)),
            Err(FvError::NoDonor(0))
        ));
    }

    #[test]
    fn policy_toml() {
        let p: JumpPolicy = toml::from_str(
            "kind = \"weighted_donor\"\nweight = { kind = \"below\", threshold = 0.01 }\n",
        )
        .unwrap();
        assert_eq!(p.compliance(), (HFunction::Identity, 1.0));
        assert_eq!(JumpPolicy::FlemingViot.compliance(), (HFunction::Identity, 1.0));
        let bad = JumpPolicy::WeightedDonor { weight: WeightFn::Identity, h: HFunction::Power { exponent: 0.0 }, p0: 1.5 };
        assert_eq!(bad.issues("policy").len(), 2);
    }
}
