//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Tolerances are pinned in the constants below.
//!
//! Pass a substring (e.g. `cargo test --test acceptance -- C3`) to run a
//! subset.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use fvlab::engine::{check_compliance, InitSpec, JumpMeasures, JumpPolicy, ParticleSystem, SystemConfig};
use fvlab::geometry::{BoundaryBand, Domain};
use fvlab::oracles::{rejection_conditional, spectral_qsd_interval};
use fvlab::rng::{derive_seed, CounterRng};
use fvlab::sde::{self, validate_hypothesis1, DiffusionModel, HypothesisConstants, KillKind, Particle, StepOptions, StepOutcome};
use fvlab::stats::{
    kolmogorov_distance, kolmogorov_to_cdf, mean_and_stderr, pair_proximity, tightness_sweep, PairProximity, SweepGrid,
    TightnessSweep,
};
use rand::Rng;
use rayon::prelude::*;

// Non-explosion.
const C1_N: [usize; 2] = [100, 400];
const C1_DT: f64 = 1e-4;
const C1_T: f64 = 1.0;
const C1_REPLICAS: usize = 20;
const C1_BUDGET: Duration = Duration::from_secs(120);

// Uniform tightness from the worst-case start.
const C2_START: f64 = 1e-3;
const C2_T0: f64 = 0.25;
const C2_N: [usize; 3] = [125, 250, 500];
const C2_T: [f64; 3] = [0.25, 0.5, 1.0];
const C2_A: [f64; 6] = [0.005, 0.01, 0.02, 0.05, 0.1, 0.2];
const C2_REPLICAS: usize = 50;
const C2_DT: f64 = 1e-4;
const C2_EPSILON: f64 = 0.1;
const C2_N_EPSILON: usize = 250;
const C2_SE: f64 = 3.0;
const C2_ORACLE_M: usize = 100_000;
const C2_ORACLE_TOL: f64 = 0.03;
const C2_BUDGET: Duration = Duration::from_secs(600);

// Convergence to the conditional law.
const C3_T: f64 = 0.2;
const C3_N: usize = 2000;
const C3_DT: f64 = 1e-4;
const C3_ORACLE_M: usize = 100_000;
const C3_KS: f64 = 0.05;
const C3_PAIRS: usize = 10;
const C3_SE: f64 = 2.0;

// Quasi-stationary limit.
const C4_N: usize = 1000;
const C4_T: f64 = 3.0;
const C4_DT: f64 = 1e-4;
const C4_KS: f64 = 0.05;
const C4_GRID: usize = 1025;
const C4_EIGEN_REL: f64 = 1e-3;

// Pair proximity decay.
const C5_GAMMA: f64 = 0.25;
const C5_T0: f64 = 0.25;
const C5_A: [f64; 3] = [0.02, 0.01, 0.005];
const C5_N: usize = 2;
const C5_REPLICAS: usize = 50_000;
const C5_DT: f64 = 1e-4;
const C5_FACTOR: f64 = 1.5;
const C5_SE: f64 = 3.0;

// Jump-policy compliance.
const C6_TRIALS: usize = 10_000;
const C6_N: usize = 100;
const C6_TELEPORT_N: usize = 4;

// Invariants.
const C8_LIPSCHITZ_PAIRS: usize = 100_000;
const C8_KAPPA: f64 = 2.0;
const C8_DT: f64 = 0.01;
const C8_TRIALS: usize = 100_000;
const C8_SE: f64 = 3.0;

fn bounds() -> HypothesisConstants {
    HypothesisConstants { a0: 0.1, a_bound: 2.0, c0: 0.5, c0_upper: 2.0, k_g: 1.0 }
}

fn bm() -> DiffusionModel {
    DiffusionModel::brownian(bounds(), 1)
}

fn unit() -> Domain {
    Domain::interval(0.0, 1.0).unwrap()
}

fn bm_system(n: usize, dt: f64, init: InitSpec, seed: u64) -> ParticleSystem {
    let mut cfg = SystemConfig::new(n, dt, unit(), bm(), init);
    cfg.record_events = false;
    ParticleSystem::new(cfg, seed).unwrap()
}

type Verdict = (bool, String);
type Criterion = (&'static str, &'static str, fn() -> Verdict);

fn c1_non_explosion() -> Verdict {
    let start = Instant::now();
    let fv = JumpMeasures::fleming_viot();
    let mut trips = 0;
    let mut detail = Vec::new();
    for n in C1_N {
        let jumps: Vec<(u64, bool)> = (0..C1_REPLICAS as u64)
            .into_par_iter()
            .map(|r| {
                let mut sys = bm_system(n, C1_DT, InitSpec::Uniform, derive_seed(1, &[n as u64, r]));
                match sys.run(&fv, C1_T, &[], |_, _| {}) {
                    Ok(rep) => (rep.total_jumps, false),
                    Err(_) => (sys.jump_log().total(), true),
                }
            })
            .collect();
        trips += jumps.iter().filter(|j| j.1).count();
        let total: u64 = jumps.iter().map(|j| j.0).sum();
        let max = jumps.iter().map(|j| j.0).max().unwrap();
        detail.push(format!("N={n}: mean jumps {:.1}, max {max}", total as f64 / C1_REPLICAS as f64));
    }
    let elapsed = start.elapsed();
    (
        trips == 0 && elapsed < C1_BUDGET,
        format!("{trips} guard trips; {}; {:.1}s (budget {}s)", detail.join("; "), elapsed.as_secs_f64(), C1_BUDGET.as_secs()),
    )
}

fn c2_tightness() -> Verdict {
    let start = Instant::now();
    let init = InitSpec::Boundary { distance: C2_START, face: 0 };
    let sweep = TightnessSweep {
        grid: SweepGrid { n_values: C2_N.to_vec(), horizons: C2_T.to_vec(), a_values: C2_A.to_vec() },
        model: bm(),
        domain: unit(),
        measures: JumpMeasures::fleming_viot(),
        init: init.clone(),
        replicas: C2_REPLICAS,
        t0: C2_T0,
        dt: C2_DT,
        options: StepOptions::default(),
        explosion_cap: 50.0,
        base_seed: 2,
    };
    let table = tightness_sweep(&sweep).unwrap();
    let a_eps = table.a_epsilon(C2_EPSILON, C2_N_EPSILON, C2_SE);

    let oracle = rejection_conditional(&bm(), &unit(), &init, C2_T0, C2_ORACLE_M, C2_DT, 22, StepOptions::default()).unwrap();
    let mu = oracle.measure().unwrap();
    let n_max = *C2_N.iter().max().unwrap();
    let mut worst_gap: f64 = 0.0;
    for a in C2_A {
        let o = mu.boundary_mass(&unit(), BoundaryBand::new(a).unwrap());
        let est = table.get(n_max, C2_T0, a).unwrap().estimate;
        worst_gap = worst_gap.max((est - o).abs());
    }
    let at_002 = table.get(n_max, C2_T0, 0.02).unwrap().estimate;
    let elapsed = start.elapsed();
    (
        a_eps.is_some() && worst_gap <= C2_ORACLE_TOL && elapsed < C2_BUDGET,
        format!(
            "a_eps={a_eps:?} (eps {C2_EPSILON}, N>={C2_N_EPSILON}); mass in D^0.02 at T=t0, N={n_max}: {at_002:.4}; \
             max |FV - oracle| = {worst_gap:.4} <= {C2_ORACLE_TOL} ({} oracle survivors); {:.1}s",
            oracle.survivors.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn c3_convergence() -> Verdict {
    let init = InitSpec::Point { x0: vec![0.5] };
    let oracle = rejection_conditional(&bm(), &unit(), &init, C3_T, C3_ORACLE_M, C3_DT, 33, StepOptions::default()).unwrap();
    let target = oracle.measure().unwrap();
    let fv = JumpMeasures::fleming_viot();
    let ks_for = |n: usize| -> Vec<f64> {
        (0..C3_PAIRS as u64)
            .into_par_iter()
            .map(|r| {
                let mut sys = bm_system(n, C3_DT, init.clone(), derive_seed(3, &[n as u64, r]));
                sys.run(&fv, C3_T, &[], |_, _| {}).unwrap();
                kolmogorov_distance(&sys.snapshot(), &target).unwrap()
            })
            .collect()
    };
    let small = ks_for(C3_N);
    let large = ks_for(2 * C3_N);
    let diffs: Vec<f64> = large.iter().zip(&small).map(|(l, s)| l - s).collect();
    let (d_mean, d_se) = mean_and_stderr(&diffs);
    let (m_small, _) = mean_and_stderr(&small);
    let (m_large, _) = mean_and_stderr(&large);
    let first = small[0];
    (
        first <= C3_KS && d_mean <= C3_SE * d_se,
        format!(
            "KS(N={C3_N}) = {first:.4} <= {C3_KS}; mean KS over {C3_PAIRS} pairs: N={C3_N} {m_small:.4}, N={} {m_large:.4}; \
             paired change {d_mean:+.4} <= {C3_SE} s.e. ({:.4})",
            2 * C3_N,
            C3_SE * d_se
        ),
    )
}

fn c4_qsd() -> Verdict {
    let q = spectral_qsd_interval(&unit(), C4_GRID).unwrap();
    let rel = (q.eigenvalue / (PI * PI / 2.0) - 1.0).abs();
    let mut sys = bm_system(C4_N, C4_DT, InitSpec::Point { x0: vec![0.5] }, 4);
    sys.run(&JumpMeasures::fleming_viot(), C4_T, &[], |_, _| {}).unwrap();
    let ks = kolmogorov_to_cdf(&sys.snapshot(), |x| q.cdf(x)).unwrap();
    (
        ks <= C4_KS && rel <= C4_EIGEN_REL,
        format!("KS to spectral QSD = {ks:.4} <= {C4_KS}; eigenvalue {:.6} rel. error {rel:.2e} <= {C4_EIGEN_REL:e}", q.eigenvalue),
    )
}

fn c5_pair_proximity() -> Verdict {
    let stats = pair_proximity(&PairProximity {
        model: bm(),
        domain: unit(),
        measures: JumpMeasures::fleming_viot(),
        n: C5_N,
        i: 0,
        j: 1,
        gamma: C5_GAMMA,
        a_values: C5_A.to_vec(),
        t0: C5_T0,
        replicas: C5_REPLICAS,
        dt: C5_DT,
        options: StepOptions::default(),
        explosion_cap: 50.0,
        seed: 5,
    })
    .unwrap();
    let ratio = bounds().ellipticity_ratio();
    let log_term = |a: f64| (C5_GAMMA / a * ratio).ln();
    let nested = stats.windows(2).all(|w| w[1].estimate <= w[0].estimate);
    let reference = stats[0].estimate * log_term(stats[0].a);
    let bounded = stats
        .iter()
        .all(|s| s.estimate * log_term(s.a) <= C5_FACTOR * reference + C5_SE * s.stderr * log_term(s.a));
    let shown: Vec<String> = stats.iter().map(|s| format!("a={}: {:.2e}±{:.1e}", s.a, s.estimate, s.stderr)).collect();
    (
        nested && bounded,
        format!("nested={nested}, log-scaled bound={bounded}; {} ({C5_REPLICAS} runs)", shown.join(", ")),
    )
}

fn c6_compliance() -> Verdict {
    let fv = check_compliance(&JumpPolicy::FlemingViot, &unit(), &bm(), C6_N, C6_TRIALS, 6).unwrap();
    let tp = check_compliance(&JumpPolicy::UniformTeleport, &unit(), &bm(), C6_TELEPORT_N, C6_TRIALS, 66).unwrap();
    (
        fv.a_frequency == 1.0 && fv.b_frequency == 1.0 && tp.a_frequency < 1.0,
        format!(
            "Fleming-Viot A={} B={} over {C6_TRIALS} jumps; uniform teleport A={:.4} (< 1)",
            fv.a_frequency, fv.b_frequency, tp.a_frequency
        ),
    )
}

fn c7_validator() -> Verdict {
    let good = validate_hypothesis1(&bm(), &unit(), 5000, 1.0, 7);
    let mis = bm().with_bounds(HypothesisConstants { c0: 1.5, ..bounds() });
    let bad = validate_hypothesis1(&mis, &unit(), 5000, 1.0, 7);
    let c3 = bad.clause("3c").unwrap();
    let only_3c = bad.clauses.iter().filter(|c| !c.passed).count() == 1;
    let witness = c3.worst.as_ref().map(|w| format!("x={:?} f={} vs c0={}", w.x, w.value, w.bound));
    (
        good.passed && !c3.passed && only_3c && witness.is_some(),
        format!("declared bm passes all {} clauses: {}; c0=1.5 fails 3c only with witness {witness:?}", good.clauses.len(), good.passed),
    )
}

fn run_cli(config: &Path, out: &Path) -> Option<i32> {
    Command::new(env!("CARGO_BIN_EXE_fvlab"))
        .args(["run", config.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .env_remove("FVLAB_SEED")
        .output()
        .unwrap()
        .status
        .code()
}

fn same_tree(a: &Path, b: &Path) -> bool {
    let names: Vec<_> = fs::read_dir(a).unwrap().map(|e| e.unwrap().file_name()).collect();
    !names.is_empty() && names.iter().all(|n| fs::read(a.join(n)).ok() == fs::read(b.join(n)).ok())
}

fn c8_determinism_and_invariants() -> Verdict {
    // Byte-identical reruns.
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("det.toml");
    fs::write(
        &cfg,
        r#"
schema_version = 1
experiment = "tightness"
seed = 8
dt = 1e-3
domain = { kind = "interval", a = 0.0, b = 1.0 }
model = { name = "bm", bounds = { a0 = 0.1, A = 2.0, c0 = 0.5, C0 = 2.0, k_g = 1.0 } }
init = { kind = "boundary", distance = 1e-3 }
n = [20, 40]
t0 = 0.1
horizons = [0.1, 0.3]
a = [0.02, 0.1]
replicas = 6
oracle_attempts = 5000
"#,
    )
    .unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let codes = (run_cli(&cfg, &a), run_cli(&cfg, &b));
    let identical = codes.0.is_some() && codes.0 == codes.1 && same_tree(&a, &b);

    // 1-Lipschitz distance function.
    let domains = [
        unit(),
        Domain::box_(vec![0.0, 0.0], vec![1.0, 2.0]).unwrap(),
        Domain::ball(vec![0.0, 0.0, 0.0], 1.0).unwrap(),
    ];
    let mut violations = 0;
    let mut rng = CounterRng::new(8, 0, 0);
    for k in 0..C8_LIPSCHITZ_PAIRS {
        let d = &domains[k % domains.len()];
        let (lo, hi) = d.bounding_box();
        let mut draw = || -> Vec<f64> {
            lo.iter().zip(&hi).map(|(l, h)| l - 0.2 + (h - l + 0.4) * rng.random::<f64>()).collect()
        };
        let (x, y) = (draw(), draw());
        let dist = x.iter().zip(&y).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        if (d.phi(&x) - d.phi(&y)).abs() > dist * (1.0 + 1e-12) + 1e-15 {
            violations += 1;
        }
    }

    // Boundary mass monotone in a on one snapshot.
    let mut sys = bm_system(500, 1e-3, InitSpec::Boundary { distance: 0.01, face: 0 }, 8);
    sys.run(&JumpMeasures::fleming_viot(), 0.2, &[], |_, _| {}).unwrap();
    let mu = sys.snapshot();
    let masses: Vec<f64> = (1..=400).map(|k| mu.boundary_mass(&unit(), BoundaryBand::new(k as f64 / 800.0).unwrap())).collect();
    let monotone = masses.windows(2).all(|w| w[0] <= w[1]);

    // Soft-kill frequency.
    let model = DiffusionModel::new(fvlab::sde::ModelSpec::Bm { sigma: 1.0, kappa: C8_KAPPA }, bounds(), 1).unwrap();
    let start = Particle { t: 0.0, e: Default::default(), x: smallvec::smallvec![0.5] };
    let kills = (0..C8_TRIALS as u64)
        .filter(|&i| {
            let out = sde::step(&model, &unit(), &start, C8_DT, StepOptions::default(), &mut CounterRng::new(88, i, 0)).unwrap();
            matches!(out, StepOutcome::Killed(ref k) if k.kind == KillKind::Soft)
        })
        .count();
    let p = -(-C8_KAPPA * C8_DT).exp_m1();
    let freq = kills as f64 / C8_TRIALS as f64;
    let se = (p * (1.0 - p) / C8_TRIALS as f64).sqrt();
    let soft_ok = (freq - p).abs() <= C8_SE * se;

    (
        identical && violations == 0 && monotone && soft_ok,
        format!(
            "reruns byte-identical={identical}; Lipschitz violations {violations}/{C8_LIPSCHITZ_PAIRS}; \
             boundary mass monotone={monotone}; soft-kill frequency {freq:.5} vs {p:.5} ({:.2} s.e.)",
            (freq - p).abs() / se
        ),
    )
}

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [Criterion; 8] = [
        ("C1", "non-explosion", c1_non_explosion),
        ("C2", "uniform tightness from the boundary", c2_tightness),
        ("C3", "convergence to the conditional law", c3_convergence),
        ("C4", "quasi-stationary limit", c4_qsd),
        ("C5", "pair proximity log-decay", c5_pair_proximity),
        ("C6", "jump-policy compliance", c6_compliance),
        ("C7", "regularity validator", c7_validator),
        ("C8", "determinism and invariants", c8_determinism_and_invariants),
    ];
    let mut failed = Vec::new();
    for (id, name, check) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| id.contains(f.as_str()) || name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let (passed, detail) = check();
        println!(
            "[{}] {id} {name}: {detail} [{:.1}s]",
            if passed { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
        if !passed {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {}", failed.join(", "));
        std::process::exit(1);
    }
}
