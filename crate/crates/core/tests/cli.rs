use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_fvlab");

const BASE: &str = r#"
schema_version = 1
domain = { kind = "interval", a = 0.0, b = 1.0 }
model = { name = "bm", bounds = { a0 = 0.1, A = 2.0, c0 = 0.5, C0 = 2.0, k_g = 1.0 } }
"#;

fn config(dir: &Path, name: &str, extra: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    fs::write(&path, format!("{BASE}{extra}")).unwrap();
    path
}

fn fvlab(args: &[&str], env_seed: Option<&str>) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args).env_remove("FVLAB_SEED");
    if let Some(s) = env_seed {
        cmd.env("FVLAB_SEED", s);
    }
    cmd.output().unwrap()
}

fn run(cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    fvlab(&args, None)
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

fn assert_same_tree(a: &Path, b: &Path) {
    let mut names: Vec<_> = fs::read_dir(a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(!names.is_empty());
    for name in names {
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap(), "{name:?} differs");
    }
}

#[test]
fn tightness_reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(
        tmp.path(),
        "t.toml",
        r#"
experiment = "tightness"
seed = 99
dt = 0.002
init = { kind = "boundary", distance = 0.001 }
n = [10, 20]
t0 = 0.1
horizons = [0.1, 0.2]
a = [0.05, 0.1]
replicas = 4
oracle_attempts = 2000
"#,
    );
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run(&cfg, &a, &[]).status.code().is_some());
    run(&cfg, &b, &[]);
    assert_same_tree(&a, &b);
    let csv = fs::read_to_string(a.join("tightness.csv")).unwrap();
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("# seed=99 config_hash="));
    assert_eq!(lines.next().unwrap(), "N,T,a,replicas,estimate,stderr");
    assert_eq!(lines.count(), 2 * 2 * 2);
    let s = summary(&a);
    assert_eq!(s["seed"], 99);
    assert_eq!(s["config_hash"].as_str().unwrap(), &header["# seed=99 config_hash=".len()..]);
    assert!(s["git_describe"].is_string());
}

#[test]
fn convergence_and_measure_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(
        tmp.path(),
        "c.toml",
        r#"
experiment = "convergence"
seed = 5
dt = 0.001
init = { kind = "point", x0 = [0.5] }
n = [50]
horizons = [0.1]
replicas = 3
oracle_attempts = 3000
"#,
    );
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run(&cfg, &a, &[]);
    run(&cfg, &b, &[]);
    assert_same_tree(&a, &b);
    assert!(a.join("convergence.csv").exists());
    let measure = fs::read_to_string(a.join("measure_0.1.csv")).unwrap();
    assert_eq!(measure.lines().count(), 2 + 50);
    assert!(summary(&a)["statistics"]["distances"][0]["mean"].as_f64().unwrap() > 0.0);
}

#[test]
fn config_errors_exit_with_2_and_name_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "bad.toml", "experiment = \"tightness\"\nseed = 1\ndt = -0.01\n");
    let out = run(&cfg, &tmp.path().join("o"), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dt"));
}

#[test]
fn missing_seed_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "h.toml", "experiment = \"hypothesis\"\nhypothesis = { samples = 50 }\n");
    let out = run(&cfg, &tmp.path().join("o"), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}

#[test]
fn seed_precedence_flag_env_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "h.toml", "experiment = \"hypothesis\"\nseed = 1\nhypothesis = { samples = 50 }\n");
    let path = cfg.to_str().unwrap();
    let dir = |n: &str| tmp.path().join(n);
    let go = |out: &str, extra: &[&str], env: Option<&str>| {
        let d = dir(out);
        let mut args = vec!["run", path, "--out", d.to_str().unwrap()];
        args.extend_from_slice(extra);
        assert_eq!(fvlab(&args, env).status.code(), Some(0));
        summary(&d)["seed"].as_u64().unwrap()
    };
    assert_eq!(go("c", &[], None), 1);
    assert_eq!(go("e", &[], Some("2")), 2);
    assert_eq!(go("f", &["--seed", "3"], Some("2")), 3);
}

#[test]
fn threshold_failure_exits_with_1() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(
        tmp.path(),
        "teleport.toml",
        "experiment = \"compliance\"\nseed = 4\npolicy = { kind = \"uniform_teleport\" }\ncompliance = { trials = 500, n = 4 }\n",
    );
    let out = run(&cfg, &tmp.path().join("o"), &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("compliance.hard.a_frequency"));
    let csv = fs::read_to_string(tmp.path().join("o/compliance.csv")).unwrap();
    assert!(csv.lines().nth(2).unwrap().starts_with("hard,uniform_teleport,4,500,"));
}

#[test]
fn explosion_guard_exits_with_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(
        tmp.path(),
        "boom.toml",
        r#"
experiment = "non_explosion"
seed = 8
dt = 0.001
init = { kind = "boundary", distance = 0.001 }
n = [20]
horizons = [1.0]
replicas = 2
explosion_cap = 0.05
"#,
    );
    let out = run(&cfg, &tmp.path().join("o"), &[]);
    assert_eq!(out.status.code(), Some(3));
    let jumps = fs::read_to_string(tmp.path().join("o/jumps.csv")).unwrap();
    assert_eq!(jumps.lines().nth(1).unwrap(), "N,replica,total_jumps,max_window_count,guard_tripped");
    assert!(jumps.lines().skip(2).all(|l| l.ends_with(",1")));
}

#[test]
fn check_hypotheses_reports_witness() {
    let tmp = tempfile::tempdir().unwrap();
    let text = BASE.replace("c0 = 0.5", "c0 = 1.5");
    let cfg = tmp.path().join("h.toml");
    fs::write(&cfg, format!("{text}experiment = \"tightness\"\nseed = 2\nhypothesis = {{ samples = 200 }}\n")).unwrap();
    let out_dir = tmp.path().join("o");
    let out = fvlab(&["check-hypotheses", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(1));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("hypothesis_report.json")).unwrap()).unwrap();
    let clauses = report["report"]["clauses"].as_array().unwrap();
    let c3 = clauses.iter().find(|c| c["clause"].as_str().unwrap().starts_with("3c")).unwrap();
    assert_eq!(c3["passed"], false);
    assert_eq!(c3["worst"]["value"], 1.0);
    assert_eq!(c3["worst"]["bound"], 1.5);
    assert!(clauses.iter().filter(|c| c != &c3).all(|c| c["passed"] == true));
}

#[test]
fn qsd_subcommand_writes_density() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(
        tmp.path(),
        "q.toml",
        "experiment = \"convergence\"\nseed = 6\ndt = 0.001\nn = [200]\nhorizons = [1.0]\nspectral_grid = 129\n",
    );
    let out_dir = tmp.path().join("o");
    let out = fvlab(&["qsd", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()], None);
    assert!(out.status.code() == Some(0) || out.status.code() == Some(1));
    let qsd = fs::read_to_string(out_dir.join("qsd.csv")).unwrap();
    assert_eq!(qsd.lines().count(), 2 + 129);
    let s = summary(&out_dir);
    let rel = s["statistics"]["eigenvalue_relative_error"].as_f64().unwrap();
    assert!(rel < 1e-3);
    assert!(out_dir.join("measure_1.csv").exists());
}

#[test]
fn outputs_stay_inside_the_output_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "h.toml", "experiment = \"compliance\"\nseed = 1\ncompliance = { trials = 100, n = 5 }\n");
    let out_dir = tmp.path().join("o");
    run(&cfg, &out_dir, &[]);
    let mut top: Vec<String> = fs::read_dir(tmp.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    top.sort();
    assert_eq!(top, ["h.toml", "o"]);
    let mut files: Vec<String> = fs::read_dir(&out_dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    files.sort();
    assert_eq!(files, ["compliance.csv", "summary.json"]);
}
