use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BOUNDED: &str = r#"
seed = 3
n_particles = 60
horizon = 4
replicates = 40
[problem]
kind = "bounded"
dim = 3
a = 0.5
m = 1.6487212707001282
flow_seed = 2
"#;

const ADAPTIVE: &str = r#"
seed = 4
n_particles = 80
horizon = 4
replicates = 10
[problem]
kind = "gibbs"
energy = [1.5, 0.5, 1.0, 2.0, 1.25, 0.75]
[algorithm]
kind = "adaptive"
epsilon = 0.5
iterations = { fixed = 2 }
"#;

/// Satisfies the bounded hypothesis with `M = 4` while `g_(0,4)` exceeds `M + a`.
const LARGE_M: &str = r#"
n_particles = 20
horizon = 4
replicates = 10
[problem]
kind = "explicit"
initial = [0.5, 0.5]
potentials = [[1.0, 4.0], [1.0, 4.0], [1.0, 4.0], [1.0, 4.0]]
kernels = [
  [[1.0, 0.0], [0.8888888888888888, 0.1111111111111111]],
  [[1.0, 0.0], [0.8888888888888888, 0.1111111111111111]],
  [[1.0, 0.0], [0.8888888888888888, 0.1111111111111111]],
  [[1.0, 0.0], [0.8888888888888888, 0.1111111111111111]],
]
[checks]
regime = { kind = "bounded", a = 0.5, m = 4.0 }
"#;

fn fkips(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fkips")).args(args).output().expect("binary runs")
}

fn config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn help_lists_every_subcommand() {
    let o = fkips(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    for sub in ["run", "oracle", "tune", "verify-bounds", "adaptive"] {
        assert!(stdout(&o).contains(sub), "{sub}");
    }
}

#[test]
fn usage_and_config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(fkips(&["run", "--bogus"]).status.code(), Some(2));
    assert_eq!(fkips(&["run"]).status.code(), Some(2));
    assert_eq!(fkips(&["run", "--config", "/definitely/missing.toml"]).status.code(), Some(2));

    let bad = config(dir.path(), "bad.toml", &BOUNDED.replace("n_particles = 60", "n_particles = 0"));
    let o = fkips(&["run", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("n_particles"), "{}", stderr(&o));

    let unknown = config(dir.path(), "unknown.toml", &format!("colour = 1\n{BOUNDED}"));
    let o = fkips(&["run", "--config", unknown.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("colour"), "{}", stderr(&o));

    let cfg = config(dir.path(), "ok.toml", BOUNDED);
    let o = fkips(&["run", "--config", cfg.to_str().unwrap(), "--threads", "0"]);
    assert_eq!(o.status.code(), Some(2));
    let o = fkips(&["adaptive", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("adaptive"));
}

#[test]
fn run_output_is_independent_of_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "c.toml", BOUNDED);
    let mut outputs = Vec::new();
    for threads in ["1", "2", "8"] {
        let out = dir.path().join(format!("t{threads}"));
        let o = fkips(&["run", "--config", cfg.to_str().unwrap(), "--threads", threads, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let files: Vec<Vec<u8>> = ["raw.csv", "summary.csv", "diagnostics.csv", "exceedance.csv"]
            .iter()
            .map(|f| std::fs::read(out.join(f)).unwrap())
            .collect();
        outputs.push((o.stdout, files));
    }
    assert!(outputs.windows(2).all(|w| w[0] == w[1]));
    let summary = String::from_utf8(outputs[0].1[1].clone()).unwrap();
    assert!(summary.starts_with("step,statistic,count,mean,se,q05,q25,q50,q75,q95,exact\n"));
}

#[test]
fn flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "c.toml", BOUNDED);
    let out = dir.path().join("o");
    let o = fkips(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--replicates",
        "3",
        "--particles",
        "7",
        "--seed",
        "99",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let raw = std::fs::read_to_string(out.join("raw.csv")).unwrap();
    let reps: std::collections::BTreeSet<&str> = raw.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(reps.into_iter().collect::<Vec<_>>(), ["0", "1", "2"]);
    let other = fkips(&["run", "--config", cfg.to_str().unwrap(), "--replicates", "3", "--particles", "7", "--seed", "98"]);
    assert_ne!(o.stdout, other.stdout);
}

#[test]
fn oracle_prints_the_exact_flow() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "c.toml", BOUNDED);
    let o = fkips(&["oracle", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "step,beta,eta_0,eta_1,eta_2,log_gamma1,g_n,b_n");
    assert_eq!(lines.count(), 5);

    let acfg = config(dir.path(), "a.toml", ADAPTIVE);
    let o = fkips(&["oracle", "--config", acfg.to_str().unwrap()]);
    assert!(stdout(&o).lines().next().unwrap().ends_with("delta_n,c_n"));
}

#[test]
fn tune_reports_key_values_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "c.toml", BOUNDED);
    let out = dir.path().join("o");
    let o = fkips(&["tune", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("name=bounded-regime"));
    assert!(text.lines().any(|l| l.starts_with("r1_star=")));
    let csv = std::fs::read_to_string(out.join("tune.csv")).unwrap();
    assert!(csv.starts_with("name,index,kind,key,value\n"));
}

#[test]
fn verify_bounds_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = config(dir.path(), "ok.toml", BOUNDED);
    let out = dir.path().join("o");
    let o = fkips(&["verify-bounds", "--config", ok.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).starts_with("checks: "));
    let table = std::fs::read_to_string(out.join("verify.csv")).unwrap();
    assert!(table.starts_with("check,step,parameter,lhs,rhs,margin,status,detail\n"));
    assert!(!table.contains(",fail,"));

    let bad = config(dir.path(), "bad.toml", LARGE_M);
    let o = fkips(&["verify-bounds", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("fail regime-g"), "{}", stdout(&o));
}

#[test]
fn adaptive_reports_increments() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "a.toml", ADAPTIVE);
    let out = dir.path().join("o");
    let o = fkips(&["adaptive", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("step,delta_n,beta_n,c_n,kept_fraction,saturated_fraction\n"));
    assert_eq!(text.lines().count(), 5);
    let diag = std::fs::read_to_string(out.join("diagnostics.csv")).unwrap();
    assert!(diag.starts_with("replicate,step,log_gamma1,delta_n,beta_n,c_n,kept_fraction,saturated_flag,residual\n"));
}
