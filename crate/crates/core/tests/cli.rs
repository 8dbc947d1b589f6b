use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hypotube"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("hypotube-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run_config(dir: &Path, body: &str, env_threads: Option<&str>) -> Output {
    let cfg = dir.join("run.conf");
    fs::write(&cfg, body).unwrap();
    let mut cmd = bin();
    cmd.arg("run").arg(&cfg).env_remove("HYPOTUBE_THREADS");
    if let Some(t) = env_threads {
        cmd.env("HYPOTUBE_THREADS", t);
    }
    cmd.output().unwrap()
}

#[test]
fn missing_config_exits_2() {
    let out = bin().args(["run", "/definitely/not/here.conf"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_keys_exit_2_and_numeric_failures_exit_3() {
    let dir = scratch("codes");
    let out_dir = dir.join("out");
    let o = run_config(&dir, &format!("experiment = nope\noutput = {}\n", out_dir.display()), None);
    assert_eq!(o.status.code(), Some(2));
    let o = run_config(&dir, &format!("experiment = tube\nsim.paths = many\noutput = {}\n", out_dir.display()), None);
    assert_eq!(o.status.code(), Some(2));
    // x0 outside the Asian domain (x1 > 0)
    let o = run_config(
        &dir,
        &format!("experiment = tube\ntube.x0 = -1, 0\nsim.paths = 10\noutput = {}\n", out_dir.display()),
        None,
    );
    assert_eq!(o.status.code(), Some(3));
    let log = fs::read_to_string(out_dir.join("run.log")).unwrap();
    assert!(log.contains("level=ERROR event=failed exit_code=\"3\""), "{log}");
}

#[test]
fn norms_run_writes_csv_manifest_and_log() {
    let dir = scratch("norms");
    let out_dir = dir.join("out");
    let body = format!("experiment = norms-check\nmodel.name = kolmogorov\nnorms.cases = 500\nseed = 4\noutput = {}\n", out_dir.display());
    let o = run_config(&dir, &body, None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out_dir.join("lemmas.csv")).unwrap();
    assert!(csv.starts_with("model,suite,cases,violations,worst,limit,passed\n"));
    assert!(!csv.contains('\r'));
    assert_eq!(csv.lines().count(), 5);
    let manifest = fs::read_to_string(out_dir.join("manifest.txt")).unwrap();
    for key in ["version = ", "seed = 4", "wall_time_s = ", "norms.cases = 500"] {
        assert!(manifest.contains(key), "{manifest}");
    }
    assert!(fs::read_to_string(out_dir.join("run.log")).unwrap().contains("event=done"));
}

#[test]
fn reruns_are_byte_identical_under_any_thread_cap() {
    let dir = scratch("rerun");
    let out_dir = dir.join("out");
    let body = format!(
        "experiment = tube\ntube.T = 0.3\ntube.radii = 0.5, 0.2\nsim.dt = 5e-3\nsim.paths = 500\nsim.threads = 8\nseed = 12\noutput = {}\n",
        out_dir.display()
    );
    let mut seen = Vec::new();
    for cap in [None, Some("1"), Some("4")] {
        let o = run_config(&dir, &body, cap);
        assert_eq!(o.status.code(), Some(0));
        let files: Vec<Vec<u8>> = ["tube.csv", "bounds.csv", "exit_times.csv"]
            .iter()
            .map(|f| fs::read(out_dir.join(f)).unwrap())
            .collect();
        seen.push(files);
    }
    assert!(seen.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn subcommands_print_tables() {
    let o = bin().arg("list-models").output().unwrap();
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("asian") && text.contains("counterexample"));

    let o = bin().args(["check-norms", "asian", "--cases", "300"]).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8(o.stdout).unwrap().contains("scaling-sandwich"));

    let o = bin().args(["tube", "kolmogorov", "--R", "0.5,0.25", "--T", "0.2", "--paths", "200"]).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("# tube\nR,p_hat,ci_low,ci_high,n_paths,seed\n"), "{text}");

    let o = bin().args(["density", "asian", "--delta", "0.02", "--paths", "20000"]).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8(o.stdout).unwrap().contains("z1,z2,p_hat,lower_env,upper_env"));

    let o = bin().args(["dc", "asian", "--x", "1,1", "--y", "1.01,1"]).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8(o.stdout).unwrap().contains("x1,x2,y1,y2,d,d_c_upper,endpoint_gap,rho2,saturated"));

    let o = bin().args(["check-norms", "no-such-model"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}
