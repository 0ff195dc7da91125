use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn trimap(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trimap"))
        .args(args)
        .current_dir(cwd)
        .env_remove("TRIMAP_THREADS")
        .output()
        .unwrap()
}

fn ok(args: &[&str], cwd: &Path) -> Output {
    let out = trimap(args, cwd);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn data_rows(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| l.split_whitespace().map(|v| v.parse().unwrap()).collect())
        .collect()
}

fn banana_map(dir: &Path) {
    ok(
        &["build-direct", "--target", "banana", "--degree", "2", "--order", "6", "--out", "banana.trimap"],
        dir,
    );
}

#[test]
fn sample_writes_requested_rows_with_headers() {
    let dir = tempfile::tempdir().unwrap();
    banana_map(dir.path());
    ok(&["sample", "--map", "banana.trimap", "--n", "1000", "--seed", "7", "--out", "s.txt"], dir.path());
    let rows = data_rows(&dir.path().join("s.txt"));
    assert_eq!(rows.len(), 1000);
    assert!(rows.iter().all(|r| r.len() == 2 && r.iter().all(|v| v.is_finite())));

    for file in ["banana.trimap", "s.txt"] {
        let text = fs::read_to_string(dir.path().join(file)).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("# trimap "), "{file}");
        assert!(lines.next().unwrap().starts_with("# command "), "{file}");
        let seed = if file == "s.txt" { "# seed 7" } else { "# seed none" };
        assert!(lines.take_while(|l| l.starts_with('#')).any(|l| l == seed), "{file}");
    }
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = trimap(&["sample", "--bogus"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));

    let out = trimap(&["sample", "--map", "missing.trimap", "--n", "3", "--out", "x.txt"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("ERROR "));
}

#[test]
fn nan_target_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("nan.sh");
    fs::write(&script, "while read line; do echo nan; done\n").unwrap();
    let target = format!("cmd:sh {}", script.display());
    let out = trimap(
        &["build-direct", "--target", &target, "--dim", "1", "--degree", "1", "--out", "m.trimap"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.lines().any(|l| l.starts_with("ERROR callback-failure")), "{stderr}");
}

#[test]
fn subprocess_target_matches_builtin() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("normal.sh");
    fs::write(&script, "while read x; do awk -v x=\"$x\" 'BEGIN { printf \"%.17g\\n\", -0.125 * (x - 1) ^ 2 }'; done\n")
        .unwrap();
    let target = format!("cmd:sh {}", script.display());
    ok(&["build-direct", "--target", &target, "--dim", "1", "--degree", "1", "--order", "6", "--out", "a.trimap"], dir.path());
    ok(
        &["build-direct", "--target", "gaussian", "--mean", "1", "--cov", "4", "--degree", "1", "--order", "6", "--out", "b.trimap"],
        dir.path(),
    );
    let a = trimap::io::load_map(dir.path().join("a.trimap")).unwrap();
    let b = trimap::io::load_map(dir.path().join("b.trimap")).unwrap();
    // Forward-difference gradients bias the fit by about their step size.
    for (u, v) in a.params().iter().zip(b.params()) {
        assert!((u - v).abs() < 1e-4, "{u} vs {v}");
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cmd = ["build-direct", "--target", "banana", "--kind", "monotone", "--degree", "2", "--order", "5", "--out", "m.trimap"];
    ok(&cmd, dir.path());
    let first = fs::read(dir.path().join("m.trimap")).unwrap();
    ok(&["--threads", "1", "sample", "--map", "m.trimap", "--n", "300", "--seed", "3", "--out", "s.txt"], dir.path());
    let first_samples = fs::read(dir.path().join("s.txt")).unwrap();

    ok(&cmd, dir.path());
    assert_eq!(fs::read(dir.path().join("m.trimap")).unwrap(), first);
    ok(&["--threads", "1", "sample", "--map", "m.trimap", "--n", "300", "--seed", "3", "--out", "s.txt"], dir.path());
    assert_eq!(fs::read(dir.path().join("s.txt")).unwrap(), first_samples);
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.cfg"), "# fit settings\nmap.degree = 1\nintegration.order = 4\n").unwrap();
    ok(&["build-direct", "--target", "banana", "--config", "run.cfg", "--out", "cfg.trimap"], dir.path());
    ok(&["build-direct", "--target", "banana", "--config", "run.cfg", "--degree", "2", "--out", "flag.trimap"], dir.path());
    let from_cfg = trimap::io::load_map(dir.path().join("cfg.trimap")).unwrap();
    let from_flag = trimap::io::load_map(dir.path().join("flag.trimap")).unwrap();
    // Degree 1 gives [1, x1] and [1, x2, x1]; degree 2 adds the quadratic terms.
    assert_eq!(from_cfg.num_params(), 5);
    assert_eq!(from_flag.num_params(), 9);
}

#[test]
fn inverse_workflow_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    banana_map(dir.path());
    ok(&["sample", "--map", "banana.trimap", "--n", "2000", "--seed", "1", "--out", "y.txt"], dir.path());
    ok(
        &[
            "build-inverse", "--samples", "y.txt", "--degree", "2", "--out", "s.trimap",
            "--regress-direct", "t.trimap", "--check-gaussianity", "--report", "r.txt",
        ],
        dir.path(),
    );
    let report = fs::read_to_string(dir.path().join("r.txt")).unwrap();
    assert!(report.starts_with("# trimap "));
    assert!(report.contains("gaussianity"), "{report}");

    // invert solves S(x) = r, so pushing the pushed-forward samples back
    // recovers the originals.
    ok(&["sample", "--map", "s.trimap", "--n", "50", "--seed", "2", "--out", "w.txt"], dir.path());
    ok(&["invert", "--map", "s.trimap", "--in", "w.txt", "--out", "r.txt", "--tol", "1e-12"], dir.path());
    let s = trimap::io::load_map(dir.path().join("s.trimap")).unwrap();
    for (x, r) in data_rows(&dir.path().join("r.txt")).iter().zip(data_rows(&dir.path().join("w.txt"))) {
        let back = s.evaluate(x).unwrap();
        assert!(back.iter().zip(&r).all(|(a, b)| (a - b).abs() < 1e-8));
    }

    ok(&["condition", "--map", "s.trimap", "--ny", "1", "--ystar", "0.5", "--samples", "400", "--seed", "4", "--out", "c.txt"], dir.path());
    let cond = data_rows(&dir.path().join("c.txt"));
    assert_eq!(cond.len(), 400);
    assert!(cond.iter().all(|r| r.len() == 1));
}

#[test]
fn diagnose_and_mcmc_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    banana_map(dir.path());
    ok(&["diagnose", "--map", "banana.trimap", "--target", "banana", "--report", "d.txt"], dir.path());
    let report = fs::read_to_string(dir.path().join("d.txt")).unwrap();
    assert!(report.contains("kl_variance"), "{report}");
    ok(
        &[
            "mcmc", "--target", "banana", "--steps", "2000", "--burn", "200", "--seed", "5",
            "--precondition", "banana.trimap", "--out", "chain.txt",
        ],
        dir.path(),
    );
    assert_eq!(data_rows(&dir.path().join("chain.txt")).len(), 1800);
}
