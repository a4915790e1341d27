use std::path::Path;
use std::process::Command;

fn run(dir: &Path, args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_transverse"))
        .arg("--out")
        .arg(dir.join("out"))
        .args(args)
        .env("TRANSVERSE_THREADS", "2")
        .output()
        .expect("binary runs");
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stdout).into_owned())
}

fn config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn solve_writes_reports_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "ma.toml", "n = 2\ngrid = 8\nfamily = \"monge_ampere\"\nrhs = \"log(2 + cos(2*pi*x1))\"\n");
    let (code, stdout) = run(dir.path(), &["solve", &cfg]);
    assert_eq!(code, 0, "{stdout}");
    let out = dir.path().join("out");
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("solve.json")).unwrap()).unwrap();
    assert_eq!(report["converged"], true);
    let b = report["b"].as_f64().unwrap();
    assert!((b + 2.0f64.ln()).abs() < 1e-8, "{b}");
    assert!(out.join("solve_newton.csv").exists());
    let u = transverse::chart::read_snapshot(&out.join("solve_u.f64")).unwrap();
    assert_eq!(u.len(), 8usize.pow(4));
    assert!(out.join("solve_u.f64.meta").exists());
}

#[test]
fn continuation_failure_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "c.toml", "n = 2\ngrid = 8\nfamily = \"monge_ampere\"\nrhs = \"0.3*cos(2*pi*x1)\"\nmax_newton = 0\n");
    assert_eq!(run(dir.path(), &["solve", &cfg]).0, 2);
}

#[test]
fn inadmissible_start_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "a.toml", "n = 2\ngrid = 8\nfamily = \"monge_ampere\"\ninitial_u = \"0.5*cos(2*pi*x1)\"\n");
    assert_eq!(run(dir.path(), &["solve", &cfg]).0, 3);
    let cfg = config(dir.path(), "f.toml", "n = 2\ngrid = 8\nfamily = \"monge_ampere\"\nflow_u0 = \"0.5*cos(2*pi*x1)\"\n");
    assert_eq!(run(dir.path(), &["flow", &cfg]).0, 3);
}

#[test]
fn subsolution_and_flow_commands() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "q.toml",
        "n = 2\ngrid = 8\nfamily = \"hessian_quotient\"\nk = 2\nell = 1\nform_scale = 2.0\n",
    );
    let (code, stdout) = run(dir.path(), &["subsolution", &cfg]);
    assert_eq!(code, 0, "{stdout}");
    assert!(stdout.contains("quotient cone condition: holds"));
    let cfg = config(
        dir.path(),
        "flow.toml",
        "n = 2\ngrid = 8\nfamily = \"monge_ampere\"\nflow_u0 = \"1e-3*cos(2*pi*x1)\"\nsteps = 20\n",
    );
    let (code, stdout) = run(dir.path(), &["flow", &cfg]);
    assert_eq!(code, 0, "{stdout}");
    assert!(dir.path().join("out/flow.csv").exists());
}

#[test]
fn identities_and_manufacture() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout) = run(dir.path(), &["identities", "--seed", "3"]);
    assert_eq!(code, 0, "{stdout}");
    assert!(dir.path().join("out/identities.json").exists());
    let (code, stdout) = run(dir.path(), &["manufacture", "quotient-const"]);
    assert_eq!(code, 0, "{stdout}");
    assert!(stdout.contains("PASS quotient-const"));
    assert_eq!(run(dir.path(), &["manufacture", "nope"]).0, 1);
}
