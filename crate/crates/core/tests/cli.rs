use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use drm_core::rng::Stream;

fn drm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drm")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// Long-layout CSV with `n` draws from N(0, 1) and `n` from N(1, 1).
fn two_normals(dir: &Path, n: usize) -> PathBuf {
    let mut s = Stream::new(11);
    let mut text = String::from("group,value\n");
    for (g, mean) in [("a", 0.0), ("b", 1.0)] {
        for _ in 0..n {
            text.push_str(&format!("{g},{}\n", mean + s.normal()));
        }
    }
    let path = dir.join("two_normals.csv");
    std::fs::write(&path, text).unwrap();
    path
}

fn three_groups(dir: &Path) -> PathBuf {
    let mut s = Stream::new(5);
    let mut text = String::from("group,value\n");
    for (g, mean, sd) in [("p", 10.0, 2.0), ("q", 11.0, 2.2), ("r", 10.5, 1.7)] {
        for _ in 0..150 {
            text.push_str(&format!("{g},{}\n", mean + sd * s.normal()));
        }
    }
    let path = dir.join("three.csv");
    std::fs::write(&path, text).unwrap();
    path
}

fn json(o: &Output) -> serde_json::Value {
    assert!(o.status.success(), "{}", stderr(o));
    serde_json::from_str(&stdout(o)).unwrap()
}

#[test]
fn fit_with_linear_basis() {
    let dir = tempfile::tempdir().unwrap();
    let input = two_normals(dir.path(), 3000);
    let v = json(&drm(&["fit", "--input", input.to_str().unwrap(), "--basis", "poly:x"]));
    let alpha = v["alpha"][0].as_f64().unwrap();
    let beta = v["beta"][0][0].as_f64().unwrap();
    assert!((beta - 1.0).abs() < 0.1, "beta {beta}");
    assert!((alpha + 0.5).abs() < 0.1, "alpha {alpha}");
    assert_eq!(v["converged"], true);
    assert!(v["constraint_residual"].as_f64().unwrap() < 1e-8);
}

#[test]
fn exit_codes() {
    let missing = drm(&["fit", "--input", "/no/such/dir/data.csv"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(stderr(&missing).contains("/no/such/dir/data.csv"));

    let dir = tempfile::tempdir().unwrap();
    let input = three_groups(dir.path());
    let conflict = drm(&["fit", "--input", input.to_str().unwrap(), "--basis", "rich", "--d", "3"]);
    assert_eq!(conflict.status.code(), Some(1), "{}", stderr(&conflict));

    assert_eq!(drm(&["--help"]).status.code(), Some(0));
    assert_eq!(drm(&["fit", "--bogus"]).status.code(), Some(1));
    assert_eq!(drm(&["bench", "--scenario", "s9"]).status.code(), Some(1));
    let degenerate = dir.path().join("flat.csv");
    std::fs::write(&degenerate, "group,value\na,1\na,1\nb,2\nb,3\n").unwrap();
    assert_eq!(drm(&["fit", "--input", degenerate.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn dumped_basis_reproduces_fit() {
    let dir = tempfile::tempdir().unwrap();
    let input = three_groups(dir.path());
    let input = input.to_str().unwrap();
    let dump = dir.path().join("basis.json");
    let curves = dir.path().join("psi.csv");
    let b = drm(&[
        "basis",
        "--input",
        input,
        "--dump",
        dump.to_str().unwrap(),
        "--curves",
        curves.to_str().unwrap(),
    ]);
    assert!(b.status.success(), "{}", stderr(&b));
    let table = stdout(&b);
    assert!(table.starts_with("j\teigenvalue"));
    assert_eq!(table.lines().count(), 4);

    let csv = std::fs::read_to_string(&curves).unwrap();
    assert_eq!(csv.lines().count(), 513);
    assert!(csv.starts_with("x,psi0"));

    let auto = json(&drm(&["fit", "--input", input]));
    let file = json(&drm(&["fit", "--input", input, "--basis-file", dump.to_str().unwrap()]));
    let (l1, l2) = (auto["loglik"].as_f64().unwrap(), file["loglik"].as_f64().unwrap());
    assert!((l1 - l2).abs() < 1e-10, "{l1} vs {l2}");
    assert_eq!(auto["beta"], file["beta"]);
}

#[test]
fn tables() {
    let dir = tempfile::tempdir().unwrap();
    let input = three_groups(dir.path());
    let input = input.to_str().unwrap();

    let q = drm(&["quantiles", "--input", input, "--basis", "poly:x,x2", "--levels", "0.25,0.5"]);
    assert!(q.status.success(), "{}", stderr(&q));
    let text = stdout(&q);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "population\t0.25\t0.5");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("p\t"));

    let qj = json(&drm(&["quantiles", "--input", input, "--basis", "poly:x", "--json"]));
    assert_eq!(qj["rows"].as_array().unwrap().len(), 3);

    let d = drm(&["density", "--input", input, "--basis", "poly:x", "--grid", "0:20:11"]);
    assert!(d.status.success(), "{}", stderr(&d));
    let text = stdout(&d);
    assert_eq!(text.lines().next().unwrap(), "x,p,q,r");
    assert_eq!(text.lines().count(), 12);

    let k = drm(&["ku", "--input", input, "--L", "1", "--grid", "256"]);
    assert!(k.status.success(), "{}", stderr(&k));
    assert!(stdout(&k).starts_with("component\teigenvalue"));
}

#[test]
fn wide_layout() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("wide.csv");
    let mut s = Stream::new(3);
    let mut text = String::from("left,right\n");
    for i in 0..200 {
        let right = if i < 150 { format!("{}", 0.5 + s.normal()) } else { String::new() };
        text.push_str(&format!("{},{right}\n", s.normal()));
    }
    std::fs::write(&path, text).unwrap();
    let v = json(&drm(&["fit", "--input", path.to_str().unwrap(), "--layout", "wide", "--basis", "poly:x"]));
    assert!(v["beta"][0][0].as_f64().unwrap() > 0.0);
}

#[test]
fn bench_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.tsv");
    let raw = dir.path().join("raw.csv");
    let o = drm(&[
        "bench",
        "--scenario",
        "s1",
        "--n",
        "60",
        "--reps",
        "3",
        "--estimators",
        "truth,np,ku1,fpc2",
        "--out",
        out.to_str().unwrap(),
        "--raw",
        raw.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = std::fs::read_to_string(&out).unwrap();
    let labels: Vec<&str> = report.lines().skip(1).map(|l| l.split('\t').next().unwrap()).collect();
    assert_eq!(labels, ["Truth", "NP", "K&U 1", "2 FPCs"]);
    assert_eq!(report.lines().next().unwrap().split('\t').count(), 1 + 7 + 6);
    let raw = std::fs::read_to_string(&raw).unwrap();
    assert_eq!(raw.lines().count(), 1 + 4 * 3 * 6);
}
