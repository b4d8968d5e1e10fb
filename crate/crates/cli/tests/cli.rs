use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cptp::channel::forward_probs;
use cptp::ensembles::{j_distance, minimal_setup, random_cptp, random_quasi_pure, EnsembleSpec};
use cptp::tensor::{c64, diag, CMatrix};
use cptp::ChoiMatrix;
use serde_json::Value;
use tempfile::TempDir;

fn cptp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cptp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = cptp(args);
    assert!(
        out.status.success(),
        "cptp {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn path(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_choi(p: &Path) -> ChoiMatrix {
    let v: Value = serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap();
    let d = v["d"].as_u64().unwrap() as usize;
    let n = d * d;
    let at = |key: &str, i: usize, j: usize| v[key][i][j].as_f64().unwrap();
    ChoiMatrix::new(
        d,
        CMatrix::from_fn(n, n, |i, j| c64(at("re", i, j), at("im", i, j))),
    )
    .unwrap()
}

fn write_choi_raw(p: &Path, m: &CMatrix, d: usize) {
    let rows = |f: fn(&num_complex::Complex64) -> f64| -> Vec<Vec<f64>> {
        (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| f(&m[(i, j)])).collect())
            .collect()
    };
    let v = serde_json::json!({"d": d, "re": rows(|z| z.re), "im": rows(|z| z.im)});
    fs::write(p, v.to_string()).unwrap();
}

fn report(p: &Path) -> Value {
    let mut name = p.as_os_str().to_owned();
    name.push(".report.json");
    serde_json::from_str(&fs::read_to_string(PathBuf::from(name)).unwrap()).unwrap()
}

#[test]
fn gen_map_quasi_pure_has_high_purity_and_round_trips() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "map.json");
    let stdout = ok(&[
        "gen-map",
        "--d",
        "2",
        "--kind",
        "quasipure",
        "--seed",
        "7",
        "--out",
        s(&out),
    ])
    .stdout;
    assert!(String::from_utf8(stdout).unwrap().contains("purity"));
    let choi = read_choi(&out);
    assert!(choi.purity() >= 0.9);
    let expected = random_quasi_pure(&EnsembleSpec::quasi_pure(2, 7)).unwrap();
    assert!((choi.matrix() - expected.matrix()).camax() <= 1e-15);
}

#[test]
fn gen_map_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (path(&dir, "a.json"), path(&dir, "b.json"));
    for p in [&a, &b] {
        ok(&[
            "gen-map",
            "--d",
            "2",
            "--kind",
            "full",
            "--kraus-rank",
            "4",
            "--seed",
            "7",
            "--out",
            s(p),
        ]);
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn gen_map_usage_errors() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "m.json");
    assert_eq!(
        cptp(&["gen-map", "--d", "1", "--kind", "full", "--out", s(&out)])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        cptp(&["gen-map", "--d", "2", "--kind", "other", "--out", s(&out)])
            .status
            .code(),
        Some(2)
    );
    let infeasible = cptp(&[
        "gen-map",
        "--d",
        "2",
        "--kind",
        "full",
        "--kraus-rank",
        "0",
        "--out",
        s(&out),
    ]);
    assert_eq!(infeasible.status.code(), Some(1));
}

#[test]
fn simulate_infinite_data_matches_probabilities() {
    let dir = TempDir::new().unwrap();
    let (map, counts) = (path(&dir, "m.json"), path(&dir, "c.txt"));
    ok(&[
        "gen-map",
        "--d",
        "2",
        "--kind",
        "full",
        "--seed",
        "3",
        "--out",
        s(&map),
    ]);
    ok(&[
        "simulate",
        "--map",
        s(&map),
        "--N",
        "inf",
        "--out",
        s(&counts),
    ]);
    let text = fs::read_to_string(&counts).unwrap();
    assert!(text.contains("\nN inf\n"));
    let p = forward_probs(&read_choi(&map), &minimal_setup(2).unwrap()).unwrap();
    let body: Vec<f64> = text
        .lines()
        .skip_while(|l| *l != "i,j,n_ij")
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(body.len(), p.len());
    for (n, p) in body.iter().zip(&p) {
        assert!((n - p).abs() <= 1e-12);
    }
}

#[test]
fn simulate_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let map = path(&dir, "m.json");
    ok(&[
        "gen-map",
        "--d",
        "2",
        "--kind",
        "quasipure",
        "--seed",
        "1",
        "--out",
        s(&map),
    ]);
    let (a, b) = (path(&dir, "a.txt"), path(&dir, "b.txt"));
    for p in [&a, &b] {
        ok(&[
            "simulate",
            "--map",
            s(&map),
            "--N",
            "1000",
            "--seed",
            "1",
            "--out",
            s(p),
        ]);
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn simulate_rejects_bad_maps() {
    let dir = TempDir::new().unwrap();
    let (map, out) = (path(&dir, "m.json"), path(&dir, "c.txt"));
    fs::write(&map, "{\"d\": 2, \"re\": [[1.0, 0.0]").unwrap();
    let r = cptp(&["simulate", "--map", s(&map), "--N", "10", "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("malformed"));

    write_choi_raw(&map, &diag(&[0.1, 0.1, 0.1, 1.7]), 2);
    let r = cptp(&["simulate", "--map", s(&map), "--N", "10", "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("input map is not CPTP within tolerance"));
}

#[test]
fn reconstruct_recovers_and_methods_agree() {
    let dir = TempDir::new().unwrap();
    let (map, counts) = (path(&dir, "m.json"), path(&dir, "c.txt"));
    ok(&[
        "gen-map",
        "--d",
        "2",
        "--kind",
        "quasipure",
        "--seed",
        "11",
        "--out",
        s(&map),
    ]);
    ok(&[
        "simulate",
        "--map",
        s(&map),
        "--N",
        "inf",
        "--out",
        s(&counts),
    ]);
    let truth = read_choi(&map);

    let pgdb = path(&dir, "pgdb.json");
    ok(&[
        "reconstruct",
        "--counts",
        s(&counts),
        "--method",
        "pgdb",
        "--ftol",
        "1e-13",
        "--out",
        s(&pgdb),
    ]);
    assert!(j_distance(&read_choi(&pgdb), &truth).unwrap() <= 1e-4);

    let mut costs = Vec::new();
    for method in ["pgdb", "dia", "lifp"] {
        let out = path(&dir, &format!("{method}-default.json"));
        ok(&[
            "reconstruct",
            "--counts",
            s(&counts),
            "--method",
            method,
            "--out",
            s(&out),
        ]);
        assert!(read_choi(&out).is_cptp(), "{method} estimate is not CPTP");
        let r = report(&out);
        assert!(r["costs"].is_array() && r["conditioning_heralded"].is_boolean());
        assert!(r["wall_time_seconds"].as_f64().unwrap() >= 0.0);
        costs.push(r["final_cost"].as_f64().unwrap());
    }
    assert!((costs[0] - costs[1]).abs() <= 1e-6 * costs[0].abs());
}

#[test]
fn reconstruct_exit_codes() {
    let dir = TempDir::new().unwrap();
    let (map, counts, out) = (
        path(&dir, "m.json"),
        path(&dir, "c.txt"),
        path(&dir, "e.json"),
    );
    ok(&[
        "gen-map",
        "--d",
        "2",
        "--kind",
        "quasipure",
        "--seed",
        "2",
        "--out",
        s(&map),
    ]);
    ok(&[
        "simulate",
        "--map",
        s(&map),
        "--N",
        "1000",
        "--seed",
        "5",
        "--out",
        s(&counts),
    ]);
    let r = cptp(&[
        "reconstruct",
        "--counts",
        s(&counts),
        "--method",
        "cvx",
        "--out",
        s(&out),
    ]);
    assert_eq!(r.status.code(), Some(2));

    let r = cptp(&[
        "reconstruct",
        "--counts",
        s(&counts),
        "--method",
        "pgdb",
        "--max-iters",
        "1",
        "--out",
        s(&out),
    ]);
    assert_eq!(r.status.code(), Some(3));
    assert!(read_choi(&out).is_cptp());
    assert_eq!(report(&out)["status"], "iteration_cap");

    fs::write(&counts, "d 2\nn_prep 4\n").unwrap();
    let r = cptp(&[
        "reconstruct",
        "--counts",
        s(&counts),
        "--method",
        "pgdb",
        "--out",
        s(&out),
    ]);
    assert_eq!(r.status.code(), Some(1));
}

fn distance_moved(out: &Output) -> f64 {
    let text = String::from_utf8_lossy(&out.stdout);
    text.trim()
        .strip_prefix("distance_moved ")
        .unwrap()
        .parse()
        .unwrap()
}

#[test]
fn project_examples() {
    let dir = TempDir::new().unwrap();
    let boxed = path(&dir, "box.json");
    write_choi_raw(&boxed, &diag(&[0.1, 0.1, 0.1, 1.7]), 2);

    let tp = path(&dir, "tp.json");
    ok(&["project", "--in", s(&boxed), "--set", "tp", "--out", s(&tp)]);
    assert!((read_choi(&tp).matrix() - diag(&[0.5, 0.5, -0.3, 1.3])).camax() <= 1e-12);

    let us = path(&dir, "us.json");
    ok(&[
        "project",
        "--in",
        s(&boxed),
        "--set",
        "us_p",
        "--p-success",
        "1.0",
        "--out",
        s(&us),
    ]);
    assert_eq!(read_choi(&us).matrix(), read_choi(&tp).matrix());

    let map = path(&dir, "m.json");
    let cptp_out = path(&dir, "p.json");
    fs::write(&map, "").unwrap();
    let truth = random_cptp(&EnsembleSpec::full_rank(2, 3, 8)).unwrap();
    write_choi_raw(&map, truth.matrix(), 2);
    let r = ok(&[
        "project",
        "--in",
        s(&map),
        "--set",
        "cptp",
        "--out",
        s(&cptp_out),
    ]);
    assert!(distance_moved(&r) <= 1e-6);

    let mut skew = diag(&[0.5, 0.5, 0.5, 0.5]);
    skew[(0, 1)] = c64(1e-3, 0.0);
    write_choi_raw(&map, &skew, 2);
    let r = cptp(&[
        "project",
        "--in",
        s(&map),
        "--set",
        "cp",
        "--out",
        s(&cptp_out),
    ]);
    assert_eq!(r.status.code(), Some(1));
}

#[test]
fn benchmark_counts_rows_and_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (path(&dir, "a.csv"), path(&dir, "b.csv"));
    let args = |out: &Path| {
        vec![
            "benchmark".to_owned(),
            "--d-list".into(),
            "2".into(),
            "--N-list".into(),
            "inf".into(),
            "--methods".into(),
            "pgdb,dia,lifp".into(),
            "--trials".into(),
            "5".into(),
            "--seed".into(),
            "9".into(),
            "--out".into(),
            s(out).to_owned(),
        ]
    };
    let run = |out: &Path, threads: &str| {
        let status = Command::new(env!("CARGO_BIN_EXE_cptp"))
            .args(args(out))
            .env("CPTP_THREADS", threads)
            .status()
            .unwrap();
        assert!(status.success());
    };
    run(&a, "1");
    run(&b, "4");
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# cptp-benchmark v"));
    assert!(lines
        .next()
        .unwrap()
        .starts_with("d,N,method,trial,trial_seed,j_distance"));
    assert_eq!(lines.count(), 15);
}
