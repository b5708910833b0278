use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dynperc::cli::{parse_csv_fields, Report, ReportBody, Verdict};
use tempfile::TempDir;

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        Self { dir: tempfile::tempdir().unwrap() }
    }

    fn file(&self, name: &str, json: &str) -> PathBuf {
        let path = self.dir.path().join(name);
        std::fs::write(&path, json).unwrap();
        path
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn dynperc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dynperc")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn report(out: &Output) -> Report {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "{e}: stdout {:?}, stderr {:?}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

const PATH3: &str = r#"{"kind":"explicit","children":[[1],[2],[3],[]]}"#;
const BINARY2: &str = r#"{"kind":"spherical","degrees":[2,2]}"#;
const POINT: &str = r#"{"kind":"point","t":0.3}"#;
const UNIT: &str = r#"{"kind":"intervals","intervals":[[0.0,1.0]]}"#;
const CANTOR: &str = r#"{"kind":"cantor","base":3,"digits":[0,2],"depth":4}"#;

#[test]
fn capacity_of_path_at_a_point() {
    let ws = Workspace::new();
    let (tree, target) = (ws.file("t.json", PATH3), ws.file("d.json", POINT));
    let out = dynperc(&["capacity", "--tree", s(&tree), "--target", s(&target), "--p", "0.9"]);
    assert!(out.status.success());
    let r = report(&out);
    let ReportBody::Capacity(c) = r.body else { panic!("wrong body") };
    assert!((c.capacity - 0.729).abs() < 1e-12, "{}", c.capacity);
    assert!(c.converged);
}

#[test]
fn bounds_check_examples_pass() {
    let ws = Workspace::new();
    let target = ws.file("d.json", POINT);
    for (tree, p, cap) in [(PATH3, "0.9", 0.729), (BINARY2, "0.5", 0.5)] {
        let tree = ws.file("t.json", tree);
        let out = dynperc(&["bounds-check", "--tree", s(&tree), "--target", s(&target), "--p", p, "--runs", "20000"]);
        assert_eq!(out.status.code(), Some(0));
        let r = report(&out);
        assert_eq!(r.verdict, Some(Verdict::Pass));
        let ReportBody::BoundsCheck(b) = r.body else { panic!("wrong body") };
        assert!((b.capacity - cap).abs() < 1e-9);
        assert!((b.ratio - b.p_hat / b.capacity).abs() < 1e-15);
    }
}

#[test]
fn bounds_check_with_zero_capacity() {
    // a ray so deep that the energy overflows and no path is ever open
    let ws = Workspace::new();
    let tree = ws.file("t.json", &format!(r#"{{"kind":"spherical","degrees":{:?}}}"#, vec![1; 400]));
    let target = ws.file("d.json", POINT);
    let out = dynperc(&["bounds-check", "--tree", s(&tree), "--target", s(&target), "--p", "0.01", "--runs", "1000"]);
    let r = report(&out);
    let ReportBody::BoundsCheck(b) = r.body else { panic!("wrong body") };
    assert_eq!(b.capacity, 0.0);
    assert_eq!(b.hits, 0);
    assert_eq!(r.verdict, Some(Verdict::Pass));
}

#[test]
fn dim_sweep_on_a_ray_reaches_the_top_of_the_grid() {
    let ws = Workspace::new();
    let (tree, target) = (ws.file("t.json", PATH3), ws.file("d.json", UNIT));
    let out =
        dynperc(&["dim-sweep", "--tree", s(&tree), "--target", s(&target), "--p", "0.5", "--alphas", "0.1:0.9:9"]);
    assert!(out.status.success());
    let ReportBody::DimSweep(r) = report(&out).body else { panic!("wrong body") };
    assert!((r.sweep.threshold - 0.9).abs() < 1e-12);
    assert!(r.sweep.monotone);
    assert!(r.spherical);
}

#[test]
fn dim_sweep_csv_is_an_alpha_table() {
    let ws = Workspace::new();
    let (tree, target) = (ws.file("t.json", BINARY2), ws.file("d.json", UNIT));
    let csv = ws.path("sweep.csv");
    let out = dynperc(&[
        "dim-sweep",
        "--tree",
        s(&tree),
        "--target",
        s(&target),
        "--p",
        "0.6",
        "--alphas",
        "0.2:0.8:4",
        "--format",
        "csv",
        "--out",
        s(&csv),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&csv).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "alpha,capacity");
    assert_eq!(rows.len(), 5);
    for row in &rows[1..] {
        let (a, c) = row.split_once(',').unwrap();
        assert!(a.parse::<f64>().unwrap() > 0.0);
        assert!(c.parse::<f64>().unwrap() > 0.0);
    }
}

#[test]
fn betaset_agrees_on_a_supercritical_binary_tree() {
    let ws = Workspace::new();
    let tree = ws.file("t.json", r#"{"kind":"spherical","degrees":[2,2,2,2]}"#);
    let target = ws.file("d.json", CANTOR);
    let out = dynperc(&["betaset", "--tree", s(&tree), "--target", s(&target), "--p", "0.8", "--n-range", "16:64"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r.verdict, Some(Verdict::Pass));
    let ReportBody::Betaset(b) = r.body else { panic!("wrong body") };
    assert!(b.g_capacity > 0.0 && b.h_capacity > 0.0);
    assert_eq!(b.n.len(), 49);
    assert!(b.band_ratio <= 4.0);
}

#[test]
fn betaset_requires_a_generator() {
    let ws = Workspace::new();
    let (tree, target) = (ws.file("t.json", BINARY2), ws.file("d.json", UNIT));
    let out = dynperc(&["betaset", "--tree", s(&tree), "--target", s(&target), "--p", "0.8"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn hps_check_on_the_critical_binary_tree() {
    let ws = Workspace::new();
    let counts: Vec<String> = (0..=20).map(|l| (1u64 << l).to_string()).collect();
    let tree = ws.file("t.json", &format!(r#"{{"kind":"level_counts","counts":[{}]}}"#, counts.join(",")));
    let out = dynperc(&["hps-check", "--tree", s(&tree), "--p", "0.5"]);
    assert!(out.status.success());
    let ReportBody::HpsCheck(h) = report(&out).body else { panic!("wrong body") };
    let harmonic: f64 = (1..=20).map(|l| 1.0 / l as f64).sum();
    assert!((h.partial_sum - harmonic).abs() < 1e-12);
    assert_eq!(h.terms, 20);
}

#[test]
fn simulate_is_deterministic_and_embeds_the_seed() {
    let ws = Workspace::new();
    let (tree, target) = (ws.file("t.json", BINARY2), ws.file("d.json", CANTOR));
    let args = ["simulate", "--tree", s(&tree), "--target", s(&target), "--p", "0.5", "--runs", "500", "--seed", "42"];
    let (a, b) = (dynperc(&args), dynperc(&args));
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let r = report(&a);
    assert_eq!(r.seed, 42);
    let ReportBody::Simulate(sim) = r.body else { panic!("wrong body") };
    assert_eq!(sim.runs, 500);
    assert_eq!(sim.p_hat, sim.hits as f64 / 500.0);

    let other = report(&dynperc(&[
        "simulate",
        "--tree",
        s(&tree),
        "--target",
        s(&target),
        "--p",
        "0.5",
        "--runs",
        "500",
        "--seed",
        "43",
    ]));
    assert_ne!(other.config_hash, r.config_hash);
}

#[test]
fn simulate_writes_traces() {
    let ws = Workspace::new();
    let (tree, target) = (ws.file("t.json", BINARY2), ws.file("d.json", UNIT));
    let traces = ws.path("traces.csv");
    let out = dynperc(&[
        "simulate",
        "--tree",
        s(&tree),
        "--target",
        s(&target),
        "--p",
        "0.5",
        "--runs",
        "50",
        "--traces",
        s(&traces),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&traces).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("run,start,end"));
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        let (lo, hi): (f64, f64) = (f[1].parse().unwrap(), f[2].parse().unwrap());
        assert!(f[0].parse::<u64>().unwrap() < 50);
        assert!(0.0 <= lo && lo <= hi && hi <= 1.0);
    }
}

#[test]
fn json_and_csv_reports_carry_the_same_numbers() {
    let ws = Workspace::new();
    let (tree, target) = (ws.file("t.json", BINARY2), ws.file("d.json", UNIT));
    let base = ["bounds-check", "--tree", s(&tree), "--target", s(&target), "--p", "0.6", "--runs", "2000"];
    let json = dynperc(&base);
    let r = report(&json);
    // the JSON text round-trips exactly
    let again: Report = serde_json::from_str(&r.to_json()).unwrap();
    assert_eq!(again, r);

    let mut csv_args = base.to_vec();
    csv_args.extend(["--format", "csv"]);
    let csv = String::from_utf8(dynperc(&csv_args).stdout).unwrap();
    let fields = parse_csv_fields(&csv);
    let value = serde_json::to_value(&r).unwrap();
    assert!(!fields.is_empty());
    for (key, text) in fields {
        let json_field = key.split('.').fold(&value, |v, k| match k.parse::<usize>() {
            Ok(i) if v.is_array() => &v[i],
            _ => &v[k],
        });
        match json_field {
            serde_json::Value::Number(n) => assert_eq!(text.parse::<f64>().unwrap(), n.as_f64().unwrap(), "{key}"),
            serde_json::Value::String(s) => assert_eq!(&text, s),
            other => assert_eq!(text, other.to_string()),
        }
    }
}

#[test]
fn invalid_configs_are_reported() {
    let ws = Workspace::new();
    let tree = ws.file("t.json", BINARY2);
    let missing = ws.path("missing.json");
    let out = dynperc(&["capacity", "--tree", s(&tree), "--target", s(&missing), "--p", "0.5"]);
    assert_eq!(out.status.code(), Some(1));

    let target = ws.file("d.json", POINT);
    let out = dynperc(&["capacity", "--tree", s(&tree), "--target", s(&target), "--p", "1.5"]);
    assert_eq!(out.status.code(), Some(1));

    let out = dynperc(&[
        "capacity",
        "--tree",
        s(&tree),
        "--target",
        s(&target),
        "--p",
        "0.5",
        "--kernel",
        "phi",
        "--alpha",
        "0.5",
    ]);
    assert_eq!(out.status.code(), Some(1), "phi on an atomic target has a singular diagonal");
}
