use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dualchannel"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn dualchannel")
}

fn ok(args: &[&str]) {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: PathBuf) -> Value {
    serde_json::from_slice(&fs::read(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))).unwrap()
}

/// Data rows of a dualchannel CSV (schema line and header dropped).
fn data_rows(p: PathBuf) -> Vec<String> {
    let text = fs::read_to_string(p).unwrap();
    text.lines().skip(2).map(str::to_owned).collect()
}

/// 160 firms in a 4 degree box with a sparse network; quick to simulate and
/// analyse. Much smaller and a bootstrap draw can lose all adoption change.
const SMALL: &str = r#"{
  "simulate": {
    "n_firms": 160,
    "geography": {"lat_min": 34.0, "lat_max": 38.0, "lon_min": 134.0, "lon_max": 138.0},
    "network": {"target_density": 0.0755, "target_degree": 12.0}
  },
  "analysis": {"bootstrap_reps": 40}
}"#;

fn small_dataset(tmp: &TempDir) -> PathBuf {
    let cfg = tmp.path().join("small.json");
    fs::write(&cfg, SMALL).unwrap();
    let data = tmp.path().join("data");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&data)]);
    data
}

#[test]
fn simulate_default_writes_full_panel() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("d");
    ok(&["simulate", "--out", s(&out)]);
    assert_eq!(data_rows(out.join("panel.csv")).len(), 500 * 14 * 6);
    assert_eq!(data_rows(out.join("firms.csv")).len(), 500);
    let m = json(out.join("manifest.json"));
    assert_eq!(m["command"], "simulate");
    for f in ["firms.csv", "panel.csv", "edges.csv", "generation_log.json", "config.json"] {
        assert_eq!(m["outputs"][f].as_str().unwrap().len(), 64, "{f}");
    }
}

#[test]
fn same_seed_same_digests_other_seed_differs() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("small.json");
    fs::write(&cfg, SMALL).unwrap();
    let dirs: Vec<PathBuf> = ["a", "b", "c"].iter().map(|d| tmp.path().join(d)).collect();
    ok(&["simulate", "--config", s(&cfg), "--out", s(&dirs[0]), "--seed", "7"]);
    ok(&["simulate", "--config", s(&cfg), "--out", s(&dirs[1]), "--seed", "7"]);
    ok(&["simulate", "--config", s(&cfg), "--out", s(&dirs[2]), "--seed", "8"]);
    let out = |d: &PathBuf| json(d.join("manifest.json"))["outputs"].clone();
    assert_eq!(out(&dirs[0]), out(&dirs[1]));
    assert_ne!(out(&dirs[0])["panel.csv"], out(&dirs[2])["panel.csv"]);
}

#[test]
fn bad_config_rejected_without_output() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("c.json");
    let out = tmp.path().join("o");
    fs::write(&cfg, r#"{"simulate": {"n_firms": 1}}"#).unwrap();
    let r = run(&["simulate", "--config", s(&cfg), "--out", s(&out)]);
    assert!(!r.status.success());
    assert!(String::from_utf8_lossy(&r.stderr).contains("n_firms"));
    assert!(!out.exists());

    fs::write(&cfg, r#"{"simulate": {"n_frims": 10}}"#).unwrap();
    let r = run(&["simulate", "--config", s(&cfg), "--out", s(&out)]);
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(!r.status.success() && err.contains("n_frims") && err.contains("column"), "{err}");
}

/// Two firms joined by one $5M edge, both adopters in both years.
fn two_firm_dataset(dir: &Path, edges: &str) {
    fs::create_dir_all(dir).unwrap();
    fs::write(
        dir.join("firms.csv"),
        "# schema: dualchannel/1\nfirm_id,latitude,longitude\n1,35.0,135.0\n2,35.1,135.1\n",
    )
    .unwrap();
    let mut panel = String::from("# schema: dualchannel/1\nfirm_id,year,tech,adopted\n");
    for y in [2020, 2021] {
        for f in [1, 2] {
            panel += &format!("{f},{y},iot,1\n");
        }
    }
    fs::write(dir.join("panel.csv"), panel).unwrap();
    fs::write(dir.join("edges.csv"), edges).unwrap();
}

#[test]
fn spectral_two_firm_graph() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("d");
    two_firm_dataset(&data, "# schema: dualchannel/1\nyear,firm_i,firm_j,weight_musd\n2020,1,2,5\n2021,1,2,5\n");
    let out = tmp.path().join("s");
    ok(&["spectral", s(&data), "--out", s(&out)]);
    let rows = json(out.join("lambda2_series.json"))["rows"].as_array().unwrap().clone();
    assert_eq!(rows.len(), 2);
    for r in rows {
        assert!((r["lambda2"].as_f64().unwrap() - 10.0).abs() < 1e-9, "{r}");
    }
    let m = json(out.join("manifest.json"));
    assert_eq!(m["inputs"].as_object().unwrap().len(), 3);
}

#[test]
fn empty_edge_list_fails_cleanly() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("d");
    two_firm_dataset(&data, "# schema: dualchannel/1\nyear,firm_i,firm_j,weight_musd\n");
    let out = tmp.path().join("s");
    let r = run(&["spectral", s(&data), "--out", s(&out)]);
    assert!(!r.status.success());
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(err.contains("edges.csv") && err.contains("empty"), "{err}");
    assert!(!out.exists());
}

#[test]
fn refuses_to_write_into_dataset() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("d");
    two_firm_dataset(&data, "# schema: dualchannel/1\nyear,firm_i,firm_j,weight_musd\n2020,1,2,5\n2021,1,2,5\n");
    let r = run(&["spectral", s(&data), "--out", s(&data)]);
    assert!(!r.status.success());
}

#[test]
fn fit_decay_reports_boundary() {
    let tmp = TempDir::new().unwrap();
    let data = small_dataset(&tmp);
    let out = tmp.path().join("f");
    ok(&["fit-decay", s(&data), "--out", s(&out), "--epsilon", "0.01"]);
    let rows = json(out.join("decay_fits.json"))["rows"].as_array().unwrap().clone();
    assert_eq!(rows.len(), 6);
    for r in &rows {
        let e = &r["fits"]["exponential"];
        let (kappa, d) = (e["kappa"].as_f64().unwrap(), e["d_star"].as_f64().unwrap());
        assert!((d - 100f64.ln() / kappa).abs() < 1e-9 * d, "{r}");
    }
    assert_eq!(json(out.join("config.json"))["analysis"]["epsilon"], 0.01);
}

#[test]
fn event_study_outputs() {
    let tmp = TempDir::new().unwrap();
    let data = small_dataset(&tmp);
    let out = tmp.path().join("e");
    ok(&["event-study", s(&data), "--out", s(&out), "--placebo-years", "2015,2020"]);
    let placebos = data_rows(out.join("placebos.csv"));
    let years: Vec<&str> = placebos.iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(years, ["2015", "2015", "2020", "2020"]);
    let es = json(out.join("event_study.json"));
    assert_eq!(es["excluded"][0][0], "generative_ai");
    for line in data_rows(out.join("event_study.csv")) {
        let f: Vec<&str> = line.split(',').collect();
        let (lo, hi) = (f[3].parse::<f64>().unwrap(), f[4].parse::<f64>().unwrap());
        assert!(lo <= hi, "{line}");
    }
    assert!(!data_rows(out.join("pretrends.csv")).is_empty());
}

#[test]
fn replicate_is_reproducible_from_config_echo() {
    let tmp = TempDir::new().unwrap();
    let data = small_dataset(&tmp);
    let cfg = tmp.path().join("small.json");
    let (a, b) = (tmp.path().join("r1"), tmp.path().join("r2"));
    ok(&["replicate", s(&data), "--config", s(&cfg), "--out", s(&a)]);
    let echo = a.join("config.json");
    ok(&["replicate", s(&data), "--config", s(&echo), "--out", s(&b)]);
    let ma = json(a.join("manifest.json"));
    assert_eq!(ma, json(b.join("manifest.json")));
    assert!(ma["outputs"].as_object().unwrap().len() >= 17);
    for name in ["dual_channel_r2.csv", "mixing_times.csv", "placebos.csv"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap());
    }
}
