use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn ksep(dir: &Path, args: &[&str], config: &str) -> (Output, PathBuf) {
    let cfg = dir.join("config.toml");
    std::fs::write(&cfg, config).unwrap();
    let out = dir.join("out");
    let output = Command::new(env!("CARGO_BIN_EXE_ksep"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .env_remove("KSEP_THREADS")
        .output()
        .unwrap();
    (output, out)
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(path).unwrap();
    r.records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect()
}

#[test]
fn verify_exact_with_label_weights_passes() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = ksep(
        dir.path(),
        &["verify-exact"],
        "[verify_exact]\nweights = [\"label_count\"]\n",
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = json(&out.join("manifest.json"));
    assert_eq!(manifest["status"], "pass");
    assert_eq!(manifest["schema_version"], 1);
    for name in [
        "vu",
        "difference_formula",
        "negative_association",
        "kappa_tau_partial_sums",
        "sum_symmetry_label_count",
        "main_corollary_label_count",
        "factorial_bound",
        "product_measure",
    ] {
        let reports = json(&out.join("reports").join(format!("{name}.json")));
        let reports = reports.as_array().unwrap();
        assert_eq!(reports.len(), 24, "{name}");
        assert!(reports.iter().all(|r| r["pass"] == true), "{name}");
    }
    let pairs = json(&out.join("reports/pair_sum.json"));
    assert!(pairs.as_array().unwrap().iter().all(|r| r["equal"] == true));
}

#[test]
fn counting_measure_weight_fails_on_some_instances() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = ksep(
        dir.path(),
        &["verify-exact", "--seed", "20240601"],
        "[verify_exact]\nweights = [\"one\"]\n",
    );
    assert_eq!(o.status.code(), Some(1));
    let manifest = json(&out.join("manifest.json"));
    assert_eq!(manifest["status"], "fail");
    let failures: Vec<&str> = manifest["failures"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f.as_str().unwrap())
        .collect();
    assert!(
        failures.iter().any(|f| f.starts_with("sum_symmetry_one")),
        "{failures:?}"
    );
    assert!(
        failures.iter().any(|f| f.starts_with("main_corollary_one")),
        "{failures:?}"
    );
    assert!(failures.iter().all(|f| f.contains("_one")), "{failures:?}");
}

#[test]
fn simulate_writes_rescaled_order_statistics() {
    let dir = tempfile::tempdir().unwrap();
    let config = "[run]\nreplicas = 12\nseed = 5\n[grid]\nt = [2000.0]\n";
    let (o, out) = ksep(dir.path(), &["simulate"], config);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&out.join("results.csv"));
    assert_eq!(rows[0], ["t", "l", "replica", "rank", "position", "rescaled"]);
    assert_eq!(rows.len(), 1 + 12 * 4);
    let t = 2000.0f64;
    let b = (t / t.ln()).sqrt();
    let a = (t / ((2.0 * std::f64::consts::PI).sqrt() * t.ln())).ln();
    assert_eq!(rows[1][1], ((10.0 * b).ceil() as u64).to_string());
    for r in &rows[1..] {
        let x: f64 = r[4].parse().unwrap();
        let v: f64 = r[5].parse().unwrap();
        assert!((v - (x / b - a)).abs() < 1e-12);
    }
    for rep in rows[1..].chunks(4) {
        let xs: Vec<i64> = rep.iter().map(|r| r[4].parse().unwrap()).collect();
        assert!(xs.windows(2).all(|w| w[0] >= w[1]));
    }
    let manifest = json(&out.join("manifest.json"));
    assert_eq!(
        manifest["config"]["kernel"]["pairs"],
        serde_json::json!([[-1, 0.5], [1, 0.5]])
    );
    assert_eq!(manifest["config_text"], config);
}

#[test]
fn outputs_are_reproducible_across_thread_counts() {
    let config = "[run]\nreplicas = 120\nseed = 11\n[profile]\nk = 2\n[grid]\nt = [60.0, 120.0]\n";
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (oa, out_a) = ksep(a.path(), &["fit", "--threads", "1"], config);
    let (ob, out_b) = ksep(b.path(), &["fit", "--threads", "2"], config);
    assert_eq!(oa.status.code(), ob.status.code());
    assert_eq!(
        std::fs::read(out_a.join("results.csv")).unwrap(),
        std::fs::read(out_b.join("results.csv")).unwrap()
    );
    assert_eq!(
        std::fs::read(out_a.join("reports/fit.json")).unwrap(),
        std::fs::read(out_b.join("reports/fit.json")).unwrap()
    );
    let strip = |mut m: Value| {
        let o = m.as_object_mut().unwrap();
        o.remove("created_unix");
        o.remove("threads");
        m
    };
    assert_eq!(
        strip(json(&out_a.join("manifest.json"))),
        strip(json(&out_b.join("manifest.json")))
    );
}

#[test]
fn intensity_routes_agree() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = ksep(
        dir.path(),
        &["intensity"],
        "[profile]\nk = 2\n[grid]\nt = [100.0, 1000.0]\n",
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report = json(&out.join("reports/intensity.json"));
    assert!(report["max_route_relative_error"].as_f64().unwrap() < 1e-8);
    let rows = csv_rows(&out.join("results.csv"));
    assert_eq!(rows.len(), 1 + 2 * 3);
    for r in &rows[1..] {
        let trunc: f64 = r[4].parse().unwrap();
        let whole: f64 = r[5].parse().unwrap();
        assert!(trunc <= whole + 1e-12);
    }
}

#[test]
fn kappa_tau_bounds_hold() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = ksep(dir.path(), &["kappa-tau"], "[kappa_tau]\nt = [20.0, 80.0]\n");
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&out.join("results.csv"));
    let bounds: Vec<_> = rows.iter().filter(|r| r[0].ends_with("_bound")).collect();
    assert_eq!(bounds.len(), 5);
    assert!(bounds.iter().all(|r| r[6] == "true"));
}

#[test]
fn trend_reports_the_series() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = ksep(
        dir.path(),
        &["trend", "--seed", "4"],
        "[run]\nreplicas = 30\n[grid]\nt = [50.0, 100.0]\n",
    );
    assert!(matches!(o.status.code(), Some(0 | 1)));
    let report = json(&out.join("reports/trend.json"));
    assert_eq!(report["result"]["series"].as_array().unwrap().len(), 2);
    assert_eq!(json(&out.join("manifest.json"))["seed"], 4);
    let pass = report["result"]["pass"].as_bool().unwrap();
    assert_eq!(o.status.code(), Some(if pass { 0 } else { 1 }));
}

#[test]
fn config_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let (o, _) = ksep(dir.path(), &["simulate"], "[grid]\nt = [100.0, -3.0]\n");
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("grid.t[1]"));
    let (o, _) = ksep(dir.path(), &["simulate"], "[kernel]\npairs = [[1, 1.0]]\n");
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("kernel.pairs"));
}
