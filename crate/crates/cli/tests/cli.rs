use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_loewner-lab")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&lab(&[])), 1);
    assert_eq!(code(&lab(&["simulate"])), 1);
    assert_eq!(code(&lab(&["rate", "--event", "nonsense"])), 1);
    assert_eq!(code(&lab(&["--help"])), 0);
}

#[test]
fn simulate_then_energy_unzip_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    let o = lab(&["--seed", "5", "--out", out.to_str().unwrap(), "simulate", "--kappa", "1", "--steps", "64"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let driver = fs::read_to_string(out.join("driver.csv")).unwrap();
    let mut lines = driver.lines();
    assert_eq!(lines.next(), Some("t,w"));
    assert_eq!(lines.next(), Some("0,0"));
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.starts_with("t,re,im\n0,0,0\n"));
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["subcommand"], "simulate");
    assert_eq!(m["master_seed"], 5);
    assert_eq!(m["outputs"].as_array().unwrap().len(), 2);

    let e_out = dir.path().join("energy");
    let o = lab(&["--out", e_out.to_str().unwrap(), "energy", "--driver", out.join("driver.csv").to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(fs::read_to_string(e_out.join("energy.csv")).unwrap().starts_with("energy\n"));

    let u_out = dir.path().join("unzip");
    let o = lab(&["--out", u_out.to_str().unwrap(), "unzip", "--trace", out.join("trace.csv").to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((summary["hcap"].as_f64().unwrap() - 2.0).abs() < 0.05, "{summary}");

    let m_out = dir.path().join("metrics");
    let t = out.join("trace.csv");
    let o = lab(&[
        "--out",
        m_out.to_str().unwrap(),
        "metrics",
        "--a",
        t.to_str().unwrap(),
        "--b",
        t.to_str().unwrap(),
        "--metric",
        "frechet",
    ]);
    assert_eq!(code(&o), 0);
    let v = json(&m_out.join("metrics.json"));
    assert_eq!(v["value"], 0.0);
    assert_eq!(v["mode"], "chordal");
    assert_eq!(v["grid_sizes"], serde_json::json!([65, 65]));
}

#[test]
fn radial_simulation_writes_theta() {
    let dir = tempfile::tempdir().unwrap();
    let o = lab(&[
        "--out",
        dir.path().to_str().unwrap(),
        "simulate",
        "--mode",
        "radial",
        "--kappa",
        "2",
        "--steps",
        "32",
        "--horizon",
        "0.5",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(fs::read_to_string(dir.path().join("theta.csv")).unwrap().starts_with("t,theta\n"));
}

#[test]
fn bessel_check_json_shape() {
    let dir = tempfile::tempdir().unwrap();
    let o = lab(&["--out", dir.path().to_str().unwrap(), "bessel-check", "--samples", "400", "--dt", "0.01"]);
    let v = json(&dir.path().join("bessel_check.json"));
    for key in ["p_hat", "p_exact", "sigma", "pass"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["p_exact"], 0.5);
    assert_eq!(code(&o), if v["pass"] == true { 0 } else { 2 });
}

#[test]
fn failing_check_exits_two() {
    // Far too few samples to see any return: the slope cannot be fitted.
    let dir = tempfile::tempdir().unwrap();
    let o = lab(&["--out", dir.path().to_str().unwrap(), "return-prob", "--samples", "5", "--steps", "64"]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("return_prob.csv")).unwrap();
    assert!(csv.starts_with("N,samples,hits,not_yet,p_hat,ci_lo,ci_hi,flag\n"));
}

#[test]
fn rn_check_at_time_zero_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = lab(&["--out", dir.path().to_str().unwrap(), "rn-check", "--horizon", "0", "--samples", "20"]);
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(dir.path().join("rn.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("sample,t,tau_delta,weight"));
    assert!(lines.all(|l| l.ends_with(",1")));
}

#[test]
fn rate_manifest_replays_under_other_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("rate");
    let o = lab(&[
        "--seed",
        "17",
        "--out",
        out.to_str().unwrap(),
        "rate",
        "--event",
        "cone",
        "--kappas",
        "1,0.5",
        "--samples",
        "200",
        "--steps",
        "48",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("rate.csv")).unwrap();
    assert!(csv.starts_with("kappa,samples,hits,p_hat,ci_lo,ci_hi,klogp,flag\n"));
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["substream_seeds"].as_array().unwrap().len(), 2);

    let manifest = out.join("manifest.json");
    for w in ["1", "3"] {
        let o = lab(&["--workers", w, "verify-manifest", manifest.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "workers {w}: {}", String::from_utf8_lossy(&o.stdout));
    }

    // A corrupted digest must be reported as FAIL.
    let text = fs::read_to_string(&manifest).unwrap();
    let sha = m["outputs"][0]["sha256"].as_str().unwrap();
    fs::write(&manifest, text.replace(sha, &"0".repeat(64))).unwrap();
    assert_eq!(code(&lab(&["verify-manifest", manifest.to_str().unwrap()])), 2);
}

#[test]
fn json_format_switches_table_files() {
    let dir = tempfile::tempdir().unwrap();
    let o = lab(&[
        "--format",
        "json",
        "--out",
        dir.path().to_str().unwrap(),
        "tightness",
        "--kappas",
        "0.5",
        "--ns",
        "8",
        "--samples",
        "10",
        "--steps",
        "64",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&dir.path().join("tightness.json"));
    assert_eq!(v["rows"].as_array().unwrap().len(), 1);
}

#[test]
fn multichordal_pattern_file() {
    let dir = tempfile::tempdir().unwrap();
    let pattern = dir.path().join("pattern.json");
    fs::write(&pattern, r#"{"n":2,"pairs":[[1,2],[3,4]],"points":[-2,-1,1,2]}"#).unwrap();
    let out = dir.path().join("mc");
    let o = lab(&[
        "--out",
        out.to_str().unwrap(),
        "multichordal",
        "--pattern",
        pattern.to_str().unwrap(),
        "--kappa",
        "0.5",
        "--steps",
        "64",
        "--resolution",
        "64",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let pot = json(&out.join("potential.json"));
    assert_eq!(pot["loop_term_omitted"], true);
    assert_eq!(pot["kernel_terms"].as_array().unwrap().len(), 2);

    fs::write(&pattern, r#"{"n":2,"pairs":[[1,3],[2,4]],"points":[-2,-1,1,2]}"#).unwrap();
    assert_eq!(
        code(&lab(&["--out", out.to_str().unwrap(), "multichordal", "--pattern", pattern.to_str().unwrap()])),
        1
    );
}
