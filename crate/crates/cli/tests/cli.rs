use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use genkahler_cli::{emit_plotdata, Report};

fn genkahler(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_genkahler"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn cp2_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let out = genkahler(&["cp2", "--potential", "fubini-study"], dir);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for file in ["cp2.csv", "plotdata.csv", "summary.json"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }
    let table = fs::read_to_string(a.join("cp2.csv")).unwrap();
    assert!(table.starts_with("r,H11,H22,H12,lambda,L,p,"));
    assert_eq!(table.lines().count(), 201);
    let s = summary(&a);
    assert_eq!(s["pass"], true);
    assert_eq!(s["experiment"], "cp2");
    assert!(s["checks"].as_array().unwrap().iter().any(|c| c["name"] == "sigma_gamma"));
}

#[test]
fn plotdata_is_sorted_by_quantity_then_r() {
    let tmp = tempfile::tempdir().unwrap();
    let out = genkahler(&["cp2", "--grid-n", "30"], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(tmp.path().join("plotdata.csv")).unwrap();
    let rows: Vec<(String, f64)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[1].to_string(), f[0].parse().unwrap())
        })
        .collect();
    assert!(rows.windows(2).all(|w| w[0].0 < w[1].0 || (w[0].0 == w[1].0 && w[0].1 < w[1].1)));
    assert!(rows.iter().any(|r| r.0 == "p"));
}

#[test]
fn hyperkahler_passes_with_header_only_plotdata() {
    let tmp = tempfile::tempdir().unwrap();
    let out = genkahler(&["hyperkahler"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_to_string(tmp.path().join("plotdata.csv")).unwrap(), "r,quantity,value\n");
    let s = summary(tmp.path());
    for c in s["checks"].as_array().unwrap() {
        assert!(c["max_residual"].as_f64().unwrap() < 1e-12, "{c}");
    }
}

#[test]
fn empty_report_gives_header() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("p.csv");
    emit_plotdata(&Report::new("x", "r"), &path).unwrap();
    assert_eq!(fs::read_to_string(&path).unwrap(), "r,quantity,value\n");
    let err = emit_plotdata(&Report::new("x", "r"), &tmp.path().join("missing/p.csv")).unwrap_err();
    assert!(err.to_string().contains("missing"));
}

#[test]
fn non_monotone_table_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, "r,H22\n0.1,0.01\n0.3,0.08\n0.2,0.04\n1.0,0.5\n2.0,0.8\n").unwrap();
    let arg = format!("file:{}", bad.display());
    let out = genkahler(&["cp2", "--potential", &arg], &tmp.path().join("o"));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("increasing"));
}

#[test]
fn tabulated_potential_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let table = tmp.path().join("fs.csv");
    let mut text = String::from("r,H22\n");
    for k in 0..400 {
        let r = 10f64.powf(-2.0 + 4.0 * k as f64 / 399.0);
        text.push_str(&format!("{r:.17e},{:.17e}\n", r * r / (1.0 + r * r)));
    }
    fs::write(&table, text).unwrap();
    let arg = format!("file:{}", table.display());
    let out = genkahler(&["cp2", "--potential", &arg, "--grid-min", "0.02", "--grid-max", "50", "--grid-n", "40"], &tmp.path().join("o"));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn crafted_tolerance_fails_with_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = genkahler(&["cp2", "--tol", "1e-30"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("exceeds tolerance 1.000e-30"), "{err}");
    assert_eq!(summary(tmp.path())["pass"], false);

    let one = genkahler(&["cp2", "--tol", "det=1e-30"], &tmp.path().join("one"));
    assert_eq!(one.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&one.stderr).starts_with("cp2: det:"));
}

#[test]
fn configuration_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    for args in [
        vec!["nonsense"],
        vec!["cp2", "--tol", "-1"],
        vec!["cp2", "--tol", "abc"],
        vec!["cp2", "--grid-min", "2", "--grid-max", "1"],
        vec!["cp2", "--potential", "unknown"],
        vec!["cp2", "--t", "2"],
        vec!["joyce", "--resolution", "2"],
        vec!["joyce", "--potential", "cubic"],
        vec!["cp2", "--experiment", "f2"],
        vec![],
    ] {
        let out = genkahler(&args, tmp.path());
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn json_config_and_format() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"experiment": "joyce", "resolution": 8, "t_values": [0.02], "tolerances": {"commutator": 1e-7}}"#).unwrap();
    let out = genkahler(&["--config", cfg.to_str().unwrap(), "--format", "json"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("joyce.json")).unwrap()).unwrap();
    let ts: Vec<f64> = rows.as_array().unwrap().iter().map(|r| r["t"].as_f64().unwrap()).collect();
    assert_eq!(ts, vec![0.02, 0.05]);
    let s = summary(tmp.path());
    let comm = s["checks"].as_array().unwrap().iter().find(|c| c["name"] == "commutator").unwrap().clone();
    assert_eq!(comm["tolerance"], 1e-7);
    let plot = fs::read_to_string(tmp.path().join("plotdata.csv")).unwrap();
    assert!(plot.starts_with("t,quantity,value\n"));

    fs::write(&cfg, r#"{"experiment": "joyce", "speed": 3}"#).unwrap();
    assert_eq!(genkahler(&["--config", cfg.to_str().unwrap()], tmp.path()).status.code(), Some(2));
}

#[test]
fn random_experiments_pass() {
    let tmp = tempfile::tempdir().unwrap();
    for args in [vec!["hodge-t4", "--count", "10"], vec!["point-check", "--count", "20", "--seed", "3"], vec!["f2"]] {
        let out = genkahler(&args, &tmp.path().join(args[0]));
        assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}
