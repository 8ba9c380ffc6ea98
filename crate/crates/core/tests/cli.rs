use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn xyent(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xyent")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("JSON on stdout")
}

#[test]
fn corr_csv_layout() {
    let o = xyent(&["corr", "--lambda", "1", "--rmin", "-3", "--rmax", "3"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# xyent-format 1"));
    assert!(text.contains("# command = \"corr\""));
    assert!(text.contains("# L = \"inf\""));
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "r,G");
    assert_eq!(rows.len(), 8);
    let g0: f64 = rows[4].split(',').nth(1).unwrap().parse().unwrap();
    assert!((g0 - 2.0 / std::f64::consts::PI).abs() < 1e-12);
    // 17 significant digits
    assert_eq!(rows[4].split(',').nth(1).unwrap().split('e').next().unwrap().len(), 18);
}

#[test]
fn outputs_are_byte_identical() {
    let args = ["scan", "--lambda-range", "0.9:1.1:0.1", "--arr", "1,1", "--arr", "1,1,1"];
    let a = xyent(&[&args[..], &["--jobs", "1"]].concat());
    let b = xyent(&[&args[..], &["--jobs", "4"]].concat());
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let sep = ["sep", "--lambda", "1", "--arr", "2,2", "--seed", "3"];
    assert_eq!(xyent(&sep).stdout, xyent(&sep).stdout);
}

#[test]
fn scan_rows_are_ordered_by_lambda_then_arrangement() {
    let o = xyent(&["scan", "--lambda-range", "0:0.2:0.1", "--arr", "1,2", "--arr", "1,1"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<Vec<&str>> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| {
            let (lambda, rest) = l.split_once(",\"").unwrap();
            let (arr, rest) = rest.split_once("\",").unwrap();
            let mut v = vec![lambda, arr];
            v.extend(rest.split(','));
            v
        })
        .collect();
    assert_eq!(rows.len(), 6);
    let order: Vec<(&str, &str)> = rows.iter().map(|r| (r[0], r[1])).collect();
    assert_eq!(order[0], ("0", "(1,2)"));
    assert_eq!(order[1], ("0", "(1,1)"));
    assert!(order[2].0.starts_with("1.0000000000000001e-1") && order[2].1 == "(1,2)");
    // λ = 0 is a product state
    assert_eq!(rows[0][2], "0");
    assert_eq!(rows[1][2], "0");
}

#[test]
fn config_file_reproduces_the_echo() {
    let dir = tempfile::tempdir().unwrap();
    let first = xyent(&["gmn", "--lambda", "0.9", "--arr", "1,2", "--tol", "1e-9"]);
    assert_eq!(code(&first), 0);
    let echoed = json(&first)["config"].clone();
    let mut toml_text = String::new();
    for (k, v) in echoed.as_object().unwrap() {
        toml_text.push_str(&format!("{k} = {v}\n"));
    }
    let path = dir.path().join("run.toml");
    std::fs::write(&path, toml_text).unwrap();
    let second = xyent(&["--config", path.to_str().unwrap()]);
    assert_eq!(code(&second), 0, "{}", String::from_utf8_lossy(&second.stderr));
    assert_eq!(first.stdout, second.stdout);

    let overridden = xyent(&["--config", path.to_str().unwrap(), "--lambda", "1.0"]);
    assert_eq!(json(&overridden)["config"]["lambda"], 1.0);
}

#[test]
fn exit_codes() {
    assert_eq!(code(&xyent(&["nonsense"])), 2);
    assert_eq!(code(&xyent(&["corr", "--lambda", "1", "--L", "10"])), 2);
    assert_eq!(code(&xyent(&["scaling", "--L", "", "--out", "/nonexistent"])), 2);
    let missing = xyent(&["gmn", "--lambda", "1"]);
    assert_eq!(code(&missing), 2);
    let record: Value = serde_json::from_slice(&missing.stderr).unwrap();
    assert_eq!(record["error"], "invalid_parameter");

    let inconclusive = xyent(&["sep", "--lambda", "1", "--arr", "1,1", "--max-iter", "20"]);
    assert_eq!(code(&inconclusive), 4);
    assert_eq!(json(&inconclusive)["result"]["outcome"], "inconclusive");

    let certified = xyent(&["sep", "--lambda", "1", "--arr", "1,3"]);
    assert_eq!(code(&certified), 0);
    assert_eq!(json(&certified)["result"]["check"]["valid"], true);
}

#[test]
fn numerical_failure_exits_3() {
    // the coarse grid ends before the minimum, which cannot be located
    let dir = tempfile::tempdir().unwrap();
    let o = xyent(&[
        "scaling",
        "--L",
        "11,15,21,27",
        "--position-sizes",
        "11,15,21,27",
        "--coarse",
        "0.9:0.95:0.01",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 3);
    let record: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(record["error"], "grid_boundary");
}

#[test]
fn rdm_file_feeds_gmn_and_c4() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rho.json");
    let p = path.to_str().unwrap();
    assert_eq!(code(&xyent(&["rdm", "--lambda", "1", "--arr", "1,1,1", "--out", p])), 0);
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(doc["result"]["parties"], 4);
    std::fs::write(&path, doc["result"].to_string()).unwrap();
    let g = xyent(&["gmn", "--input", p]);
    assert_eq!(code(&g), 0);
    let n = json(&g)["result"]["value"].as_f64().unwrap();
    assert!((n - 0.0593761).abs() < 1e-6, "{n}");
    let c = xyent(&["c4", "--input", p]);
    assert_eq!(code(&c), 0);
    assert!(json(&c)["result"]["c4"].as_f64().unwrap() > 0.05);
}

#[test]
fn ed_agrees_with_free_fermions() {
    let o = xyent(&["ed", "--lambda", "0.6", "--L", "9", "--arr", "1,2"]);
    assert_eq!(code(&o), 0);
    let r = &json(&o)["result"];
    assert!(r["energy_difference"].as_f64().unwrap() < 1e-10);
    assert!(r["rdm_max_deviation"].as_f64().unwrap() < 1e-8);
    assert_eq!(code(&xyent(&["ed", "--lambda", "0.6"])), 2);
}

#[test]
fn expect_matches_rdm_entry() {
    let o = xyent(&["expect", "--lambda", "0.7", "--labels", "zz", "--sites", "4,5"]);
    assert_eq!(code(&o), 0);
    let zz = json(&o)["result"]["value"].as_f64().unwrap();
    assert!(zz > 0.0 && zz < 1.0);
}

fn read_rows(path: &Path) -> Vec<Vec<f64>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect()
}

#[test]
fn scaling_writes_the_figure_data() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let o = xyent(&[
        "scaling",
        "--L",
        "11,41,101",
        "--position-sizes",
        "11,41",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["summary.json", "minima.csv", "derivative_inf.csv", "derivative_L11.csv", "derivative_L101.csv"] {
        let text = std::fs::read_to_string(out.join(f)).unwrap();
        assert!(text.starts_with("# xyent-format 1") || text.contains("\"format\": \"xyent-format 1\""), "{f}");
    }
    let minima = read_rows(&out.join("minima.csv"));
    assert_eq!(minima.len(), 3);
    // deepening minima approaching λ = 1
    assert!(minima[0][4] > minima[1][4] && minima[1][4] > minima[2][4]);
    assert!(minima[0][2] > minima[1][2] && minima[1][2] > minima[2][2]);
    let curve = read_rows(&out.join("derivative_L41.csv"));
    assert!(curve.iter().all(|r| r.len() == 3 && r[1] > 0.0));
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["result"]["minima"].as_array().unwrap().len(), 3);
}
