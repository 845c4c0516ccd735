use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn sor(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sor")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Two-call binary survey with one co-missing covariate `x` ∈ {0, 1}.
fn write_inputs(dir: &Path) -> (PathBuf, PathBuf) {
    let mut s = String::from("weight,r1,r2,y,x\n");
    let mut state = 0x2545f4914f6cdd1du64;
    let mut u = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    for i in 0..1000u32 {
        let x = (u() < 0.52) as u32;
        let y = (u() < 0.35 + 0.3 * x as f64) as u32;
        let w = 1.0 + (i % 3) as f64 * 0.5;
        let a = 0.3 + 0.2 * y as f64;
        if u() < a {
            writeln!(s, "{w},1,1,{y},{x}")
        } else if u() < a {
            writeln!(s, "{w},0,1,{y},{x}")
        } else {
            writeln!(s, "{w},0,0,,")
        }
        .unwrap();
    }
    let data = dir.join("survey.csv");
    std::fs::write(&data, s).unwrap();
    let census = dir.join("census.csv");
    std::fs::write(&census, "x,count\n0,480\n1,520\n").unwrap();
    (data, census)
}

fn weighted_mean(data: &Path) -> f64 {
    let text = std::fs::read_to_string(data).unwrap();
    let (mut s, mut w) = (0.0, 0.0);
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f[2] == "1" {
            let wt: f64 = f[0].parse().unwrap();
            s += wt * f[3].parse::<f64>().unwrap();
            w += wt;
        }
    }
    s / w
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn cc_prints_the_weighted_mean() {
    let dir = tempfile::tempdir().unwrap();
    let (data, _) = write_inputs(dir.path());
    let out = dir.path().join("cc.json");
    let o = sor(&["estimate", "--data", p(&data), "--method", "cc", "--out", p(&out), "--seed", "1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let theta = report["estimate"]["parameters"][0]["estimate"].as_f64().unwrap();
    assert!((theta - weighted_mean(&data)).abs() < 1e-8);
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["seed"], 1);
}

#[test]
fn report_reproduces_printed_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let (data, census) = write_inputs(dir.path());
    let out = dir.path().join("dr.json");
    let o = sor(&["estimate", "--data", p(&data), "--census", p(&census), "--method", "dr", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("(default)"));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let text = stdout(&o);
    for par in report["estimate"]["parameters"].as_array().unwrap() {
        let (block, label) = (par["block"].as_str().unwrap(), par["label"].as_str().unwrap());
        let row = text
            .lines()
            .find(|l| {
                let f: Vec<&str> = l.split_whitespace().collect();
                f.len() == 6 && f[0] == block && f[1] == label
            })
            .unwrap_or_else(|| panic!("no row for {block}/{label} in\n{text}"));
        let f: Vec<&str> = row.split_whitespace().collect();
        assert_eq!(f[2], format!("{:.6}", par["estimate"].as_f64().unwrap()));
        assert_eq!(f[3], format!("{:.6}", par["se"].as_f64().unwrap()));
        assert_eq!(f[4], format!("{:.6}", par["ci"][0].as_f64().unwrap()));
        assert_eq!(f[5], format!("{:.6}", par["ci"][1].as_f64().unwrap()));
    }
}

#[test]
fn sensitivity_at_zero_equals_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let (data, census) = write_inputs(dir.path());
    let (e, s) = (dir.path().join("e.json"), dir.path().join("s.json"));
    let common = ["--data", p(&data), "--census", p(&census), "--method", "dr", "--seed", "5"];
    let o = sor(&[&["estimate"], &common[..], &["--out", p(&e)]].concat());
    assert_eq!(code(&o), 0);
    let o = sor(&[&["sensitivity"], &common[..], &["--grid", "0", "--out", p(&s)]].concat());
    assert_eq!(code(&o), 0);
    let e: Value = serde_json::from_str(&std::fs::read_to_string(&e).unwrap()).unwrap();
    let s: Value = serde_json::from_str(&std::fs::read_to_string(&s).unwrap()).unwrap();
    assert_eq!(s["points"][0]["estimate"], e["estimate"]);

    let o = sor(&[&["sensitivity"], &common[..], &["--grid", "-0.2,0.2"]].concat());
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("delta -0.2") && stdout(&o).contains("delta +0.2"));
}

#[test]
fn input_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let (data, census) = write_inputs(dir.path());
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "weight,r1,r2,y,x\n1,1,1,1,0\n1,1,1,1,0\n1,1,1,1,0\n1,0,1,x,1\n").unwrap();
    let o = sor(&["estimate", "--data", p(&bad), "--method", "cc"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 5"));

    let missing = dir.path().join("nope.csv");
    assert_eq!(code(&sor(&["estimate", "--data", p(&missing), "--method", "cc"])), 2);
    assert_eq!(code(&sor(&["estimate", "--data", p(&data), "--method", "dr"])), 2, "dr needs a census");
    assert_eq!(code(&sor(&["estimate", "--data", p(&data), "--method", "bogus"])), 2);
    let o = sor(&["sensitivity", "--data", p(&data), "--census", p(&census), "--grid", ""]);
    assert_eq!(code(&o), 2);
    assert_eq!(code(&sor(&["simulate", "--scenario", "QQ", "--reps", "1"])), 2);
}

#[test]
fn identification_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    // nobody answers at the second call, so COR has nothing to impute from
    let data = dir.path().join("s.csv");
    std::fs::write(&data, "weight,r1,r2,y\n1,1,1,1\n1,1,1,0\n1,0,0,\n").unwrap();
    let o = sor(&["estimate", "--data", p(&data), "--method", "cor"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("error: identification"));
}

fn simulate(dir: &Path, jobs: &str) -> Output {
    sor(&[
        "simulate", "--scenario", "TT", "--reps", "2", "--n", "800", "--jobs", jobs, "--seed", "9",
        "--estimators", "ipw,dr_mar", "--out-dir", p(dir),
    ])
}

#[test]
fn simulate_is_reproducible_across_jobs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (oa, ob) = (simulate(a.path(), "1"), simulate(b.path(), "2"));
    assert_eq!(code(&oa), 0, "{}", String::from_utf8_lossy(&oa.stderr));
    assert_eq!(stdout(&oa), stdout(&ob));
    for f in ["TT-binary.json", "TT-binary.csv", "TT-binary_wide.csv"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let wide = std::fs::read_to_string(a.path().join("TT-binary_wide.csv")).unwrap();
    assert_eq!(wide.lines().count(), 3);
    assert!(stdout(&oa).contains("truth 0.3"));
}

#[test]
fn single_replicate_gives_single_row() {
    let dir = tempfile::tempdir().unwrap();
    let o = sor(&["simulate", "--scenario", "ff", "--reps", "1", "--n", "1000", "--estimators", "dr", "--out-dir", p(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let wide = std::fs::read_to_string(dir.path().join("FF-binary_wide.csv")).unwrap();
    assert_eq!(wide.lines().count(), 2);
    let flat = std::fs::read_to_string(dir.path().join("FF-binary.csv")).unwrap();
    // header plus θ and γ
    assert_eq!(flat.lines().count(), 3);
}
