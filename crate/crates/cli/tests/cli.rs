use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use robust_nlr::io::{parse_fit_report, parse_test_report};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_robust-nlr"));
    c.env_remove("ROBUST_NLR_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write_mm_csv(dir: &Path) -> String {
    let mut text = String::from("conc,y\n");
    for i in 1..=30 {
        let x = i as f64 * 0.5;
        let e = 0.05 * ((i * 7919) % 13) as f64 - 0.3;
        text.push_str(&format!("{x},{}\n", 10.0 * x / (2.0 + x) + e));
    }
    let path = dir.join("mm.csv");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn fit_reports_tsv_columns() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_mm_csv(dir.path());
    let out = stdout(&run(&["fit", "--input", &csv, "--tuning", "0.3", "--trim", "0.2"]));
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "param\testimate\tstd_error");
    let names: Vec<&str> = lines[1..].iter().map(|l| l.split('\t').next().unwrap()).collect();
    assert_eq!(names, ["beta1", "beta2", "sigma2", "sigma", "tape_0.2"]);
    let b1: f64 = lines[1].split('\t').nth(1).unwrap().parse().unwrap();
    assert!((b1 - 10.0).abs() < 0.5);
}

#[test]
fn json_report_round_trips_and_out_is_written() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_mm_csv(dir.path());
    let target = dir.path().join("report.json");
    let o = run(&["fit", "--input", &csv, "--method", "ols", "--format", "json", "--out", target.to_str().unwrap()]);
    assert!(stdout(&o).is_empty());
    let text = fs::read_to_string(&target).unwrap();
    let report = parse_fit_report(&text).unwrap();
    assert_eq!(report.method, "OLS");
    assert_eq!(report.schema, "robust-nlr/1");
    let again = serde_json::to_string_pretty(&report).unwrap() + "\n";
    assert_eq!(again, text);
}

#[test]
fn bad_input_fails_with_structured_error_and_no_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bad.csv");
    fs::write(&csv, "x,y\n1,2\n2,oops\n").unwrap();
    let target = dir.path().join("never.tsv");
    let o = run(&["fit", "--input", csv.to_str().unwrap(), "--out", target.to_str().unwrap()]);
    assert!(!o.status.success());
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "parse");
    assert!(err["error"]["message"].as_str().unwrap().contains("row 3"));
    assert!(!target.exists());
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn missing_input_is_a_usage_error() {
    let o = run(&["fit"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("--input"));
}

#[test]
fn seed_env_var_drives_demo_data() {
    let args = ["fit", "--demo", "2", "--method", "ols"];
    let a = stdout(&bin().args(args).env("ROBUST_NLR_SEED", "17").output().unwrap());
    let b = stdout(&bin().args(args).env("ROBUST_NLR_SEED", "17").output().unwrap());
    let c = stdout(&bin().args(args).env("ROBUST_NLR_SEED", "18").output().unwrap());
    let d = stdout(&run(&["fit", "--demo", "2", "--method", "ols", "--seed", "17"]));
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a, d);
}

#[test]
fn one_sided_and_joint_tests() {
    let one = stdout(&run(&["test", "--demo", "--side", "greater", "--hypothesis", "b2=0", "--alpha", "0.3"]));
    let row: Vec<&str> = one.lines().nth(1).unwrap().split('\t').collect();
    assert_eq!(row[0], "b2=0");
    assert_eq!(row[2], "normal");
    let json = stdout(&run(&["test", "--demo", "--hypothesis", "b1=5, b2=1", "--format", "json"]));
    let report = parse_test_report(&json).unwrap();
    assert!(report.result.p_value > 0.0 && report.result.p_value <= 1.0);
    let o = run(&["test", "--demo", "--side", "less", "--hypothesis", "b1=5, b2=1"]);
    assert!(!o.status.success());
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "invalid_argument");
}

#[test]
fn influence_profile_layout() {
    let out = stdout(&run(&["influence", "--demo", "--index", "1", "--points", "11"]));
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "t\tIF_beta1\tIF_beta2\tIF_sigma2");
    assert_eq!(lines.len(), 12);
    assert!(!run(&["influence", "--demo", "--index", "0"]).status.success());
    assert!(!run(&["influence", "--demo", "--index", "51"]).status.success());
}

#[test]
fn tune_alpha_reports_choice_and_trace() {
    let out = stdout(&run(&["tune-alpha", "--demo", "--demo-ec", "0.2", "--grid-step", "0.1"]));
    let first = out.lines().next().unwrap();
    assert!(first.starts_with("# alpha_hat="), "{first}");
    assert!(out.lines().nth(1).unwrap().starts_with("round\tpilot_alpha\talpha\test_mse\tchosen"));
}

#[test]
fn simulate_emits_table_rows() {
    let out = stdout(&run(&["simulate", "--setup", "1", "--ec", "0.1", "--reps", "10", "--methods", "ols,mdpde:0.5"]));
    assert!(out.starts_with("method\tmeasure\tbeta1\tbeta2\tsigma"));
    assert!(out.lines().any(|l| l.starts_with("MDPDE(0.5)\tEMSE\t")));
    let lvl = stdout(&run(&["simulate", "--scheme", "level", "--reps", "10", "--ns", "30", "--alphas", "0,0.5"]));
    assert_eq!(lvl.lines().count(), 3);
    assert!(!run(&["simulate", "--methods", "nonsense"]).status.success());
}
