//! Runs the `dicelab` binary end to end.

use std::collections::BTreeMap;
use std::process::{Command, Output};

use dicelab_cli::flatten_json;
use serde_json::Value;

fn dicelab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dicelab"))
        .args(args)
        .env_remove("DICELAB_WORKERS")
        .output()
        .expect("binary runs")
}

fn json_of(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("valid JSON")
}

#[test]
fn results_are_reproducible_across_worker_counts() {
    let base = ["tournament4", "--n", "21", "--trials", "3000", "--seed", "9"];
    let one = json_of(&dicelab(&[&base[..], &["--workers", "1"]].concat()));
    let again = json_of(&dicelab(&[&base[..], &["--workers", "1"]].concat()));
    let three = json_of(&dicelab(&[&base[..], &["--workers", "3"]].concat()));
    assert_eq!(one["results"]["counts"], again["results"]["counts"]);
    assert_eq!(one["results"]["counts"], three["results"]["counts"]);
    assert_eq!(one["results"]["probabilities"], three["results"]["probabilities"]);
}

#[test]
fn simple_integrals_all_pass() {
    let v = json_of(&dicelab(&["edgeworth", "--check", "simple-integrals", "--assert"]));
    let rows = v["results"]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 17);
    assert!(rows.iter().all(|r| r["pass"] == Value::Bool(true)));
    assert_eq!(v["assertion"]["passed"], Value::Bool(true));
}

#[test]
fn csv_carries_the_json_values() {
    let args = ["moments", "--stat", "sup-a", "--n", "15", "--trials", "50"];
    let json = json_of(&dicelab(&args));
    let csv_out = dicelab(&[&args[..], &["--format", "csv"]].concat());
    assert!(csv_out.status.success());
    let mut reader = csv::Reader::from_reader(csv_out.stdout.as_slice());
    let from_csv: BTreeMap<String, String> = reader
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[0].to_string(), r[1].to_string())
        })
        .collect();
    let from_json: BTreeMap<String, String> = flatten_json(&json["results"])
        .into_iter()
        .map(|(k, v)| (format!("results.{k}"), v))
        .collect();
    assert!(!from_json.is_empty());
    for (k, v) in &from_json {
        let c = from_csv.get(k).unwrap_or_else(|| panic!("missing {k}"));
        if let (Ok(a), Ok(b)) = (v.parse::<f64>(), c.parse::<f64>()) {
            assert_eq!(a.to_bits(), b.to_bits(), "{k}");
        } else {
            assert_eq!(v, c, "{k}");
        }
    }
}

#[test]
fn failed_assertion_exits_with_two() {
    // a single trial puts P_cycle at 0 or 1
    let out = dicelab(&["tournament3", "--n", "11", "--trials", "1", "--assert"]);
    assert_eq!(out.status.code(), Some(2));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["assertion"]["passed"], Value::Bool(false));
    // without --assert the same run succeeds
    assert_eq!(dicelab(&["tournament3", "--n", "11", "--trials", "1"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_with_64() {
    assert_eq!(dicelab(&["tournament3", "--n", "1"]).status.code(), Some(64));
    assert_eq!(dicelab(&["tournament3", "--no-such-flag"]).status.code(), Some(64));
    assert_eq!(dicelab(&["--help"]).status.code(), Some(0));
}

#[test]
fn worker_flag_overrides_environment() {
    let run = |env: &str, flag: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_dicelab"));
        cmd.args(["sample", "--n", "5", "--trials", "2"]).env("DICELAB_WORKERS", env);
        if let Some(w) = flag {
            cmd.args(["--workers", w]);
        }
        json_of(&cmd.output().unwrap())["config"]["workers"].clone()
    };
    assert_eq!(run("3", None), Value::from(3));
    assert_eq!(run("3", Some("2")), Value::from(2));
}

#[test]
fn variance_of_a_tracks_n_over_15() {
    let v = json_of(&dicelab(&["moments", "--stat", "var-a", "--n", "201", "--trials", "2000", "--seed", "3"]));
    let ratio = v["results"]["ratio_to_reference"].as_f64().unwrap();
    assert!((ratio - 1.0).abs() < 0.1, "ratio {ratio}");
}

#[test]
fn sweep_plot_has_increasing_n() {
    let dir = tempfile::tempdir().unwrap();
    let plot = dir.path().join("sweep.csv");
    let out = dicelab(&[
        "tournament4",
        "--trials",
        "100",
        "--sweep",
        "7,9,15",
        "--plot",
        plot.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let mut reader = csv::Reader::from_path(&plot).unwrap();
    assert_eq!(reader.headers().unwrap(), vec!["n", "p_transitive"]);
    let xs: Vec<f64> = reader.records().map(|r| r.unwrap()[0].parse().unwrap()).collect();
    assert_eq!(xs, vec![7.0, 9.0, 15.0]);
}

#[test]
fn report_goes_to_the_out_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    let out = dicelab(&["sample", "--n", "5", "--trials", "3", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["command"], "sample");
}
