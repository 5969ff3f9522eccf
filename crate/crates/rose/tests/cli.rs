use std::process::{Command, Output};

fn rose(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rose"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

const T1_ROW: [&str; 8] = [
    "--p-high",
    "0.3",
    "--delta",
    "0.1",
    "--alpha-low",
    "0.6",
    "--alpha-high",
    "0.6",
];

#[test]
fn design_json_envelope() {
    let mut args = vec!["design"];
    args.extend(T1_ROW);
    args.extend(["--format", "json"]);
    let o = rose(&args);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(v["engine_version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(v["request"]["method"], "normal_approx");
    assert_eq!(v["result"]["design"]["n_low"], 11);
    assert!((v["result"]["design"]["lambda"].as_f64().unwrap() - 0.052).abs() < 5e-4);
}

#[test]
fn design_csv_two_stage() {
    let mut args = vec!["design"];
    args.extend(T1_ROW);
    args.extend(["--omega", "0.5", "--format", "csv"]);
    let o = rose(&args);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| row[header.iter().position(|h| *h == name).unwrap()];
    assert_eq!((col("n1_low"), col("n_low")), ("7", "13"));
    let r3 = |name: &str| (col(name).parse::<f64>().unwrap() * 1000.0).round();
    assert_eq!((r3("lambda1"), r3("lambda")), (178.0, 74.0));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("goal.conf");
    std::fs::write(
        &path,
        "# table 1 row\np-high = 0.4\ndelta = 0.1\nalpha_low = 0.65\nalpha-high = 0.65\n",
    )
    .unwrap();
    let cfg = path.to_str().unwrap();
    let o = rose(&["design", "--config", cfg, "--format", "json"]);
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(v["result"]["design"]["n_low"], 28);
    let o = rose(&[
        "design",
        "--config",
        cfg,
        "--p-high",
        "0.3",
        "--alpha-low",
        "0.6",
        "--alpha-high",
        "0.6",
        "--format",
        "json",
    ]);
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(v["result"]["design"]["n_low"], 11);
    std::fs::write(&path, "p-hgh = 0.4\n").unwrap();
    assert_eq!(rose(&["design", "--config", cfg]).status.code(), Some(2));
}

#[test]
fn exit_codes() {
    let o = rose(&[
        "design",
        "--p-high",
        "1.2",
        "--delta",
        "0.1",
        "--alpha-low",
        "0.6",
        "--alpha-high",
        "0.6",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let o = rose(&["design", "--delta", "0.1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    let o = rose(&[
        "design",
        "--p-high",
        "0.3",
        "--delta",
        "0.1",
        "--alpha-low",
        "0.6",
        "--alpha-high",
        "0.6",
        "--method",
        "exact",
        "--ratio",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let o = rose(&[
        "design",
        "--p-high",
        "0.5",
        "--delta",
        "0.1",
        "--alpha-low",
        "0.99",
        "--alpha-high",
        "0.99",
        "--method",
        "exact",
        "--n-cap",
        "20",
    ]);
    assert_eq!(o.status.code(), Some(3));
    let mut args = vec!["simulate"];
    args.extend(T1_ROW);
    assert_eq!(rose(&args).status.code(), Some(2));
    assert_eq!(rose(&["reproduce", "T99"]).status.code(), Some(2));
    assert_eq!(rose(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn reproduce_table_one() {
    let o = rose(&["reproduce", "t1"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("T1: 180/180 cells match"));
    let o = rose(&["reproduce", "S9", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(v[0]["table"], "S9");
}

#[test]
fn reproduce_mismatch_exits_one() {
    // The divergent global-minimum row makes S11 fail cell-by-cell.
    let o = rose(&["reproduce", "S11"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("p_H=0.5 a_L=0.80 a_H=0.90"));
}

#[test]
fn simulate_is_seed_deterministic() {
    let mut args = vec!["simulate"];
    args.extend(T1_ROW);
    args.extend([
        "--omega", "0.5", "--seed", "11", "--reps", "4000", "--format", "json",
    ]);
    let a = stdout(&rose(&args));
    assert_eq!(a, stdout(&rose(&args)));
    let v: serde_json::Value = serde_json::from_str(a.trim()).unwrap();
    assert_eq!(v["request"]["seed"], 11);
    assert_eq!(v["result"]["scenarios"][0]["label"], "s_low");
}

#[test]
fn conduct_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().to_str().unwrap();
    let mut args = vec!["conduct", "--store", store, "create", "--trial-id", "cli-1"];
    args.extend(T1_ROW);
    assert_eq!(rose(&args).status.code(), Some(0));
    let decide = ["conduct", "--store", store, "decide", "--trial-id", "cli-1"];
    assert_eq!(rose(&decide).status.code(), Some(1));
    let rec = |arm: &str, r: &str| {
        rose(&[
            "conduct",
            "--store",
            store,
            "record",
            "--trial-id",
            "cli-1",
            "--stage",
            "stage1",
            "--arm",
            arm,
            "--enrolled",
            "11",
            "--responses",
            r,
        ])
    };
    assert_eq!(rec("low", "3").status.code(), Some(0));
    assert_eq!(rec("high", "4").status.code(), Some(0));
    let o = rose(&decide);
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    // 4/11 - 3/11 = 0.0909 > 0.052
    assert_eq!(v["result"]["decision"]["kind"], "select_high");
    assert_eq!(v["result"]["trial"]["status"], "closed");
    let o = rose(&[
        "conduct",
        "--store",
        store,
        "record",
        "--trial-id",
        "cli-1",
        "--stage",
        "stage1",
        "--arm",
        "low",
        "--enrolled",
        "1",
        "--responses",
        "0",
        "--expected-version",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("version"));
}

#[test]
fn sensitivity_csv_rows() {
    let mut args = vec!["sensitivity"];
    args.extend(T1_ROW);
    args.extend([
        "--seed",
        "3",
        "--reps",
        "500",
        "--deviation",
        "same-direction",
        "--offsets",
        "-1,1",
        "--format",
        "csv",
    ]);
    let o = rose(&args);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("offset,n_low,n_high,scenario,pcs"));
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("-1,10,10,s_low,"));
}
