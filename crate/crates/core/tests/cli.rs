use std::path::PathBuf;
use std::process::{Command, Output};

fn mwlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mwlab")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("mwlab-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn fluid_case_one_csv() {
    let o = mwlab(&["fluid", "three-queue", "--lambda3", "0.75", "--init", "1,0,0"]);
    assert_eq!(o.status.code(), Some(0));
    let csv = stdout(&o);
    assert!(csv.starts_with("t,q_1,q_2,q_3,drift_1,drift_2,drift_3,is_jump\n"));
    let rows: Vec<Vec<f64>> =
        csv.lines().skip(1).map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    let at = |t: f64| rows.iter().find(|r| (r[0] - t).abs() < 1e-9).expect("breakpoint present");
    assert!(at(1.6)[1..4].iter().all(|q| (q - 0.2).abs() < 1e-6));
    assert!(at(4.0)[1..4].iter().all(|q| q.abs() < 1e-6));
}

#[test]
fn fluid_zero_state_rows() {
    let o = mwlab(&["fluid", "three-queue", "--init", "0,0,0", "--every", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let csv = stdout(&o);
    assert_eq!(csv.lines().count(), 12);
    for line in csv.lines().skip(1) {
        assert!(line.split(',').skip(1).all(|x| x == "0"), "{line}");
    }
}

#[test]
fn four_queue_breakpoints() {
    let o = mwlab(&["fluid", "four-queue-timing", "--every", "1"]);
    let csv = stdout(&o);
    let row = |t: &str| csv.lines().find(|l| l.starts_with(&format!("{t},"))).unwrap().to_string();
    assert_eq!(row("0"), "0,27,0,0,0");
    assert_eq!(row("3"), "3,6,6,0,0");
    assert_eq!(row("5"), "5,0,2,2,0");
    assert_eq!(row("9"), "9,0,0,0,0");
}

#[test]
fn fluid_error_exit_code() {
    let o = mwlab(&["fluid", "three-queue", "--horizon", "-1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = mwlab(&["fluid", "three-queue", "--gamma", "0.5,0,inf"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("gamma"));
}

#[test]
fn rjf_check_exit_codes_and_witness_file() {
    let path = scratch("witness.json");
    let o = mwlab(&[
        "rjf-check", "three-queue", "--gamma", "0.4,0.4,inf", "--lambda", "0.5,0.5,0.25", "--queue", "3",
        "--witness-out", path.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("status=Violated"));
    let w: mwlab::jf::Witness = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let net = mwlab::scenario::three_queue_network();
    assert_eq!(w.replay(&net).unwrap(), w.value);

    let o = mwlab(&["rjf-check", "three-queue", "--gamma", "0.8,0.8,inf", "--lambda", "0.5,0.5,0.25"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("status=NoViolationFound"));

    let o = mwlab(&["rjf-check", "three-queue", "--gamma", "0.8,0.8,inf", "--lambda", "0.5,0.5,0.75"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn simulate_is_reproducible() {
    let args = ["simulate", "three-queue", "--case", "2", "--seed", "7", "--max-horizon", "4096", "--replications", "16"];
    let a = mwlab(&args);
    let b = mwlab(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    assert!(text.starts_with("# mwlab simulate seed=7\n# scenario={"));
    assert!(text.contains("plan={\"stationary\""));
    let c = mwlab(&["--threads", "2", "simulate", "three-queue", "--case", "2", "--seed", "7", "--max-horizon", "4096", "--replications", "16"]);
    assert_eq!(a.stdout, c.stdout);
}

#[test]
fn forced_witness_passes() {
    let o = mwlab(&["witness", "three-queue", "--case", "3", "--forced", "--T", "10000"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("pass=true"));
}

#[test]
fn witness_without_violation_is_negative() {
    let o = mwlab(&["witness", "three-queue", "--case", "2", "--forced"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn scenario_file_round_trip() {
    let path = scratch("scenario.json");
    std::fs::write(
        &path,
        r#"{"network": {"ell": 3, "service_vectors": [[1,1,0],[1,0,1],[0,1,1]]},
            "lambda_star": [0.5, 0.5, 0.75], "gamma": [0.6, 0.6, "inf"], "queue": 3, "init": [1, 0, 0]}"#,
    )
    .unwrap();
    let from_file = mwlab(&["fluid", path.to_str().unwrap()]);
    let builtin = mwlab(&["fluid", "three-queue", "--case", "1", "--init", "1,0,0"]);
    assert_eq!(from_file.status.code(), Some(0));
    assert_eq!(from_file.stdout, builtin.stdout);
}

#[test]
fn lyapunov_control_passes() {
    let o = mwlab(&["lyapunov", "three-queue", "--case", "2", "--heavy", "1", "--max-jumps", "3", "--samples", "2000"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("overall=PASS"));
}
