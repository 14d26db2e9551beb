use std::path::PathBuf;
use std::process::{Command, Output};

use multiphase::report;
use multiphase::scenarios::SCENARIO_IDS;

fn mpl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mpl")).args(args).env_remove("MPL_SEED").output().expect("spawn mpl")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn data(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name).display().to_string()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("mpl-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn list_names_every_scenario() {
    let o = mpl(&["list"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    for id in SCENARIO_IDS {
        assert!(text.contains(id), "{id}");
    }
    assert!(text.contains("iid_normal"));
    assert!(text.contains("residual_mean"));
}

#[test]
fn passing_scenario_exits_zero_with_valid_envelope() {
    let o = mpl(&["run", "intermediate_loss_design", "--seed", "5"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    report::validate(&v).unwrap();
    assert_eq!(v["command"], "run");
    assert_eq!(v["seed"], 5);
    assert_eq!(v["wall_time_ms"], serde_json::Value::Null);
    assert_eq!(v["reports"][0]["passed"], true);
}

#[test]
fn failing_claim_exits_one() {
    let o = mpl(&["run", "sign_sharing_counterexample"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("FAIL sign_sharing_counterexample"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(code(&mpl(&["run", "no_such_scenario"])), 2);
    assert_eq!(code(&mpl(&["verify", "basis_construction"])), 2);
    assert_eq!(code(&mpl(&["run", "basis_construction", "--format", "xml"])), 2);
    assert_eq!(code(&mpl(&[])), 2);
}

#[test]
fn io_errors_exit_three() {
    let missing = scratch("absent/dir/out.json").display().to_string();
    assert_eq!(code(&mpl(&["run", "basis_construction", "--out", &missing])), 3);
    assert_eq!(code(&mpl(&["experiment", "/definitely/not/here.json"])), 3);
}

#[test]
fn experiment_writes_json_and_csv() {
    let out = scratch("risk.json");
    let o = mpl(&["experiment", &data("half_mean.json"), "--out", &out.display().to_string()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    report::validate(&v).unwrap();
    assert_eq!(v["seed"], 7);
    let risk: f64 = v["reports"][0]["estimators"][1]["risk"]["value"].as_str().unwrap().parse().unwrap();
    assert!((risk - 0.02).abs() < 0.004, "{risk}");

    let o = mpl(&["experiment", &data("half_mean.json"), "--format", "csv", "--seed", "8", "--reps", "50"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "estimator,risk,std_error,failures");
    assert_eq!(lines.len(), 3);
}

#[test]
fn bad_experiment_config_is_a_usage_error() {
    let path = scratch("bad.json");
    std::fs::write(&path, r#"{"model": "iid_normal"}"#).unwrap();
    assert_eq!(code(&mpl(&["experiment", &path.display().to_string()])), 2);
}

#[test]
fn seed_falls_back_to_environment() {
    let flag = mpl(&["run", "weighted_mean_monotonicity", "--seed", "77", "--reps", "200"]);
    let env = Command::new(env!("CARGO_BIN_EXE_mpl"))
        .args(["run", "weighted_mean_monotonicity", "--reps", "200"])
        .env("MPL_SEED", "77")
        .output()
        .unwrap();
    assert_eq!(flag.stdout, env.stdout);
    let other = mpl(&["run", "weighted_mean_monotonicity", "--seed", "78", "--reps", "200"]);
    assert_ne!(flag.stdout, other.stdout);
}

#[test]
fn verify_is_byte_identical_across_worker_counts() {
    let one = mpl(&["verify", "--workers", "1"]);
    let four = mpl(&["verify", "--workers", "4"]);
    assert_eq!(code(&one), code(&four));
    assert_eq!(one.stdout, four.stdout);
    let csv = mpl(&["verify", "--format", "csv"]);
    let text = String::from_utf8(csv.stdout).unwrap();
    assert!(text.starts_with("scenario,claim,observed,oracle,tol,verdict\n"));
    assert!(text.lines().skip(1).all(|l| l.ends_with(",pass") || l.ends_with(",fail")));
}

#[test]
fn timings_fill_wall_time() {
    let o = mpl(&["run", "intermediate_loss_design", "--timings"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["wall_time_ms"].is_u64());
    assert!(v["reports"][0]["runtime_ms"].is_u64());
}
