use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use smcvar_cli::experiment::{aggregate, read_rows};

fn smcvar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smcvar"))
        .args(args)
        .env_remove("SMCVAR_THREADS")
        .output()
        .expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn same_config_gives_byte_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for (path, reps) in [(&a, "1"), (&b, "1")] {
        let out = smcvar(&["run", "--model", "changepoint", "-T", "40", "-m", "300", "-R", reps, "--seed", "9", "--gb", "--csv", path_str(path)]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let csv = dir.path().join(format!("t{threads}.csv"));
        let out = smcvar(&[
            "run", "--model", "bearings", "-T", "8", "-m", "200", "-R", "6", "--split", "2", "--policy", "1",
            "--scheme", "residual", "--threads", threads, "--csv", path_str(&csv),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        outputs.push(fs::read_to_string(&csv).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert!(outputs[0].starts_with("rep,seed,m,T,scheme,policy_c,estimate,estimate2,"));
}

#[test]
fn aggregate_json_is_recomputable_from_the_csv() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, json) = (dir.path().join("r.csv"), dir.path().join("out/r.json"));
    let out = smcvar(&[
        "run", "--model", "oracle-discrete", "-T", "4", "-m", "500", "-R", "20", "--gb", "--split", "2",
        "--csv", path_str(&csv), "--json", path_str(&json),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rows = read_rows(fs::File::open(&csv).unwrap()).unwrap();
    assert_eq!(rows.len(), 20);
    let mut written: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(written["schema_version"], 1);
    assert_eq!(written["incomplete"], false);
    assert_eq!(written["settings"]["model"], "oracle-discrete");
    written.as_object_mut().unwrap().remove("settings");
    assert_eq!(written, serde_json::to_value(aggregate(&rows)).unwrap());
    let cover2 = written["components"][0]["cover2se"].as_f64().unwrap();
    assert!(cover2 >= 0.7, "2-se coverage {cover2}");
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("study.conf");
    fs::write(&config, "# small study\nmodel = changepoint\nT = 30\nm = 100\nreplications = 2\npolicy = 2\n").unwrap();
    let out = smcvar(&["run", "--config", path_str(&config), "-m", "150", "--set", "rho=0.05"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rows = read_rows(out.stdout.as_slice()).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.m == 150 && r.horizon == 30 && r.policy_c == 2.0 && r.truth[0].is_some()));
}

#[test]
fn invalid_configurations_exit_with_usage_status() {
    for args in [
        vec!["run", "--model", "changepoint", "-R", "0"],
        vec!["run", "--model", "changepoint", "--policy", "-3"],
        vec!["run", "--model", "oracle-discrete", "-T", "12"],
        vec!["run", "--model", "bogus"],
        vec!["run", "--set", "colour=blue"],
        vec!["run", "--model", "changepoint", "--csv", "/proc/no/such/dir/x.csv"],
    ] {
        let out = smcvar(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", stderr(&out));
        assert!(stderr(&out).starts_with("error:"));
        assert!(out.stdout.is_empty());
    }
}

#[test]
fn thread_environment_variable_is_read() {
    let out = Command::new(env!("CARGO_BIN_EXE_smcvar"))
        .args(["run", "--model", "changepoint", "-T", "5", "-m", "10"])
        .env("SMCVAR_THREADS", "lots")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("SMCVAR_THREADS"));
}

#[test]
fn unknown_suite_is_a_usage_error() {
    let out = smcvar(&["accept", "no-such-suite"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("identities"));
}

#[test]
fn identities_suite_passes() {
    let out = smcvar(&["accept", "identities"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().all(|l| l.contains("PASS")));
    let json = smcvar(&["accept", "micro-oracle", "--json"]);
    let reports: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    assert_eq!(reports[0]["suite"], "micro-oracle");
}

#[test]
fn generated_data_feeds_the_oracle_and_the_runner() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("cp.csv");
    let out = smcvar(&["gen-data", "changepoint", "-T", "60", "--seed", "3", "--out", path_str(&data)]);
    assert!(out.status.success(), "{}", stderr(&out));

    let oracle = smcvar(&["oracle", "changepoint", "--data", path_str(&data)]);
    assert!(oracle.status.success(), "{}", stderr(&oracle));
    let text = String::from_utf8(oracle.stdout).unwrap();
    let last = text.lines().nth(1).unwrap();
    assert!(last.starts_with("60,"));
    let exact: f64 = last[3..].parse().unwrap();

    let run = smcvar(&["run", "--model", "changepoint", "--data", path_str(&data), "-m", "100", "-R", "2"]);
    assert!(run.status.success(), "{}", stderr(&run));
    let rows = read_rows(run.stdout.as_slice()).unwrap();
    assert!(rows.iter().all(|r| r.truth == vec![Some(exact)] && r.horizon == 60));
}

#[test]
fn recorded_seed_replays_a_row() {
    let out = smcvar(&["run", "--model", "changepoint", "-T", "25", "-m", "80", "-R", "3", "--seed", "4"]);
    let rows = read_rows(out.stdout.as_slice()).unwrap();
    let seed = rows[2].seed.to_string();
    let replay = smcvar(&["run", "--model", "changepoint", "-T", "25", "-m", "80", "--replay", &seed]);
    let again = read_rows(replay.stdout.as_slice()).unwrap();
    assert_eq!(again[0].estimate, rows[2].estimate);
    assert_eq!(again[0].se_ancestral, rows[2].se_ancestral);
}

#[test]
fn discrete_oracle_reports_schedule() {
    let out = smcvar(&["oracle", "discrete", "-T", "3", "--threshold", "0"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let psi = smcvar::oracle::two_state_example(3).enumerate().unwrap().psi_t;
    assert_eq!(v["psi_t"].as_f64().unwrap(), psi);
    assert_eq!(v["threshold"]["tau_star"], serde_json::json!([1, 2]));
    assert_eq!(v["eta"].as_array().unwrap().len(), 3);
}

#[test]
fn generic_model_file_runs() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("hmm.json");
    fs::write(
        &file,
        r#"{"initial":[0.5,0.5],"transition":[[0.9,0.1],[0.2,0.8]],"emissions":[[0.3,0.6],[0.7,0.1],[0.5,0.5]],"state_values":[-1.0,1.0]}"#,
    )
    .unwrap();
    let out = smcvar(&["run", "--model", "generic-from-file", "--model-file", path_str(&file), "-m", "200", "-R", "2"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rows = read_rows(out.stdout.as_slice()).unwrap();
    assert_eq!(rows[0].horizon, 3);
    assert!(rows[0].truth[0].is_some());
}
