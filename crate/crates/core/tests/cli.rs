use std::process::{Command, Output};

fn cplab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cplab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn level_outside_unit_interval_is_a_config_error() {
    let o = cplab(&["threshold", "--eps", "1.5"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("epsilon"));
}

#[test]
fn usage_errors_exit_2_and_help_exits_0() {
    assert_eq!(cplab(&["threshold", "--bogus"]).status.code(), Some(2));
    assert_eq!(cplab(&["power", "--test", "nope"]).status.code(), Some(2));
    assert_eq!(cplab(&[]).status.code(), Some(2));
    assert_eq!(cplab(&["--help"]).status.code(), Some(0));
}

#[test]
fn bad_config_reports_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "psi = 1.5\n\nwidth = 3\n").unwrap();
    let o = cplab(&["--config", cfg.to_str().unwrap(), "risk"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    std::fs::write(&cfg, "psi = 0.1\njump_scale = -1\njump_exponent = 0\n").unwrap();
    let o = cplab(&["--config", cfg.to_str().unwrap(), "simulate", "--n", "5"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn too_few_paths_are_rejected() {
    let o = cplab(&["threshold", "--paths", "1000"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_then_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = cplab(&["--seed", "3", "--out", out, "simulate", "--n", "200", "--theta", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let data = dir.path().join("trajectories.csv");
    let text = std::fs::read_to_string(&data).unwrap();
    assert!(text.starts_with("# tool = cplab"));
    assert!(text.contains("# seed = 3\n"));
    assert!(text.contains("# config_hash = "));

    let o = cplab(&["--out", out, "estimate", "--data", data.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let json = std::fs::read_to_string(dir.path().join("estimate.json")).unwrap();
    assert!(json.contains("\"theta_hat\"") && json.contains("\"theta_tilde\""));

    // Without --out the result goes to standard output.
    let o = cplab(&["estimate", "--data", data.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8(o.stdout).unwrap(), json);
}

#[test]
fn estimate_rejects_a_mismatched_horizon() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    std::fs::write(&data, "# tau = 5\n# n = 1\ntrajectory_index,event_time\n0,1.5\n").unwrap();
    let o = cplab(&["estimate", "--data", data.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("tau"));
}

#[test]
fn malformed_trajectories_are_parse_errors() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    std::fs::write(&data, "# tau = 4\n# n = 1\ntrajectory_index,event_time\n0,abc\n").unwrap();
    let o = cplab(&["estimate", "--data", data.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn limit_power_csv_has_the_documented_columns() {
    let o = cplab(&["power", "--test", "glrt,wt", "--n", "inf", "--reps", "100"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let mut body = text.lines().filter(|l| !l.starts_with('#'));
    assert_eq!(body.next(), Some("test,n,u,power,se,reps"));
    let rows: Vec<&str> = body.collect();
    assert_eq!(rows.len(), 2 * 21);
    assert!(rows.iter().all(|r| r.split(',').nth(1) == Some("inf")));
}
