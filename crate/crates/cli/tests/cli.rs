use std::process::Command;

fn crowdfl(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_crowdfl")).args(args).output().expect("binary runs")
}

fn stdout(args: &[&str]) -> String {
    let out = crowdfl(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn field<'a>(csv: &'a str, name: &str) -> &'a str {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    row[header.iter().position(|h| *h == name).unwrap()]
}

#[test]
fn best_response_reports_interior_optimum() {
    let csv = stdout(&["best-response", "--nu", "0.5", "--T", "1", "--gamma", "1", "--r", "3", "--theta-th", "0.2"]);
    let theta: f64 = field(&csv, "theta_star").parse().unwrap();
    assert!((theta - 0.1235).abs() < 1e-4);
    assert_eq!(field(&csv, "participates"), "1");
}

#[test]
fn zero_reward_gives_no_effort() {
    let csv = stdout(&["best-response", "--nu", "0.5", "--r", "0"]);
    assert_eq!(field(&csv, "theta_star"), "1");
    assert_eq!(field(&csv, "participates"), "0");
}

#[test]
fn malformed_flag_is_usage_error() {
    assert_eq!(crowdfl(&["best-response", "--nu", "abc", "--r", "1"]).status.code(), Some(2));
    assert_eq!(crowdfl(&["best-response", "--bogus"]).status.code(), Some(2));
    assert_eq!(crowdfl(&["best-response", "--nu", "1.5", "--r", "1"]).status.code(), Some(2));
}

#[test]
fn json_output() {
    let out = stdout(&["best-response", "--nu", "0.5", "--r", "3", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v[0]["participates"], serde_json::json!(true));
}

#[test]
fn reproduce_is_deterministic_and_writes_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    for _ in 0..2 {
        stdout(&["reproduce", "fig5", "--seed", "7", "--out", d]);
    }
    let csv = std::fs::read_to_string(dir.path().join("fig5.csv")).unwrap();
    assert!(csv.starts_with("theta_th,r_baseline,r_alg2,r_opt,u_baseline,u_alg2,u_opt\n"));
    assert_eq!(csv.lines().count(), 6);
    assert_eq!(csv, stdout(&["reproduce", "fig5", "--seed", "7"]));
    let a = stdout(&["reproduce", "table-a", "--ab", "0.3,-1", "--gamma-dist", "1,5", "--seed", "3"]);
    assert_eq!(a, stdout(&["reproduce", "table-a", "--ab", "0.3,-1", "--gamma-dist", "1,5", "--seed", "3"]));
    assert!(a.starts_with("theta_th,r_baseline,r_alg2_a0.3_b-1\n"));
}

#[test]
fn admission_curve() {
    let csv = stdout(&["admission", "--a", "0.35", "--b", "-1", "--delta", "10", "--K", "0..50"]);
    assert_eq!(csv.lines().count(), 52);
    let thetas: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert!(thetas.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn equilibrium_and_fedsim() {
    let csv = stdout(&["equilibrium", "opt", "--seed", "2"]);
    assert_eq!(csv.lines().count(), 5);
    let trace = stdout(&["fedsim", "--samples", "40", "--dim", "4", "--epsilon", "1e-4", "--seed", "1"]);
    assert!(trace.starts_with("round,gap,max_theta,wall_ms\n"));
    assert_eq!(trace, stdout(&["fedsim", "--samples", "40", "--dim", "4", "--epsilon", "1e-4", "--seed", "1"]));
}

#[test]
fn scenario_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.toml");
    std::fs::write(
        &path,
        "[scenario]\nname = \"demo\"\nseed = 1\n\n[server]\na = 0.3\nb = 0.0\nbeta = 10.0\ndelta = 10.0\ntheta_th = 0.3\n\n[clients]\ncount = 4\n",
    )
    .unwrap();
    let csv = stdout(&["run", path.to_str().unwrap()]);
    assert!(csv.starts_with("r_baseline,u_baseline,n_baseline,r_alg2"));
    std::fs::write(&path, "[scenario]\nname = \"x\"\nmystery = 3\n").unwrap();
    let out = crowdfl(&["run", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line"));
}
