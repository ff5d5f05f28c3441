use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

fn stirling(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stirling"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = stirling(out, args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn column(csv: &str, name: &str) -> Vec<String> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let i = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(i).unwrap().to_string()).collect()
}

#[test]
fn equilibria_at_the_symmetric_point() {
    let d = tempdir().unwrap();
    ok(d.path(), &["equilibria", "--alpha", "2.2", "--th", "330"]);
    let csv = read(d.path(), "equilibria.csv");
    assert_eq!(
        csv.lines().next().unwrap(),
        "alpha,t_h,q_star,tau_prime,kind,eig_re_1,eig_im_1,eig_re_2,eig_im_2"
    );
    let kinds = column(&csv, "kind");
    assert!(!kinds.is_empty() && kinds.len() % 2 == 0);
    assert_eq!(kinds.iter().filter(|k| *k == "saddle").count(), kinds.len() / 2);
}

#[test]
fn simulate_writes_a_trajectory() {
    let d = tempdir().unwrap();
    ok(d.path(), &["simulate", "--alpha", "2.2", "--th", "360", "--q0", "0", "--w0", "10", "--tmax", "5"]);
    let csv = read(d.path(), "trajectory.csv");
    assert_eq!(csv.lines().next().unwrap(), "t,q,qdot");
    let t: Vec<f64> = column(&csv, "t").iter().map(|x| x.parse().unwrap()).collect();
    assert_eq!(t[0], 0.0);
    assert!((t.last().unwrap() - 5.0).abs() < 1e-12);
    assert!(t.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn cycle_present_and_absent() {
    let d = tempdir().unwrap();
    let text = ok(d.path(), &["cycle", "--alpha", "2.2", "--th", "360"]);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["has_cycle"], true);
    let period = v["period"].as_f64().unwrap();
    assert!((period - 0.765).abs() < 5e-3, "{period}");
    assert!(v["avg_power"].as_f64().unwrap() > 0.0);
    let csv = read(d.path(), "cycle.csv");
    assert_eq!(csv.lines().next().unwrap(), "tau,q,qdot,p,v_total");
    assert_eq!(csv.lines().count(), 1 + 512);

    // well below the homoclinic temperature: no cycle, stale loop removed, exit 0
    let text = ok(d.path(), &["cycle", "--alpha", "2.2", "--th", "310"]);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["has_cycle"], false);
    assert!(v["period"].is_null() && v["avg_power"].is_null());
    assert!(!d.path().join("cycle.csv").exists());
}

#[test]
fn classify_reports_census_and_cycle() {
    let d = tempdir().unwrap();
    ok(d.path(), &["classify", "--alpha", "1.2", "--th", "420"]);
    let v: serde_json::Value = serde_json::from_str(&read(d.path(), "classify.json")).unwrap();
    assert_eq!(v["has_cycle"], true);
    assert_eq!(v["cycle_direction"], -1);
    assert!(v["u_2pi"].as_f64().unwrap() > 0.0);
    let n = v["equilibrium_count"].as_u64().unwrap();
    assert!(n % 2 == 0);
}

#[test]
fn config_round_trips_through_dump() {
    let d = tempdir().unwrap();
    let cfg = d.path().join("in.json");
    std::fs::write(&cfg, r#"{"engine": {"t_h": 412.5}, "tol_rel": 1e-9}"#).unwrap();
    let first = ok(d.path(), &["--config", cfg.to_str().unwrap(), "dump-config"]);
    let dumped = d.path().join("config.json");
    let again = d.path().join("again");
    let second = ok(&again, &["--config", dumped.to_str().unwrap(), "dump-config"]);
    assert_eq!(first, second);
    let v: serde_json::Value = serde_json::from_str(&first).unwrap();
    assert_eq!(v["engine"]["t_h"], 412.5);
    assert_eq!(v["tol_rel"], 1e-9);
}

#[test]
fn bad_inputs_exit_nonzero() {
    let d = tempdir().unwrap();
    assert!(!stirling(d.path(), &["equilibria", "--th", "-5"]).status.success());
    assert!(!stirling(d.path(), &["--tol-rel", "0", "equilibria"]).status.success());
    let cfg = d.path().join("bad.json");
    std::fs::write(&cfg, r#"{"enigne": {}}"#).unwrap();
    assert!(!stirling(d.path(), &["--config", cfg.to_str().unwrap(), "dump-config"]).status.success());
    assert!(!stirling(d.path(), &["continue", "--kind", "sideways"]).status.success());
}

#[test]
fn continuation_fails_when_too_few_points_succeed() {
    // heteroclinic orbits only exist near α = π: most of this grid fails
    let d = tempdir().unwrap();
    let cfg = d.path().join("c.json");
    std::fs::write(&cfg, r#"{"alpha_grid": [0.5, 1.0, 2.9, 3.0]}"#).unwrap();
    let o = stirling(d.path(), &["--config", cfg.to_str().unwrap(), "continue", "--kind", "heteroclinic"]);
    let curve = read(d.path(), "heteroclinic_curve.csv");
    assert_eq!(curve.lines().next().unwrap(), "kind,alpha,t_h");
    let failures = read(d.path(), "heteroclinic_failures.csv");
    assert_eq!(failures.lines().next().unwrap(), "kind,alpha,reason");
    let n_fail = failures.lines().count() - 1;
    // every point either lands on the curve (twice, mirrored) or is reported
    assert_eq!((curve.lines().count() - 1) / 2 + n_fail, 4);
    assert!(curve.lines().skip(1).all(|l| l.starts_with("heteroclinic,")));
    // α = 1.0 is a numerical failure, not an omission, so the run is below 90%
    assert!(!o.status.success());
}

#[test]
fn power_map_is_independent_of_worker_count() {
    let run = |workers: &str| {
        let d = tempdir().unwrap();
        ok(
            d.path(),
            &[
                "--workers", workers, "power-map", "--alpha-min", "1.0", "--alpha-max", "2.2", "--alpha-step", "0.6",
                "--th-min", "340", "--th-max", "420", "--th-step", "40",
            ],
        );
        (read(d.path(), "power_map.csv"), read(d.path(), "ridge.csv"), read(d.path(), "power_failures.csv"))
    };
    let a = run("1");
    let b = run("4");
    assert_eq!(a, b);
    assert_eq!(a.0.lines().next().unwrap(), "alpha,t_h,has_cycle,period,work,avg_power");
    assert_eq!(a.0.lines().count(), 1 + 9);
    assert_eq!(a.1.lines().next().unwrap(), "t_h,alpha_star,power_star");
    assert_eq!(a.2.lines().next().unwrap(), "alpha,t_h,reason");
}

#[test]
fn local_diagram_and_pitchfork_outputs() {
    let d = tempdir().unwrap();
    ok(d.path(), &["local-diagram", "--th", "376.2", "--n-alpha", "36"]);
    let csv = read(d.path(), "local_diagram.csv");
    let alphas: std::collections::BTreeSet<String> = column(&csv, "alpha").into_iter().collect();
    assert_eq!(alphas.len(), 36);

    let cfg = d.path().join("c.json");
    std::fs::write(&cfg, r#"{"alpha_grid": [1.5, 1.7, 2.5, 2.7]}"#).unwrap();
    ok(d.path(), &["--config", cfg.to_str().unwrap(), "continue", "--kind", "pitchfork", "--th-step", "10"]);
    let pf = read(d.path(), "pitchfork.csv");
    assert_eq!(pf.lines().next().unwrap(), "alpha,t_h,q_star");
    let curve = read(d.path(), "pitchfork_curve.csv");
    assert!(curve.lines().count() > 1);
}
