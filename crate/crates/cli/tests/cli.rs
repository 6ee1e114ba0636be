use std::fs;
use std::process::{Command, Output};

fn cptree(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cptree")).args(args).output().expect("run cptree")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

const HEADER: &str = "experiment_id,kind,graph,n,k,degrees,lambda,c,delta,eta,seed,replicate,outcome,tau,censored,hits,frozen_total,wall_ms";

#[test]
fn survival_csv_is_reproducible_across_threads() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let common = ["survival", "--graph", "star:5", "--lambda", "0.7", "--horizon", "40", "--replicates", "50", "--seed", "3"];
    let o1 = cptree(&[&common[..], &["--threads", "1", "--output", a.to_str().unwrap()]].concat());
    let o2 = cptree(&[&common[..], &["--threads", "2", "--output", b.to_str().unwrap()]].concat());
    assert!(o1.status.success() && o2.status.success());
    let (ta, tb) = (fs::read_to_string(&a).unwrap(), fs::read_to_string(&b).unwrap());
    assert_eq!(ta, tb);
    assert_eq!(ta.lines().next().unwrap(), HEADER);
    assert_eq!(ta.lines().count(), 51);
    let summary: serde_json::Value = serde_json::from_str(&stdout(&o1)).unwrap();
    assert_eq!(summary["replicates"], 50);
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("spec.json");
    fs::write(&cfg, r#"{"id":"cfg","kind":"chain","graph":"star:1000","c":1.0,"replicates":5,"seed":9}"#).unwrap();
    let o = cptree(&["chain", "--config", cfg.to_str().unwrap(), "--replicates", "7"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 8);
    assert!(text.lines().nth(1).unwrap().starts_with("cfg,chain,star:1000,1000,0,,"));

    let o = cptree(&["relay", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn exit_codes() {
    // spec error: K above L
    let o = cptree(&["ignite", "--graph", "star:100", "--lambda", "0.5", "--K", "30", "--L", "20"]);
    assert_eq!(o.status.code(), Some(2));
    // both λ and c
    let o = cptree(&["survival", "--graph", "star:3", "--lambda", "0.5", "--c", "1"]);
    assert_eq!(o.status.code(), Some(2));
    // resource cap: graph too large
    let o = cptree(&["survival", "--graph", "star:99999999", "--lambda", "0"]);
    assert_eq!(o.status.code(), Some(3));
    // oracle state-space cap
    let o = cptree(&["oracle", "graph", "--graph", "star:30", "--lambda", "0.5"]);
    assert_eq!(o.status.code(), Some(3));
    let o = cptree(&["bounds", "no_such_bound"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn audit_passes_and_reports() {
    let o = cptree(&["audit", "--graph", "pinned:2", "--lambda", "1", "--horizon", "2", "--replicates", "300"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["passed"], true);
    assert_eq!(v["exhaustive"], true);
}

#[test]
fn oracle_star_single_leaf() {
    // n = 1, λ = 1: u = 1/2 + v and v = 1/2 + u/2, so u = 2 and v = 3/2
    let o = cptree(&["oracle", "star", "--n", "1", "--lambda", "1", "--K", "1", "--L", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let t = v["extinction_time_all_occupied"].as_f64().unwrap();
    assert!((t - 2.0).abs() < 1e-12, "{t}");
    assert!((v["extinction_time_from_center"].as_f64().unwrap() - 1.5).abs() < 1e-12);
}

#[test]
fn bounds_and_topology() {
    let o = cptree(&["bounds", "--list"]);
    assert!(stdout(&o).lines().any(|l| l == "survival_bracket"));
    let o = cptree(&["bounds", "push_probability", "lambda=0.5", "k=1", "--csv"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().next().unwrap(), "name,inputs,value,outputs,valid");
    let o = cptree(&["topo", "periodic:2:1:4"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["level_sizes"], serde_json::json!([1, 2, 2, 4, 4]));
}

#[test]
fn report_writes_tables_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let rec = dir.path().join("r.csv");
    let o = cptree(&[
        "survival", "--graph", "star:4", "--lambda", "0.5", "--horizon", "100", "--replicates", "40",
        "--output", rec.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let est = dir.path().join("l2.json");
    let o = cptree(&[
        "lambda2", "--n", "10", "--depth", "2", "--horizon", "20", "--replicates", "40", "--steps", "3",
        "--output", est.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("report");
    let o = cptree(&[
        "report", "--records", rec.to_str().unwrap(), "--lambda2", est.to_str().unwrap(), "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["summary.csv", "lambda2.csv", "report.json", "survival.svg", "lambda2.svg"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let json = fs::read_to_string(out.join("report.json")).unwrap();
    assert!(json.contains("engineering choices"));
}

#[test]
fn sim_runs() {
    let o = cptree(&["sim", "--graph", "star:10", "--lambda", "0.5", "--horizon", "5", "--seed", "2"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["probes"].as_array().unwrap().len(), 10);
}
