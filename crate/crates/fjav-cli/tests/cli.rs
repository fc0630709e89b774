//! End-to-end runs of the `fjav` binary against small configs.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fjav"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const BASE: &str = r#"{
    "graph": {"kind": "k_regular", "degree": 3, "n": 12, "seed": 5},
    "misbehaving": {"ids": [7]},
    "prior": {"kind": "identity", "var": 1.0},
    "misbehavior": {"d": 5.0, "q": 0.5},
    "lambda_grid": 64,
    "trials": 200,
    "seed": 9
}"#;

#[test]
fn generate_writes_edge_list_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "c.json", BASE);
    let out = dir.path().join("graph.txt");
    let result = run(&["generate", "--config", &config, "--out", out.to_str().unwrap()]);
    assert!(result.status.success(), "{result:?}");
    let text = fs::read_to_string(&out).unwrap();
    let first = text.lines().next().unwrap();
    assert!(first.contains("\"k_regular\""));
    assert!(first.contains("\"misbehaving\":[7]"));
    // 3-regular on 12 nodes: 18 edges.
    assert_eq!(text.lines().count(), 19);
}

#[test]
fn error_curve_emits_stable_header_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "c.json", BASE);
    let a = run(&["error-curve", "--config", &config]);
    assert!(a.status.success());
    let text = String::from_utf8(a.stdout).unwrap();
    assert!(text.starts_with("lambda,e_v,e_n,e_total,e_deception,e_consensus,lambda_star\n"));
    assert_eq!(text.lines().count(), 65);
    let b = run(&["error-curve", "--config", &config]);
    assert_eq!(text, String::from_utf8(b.stdout).unwrap());
}

#[test]
fn error_curve_d_sweep_adds_axis_column() {
    let dir = tempfile::tempdir().unwrap();
    let with_sweep = BASE.replace(
        "\"lambda_grid\": 64,",
        "\"lambda_grid\": 64, \"sweep\": {\"axis\": \"d\", \"values\": [0, 10]},",
    );
    let config = write_config(dir.path(), "c.json", &with_sweep);
    let out = run(&["error-curve", "--config", &config]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("d,lambda,"));
    assert_eq!(text.lines().count(), 1 + 2 * 64);
}

#[test]
fn compare_uses_identical_worlds_and_auto_lambda() {
    let dir = tempfile::tempdir().unwrap();
    let body = BASE.replace(
        "\"lambda_grid\": 64,",
        "\"lambda_grid\": 64, \"horizon\": 30, \"protocols\": [{\"kind\": \"consensus\"}, {\"kind\": \"fj\", \"lambda\": \"auto\"}, {\"kind\": \"wmsr\", \"f\": 1}, {\"kind\": \"saba\"}],",
    )
    .replace("\"trials\": 200", "\"trials\": 40");
    let config = write_config(dir.path(), "c.json", &body);
    let out = run(&["compare", "--config", &config]);
    assert!(out.status.success(), "{out:?}");
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("k,protocol,cost\n"));
    for name in ["consensus", "fj", "wmsr", "saba"] {
        assert!(text.contains(&format!(",{name},")), "missing {name}");
    }
    assert_eq!(text.lines().count(), 1 + 4 * 31);
}

#[test]
fn mc_validate_passes_on_consistent_instance() {
    let dir = tempfile::tempdir().unwrap();
    let body = BASE
        .replace("\"trials\": 200", "\"trials\": 2000")
        .replace(
            "\"lambda_grid\": 64,",
            "\"lambda_grid\": 64, \"lambdas\": [0.3, 1.0], \"horizon\": 150,",
        );
    let config = write_config(dir.path(), "c.json", &body);
    let out = run(&["mc-validate", "--config", &config]);
    assert!(out.status.success(), "{out:?}");
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("lambda,analytic,mc_mean,mc_std_error,z_score,verdict\n"));
    assert!(!text.contains("FAIL"));
}

#[test]
fn sweep_gramian_prune_commands_run() {
    let dir = tempfile::tempdir().unwrap();
    let body = BASE.replace(
        "\"lambda_grid\": 64,",
        r#""lambda_grid": 64,
        "lambdas": [0.1, 0.4, 0.8],
        "study": {"kind": "consensus_error", "lambda": 0.1, "d": 5.0, "family": "regular", "densities": [3, 4], "seeds": 3, "max_removals": 2},"#,
    );
    let config = write_config(dir.path(), "c.json", &body);

    let sweep = run(&["sweep", "--config", &config]);
    assert!(sweep.status.success(), "{sweep:?}");
    let text = String::from_utf8(sweep.stdout).unwrap();
    assert!(text.starts_with("density_or_step,objective_kind,mean,stderr\n"));
    assert_eq!(text.lines().count(), 3);

    let gramian = run(&["gramian", "--config", &config]);
    assert!(gramian.status.success(), "{gramian:?}");
    let text = String::from_utf8(gramian.stdout).unwrap();
    assert!(text.starts_with("lambda,K,trace\n"));
    assert_eq!(text.lines().count(), 4);

    let prune = run(&["prune", "--config", &config]);
    assert!(prune.status.success(), "{prune:?}");
    let text = String::from_utf8(prune.stdout).unwrap();
    assert!(text.starts_with("step,edge_u,edge_v,value\n"));
    assert!(text.contains("matching_baseline,,,"));
}

#[test]
fn config_errors_exit_with_code_1() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "bad.json", "{\"nope\": true}");
    let out = run(&["error-curve", "--config", &config]);
    assert_eq!(out.status.code(), Some(1));

    let missing = run(&["error-curve", "--config", "/nonexistent/c.json"]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn seed_override_changes_random_selection() {
    let dir = tempfile::tempdir().unwrap();
    let body = BASE.replace("{\"ids\": [7]}", "{\"random\": 2}");
    let config = write_config(dir.path(), "c.json", &body);
    let a = run(&["generate", "--config", &config]);
    let b = run(&["generate", "--config", &config, "--seed", "1234"]);
    assert!(a.status.success() && b.status.success());
    assert_ne!(a.stdout, b.stdout);
}
