use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(cmd: &str, config: &str, out: &Path, extra: &[&str]) -> Output {
    let cfg = out.with_extension("json");
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_weinstein-lab"))
        .arg(cmd)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(out)
        .args(extra)
        .env_remove("WEINSTEIN_LAB_OUT")
        .output()
        .unwrap()
}

fn summary(out: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap()
}

fn failing(s: &Value) -> Vec<String> {
    s["failing"].as_array().unwrap().iter().map(|v| v.as_str().unwrap().to_string()).collect()
}

#[test]
fn product_scene_crit_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("crit");
    let o = run("crit", r#"{"scene": "cpn_x_cpn", "n": 2, "command": "crit", "eps": 0.05}"#, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&out);
    let row = s["checks"].as_array().unwrap().iter().find(|r| r["name"] == "crit.cpn_x_cpn_n2.indices").unwrap();
    assert_eq!(row["pass"], true);
    assert!(row["paper_anchor"].as_str().is_some_and(|a| !a.is_empty()));
    let pts: Value = serde_json::from_str(&std::fs::read_to_string(out.join("crit_points.json")).unwrap()).unwrap();
    assert_eq!(pts["records"].as_array().unwrap().len(), 3);
    let csv = std::fs::read_to_string(out.join("crit_points.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    let resolved = std::fs::read_to_string(out.join("resolved_config.json")).unwrap();
    assert!(resolved.contains("\"tolerances\"") && resolved.contains("\"kappa\""));
}

#[test]
fn local_thimble_writes_mesh() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("th");
    let o = run("thimble", r#"{"scene": "local_nc", "eps": 0.04}"#, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let mesh = std::fs::read_to_string(out.join("thimble_mesh.csv")).unwrap();
    assert!(mesh.starts_with("base,t,line,center,angle,chart,x0"));
    assert!(mesh.lines().count() > 100);
    assert!(failing(&summary(&out)).is_empty());
}

#[test]
fn empty_ladder_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("ladder", r#"{"scene": "cpn_o2h", "eps_ladder": []}"#, &dir.path().join("l"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("eps_ladder"));
}

#[test]
fn unknown_keys_and_scenes_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    for (i, cfg) in [r#"{"sceen": "local_nc"}"#, r#"{"scene": "torus"}"#, r#"{"schema_version": 9}"#].iter().enumerate() {
        let o = run("crit", cfg, &dir.path().join(format!("u{i}")), &[]);
        assert_eq!(o.status.code(), Some(2), "{cfg}");
    }
    let o = run("glue", r#"{"scene": "cpn_o2h"}"#, &dir.path().join("g"), &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn broken_tolerance_fails_only_that_check() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("base");
    let broken = dir.path().join("broken");
    run("checkall", "{}", &base, &[]);
    let o = run("checkall", r#"{"tolerances": {"liouville": 1e-30}}"#, &broken, &[]);
    assert_eq!(o.status.code(), Some(1));
    let before = failing(&summary(&base));
    let after = failing(&summary(&broken));
    let extra: Vec<&String> = after.iter().filter(|n| !before.contains(n)).collect();
    assert!(!extra.is_empty());
    assert!(extra.iter().all(|n| n.ends_with(".liouville") && n.starts_with("kernel.")), "{extra:?}");
    assert!(before.iter().all(|n| after.contains(n)));
}

#[test]
fn reports_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"scene": "cpn_o2h", "n": 2, "eps": 0.05}"#;
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run("crit", cfg, &a, &["--seed", "3"]);
    run("crit", cfg, &b, &["--seed", "3"]);
    for f in ["summary.json", "resolved_config.json", "crit_points.json", "crit_points.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let r: Value = serde_json::from_str(&std::fs::read_to_string(a.join("resolved_config.json")).unwrap()).unwrap();
    assert_eq!(r["seed"], 3);
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"scene": "local_nc", "output_dir": "/nonexistent/never"}"#).unwrap();
    let env_out = dir.path().join("env");
    let o = Command::new(env!("CARGO_BIN_EXE_weinstein-lab"))
        .args(["crit", "--config"])
        .arg(&cfg)
        .env("WEINSTEIN_LAB_OUT", &env_out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(env_out.join("summary.json").exists());
}
