use std::path::Path;
use std::process::{Command, Output};

fn slhvb(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_slhvb"));
    cmd.args(args).env_remove("SLHVB_SEED");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const CONFIG: &str = r#"{
  "env": {"n": 200, "k": 8, "w": 2, "horizon": 30},
  "policy": {"kind": "hybrid"},
  "replications": 6,
  "base_seed": 17
}"#;

#[test]
fn simulate_emits_summary_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", CONFIG);
    let o = slhvb(&["simulate", "--config", &cfg], &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.starts_with("replication,mean_loss,ci,"));
    assert_eq!(out.lines().count(), 1 + 6 + 1);
}

#[test]
fn simulate_is_byte_identical_across_parallelism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", CONFIG);
    let a = slhvb(&["simulate", "--config", &cfg, "--parallelism", "1"], &[]);
    let b = slhvb(&["simulate", "--config", &cfg, "--parallelism", "8"], &[]);
    assert_eq!(a.stdout, b.stdout);
    let ra = dir.path().join("a.csv");
    let rb = dir.path().join("b.csv");
    slhvb(&["simulate", "--config", &cfg, "--rounds-out", ra.to_str().unwrap()], &[]);
    slhvb(&["simulate", "--config", &cfg, "--parallelism", "8", "--rounds-out", rb.to_str().unwrap()], &[]);
    let text = std::fs::read(&ra).unwrap();
    assert_eq!(text, std::fs::read(&rb).unwrap());
    assert!(String::from_utf8(text).unwrap().starts_with("replication,round,loss,external,internal,pulls_age_0,pulls_age_1,pulls_age_2\n"));
}

#[test]
fn seed_environment_variable_and_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", CONFIG);
    let base = slhvb(&["simulate", "--config", &cfg], &[]);
    let env = slhvb(&["simulate", "--config", &cfg], &[("SLHVB_SEED", "5")]);
    let flag = slhvb(&["simulate", "--config", &cfg, "--seed", "5"], &[]);
    assert_ne!(base.stdout, env.stdout);
    assert_eq!(env.stdout, flag.stdout);
    let bad = slhvb(&["simulate", "--config", &cfg], &[("SLHVB_SEED", "x")]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("SLHVB_SEED"));
}

#[test]
fn invalid_config_exits_one_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    for (text, field) in [
        (CONFIG.replace("\"n\": 200", "\"n\": 0"), "env.n"),
        (CONFIG.replace("\"replications\": 6", "\"replications\": 0"), "replications"),
        (CONFIG.replace("\"w\": 2", "\"w\": 0"), "env.w"),
    ] {
        let cfg = write(dir.path(), "bad.json", &text);
        let o = slhvb(&["simulate", "--config", &cfg], &[]);
        assert_eq!(o.status.code(), Some(1));
        let err = String::from_utf8_lossy(&o.stderr).to_string();
        assert!(err.contains(field), "{err}");
    }
}

#[test]
fn json_format() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", CONFIG);
    let o = slhvb(&["simulate", "--config", &cfg, "--format", "json"], &[]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["replications"], 6);
}

#[test]
fn grid_and_fit_prior() {
    let o = slhvb(&["grid", "--level", "2", "--k", "1", "--n", "10000"], &[]);
    assert_eq!(stdout(&o), "batch,fraction,size\n0,0.0100000000,100\n1,0.100000000,1000\n2,0.890000000,8900\n");
    let o = slhvb(&["fit-prior", "--mean", "0.5", "--var", "0.05"], &[]);
    assert_eq!(stdout(&o), "alpha,beta\n2.00000000,2.00000000\n");
    let o = slhvb(&["fit-prior", "--mean", "0.5", "--var", "0.3"], &[]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn analysis_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let cells = write(
        dir.path(),
        "cells.csv",
        "group,period,count,mean,se\ncontrol,pre,1,175.910,0.699\ntreatment,pre,1,175.548,0.659\ncontrol,post,1,137.059,0.6081\ntreatment,post,1,142.618,0.597\n",
    );
    let o = slhvb(&["ztest", "--config", &cells], &[]);
    let out = stdout(&o);
    assert!(out.starts_with("test,delta,se,z,p_one_sided\nz_test,5.92"), "{out}");

    let mut rows = String::from("t,i,y\n");
    for (t, i, y) in [(0, 0, 1.0), (0, 0, 1.4), (1, 0, 2.0), (1, 0, 2.2), (0, 1, 1.1), (0, 1, 0.9), (1, 1, 3.0), (1, 1, 3.6)] {
        rows += &format!("{t},{i},{y}\n");
    }
    let rows = write(dir.path(), "rows.csv", &rows);
    let o = slhvb(&["did", "--config", &rows], &[]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("t_x_i,1.40000000"), "{}", stdout(&o));
    let o = slhvb(&["bootstrap", "--config", &rows, "--draws", "200"], &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("test,delta,se,z,p_one_sided\nbootstrap,"));
}

#[test]
fn scenario_list() {
    let o = slhvb(&["scenario", "--list"], &[]);
    assert_eq!(
        stdout(&o),
        "offline-sim-synthetic\ncold-vs-warm\nslope-check\nworst-case-demo\ndid-demo\n"
    );
    let o = slhvb(&["scenario", "bogus"], &[]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn sweep_over_n() {
    let dir = tempfile::tempdir().unwrap();
    let spec = format!(r#"{{"axis": "n", "values": [100, 400], "base": {CONFIG}}}"#);
    let path = write(dir.path(), "s.json", &spec);
    let o = slhvb(&["sweep", "--config", &path], &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.starts_with("n,mean_loss,ci,mean_pct_of_oracle,pct_ci\n100,"));
    assert_eq!(out.lines().count(), 3);
}
