//! End-to-end checks of the command-line interface: exit codes,
//! artifact formats, reproducibility across thread counts, and the
//! comparison harness.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sqpulse"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn base_config(route: &str, extra_run: &str, out_dir: &Path) -> String {
    format!(
        r#"{{
  "system": {{"kind": "two_level", "delta": 0.0, "gamma": 1.0}},
  "input": {{"n": 1, "r": 0.4, "phi": 0.0,
             "profile": {{"kind": "gaussian", "center": 1.5, "sigma": 0.35}},
             "t_start": 0.0, "t_end": 3.0}},
  "numerics": {{"bins": 150, "dt": 0.005, "n_cut": 6, "m_cut": 20,
                "ancilla_dim": 3, "s_max": 2, "quad_points": [24, 16]}},
  "run": {{"route": "{route}", "seed": 11, "trajectories": 40,
           "checkpoints": [1.0, 2.0, 3.0]{extra_run}}},
  "output": {{"dir": "{}", "prefix": "t"}}
}}"#,
        out_dir.display()
    )
}

fn run_ok(output: &Output) {
    assert!(
        output.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

fn read_states(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn validate_config_reports_field_paths() {
    let dir = tempfile::tempdir().unwrap();
    let good = write_config(dir.path(), "good.json", &base_config("master", "", dir.path()));
    let out = bin()
        .args(["validate-config", "--config"])
        .arg(&good)
        .output()
        .unwrap();
    run_ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("ok"));

    let bad_body = base_config("master", "", dir.path()).replace("\"gamma\": 1.0", "\"gamma\": -1.0");
    let bad = write_config(dir.path(), "bad.json", &bad_body);
    let out = bin()
        .args(["validate-config", "--config"])
        .arg(&bad)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("system.gamma"),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn master_free_system_keeps_unit_trace() {
    let dir = tempfile::tempdir().unwrap();
    let body = base_config("master", "", dir.path())
        .replace("\"gamma\": 1.0", "\"gamma\": 0.0")
        .replace("\"r\": 0.4", "\"r\": 0.0")
        .replace("\"n_cut\": 6", "\"n_cut\": 1");
    let config = write_config(dir.path(), "free.json", &body);
    let out = bin().args(["master", "--config"]).arg(&config).output().unwrap();
    run_ok(&out);
    let states = read_states(&dir.path().join("t_states.json"));
    let checkpoints = states["data"]["checkpoints"].as_array().unwrap();
    assert_eq!(checkpoints.len(), 3);
    for point in checkpoints {
        let re = point["rho"]["re"].as_array().unwrap();
        let trace: f64 = re[0].as_f64().unwrap() + re[3].as_f64().unwrap();
        assert!((trace - 1.0).abs() < 1e-9, "trace {trace}");
    }
    // Meta is embedded in every artifact.
    assert!(states["meta"]["config_hash"].as_str().unwrap().len() == 16);
    assert!(states["meta"]["version"].is_string());

    // Hierarchy dumps: one per checkpoint plus the final time, with the
    // indexed component layout.
    let hierarchy = read_states(&dir.path().join("t_hierarchy.json"));
    let dumps = hierarchy["data"].as_array().unwrap();
    assert_eq!(dumps.len(), 4);
    let first = &dumps[0];
    assert_eq!(first["n_cut"].as_u64().unwrap(), 1);
    let comps = first["components"].as_array().unwrap();
    assert_eq!(comps.len(), 4);
    assert!(comps[0]["re"].as_array().unwrap().len() == 4);
}

#[test]
fn stochastic_outputs_are_thread_count_independent() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let config = write_config(dir.path(), "c.json", &base_config("collision", "", dir.path()));

    let out = bin()
        .args(["simulate", "--threads", "1", "--out"])
        .arg(&out_a)
        .arg("--config")
        .arg(&config)
        .output()
        .unwrap();
    run_ok(&out);
    let out = bin()
        .args(["simulate", "--threads", "2", "--out"])
        .arg(&out_b)
        .arg("--config")
        .arg(&config)
        .output()
        .unwrap();
    run_ok(&out);

    for name in ["t_trajectories.jsonl", "t_states.json", "t_summary.json"] {
        let a = fs::read(out_a.join(name)).unwrap();
        let b = fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "artifact {name} differs between thread counts");
    }

    // The sme route is byte-identical across thread counts as well.
    let sme_body = base_config("sme", "", dir.path());
    let sme_config = write_config(dir.path(), "s.json", &sme_body);
    let out_sa = dir.path().join("sa");
    let out_sb = dir.path().join("sb");
    for (threads, out_dir) in [("1", &out_sa), ("2", &out_sb)] {
        let out = bin()
            .args(["simulate", "--threads", threads, "--out"])
            .arg(out_dir)
            .arg("--config")
            .arg(&sme_config)
            .output()
            .unwrap();
        run_ok(&out);
    }
    for name in ["t_records.jsonl", "t_states.json"] {
        let a = fs::read(out_sa.join(name)).unwrap();
        let b = fs::read(out_sb.join(name)).unwrap();
        assert_eq!(a, b, "sme artifact {name} differs between thread counts");
    }

    // --seed overrides the config: a different seed changes the records.
    let out_c = dir.path().join("c_override");
    let out = bin()
        .args(["simulate", "--seed", "99", "--out"])
        .arg(&out_c)
        .arg("--config")
        .arg(&config)
        .output()
        .unwrap();
    run_ok(&out);
    let a = fs::read(out_a.join("t_trajectories.jsonl")).unwrap();
    let c = fs::read(out_c.join("t_trajectories.jsonl")).unwrap();
    assert_ne!(a, c, "seed override must change the sampled trajectories");
}

#[test]
fn route_and_subcommand_must_agree() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "c.json", &base_config("master", "", dir.path()));
    let out = bin().args(["simulate", "--config"]).arg(&config).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn compare_passes_on_identical_and_fails_on_different() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "c.json", &base_config("master", "", dir.path()));
    let out = bin().args(["master", "--config"]).arg(&config).output().unwrap();
    run_ok(&out);
    let states = dir.path().join("t_states.json");

    // Identical artifacts: all distances zero.
    let out = bin()
        .args(["compare"])
        .arg(&states)
        .arg(&states)
        .args(["--tolerance", "1e-15"])
        .output()
        .unwrap();
    run_ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("PASS"));

    // A different hierarchy cut gives a small but nonzero distance.
    let dir2 = tempfile::tempdir().unwrap();
    let body2 = base_config("master", "", dir2.path()).replace("\"n_cut\": 6", "\"n_cut\": 8");
    let config2 = write_config(dir2.path(), "c2.json", &body2);
    let out = bin().args(["master", "--config"]).arg(&config2).output().unwrap();
    run_ok(&out);
    let states2 = dir2.path().join("t_states.json");

    let report = dir.path().join("report.json");
    let out = bin()
        .args(["compare"])
        .arg(&states)
        .arg(&states2)
        .args(["--tolerance", "1e-30", "--report"])
        .arg(&report)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "tight tolerance must fail");
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(doc["distances"].as_array().unwrap().len(), 3);
    assert!(doc["worst"].as_f64().unwrap() > 0.0);

    // Mismatched checkpoint grids are a validation error.
    let dir3 = tempfile::tempdir().unwrap();
    let body3 = base_config("master", "", dir3.path())
        .replace("[1.0, 2.0, 3.0]", "[1.0, 2.0]");
    let config3 = write_config(dir3.path(), "c3.json", &body3);
    let out = bin().args(["master", "--config"]).arg(&config3).output().unwrap();
    run_ok(&out);
    let out = bin()
        .args(["compare"])
        .arg(&states)
        .arg(dir3.path().join("t_states.json"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn collision_and_sme_routes_agree_through_the_harness() {
    // Matched physics, both stochastic routes; ensemble means agree within
    // a Monte-Carlo-sized tolerance through the compare harness.
    let dir = tempfile::tempdir().unwrap();
    let out_c = dir.path().join("c");
    let out_s = dir.path().join("s");
    let collision = base_config("collision", ", \"scan_deltas\": []", dir.path())
        .replace("\"trajectories\": 40", "\"trajectories\": 600");
    let sme = collision.replace("\"route\": \"collision\"", "\"route\": \"sme\"");
    let config_c = write_config(dir.path(), "cc.json", &collision);
    let config_s = write_config(dir.path(), "cs.json", &sme);

    let out = bin()
        .args(["simulate", "--out"])
        .arg(&out_c)
        .arg("--config")
        .arg(&config_c)
        .output()
        .unwrap();
    run_ok(&out);
    let out = bin()
        .args(["simulate", "--out"])
        .arg(&out_s)
        .arg("--config")
        .arg(&config_s)
        .output()
        .unwrap();
    run_ok(&out);

    let report = dir.path().join("cross.json");
    let out = bin()
        .args(["compare"])
        .arg(out_c.join("t_states.json"))
        .arg(out_s.join("t_states.json"))
        .args(["--tolerance", "0.15", "--counts-tolerance", "0.2", "--summaries"])
        .arg(out_c.join("t_summary.json"))
        .arg(out_s.join("t_summary.json"))
        .args(["--report"])
        .arg(&report)
        .output()
        .unwrap();
    run_ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("PASS") && stdout.contains("mean counts"));
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert!(doc["counts"]["pass"].as_bool().unwrap());
}

#[test]
fn transfer_scan_peaks_at_resonance() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!(
        r#"{{
  "system": {{"kind": "cavity", "delta": 0.0, "gamma": 1.0, "dim": 5}},
  "input": {{"n": 1, "r": 0.0, "phi": 0.0,
             "profile": {{"kind": "exp_rise", "rate": 1.0, "start": 0.0, "end": 2.0}},
             "t_start": 0.0, "t_end": 2.0}},
  "run": {{"route": "transfer", "checkpoints": []}},
  "output": {{"dir": "{}", "prefix": "t"}}
}}"#,
        dir.path().display()
    );
    let config = write_config(dir.path(), "c.json", &body);
    let out = bin().args(["transfer", "--config"]).arg(&config).output().unwrap();
    run_ok(&out);
    let scan = fs::read_to_string(dir.path().join("t_scan.csv")).unwrap();
    assert!(scan.starts_with("# config_hash="));
    assert!(scan.lines().nth(1).unwrap().starts_with("delta,rise_rate,t,P,P_max,gap"));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("t_summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["data"]["best_delta"].as_f64().unwrap(), 0.0);
}

#[test]
fn analytic_route_writes_count_distribution() {
    let dir = tempfile::tempdir().unwrap();
    let body = base_config("analytic", "", dir.path())
        .replace("\"r\": 0.4", "\"r\": 0.0")
        .replace("\"checkpoints\": [1.0, 2.0, 3.0]", "\"checkpoints\": [1.5]");
    let config = write_config(dir.path(), "c.json", &body);
    let out = bin().args(["analytic", "--config"]).arg(&config).output().unwrap();
    run_ok(&out);
    let csv = fs::read_to_string(dir.path().join("t_counts.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(2).collect();
    assert_eq!(rows.len(), 3); // s = 0, 1, 2
    let p: Vec<f64> = rows
        .iter()
        .map(|r| r.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    // Single photon: counts beyond one are impossible.
    assert!(p[2].abs() < 1e-9);
    assert!(p[0] + p[1] > 0.99);
}

#[test]
fn integrity_failures_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let body = base_config("sme", "", dir.path())
        .replace("\"r\": 0.4", "\"r\": 1.2")
        .replace("\"n\": 1", "\"n\": 0")
        .replace("\"n_cut\": 6", "\"n_cut\": 1");
    let config = write_config(dir.path(), "c.json", &body);
    let out = bin().args(["simulate", "--config"]).arg(&config).output().unwrap();
    assert_eq!(out.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("t_integrity_error.json").exists());
}
