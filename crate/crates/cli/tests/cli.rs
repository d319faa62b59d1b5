//! End-to-end checks of the `thincell` binary: exit codes, error wording,
//! reproducibility of outputs, manifest integrity, and config immutability.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_thincell"))
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("thincell-cli-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

const BASE: &str = "[cell]\nw_um = 5.0\nd_mm = 8.0\n";

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn missing_required_key_exits_2_and_names_it() {
    let dir = tmp("missing-key");
    let config = write_config(&dir, "[cell]\nd_mm = 8.0\n");
    let out = bin().args(["flux", "--config"]).arg(&config).arg("--out-dir").arg(&dir).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let msg = stderr_of(&out);
    assert!(msg.contains("cell.w_um"), "stderr was: {msg}");
}

#[test]
fn unknown_key_exits_2_with_nearest_suggestion() {
    let dir = tmp("typo-key");
    let config = write_config(&dir, "[cell]\nw_um = 5.0\nd_mm = 8.0\n[lineshape]\nb_mx_ut = 30.0\n");
    let out = bin().args(["lineshape", "--config"]).arg(&config).arg("--out-dir").arg(&dir).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let msg = stderr_of(&out);
    assert!(msg.contains("lineshape.b_mx_ut") && msg.contains("b_max_ut"), "stderr was: {msg}");
}

#[test]
fn unknown_section_exits_2_with_nearest_suggestion() {
    let dir = tmp("typo-section");
    let config = write_config(&dir, "[cel]\nw_um = 5.0\nd_mm = 8.0\n");
    let out = bin().args(["flux", "--config"]).arg(&config).arg("--out-dir").arg(&dir).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let msg = stderr_of(&out);
    assert!(msg.contains("cel") && msg.contains("`cell`"), "stderr was: {msg}");
}

#[test]
fn rerun_with_same_config_is_bit_identical() {
    let dir = tmp("rerun");
    let config = write_config(&dir, BASE);
    for sub in ["a", "b"] {
        let out = bin()
            .args(["lineshape", "--config"])
            .arg(&config)
            .args(["--set", "lineshape.points=21", "--set", "lineshape.b_max_ut=30.0"])
            .arg("--out-dir")
            .arg(dir.join(sub))
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", stderr_of(&out));
    }
    let a = std::fs::read(dir.join("a/lineshape.csv")).unwrap();
    let b = std::fs::read(dir.join("b/lineshape.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn flux_budget_matches_pinned_values() {
    let dir = tmp("flux");
    let config = write_config(&dir, BASE);
    let out = bin().args(["flux", "--config"]).arg(&config).arg("--out-dir").arg(&dir).output().unwrap();
    assert!(out.status.success(), "{}", stderr_of(&out));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("flux.json")).unwrap()).unwrap();
    let rel = |key: &str, want: f64| {
        let got = report[key].as_f64().unwrap();
        assert!(((got - want) / want).abs() < 1e-6, "{key}: got {got}, want {want}");
    };
    rel("V_pu", 6.2831853e-11);
    rel("N_pu", 1.2566371e9);
    rel("R_es", 2.4867960e-5);
    rel("F_meas", 2.1427349e9);
    rel("lambda_SE", 1.8608073e-2);
    rel("R_SE", 1.6631524e4);
}

#[test]
fn set_override_takes_effect() {
    let dir = tmp("override");
    let config = write_config(&dir, BASE);
    let out = bin()
        .args(["flux", "--config"])
        .arg(&config)
        .args(["--set", "cell.w_um=30.0"])
        .arg("--out-dir")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr_of(&out));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("flux.json")).unwrap()).unwrap();
    let n_pu = report["N_pu"].as_f64().unwrap();
    // six times the 5 um budget
    assert!((n_pu / 7.5398224e9 - 1.0).abs() < 1e-6, "N_pu = {n_pu}");
}

#[test]
fn input_config_is_never_modified() {
    let dir = tmp("immutable");
    let config = write_config(&dir, BASE);
    let before = std::fs::read(&config).unwrap();
    let out = bin()
        .args(["flux", "--config"])
        .arg(&config)
        .args(["--set", "cell.w_um=30.0"])
        .arg("--out-dir")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr_of(&out));
    assert_eq!(std::fs::read(&config).unwrap(), before);
}

#[test]
fn manifest_hashes_match_written_files() {
    use sha2::{Digest, Sha256};
    let dir = tmp("manifest");
    let config = write_config(&dir, BASE);
    let out = bin()
        .args(["distributions", "--config"])
        .arg(&config)
        .args(["--set", "distributions.v_points=11", "--set", "distributions.alpha_points=11"])
        .arg("--out-dir")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr_of(&out));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("distributions.manifest.json")).unwrap())
            .unwrap();
    let outputs = manifest["outputs"].as_array().unwrap();
    assert_eq!(outputs.len(), 2);
    for entry in outputs {
        let bytes = std::fs::read(dir.join(entry["path"].as_str().unwrap())).unwrap();
        let digest = hex::encode(Sha256::digest(&bytes));
        assert_eq!(digest, entry["sha256"].as_str().unwrap());
    }
    // the embedded config reproduces its own digest
    let toml_text = manifest["config_toml"].as_str().unwrap();
    let digest = hex::encode(Sha256::digest(toml_text.as_bytes()));
    assert_eq!(digest, manifest["config_sha256"].as_str().unwrap());
}

#[test]
fn manifest_config_reproduces_outputs_bit_identically() {
    let dir = tmp("manifest-replay");
    let config = write_config(&dir, BASE);
    let run = |cfg: &Path, sub_dir: &Path| {
        let out = bin()
            .args(["montecarlo", "--config"])
            .arg(cfg)
            .args(["--set", "montecarlo.n_samples=100000", "--set", "montecarlo.points=5"])
            .arg("--out-dir")
            .arg(sub_dir)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", stderr_of(&out));
    };
    run(&config, &dir.join("first"));
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.join("first/montecarlo.manifest.json")).unwrap(),
    )
    .unwrap();
    // replay from the resolved config embedded in the manifest; the --set
    // overrides are already baked in, re-applying them is a no-op
    let replay_config = dir.join("replay.toml");
    std::fs::write(&replay_config, manifest["config_toml"].as_str().unwrap()).unwrap();
    run(&replay_config, &dir.join("second"));
    for name in ["mc_lineshape.csv", "mc_v_parallel_hist.csv", "mc_transit_hist.csv", "mc_summary.json"] {
        let a = std::fs::read(dir.join("first").join(name)).unwrap();
        let b = std::fs::read(dir.join("second").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between original and replayed run");
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tmp("threads");
    let config = write_config(&dir, BASE);
    for (threads, sub) in [("1", "t1"), ("4", "t4")] {
        let out = bin()
            .args(["montecarlo", "--threads", threads, "--config"])
            .arg(&config)
            .args(["--set", "montecarlo.n_samples=100000", "--set", "montecarlo.points=5"])
            .arg("--out-dir")
            .arg(dir.join(sub))
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", stderr_of(&out));
    }
    for name in ["mc_lineshape.csv", "mc_v_parallel_hist.csv", "mc_transit_hist.csv", "mc_summary.json"] {
        let a = std::fs::read(dir.join("t1").join(name)).unwrap();
        let b = std::fs::read(dir.join("t4").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between thread counts");
    }
}

#[test]
fn fit_round_trips_a_generated_lineshape() {
    let dir = tmp("fit-roundtrip");
    let config = write_config(&dir, BASE);
    let gen = bin()
        .args(["lineshape", "--config"])
        .arg(&config)
        .args([
            "--set",
            "fields.b_perp_ut=0.0",
            "--set",
            "fields.c1_rad_s=0.1",
            "--set",
            "lineshape.b_max_ut=12.0",
            "--set",
            "lineshape.points=21",
        ])
        .arg("--out-dir")
        .arg(dir.join("gen"))
        .output()
        .unwrap();
    assert!(gen.status.success(), "{}", stderr_of(&gen));
    let data = dir.join("gen/lineshape.csv");
    let fit = bin()
        .args(["fit", "--config"])
        .arg(&config)
        .args([
            "--set",
            "fields.b_perp_ut=0.0",
            "--set",
            &format!("fit.pump_on=\"{}\"", data.display()),
            "--set",
            "fit.initial_c1=0.05",
            "--set",
            "fit.initial_gamma_per_s=5.0e3",
        ])
        .arg("--out-dir")
        .arg(dir.join("fit"))
        .output()
        .unwrap();
    assert!(fit.status.success(), "{}", stderr_of(&fit));
    let result: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("fit/fit_result.json")).unwrap())
            .unwrap();
    assert!(result["converged"].as_bool().unwrap());
    assert!((result["c1"].as_f64().unwrap() - 0.1).abs() < 1e-5);
    assert!((result["c2"].as_f64().unwrap() - 1.0).abs() < 1e-5);
    assert!((result["gamma_coh"].as_f64().unwrap() / 1.7e4 - 1.0).abs() < 1e-3);
    // residuals file covers the same grid
    let residuals = std::fs::read_to_string(dir.join("fit/fit_residuals.csv")).unwrap();
    assert_eq!(residuals.lines().filter(|l| !l.starts_with('#') && !l.is_empty()).count(), 21);
}
