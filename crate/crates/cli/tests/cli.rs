use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use degen_cli::config::{ExperimentConfig, Kind};
use degen_cli::output::config_hash;

fn degen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_degen"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn paper_tables_succeed_and_stamp_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("tables");
    let res = degen(&["paper-tables", "--out", out.to_str().unwrap(), "--quiet"]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let threshold = fs::read_to_string(out.join("threshold.csv")).unwrap();
    let mut lines = threshold.lines();
    assert!(lines.next().unwrap().starts_with("# config_hash="));
    assert_eq!(lines.next(), Some("p_star,f_star,c_star"));
    assert_eq!(lines.next(), Some("0.646447,0.414214,0.828427"));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["passed"], true);
    assert!(manifest["outputs"].as_array().unwrap().len() >= 3);
}

#[test]
fn malformed_config_exits_two_and_names_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        ("[numeric]\ndt = -1.0\n", "numeric.dt"),
        ("[numeric]\nhorizon = 1.0\n", "horizon"),
        ("[model]\nn = 2\nr = 0.5\ngamma = { kind = \"constant\", value = -1.0 }\ng = { kind = \"constant\", value = 1.0 }\n", "model"),
        ("[couple]\ngap = 3.0\n", "couple.gap"),
        ("[numeric\n", "config"),
    ];
    for (text, key) in cases {
        let cfg = write_config(tmp.path(), text);
        let res = degen(&[
            "couple",
            "--config",
            &cfg,
            "--out",
            tmp.path().join("o").to_str().unwrap(),
        ]);
        let err = String::from_utf8_lossy(&res.stderr);
        assert_eq!(res.status.code(), Some(2), "{text}: {err}");
        assert!(err.contains(key), "{text}: stderr {err:?} does not name {key}");
    }
    let missing = degen(&["classify", "--config", tmp.path().join("absent.toml").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(2));
    assert_eq!(degen(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn experiment_kind_must_match_command() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "experiment = \"sweep\"\n");
    let res = degen(&[
        "classify",
        "--config",
        &cfg,
        "--out",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("experiment"));
}

#[test]
fn failing_assertion_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    // Too few paths and too coarse a step to resolve the laws to this tolerance.
    let cfg = write_config(
        tmp.path(),
        "[numeric]\nT = 0.2\nreplicas = 50\n[transform]\nks_threshold = 1e-6\n",
    );
    let res = degen(&[
        "transform-check",
        "--config",
        &cfg,
        "--out",
        tmp.path().join("o").to_str().unwrap(),
        "--quiet",
    ]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn seed_override_and_reruns() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[numeric]\nT = 0.05\n");
    let run = |seed: &str, dir: &str| {
        let out = tmp.path().join(dir);
        let res = degen(&[
            "simulate",
            "--config",
            &cfg,
            "--seed",
            seed,
            "--out",
            out.to_str().unwrap(),
            "--quiet",
        ]);
        assert_eq!(res.status.code(), Some(0));
        fs::read(out.join("trajectory.csv")).unwrap()
    };
    let a = run("7", "a");
    let b = run("7", "b");
    let c = run("8", "c");
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn hash_ignores_output_dir_but_tracks_numerics() {
    let base = ExperimentConfig::from_toml("[numeric]\ndt = 1e-3\n").unwrap();
    let mut moved = base.clone();
    moved.output.dir = Some("elsewhere".into());
    let mut finer = base.clone();
    finer.numeric.dt = Some(5e-4);
    let h = |c: ExperimentConfig| config_hash(&c.resolve(Kind::Simulate).unwrap());
    assert_eq!(h(base.clone()), h(moved));
    assert_ne!(h(base), h(finer));
}

#[test]
fn threads_flag_is_validated() {
    let res = degen(&["paper-tables", "--threads", "0"]);
    assert_eq!(res.status.code(), Some(2));
}
