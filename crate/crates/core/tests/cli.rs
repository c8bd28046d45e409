use std::path::Path;
use std::process::{Command, Output};

use uavterra::harness::RunManifest;

fn run(args: &[&str], dir: &Path, env: &[(&str, &str)]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_uavterra"));
    c.args(args).current_dir(dir);
    for (k, v) in env {
        c.env(k, v);
    }
    c.output().unwrap()
}

fn manifest(dir: &Path) -> RunManifest {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn checksums(m: &RunManifest) -> Vec<(String, String)> {
    m.outputs.iter().map(|o| (o.file.clone(), o.sha256.clone())).collect()
}

fn setup(config: &str) -> tempfile::TempDir {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("c.toml"), config).unwrap();
    d
}

#[test]
fn unknown_scenario_is_a_usage_error() {
    let d = setup("");
    let o = run(&["fig99", "--config", "c.toml", "--seed", "1", "--out", "out"], d.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("fig99"));
}

#[test]
fn missing_flag_is_a_usage_error() {
    let d = setup("");
    let o = run(&["fig7_relay", "--seed", "1", "--out", "out"], d.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_key_names_the_key() {
    let d = setup("[buildings]\ndensity = -1\n");
    let o = run(&["fig7_relay", "--config", "c.toml", "--seed", "1", "--out", "out"], d.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("buildings.density"));
}

#[test]
fn env_override_is_validated_too() {
    let d = setup("");
    let o = run(
        &["fig7_relay", "--config", "c.toml", "--seed", "1", "--out", "out"],
        d.path(),
        &[("UAVTERRA_RELAY__HEATMAP_STEP", "-2")],
    );
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("relay.heatmap_step"));
}

#[test]
fn resource_cap_has_its_own_exit_code() {
    let d = setup("[limits]\nmax_cells = 100\n");
    let o = run(&["reconstruct_demo", "--config", "c.toml", "--seed", "1", "--out", "out"], d.path(), &[]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn relay_run_is_deterministic_across_workers() {
    let d = setup("");
    let args = |out: &'static str, w: &'static str| {
        ["fig7_relay", "--config", "c.toml", "--seed", "5", "--out", out, "--trials", "3", "--workers", w]
    };
    assert!(run(&args("a", "1"), d.path(), &[]).status.success());
    assert!(run(&args("b", "3"), d.path(), &[]).status.success());
    let (ma, mb) = (manifest(&d.path().join("a")), manifest(&d.path().join("b")));
    assert_eq!(checksums(&ma), checksums(&mb));
    assert_eq!(ma.config_hash, mb.config_hash);
    let summary = std::fs::read_to_string(d.path().join("a/relay_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 4);
    for f in ["trace.csv", "heatmap.csv", "heatmap_meta.json", "buildings.csv", "effective_config.toml"] {
        assert!(ma.checksum(f).is_some(), "{f} missing from manifest");
    }
}

#[test]
fn coverage_run_has_one_row_per_point() {
    let d = setup("[coverage]\ndensities = [4.0, 12.0]\nthresholds = [0.0]\n");
    let o =
        run(&["fig6_coverage", "--config", "c.toml", "--seed", "2", "--out", "o", "--trials", "200"], d.path(), &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(d.path().join("o/sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "mode,density_per_km2,threshold_db,coverage,ci95,trials");
    assert_eq!(lines.count(), 4);
}

#[test]
fn effective_config_reproduces_the_run() {
    let d = setup("master_seed = 3\n[relay]\nscenes = 2\n");
    assert!(run(&["fig7_relay", "--config", "c.toml", "--seed", "8", "--out", "a"], d.path(), &[]).status.success());
    let o = run(&["fig7_relay", "--config", "a/effective_config.toml", "--seed", "8", "--out", "b"], d.path(), &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(checksums(&manifest(&d.path().join("a"))), checksums(&manifest(&d.path().join("b"))));
    let eff = std::fs::read_to_string(d.path().join("a/effective_config.toml")).unwrap();
    assert!(eff.contains("master_seed = 8"));
}
