//! Binary-level contracts: exit codes, the JSON error record on stderr,
//! manifest arithmetic, and byte-stable reruns.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use odflow::synthgen::{generate, WorldSpec};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_odflow"))
}

fn run_ok(args: &[&str]) -> serde_json::Value {
    let out = bin().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "expected success, got {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn last_stderr_record(out: &Output) -> serde_json::Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let last = stderr.lines().last().unwrap_or_default();
    serde_json::from_str(last)
        .unwrap_or_else(|e| panic!("last stderr line is not a JSON record ({e}): {stderr}"))
}

fn small_world(dir: &Path) -> WorldPaths {
    let spec = WorldSpec { seed: 3, n_agents: 60, n_days: 3, ..WorldSpec::default() };
    let (_world, paths, _manifest) = generate(&spec, dir).unwrap();
    WorldPaths {
        cdr: paths.cdr,
        legs: paths.legs,
        stations: paths.stations,
        districts: paths.districts,
    }
}

struct WorldPaths {
    cdr: PathBuf,
    legs: PathBuf,
    stations: PathBuf,
    districts: PathBuf,
}

impl WorldPaths {
    fn run_args<'a>(&'a self, out_dir: &'a Path) -> Vec<String> {
        [
            "run",
            "--cdr",
            self.cdr.to_str().unwrap(),
            "--legs",
            self.legs.to_str().unwrap(),
            "--stations",
            self.stations.to_str().unwrap(),
            "--districts",
            self.districts.to_str().unwrap(),
            "--out-dir",
            out_dir.to_str().unwrap(),
            "--market-share",
            "1.0",
            "--penetration",
            "1.0",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect()
    }
}

#[test]
fn missing_input_exits_2_with_a_json_record() {
    let dir = tempfile::tempdir().unwrap();
    let w = small_world(dir.path());
    let out = bin()
        .args([
            "run",
            "--cdr",
            "/nonexistent/cdr.csv",
            "--legs",
            w.legs.to_str().unwrap(),
            "--stations",
            w.stations.to_str().unwrap(),
            "--districts",
            w.districts.to_str().unwrap(),
            "--out-dir",
            dir.path().join("out").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let record = last_stderr_record(&out);
    assert_eq!(record["error"]["kind"], "input-missing");
}

#[test]
fn unknown_config_field_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"granularity": "1h", "granularityy": "2h"}"#).unwrap();
    let out = bin().args(["run", "--config", cfg.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(last_stderr_record(&out)["error"]["kind"], "config-invalid");
}

#[test]
fn missing_required_input_setting_exits_3() {
    let out = bin().args(["run"]).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    let record = last_stderr_record(&out);
    assert_eq!(record["error"]["kind"], "config-invalid");
    assert!(record["error"]["message"].as_str().unwrap().contains("cdr"));
}

#[test]
fn bad_flag_exits_3_and_help_exits_0() {
    let out = bin().args(["run", "--no-such-flag"]).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(last_stderr_record(&out)["error"]["kind"], "config-invalid");

    let out = bin().args(["--help"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("odflow"));
}

#[test]
fn bad_timezone_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let w = small_world(dir.path());
    let out_dir = dir.path().join("out");
    let mut args = w.run_args(&out_dir);
    args.push("--timezone".into());
    args.push("Mars/Olympus".into());
    let out = bin().args(&args).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(last_stderr_record(&out)["error"]["kind"], "config-invalid");
}

#[test]
fn manifest_arithmetic_holds() {
    let dir = tempfile::tempdir().unwrap();
    let w = small_world(dir.path());
    let out_dir = dir.path().join("out");
    let args = w.run_args(&out_dir);
    let manifest = run_ok(&args.iter().map(|s| s.as_str()).collect::<Vec<_>>());

    let trips = &manifest["trips"];
    assert_eq!(
        trips["binned"].as_u64().unwrap(),
        trips["extracted"].as_u64().unwrap()
            - trips["skipped_no_district"].as_u64().unwrap()
            - trips["out_of_window"].as_u64().unwrap()
    );

    let inputs = &manifest["inputs"];
    assert_eq!(inputs["cdr_bytes_read"], inputs["cdr_file_bytes"]);
    assert_eq!(inputs["legs_bytes_read"], inputs["legs_file_bytes"]);
    assert_eq!(inputs["cdr_malformed_lines"], 0);
    assert_eq!(
        inputs["events"].as_u64().unwrap() + inputs["cdr_malformed_lines"].as_u64().unwrap(),
        inputs["cdr_data_lines"].as_u64().unwrap()
    );

    let users = &manifest["users"];
    assert!(users["frequent"].as_u64().unwrap() <= users["total"].as_u64().unwrap());
    let measured = users["measured_frequent_share"].as_f64().unwrap();
    assert!(measured > 0.0 && measured <= 1.0);

    // The manifest lists exactly the files present next to it.
    let mut listed: Vec<String> = manifest["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_owned())
        .collect();
    listed.push("manifest.json".to_owned());
    let mut actual: Vec<String> = fs::read_dir(&out_dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| !n.ends_with(".meta.json"))
        .collect();
    listed.sort();
    actual.sort();
    assert_eq!(listed, actual);
}

#[test]
fn reruns_are_byte_identical_even_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let w = small_world(dir.path());
    let out_dir = dir.path().join("out");
    let base = w.run_args(&out_dir);

    let mut one = base.clone();
    one.extend(["--workers".into(), "1".into()]);
    run_ok(&one.iter().map(|s| s.as_str()).collect::<Vec<_>>());
    let snapshot: Vec<(String, Vec<u8>)> = {
        let mut files: Vec<_> = fs::read_dir(&out_dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        files.sort();
        files
            .iter()
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(p).unwrap()))
            .collect()
    };
    assert!(!snapshot.is_empty());

    let mut four = base;
    four.extend(["--workers".into(), "4".into()]);
    run_ok(&four.iter().map(|s| s.as_str()).collect::<Vec<_>>());
    for (name, bytes) in &snapshot {
        let now = fs::read(out_dir.join(name)).unwrap();
        assert_eq!(&now, bytes, "{name} changed between runs");
    }
}

#[test]
fn stage_subcommands_agree_with_the_full_run() {
    let dir = tempfile::tempdir().unwrap();
    let w = small_world(dir.path());
    let out_dir = dir.path().join("out");
    let args = w.run_args(&out_dir);
    run_ok(&args.iter().map(|s| s.as_str()).collect::<Vec<_>>());

    // stats reports the same user counts as the run manifest.
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    let stats = run_ok(&["stats", "--cdr", w.cdr.to_str().unwrap()]);
    assert_eq!(stats["users"], manifest["users"]["total"]);
    assert_eq!(stats["frequent"], manifest["users"]["frequent"]);
    assert_eq!(stats["events"], manifest["inputs"]["events"]);

    // trips then od reproduces the run's raw OD cells byte for byte.
    let trips_csv = dir.path().join("trips_alone.csv");
    let summary = run_ok(&[
        "trips",
        "--cdr",
        w.cdr.to_str().unwrap(),
        "--districts",
        w.districts.to_str().unwrap(),
        "--out",
        trips_csv.to_str().unwrap(),
    ]);
    assert_eq!(summary["trips"], manifest["trips"]["extracted"]);

    let od_csv = dir.path().join("od_alone.csv");
    run_ok(&[
        "od",
        "--trips",
        trips_csv.to_str().unwrap(),
        "--districts",
        w.districts.to_str().unwrap(),
        "--label",
        "frequent-raw",
        "--out",
        od_csv.to_str().unwrap(),
    ]);
    assert_eq!(
        fs::read(&od_csv).unwrap(),
        fs::read(out_dir.join("od_frequent_raw.csv")).unwrap()
    );

    // public-od reproduces the run's public series byte for byte.
    let pub_csv = dir.path().join("public_alone.csv");
    run_ok(&[
        "public-od",
        "--legs",
        w.legs.to_str().unwrap(),
        "--stations",
        w.stations.to_str().unwrap(),
        "--districts",
        w.districts.to_str().unwrap(),
        "--out",
        pub_csv.to_str().unwrap(),
    ]);
    assert_eq!(
        fs::read(&pub_csv).unwrap(),
        fs::read(out_dir.join("od_public.csv")).unwrap()
    );

    // report over the run's own series reproduces its mode share table.
    let report_dir = dir.path().join("report_alone");
    run_ok(&[
        "report",
        "--overall",
        out_dir.join("od_overall.csv").to_str().unwrap(),
        "--public",
        out_dir.join("od_public.csv").to_str().unwrap(),
        "--districts",
        w.districts.to_str().unwrap(),
        "--out-dir",
        report_dir.to_str().unwrap(),
    ]);
    assert_eq!(
        fs::read(report_dir.join("mode_share.csv")).unwrap(),
        fs::read(out_dir.join("mode_share.csv")).unwrap()
    );

    // compare sees a self-comparison as exact.
    let cmp = run_ok(&[
        "compare",
        "--inferred",
        out_dir.join("od_overall.csv").to_str().unwrap(),
        "--truth",
        out_dir.join("od_overall.csv").to_str().unwrap(),
    ]);
    assert_eq!(cmp["cellwise_l1"], 0.0);
    assert_eq!(cmp["total_relative_error"], 0.0);
}

#[test]
fn synth_subcommand_writes_a_world() {
    let dir = tempfile::tempdir().unwrap();
    let spec_path = dir.path().join("spec.json");
    fs::write(&spec_path, r#"{"seed": 1, "n_agents": 10, "n_days": 2}"#).unwrap();
    let manifest = run_ok(&[
        "synth",
        "--spec",
        spec_path.to_str().unwrap(),
        "--out-dir",
        dir.path().join("world").to_str().unwrap(),
    ]);
    assert_eq!(manifest["agents"], 10);
    assert!(dir.path().join("world/cdr.csv").exists());
    assert!(dir.path().join("world/truth_overall.csv.meta.json").exists());

    // A bad spec is rejected with the input-invalid kind.
    fs::write(&spec_path, r#"{"cell_km": -1.0}"#).unwrap();
    let out = bin()
        .args([
            "synth",
            "--spec",
            spec_path.to_str().unwrap(),
            "--out-dir",
            dir.path().join("w2").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(last_stderr_record(&out)["error"]["kind"], "input-invalid");
}
