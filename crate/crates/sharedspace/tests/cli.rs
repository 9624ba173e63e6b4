use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sharedspace")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(Result::unwrap).collect()
}

fn simulate(out: &Path, extra: &[&str]) -> Output {
    let scene = fixture("scene.toml");
    let scenario = fixture("crossing.toml");
    let mut args = vec!["simulate", "--scene", s(&scene), "--scenario", s(&scenario), "--out-dir", s(out)];
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn simulate_writes_trajectory_decisions_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(dir.path(), &[]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["trajectory.csv", "decisions.csv", "manifest.json"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let traj = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(traj.starts_with("scenario_id,frame,agent_id,kind,x,y"));
    let m = manifest(dir.path());
    assert_eq!(m["command"], "simulate");
    assert_eq!(m["settings"]["regime"], "hbs");
    assert_eq!(m["inputs"].as_array().unwrap().len(), 2);
}

#[test]
fn simulate_is_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(code(&simulate(a.path(), &["--seed", "9"])), 0);
    assert_eq!(code(&simulate(b.path(), &["--seed", "9"])), 0);
    for f in ["trajectory.csv", "decisions.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
    }
    assert_eq!(manifest(a.path())["config_hash"], manifest(b.path())["config_hash"]);
}

#[test]
fn dut_regime_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&simulate(dir.path(), &["--regime", "dut"])), 0);
    assert_eq!(manifest(dir.path())["settings"]["regime"], "dut");
}

#[test]
fn missing_scene_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = fixture("crossing.toml");
    let out = run(&["simulate", "--scene", "/nonexistent/scene.toml", "--scenario", s(&scenario), "--out-dir", s(dir.path())]);
    assert_eq!(code(&out), 2);
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn validate_accepts_the_fixtures() {
    let (scene, scenario, params) = (fixture("scene.toml"), fixture("crossing.toml"), fixture("params.toml"));
    let out = run(&["validate", "--scene", s(&scene), "--scenario", s(&scenario), "--params", s(&params)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

const HEADER: &str = "scenario_id,frame,agent_id,kind,x,y\n";

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn evaluate_identical_tracks_gives_zero_error() {
    let dir = tempfile::tempdir().unwrap();
    let real = fixture("trajectories.csv");
    let out_dir = dir.path().join("out");
    let out = run(&["evaluate", "--real", s(&real), "--sim", s(&real), "--out-dir", s(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for row in csv_rows(&out_dir.join("metrics_agents.csv")) {
        assert_eq!(row[4].parse::<f64>().unwrap(), 0.0);
    }
    assert!(!out_dir.join("decision_confusion.csv").exists());
}

#[test]
fn evaluate_known_offsets() {
    let dir = tempfile::tempdir().unwrap();
    let real = write(dir.path(), "real.csv", &format!("{HEADER}a,0,1,ped,0,0\na,1,1,ped,1,0\na,2,1,ped,2,0\na,3,1,ped,3,0\n"));
    // constant 3 m offset on frames 0-1, then 4 m; frame 3 is not simulated
    let sim = write(dir.path(), "sim.csv", &format!("{HEADER}a,0,1,ped,0,3\na,1,1,ped,1,3\na,2,1,ped,2,4\n"));
    let out_dir = dir.path().join("out");
    let out = run(&["evaluate", "--real", s(&real), "--sim", s(&sim), "--frame-seconds", "1", "--out-dir", s(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&out_dir.join("metrics_agents.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(&rows[0][3], "3");
    let ade: f64 = rows[0][4].parse().unwrap();
    assert!((ade - 10.0 / 3.0).abs() < 1e-12, "{ade}");
    // real speeds 1,1; sim speeds 1, sqrt(2)
    let sd: f64 = rows[0][5].parse().unwrap();
    assert!((sd - (2f64.sqrt() - 1.0) / 2.0).abs() < 1e-12, "{sd}");
}

#[test]
fn evaluate_with_a_missing_agent_is_an_alignment_error() {
    let dir = tempfile::tempdir().unwrap();
    let real = write(dir.path(), "real.csv", &format!("{HEADER}a,0,1,ped,0,0\na,0,2,car,5,5\n"));
    let sim = write(dir.path(), "sim.csv", &format!("{HEADER}a,0,1,ped,0,0\n"));
    let out = run(&["evaluate", "--real", s(&real), "--sim", s(&sim), "--out-dir", s(&dir.path().join("out"))]);
    assert_eq!(code(&out), 4);
}

#[test]
fn evaluate_with_annotations_reports_decisions() {
    let dir = tempfile::tempdir().unwrap();
    let sim_dir = dir.path().join("sim");
    let out = simulate(&sim_dir, &["--scenario-id", "c"]);
    assert_eq!(code(&out), 0);
    let ann = write(dir.path(), "ann.csv", "scenario_id,agent_id,conflict_idx,action\nc,1,0,decelerate\n");
    let traj = sim_dir.join("trajectory.csv");
    let out_dir = dir.path().join("out");
    let out = run(&["evaluate", "--real", s(&traj), "--sim", s(&traj), "--annotations", s(&ann), "--out-dir", s(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary = fs::read_to_string(out_dir.join("summary.txt")).unwrap();
    assert!(out_dir.join("decision_confusion.csv").exists());
    assert!(summary.to_lowercase().contains("decision"), "{summary}");
}

fn history_bests(path: &Path) -> (f64, f64) {
    let rows = csv_rows(path);
    let first: f64 = rows[0][1].parse().unwrap();
    let last: f64 = rows.last().unwrap()[3].parse().unwrap();
    (first, last)
}

#[test]
fn calibrate_sfm_never_ends_worse_than_it_started() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture("calibrate.toml");
    let out = run(&["calibrate-sfm", "--config", s(&cfg), "--jobs", "2", "--out-dir", s(dir.path())]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let (first, last) = history_bests(&dir.path().join("history.csv"));
    assert!(last <= first, "{last} > {first}");
    let best = fs::read_to_string(dir.path().join("best_params.toml")).unwrap();
    assert!(best.contains("v_pc"));
    assert_eq!(manifest(dir.path())["seed"], 1);
}

#[test]
fn calibrate_game_never_ends_worse_than_it_started() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture("calibrate.toml");
    let out = run(&["calibrate-game", "--config", s(&cfg), "--out-dir", s(dir.path())]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let (first, last) = history_bests(&dir.path().join("history.csv"));
    assert!(last >= first, "{last} < {first}");
}

#[test]
fn select_features_drops_car_following_first() {
    let dir = tempfile::tempdir().unwrap();
    let obs = fixture("observations_car.csv");
    let out = run(&["select-features", "--observations", s(&obs), "--alpha", "0.09", "--keep", "Angle", "--out-dir", s(dir.path())]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let log = csv_rows(&dir.path().join("elimination_log.csv"));
    assert_eq!(&log[0][1], "CarFollowing");
    let final_vars: Vec<String> = csv_rows(&dir.path().join("model_final.csv")).iter().map(|r| r[0].to_string()).collect();
    assert!(final_vars.iter().any(|v| v == "Angle"));
    assert!(!final_vars.iter().any(|v| v == "CarFollowing"));
    assert_eq!(manifest(dir.path())["settings"]["alpha"], 0.09);
}

#[test]
fn separable_observations_fail_to_fit() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("action,OwnSpeed,Angle\n");
    for k in 0..40 {
        let x = k as f64 / 4.0;
        let a = if x > 5.0 { "decelerate" } else { "continue" };
        text.push_str(&format!("{a},{x},{}\n", (k % 5) + 1));
    }
    let obs = write(dir.path(), "obs.csv", &text);
    let out = run(&["select-features", "--observations", s(&obs), "--out-dir", s(&dir.path().join("out"))]);
    assert_eq!(code(&out), 5, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn commands_leave_their_inputs_untouched() {
    let names = ["scene.toml", "crossing.toml", "params.toml", "calibrate.toml", "trajectories.csv", "annotations.csv", "observations_car.csv"];
    let before: Vec<Vec<u8>> = names.iter().map(|n| fs::read(fixture(n)).unwrap()).collect();
    let dir = tempfile::tempdir().unwrap();
    let (scene, scenario, params) = (fixture("scene.toml"), fixture("crossing.toml"), fixture("params.toml"));
    run(&["simulate", "--scene", s(&scene), "--scenario", s(&scenario), "--params", s(&params), "--out-dir", s(&dir.path().join("a"))]);
    let (traj, ann, obs) = (fixture("trajectories.csv"), fixture("annotations.csv"), fixture("observations_car.csv"));
    run(&["evaluate", "--real", s(&traj), "--sim", s(&traj), "--annotations", s(&ann), "--out-dir", s(&dir.path().join("b"))]);
    run(&["select-features", "--observations", s(&obs), "--out-dir", s(&dir.path().join("c"))]);
    let after: Vec<Vec<u8>> = names.iter().map(|n| fs::read(fixture(n)).unwrap()).collect();
    assert_eq!(before, after);
}
