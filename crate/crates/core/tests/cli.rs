use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nalgebra::{Rotation3, Vector3};
use serde_json::Value;

use swaykin::anatomy::{Segment, SwayTrajectory};
use swaykin::camera::{BoardGeometry, CameraIntrinsics, RigidTransform};
use swaykin::io;
use swaykin::synth::{render_board, RenderConfig, Scenario, SwayProfile};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swaykin")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn board() -> BoardGeometry {
    BoardGeometry {
        rows: 6,
        cols: 8,
        square_size_mm: 25.0,
    }
}

fn write_board_frames(dir: &Path, camera: &CameraIntrinsics, views: usize) -> PathBuf {
    let frames = dir.join("frames");
    std::fs::create_dir_all(&frames).unwrap();
    let poses = [
        (0.0, 0.0, 0.1, -90.0, -60.0, 600.0),
        (0.35, 0.0, 0.0, -90.0, -70.0, 650.0),
        (0.0, -0.4, 0.05, -80.0, -60.0, 620.0),
        (-0.3, 0.25, -0.1, -100.0, -50.0, 700.0),
        (0.2, 0.3, 0.2, -70.0, -80.0, 580.0),
    ];
    for (k, &(a, b, c, x, y, z)) in poses.iter().take(views).enumerate() {
        let pose = RigidTransform::from_rotation(Rotation3::from_euler_angles(a, b, c), Vector3::new(x, y, z));
        render_board(&board(), &pose, camera, 1280, 1024, &RenderConfig::default())
            .unwrap()
            .write_pgm(frames.join(format!("view_{k}.pgm")))
            .unwrap();
    }
    io::write_json(dir.join("board.json"), &board()).unwrap();
    frames
}

#[test]
fn calibrates_from_rendered_board_frames() {
    let dir = tempfile::tempdir().unwrap();
    let truth = CameraIntrinsics::new(1500.0, 1500.0, 0.0, 640.0, 512.0, -0.1, 0.02).unwrap();
    let frames = write_board_frames(dir.path(), &truth, 5);
    let out = dir.path().join("intrinsics.json");
    let o = run(&["calibrate", "--frames", s(&frames), "--board", s(&dir.path().join("board.json")), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let k = io::read_intrinsics(&out).unwrap();
    for (est, want) in [(k.fx, truth.fx), (k.fy, truth.fy), (k.x0, truth.x0), (k.y0, truth.y0)] {
        assert!(((est - want) / want).abs() < 1e-3, "{est} vs {want}");
    }
    assert!((k.k1 - truth.k1).abs() < 5e-3, "k1 {}", k.k1);
}

#[test]
fn calibrate_reports_usage_and_computation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let truth = CameraIntrinsics::pinhole(1500.0, 640.0, 512.0).unwrap();
    let frames = write_board_frames(dir.path(), &truth, 1);
    let out = dir.path().join("k.json");

    let missing = run(&["calibrate", "--frames", s(&frames), "--board", "/nonexistent/board.json", "--out", s(&out)]);
    assert_eq!(missing.status.code(), Some(2));

    let single = run(&["calibrate", "--frames", s(&frames), "--board", s(&dir.path().join("board.json")), "--out", s(&out)]);
    assert_eq!(single.status.code(), Some(1));
    assert!(!out.exists());

    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let none = run(&["calibrate", "--frames", s(&empty), "--board", s(&dir.path().join("board.json")), "--out", s(&out)]);
    assert_eq!(none.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&none.stderr).contains("no .pgm frames"));
}

#[test]
fn unknown_arguments_exit_with_usage_code() {
    assert_eq!(run(&["track", "--bogus"]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

fn short_scenario(dir: &Path, duration_sec: f64, pixel_sigma: f64) -> PathBuf {
    let mut sc = Scenario::default();
    sc.profile = SwayProfile {
        duration_sec,
        ..SwayProfile::default()
    };
    for t in &mut sc.targets {
        t.profile = t.profile.map(|p| SwayProfile { duration_sec, ..p });
    }
    sc.noise.pixel_sigma = pixel_sigma;
    sc.noise.seed = 11;
    let path = dir.join("scenario.json");
    std::fs::write(&path, serde_json::to_string(&sc).unwrap()).unwrap();
    path
}

fn agreement(a: &Path, b: &Path, out: &Path, segment: &str) -> Value {
    let o = run(&["agree", "--a", s(a), "--b", s(b), "--out", s(out), "--segment", segment]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap()
}

#[test]
fn simulate_track_agree_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let scenario = short_scenario(d, 10.0, 0.2);
    assert!(run(&["simulate", "--scenario", s(&scenario), "--out", s(&d.join("sim"))]).status.success());
    let o = run(&["track", "--config", s(&d.join("sim/track_config.json")), "--out", s(&d.join("track"))]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("lower (lumbar): 300 frames"), "{stdout}");

    let summary: Value = serde_json::from_str(&std::fs::read_to_string(d.join("track/summary.json")).unwrap()).unwrap();
    assert_eq!(summary.as_array().unwrap().len(), 2);
    assert!(d.join("track/pose_upper.csv").exists() && d.join("track/pose_lower.csv").exists());

    for seg in ["upper", "lower"] {
        let r = agreement(&d.join("sim/truth_trajectory.csv"), &d.join("track/trajectory.csv"), &d.join("agree.json"), seg);
        assert!(r["r2"].as_f64().unwrap() > 0.99, "{seg}: {r}");
        assert!((r["slope"].as_f64().unwrap() - 1.0).abs() < 0.02, "{seg}: {r}");
    }
}

#[test]
fn rendered_frames_track_like_feature_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let scenario = short_scenario(d, 1.0, 0.0);
    let o = run(&["simulate", "--scenario", s(&scenario), "--out", s(&d.join("sim")), "--render-frames"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_dir(d.join("sim/frames")).unwrap().count(), 30);
    let o = run(&["track", "--config", s(&d.join("sim/track_config_frames.json")), "--out", s(&d.join("track"))]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = agreement(&d.join("sim/truth_trajectory.csv"), &d.join("track/trajectory.csv"), &d.join("agree.json"), "lower");
    let loa = r["loa"].as_array().unwrap();
    assert!(loa[0].as_f64().unwrap() > -0.1 && loa[1].as_f64().unwrap() < 0.1, "{r}");
}

#[test]
fn simulate_and_track_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let scenario = short_scenario(d, 3.0, 0.3);
    let mut outputs = Vec::new();
    for k in 0..2 {
        let sim = d.join(format!("sim{k}"));
        let track = d.join(format!("track{k}"));
        assert!(run(&["simulate", "--scenario", s(&scenario), "--out", s(&sim)]).status.success());
        assert!(run(&["--jobs", "2", "track", "--config", s(&sim.join("track_config.json")), "--out", s(&track)])
            .status
            .success());
        outputs.push((
            std::fs::read(sim.join("features_lower.csv")).unwrap(),
            std::fs::read(track.join("trajectory.csv")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);

    let reseeded = d.join("reseeded");
    assert!(run(&["simulate", "--scenario", s(&scenario), "--out", s(&reseeded), "--seed", "99"]).status.success());
    assert_ne!(std::fs::read(reseeded.join("features_lower.csv")).unwrap(), outputs[0].0);
}

fn sinusoid_trial(path: &Path, amplitude: f64) {
    let rate = 30.0;
    let samples = (0..1800)
        .map(|k| {
            let t = k as f64 / rate;
            Vector3::new(amplitude * (2.0 * std::f64::consts::PI * 0.3 * t).sin(), 0.0, 0.0)
        })
        .collect();
    let traj = SwayTrajectory::from_samples(rate, Segment::Lower, samples).unwrap();
    io::write_trajectories(path, &[&traj]).unwrap();
}

#[test]
fn analyze_path_lengths_and_effect_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (a, b) = (d.join("a"), d.join("b"));
    std::fs::create_dir_all(&a).unwrap();
    std::fs::create_dir_all(&b).unwrap();
    for (k, amp) in [10.0, 11.0, 12.0].iter().enumerate() {
        sinusoid_trial(&a.join(format!("p{k}.csv")), *amp);
        sinusoid_trial(&b.join(format!("p{k}.csv")), amp + 2.0);
    }
    std::fs::write(a.join("notes.csv"), "unrelated,header\n1,2\n").unwrap();

    let out = d.join("out");
    let o = run(&["analyze", "--traj", s(&a), "--compare", s(&b), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let tpl = io::read_tpl(out.join("tpl_p0.csv")).unwrap();
    let ap_early = tpl
        .iter()
        .find(|r| r.direction.to_string() == "AP" && r.bin == "early")
        .unwrap();
    assert!((ap_early.value_mm - 240.0).abs() < 2.4, "{}", ap_early.value_mm);
    assert!(out.join("compare_tpl_p2.csv").exists());

    let mut rdr = csv::Reader::from_path(out.join("cohens_d.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let row = rdr
        .records()
        .map(|r| r.unwrap())
        .find(|r| &r[col("direction")] == "AP" && &r[col("bin")] == "early")
        .unwrap();
    let d: f64 = row[col("d")].parse().unwrap();
    assert!(d > 0.0, "{d}");
}

#[test]
fn identical_trajectories_agree_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    sinusoid_trial(&path, 10.0);
    let r = agreement(&path, &path, &dir.path().join("r.json"), "lower");
    assert_eq!(r["bias_mm"].as_f64(), Some(0.0));
    assert_eq!(r["r2"].as_f64(), Some(1.0));
}
