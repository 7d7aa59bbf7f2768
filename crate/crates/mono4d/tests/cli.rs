//! End-to-end runs of the `mono4d` binary on synthetic scenes.
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mono4d::formats::{json, pfm};
use mono4d::manifest::{prediction, Manifest, MANIFEST_FILE};
use mono4d_core::loss::{LossReport, LossWeights};

fn mono4d(args: &[&str], envs: &[(&str, &str)]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mono4d")).args(args).envs(envs.iter().copied()).output().expect("binary runs")
}

fn run_ok(args: &[&str]) -> Output {
    let out = mono4d(args, &[]);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn synth(dir: &Path, preset: &str, frames: usize) -> PathBuf {
    let scene = dir.join(format!("{preset}-{frames}"));
    run_ok(&[
        "synth",
        "--preset",
        preset,
        "--frames",
        &frames.to_string(),
        "--seed",
        "1",
        "--out",
        scene.to_str().unwrap(),
    ]);
    scene
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_reconstruct_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = synth(tmp.path(), "default", 12);
    let pred = tmp.path().join("pred");
    run_ok(&["reconstruct", s(&scene), "--out", s(&pred)]);
    for t in 0..12 {
        assert!(pred.join(format!("frame_{t:05}.ply")).is_file());
    }
    let report: serde_json::Value = serde_json::from_slice(&run_ok(&["eval-pcd", s(&pred), s(&scene)]).stdout).unwrap();
    let cd = report["cd_mm"].as_f64().unwrap();
    assert!(cd < 2.0, "{report}");
    assert!(report["ade_mm"].is_null());
    let flow: serde_json::Value = serde_json::from_slice(&run_ok(&["eval-flow", s(&pred), s(&scene)]).stdout).unwrap();
    assert!(flow["ade_mm"].as_f64().unwrap() < 5.0, "{flow}");
    let first: serde_json::Value =
        serde_json::from_slice(&run_ok(&["eval-pcd", s(&pred), s(&scene), "--align", "first-frame"]).stdout).unwrap();
    assert!(first["cd_mm"].as_f64().unwrap() < 5.0);

    let run: serde_json::Value = serde_json::from_slice(&std::fs::read(pred.join(prediction::RUN)).unwrap()).unwrap();
    assert_eq!(run["complete"], true);
    assert_eq!(run["frames_emitted"], 12);
}

#[test]
fn outputs_are_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = synth(tmp.path(), "default", 5);
    let again = tmp.path().join("again");
    run_ok(&["synth", "--preset", "default", "--frames", "5", "--seed", "1", "--out", s(&again)]);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_ok(&["reconstruct", s(&scene), "--out", s(&a)]);
    run_ok(&["reconstruct", s(&again), "--out", s(&b)]);
    for name in ["frame_00004.ply", "depth/depth_00003.pfm", "poses.json", "losses.json", "intrinsics.json", "run.json"]
    {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name}");
    }
    for name in ["flow/flow_00002_00003.u.pfm", "tracks.json", "masks/dynamic_00001.pgm"] {
        assert_eq!(std::fs::read(scene.join(name)).unwrap(), std::fs::read(again.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn overlap_not_below_window_is_a_usage_error_before_io() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let out = mono4d(
        &["reconstruct", "/nonexistent/manifest.json", "--out", s(&out_dir), "--window", "3", "--overlap", "3"],
        &[],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).starts_with("error[usage]: "), "{}", stderr(&out));
    assert!(!out_dir.exists());
}

#[test]
fn clap_errors_use_the_usage_category() {
    let out = mono4d(&["reconstruct"], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).starts_with("error[usage]: "));
    let out = mono4d(&["synth", "--out", "x", "--preset", "nope"], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(mono4d(&["--help"], &[]).status.success());
}

#[test]
fn mismatched_frame_counts_name_both() {
    let tmp = tempfile::tempdir().unwrap();
    let short = synth(tmp.path(), "static", 4);
    let long = synth(tmp.path(), "static", 5);
    let pred = tmp.path().join("pred");
    run_ok(&["reconstruct", s(&short), "--out", s(&pred)]);
    let out = mono4d(&["eval-pcd", s(&pred), s(&long)], &[]);
    assert_eq!(out.status.code(), Some(3));
    let err = stderr(&out);
    assert!(err.starts_with("error[validation]:") && err.contains("4 frames") && err.contains("has 5"), "{err}");
}

#[test]
fn broken_manifests_list_every_problem() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = synth(tmp.path(), "static", 4);
    std::fs::remove_file(scene.join("depth/depth_00002.pfm")).unwrap();
    let bytes = std::fs::read(scene.join("flow/flow_00000_00001.u.pfm")).unwrap();
    std::fs::write(scene.join("flow/flow_00000_00001.u.pfm"), &bytes[..bytes.len() - 7]).unwrap();
    std::fs::write(scene.join("masks/dynamic_00003.pgm"), b"P5\n3 3\n255\n\0\0\0\0\0\0\0\0\0").unwrap();
    let out = mono4d(&["losses", s(&scene)], &[]);
    assert_eq!(out.status.code(), Some(3));
    let err = stderr(&out);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.contains("depth_00002.pfm"), "{err}");
    assert!(err.contains(&format!("byte {}", bytes.len() - 7)) && err.contains("truncated"), "{err}");
    assert!(err.contains("3x3"), "{err}");
}

#[test]
fn unknown_pose_conventions_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = synth(tmp.path(), "static", 4);
    let path = scene.join("gt/poses.json");
    let text = std::fs::read_to_string(&path).unwrap().replace("camera_to_world", "world_to_camera");
    std::fs::write(&path, text).unwrap();
    let err = Manifest::open(&scene).unwrap_err().to_string();
    assert!(err.contains("/convention") && err.contains("world_to_camera"), "{err}");
}

#[test]
fn losses_follow_the_weighting() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = synth(tmp.path(), "default", 4);
    let report: LossReport = serde_json::from_slice(&run_ok(&["losses", s(&scene)]).stdout).unwrap();
    assert!(
        (report.total - report.weighted_total(&LossWeights::default())).abs() <= 1e-12 * report.total.abs().max(1.0)
    );
    assert!(report.counts.flow > 0 && report.counts.track > 0 && report.counts.shape > 0);
}

#[test]
fn failed_windows_keep_earlier_frames() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = synth(tmp.path(), "static", 8);
    // The 5→6 flow lies only in the second window; make it entirely missing.
    let nan = mono4d_core::Grid::filled(128, 96, f32::NAN);
    pfm::write(&scene.join("flow/flow_00005_00006.u.pfm"), &nan).unwrap();
    pfm::write(&scene.join("flow/flow_00005_00006.v.pfm"), &nan).unwrap();
    let pred = tmp.path().join("pred");
    let out = mono4d(&["reconstruct", s(&scene), "--out", s(&pred)], &[]);
    assert_eq!(out.status.code(), Some(6), "{}", stderr(&out));
    assert!(stderr(&out).contains("window 1"), "{}", stderr(&out));
    let run: serde_json::Value = serde_json::from_slice(&std::fs::read(pred.join(prediction::RUN)).unwrap()).unwrap();
    assert_eq!(run["complete"], false);
    assert_eq!(run["frames_emitted"], 4);
    assert_eq!(json::read_poses(&pred.join(prediction::POSES)).unwrap().len(), 4);
    assert!(pred.join("frame_00003.ply").is_file() && !pred.join("frame_00004.ply").exists());
}

#[test]
fn thread_count_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = synth(tmp.path(), "static", 4);
    let out = mono4d(&["losses", s(&scene)], &[("MONO4D_THREADS", "many")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("MONO4D_THREADS"));
    let one = mono4d(&["losses", s(&scene)], &[("MONO4D_THREADS", "1")]);
    let auto = mono4d(&["losses", s(&scene)], &[("MONO4D_THREADS", "0")]);
    assert!(one.status.success() && auto.status.success());
    assert_eq!(one.stdout, auto.stdout);
}

#[test]
fn refinement_writes_its_trace() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = synth(tmp.path(), "static", 5);
    let pred = tmp.path().join("pred");
    run_ok(&[
        "reconstruct",
        s(&scene),
        "--out",
        s(&pred),
        "--refine",
        "--refine-iters",
        "3",
        "--ply-layout",
        "merged",
        "--color-by",
        "height",
    ]);
    let trace: Vec<serde_json::Value> =
        serde_json::from_slice(&std::fs::read(pred.join("refine_trace.json")).unwrap()).unwrap();
    assert!(!trace.is_empty() && trace.len() <= 4);
    let totals: Vec<f64> = trace.iter().map(|e| e["report"]["total"].as_f64().unwrap()).collect();
    assert!(totals.windows(2).all(|w| w[1] <= w[0]));
    assert!(pred.join("merged.ply").is_file() && !pred.join("frame_00000.ply").exists());
    let run: serde_json::Value = serde_json::from_slice(&std::fs::read(pred.join(prediction::RUN)).unwrap()).unwrap();
    assert_eq!(run["refined"], true);
}

#[test]
fn manifest_file_path_or_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = synth(tmp.path(), "static", 4);
    let by_dir = Manifest::open(&scene).unwrap();
    let by_file = Manifest::open(&scene.join(MANIFEST_FILE)).unwrap();
    assert_eq!(by_dir.record(), by_file.record());
}
