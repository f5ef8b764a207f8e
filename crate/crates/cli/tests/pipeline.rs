use std::path::Path;
use std::process::{Command, Stdio};

use roadplane_cli::config::{ConfigFile, Overrides, RunConfig};
use roadplane_cli::error::Stage;
use roadplane_cli::pipeline::{analyze, calibrate_fit, run, validate};
use roadplane_cli::synth_out::write_synthetic;
use roadplane_core::calibration::ProfileDocument;
use roadplane_core::synth::SyntheticScene;

fn short_scene() -> SyntheticScene {
    let mut s = SyntheticScene::single_car();
    s.samples = 6;
    s
}

fn config(dir: &Path, overrides: Overrides) -> RunConfig {
    let file = ConfigFile::load(&dir.join("config.json")).unwrap();
    RunConfig::resolve(file, overrides, None).unwrap()
}

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_roadplane"));
    c.env_remove("ROADPLANE_OUT")
        .env("RUST_LOG", "off")
        .stdout(Stdio::null())
        .stderr(Stdio::null());
    c
}

#[test]
fn single_agent_gives_one_track_with_every_sample() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = short_scene();
    write_synthetic(&scene, tmp.path(), false).unwrap();
    let a = analyze(&config(tmp.path(), Overrides::default())).unwrap();
    assert_eq!(a.summary.tracks, 1);
    assert_eq!(a.summary.cuboids, scene.samples as usize);
    assert_eq!(a.summary.frames, scene.samples as usize);
    assert_eq!(a.summary.empty_samples, 0);
    assert!(a.summary.warnings.is_empty(), "{:?}", a.summary.warnings);
}

#[test]
fn run_writes_the_output_tree() {
    let tmp = tempfile::tempdir().unwrap();
    write_synthetic(&short_scene(), tmp.path(), true).unwrap();
    let cfg = config(tmp.path(), Overrides::default());
    let outcome = run(&cfg).unwrap();
    assert_eq!(outcome.exit_code, 0);
    let out = &cfg.out;
    for f in [
        "summary.json",
        "tracks.csv",
        "scene.json",
        "frame_map.csv",
        "bev_tracks.png",
        "bev_tracks.svg",
        "bev_preview.png",
        "grid_overlay.png",
        "scene/frame_0001.png",
        "triptych/frame_0006.png",
        "triptych/index.txt",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["tracks"], 1);
    assert_eq!(summary["settings"]["step"], 5);
}

#[test]
fn missing_calibration_fails_at_the_calibration_stage() {
    let tmp = tempfile::tempdir().unwrap();
    write_synthetic(&short_scene(), tmp.path(), false).unwrap();
    let gone = tmp.path().join("nowhere.json");
    let cfg = config(
        tmp.path(),
        Overrides {
            calibration: Some(gone.clone()),
            ..Default::default()
        },
    );
    let err = analyze(&cfg).unwrap_err();
    assert_eq!(err.stage, Stage::Calibration);
    assert!(err.message.contains(&gone.display().to_string()), "{}", err.message);
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn malformed_rows_fail_strict_and_are_counted_when_lenient() {
    let tmp = tempfile::tempdir().unwrap();
    write_synthetic(&short_scene(), tmp.path(), false).unwrap();
    let ann = tmp.path().join("annotations.txt");
    let mut text = std::fs::read_to_string(&ann).unwrap();
    text.push_str("6,1,not,a,row\n");
    std::fs::write(&ann, text).unwrap();

    let err = analyze(&config(tmp.path(), Overrides::default())).unwrap_err();
    assert_eq!(err.stage, Stage::Ingest);

    let cfg = config(
        tmp.path(),
        Overrides {
            lenient: true,
            ..Default::default()
        },
    );
    let outcome = run(&cfg).unwrap();
    assert_eq!(outcome.summary.dropped.skipped_rows, 1);
    assert_eq!(outcome.exit_code, 3);
}

#[test]
fn wrong_step_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    write_synthetic(&SyntheticScene::single_car(), tmp.path(), false).unwrap();
    let cfg = config(
        tmp.path(),
        Overrides {
            step: Some(2),
            ..Default::default()
        },
    );
    let a = analyze(&cfg).unwrap();
    assert!(a.summary.dropped.unmapped_observations > 0);
    assert!(a.summary.empty_samples > 0);
    assert_eq!(a.summary.warnings.len(), 1);
}

#[test]
fn calibrate_fit_and_validate_write_reports() {
    let tmp = tempfile::tempdir().unwrap();
    write_synthetic(&short_scene(), tmp.path(), true).unwrap();
    let cal = tmp.path().join("calibration.json");
    let mut doc = ProfileDocument::from_json(&std::fs::read_to_string(&cal).unwrap()).unwrap();
    doc.homography = None;
    std::fs::write(&cal, doc.to_json()).unwrap();

    let refit = tmp.path().join("refit.json");
    let report = calibrate_fit(&cal, &refit).unwrap();
    assert!(report.rms_active_m < 1e-9);
    let back = ProfileDocument::from_json(&std::fs::read_to_string(&refit).unwrap()).unwrap();
    assert!(back.homography.is_some());

    let out = tmp.path().join("validate");
    let v = validate(&refit, Some(&tmp.path().join("frames")), &out, 5.0, 5.0, 2.0).unwrap();
    assert!(v.sensitivity.unreachable() == 0);
    for f in ["sensitivity.json", "reprojection.json", "bev_preview.png", "grid_overlay.png"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
}

#[test]
fn binary_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let syn = tmp.path().join("syn");
    let status = bin()
        .args(["synth", "--no-frames", "--out"])
        .arg(&syn)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));

    let status = bin().args(["run", "--config"]).arg(syn.join("config.json")).status().unwrap();
    assert_eq!(status.code(), Some(0));
    assert!(syn.join("run/summary.json").is_file());

    // usage and configuration errors
    assert_eq!(bin().args(["run", "--bogus"]).status().unwrap().code(), Some(1));
    assert_eq!(bin().args(["run", "--annotations", "a.txt"]).status().unwrap().code(), Some(1));
    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, r#"{"unknown_key": 1}"#).unwrap();
    assert_eq!(bin().args(["run", "--config"]).arg(&bad).status().unwrap().code(), Some(1));

    // stage failure
    let out = bin()
        .args(["run", "--config"])
        .arg(syn.join("config.json"))
        .args(["--calibration"])
        .arg(tmp.path().join("missing.json"))
        .stderr(Stdio::piped())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("[calibration]"));

    // the output directory can come from the environment
    let env_out = tmp.path().join("from-env");
    let status = bin()
        .args(["run", "--annotations"])
        .arg(syn.join("annotations.txt"))
        .arg("--calibration")
        .arg(syn.join("calibration.json"))
        .args(["--step", "5"])
        .env("ROADPLANE_OUT", &env_out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert!(env_out.join("summary.json").is_file());
}
