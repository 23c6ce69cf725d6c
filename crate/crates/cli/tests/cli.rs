//! End-to-end checks of the `grm3d` binary: exit codes, error reporting,
//! and the synth -> refine -> decode -> eval pipeline on real directories.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn grm3d(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_grm3d")).args(args).output().expect("spawn grm3d")
}

/// Fresh per-test scratch directory under the cargo-managed tmp root.
fn scratch(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).expect("create scratch dir");
    dir
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

#[test]
fn help_prints_usage() {
    let output = grm3d(&["--help"]);
    assert_eq!(output.status.code(), Some(0));
    let text = String::from_utf8_lossy(&output.stdout);
    for word in ["synth", "refine", "decode", "eval", "roundtrip"] {
        assert!(text.contains(word), "help must mention the {word} subcommand");
    }
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let output = grm3d(&["synth", "--bogus"]);
    assert_eq!(output.status.code(), Some(2), "{}", stderr_of(&output));
}

#[test]
fn bad_threshold_is_a_usage_error() {
    let dir = scratch("cli_bad_threshold");
    let out = dir.join("decoded");
    let output = grm3d(&[
        "decode",
        "--maps",
        dir.to_str().unwrap(),
        "--threshold",
        "1.5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr_of(&output).contains("threshold"), "{}", stderr_of(&output));
}

#[test]
fn missing_input_exits_one_and_names_the_path() {
    let dir = scratch("cli_missing_input");
    let absent = dir.join("does_not_exist");
    let out = dir.join("decoded");
    let output = grm3d(&[
        "decode",
        "--maps",
        absent.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(1));
    let err = stderr_of(&output);
    assert!(err.contains("does_not_exist"), "stderr must name the missing path: {err}");
}

#[test]
fn synth_decode_eval_pipeline_gates_on_pck() {
    let dir = scratch("cli_pipeline");
    let maps = dir.join("maps");
    let decoded = dir.join("decoded");

    let output = grm3d(&[
        "synth",
        "--seed",
        "11",
        "--persons",
        "2",
        "--size",
        "128x128",
        "--out",
        maps.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(0), "{}", stderr_of(&output));

    let output = grm3d(&[
        "decode",
        "--maps",
        maps.to_str().unwrap(),
        "--out",
        decoded.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(0), "{}", stderr_of(&output));

    let poses = decoded.join("poses.txt");
    let scene = maps.join("scene.txt");
    let report = dir.join("report.txt");
    let output = grm3d(&[
        "eval",
        "--poses",
        poses.to_str().unwrap(),
        "--scene",
        scene.to_str().unwrap(),
        "--min-pck-rel",
        "100.0",
        "--out",
        report.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(0), "{}", stderr_of(&output));
    let text = fs::read_to_string(&report).expect("report file");
    assert!(text.contains("pck_rel 100.0"), "clean scenes must decode perfectly: {text}");

    // An unreachable gate turns the same evaluation into a failure.
    let output = grm3d(&[
        "eval",
        "--poses",
        poses.to_str().unwrap(),
        "--scene",
        scene.to_str().unwrap(),
        "--min-pck-rel",
        "100.1",
    ]);
    assert_eq!(output.status.code(), Some(1));
    assert!(stderr_of(&output).contains("below required"), "{}", stderr_of(&output));
}

#[test]
fn star_decoder_reports_center_failures_without_crashing() {
    let dir = scratch("cli_star_failures");
    let maps = dir.join("maps");
    let decoded = dir.join("decoded");

    let output = grm3d(&[
        "synth",
        "--seed",
        "21",
        "--persons",
        "2",
        "--suppress-centers",
        "--out",
        maps.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(0), "{}", stderr_of(&output));
    assert!(maps.join("corruption.txt").exists(), "suppression must be logged");

    let output = grm3d(&[
        "decode",
        "--maps",
        maps.to_str().unwrap(),
        "--graph",
        "star",
        "--out",
        decoded.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(0), "{}", stderr_of(&output));
    let report = fs::read_to_string(decoded.join("decode_report.txt")).expect("report");
    assert!(report.contains("failed 2"), "both persons must fail: {report}");
    assert!(report.contains("error"), "failures must carry their reason: {report}");
}

#[test]
fn identity_refinement_reproduces_the_map_stack() {
    let dir = scratch("cli_refine_identity");
    let maps = dir.join("maps");
    let refined = dir.join("refined");

    let output = grm3d(&[
        "synth",
        "--seed",
        "31",
        "--feature-channels",
        "2",
        "--out",
        maps.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(0), "{}", stderr_of(&output));

    let output = grm3d(&[
        "refine",
        "--maps",
        maps.to_str().unwrap(),
        "--weights",
        "identity",
        "--out",
        refined.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(0), "{}", stderr_of(&output));

    for name in ["heat.gmap", "scale.gmap", "depth.gmap", "offset3d.gmap", "feature.gmap"] {
        let a = fs::read(maps.join(name)).expect("input map");
        let b = fs::read(refined.join(name)).expect("refined map");
        assert_eq!(a, b, "{name} must be bit-identical under zero weights");
    }
}

#[test]
fn roundtrip_gate_failure_exits_one() {
    let dir = scratch("cli_roundtrip_gate");
    let out = dir.join("run");
    let output = grm3d(&[
        "roundtrip",
        "--seed",
        "41",
        "--persons",
        "2",
        "--suppress-centers",
        "--graph",
        "star",
        "--min-pck-rel",
        "99.9",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(1));
    assert!(stderr_of(&output).contains("below required"), "{}", stderr_of(&output));
    assert!(out.join("report.txt").exists(), "artifacts must still be written");
}
