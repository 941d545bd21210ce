//! Black-box tests of the `fffopt` binary: exit codes, exact output lines,
//! and the on-disk session workflow.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fffopt"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary should spawn")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn write_file(path: &Path, content: &str) {
    fs::write(path, content).unwrap();
}

const FLAT_SCAN: &str = "layer_index,position_mm,height_um\n\
    1,0.0,70.0\n\
    1,0.008,72.0\n";

#[test]
fn scan_ra_prints_per_layer_and_global_lines() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("part.csv");
    write_file(&path, FLAT_SCAN);
    let out = run(&["scan", "ra", path.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    assert_eq!(stdout_of(&out), "1,1.0\nglobal,1.0\n");
}

#[test]
fn scan_ra_two_layers() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("part.csv");
    // Layer 1 deviates by 1 um, layer 2 by 3 um; the global value averages them.
    write_file(
        &path,
        "layer_index,position_mm,height_um\n\
         1,0.0,70.0\n\
         1,0.008,72.0\n\
         2,0.0,68.0\n\
         2,0.008,74.0\n",
    );
    let out = run(&["scan", "ra", path.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(stdout_of(&out), "1,1.0\n2,3.0\nglobal,2.0\n");
}

#[test]
fn scan_ra_reports_the_offending_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    write_file(
        &path,
        "layer_index,position_mm,height_um\n\
         1,0.0,70.0\n\
         1,oops,72.0\n",
    );
    let out = run(&["scan", "ra", path.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = stderr_of(&out);
    assert!(err.contains("line 3"), "stderr was: {err}");
}

#[test]
fn scan_ra_missing_file_fails_with_path_in_message() {
    let out = run(&["scan", "ra", "/nonexistent/part.csv"]);
    assert!(!out.status.success());
    assert!(stderr_of(&out).contains("/nonexistent/part.csv"));
}

#[test]
fn scan_stats_on_identical_files_has_zero_spread() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    write_file(&a, FLAT_SCAN);
    write_file(&b, FLAT_SCAN);
    let out = run(&["scan", "stats", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    assert_eq!(
        stdout_of(&out),
        "minimum,1.0\nmaximum,1.0\nmean,1.0\nstd,0.0\ncv,0.0\n"
    );
}

#[test]
fn scan_stats_requires_at_least_two_files() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    write_file(&a, FLAT_SCAN);
    let out = run(&["scan", "stats", a.to_str().unwrap()]);
    assert!(!out.status.success());
    // Argument arity errors come from the parser, which exits with 2.
    assert_eq!(out.status.code(), Some(2));
}

fn trace_lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(str::to_owned)
        .collect()
}

#[test]
fn optimize_run_writes_one_row_per_loop_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let out = run(&[
        "optimize", "run",
        "--seed", "0",
        "--iters-phase1", "2",
        "--pi1", "0.4",
        "--iters-phase2", "1",
        "--pi2", "0.1",
        "--lambda", "10.0",
        "--out", trace.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    let lines = trace_lines(&trace);
    assert_eq!(lines.len(), 4);
    assert_eq!(
        lines[0],
        "iteration,vp,em,roughness_um,feasible,phase_pi,best_feasible_vp,modulus_gpa"
    );
    // Seven sweep prints precede the loop, so rows start at iteration 8.
    for (row, expected) in lines[1..].iter().zip(8..) {
        let first = row.split(',').next().unwrap();
        assert_eq!(first, expected.to_string());
    }
    let pis: Vec<&str> = lines[1..]
        .iter()
        .map(|l| l.split(',').nth(5).unwrap())
        .collect();
    assert_eq!(pis, ["0.4", "0.4", "0.1"]);
}

#[test]
fn optimize_run_allows_an_empty_second_phase() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let out = run(&[
        "optimize", "run",
        "--seed", "1",
        "--iters-phase1", "2",
        "--iters-phase2", "0",
        "--out", trace.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    assert_eq!(trace_lines(&trace).len(), 3);
}

#[test]
fn optimize_run_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first.csv");
    let second = dir.path().join("second.csv");
    for path in [&first, &second] {
        let out = run(&[
            "optimize", "run",
            "--seed", "7",
            "--iters-phase1", "3",
            "--iters-phase2", "2",
            "--out", path.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    }
    assert_eq!(fs::read(&first).unwrap(), fs::read(&second).unwrap());
}

#[test]
fn optimize_run_accepts_recorded_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let init = dir.path().join("init.csv");
    write_file(
        &init,
        "vp,em,roughness_um\n\
         100.0,0.9,5.2\n\
         400.0,1.2,60.0\n",
    );
    let trace = dir.path().join("trace.csv");
    let out = run(&[
        "optimize", "run",
        "--seed", "2",
        "--iters-phase1", "2",
        "--iters-phase2", "0",
        "--init", init.to_str().unwrap(),
        "--out", trace.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    let lines = trace_lines(&trace);
    assert_eq!(lines.len(), 3);
    // Two recorded points replace the seven-print sweep.
    assert!(lines[1].starts_with("3,"));
    // The 5.2 um point at 100 mm/s is feasible, so every row carries an
    // incumbent of at least that speed.
    for row in &lines[1..] {
        let best: f64 = row.split(',').nth(6).unwrap().parse().unwrap();
        assert!(best >= 100.0);
    }
}

#[test]
fn optimize_run_applies_config_overrides_and_validates_them() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");

    let good = dir.path().join("quiet.json");
    write_file(&good, "{\"noise_floor\": 0.0, \"noise_frac\": 0.0}\n");
    let out = run(&[
        "optimize", "run",
        "--seed", "3",
        "--iters-phase1", "1",
        "--iters-phase2", "0",
        "--config", good.to_str().unwrap(),
        "--out", trace.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));

    let bad = dir.path().join("bad.json");
    write_file(&bad, "{\"speed_ref\": -1.0}\n");
    let out = run(&[
        "optimize", "run",
        "--seed", "3",
        "--config", bad.to_str().unwrap(),
        "--out", trace.to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(stderr_of(&out).contains("speed_ref"));
}

/// A session file as an operator might author it by hand: no hash, no
/// pending suggestion, a small grid to keep the scan cheap.
fn handmade_state() -> String {
    let observations: Vec<String> = [
        (350.0, 0.7, 40.5, 16.4),
        (350.0, 0.8, 32.3, 17.8),
        (350.0, 0.9, 29.7, 18.3),
        (350.0, 1.0, 33.9, 17.7),
        (350.0, 1.1, 41.6, 16.3),
        (350.0, 1.3, 66.2, 11.5),
        (350.0, 1.5, 121.1, 8.0),
    ]
    .iter()
    .enumerate()
    .map(|(i, (vp, em, r, e))| {
        format!(
            "{{\"vp\":{vp},\"em\":{em},\"roughness_um\":{r},\"modulus_gpa\":{e},\
             \"iteration\":{},\"phase_pi\":0.4}}",
            i + 1
        )
    })
    .collect();
    format!(
        "{{\"bounds\":{{\"vp_min\":10.0,\"vp_max\":500.0,\"em_min\":0.5,\"em_max\":1.5}},\
         \"lambda_um\":10.0,\"pi\":0.4,\"grid_resolution\":21,\"epsilon_speed\":9.8,\
         \"seed\":0,\"observations\":[{}]}}\n",
        observations.join(",")
    )
}

#[test]
fn suggest_and_record_complete_a_hardware_cycle() {
    let dir = tempfile::tempdir().unwrap();
    let state = dir.path().join("session.json");
    write_file(&state, &handmade_state());

    // First suggestion: computed, persisted as pending, printed as "vp,em".
    let out = run(&["optimize", "suggest", "--state", state.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    let suggestion = stdout_of(&out);
    let parts: Vec<&str> = suggestion.trim().split(',').collect();
    assert_eq!(parts.len(), 2);
    let vp: f64 = parts[0].parse().unwrap();
    let em: f64 = parts[1].parse().unwrap();
    assert!((10.0..=500.0).contains(&vp));
    assert!((0.5..=1.5).contains(&em));
    let saved = fs::read(&state).unwrap();
    assert!(String::from_utf8_lossy(&saved).contains("pending"));

    // Asking again without recording must repeat the answer verbatim and
    // leave the file untouched.
    let again = run(&["optimize", "suggest", "--state", state.to_str().unwrap()]);
    assert!(again.status.success());
    assert_eq!(stdout_of(&again), suggestion);
    assert_eq!(fs::read(&state).unwrap(), saved);

    // Record the measurement against the pending point.
    let out = run(&[
        "optimize", "record",
        "--state", state.to_str().unwrap(),
        "--roughness", "6.0",
        "--modulus", "20.4",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    let line = stdout_of(&out);
    assert!(
        line.starts_with("best_feasible,"),
        "unexpected output: {line}"
    );
    // 6.0 um is under the 10 um limit, so the recorded point itself becomes
    // the incumbent.
    assert_eq!(line.trim(), format!("best_feasible,{},{},6.0", parts[0], parts[1]));
    let after = fs::read_to_string(&state).unwrap();
    assert!(!after.contains("pending"));
    assert!(after.contains("\"iteration\": 8"));
}

#[test]
fn record_without_pending_needs_explicit_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let state = dir.path().join("session.json");
    write_file(&state, &handmade_state());

    let out = run(&[
        "optimize", "record",
        "--state", state.to_str().unwrap(),
        "--roughness", "6.0",
    ]);
    assert!(!out.status.success());
    assert!(stderr_of(&out).contains("pending"), "stderr: {}", stderr_of(&out));

    // Supplying only one of the pair is a usage error caught by the parser.
    let out = run(&[
        "optimize", "record",
        "--state", state.to_str().unwrap(),
        "--roughness", "6.0",
        "--vp", "120.0",
    ]);
    assert_eq!(out.status.code(), Some(2));

    // The explicit pair works and reports the updated incumbent.
    let out = run(&[
        "optimize", "record",
        "--state", state.to_str().unwrap(),
        "--roughness", "6.0",
        "--vp", "120.0",
        "--em", "0.9",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    assert_eq!(stdout_of(&out).trim(), "best_feasible,120.0,0.9,6.0");
}

#[test]
fn record_reports_none_when_nothing_is_feasible() {
    let dir = tempfile::tempdir().unwrap();
    let state = dir.path().join("session.json");
    write_file(&state, &handmade_state());
    let out = run(&[
        "optimize", "record",
        "--state", state.to_str().unwrap(),
        "--roughness", "55.0",
        "--vp", "450.0",
        "--em", "0.9",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    assert_eq!(stdout_of(&out).trim(), "best_feasible,none");
}

#[test]
fn tampered_session_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let state = dir.path().join("session.json");
    write_file(&state, &handmade_state());
    // Writing once stamps the integrity hash.
    let out = run(&["optimize", "suggest", "--state", state.to_str().unwrap()]);
    assert!(out.status.success());

    let stamped = fs::read_to_string(&state).unwrap();
    assert!(stamped.contains("state_hash"));
    let tampered = stamped.replace("\"lambda_um\": 10.0", "\"lambda_um\": 50.0");
    assert_ne!(stamped, tampered);
    write_file(&state, &tampered);

    let out = run(&["optimize", "suggest", "--state", state.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr_of(&out).contains("hash"), "stderr: {}", stderr_of(&out));

    // Reformatting without changing values must stay accepted: the hash
    // covers content, not layout.
    let reparsed: serde_json::Value = serde_json::from_str(&stamped).unwrap();
    write_file(&state, &serde_json::to_string(&reparsed).unwrap());
    let out = run(&["optimize", "suggest", "--state", state.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
}

#[test]
fn report_summarizes_a_generated_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let out = run(&[
        "optimize", "run",
        "--seed", "0",
        "--iters-phase1", "3",
        "--iters-phase2", "2",
        "--out", trace.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    let out = run(&["report", "--trace", trace.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    let text = stdout_of(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("phase_pi,0.4,feasible_fraction,"));
    assert!(lines[1].starts_with("phase_pi,0.1,feasible_fraction,"));
    assert!(lines.iter().any(|l| l.starts_with("best_feasible,")));
    assert!(lines.iter().any(|l| l.starts_with("speed_factor,")));
    assert!(lines.iter().any(|l| l.starts_with("mean_modulus_feasible,")));
    assert!(lines.iter().any(|l| l.starts_with("mean_modulus_infeasible,")));
}

#[test]
fn report_on_a_single_feasible_row() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    write_file(
        &trace,
        "iteration,vp,em,roughness_um,feasible,phase_pi,best_feasible_vp,modulus_gpa\n\
         8,35.0,0.9,4.7,true,0.4,35.0,20.5\n",
    );
    let out = run(&["report", "--trace", trace.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    assert_eq!(
        stdout_of(&out),
        "phase_pi,0.4,feasible_fraction,1.0\n\
         best_feasible,35.0,0.9,4.7\n\
         speed_factor,1.0\n\
         mean_modulus_feasible,20.5\n\
         mean_modulus_infeasible,none\n"
    );
}

#[test]
fn report_rejects_an_empty_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    write_file(
        &trace,
        "iteration,vp,em,roughness_um,feasible,phase_pi,best_feasible_vp,modulus_gpa\n",
    );
    let out = run(&["report", "--trace", trace.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr_of(&out).contains("no data rows"));
}
