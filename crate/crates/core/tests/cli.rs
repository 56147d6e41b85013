use std::path::Path;
use std::process::{Command, Output};

fn handtrack(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_handtrack")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = handtrack(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A 3-frame sequence and a small-budget config.
fn fixture(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let seq = dir.join("seq");
    ok(&["generate", "--scenario", "single-hand", "--frames", "3", "--seed", "4", "--out", s(&seq)]);
    let config = dir.join("config.json");
    std::fs::write(&config, r#"{"particles": 6, "generations": 4}"#).unwrap();
    (seq, config)
}

#[test]
fn generate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (seq, _) = fixture(dir.path());
    let again = dir.path().join("again");
    ok(&["generate", "--scenario", "single-hand", "--frames", "3", "--seed", "4", "--out", s(&again)]);
    for name in ["L_000000.png", "R_000002.png", "gt.csv", "calib.json", "scene.json", "motion.json"] {
        assert_eq!(read(&seq.join(name)), read(&again.join(name)), "{name}");
    }
    let gt = String::from_utf8(read(&seq.join("gt.csv"))).unwrap();
    assert!(gt.starts_with("frame,p0,"));
    assert_eq!(gt.lines().count(), 4);
}

#[test]
fn track_is_byte_identical_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (seq, config) = fixture(dir.path());
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        ok(&["track", "--seq", s(&seq), "--config", s(&config), "--seed", seed, "--out", s(&out)]);
        out
    };
    let (a, b, c) = (run("a", "7"), run("b", "7"), run("c", "8"));
    for name in ["trajectory.csv", "scores.csv", "errors.csv", "success.csv"] {
        assert_eq!(read(&a.join(name)), read(&b.join(name)), "{name}");
    }
    assert_ne!(read(&a.join("trajectory.csv")), read(&c.join("trajectory.csv")));
    let traj = String::from_utf8(read(&a.join("trajectory.csv"))).unwrap();
    assert_eq!(traj.lines().count(), 4);

    let multi = dir.path().join("multi");
    ok(&["track", "--seq", s(&seq), "--config", s(&config), "--seed", "7", "--runs", "2", "--out", s(&multi)]);
    assert_eq!(read(&multi.join("run_00/trajectory.csv")), read(&a.join("trajectory.csv")));
    assert_eq!(read(&multi.join("run_01/trajectory.csv")), read(&c.join("trajectory.csv")));
    let runs = String::from_utf8(read(&multi.join("runs.csv"))).unwrap();
    assert!(runs.starts_with("run,seed,frames,lost_at,mean_mm\n0,7,3,,"));
    assert!(String::from_utf8(read(&multi.join("summary.csv"))).unwrap().starts_with("runs,mean_mm,std_mm\n2,"));

    let eval_dir = dir.path().join("eval");
    let summary = ok(&["eval", "--trajectory", s(&a.join("trajectory.csv")), "--seq", s(&seq), "--out", s(&eval_dir)]);
    assert!(summary.starts_with("frames,mean_mm\n3,"));
    assert_eq!(read(&eval_dir.join("errors.csv")), read(&a.join("errors.csv")));
}

#[test]
fn sweep_and_render_debug() {
    let dir = tempfile::tempdir().unwrap();
    let (seq, config) = fixture(dir.path());
    let args = ["sweep", "--seq", s(&seq), "--config", s(&config), "--param", "beta", "--values", "50,200", "--runs", "2"];
    let table = ok(&args);
    assert_eq!(table, ok(&args));
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "beta,runs,mean_mm,std_mm,lost");
    assert!(lines[1].starts_with("50,2,") && lines[2].starts_with("200,2,"));

    let out = dir.path().join("debug");
    let stdout = ok(&["render-debug", "--seq", s(&seq), "--frame", "1", "--out", s(&out)]);
    assert!(stdout.starts_with("frame,image,score,correspondences\n1,"));
    for name in ["depth_left.pgm", "depth_right.pgm", "cmap_left.pgm", "cmap_right.pgm"] {
        assert!(read(&out.join(name)).starts_with(b"P5"), "{name}");
    }
    let corrs = String::from_utf8(read(&out.join("correspondences.csv"))).unwrap();
    assert!(corrs.lines().count() > 100);
}

#[test]
fn errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing");
    let out = handtrack(&["track", "--seq", s(&missing), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("calib.json"));
    assert_eq!(handtrack(&["track"]).status.code(), Some(1));
    assert_eq!(handtrack(&["sweep", "--seq", "x", "--param", "gamma", "--values", "1"]).status.code(), Some(1));
    assert_eq!(handtrack(&["--help"]).status.code(), Some(0));
}
