//! End-to-end runs of the binary: outputs, determinism and exit codes.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn wpcn(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wpcn")).args(args).current_dir(dir).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

#[test]
fn solve_prints_every_scheme() {
    let dir = tempfile::tempdir().unwrap();
    let o = wpcn(&["solve", "--out", "one.csv"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    for s in ["proposed_ab", "coop_no_ab", "independent"] {
        assert!(text.contains(s), "{text}");
    }
    let csv = fs::read_to_string(dir.path().join("one.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.starts_with("scheme,rbar,"));
}

#[test]
fn solve_accepts_distances_and_scheme_filter() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.cfg"), "# line placement\nd1 = 6\nd2 = 2.5\nbeta = 0.5\n").unwrap();
    let o = wpcn(&["solve", "--config", "c.cfg", "--scheme", "independent"], dir.path());
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("independent") && !text.contains("proposed_ab"));
}

#[test]
fn sweep_is_byte_deterministic_with_sidecars() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.cfg"), "experiment = d1_sweep\ngrid = 5, 6.5, 8\nrb_values = 30000\n").unwrap();
    for out in ["a.csv", "b.csv"] {
        let o = wpcn(&["sweep", "--config", "c.cfg", "--out", out, "--seed", "7"], dir.path());
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = fs::read(dir.path().join("a.csv")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b.csv")).unwrap());
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 1 + 3 * 3);
    let schema = fs::read_to_string(dir.path().join("a.csv.schema")).unwrap();
    assert!(schema.starts_with("schema_version = 1"));
    assert!(dir.path().join("a.csv.timing.csv").exists());
}

#[test]
fn region_writes_one_file_per_relay_distance() {
    let dir = tempfile::tempdir().unwrap();
    let o = wpcn(&["region", "--out", "region.csv", "--scheme", "proposed_ab,independent"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for d2 in ["3", "4", "5"] {
        assert!(dir.path().join(format!("region_d2_{d2}.csv")).exists());
    }
}

#[test]
fn ber_validation_runs() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.cfg"), "grid = 0.5\nsamples_per_bit = 5, 50\nnum_bits = 100000\nsignal_models = energy\n").unwrap();
    let o = wpcn(&["ber", "--config", "c.cfg", "--out", "ber.csv", "--seed", "3"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("ber.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&wpcn(&["frobnicate"], dir.path())), 1);
    assert_eq!(code(&wpcn(&["sweep"], dir.path())), 1);
    assert_eq!(code(&wpcn(&["solve", "--scheme", "nonsense"], dir.path())), 1);
    fs::write(dir.path().join("bad.cfg"), "unknown_key = 1\n").unwrap();
    assert_eq!(code(&wpcn(&["solve", "--config", "bad.cfg"], dir.path())), 1);
    fs::write(dir.path().join("grid.cfg"), "experiment = beta_sweep\ngrid = 0.5, 0.2\n").unwrap();
    assert_eq!(code(&wpcn(&["sweep", "--config", "grid.cfg"], dir.path())), 1);
}

#[test]
fn help_exits_0() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&wpcn(&["--help"], dir.path())), 0);
}

#[test]
fn non_convergence_exits_2_and_keeps_the_table() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.cfg"), "experiment = beta_sweep\ngrid = 0.2, 0.8\nmax_iter = 1\n").unwrap();
    let o = wpcn(&["sweep", "--config", "c.cfg", "--out", "s.csv"], dir.path());
    assert_eq!(code(&o), 2);
    let csv = fs::read_to_string(dir.path().join("s.csv")).unwrap();
    assert!(csv.contains("failed: no convergence"));
    assert!(csv.lines().any(|l| l.contains("independent") && l.ends_with(",ok")));
}

#[test]
fn unwritable_output_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let out = blocker.join("x.csv");
    assert_eq!(code(&wpcn(&["solve", "--out", out.to_str().unwrap()], dir.path())), 3);
    assert_eq!(code(&wpcn(&["solve", "--config", "missing.cfg"], dir.path())), 3);
}
