//! End-to-end runs of the `indiff` binary.

use std::path::PathBuf;
use std::process::{Command, Output};

fn indiff(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_indiff")).args(args).output().expect("binary runs")
}

fn scratch(name: &str, contents: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("indiff-cli-test-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, contents).unwrap();
    path
}

fn config(replacements: &[(&str, &str)]) -> String {
    let mut text = indiff_cli::DEFAULT_CONFIG.to_string();
    for (from, to) in replacements {
        assert!(text.contains(from), "{from}");
        text = text.replace(from, to);
    }
    text
}

#[test]
fn figure_to_stdout() {
    let out = indiff(&["figure"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("# command = figure\n# config_hash = "));
    assert!(text.contains("\nA,indifference_limit\n"));
    assert!(text.contains("\n1,0.697796557\n"));
}

#[test]
fn out_flag_writes_file_and_quiet_silences() {
    let out_path = std::env::temp_dir().join(format!("indiff-figure-{}.csv", std::process::id()));
    let out = indiff(&["figure", "--out", out_path.to_str().unwrap(), "--quiet"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty() && out.stderr.is_empty());
    let written = std::fs::read_to_string(&out_path).unwrap();
    assert_eq!(written.lines().filter(|l| !l.starts_with('#')).count(), 7);
    std::fs::remove_file(out_path).unwrap();
}

#[test]
fn seed_flag_changes_only_the_hash_for_deterministic_commands() {
    let a = String::from_utf8(indiff(&["figure", "--seed", "1"]).stdout).unwrap();
    let b = String::from_utf8(indiff(&["figure", "--seed", "2"]).stdout).unwrap();
    assert_ne!(a, b);
    let strip = |s: &str| s.lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n");
    assert_eq!(strip(&a), strip(&b));
}

#[test]
fn non_spd_sigma_exits_1() {
    let text = config(&[
        ("model.dim = 1", "model.dim = 2"),
        ("model.s0 = 8", "model.s0 = 8, 8"),
        ("model.mu = 0", "model.mu = 0, 0"),
        ("model.sigma = 1", "model.sigma = 1, 2, 2, 1"),
        ("payoff.a = 1", "payoff.a = 1, 1"),
        ("impact.phi0 = 0", "impact.phi0 = 0, 0"),
    ]);
    let path = scratch("non_spd.cfg", &text);
    let out = indiff(&["check", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not positive definite"));
}

#[test]
fn unknown_key_exits_1_with_line() {
    let path = scratch("unknown.cfg", &format!("{}model.colour = red\n", indiff_cli::DEFAULT_CONFIG));
    let out = indiff(&["price", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 15: unknown key 'model.colour'"));
}

#[test]
fn overflow_exits_2() {
    let text = config(&[
        ("model.mu = 0", "model.mu = 5"),
        ("impact.a_risk = 0.1, 0.25, 0.5, 1, 2, 4", "impact.a_risk = 100"),
        ("impact.lambda = 0.4, 0.2, 0.1, 0.05", "impact.lambda = 0.0001"),
        ("numerics.n_paths = 100000", "numerics.n_paths = 50"),
        ("numerics.n_steps = auto", "numerics.n_steps = 10"),
    ]);
    let path = scratch("overflow.cfg", &text);
    let out = indiff(&["hedge", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("overflow guard"));
}

#[test]
fn check_passes_on_default_setup_and_warns_below_floor() {
    let text = config(&[
        ("impact.a_risk = 0.1, 0.25, 0.5, 1, 2, 4", "impact.a_risk = 1"),
        ("impact.lambda = 0.4, 0.2, 0.1, 0.05", "impact.lambda = 0.2, 0.01"),
    ]);
    let path = scratch("floor.cfg", &text);
    let out = indiff(&["check", "--config", path.to_str().unwrap(), "--paths", "500"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    assert!(stdout.contains("# warning = lambda=0.01 is below the Monte Carlo floor"));
    assert!(String::from_utf8_lossy(&out.stderr).contains("below"));
    assert!(!stdout.contains(",fail,"));
}

#[test]
fn threads_flag_does_not_change_output() {
    let text = config(&[
        ("impact.a_risk = 0.1, 0.25, 0.5, 1, 2, 4", "impact.a_risk = 1"),
        ("impact.lambda = 0.4, 0.2, 0.1, 0.05", "impact.lambda = 0.3"),
        ("numerics.n_paths = 100000", "numerics.n_paths = 300"),
    ]);
    let path = scratch("threads.cfg", &text);
    let one = indiff(&["converge", "--config", path.to_str().unwrap(), "--threads", "1"]);
    let four = indiff(&["converge", "--config", path.to_str().unwrap(), "--threads", "4"]);
    assert_eq!(one.status.code(), Some(0));
    assert_eq!(one.stdout, four.stdout);
    assert!(String::from_utf8_lossy(&one.stdout).contains("# n_steps = 1000"));
}
