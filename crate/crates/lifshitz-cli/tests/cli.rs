//! End-to-end checks of the command-line front end: CSV contracts, exit
//! codes, and determinism on inexpensive scenarios.

use std::path::PathBuf;
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lifshitz"))
        .args(args)
        .output()
        .expect("binary should run")
}

fn run_csv(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "command {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("CSV output is UTF-8")
}

fn column(csv: &str, row: usize, col: usize) -> f64 {
    csv.lines()
        .nth(row + 1)
        .unwrap()
        .split(',')
        .nth(col)
        .unwrap()
        .parse()
        .unwrap()
}

#[test]
fn exact_conductor_matches_closed_form() {
    let path = fixture("conductor.json");
    let csv = run_csv(&["exact", "--scenario", path.to_str().unwrap()]);
    assert_eq!(csv.lines().next().unwrap(), "H,E_exact,est_error");
    let e = column(&csv, 0, 1);
    let target = -std::f64::consts::PI.powi(2) / 720.0;
    assert!(
        ((e - target) / target).abs() < 1e-3,
        "conductor energy {e} vs {target}"
    );
}

#[test]
fn exact_vacuum_is_zero() {
    let path = fixture("vacuum.json");
    let csv = run_csv(&["exact", "--scenario", path.to_str().unwrap()]);
    assert_eq!(column(&csv, 0, 1), 0.0);
}

#[test]
fn exact_tabulated_material_runs() {
    let path = fixture("tabulated.json");
    let csv = run_csv(&["exact", "--scenario", path.to_str().unwrap()]);
    let e = column(&csv, 0, 1);
    // The table approximates the reference dielectric; its energy must be
    // negative and in the same ballpark.
    assert!(e < 0.0 && e.abs() < 1e-3, "tabulated energy {e}");
}

#[test]
fn unknown_key_exits_2_with_path() {
    let path = fixture("bad_key.json");
    let out = run(&["exact", "--scenario", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("geometry.separation"),
        "stderr should name the offending path: {stderr}"
    );
}

#[test]
fn missing_scenario_flag_exits_2() {
    let out = run(&["exact"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn touching_surfaces_exit_3() {
    let path = fixture("rough_contact.json");
    let out = run(&["rough", "--scenario", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("contact"), "stderr: {stderr}");
}

#[test]
fn pws_ratio_recomputes_from_columns() {
    let path = fixture("planar.json");
    let csv = run_csv(&["pws", "--scenario", path.to_str().unwrap()]);
    assert_eq!(csv.lines().next().unwrap(), "H,E_pws,E_exact,ratio");
    for row in 0..2 {
        let line = csv.lines().nth(row + 1).unwrap();
        let cols: Vec<&str> = line.split(',').collect();
        let pws: f64 = cols[1].parse().unwrap();
        let exact: f64 = cols[2].parse().unwrap();
        // Recomputing the quotient of the printed columns and printing it at
        // the CSV precision must reproduce the ratio column byte for byte.
        assert_eq!(cols[3], format!("{:.11e}", pws / exact));
    }
}

#[test]
fn pws_conductor_ratio() {
    let path = fixture("conductor.json");
    let csv = run_csv(&["pws", "--scenario", path.to_str().unwrap()]);
    let ratio = column(&csv, 0, 3);
    let target = 621.0 / (8.0 * std::f64::consts::PI.powi(4));
    assert!((ratio - target).abs() < 1e-3, "ratio {ratio} vs {target}");
}

#[test]
fn rough_emits_eq8_only_for_flat_lower_surface() {
    let path = fixture("rough_sinusoid.json");
    let csv = run_csv(&["rough", "--scenario", path.to_str().unwrap()]);
    assert_eq!(
        csv.lines().next().unwrap(),
        "method,energy,est_error,max_slope_1,max_slope_2"
    );
    // flat16 is h1, so eq8 applies; all three methods present.
    let methods: Vec<&str> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(methods, ["eq6", "eq8", "pws"]);
    // Sinusoid map metadata records a nonzero maximum slope.
    assert!(column(&csv, 0, 4) > 0.0);
}

#[test]
fn rough_conductor_only_pws() {
    let path = fixture("rough_pws_conductor.json");
    let csv = run_csv(&["rough", "--scenario", path.to_str().unwrap()]);
    let methods: Vec<&str> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(methods, ["pws"]);
    let e = column(&csv, 0, 1);
    let target = -69.0 / (640.0 * std::f64::consts::PI.powi(2));
    assert!(
        ((e - target) / target).abs() < 5e-3,
        "pws conductor {e} vs {target}"
    );
}

#[test]
fn figure2_columns_and_tol_flag() {
    let path = fixture("figure2_small.json");
    let csv = run_csv(&[
        "figure2",
        "--scenario",
        path.to_str().unwrap(),
        "--tol",
        "1e-5",
    ]);
    assert_eq!(csv.lines().next().unwrap(), "H_over_lambda_p,ratio_2,ratio_CM");
    assert_eq!(csv.lines().count(), 4);
    for row in 0..3 {
        for col in 1..3 {
            let v = column(&csv, row, col);
            assert!(v.is_finite() && v > 0.0);
        }
    }
}

#[test]
fn outputs_use_lf_and_12_significant_digits() {
    let path = fixture("planar.json");
    let out = run(&["exact", "--scenario", path.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(!out.stdout.contains(&b'\r'), "no CR in output");
    let csv = String::from_utf8(out.stdout).unwrap();
    let first = csv.lines().nth(1).unwrap().split(',').nth(1).unwrap();
    // Mantissa: sign, leading digit, point, 11 fractional digits.
    let mantissa = first.split('e').next().unwrap();
    let digits = mantissa.chars().filter(|c| c.is_ascii_digit()).count();
    assert_eq!(digits, 12, "12 significant digits in {first}");
}

#[test]
fn exact_repeats_byte_identically_across_threads() {
    let path = fixture("planar.json");
    let a = run_csv(&["exact", "--scenario", path.to_str().unwrap(), "--threads", "1"]);
    let b = run_csv(&["exact", "--scenario", path.to_str().unwrap(), "--threads", "2"]);
    let c = run_csv(&["exact", "--scenario", path.to_str().unwrap(), "--threads", "2"]);
    assert_eq!(a, b);
    assert_eq!(b, c);
}
