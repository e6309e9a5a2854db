//! Heavier end-to-end flows on the bundled flight scenario: a full
//! design / simulate / verify pass through the binary, and feasibility
//! monotonicity in the uncertainty level.

mod common;

use common::*;

#[test]
fn relaxed_flight_design_simulate_verify() {
    let dir = TempDir::new("flight");
    let scenario = boeing_relaxed_path();
    let policy = dir.path().join("policy.json");
    let report = dir.path().join("report.json");
    let out = run(&[
        "design",
        scenario.to_str().unwrap(),
        "--out",
        policy.to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    // 1000 realizations: one data row per sample and step, altitude bounded
    // consistently with the mean-square margins.
    let csv = dir.path().join("sim.csv");
    let out = run(&[
        "simulate",
        scenario.to_str().unwrap(),
        policy.to_str().unwrap(),
        "--samples",
        "1000",
        "--seed",
        "1",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1 + 1000 * 20 + 2 * 20);
    // Altitude at the constrained steps stays consistent with the
    // mean-square margins (root-mean-square <= sqrt(800) ~ 28; a
    // 1000-sample maximum sits a few standard deviations out).
    let mut worst_alt: f64 = 0.0;
    for line in &lines[1..=1000 * 20] {
        let fields: Vec<&str> = line.split(',').collect();
        let t: usize = fields[1].parse().unwrap();
        if t == 9 || t == 19 {
            let alt: f64 = fields[2].parse().unwrap();
            worst_alt = worst_alt.max(alt.abs());
        }
    }
    assert!(worst_alt <= 150.0, "worst constrained-step altitude {worst_alt}");

    let out = run(&[
        "verify",
        scenario.to_str().unwrap(),
        policy.to_str().unwrap(),
        "--samples",
        "1000",
        "--seed",
        "2",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
}

#[test]
fn feasibility_is_monotone_in_rho() {
    // Feasible at the nominal level (shown elsewhere), so it must stay
    // feasible when the uncertainty level shrinks.
    let dir = TempDir::new("rho-mono");
    let scenario = boeing_relaxed_path();
    let policy = dir.path().join("policy.json");
    let out = run(&[
        "design",
        scenario.to_str().unwrap(),
        "--rho",
        "0.5",
        "--out",
        policy.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn solver_tolerance_env_is_validated() {
    let dir = TempDir::new("env");
    let scenario = write_scenario(dir.path(), "toy.json", &toy_scenario());
    let out = std::process::Command::new(bin())
        .args(["design", scenario.to_str().unwrap(), "--out"])
        .arg(dir.path().join("p.json"))
        .env("RCC_SOLVER_TOL", "not-a-number")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("RCC_SOLVER_TOL"));
    let out = std::process::Command::new(bin())
        .args(["design", scenario.to_str().unwrap(), "--out"])
        .arg(dir.path().join("p.json"))
        .env("RCC_SOLVER_TOL", "1e-7")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
}
