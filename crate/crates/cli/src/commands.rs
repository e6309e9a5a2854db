//! Command implementations shared by the binary and the integration tests.

use std::fs;
use std::path::Path;

use nalgebra::DVector;

use rcc_core::compiler::{self, SolverSummary};
use rcc_core::conic::{self, SolveSettings, SolveStatus};
use rcc_core::policy::{simulate, PobPolicy, PolicyFile};
use rcc_core::scenario::{scenario_hash, Scenario};
use rcc_core::system::{build_trajectory_maps, ChiLayout, LinearSystem};
use rcc_core::uncertainty::SampleStrategy;
use rcc_core::verify::{noise_sample, tightness_harness, verify_policy, HarnessDims};

use crate::csvout;

pub type CmdResult = Result<u8, String>;

fn solver_settings() -> Result<SolveSettings, String> {
    let mut settings = SolveSettings::default();
    if let Ok(v) = std::env::var("RCC_SOLVER_TOL") {
        settings.tol = v
            .parse::<f64>()
            .map_err(|_| format!("RCC_SOLVER_TOL: not a number: {v:?}"))?;
        if settings.tol.is_nan() || settings.tol <= 0.0 {
            return Err("RCC_SOLVER_TOL must be positive".into());
        }
    }
    Ok(settings)
}

struct LoadedScenario {
    scenario: Scenario,
    hash: String,
}

fn load_scenario(path: &Path, rho: Option<f64>) -> Result<LoadedScenario, String> {
    let bytes =
        fs::read(path).map_err(|e| format!("reading scenario {}: {e}", path.display()))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| format!("scenario {} is not UTF-8", path.display()))?;
    let scenario = Scenario::from_json(&text).map_err(|e| e.to_string())?;
    Ok(LoadedScenario {
        scenario,
        hash: scenario_hash(&bytes, rho),
    })
}

fn load_policy(
    path: &Path,
    expected_hash: &str,
    force: bool,
) -> Result<(PobPolicy, ChiLayout), String> {
    let text =
        fs::read_to_string(path).map_err(|e| format!("reading policy {}: {e}", path.display()))?;
    let file: PolicyFile =
        serde_json::from_str(&text).map_err(|e| format!("policy parse: {e}"))?;
    if file.scenario_hash != expected_hash && !force {
        return Err(format!(
            "policy was designed for scenario hash {} but this scenario hashes to {} \
             (pass --force to override)",
            file.scenario_hash, expected_hash
        ));
    }
    file.to_policy().map_err(|e| e.to_string())
}

fn check_policy_dims(sys: &LinearSystem, layout: &ChiLayout) -> Result<(), String> {
    let d = sys.dims();
    if layout.horizon != d.horizon || layout.n_u != d.n_u || layout.n_y != d.n_y {
        return Err(format!(
            "policy shaped for horizon {} with {}x{} gains, scenario needs {} with {}x{}",
            layout.horizon, layout.n_u, layout.n_y, d.horizon, d.n_u, d.n_y
        ));
    }
    Ok(())
}

pub fn cmd_design(
    scenario_path: &Path,
    rho: Option<f64>,
    out: &Path,
    report_path: Option<&Path>,
    dump_path: Option<&Path>,
) -> CmdResult {
    let loaded = load_scenario(scenario_path, rho)?;
    let (sys, set, specs, objective) =
        loaded.scenario.to_modules(rho).map_err(|e| e.to_string())?;
    let maps = build_trajectory_maps(&sys);
    let settings = solver_settings()?;

    let (feasible, report, policy) = match objective {
        None => {
            let outcome = compiler::design(&specs, &maps, sys.pi(), &set, &settings)
                .map_err(|e| e.to_string())?;
            if let Some(dump) = dump_path {
                let assembled = compiler::assemble(&specs, &maps, sys.pi(), &set, None)
                    .map_err(|e| e.to_string())?;
                fs::write(dump, assembled.program.dump_text())
                    .map_err(|e| format!("writing program dump: {e}"))?;
            }
            (outcome.feasible, outcome.report, outcome.policy)
        }
        Some(obj) => {
            // Optimization mode: minimize the configured right-hand sides.
            let assembled = compiler::assemble(&specs, &maps, sys.pi(), &set, Some(&obj))
                .map_err(|e| e.to_string())?;
            if let Some(dump) = dump_path {
                fs::write(dump, assembled.program.dump_text())
                    .map_err(|e| format!("writing program dump: {e}"))?;
            }
            let sol = conic::solve(&assembled.program, &settings).map_err(|e| e.to_string())?;
            let mut report = assembled.report.clone();
            report.solver = Some(SolverSummary {
                status: format!("{:?}", sol.status),
                iterations: sol.stats.iterations,
                solve_time_s: sol.stats.solve_time,
                gap_rel: sol.stats.gap_rel,
                tol: settings.tol,
            });
            match sol.status {
                SolveStatus::Optimal => {
                    report.feasible = Some(true);
                    let pol =
                        conic::extract_policy(&sol, &assembled.program).map_err(|e| e.to_string())?;
                    println!("objective value: {}", sol.objective);
                    (true, report, Some(pol))
                }
                SolveStatus::Infeasible => {
                    report.feasible = Some(false);
                    (false, report, None)
                }
                SolveStatus::NumericalTrouble => {
                    return Err("solve did not reach the requested accuracy".into())
                }
            }
        }
    };

    if let Some(rp) = report_path {
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        fs::write(rp, json).map_err(|e| format!("writing report: {e}"))?;
    }
    if let Some(s) = &report.solver {
        println!(
            "solver: {} in {} iterations, {:.2}s",
            s.status, s.iterations, s.solve_time_s
        );
    }
    match (feasible, policy) {
        (true, Some(pol)) => {
            let layout = maps.layout();
            let file = PolicyFile::from_policy(&pol, &layout, &loaded.hash)
                .map_err(|e| e.to_string())?;
            let json = serde_json::to_string_pretty(&file).expect("policy serializes");
            fs::write(out, json).map_err(|e| format!("writing policy: {e}"))?;
            println!(
                "feasible: policy written to {} (scenario hash {})",
                out.display(),
                loaded.hash
            );
            Ok(0)
        }
        _ => {
            let slack = report.max_slack.unwrap_or(f64::INFINITY);
            println!("infeasible: minimal constraint slack {slack:.6e}");
            Ok(2)
        }
    }
}

#[allow(clippy::too_many_arguments, clippy::needless_range_loop)]
pub fn cmd_simulate(
    scenario_path: &Path,
    policy_path: &Path,
    samples: usize,
    seed: u64,
    out: &Path,
    nominal: bool,
    force: bool,
    rho: Option<f64>,
) -> CmdResult {
    let loaded = load_scenario(scenario_path, rho)?;
    let (sys, set, _, _) = loaded.scenario.to_modules(rho).map_err(|e| e.to_string())?;
    let (pol, layout) = load_policy(policy_path, &loaded.hash, force)?;
    check_policy_dims(&sys, &layout)?;
    let d = sys.dims();

    let draws: Vec<(DVector<f64>, DVector<f64>)> = if nominal {
        vec![(DVector::zeros(d.n_zeta()), DVector::zeros(d.n_eps()))]
    } else {
        if samples == 0 {
            return Err("at least one sample required".into());
        }
        let zetas = set
            .sample(samples, seed, SampleStrategy::Interior)
            .map_err(|e| e.to_string())?;
        let r = rcc_core::linalg::psd_factor(sys.pi()).map_err(|e| e.to_string())?;
        zetas
            .into_iter()
            .enumerate()
            .map(|(i, zeta)| (zeta, noise_sample(&r, seed, i as u64)))
            .collect()
    };

    let mut header = vec!["sample".to_string(), "t".to_string()];
    header.extend((0..d.n_x).map(|i| format!("x{i}")));
    header.extend((0..d.n_u).map(|i| format!("u{i}")));

    let cols = d.n_x + d.n_u;
    let mut rows: Vec<Vec<String>> = Vec::with_capacity(draws.len() * d.horizon);
    let mut sums = vec![vec![0.0f64; cols]; d.horizon];
    let mut sq_sums = vec![vec![0.0f64; cols]; d.horizon];
    for (idx, (zeta, eps)) in draws.iter().enumerate() {
        let trace = simulate(&sys, &pol, zeta, eps).map_err(|e| e.to_string())?;
        for t in 0..d.horizon {
            let mut row = vec![idx.to_string(), t.to_string()];
            for j in 0..d.n_x {
                let v = trace.states[t + 1][j];
                row.push(fmt(v));
                sums[t][j] += v;
                sq_sums[t][j] += v * v;
            }
            for j in 0..d.n_u {
                let v = trace.controls[t][j];
                row.push(fmt(v));
                sums[t][d.n_x + j] += v;
                sq_sums[t][d.n_x + j] += v * v;
            }
            rows.push(row);
        }
    }
    let n = draws.len() as f64;
    for t in 0..d.horizon {
        let mut row = vec!["mean".to_string(), t.to_string()];
        row.extend(sums[t].iter().map(|s| fmt(s / n)));
        rows.push(row);
    }
    for t in 0..d.horizon {
        let mut row = vec!["std".to_string(), t.to_string()];
        row.extend((0..cols).map(|j| {
            let mean = sums[t][j] / n;
            let var = (sq_sums[t][j] / n - mean * mean).max(0.0);
            fmt(var.sqrt())
        }));
        rows.push(row);
    }
    csvout::write_csv(out, &header, &rows).map_err(|e| format!("writing csv: {e}"))?;
    println!(
        "wrote {} data rows (+{} summary rows) to {}",
        draws.len() * d.horizon,
        2 * d.horizon,
        out.display()
    );
    Ok(0)
}

pub fn cmd_verify(
    scenario_path: &Path,
    policy_path: &Path,
    samples: usize,
    seed: u64,
    out: Option<&Path>,
    force: bool,
    rho: Option<f64>,
) -> CmdResult {
    let loaded = load_scenario(scenario_path, rho)?;
    let (sys, set, specs, _) = loaded.scenario.to_modules(rho).map_err(|e| e.to_string())?;
    let (pol, layout) = load_policy(policy_path, &loaded.hash, force)?;
    check_policy_dims(&sys, &layout)?;
    let report =
        verify_policy(&sys, &pol, &set, &specs, samples, seed).map_err(|e| e.to_string())?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    match out {
        Some(p) => fs::write(p, &json).map_err(|e| format!("writing report: {e}"))?,
        None => println!("{json}"),
    }
    for c in &report.checks {
        println!(
            "spec {} ({}): worst {:.6} bound {:.6} margin {:.3e} {}",
            c.index,
            c.kind,
            c.worst_value,
            c.bound,
            c.margin,
            if c.ok { "ok" } else { "VIOLATED" }
        );
    }
    Ok(if report.all_ok() { 0 } else { 2 })
}

pub fn cmd_tightness(
    instances: usize,
    dims: &str,
    spectratopes: bool,
    seed: u64,
    out: Option<&Path>,
) -> CmdResult {
    let (nbar, blocks) = dims
        .split_once(',')
        .and_then(|(a, b)| Some((a.trim().parse::<usize>().ok()?, b.trim().parse::<usize>().ok()?)))
        .ok_or_else(|| format!("--dims expects `nbar,blocks`, got {dims:?}"))?;
    let table = tightness_harness(
        instances,
        HarnessDims {
            nbar,
            blocks,
            spectratope: spectratopes,
        },
        seed,
    )
    .map_err(|e| e.to_string())?;
    let csv = table.to_csv();
    match out {
        Some(p) => fs::write(p, &csv).map_err(|e| format!("writing table: {e}"))?,
        None => print!("{csv}"),
    }
    let violations = table.violations();
    println!("{} instances, {} sandwich violations", table.rows.len(), violations);
    Ok(if violations == 0 { 0 } else { 2 })
}

fn fmt(v: f64) -> String {
    format!("{v}")
}
