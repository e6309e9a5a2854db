#![allow(dead_code)]

//! Helpers shared by the CLI and acceptance test suites.

use std::path::{Path, PathBuf};
use std::process::Output;

use rcc_core::scenario::{
    AveragedQuadraticSpec, CovarianceBoundSpec, IndexSetSpec, MatOrPerStep, PiSpec, Scenario,
    SpecsBlock, SystemBlock, UncertaintyBlock,
};

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_rcc")
}

pub fn run(args: &[&str]) -> Output {
    std::process::Command::new(bin())
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .canonicalize()
        .expect("workspace root")
}

pub fn boeing_path() -> PathBuf {
    workspace_root().join("scenarios/boeing747.json")
}

pub fn boeing_relaxed_path() -> PathBuf {
    workspace_root().join("scenarios/boeing747_relaxed.json")
}

/// Scalar two-step system with strong disturbance coupling and weak noise.
/// The mean-square bound on the second state is reachable only with
/// feedback: the open loop sees the full disturbance ball.
pub fn toy_scenario() -> Scenario {
    let m = |v: f64| vec![vec![v]];
    // eps = [s_0; e_0; e_1], s_0 deterministic.
    let pi = vec![
        vec![0.0, 0.0, 0.0],
        vec![0.0, 1.0, 0.0],
        vec![0.0, 0.0, 1.0],
    ];
    // zeta = [z; d_0; d_1] ranging over the unit ball.
    let eye3 = vec![
        vec![1.0, 0.0, 0.0],
        vec![0.0, 1.0, 0.0],
        vec![0.0, 0.0, 1.0],
    ];
    // w = [x_1; x_2; u_0; u_1]: select x_2.
    let mut a_sel = vec![vec![0.0; 4]; 4];
    a_sel[1][1] = 1.0;
    Scenario {
        system: SystemBlock {
            horizon: 2,
            a: MatOrPerStep::One(m(1.0)),
            b: MatOrPerStep::One(m(1.0)),
            b_d: MatOrPerStep::One(m(1.0)),
            b_s: MatOrPerStep::One(m(0.1)),
            c: MatOrPerStep::One(m(1.0)),
            d_d: MatOrPerStep::One(m(0.0)),
            d_s: MatOrPerStep::One(m(0.0)),
            pi: PiSpec::Mat(pi),
        },
        uncertainty: UncertaintyBlock::Ellitope {
            p: eye3.clone(),
            s: vec![eye3],
            t: IndexSetSpec::Box,
            rho: 1.0,
        },
        specs: SpecsBlock {
            averaged_quadratic: vec![AveragedQuadraticSpec {
                a: a_sel,
                beta: vec![0.0; 4],
                gamma: 2.0,
            }],
            linear_mean: vec![],
            mean_quadratic: vec![],
            covariance_bound: vec![CovarianceBoundSpec {
                q: vec![vec![0.0, 1.0, 0.0, 0.0]],
                sigma: vec![vec![1.0]],
            }],
        },
        objective: None,
    }
}

/// Toy scenario without deterministic uncertainty and with slack bounds:
/// every policy satisfies it.
pub fn toy_scenario_no_uncertainty() -> Scenario {
    let mut sc = toy_scenario();
    sc.uncertainty = UncertaintyBlock::None;
    sc.specs.averaged_quadratic[0].gamma = 10.0;
    sc
}

pub fn write_scenario(dir: &Path, name: &str, sc: &Scenario) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, sc.to_json_pretty()).expect("scenario written");
    path
}

pub struct TempDir(PathBuf);

impl TempDir {
    pub fn new(tag: &str) -> Self {
        let path = std::env::temp_dir().join(format!(
            "rcc-test-{tag}-{}-{}",
            std::process::id(),
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .unwrap()
                .as_nanos()
        ));
        std::fs::create_dir_all(&path).expect("temp dir");
        TempDir(path)
    }

    pub fn path(&self) -> &Path {
        &self.0
    }
}

impl Drop for TempDir {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.0);
    }
}
