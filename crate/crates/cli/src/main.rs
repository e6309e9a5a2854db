//! Command line front end: scenario-driven policy design, closed-loop
//! simulation, specification verification, and the relaxation tightness
//! harness.
//!
//! Exit codes: 0 on success (design feasible / all checks passed / no
//! sandwich violations), 2 when the program is infeasible or a check fails,
//! 1 on usage, parse, or numerical errors.

mod commands;
mod csvout;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "rcc",
    version,
    about = "Robust covariance control: affine policy design and verification"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compile a scenario into a conic program, solve it, and write the
    /// designed policy plus a design report.
    Design {
        scenario: PathBuf,
        /// Override the uncertainty level from the scenario file.
        #[arg(long)]
        rho: Option<f64>,
        /// Policy output path.
        #[arg(long, default_value = "policy.json")]
        out: PathBuf,
        /// Design report output path.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Dump the assembled conic program in the sparse text format.
        #[arg(long)]
        dump_program: Option<PathBuf>,
    },
    /// Simulate closed-loop trajectories of a designed policy and write them
    /// as CSV (per-sample rows plus per-step mean/std summary rows).
    Simulate {
        scenario: PathBuf,
        policy: PathBuf,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "trajectories.csv")]
        out: PathBuf,
        /// Single run with both disturbances forced to zero.
        #[arg(long)]
        nominal: bool,
        /// Accept a policy whose scenario hash does not match.
        #[arg(long)]
        force: bool,
        #[arg(long)]
        rho: Option<f64>,
    },
    /// Evaluate every specification of a scenario against a designed policy
    /// (worst sampled disturbance, noise expectations analytic).
    Verify {
        scenario: PathBuf,
        policy: PathBuf,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Verification report output path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
        #[arg(long)]
        rho: Option<f64>,
    },
    /// Random-instance tightness table: brute-force maximum vs relaxation
    /// value vs inflated brute-force maximum.
    Tightness {
        #[arg(long, default_value_t = 20)]
        instances: usize,
        /// Latent dimension and block count, e.g. `4,2`.
        #[arg(long, default_value = "3,2")]
        dims: String,
        /// Matrix-box spectratope instances instead of ellitopes.
        #[arg(long)]
        spectratopes: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Table output path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    // Single-threaded BLAS keeps solver runs bit-reproducible across
    // machines with different core counts.
    if std::env::var_os("OPENBLAS_NUM_THREADS").is_none() {
        std::env::set_var("OPENBLAS_NUM_THREADS", "1");
    }
    let cli = Cli::parse();
    let outcome = match cli.cmd {
        Cmd::Design {
            scenario,
            rho,
            out,
            report,
            dump_program,
        } => commands::cmd_design(&scenario, rho, &out, report.as_deref(), dump_program.as_deref()),
        Cmd::Simulate {
            scenario,
            policy,
            samples,
            seed,
            out,
            nominal,
            force,
            rho,
        } => commands::cmd_simulate(&scenario, &policy, samples, seed, &out, nominal, force, rho),
        Cmd::Verify {
            scenario,
            policy,
            samples,
            seed,
            out,
            force,
            rho,
        } => commands::cmd_verify(&scenario, &policy, samples, seed, out.as_deref(), force, rho),
        Cmd::Tightness {
            instances,
            dims,
            spectratopes,
            seed,
            out,
        } => commands::cmd_tightness(instances, &dims, spectratopes, seed, out.as_deref()),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
