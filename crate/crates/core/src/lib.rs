// Dense matrix assembly here is written with explicit index loops; the
// iterator rewrites clippy suggests obscure the triangular and symmetric
// access patterns.
#![allow(clippy::needless_range_loop)]

//! Finite-horizon robust covariance control for partially observed linear
//! systems.
//!
//! The crate designs affine purified-output feedback policies for
//! discrete-time linear systems driven by zero-mean stochastic noise and
//! bounded deterministic disturbances confined to an ellitope or spectratope.
//! Performance requirements on the state-control trajectory (averaged
//! quadratic bounds, mean bounds, covariance caps) are compiled into an
//! explicit conic program whose solution is the policy; designed policies are
//! then validated by Monte Carlo simulation, analytic moment checks and
//! small-instance brute-force oracles.
//!
//! Module map:
//! - [`uncertainty`]: ellitope/spectratope sets, support functions, sampling,
//!   brute-force quadratic maximization.
//! - [`system`]: linear time-varying system data, purified-output dynamics,
//!   and the affine trajectory maps `w = Z[chi][zeta;1] + E[chi] eps`.
//! - [`policy`]: affine output-based and purified-output-based control laws
//!   and closed-loop simulation.
//! - [`compiler`]: translation of performance specifications into conic
//!   constraint fragments and whole-program assembly.
//! - [`conic`]: solver-agnostic conic program model plus the embedded
//!   interior-point solve contract.
//! - [`verify`]: Monte Carlo verification, randomized rounding certificates,
//!   relaxation tightness harness.
//! - [`scenario`]: scenario file model shared by the CLI and tests.

pub mod compiler;
pub mod conic;
pub mod error;
pub mod linalg;
pub mod policy;
pub mod scenario;
pub mod system;
pub mod uncertainty;
pub mod verify;

pub use error::{Error, Result};
