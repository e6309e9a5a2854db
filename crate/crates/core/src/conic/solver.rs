//! Embedded interior-point solve behind the program model.
//!
//! The default build solves programs with the Clarabel interior-point solver
//! in-process. Optimality claims are re-verified here from the raw primal and
//! dual vectors (equality residuals, per-cone feasibility, duality gap)
//! rather than trusted from the solver's own report.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::DVector;

use super::{mat_from_svec, ConeKind, ConicProgram};
use crate::error::{Error, Result};
use crate::linalg::{min_eig, sym_op_norm};

#[derive(Debug, Clone)]
pub struct SolveSettings {
    pub max_iter: u32,
    pub tol: f64,
    pub verbosity: u8,
}

impl Default for SolveSettings {
    fn default() -> Self {
        SolveSettings {
            max_iter: 200,
            tol: 1e-8,
            verbosity: 0,
        }
    }
}

impl SolveSettings {
    pub fn with_tol(tol: f64) -> Self {
        SolveSettings {
            tol,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    NumericalTrouble,
}

/// Residual of one cone block: signed distance-like violation (negative
/// values mean strictly inside).
#[derive(Debug, Clone)]
pub struct BlockResidual {
    pub kind: ConeKind,
    pub violation: f64,
    pub scale: f64,
}

#[derive(Debug, Clone)]
pub struct SolveStats {
    pub iterations: u32,
    pub solve_time: f64,
    pub solver_r_prim: f64,
    pub solver_r_dual: f64,
    /// |q'x + b'z| / (1 + |q'x|) recomputed from raw vectors.
    pub gap_rel: f64,
    pub max_eq_residual: f64,
    pub block_residuals: Vec<BlockResidual>,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub status: SolveStatus,
    pub primal: DVector<f64>,
    pub objective: f64,
    /// Dual vector per cone block, in the block's own geometry.
    pub duals: Vec<Vec<f64>>,
    pub eq_duals: Vec<f64>,
    pub stats: SolveStats,
}

const EQ_RESIDUAL_TOL: f64 = 1e-7;
const GAP_TOL: f64 = 1e-6;
const CONE_TOL: f64 = 1e-7;

/// Solve a conic program. Deterministic given identical inputs and settings;
/// numerical breakdown is reported through the status, never as a panic.
pub fn solve(prog: &ConicProgram, settings: &SolveSettings) -> Result<Solution> {
    let lowered = lower(prog);
    let clarabel_settings = DefaultSettingsBuilder::default()
        .verbose(settings.verbosity > 0)
        .max_iter(settings.max_iter)
        .tol_gap_abs(settings.tol)
        .tol_gap_rel(settings.tol)
        .tol_feas(settings.tol)
        .equilibrate_max_iter(10)
        .max_threads(1)
        .build()
        .map_err(|e| Error::Config(format!("solver settings: {e}")))?;

    let p = CscMatrix::<f64>::zeros((prog.n_vars, prog.n_vars));
    let mut q = vec![0.0; prog.n_vars];
    for &(v, c) in &prog.objective {
        q[v] += c;
    }
    let a = CscMatrix::new(
        lowered.n_rows,
        prog.n_vars,
        lowered.col_ptr,
        lowered.row_idx,
        lowered.values,
    );
    let mut solver = DefaultSolver::new(&p, &q, &a, &lowered.b, &lowered.cones, clarabel_settings)
        .map_err(|e| Error::Input(format!("malformed conic program: {e:?}")))?;
    solver.solve();
    let sol = &solver.solution;

    let primal = DVector::from_column_slice(&sol.x);
    let objective = prog
        .objective
        .iter()
        .map(|&(v, c)| c * primal[v])
        .sum::<f64>();

    // Undo the rotated-cone change of coordinates on the duals.
    let z = unrotate_duals(prog, &sol.z, lowered.n_eq);
    let eq_duals = z[..lowered.n_eq].to_vec();
    let mut duals = Vec::with_capacity(prog.blocks.len());
    let mut at = lowered.n_eq;
    for b in &prog.blocks {
        duals.push(z[at..at + b.rows.len()].to_vec());
        at += b.rows.len();
    }

    // AlmostSolved is a candidate too: the verdict below rests on our own
    // residual and gap checks, not the solver's label.
    let mut status = match sol.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => SolveStatus::Optimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            SolveStatus::Infeasible
        }
        _ => SolveStatus::NumericalTrouble,
    };

    // Independent certificate check for optimality claims.
    let mut max_eq_residual = 0.0_f64;
    let b_scale = 1.0
        + prog
            .eq_rows
            .iter()
            .chain(prog.blocks.iter().flat_map(|b| b.rows.iter()))
            .map(|r| r.constant.abs())
            .fold(0.0_f64, f64::max);
    for row in &prog.eq_rows {
        max_eq_residual = max_eq_residual.max(row.eval(&primal).abs());
    }
    let block_residuals: Vec<BlockResidual> = prog
        .blocks
        .iter()
        .map(|b| block_residual(b, &primal))
        .collect();
    // Dual objective of the lowered problem (P = 0): -b'z.
    let dual_obj = -lowered
        .b
        .iter()
        .zip(sol.z.iter())
        .map(|(bi, zi)| bi * zi)
        .sum::<f64>();
    let gap_rel = (objective - dual_obj).abs() / (1.0 + objective.abs());

    if status == SolveStatus::Optimal {
        let eq_ok = max_eq_residual <= EQ_RESIDUAL_TOL * b_scale;
        let cones_ok = block_residuals
            .iter()
            .all(|r| r.violation <= CONE_TOL * (1.0 + r.scale));
        let gap_ok = gap_rel <= GAP_TOL;
        if !(eq_ok && cones_ok && gap_ok) {
            status = SolveStatus::NumericalTrouble;
        }
    }

    Ok(Solution {
        status,
        primal,
        objective,
        duals,
        eq_duals,
        stats: SolveStats {
            iterations: sol.iterations,
            solve_time: sol.solve_time,
            solver_r_prim: sol.r_prim,
            solver_r_dual: sol.r_dual,
            gap_rel,
            max_eq_residual,
            block_residuals,
        },
    })
}

struct Lowered {
    n_rows: usize,
    n_eq: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
    b: Vec<f64>,
    cones: Vec<SupportedConeT<f64>>,
}

/// Rewrite the program as `A x + s = b`, `s` in a product of solver cones.
/// Rotated second-order blocks are mapped onto plain second-order cones by the
/// orthogonal-ish change of coordinates (u, v, w) -> (u+v, u-v, sqrt(2) w).
fn lower(prog: &ConicProgram) -> Lowered {
    struct Triplet {
        row: usize,
        col: usize,
        val: f64,
    }
    let mut trips: Vec<Triplet> = Vec::new();
    let mut b: Vec<f64> = Vec::new();
    let mut cones: Vec<SupportedConeT<f64>> = Vec::new();

    let push_row = |trips: &mut Vec<Triplet>, b: &mut Vec<f64>, terms: &[(u32, f64)], c: f64| {
        let row = b.len();
        for &(v, coef) in terms {
            trips.push(Triplet {
                row,
                col: v as usize,
                val: -coef,
            });
        }
        b.push(c);
    };

    let n_eq = prog.eq_rows.len();
    if n_eq > 0 {
        cones.push(SupportedConeT::ZeroConeT(n_eq));
        for row in &prog.eq_rows {
            push_row(&mut trips, &mut b, &row.terms, row.constant);
        }
    }
    for block in &prog.blocks {
        match block.kind {
            ConeKind::Nonnegative(n) => {
                cones.push(SupportedConeT::NonnegativeConeT(n));
                for row in &block.rows {
                    push_row(&mut trips, &mut b, &row.terms, row.constant);
                }
            }
            ConeKind::SecondOrder(n) => {
                cones.push(SupportedConeT::SecondOrderConeT(n));
                for row in &block.rows {
                    push_row(&mut trips, &mut b, &row.terms, row.constant);
                }
            }
            ConeKind::Psd(n) => {
                cones.push(SupportedConeT::PSDTriangleConeT(n));
                for row in &block.rows {
                    push_row(&mut trips, &mut b, &row.terms, row.constant);
                }
            }
            ConeKind::Power3(alpha) => {
                cones.push(SupportedConeT::PowerConeT(alpha));
                for row in &block.rows {
                    push_row(&mut trips, &mut b, &row.terms, row.constant);
                }
            }
            ConeKind::RotatedSecondOrder(n) => {
                cones.push(SupportedConeT::SecondOrderConeT(n));
                let sqrt2 = std::f64::consts::SQRT_2;
                let (u, v) = (&block.rows[0], &block.rows[1]);
                let mut sum = u.clone();
                sum.terms.extend(v.terms.iter().copied());
                sum.constant += v.constant;
                let mut diff = u.clone();
                diff.terms
                    .extend(v.terms.iter().map(|&(var, c)| (var, -c)));
                diff.constant -= v.constant;
                push_row(&mut trips, &mut b, &sum.terms, sum.constant);
                push_row(&mut trips, &mut b, &diff.terms, diff.constant);
                for row in &block.rows[2..] {
                    let scaled: Vec<(u32, f64)> =
                        row.terms.iter().map(|&(var, c)| (var, sqrt2 * c)).collect();
                    push_row(&mut trips, &mut b, &scaled, sqrt2 * row.constant);
                }
            }
        }
    }

    // Triplets to CSC.
    let n_rows = b.len();
    let n_cols = prog.n_vars;
    let mut col_counts = vec![0usize; n_cols + 1];
    for t in &trips {
        col_counts[t.col + 1] += 1;
    }
    for j in 0..n_cols {
        col_counts[j + 1] += col_counts[j];
    }
    let col_ptr = col_counts.clone();
    let mut cursor = col_counts;
    let nnz = trips.len();
    let mut row_idx = vec![0usize; nnz];
    let mut values = vec![0.0f64; nnz];
    trips.sort_by_key(|t| (t.col, t.row));
    for t in &trips {
        let at = cursor[t.col];
        row_idx[at] = t.row;
        values[at] = t.val;
        cursor[t.col] += 1;
    }

    Lowered {
        n_rows,
        n_eq,
        col_ptr,
        row_idx,
        values,
        b,
        cones,
    }
}

/// Map solver duals back to the program's block geometry (adjoint of the
/// rotated-cone coordinate change; all other blocks pass through).
fn unrotate_duals(prog: &ConicProgram, z: &[f64], n_eq: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(z.len());
    out.extend_from_slice(&z[..n_eq]);
    let mut at = n_eq;
    let sqrt2 = std::f64::consts::SQRT_2;
    for block in &prog.blocks {
        let n = block.rows.len();
        match block.kind {
            ConeKind::RotatedSecondOrder(_) => {
                let zu = z[at];
                let zv = z[at + 1];
                out.push(zu + zv);
                out.push(zu - zv);
                for k in 2..n {
                    out.push(sqrt2 * z[at + k]);
                }
            }
            _ => out.extend_from_slice(&z[at..at + n]),
        }
        at += n;
    }
    out
}

fn block_residual(block: &super::ConeBlock, x: &DVector<f64>) -> BlockResidual {
    let s: Vec<f64> = block.rows.iter().map(|r| r.eval(x)).collect();
    let scale = s.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let violation = match block.kind {
        ConeKind::Nonnegative(_) => s.iter().fold(f64::NEG_INFINITY, |a, v| a.max(-v)),
        ConeKind::SecondOrder(_) => {
            let norm = s[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
            norm - s[0]
        }
        ConeKind::RotatedSecondOrder(_) => {
            let w2 = s[2..].iter().map(|v| v * v).sum::<f64>();
            (w2 - 2.0 * s[0] * s[1]).max(-s[0]).max(-s[1])
        }
        ConeKind::Psd(n) => {
            let m = mat_from_svec(&s, n);
            let scale_m = sym_op_norm(&m);
            return BlockResidual {
                kind: block.kind,
                violation: -min_eig(&m),
                scale: scale_m,
            };
        }
        ConeKind::Power3(a) => {
            if s[0] < 0.0 || s[1] < 0.0 {
                s[0].max(s[1]).abs()
            } else {
                s[2].abs() - s[0].powf(a) * s[1].powf(1.0 - a)
            }
        }
    };
    BlockResidual {
        kind: block.kind,
        violation,
        scale,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::{const_exprs, LinExpr, ProgramBuilder};
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    #[test]
    fn trivial_nonneg_feasibility() {
        // min 0 s.t. x >= 0
        let mut b = ProgramBuilder::new();
        let x = b.add_var("x");
        b.add_nonneg(LinExpr::var(x));
        let sol = solve(&b.build(), &SolveSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!(sol.primal[x] >= -1e-9);
    }

    #[test]
    fn psd_boundary_minimum() {
        // min x s.t. [[1, x], [x, 1]] psd  ->  x = -1
        let mut b = ProgramBuilder::new();
        let x = b.add_var("x");
        let m = vec![
            vec![LinExpr::constant(1.0), LinExpr::var(x)],
            vec![LinExpr::var(x), LinExpr::constant(1.0)],
        ];
        b.add_psd(&m);
        b.set_objective(vec![(x, 1.0)]);
        let sol = solve(&b.build(), &SolveSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_abs_diff_eq!(sol.primal[x], -1.0, epsilon = 1e-7);
    }

    #[test]
    fn psd_three_by_three_orientation() {
        // min t s.t. M + t I psd with M = diag-ish known matrix:
        // optimum t = -lambda_min(M).
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 2.0, 1.0, 0.0, 1.0, 2.0]);
        let lam_min = min_eig(&m);
        let mut b = ProgramBuilder::new();
        let t = b.add_var("t");
        let mut exprs = const_exprs(&m);
        for i in 0..3 {
            exprs[i][i].push(t, 1.0);
        }
        b.add_psd(&exprs);
        b.set_objective(vec![(t, 1.0)]);
        let sol = solve(&b.build(), &SolveSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_abs_diff_eq!(sol.primal[t], -lam_min, epsilon = 1e-7);
    }

    #[test]
    fn rotated_cone_epigraph() {
        // min f s.t. f >= ||g||^2 with g fixed.
        let g = [0.5, -1.5, 2.0];
        let mut b = ProgramBuilder::new();
        let f = b.add_var("f");
        let mut rows = vec![LinExpr::var(f), LinExpr::constant(0.5)];
        rows.extend(g.iter().map(|&v| LinExpr::constant(v)));
        b.add_rsoc(rows);
        b.set_objective(vec![(f, 1.0)]);
        let sol = solve(&b.build(), &SolveSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        let expect: f64 = g.iter().map(|v| v * v).sum();
        assert_abs_diff_eq!(sol.primal[f], expect, epsilon = 1e-7);
    }

    #[test]
    fn infeasible_program_is_flagged() {
        // x >= 1 and -x >= 0 cannot hold together.
        let mut b = ProgramBuilder::new();
        let x = b.add_var("x");
        b.add_nonneg(LinExpr::var(x) - &LinExpr::constant(1.0));
        b.add_nonneg(LinExpr::var(x).neg());
        let sol = solve(&b.build(), &SolveSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }

    #[test]
    fn equality_pins_variable() {
        let mut b = ProgramBuilder::new();
        let x = b.add_var("x");
        let y = b.add_var("y");
        b.add_eq(LinExpr::var(x) - &LinExpr::constant(2.5));
        b.add_nonneg(LinExpr::var(y) - &LinExpr::var(x));
        b.set_objective(vec![(y, 1.0)]);
        let sol = solve(&b.build(), &SolveSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_abs_diff_eq!(sol.primal[x], 2.5, epsilon = 1e-7);
        assert_abs_diff_eq!(sol.primal[y], 2.5, epsilon = 1e-7);
    }

    #[test]
    fn power_cone_geometric_mean() {
        // max z s.t. x=2, y=8, x^0.5 y^0.5 >= z  ->  z = 4.
        let mut b = ProgramBuilder::new();
        let z = b.add_var("z");
        b.add_power3(
            0.5,
            [LinExpr::constant(2.0), LinExpr::constant(8.0), LinExpr::var(z)],
        );
        b.set_objective(vec![(z, -1.0)]);
        let sol = solve(&b.build(), &SolveSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_abs_diff_eq!(sol.primal[z], 4.0, epsilon = 1e-6);
    }
}
