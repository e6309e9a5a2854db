//! Randomized rounding of the quadratic-maximization relaxation.
//!
//! The dual of the relaxation is solved directly for its optimizer
//! `(V*, v*, t*)`; drawing Rademacher vectors through a square-root
//! factorization of `X = [[V*, v*], [v*', 1]]` produces disturbance
//! realizations whose homogenized quadratic value equals the relaxation
//! value exactly, and with constant probability the draw lands within the
//! `kappa`-inflated set, certifying the relaxation's tightness.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::compiler::kappa_for;
use crate::conic::{self, ExprMat, LinExpr, ProgramBuilder, SolveSettings, SolveStatus};
use crate::error::{Error, Result};
use crate::linalg::{psd_sqrt, sym_eigen, symmetrize};
use crate::uncertainty::{QuadraticForm, UncertaintySet};

/// Optimal solution of the relaxation dual.
#[derive(Debug, Clone)]
pub struct RelaxationDual {
    pub v_mat: DMatrix<f64>,
    pub v_vec: DVector<f64>,
    pub t: DVector<f64>,
    /// Relaxation value `Tr(Q V*) + 2 q' v*`.
    pub opt: f64,
}

/// Solve the relaxation dual
/// `max Tr(Q V) + 2 q' v  s.t.  [[V, v], [v', 1]] psd, t in T,`
/// with per-block level constraints `Tr(S_k V) <= rho t_k` (ellitopes) or
/// `S_k[V] <= rho t_k I` (spectratopes).
pub fn solve_relaxation_dual(
    form: &QuadraticForm,
    set: &UncertaintySet,
    tol: f64,
) -> Result<RelaxationDual> {
    let nbar = set.nbar();
    if form.dim() != nbar {
        return Err(Error::Dimension(
            "form dimension vs latent dimension".into(),
        ));
    }
    let index_set = set
        .index_set()
        .ok_or_else(|| Error::Input("degenerate set has no relaxation dual".into()))?;
    let rho = set.rho();
    let k = set.block_count();

    let mut b = ProgramBuilder::new();
    let v_mat = b.add_sym_var("relax/V", nbar);
    let v_vec = b.add_vars("relax/v", nbar);
    let t = b.add_vars("relax/t", k);

    // [[V, v], [v', 1]] psd.
    let mut x_block: ExprMat = vec![vec![LinExpr::default(); nbar + 1]; nbar + 1];
    for i in 0..nbar {
        for j in 0..nbar {
            x_block[i][j] = v_mat[i][j].clone();
        }
        x_block[i][nbar] = LinExpr::var(v_vec[i]);
        x_block[nbar][i] = LinExpr::var(v_vec[i]);
    }
    x_block[nbar][nbar] = LinExpr::constant(1.0);
    b.add_psd(&x_block);

    match set {
        UncertaintySet::Ellitope(e) => {
            for (kk, s) in e.blocks().iter().enumerate() {
                // rho t_k - Tr(S_k V) >= 0.
                let mut row = LinExpr::term(t[kk], rho);
                for i in 0..nbar {
                    for j in 0..nbar {
                        if s[(i, j)] != 0.0 {
                            row.add_scaled(&v_mat[i][j], -s[(i, j)]);
                        }
                    }
                }
                row.compact();
                b.add_nonneg(row);
            }
        }
        UncertaintySet::Spectratope(sp) => {
            for (kk, blk) in sp.blocks().iter().enumerate() {
                // rho t_k I - sum_{ij} V_ij sym(S^{ki} S^{kj}) psd.
                let f = blk.side();
                let mut m: ExprMat = vec![vec![LinExpr::default(); f]; f];
                for a in 0..f {
                    m[a][a] = LinExpr::term(t[kk], rho);
                }
                for i in 0..nbar {
                    for j in 0..nbar {
                        let prod = blk.coeffs()[i].clone() * &blk.coeffs()[j];
                        let sym = 0.5 * (&prod + prod.transpose());
                        for a in 0..f {
                            for c in 0..f {
                                if sym[(a, c)] != 0.0 {
                                    m[a][c].add_scaled(&v_mat[i][j], -sym[(a, c)]);
                                }
                            }
                        }
                    }
                }
                for row in &mut m {
                    for e in row {
                        e.compact();
                    }
                }
                b.add_psd(&m);
            }
        }
        UncertaintySet::Zero { .. } => unreachable!("checked above"),
    }
    let t_exprs: Vec<LinExpr> = t.iter().map(|&v| LinExpr::var(v)).collect();
    index_set.emit_membership(&mut b, &t_exprs);

    // Minimize -(Tr(Q V) + 2 q' v).
    let mut obj = LinExpr::default();
    let q_mat = form.matrix();
    for i in 0..nbar {
        for j in 0..nbar {
            if q_mat[(i, j)] != 0.0 {
                obj.add_scaled(&v_mat[i][j], -q_mat[(i, j)]);
            }
        }
        obj.push(v_vec[i], -2.0 * form.linear()[i]);
    }
    obj.compact();
    b.set_objective(obj.terms.clone());

    let prog = b.build();
    let sol = conic::solve(&prog, &SolveSettings::with_tol(tol))?;
    if sol.status != SolveStatus::Optimal {
        return Err(Error::Numerical(format!(
            "relaxation dual solve ended with status {:?}",
            sol.status
        )));
    }
    let v_flat = prog.named_slice(&sol.primal, "relax/V")?;
    let mut v_full = DMatrix::zeros(nbar, nbar);
    let mut at = 0;
    for j in 0..nbar {
        for i in 0..=j {
            v_full[(i, j)] = v_flat[at];
            v_full[(j, i)] = v_flat[at];
            at += 1;
        }
    }
    let v_vec_val = prog.named_slice(&sol.primal, "relax/v")?;
    let t_val = prog.named_slice(&sol.primal, "relax/t")?;
    let opt = (q_mat * &v_full).trace() + 2.0 * form.linear().dot(&v_vec_val);
    Ok(RelaxationDual {
        v_mat: v_full,
        v_vec: v_vec_val,
        t: t_val,
        opt,
    })
}

/// Accepted rounding certificate.
#[derive(Debug, Clone)]
pub struct RoundingCertificate {
    /// The certifying latent disturbance.
    pub zeta_bar: DVector<f64>,
    /// `G(zeta_bar)`, at least the relaxation value.
    pub value: f64,
    /// Smallest `s` with `zeta_bar` feasible at level `s * rho`.
    pub inflation: f64,
    pub draws_used: usize,
    pub opt_value: f64,
}

#[derive(Debug, Clone)]
pub enum RoundingOutcome {
    Accepted(RoundingCertificate),
    /// No draw satisfied the acceptance test; reports the draw of least
    /// inflation among those with an in-range homogenization coordinate.
    Exhausted {
        best_inflation: f64,
        best_draw: Option<DVector<f64>>,
        draws: usize,
        opt_value: f64,
    },
}

impl RoundingOutcome {
    /// The certifying (or least-inflated) latent point, if any draw had an
    /// in-range homogenization coordinate.
    pub fn point(&self) -> Option<&DVector<f64>> {
        match self {
            RoundingOutcome::Accepted(c) => Some(&c.zeta_bar),
            RoundingOutcome::Exhausted { best_draw, .. } => best_draw.as_ref(),
        }
    }
}

/// Rademacher rounding of the relaxation dual optimizer.
///
/// Every draw satisfies `zeta' Q+ zeta = Opt` exactly (checked to 1e-7
/// relative); a draw is accepted when its homogenization coordinate is in
/// `[-1, 1]` and its inflation stays within the set's tightness factor. The
/// accepted point is sign-flipped so the linear term helps, making its value
/// at least the relaxation value.
pub fn round_sdp_solution(
    form: &QuadraticForm,
    set: &UncertaintySet,
    dual: &RelaxationDual,
    draws: usize,
    seed: u64,
) -> Result<RoundingOutcome> {
    let nbar = set.nbar();
    if form.dim() != nbar || dual.v_mat.nrows() != nbar {
        return Err(Error::Dimension("rounding input shapes".into()));
    }
    if draws == 0 {
        return Err(Error::Input("draw budget must be at least 1".into()));
    }
    let kappa = kappa_for(set).ok_or_else(|| {
        Error::Input("degenerate set admits no rounding certificate".into())
    })?;

    let mut x = DMatrix::zeros(nbar + 1, nbar + 1);
    x.view_mut((0, 0), (nbar, nbar)).copy_from(&dual.v_mat);
    for i in 0..nbar {
        x[(i, nbar)] = dual.v_vec[i];
        x[(nbar, i)] = dual.v_vec[i];
    }
    x[(nbar, nbar)] = 1.0;
    let q_plus = form.homogenized();
    let opt = (&x * &q_plus).trace();
    let x_half = psd_sqrt(&x);
    let m = symmetrize(&(&x_half * &q_plus * &x_half));
    let (_, u) = sym_eigen(&m);
    let mix = &x_half * u;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best_inflation = f64::INFINITY;
    let mut best_draw: Option<DVector<f64>> = None;
    for draw in 1..=draws {
        let chi = DVector::from_fn(nbar + 1, |_, _| {
            if rng.random::<bool>() {
                1.0
            } else {
                -1.0
            }
        });
        let zeta = &mix * chi;
        let raw_value = (zeta.transpose() * &q_plus * &zeta)[(0, 0)];
        if (raw_value - opt).abs() > 1e-7 * (1.0 + opt.abs()) {
            return Err(Error::Numerical(format!(
                "rounding identity violated: draw value {raw_value} vs {opt}"
            )));
        }
        let xi = zeta.rows(0, nbar).into_owned();
        let tau = zeta[nbar];
        let inflation = set.level_ratio(&xi);
        if tau.abs() <= 1.0 + 1e-9 {
            if inflation <= kappa + 1e-9 {
                let xi_hat = if form.linear().dot(&xi) < 0.0 { -xi } else { xi };
                let value = form.value(&xi_hat);
                return Ok(RoundingOutcome::Accepted(RoundingCertificate {
                    zeta_bar: xi_hat,
                    value,
                    inflation,
                    draws_used: draw,
                    opt_value: opt,
                }));
            }
            if inflation < best_inflation {
                best_inflation = inflation;
                let xi_hat = if form.linear().dot(&xi) < 0.0 { -xi } else { xi };
                best_draw = Some(xi_hat);
            }
        }
    }
    Ok(RoundingOutcome::Exhausted {
        best_inflation,
        best_draw,
        draws,
        opt_value: opt,
    })
}
