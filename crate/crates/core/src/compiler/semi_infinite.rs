//! Reformulation of the semi-infinite quadratic constraint
//! `for all zeta in D: zeta' X zeta + 2 x' zeta <= xi`.
//!
//! Dispatch: the degenerate singleton substitutes `zeta = 0`; a single-block
//! ellitope admits the exact S-lemma LMI; multi-block ellitopes and
//! spectratopes get the safe (conservative) approximation, tight within the
//! factor `kappa` reported back to the caller.



use crate::conic::{congruence, mat_t_vec, ExprMat, LinExpr, ProgramBuilder};
use crate::error::{Error, Result};
use crate::uncertainty::{support_phi_epigraph, Spectratope, UncertaintySet};

/// The generic complex constraint, with `X`, `x`, `xi` affine in program
/// variables. `X` must be built symmetric.
#[derive(Debug, Clone)]
pub struct SemiInfiniteQuadratic {
    pub x_mat: ExprMat,
    pub x_vec: Vec<LinExpr>,
    pub xi: LinExpr,
}

/// How a semi-infinite constraint was compiled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SemiInfiniteMode {
    /// `D = {0}`: collapses to `xi >= 0`.
    Degenerate,
    /// Single-block ellitope: exact S-lemma LMI.
    Exact,
    /// Multi-block ellitope, tight within `kappa`.
    SafeEllitope { kappa: f64 },
    /// Spectratope, tight within `kappa`.
    SafeSpectratope { kappa: f64 },
}

impl SemiInfiniteMode {
    pub fn kappa(&self) -> Option<f64> {
        match *self {
            SemiInfiniteMode::SafeEllitope { kappa } => Some(kappa),
            SemiInfiniteMode::SafeSpectratope { kappa } => Some(kappa),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            SemiInfiniteMode::Degenerate => "degenerate",
            SemiInfiniteMode::Exact => "exact",
            SemiInfiniteMode::SafeEllitope { .. } | SemiInfiniteMode::SafeSpectratope { .. } => {
                "safe-approx"
            }
        }
    }
}

/// Tightness factor of the ellitope approximation.
pub fn kappa_ellitope(blocks: usize) -> f64 {
    3.0 * (6.0 * blocks as f64).ln()
}

/// Tightness factor of the spectratope approximation.
pub fn kappa_spectratope(total_block_size: usize) -> f64 {
    2.0 * (8.0 * total_block_size as f64).ln()
}

/// Tightness factor applicable to a set (none for the degenerate singleton).
/// Single-block ellitopes admit the exact reformulation on top of this; the
/// factor here is the one entering the probabilistic rounding argument and
/// holds for every block count.
pub fn kappa_for(set: &UncertaintySet) -> Option<f64> {
    match set {
        UncertaintySet::Zero { .. } => None,
        UncertaintySet::Ellitope(e) => Some(kappa_ellitope(e.blocks().len())),
        UncertaintySet::Spectratope(s) => Some(kappa_spectratope(s.total_block_size())),
    }
}

/// Value of the compiled relaxation over the set's AMBIENT space: the
/// smallest `xi` for which the
/// reformulation of `zeta' Q zeta + 2 q' zeta <= xi` over the set is
/// feasible. Exact for single ellipsoids, an upper bound on the true maximum
/// otherwise.
pub fn relaxation_value(
    set: &UncertaintySet,
    form: &crate::uncertainty::QuadraticForm,
    tol: f64,
) -> Result<f64> {
    if form.dim() != set.dim_out() {
        return Err(Error::Dimension(
            "form dimension vs set ambient dimension".into(),
        ));
    }
    let mut b = ProgramBuilder::new();
    let xi = b.add_var("xi");
    let si = SemiInfiniteQuadratic {
        x_mat: crate::conic::const_exprs(form.matrix()),
        x_vec: form
            .linear()
            .iter()
            .map(|&v| LinExpr::constant(v))
            .collect(),
        xi: LinExpr::var(xi),
    };
    compile_semi_infinite(&mut b, set, &si, "relax")?;
    b.set_objective(vec![(xi, 1.0)]);
    let sol = crate::conic::solve(&b.build(), &crate::conic::SolveSettings::with_tol(tol))?;
    match sol.status {
        crate::conic::SolveStatus::Optimal => Ok(sol.objective),
        other => Err(Error::Numerical(format!(
            "relaxation solve ended with status {other:?}"
        ))),
    }
}

/// Emit the conic representation of the constraint into `b`. Returns the
/// compilation mode (exact or the applicable tightness factor).
pub fn compile_semi_infinite(
    b: &mut ProgramBuilder,
    set: &UncertaintySet,
    c: &SemiInfiniteQuadratic,
    label: &str,
) -> Result<SemiInfiniteMode> {
    let n = c.x_mat.len();
    if c.x_vec.len() != n {
        return Err(Error::Dimension("semi-infinite constraint shapes".into()));
    }
    if n != set.dim_out() {
        return Err(Error::Dimension(format!(
            "constraint over dimension {n}, set lives in {}",
            set.dim_out()
        )));
    }
    match set {
        UncertaintySet::Zero { .. } => {
            b.add_nonneg(c.xi.clone());
            Ok(SemiInfiniteMode::Degenerate)
        }
        UncertaintySet::Spectratope(s) => compile_spectratope(b, set, s, c, label),
        UncertaintySet::Ellitope(_) => compile_ellitope(b, set, c, label),
    }
}

fn compile_ellitope(
    b: &mut ProgramBuilder,
    set: &UncertaintySet,
    c: &SemiInfiniteQuadratic,
    label: &str,
) -> Result<SemiInfiniteMode> {
    let e = match set {
        UncertaintySet::Ellitope(e) => e,
        _ => unreachable!(),
    };
    let proj = e.proj();
    let nbar = proj.ncols();
    let rho = set.rho();
    let pxp = congruence(proj, &c.x_mat);
    let px = mat_t_vec(proj, &c.x_vec);
    let k = e.blocks().len();

    if k == 1 {
        // Exact S-lemma LMI:
        // [[lam Qbar - P'XP, -P'x], [-x'P, xi - lam]] psd, lam >= 0.
        let index_set = set.index_set().expect("ellitope has an index set");
        let qbar = e.blocks()[0].clone() / (rho * index_set.max_t1());
        let lam = b.add_var(&format!("{label}/lam"));
        b.add_nonneg(LinExpr::var(lam));
        let mut m: ExprMat = vec![vec![LinExpr::default(); nbar + 1]; nbar + 1];
        for i in 0..nbar {
            for j in 0..nbar {
                let mut entry = pxp[i][j].neg();
                entry.push(lam, qbar[(i, j)]);
                entry.compact();
                m[i][j] = entry;
            }
            m[i][nbar] = px[i].neg();
            m[nbar][i] = px[i].neg();
        }
        let mut corner = c.xi.clone();
        corner.push(lam, -1.0);
        corner.compact();
        m[nbar][nbar] = corner;
        b.add_psd(&m);
        return Ok(SemiInfiniteMode::Exact);
    }

    // Safe approximation: lam_k >= 0,
    // [[sum lam_k S_k - P'XP, -P'x], [-x'P, tau]] psd,
    // rho phi_T(lam) + tau <= xi.
    let lam = b.add_vars(&format!("{label}/lam"), k);
    let tau = b.add_var(&format!("{label}/tau"));
    let mut m: ExprMat = vec![vec![LinExpr::default(); nbar + 1]; nbar + 1];
    for i in 0..nbar {
        for j in 0..nbar {
            let mut entry = pxp[i][j].neg();
            for (kk, s) in e.blocks().iter().enumerate() {
                entry.push(lam[kk], s[(i, j)]);
            }
            entry.compact();
            m[i][j] = entry;
        }
        m[i][nbar] = px[i].neg();
        m[nbar][i] = px[i].neg();
    }
    m[nbar][nbar] = LinExpr::var(tau);
    b.add_psd(&m);

    let s_phi = b.add_var(&format!("{label}/phi"));
    let template = support_phi_epigraph(set.index_set().expect("ellitope has an index set"))?;
    let lam_exprs: Vec<LinExpr> = lam.iter().map(|&v| LinExpr::var(v)).collect();
    template.emit(b, &lam_exprs, &LinExpr::var(s_phi));
    let mut budget = c.xi.clone();
    budget.push(s_phi, -rho);
    budget.push(tau, -1.0);
    budget.compact();
    b.add_nonneg(budget);
    Ok(SemiInfiniteMode::SafeEllitope {
        kappa: kappa_ellitope(k),
    })
}

fn compile_spectratope(
    b: &mut ProgramBuilder,
    set: &UncertaintySet,
    s: &Spectratope,
    c: &SemiInfiniteQuadratic,
    label: &str,
) -> Result<SemiInfiniteMode> {
    let proj = s.proj();
    let nbar = proj.ncols();
    let rho = set.rho();
    let pxp = congruence(proj, &c.x_mat);
    let px = mat_t_vec(proj, &c.x_vec);

    let (sum_sstar, lam_exprs) = spectratope_multiplier(b, s, label);

    let tau = b.add_var(&format!("{label}/tau"));
    let mut m: ExprMat = vec![vec![LinExpr::default(); nbar + 1]; nbar + 1];
    for i in 0..nbar {
        for j in 0..nbar {
            let mut entry = sum_sstar[i][j].clone();
            entry.add_scaled(&pxp[i][j], -1.0);
            entry.compact();
            m[i][j] = entry;
        }
        m[i][nbar] = px[i].neg();
        m[nbar][i] = px[i].neg();
    }
    m[nbar][nbar] = LinExpr::var(tau);
    b.add_psd(&m);

    let s_phi = b.add_var(&format!("{label}/phi"));
    let template = support_phi_epigraph(set.index_set().expect("spectratope has an index set"))?;
    template.emit(b, &lam_exprs, &LinExpr::var(s_phi));
    let mut budget = c.xi.clone();
    budget.push(s_phi, -rho);
    budget.push(tau, -1.0);
    budget.compact();
    b.add_nonneg(budget);
    Ok(SemiInfiniteMode::SafeSpectratope {
        kappa: kappa_spectratope(s.total_block_size()),
    })
}

/// Allocate the PSD multipliers `Lambda_k` of a spectratope and return
/// `sum_k S_k^*[Lambda_k]` as expressions along with `lambda[Lambda]`
/// (the trace vector).
pub fn spectratope_multiplier(
    b: &mut ProgramBuilder,
    s: &Spectratope,
    label: &str,
) -> (ExprMat, Vec<LinExpr>) {
    let nbar = s.proj().ncols();
    let mut sum_sstar: ExprMat = vec![vec![LinExpr::default(); nbar]; nbar];
    let mut lam_exprs = Vec::with_capacity(s.blocks().len());
    for (k, blk) in s.blocks().iter().enumerate() {
        let f = blk.side();
        let lam_k = b.add_sym_var(&format!("{label}/Lambda{k}"), f);
        b.add_psd(&lam_k);
        let mut trace = LinExpr::default();
        for a in 0..f {
            trace.add_scaled(&lam_k[a][a], 1.0);
        }
        trace.compact();
        lam_exprs.push(trace);
        // [S_k^*[L]]_{ij} = Tr(L * (S^{ki} S^{kj} + S^{kj} S^{ki}) / 2).
        for i in 0..nbar {
            for j in i..nbar {
                let prod = blk.coeffs()[i].clone() * &blk.coeffs()[j];
                let m = 0.5 * (&prod + prod.transpose());
                let mut entry = LinExpr::default();
                for a in 0..f {
                    for bb in 0..f {
                        let w = m[(a, bb)];
                        if w != 0.0 {
                            entry.add_scaled(&lam_k[a][bb], w);
                        }
                    }
                }
                entry.compact();
                sum_sstar[i][j].add_scaled(&entry, 1.0);
                if i != j {
                    sum_sstar[j][i].add_scaled(&entry, 1.0);
                }
            }
        }
    }
    for row in &mut sum_sstar {
        for e in row {
            e.compact();
        }
    }
    (sum_sstar, lam_exprs)
}
