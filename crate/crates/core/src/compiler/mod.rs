//! Compilation of performance specifications into conic constraints.
//!
//! Each specification on the closed-loop trajectory becomes a fragment of
//! one conic program over the policy coordinates and per-constraint
//! auxiliaries. Averaged-quadratic and mean-quadratic bounds produce a Schur
//! LMI, a scalar budget row and a semi-infinite quadratic constraint that is
//! either reformulated exactly (single ellipsoid) or safely approximated;
//! linear mean bounds and covariance caps compile to single LMIs.

mod semi_infinite;

pub use semi_infinite::{
    compile_semi_infinite, kappa_ellitope, kappa_for, kappa_spectratope, relaxation_value,
    spectratope_multiplier, SemiInfiniteMode, SemiInfiniteQuadratic,
};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::conic::{self, ExprMat, LinExpr, ProgramBuilder, SolveSettings, VarId};
use crate::error::{Error, Result};
use crate::linalg;
use crate::policy::PobPolicy;
use crate::system::TrajectoryMaps;
use crate::uncertainty::UncertaintySet;

/// `E_eps[<A (w - beta), (w - beta)>] <= gamma` robust over the
/// deterministic disturbance set.
#[derive(Debug, Clone)]
pub struct SpecAveragedQuadratic {
    pub a: DMatrix<f64>,
    pub beta: DVector<f64>,
    pub gamma: f64,
}

/// `<a, mean(w)> <= gamma` robust over the disturbance set.
#[derive(Debug, Clone)]
pub struct SpecLinearMean {
    pub a: DVector<f64>,
    pub gamma: f64,
}

/// `<A (mean(w) - beta), mean(w) - beta> <= gamma` robust over the set.
#[derive(Debug, Clone)]
pub struct SpecMeanQuadratic {
    pub a: DMatrix<f64>,
    pub beta: DVector<f64>,
    pub gamma: f64,
}

/// `Q Sigma_w Q' <= Sigma` in the PSD order.
#[derive(Debug, Clone)]
pub struct SpecCovarianceBound {
    pub q: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub enum PerfSpec {
    AveragedQuadratic(SpecAveragedQuadratic),
    LinearMean(SpecLinearMean),
    MeanQuadratic(SpecMeanQuadratic),
    CovarianceBound(SpecCovarianceBound),
}

impl PerfSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            PerfSpec::AveragedQuadratic(_) => "averaged_quadratic",
            PerfSpec::LinearMean(_) => "linear_mean",
            PerfSpec::MeanQuadratic(_) => "mean_quadratic",
            PerfSpec::CovarianceBound(_) => "covariance_bound",
        }
    }

    /// Scalar right-hand side, when the spec has one.
    pub fn gamma(&self) -> Option<f64> {
        match self {
            PerfSpec::AveragedQuadratic(s) => Some(s.gamma),
            PerfSpec::LinearMean(s) => Some(s.gamma),
            PerfSpec::MeanQuadratic(s) => Some(s.gamma),
            PerfSpec::CovarianceBound(_) => None,
        }
    }
}

/// Optimization mode: minimize a weighted sum of the selected specs'
/// right-hand sides, treated as variables.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Objective {
    /// `(spec index, weight)` pairs.
    pub terms: Vec<(usize, f64)>,
}

/// Affine data derived from one quadratic specification: the constant
/// `r = beta' A beta` and the linear parts `p[chi]`, `q[chi]` defined by
/// the identity `-2 beta' A Z[chi] [z; 1] = 2 p[chi]' z + q[chi]`.
#[derive(Debug, Clone)]
pub struct CompiledDerived {
    pub r: f64,
    pub p: Vec<LinExpr>,
    pub q: LinExpr,
    pub r_factor: DMatrix<f64>,
}

/// Linear parts of `weight' Z[chi] [z; 1]` written as `2 p' z + q`.
pub fn derive_linear_parts(
    maps: &TrajectoryMaps,
    chi_vars: &[VarId],
    weight: &DVector<f64>,
) -> (Vec<LinExpr>, LinExpr) {
    let n_zeta = maps.dims().n_zeta();
    let row = DMatrix::from_fn(1, weight.len(), |_, j| weight[j]);
    let g = maps.zmap().left_mul(&row).to_exprs(chi_vars);
    let p = (0..n_zeta).map(|j| g[0][j].scaled(0.5)).collect();
    let q = g[0][n_zeta].clone();
    (p, q)
}

/// Per-constraint compilation record for the design report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub index: usize,
    pub kind: String,
    /// `exact`, `safe-approx`, `degenerate` or `lmi`.
    pub mode: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    /// Sides of the PSD blocks this constraint contributed.
    pub psd_blocks: Vec<usize>,
    /// Number of auxiliary scalar variables introduced.
    pub aux_variables: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverSummary {
    pub status: String,
    pub iterations: u32,
    /// Wall-clock seconds; kept out of the serialized report so identical
    /// runs produce byte-identical artifacts.
    #[serde(skip_serializing, default)]
    pub solve_time_s: f64,
    pub gap_rel: f64,
    pub tol: f64,
}

/// Structured record of a compilation (and optionally a solve).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignReport {
    pub constraints: Vec<ConstraintReport>,
    pub variables_total: usize,
    pub variables_chi: usize,
    pub cone_rows: usize,
    pub equilibration: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feasible: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_slack: Option<f64>,
}

/// Assembled program plus the bookkeeping needed to interpret solutions.
#[derive(Debug)]
pub struct Assembled {
    pub program: conic::ConicProgram,
    pub report: DesignReport,
    pub chi_vars: Vec<VarId>,
    /// Feasibility-mode slack variable (minimized max constraint slack).
    pub slack: Option<VarId>,
    /// Right-hand-side variables in optimization mode, per spec index.
    pub gamma_vars: Vec<Option<VarId>>,
}

/// Accepted worst slack for declaring a feasibility-mode program feasible.
pub const SLACK_TOL: f64 = 1e-7;

struct Assembler<'a> {
    b: ProgramBuilder,
    maps: &'a TrajectoryMaps,
    set: &'a UncertaintySet,
    chi_vars: Vec<VarId>,
    r_factor: DMatrix<f64>,
    slack: Option<VarId>,
    constraints: Vec<ConstraintReport>,
}

impl<'a> Assembler<'a> {
    fn slack_expr(&self) -> LinExpr {
        match self.slack {
            Some(v) => LinExpr::var(v),
            None => LinExpr::constant(0.0),
        }
    }

    /// Report bookkeeping for a compiled semi-infinite constraint.
    fn si_footprint(&self, psd_blocks: &mut Vec<usize>, aux: &mut usize, mode: &SemiInfiniteMode) {
        match self.set {
            UncertaintySet::Zero { .. } => {}
            UncertaintySet::Ellitope(e) => {
                psd_blocks.push(e.proj().ncols() + 1);
                *aux += match mode {
                    SemiInfiniteMode::Exact => 1,
                    _ => e.blocks().len() + 2,
                };
            }
            UncertaintySet::Spectratope(s) => {
                psd_blocks.push(s.proj().ncols() + 1);
                psd_blocks.extend(s.blocks().iter().map(|b| b.side()));
                *aux += s
                    .blocks()
                    .iter()
                    .map(|b| b.side() * (b.side() + 1) / 2)
                    .sum::<usize>()
                    + 2;
            }
        }
    }

    /// Shared body of the averaged and mean quadratic specs: the Schur LMI
    /// (a), the budget row (b) and the routed semi-infinite part (c).
    /// `include_noise` adds the Frobenius noise term to the budget.
    fn quadratic_fragment(
        &mut self,
        idx: usize,
        a: &DMatrix<f64>,
        beta: &DVector<f64>,
        gamma: LinExpr,
        include_noise: bool,
    ) -> Result<()> {
        let dims = self.maps.dims();
        let (n_w, n_zeta) = (dims.n_w(), dims.n_zeta());
        if a.nrows() != n_w || a.ncols() != n_w || beta.len() != n_w {
            return Err(Error::Dimension(format!(
                "spec {idx}: quadratic weight must be {n_w}x{n_w} with offset length {n_w}"
            )));
        }
        let a_h = linalg::psd_sqrt_reduced(a, 1e-12)
            .map_err(|_| Error::Input(format!("spec {idx}: weight matrix is not PSD")))?;
        let rank = a_h.nrows();
        let r_const = (beta.transpose() * a * beta)[(0, 0)];
        let weight = -2.0 * (a * beta);
        let (p, q) = derive_linear_parts(self.maps, &self.chi_vars, &weight);
        let label = format!("spec{idx}");

        let x_mat = self.b.add_sym_var(&format!("{label}/X"), n_zeta);
        let x_vec_ids = self.b.add_vars(&format!("{label}/x"), n_zeta);
        let alpha = self.b.add_var(&format!("{label}/alpha"));
        let delta = self.b.add_var(&format!("{label}/delta"));
        let mut aux = n_zeta * (n_zeta + 1) / 2 + n_zeta + 2;
        let mut psd_blocks = vec![n_zeta + 1 + rank];

        // (a): [[X, x, Fz'], [x', alpha, f1'], [Fz, f1, I]] psd with
        // F = A_h Z[chi] split into zeta columns and the constant column.
        let f_exprs = self.maps.zmap().left_mul(&a_h).to_exprs(&self.chi_vars);
        let side = n_zeta + 1 + rank;
        let mut m: ExprMat = vec![vec![LinExpr::default(); side]; side];
        for i in 0..n_zeta {
            for j in 0..n_zeta {
                m[i][j] = x_mat[i][j].clone();
            }
            m[i][n_zeta] = LinExpr::var(x_vec_ids[i]);
            m[n_zeta][i] = LinExpr::var(x_vec_ids[i]);
        }
        m[n_zeta][n_zeta] = LinExpr::var(alpha);
        for rr in 0..rank {
            for j in 0..=n_zeta {
                m[n_zeta + 1 + rr][j] = f_exprs[rr][j].clone();
                m[j][n_zeta + 1 + rr] = f_exprs[rr][j].clone();
            }
            m[n_zeta + 1 + rr][n_zeta + 1 + rr] = LinExpr::constant(1.0);
        }
        self.b.add_psd(&m);

        // (b): alpha + delta (+ Frobenius term) + r <= gamma (+ slack).
        let mut budget = gamma;
        budget.constant -= r_const;
        budget.push(alpha, -1.0);
        budget.push(delta, -1.0);
        if include_noise && rank > 0 {
            let g_noise = self
                .maps
                .emap()
                .left_mul(&a_h)
                .right_mul(&self.r_factor)
                .to_exprs(&self.chi_vars);
            let fro = self.b.add_var(&format!("{label}/fro"));
            aux += 1;
            let mut rows = vec![LinExpr::var(fro), LinExpr::constant(0.5)];
            for row in &g_noise {
                for e in row {
                    rows.push(e.clone());
                }
            }
            self.b.add_rsoc(rows);
            budget.push(fro, -1.0);
        }
        budget.add_scaled(&self.slack_expr(), 1.0);
        budget.compact();
        self.b.add_nonneg(budget);

        // (c): for all zeta in D: zeta' X zeta + 2 zeta' (x + p) <= delta - q.
        let x_vec: Vec<LinExpr> = x_vec_ids
            .iter()
            .zip(&p)
            .map(|(&xv, pe)| {
                let mut e = LinExpr::var(xv);
                e.add_scaled(pe, 1.0);
                e.compact();
                e
            })
            .collect();
        let mut xi = LinExpr::var(delta);
        xi.add_scaled(&q, -1.0);
        xi.compact();
        let si = SemiInfiniteQuadratic { x_mat, x_vec, xi };
        let mode = compile_semi_infinite(&mut self.b, self.set, &si, &label)?;
        self.si_footprint(&mut psd_blocks, &mut aux, &mode);
        self.constraints.push(ConstraintReport {
            index: idx,
            kind: if include_noise {
                "averaged_quadratic".into()
            } else {
                "mean_quadratic".into()
            },
            mode: mode.label().into(),
            kappa: mode.kappa(),
            psd_blocks,
            aux_variables: aux,
        });
        Ok(())
    }

    fn linear_mean_fragment(&mut self, idx: usize, a: &DVector<f64>, gamma: LinExpr) -> Result<()> {
        let dims = self.maps.dims();
        if a.len() != dims.n_w() {
            return Err(Error::Dimension(format!(
                "spec {idx}: linear weight length {} vs trajectory dimension {}",
                a.len(),
                dims.n_w()
            )));
        }
        let (p, q) = derive_linear_parts(self.maps, &self.chi_vars, a);
        let label = format!("spec{idx}");
        match self.set {
            UncertaintySet::Zero { .. } => {
                // Collapses to q[chi] <= gamma at zeta = 0.
                let mut row = gamma;
                row.add_scaled(&q, -1.0);
                row.add_scaled(&self.slack_expr(), 1.0);
                row.compact();
                self.b.add_nonneg(row);
                self.constraints.push(ConstraintReport {
                    index: idx,
                    kind: "linear_mean".into(),
                    mode: "degenerate".into(),
                    kappa: None,
                    psd_blocks: vec![],
                    aux_variables: 0,
                });
                Ok(())
            }
            UncertaintySet::Ellitope(e) => {
                // lam >= 0, [[alpha, -p'P], [-P'p, sum lam_k S_k]] psd,
                // alpha + rho phi_T(lam) + q <= gamma. Exact for any K.
                let proj = e.proj();
                let nbar = proj.ncols();
                let k = e.blocks().len();
                let lam = self.b.add_vars(&format!("{label}/lam"), k);
                let alpha = self.b.add_var(&format!("{label}/alpha"));
                let ptp = conic::mat_t_vec(proj, &p);
                let mut m: ExprMat = vec![vec![LinExpr::default(); nbar + 1]; nbar + 1];
                m[0][0] = LinExpr::var(alpha);
                for i in 0..nbar {
                    m[0][1 + i] = ptp[i].neg();
                    m[1 + i][0] = ptp[i].neg();
                    for j in 0..nbar {
                        let mut entry = LinExpr::default();
                        for (kk, s) in e.blocks().iter().enumerate() {
                            entry.push(lam[kk], s[(i, j)]);
                        }
                        entry.compact();
                        m[1 + i][1 + j] = entry;
                    }
                }
                self.b.add_psd(&m);
                let s_phi = self.b.add_var(&format!("{label}/phi"));
                let template = crate::uncertainty::support_phi_epigraph(
                    self.set.index_set().expect("ellitope"),
                )?;
                let lam_exprs: Vec<LinExpr> = lam.iter().map(|&v| LinExpr::var(v)).collect();
                template.emit(&mut self.b, &lam_exprs, &LinExpr::var(s_phi));
                let mut row = gamma;
                row.push(alpha, -1.0);
                row.push(s_phi, -self.set.rho());
                row.add_scaled(&q, -1.0);
                row.add_scaled(&self.slack_expr(), 1.0);
                row.compact();
                self.b.add_nonneg(row);
                self.constraints.push(ConstraintReport {
                    index: idx,
                    kind: "linear_mean".into(),
                    mode: "exact".into(),
                    kappa: None,
                    psd_blocks: vec![nbar + 1],
                    aux_variables: k + 2,
                });
                Ok(())
            }
            UncertaintySet::Spectratope(s) => {
                // Spectratopic variant: PSD multipliers instead of scalars.
                let proj = s.proj();
                let nbar = proj.ncols();
                let (sum_sstar, lam_exprs) = spectratope_multiplier(&mut self.b, s, &label);
                let alpha = self.b.add_var(&format!("{label}/alpha"));
                let ptp = conic::mat_t_vec(proj, &p);
                let mut m: ExprMat = vec![vec![LinExpr::default(); nbar + 1]; nbar + 1];
                m[0][0] = LinExpr::var(alpha);
                for i in 0..nbar {
                    m[0][1 + i] = ptp[i].neg();
                    m[1 + i][0] = ptp[i].neg();
                    for j in 0..nbar {
                        m[1 + i][1 + j] = sum_sstar[i][j].clone();
                    }
                }
                self.b.add_psd(&m);
                let s_phi = self.b.add_var(&format!("{label}/phi"));
                let template = crate::uncertainty::support_phi_epigraph(
                    self.set.index_set().expect("spectratope"),
                )?;
                template.emit(&mut self.b, &lam_exprs, &LinExpr::var(s_phi));
                let mut row = gamma;
                row.push(alpha, -1.0);
                row.push(s_phi, -self.set.rho());
                row.add_scaled(&q, -1.0);
                row.add_scaled(&self.slack_expr(), 1.0);
                row.compact();
                self.b.add_nonneg(row);
                let mut psd_blocks = vec![nbar + 1];
                psd_blocks.extend(s.blocks().iter().map(|b| b.side()));
                self.constraints.push(ConstraintReport {
                    index: idx,
                    kind: "linear_mean".into(),
                    mode: "exact".into(),
                    kappa: None,
                    psd_blocks,
                    aux_variables: s
                        .blocks()
                        .iter()
                        .map(|b| b.side() * (b.side() + 1) / 2)
                        .sum::<usize>()
                        + 2,
                });
                Ok(())
            }
        }
    }

    fn covariance_fragment(&mut self, idx: usize, spec: &SpecCovarianceBound) -> Result<()> {
        let dims = self.maps.dims();
        let (n_w, n_eps) = (dims.n_w(), dims.n_eps());
        if spec.q.ncols() != n_w {
            return Err(Error::Dimension(format!(
                "spec {idx}: covariance weight has {} columns, expected {n_w}",
                spec.q.ncols()
            )));
        }
        let n_k = spec.q.nrows();
        if spec.sigma.nrows() != n_k || spec.sigma.ncols() != n_k {
            return Err(Error::Dimension(format!(
                "spec {idx}: covariance bound must be {n_k}x{n_k}"
            )));
        }
        let sig_scale = linalg::sym_op_norm(&spec.sigma).max(1e-300);
        if linalg::min_eig(&spec.sigma) <= 1e-12 * sig_scale {
            return Err(Error::Input(format!(
                "spec {idx}: covariance bound must be positive definite"
            )));
        }
        // [[Sigma, Q E[chi] R], [R'E'[chi]Q', I]] psd (+ slack on the diagonal).
        let qer = self
            .maps
            .emap()
            .left_mul(&spec.q)
            .right_mul(&self.r_factor)
            .to_exprs(&self.chi_vars);
        let side = n_k + n_eps;
        let mut m: ExprMat = vec![vec![LinExpr::default(); side]; side];
        for i in 0..n_k {
            for j in 0..n_k {
                m[i][j] = LinExpr::constant(spec.sigma[(i, j)]);
            }
            for j in 0..n_eps {
                m[i][n_k + j] = qer[i][j].clone();
                m[n_k + j][i] = qer[i][j].clone();
            }
        }
        for j in 0..n_eps {
            m[n_k + j][n_k + j] = LinExpr::constant(1.0);
        }
        if let Some(sl) = self.slack {
            for i in 0..side {
                m[i][i].push(sl, 1.0);
            }
        }
        self.b.add_psd(&m);
        self.constraints.push(ConstraintReport {
            index: idx,
            kind: "covariance_bound".into(),
            mode: "lmi".into(),
            kappa: None,
            psd_blocks: vec![side],
            aux_variables: 0,
        });
        Ok(())
    }
}

/// Assemble the conic program for a list of specifications.
///
/// Feasibility mode (no objective): one shared slack variable relaxes each
/// spec's binding surface and is minimized; the program is declared feasible
/// when the optimal slack stays below [`SLACK_TOL`]. Optimization mode: the
/// listed specs' right-hand sides become variables and the weighted sum is
/// minimized.
pub fn assemble(
    specs: &[PerfSpec],
    maps: &TrajectoryMaps,
    pi: &DMatrix<f64>,
    set: &UncertaintySet,
    objective: Option<&Objective>,
) -> Result<Assembled> {
    let dims = maps.dims();
    if set.dim_out() != dims.n_zeta() {
        return Err(Error::Dimension(format!(
            "uncertainty set dimension {} vs zeta dimension {}",
            set.dim_out(),
            dims.n_zeta()
        )));
    }
    if pi.nrows() != dims.n_eps() || pi.ncols() != dims.n_eps() {
        return Err(Error::Dimension("noise covariance shape".into()));
    }
    let r_factor = linalg::psd_factor(pi)?;

    let mut b = ProgramBuilder::new();
    let layout = maps.layout();
    let mut chi_vars = Vec::with_capacity(maps.chi_dim());
    for t in 0..layout.horizon {
        chi_vars.extend(b.add_vars(&format!("h/{t}"), layout.n_u));
    }
    for t in 0..layout.horizon {
        for i in 0..=t {
            chi_vars.extend(b.add_vars(&format!("H/{t}/{i}"), layout.n_u * layout.n_y));
        }
    }

    let mut gamma_vars: Vec<Option<VarId>> = vec![None; specs.len()];
    if let Some(obj) = objective {
        for &(spec_idx, _) in &obj.terms {
            let spec = specs.get(spec_idx).ok_or_else(|| {
                Error::Config(format!("objective references spec {spec_idx} out of range"))
            })?;
            if spec.gamma().is_none() {
                return Err(Error::Config(format!(
                    "objective term on spec {spec_idx}: only scalar right-hand sides can be optimized"
                )));
            }
            if gamma_vars[spec_idx].is_none() {
                gamma_vars[spec_idx] = Some(b.add_var(&format!("gamma/{spec_idx}")));
            }
        }
    }
    let slack = if objective.is_none() {
        Some(b.add_var("sigma"))
    } else {
        None
    };

    let mut asm = Assembler {
        b,
        maps,
        set,
        chi_vars,
        r_factor,
        slack,
        constraints: Vec::new(),
    };
    if let Some(sl) = slack {
        asm.b.add_nonneg(LinExpr::var(sl));
    }

    for (idx, spec) in specs.iter().enumerate() {
        let gamma_expr = |fallback: f64| match gamma_vars[idx] {
            Some(v) => LinExpr::var(v),
            None => LinExpr::constant(fallback),
        };
        match spec {
            PerfSpec::AveragedQuadratic(s) => {
                asm.quadratic_fragment(idx, &s.a, &s.beta, gamma_expr(s.gamma), true)?;
            }
            PerfSpec::MeanQuadratic(s) => {
                asm.quadratic_fragment(idx, &s.a, &s.beta, gamma_expr(s.gamma), false)?;
            }
            PerfSpec::LinearMean(s) => {
                asm.linear_mean_fragment(idx, &s.a, gamma_expr(s.gamma))?;
            }
            PerfSpec::CovarianceBound(s) => asm.covariance_fragment(idx, s)?,
        }
    }

    match objective {
        Some(obj) => {
            let terms: Vec<(VarId, f64)> = obj
                .terms
                .iter()
                .map(|&(spec_idx, w)| (gamma_vars[spec_idx].expect("allocated above"), w))
                .collect();
            asm.b.set_objective(terms);
        }
        None => {
            asm.b
                .set_objective(vec![(slack.expect("feasibility slack"), 1.0)]);
        }
    }

    let chi_dim = maps.chi_dim();
    let program = asm.b.build();
    let report = DesignReport {
        constraints: asm.constraints,
        variables_total: program.n_vars,
        variables_chi: chi_dim,
        cone_rows: program.cone_row_count(),
        equilibration: "solver-internal Ruiz equilibration, 10 iterations".into(),
        solver: None,
        feasible: None,
        max_slack: None,
    };
    Ok(Assembled {
        program,
        report,
        chi_vars: asm.chi_vars,
        slack,
        gamma_vars,
    })
}

/// Outcome of a feasibility-mode design.
#[derive(Debug)]
pub struct DesignOutcome {
    pub feasible: bool,
    pub max_slack: f64,
    pub policy: Option<PobPolicy>,
    pub report: DesignReport,
    pub solution: conic::Solution,
}

/// Compile, solve and extract the policy of a feasibility design.
pub fn design(
    specs: &[PerfSpec],
    maps: &TrajectoryMaps,
    pi: &DMatrix<f64>,
    set: &UncertaintySet,
    settings: &SolveSettings,
) -> Result<DesignOutcome> {
    let assembled = assemble(specs, maps, pi, set, None)?;
    let solution = conic::solve(&assembled.program, settings)?;
    let mut report = assembled.report.clone();
    report.solver = Some(SolverSummary {
        status: format!("{:?}", solution.status),
        iterations: solution.stats.iterations,
        solve_time_s: solution.stats.solve_time,
        gap_rel: solution.stats.gap_rel,
        tol: settings.tol,
    });
    match solution.status {
        conic::SolveStatus::Optimal => {
            let slack_var = assembled.slack.expect("feasibility mode");
            let max_slack = solution.primal[slack_var];
            let feasible = max_slack <= SLACK_TOL;
            report.feasible = Some(feasible);
            report.max_slack = Some(max_slack);
            let policy = if feasible {
                Some(conic::extract_policy(&solution, &assembled.program)?)
            } else {
                None
            };
            Ok(DesignOutcome {
                feasible,
                max_slack,
                policy,
                report,
                solution,
            })
        }
        conic::SolveStatus::Infeasible => {
            report.feasible = Some(false);
            Ok(DesignOutcome {
                feasible: false,
                max_slack: f64::INFINITY,
                policy: None,
                report,
                solution,
            })
        }
        conic::SolveStatus::NumericalTrouble => Err(Error::Numerical(
            "design solve did not reach the requested accuracy".into(),
        )),
    }
}
