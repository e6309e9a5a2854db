//! Ellitopic and spectratopic uncertainty sets.
//!
//! A set at uncertainty level `rho` collects the points `x = P z` for which
//! some `t` in the index set `T` dominates the per-block levels of `z`:
//! quadratic levels `<S_k z, z> <= rho t_k` for ellitopes, squared spectral
//! levels `S_k[z]^2 <= rho t_k I` for spectratopes. `T` is a convex compact
//! monotone subset of the nonnegative orthant touching its interior, so
//! membership of `x` reduces to membership of the normalized level vector in
//! `T`, and radial scaling questions reduce to the gauge of `T`.

mod brute_force;

pub use brute_force::{brute_force_max, brute_force_max_with_starts};

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::conic::{self, LinExpr, ProgramBuilder, SolveSettings, SolveStatus};
use crate::error::{Error, Result};
use crate::linalg::{self, sym_op_norm};

/// Relative tolerance for the PSD check on ellitope blocks.
pub const TOL_PSD_REL: f64 = 1e-9;
/// Relative tolerance for the positive-definite block-sum check.
pub const TOL_PD_REL: f64 = 1e-9;

/// Caller-supplied index set with a conic support-function representation.
///
/// Implementations assert, by contract, that the set is convex, compact,
/// monotone and intersects the interior of the nonnegative orthant; the
/// constructors only spot-check this with random feasibility probes.
pub trait CustomIndexSet: std::fmt::Debug + Send + Sync {
    fn block_count(&self) -> usize;
    /// `max_{t in T} lam' t` for `lam >= 0`.
    fn support(&self, lam: &DVector<f64>) -> f64;
    /// Membership of `t` in `T` within `tol`.
    fn contains(&self, t: &DVector<f64>, tol: f64) -> bool;
    /// Emit `{lam >= 0, phi_T(lam) <= s}`.
    fn emit_support_epigraph(&self, b: &mut ProgramBuilder, lam: &[LinExpr], s: &LinExpr);
    /// Emit `t in T`.
    fn emit_membership(&self, b: &mut ProgramBuilder, t: &[LinExpr]);
}

/// Index set `T` parameterizing per-block constraint levels.
#[derive(Debug, Clone)]
pub enum IndexSetT {
    /// `[0, 1]^K`.
    Box { blocks: usize },
    /// `{t >= 0 : sum_k t_k^(p/2) <= 1}` for `p >= 2`.
    PNormBall { blocks: usize, p: f64 },
    Custom(Arc<dyn CustomIndexSet>),
}

impl IndexSetT {
    pub fn block_count(&self) -> usize {
        match self {
            IndexSetT::Box { blocks } => *blocks,
            IndexSetT::PNormBall { blocks, .. } => *blocks,
            IndexSetT::Custom(c) => c.block_count(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            IndexSetT::Box { blocks } | IndexSetT::PNormBall { blocks, .. } if *blocks == 0 => {
                Err(Error::Input("index set needs at least one block".into()))
            }
            IndexSetT::PNormBall { p, .. } if p.is_nan() || *p < 2.0 => Err(Error::Input(format!(
                "p-norm index set requires p >= 2, got {p}"
            ))),
            IndexSetT::Custom(c) => {
                // Spot checks of the contract: 0 in T, T bounded-ish, and T
                // touches the interior of the orthant.
                let k = c.block_count();
                if k == 0 {
                    return Err(Error::Input("index set needs at least one block".into()));
                }
                let zero = DVector::zeros(k);
                if !c.contains(&zero, 1e-9) {
                    return Err(Error::Input(
                        "custom index set must contain the origin (monotone compact)".into(),
                    ));
                }
                let ones = DVector::from_element(k, 1.0);
                if c.support(&ones) <= 0.0 {
                    return Err(Error::Input(
                        "custom index set must intersect the interior of the orthant".into(),
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Support function `phi_T(lam) = max_{t in T} lam' t`, `lam >= 0`.
    pub fn support(&self, lam: &DVector<f64>) -> Result<f64> {
        if lam.len() != self.block_count() {
            return Err(Error::Dimension(format!(
                "support argument has {} entries, index set has {} blocks",
                lam.len(),
                self.block_count()
            )));
        }
        if lam.iter().any(|&v| v < 0.0) {
            return Err(Error::Input(
                "support function restricted to nonnegative weights".into(),
            ));
        }
        Ok(match self {
            IndexSetT::Box { .. } => lam.sum(),
            IndexSetT::PNormBall { p, .. } => {
                if *p <= 2.0 + 1e-12 {
                    lam.iter().fold(0.0_f64, |a, &v| a.max(v))
                } else {
                    // Conjugate exponent of p/2 applied to the t variables.
                    let pp = p / (p - 2.0);
                    lam.iter().map(|v| v.powf(pp)).sum::<f64>().powf(1.0 / pp)
                }
            }
            IndexSetT::Custom(c) => c.support(lam),
        })
    }

    /// Membership of `t` in `T` within `tol`.
    pub fn contains(&self, t: &DVector<f64>, tol: f64) -> bool {
        if t.len() != self.block_count() || t.iter().any(|&v| v < -tol) {
            return false;
        }
        match self {
            IndexSetT::Box { .. } => t.iter().all(|&v| v <= 1.0 + tol),
            IndexSetT::PNormBall { p, .. } => {
                let half = p / 2.0;
                let norm = t
                    .iter()
                    .map(|v| v.max(0.0).powf(half))
                    .sum::<f64>()
                    .powf(1.0 / half);
                norm <= 1.0 + tol
            }
            IndexSetT::Custom(c) => c.contains(t, tol),
        }
    }

    /// Gauge of `T` along `g >= 0`: the smallest `s >= 0` with `g in s T`.
    pub fn gauge(&self, g: &DVector<f64>) -> f64 {
        debug_assert_eq!(g.len(), self.block_count());
        match self {
            IndexSetT::Box { .. } => g.iter().fold(0.0_f64, |a, &v| a.max(v.max(0.0))),
            IndexSetT::PNormBall { p, .. } => {
                let half = p / 2.0;
                g.iter()
                    .map(|v| v.max(0.0).powf(half))
                    .sum::<f64>()
                    .powf(1.0 / half)
            }
            IndexSetT::Custom(c) => {
                let norm = g.amax();
                if norm == 0.0 {
                    return 0.0;
                }
                // Expand a bracket then bisect on s -> contains(g / s).
                let mut hi = 1.0_f64;
                let mut grow = 0;
                while !c.contains(&(g / hi), 1e-12) {
                    hi *= 2.0;
                    grow += 1;
                    if grow > 200 {
                        return f64::INFINITY;
                    }
                }
                let mut lo = 0.0_f64;
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid == lo || mid == hi {
                        break;
                    }
                    if c.contains(&(g / mid), 1e-12) {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                hi
            }
        }
    }

    /// `max_{t in T} t_1`, the scale entering the single-block ellipsoid case.
    pub fn max_t1(&self) -> f64 {
        let mut e1 = DVector::zeros(self.block_count());
        e1[0] = 1.0;
        self.support(&e1).expect("e1 is nonnegative")
    }

    /// Emit the conic membership `t in T`.
    pub fn emit_membership(&self, b: &mut ProgramBuilder, t: &[LinExpr]) {
        assert_eq!(t.len(), self.block_count());
        for e in t {
            b.add_nonneg(e.clone());
        }
        match self {
            IndexSetT::Box { .. } => {
                for e in t {
                    b.add_nonneg(LinExpr::constant(1.0) - e);
                }
            }
            IndexSetT::PNormBall { p, .. } => {
                if *p <= 2.0 + 1e-12 {
                    let mut sum = LinExpr::constant(1.0);
                    for e in t {
                        sum.add_scaled(e, -1.0);
                    }
                    b.add_nonneg(sum);
                } else if (*p - 4.0).abs() <= 1e-12 {
                    let mut rows = vec![LinExpr::constant(1.0)];
                    rows.extend(t.iter().cloned());
                    b.add_soc(rows);
                } else {
                    // t_k^(p/2) <= r_k through power cones, sum r = 1.
                    let r = b.add_vars("T/membership/r", t.len());
                    let mut sum = LinExpr::constant(-1.0);
                    for (k, e) in t.iter().enumerate() {
                        b.add_power3(
                            2.0 / p,
                            [LinExpr::var(r[k]), LinExpr::constant(1.0), e.clone()],
                        );
                        sum.push(r[k], 1.0);
                    }
                    b.add_eq(sum);
                }
            }
            IndexSetT::Custom(c) => c.emit_membership(b, t),
        }
    }
}

/// Reusable conic encoding of `{(lam, s) : lam >= 0, phi_T(lam) <= s}`.
#[derive(Debug, Clone)]
pub struct ConicBlockTemplate {
    set: IndexSetT,
}

impl ConicBlockTemplate {
    pub fn index_set(&self) -> &IndexSetT {
        &self.set
    }

    pub fn emit(&self, b: &mut ProgramBuilder, lam: &[LinExpr], s: &LinExpr) {
        assert_eq!(lam.len(), self.set.block_count());
        for e in lam {
            b.add_nonneg(e.clone());
        }
        match &self.set {
            IndexSetT::Box { .. } => {
                let mut row = s.clone();
                for e in lam {
                    row.add_scaled(e, -1.0);
                }
                b.add_nonneg(row);
            }
            IndexSetT::PNormBall { p, .. } => {
                if *p <= 2.0 + 1e-12 {
                    // phi = max_k lam_k.
                    for e in lam {
                        b.add_nonneg(s.clone() - e);
                    }
                } else if (*p - 4.0).abs() <= 1e-12 {
                    // Conjugate exponent 2: phi = ||lam||_2.
                    let mut rows = vec![s.clone()];
                    rows.extend(lam.iter().cloned());
                    b.add_soc(rows);
                } else {
                    // phi = ||lam||_q with q = p/(p-2): lam_k^q <= r_k s^(q-1),
                    // sum r = s, through power cones.
                    let q = p / (p - 2.0);
                    let r = b.add_vars("T/epigraph/r", lam.len());
                    let mut sum = s.neg();
                    for (k, e) in lam.iter().enumerate() {
                        b.add_power3(1.0 / q, [LinExpr::var(r[k]), s.clone(), e.clone()]);
                        sum.push(r[k], 1.0);
                    }
                    b.add_eq(sum);
                }
            }
            IndexSetT::Custom(c) => c.emit_support_epigraph(b, lam, s),
        }
    }
}

/// Conic encoding of the support-function epigraph of `T`.
pub fn support_phi_epigraph(set: &IndexSetT) -> Result<ConicBlockTemplate> {
    set.validate()?;
    Ok(ConicBlockTemplate { set: set.clone() })
}

/// Support function `phi_T`.
pub fn support_phi(set: &IndexSetT, lam: &DVector<f64>) -> Result<f64> {
    set.support(lam)
}

/// Quadratic objective `G(z) = z' Q z + 2 q' z`.
#[derive(Debug, Clone)]
pub struct QuadraticForm {
    q_mat: DMatrix<f64>,
    q_vec: DVector<f64>,
}

impl QuadraticForm {
    pub fn new(q_mat: DMatrix<f64>, q_vec: DVector<f64>) -> Result<Self> {
        if q_mat.nrows() != q_mat.ncols() || q_mat.nrows() != q_vec.len() {
            return Err(Error::Dimension("quadratic form shapes".into()));
        }
        let scale = sym_op_norm(&q_mat).max(1e-300);
        if linalg::op_norm(&(q_mat.clone() - q_mat.transpose())) > 1e-9 * scale {
            return Err(Error::Input("quadratic form matrix must be symmetric".into()));
        }
        Ok(QuadraticForm {
            q_mat: linalg::symmetrize(&q_mat),
            q_vec,
        })
    }

    pub fn dim(&self) -> usize {
        self.q_vec.len()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q_mat
    }

    pub fn linear(&self) -> &DVector<f64> {
        &self.q_vec
    }

    pub fn value(&self, z: &DVector<f64>) -> f64 {
        (z.transpose() * &self.q_mat * z)[(0, 0)] + 2.0 * self.q_vec.dot(z)
    }

    pub fn grad(&self, z: &DVector<f64>) -> DVector<f64> {
         2.0 * (&self.q_mat * z + &self.q_vec)
    }

    /// Homogenization `[[Q, q], [q', 0]]` with zero bottom-right entry.
    pub fn homogenized(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut h = DMatrix::zeros(n + 1, n + 1);
        h.view_mut((0, 0), (n, n)).copy_from(&self.q_mat);
        for i in 0..n {
            h[(i, n)] = self.q_vec[i];
            h[(n, i)] = self.q_vec[i];
        }
        h
    }
}

/// Ellitope `{P z : exists t in T, <S_k z, z> <= rho t_k}`.
#[derive(Debug, Clone)]
pub struct Ellitope {
    proj: DMatrix<f64>,
    blocks: Vec<DMatrix<f64>>,
    index_set: IndexSetT,
    rho: f64,
}

impl Ellitope {
    pub fn new(
        proj: DMatrix<f64>,
        blocks: Vec<DMatrix<f64>>,
        index_set: IndexSetT,
        rho: f64,
    ) -> Result<Self> {
        index_set.validate()?;
        if rho <= 0.0 || !rho.is_finite() {
            return Err(Error::Input(format!("rho must be positive, got {rho}")));
        }
        if blocks.is_empty() {
            return Err(Error::Input("ellitope needs at least one block".into()));
        }
        if blocks.len() != index_set.block_count() {
            return Err(Error::Dimension(format!(
                "{} quadratic blocks vs {} index-set blocks",
                blocks.len(),
                index_set.block_count()
            )));
        }
        let nbar = proj.ncols();
        let mut sum = DMatrix::zeros(nbar, nbar);
        for (k, s) in blocks.iter().enumerate() {
            if s.nrows() != nbar || s.ncols() != nbar {
                return Err(Error::Dimension(format!(
                    "block {k} is {}x{}, expected {nbar}x{nbar}",
                    s.nrows(),
                    s.ncols()
                )));
            }
            let scale = sym_op_norm(s).max(1e-300);
            if linalg::op_norm(&(s.clone() - s.transpose())) > 1e-9 * scale {
                return Err(Error::Input(format!("block {k} is not symmetric")));
            }
            if linalg::min_eig(s) < -TOL_PSD_REL * scale {
                return Err(Error::Input(format!(
                    "block {k} is not positive semidefinite"
                )));
            }
            sum += s;
        }
        let sum_scale = sym_op_norm(&sum).max(1e-300);
        if linalg::min_eig(&sum) <= TOL_PD_REL * sum_scale {
            return Err(Error::Input(
                "sum of quadratic blocks must be positive definite".into(),
            ));
        }
        Ok(Ellitope {
            proj,
            blocks,
            index_set,
            rho,
        })
    }

    pub fn proj(&self) -> &DMatrix<f64> {
        &self.proj
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }
}

/// One spectratope block: the coefficients of the symmetric-matrix-valued
/// linear map `S_k[z] = sum_i z_i S^{ki}`.
#[derive(Debug, Clone)]
pub struct SpectratopeBlock {
    coeffs: Vec<DMatrix<f64>>,
}

impl SpectratopeBlock {
    pub fn new(coeffs: Vec<DMatrix<f64>>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::Input("spectratope block needs coefficients".into()));
        }
        let f = coeffs[0].nrows();
        for (i, c) in coeffs.iter().enumerate() {
            if c.nrows() != f || c.ncols() != f {
                return Err(Error::Dimension(format!(
                    "coefficient {i} is {}x{}, expected {f}x{f}",
                    c.nrows(),
                    c.ncols()
                )));
            }
            let scale = sym_op_norm(c).max(1e-300);
            if linalg::op_norm(&(c.clone() - c.transpose())) > 1e-9 * scale {
                return Err(Error::Input(format!("coefficient {i} is not symmetric")));
            }
        }
        Ok(SpectratopeBlock { coeffs })
    }

    pub fn side(&self) -> usize {
        self.coeffs[0].nrows()
    }

    pub fn coeffs(&self) -> &[DMatrix<f64>] {
        &self.coeffs
    }

    /// `S_k[z]`.
    pub fn apply(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let f = self.side();
        let mut m = DMatrix::zeros(f, f);
        for (i, c) in self.coeffs.iter().enumerate() {
            if z[i] != 0.0 {
                m += c * z[i];
            }
        }
        m
    }
}

/// Spectratope `{P z : exists t in T, S_k[z]^2 <= rho t_k I}`.
#[derive(Debug, Clone)]
pub struct Spectratope {
    proj: DMatrix<f64>,
    blocks: Vec<SpectratopeBlock>,
    index_set: IndexSetT,
    rho: f64,
}

impl Spectratope {
    pub fn new(
        proj: DMatrix<f64>,
        blocks: Vec<SpectratopeBlock>,
        index_set: IndexSetT,
        rho: f64,
    ) -> Result<Self> {
        index_set.validate()?;
        if rho <= 0.0 || !rho.is_finite() {
            return Err(Error::Input(format!("rho must be positive, got {rho}")));
        }
        if blocks.is_empty() {
            return Err(Error::Input("spectratope needs at least one block".into()));
        }
        if blocks.len() != index_set.block_count() {
            return Err(Error::Dimension(format!(
                "{} blocks vs {} index-set blocks",
                blocks.len(),
                index_set.block_count()
            )));
        }
        let nbar = proj.ncols();
        for (k, blk) in blocks.iter().enumerate() {
            if blk.coeffs.len() != nbar {
                return Err(Error::Dimension(format!(
                    "block {k} has {} coefficient matrices, expected {nbar}",
                    blk.coeffs.len()
                )));
            }
        }
        // Boundedness: z -> (S_1[z], ..., S_K[z]) must be injective.
        let stacked_rows: usize = blocks.iter().map(|b| b.side() * b.side()).sum();
        let mut stacked = DMatrix::zeros(stacked_rows, nbar);
        let mut at = 0;
        for blk in &blocks {
            let f2 = blk.side() * blk.side();
            for (i, c) in blk.coeffs.iter().enumerate() {
                for (r, v) in c.iter().enumerate() {
                    stacked[(at + r, i)] = *v;
                }
            }
            let _ = f2;
            at += f2;
        }
        if linalg::rank(&stacked, 1e-12) < nbar {
            return Err(Error::Input(
                "spectratope is unbounded: coefficient map is not injective".into(),
            ));
        }
        Ok(Spectratope {
            proj,
            blocks,
            index_set,
            rho,
        })
    }

    pub fn proj(&self) -> &DMatrix<f64> {
        &self.proj
    }

    pub fn blocks(&self) -> &[SpectratopeBlock] {
        &self.blocks
    }

    /// Total block size `sum_k f_k`.
    pub fn total_block_size(&self) -> usize {
        self.blocks.iter().map(|b| b.side()).sum()
    }
}

/// How sampled points are placed inside the set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleStrategy {
    Interior,
    BoundaryBiased,
}

/// Deterministic disturbance set: an ellitope, a spectratope, or the
/// degenerate singleton `{0}`.
#[derive(Debug, Clone)]
pub enum UncertaintySet {
    Zero { dim: usize },
    Ellitope(Ellitope),
    Spectratope(Spectratope),
}

impl UncertaintySet {
    /// Ambient dimension of the points `x`.
    pub fn dim_out(&self) -> usize {
        match self {
            UncertaintySet::Zero { dim } => *dim,
            UncertaintySet::Ellitope(e) => e.proj.nrows(),
            UncertaintySet::Spectratope(s) => s.proj.nrows(),
        }
    }

    /// Dimension of the latent variable `z`.
    pub fn nbar(&self) -> usize {
        match self {
            UncertaintySet::Zero { .. } => 0,
            UncertaintySet::Ellitope(e) => e.proj.ncols(),
            UncertaintySet::Spectratope(s) => s.proj.ncols(),
        }
    }

    pub fn block_count(&self) -> usize {
        match self {
            UncertaintySet::Zero { .. } => 0,
            UncertaintySet::Ellitope(e) => e.blocks.len(),
            UncertaintySet::Spectratope(s) => s.blocks.len(),
        }
    }

    pub fn rho(&self) -> f64 {
        match self {
            UncertaintySet::Zero { .. } => 0.0,
            UncertaintySet::Ellitope(e) => e.rho,
            UncertaintySet::Spectratope(s) => s.rho,
        }
    }

    pub fn index_set(&self) -> Option<&IndexSetT> {
        match self {
            UncertaintySet::Zero { .. } => None,
            UncertaintySet::Ellitope(e) => Some(&e.index_set),
            UncertaintySet::Spectratope(s) => Some(&s.index_set),
        }
    }

    pub fn proj(&self) -> Option<&DMatrix<f64>> {
        match self {
            UncertaintySet::Zero { .. } => None,
            UncertaintySet::Ellitope(e) => Some(&e.proj),
            UncertaintySet::Spectratope(s) => Some(&s.proj),
        }
    }

    /// Same set shape at a different uncertainty level.
    pub fn with_rho(&self, rho: f64) -> Result<Self> {
        match self {
            UncertaintySet::Zero { dim } => Ok(UncertaintySet::Zero { dim: *dim }),
            UncertaintySet::Ellitope(e) => Ok(UncertaintySet::Ellitope(Ellitope::new(
                e.proj.clone(),
                e.blocks.clone(),
                e.index_set.clone(),
                rho,
            )?)),
            UncertaintySet::Spectratope(s) => Ok(UncertaintySet::Spectratope(Spectratope::new(
                s.proj.clone(),
                s.blocks.clone(),
                s.index_set.clone(),
                rho,
            )?)),
        }
    }

    /// Per-block levels of `z`: `<S_k z, z>` or the squared spectral norm of
    /// `S_k[z]`.
    pub fn levels(&self, z: &DVector<f64>) -> DVector<f64> {
        match self {
            UncertaintySet::Zero { .. } => DVector::zeros(0),
            UncertaintySet::Ellitope(e) => DVector::from_iterator(
                e.blocks.len(),
                e.blocks.iter().map(|s| (z.transpose() * s * z)[(0, 0)]),
            ),
            UncertaintySet::Spectratope(s) => DVector::from_iterator(
                s.blocks.len(),
                s.blocks.iter().map(|b| {
                    let n = sym_op_norm(&b.apply(z));
                    n * n
                }),
            ),
        }
    }

    /// Smallest `s` such that `z` is feasible for the set at level `s * rho`
    /// (the gauge of the level vector). Membership of `z` means this is <= 1.
    pub fn level_ratio(&self, z: &DVector<f64>) -> f64 {
        match self {
            UncertaintySet::Zero { .. } => {
                if z.amax() == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            UncertaintySet::Ellitope(e) => e.index_set.gauge(&(self.levels(z) / e.rho)),
            UncertaintySet::Spectratope(s) => s.index_set.gauge(&(self.levels(z) / s.rho)),
        }
    }

    /// Radial projection of `z` onto the feasible set (exact for these
    /// star-shaped sets).
    pub fn project_radial(&self, z: &DVector<f64>) -> DVector<f64> {
        let ratio = self.level_ratio(z);
        if ratio <= 1.0 || !ratio.is_finite() {
            z.clone()
        } else {
            z / ratio.sqrt()
        }
    }

    /// Membership test for a point in the ambient space.
    pub fn membership(&self, x: &DVector<f64>, tol: f64) -> Result<bool> {
        if x.len() != self.dim_out() {
            return Err(Error::Dimension(format!(
                "point has {} entries, set lives in dimension {}",
                x.len(),
                self.dim_out()
            )));
        }
        match self {
            UncertaintySet::Zero { .. } => Ok(x.amax() <= tol),
            UncertaintySet::Ellitope(e) => self.membership_via(&e.proj, x, tol),
            UncertaintySet::Spectratope(s) => self.membership_via(&s.proj, x, tol),
        }
    }

    fn membership_via(&self, proj: &DMatrix<f64>, x: &DVector<f64>, tol: f64) -> Result<bool> {
        if linalg::rank(proj, 1e-12) == proj.ncols() {
            // Unique preimage: invert by least squares and check levels.
            let z = linalg::lstsq(proj, x);
            let residual = (proj * &z - x).norm();
            if residual > tol * (1.0 + x.norm()) + 1e-12 {
                return Ok(false);
            }
            Ok(self.level_ratio(&z) <= 1.0 + tol)
        } else {
            self.membership_conic(x, tol)
        }
    }

    /// Conic feasibility fallback for projections without full column rank:
    /// minimize the worst level slack over all preimages of `x`.
    fn membership_conic(&self, x: &DVector<f64>, tol: f64) -> Result<bool> {
        let nbar = self.nbar();
        let rho = self.rho();
        let mut b = ProgramBuilder::new();
        let z = b.add_vars("z", nbar);
        let u = b.add_vars("u", self.block_count());
        let sigma = b.add_var("sigma");
        b.add_nonneg(LinExpr::var(sigma));
        let proj = self.proj().expect("conic membership needs a projection");
        for r in 0..proj.nrows() {
            let mut row = LinExpr::constant(-x[r]);
            for c in 0..proj.ncols() {
                row.push(z[c], proj[(r, c)]);
            }
            b.add_eq(row);
        }
        match self {
            UncertaintySet::Ellitope(e) => {
                for (k, s) in e.blocks.iter().enumerate() {
                    let h = linalg::psd_sqrt_reduced(s, 1e-13)?;
                    let mut rows = vec![
                        LinExpr::var(u[k]) + &LinExpr::var(sigma),
                        LinExpr::constant(0.5),
                    ];
                    for r in 0..h.nrows() {
                        let mut e_row = LinExpr::default();
                        for c in 0..h.ncols() {
                            e_row.push(z[c], h[(r, c)]);
                        }
                        rows.push(e_row);
                    }
                    b.add_rsoc(rows);
                }
            }
            UncertaintySet::Spectratope(s) => {
                for (k, blk) in s.blocks.iter().enumerate() {
                    let f = blk.side();
                    let tau = b.add_var(&format!("tau/{k}"));
                    // ||S_k[z]||_2 <= tau as a block LMI.
                    let mut m: Vec<Vec<LinExpr>> = vec![vec![LinExpr::default(); 2 * f]; 2 * f];
                    for i in 0..f {
                        m[i][i] = LinExpr::var(tau);
                        m[f + i][f + i] = LinExpr::var(tau);
                    }
                    for (ci, cm) in blk.coeffs.iter().enumerate() {
                        for i in 0..f {
                            for j in 0..f {
                                if cm[(i, j)] != 0.0 {
                                    m[i][f + j].push(z[ci], cm[(i, j)]);
                                    m[f + j][i].push(z[ci], cm[(i, j)]);
                                }
                            }
                        }
                    }
                    b.add_psd(&m);
                    // tau^2 <= u_k + sigma.
                    b.add_rsoc(vec![
                        LinExpr::var(u[k]) + &LinExpr::var(sigma),
                        LinExpr::constant(0.5),
                        LinExpr::var(tau),
                    ]);
                }
            }
            UncertaintySet::Zero { .. } => unreachable!(),
        }
        let t_exprs: Vec<LinExpr> = u.iter().map(|&ui| LinExpr::term(ui, 1.0 / rho)).collect();
        self.index_set()
            .expect("structured set")
            .emit_membership(&mut b, &t_exprs);
        b.set_objective(vec![(sigma, 1.0)]);
        let sol = conic::solve(&b.build(), &SolveSettings::with_tol(1e-9))?;
        match sol.status {
            SolveStatus::Optimal => Ok(sol.primal[sigma] <= tol * rho.max(1.0) + 1e-9),
            SolveStatus::Infeasible => Ok(false),
            SolveStatus::NumericalTrouble => Err(Error::Numerical(
                "membership feasibility solve did not converge".into(),
            )),
        }
    }

    /// Draw `n` members. Deterministic given the seed; rejection-free
    /// (Gaussian directions in `z` space rescaled radially).
    pub fn sample(&self, n: usize, seed: u64, strategy: SampleStrategy) -> Result<Vec<DVector<f64>>> {
        Ok(self
            .sample_with_latent(n, seed, strategy)?
            .into_iter()
            .map(|(_, x)| x)
            .collect())
    }

    /// Like [`sample`](Self::sample) but also returns the latent point `z`
    /// with `x = P z` (empty for the degenerate set).
    pub fn sample_with_latent(
        &self,
        n: usize,
        seed: u64,
        strategy: SampleStrategy,
    ) -> Result<Vec<(DVector<f64>, DVector<f64>)>> {
        if n == 0 {
            return Err(Error::Input("sample count must be at least 1".into()));
        }
        if let UncertaintySet::Zero { dim } = self {
            return Ok(vec![(DVector::zeros(0), DVector::zeros(*dim)); n]);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nbar = self.nbar();
        let proj = self.proj().expect("structured set");
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let z = DVector::from_iterator(nbar, (0..nbar).map(|_| rng.sample(StandardNormal)));
            let ratio = self.level_ratio(&z);
            if !ratio.is_finite() || ratio == 0.0 {
                continue; // degenerate direction, draw again
            }
            let boundary = 1.0 / ratio.sqrt();
            let u: f64 = rng.random();
            let c = match strategy {
                SampleStrategy::Interior => boundary * u.powf(1.0 / nbar as f64),
                SampleStrategy::BoundaryBiased => boundary * (0.99 + 0.0099 * u).sqrt(),
            };
            let z = z * c;
            out.push((z.clone(), proj * z));
        }
        Ok(out)
    }

    /// Largest per-block level ratio attained by a latent point, used by
    /// boundary-bias tests.
    pub fn boundary_ratio(&self, z: &DVector<f64>) -> f64 {
        self.level_ratio(z)
    }
}
