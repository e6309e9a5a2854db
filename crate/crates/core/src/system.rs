//! Linear time-varying system data, purified-output dynamics and the affine
//! trajectory maps.
//!
//! With the control law affine in purified outputs, the stacked state-control
//! trajectory is `w = Z[chi] [zeta; 1] + E[chi] eps` where `Z` and `E` are
//! affine in the policy coordinates `chi`. This module materializes those
//! maps as explicit constant-plus-linear operators so the compiler can treat
//! every entry as an affine expression.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Static dimensions of a system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SysDims {
    pub n_x: usize,
    pub n_u: usize,
    pub n_y: usize,
    pub n_d: usize,
    pub n_e: usize,
    pub horizon: usize,
}

impl SysDims {
    pub fn n_zeta(&self) -> usize {
        self.n_x + self.n_d * self.horizon
    }
    pub fn n_eps(&self) -> usize {
        self.n_x + self.n_e * self.horizon
    }
    pub fn n_w(&self) -> usize {
        (self.n_x + self.n_u) * self.horizon
    }
    pub fn n_v(&self) -> usize {
        self.n_y * self.horizon
    }
}

/// Discrete-time linear system over a finite horizon.
///
/// States are defined on `t in {0..N}`, controls and outputs on
/// `t in {0..N-1}`. The stochastic disturbance `eps = [s_0; e_0; ...]` has
/// zero mean and covariance `Pi`; the deterministic disturbance
/// `zeta = [z; d_0; ...]` ranges over an uncertainty set held elsewhere.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    dims: SysDims,
    a: Vec<DMatrix<f64>>,
    b: Vec<DMatrix<f64>>,
    b_d: Vec<DMatrix<f64>>,
    b_s: Vec<DMatrix<f64>>,
    c: Vec<DMatrix<f64>>,
    d_d: Vec<DMatrix<f64>>,
    d_s: Vec<DMatrix<f64>>,
    pi: DMatrix<f64>,
}

impl LinearSystem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a: Vec<DMatrix<f64>>,
        b: Vec<DMatrix<f64>>,
        b_d: Vec<DMatrix<f64>>,
        b_s: Vec<DMatrix<f64>>,
        c: Vec<DMatrix<f64>>,
        d_d: Vec<DMatrix<f64>>,
        d_s: Vec<DMatrix<f64>>,
        pi: DMatrix<f64>,
    ) -> Result<Self> {
        let horizon = a.len();
        if horizon == 0 {
            return Err(Error::Input("horizon must be at least 1".into()));
        }
        for (name, list) in [
            ("B", &b),
            ("B_d", &b_d),
            ("B_s", &b_s),
            ("C", &c),
            ("D_d", &d_d),
            ("D_s", &d_s),
        ] {
            if list.len() != horizon {
                return Err(Error::Dimension(format!(
                    "{name} has {} entries, horizon is {horizon}",
                    list.len()
                )));
            }
        }
        let n_x = a[0].nrows();
        let dims = SysDims {
            n_x,
            n_u: b[0].ncols(),
            n_y: c[0].nrows(),
            n_d: b_d[0].ncols(),
            n_e: b_s[0].ncols(),
            horizon,
        };
        for t in 0..horizon {
            let shapes = [
                ("A", &a[t], (n_x, n_x)),
                ("B", &b[t], (n_x, dims.n_u)),
                ("B_d", &b_d[t], (n_x, dims.n_d)),
                ("B_s", &b_s[t], (n_x, dims.n_e)),
                ("C", &c[t], (dims.n_y, n_x)),
                ("D_d", &d_d[t], (dims.n_y, dims.n_d)),
                ("D_s", &d_s[t], (dims.n_y, dims.n_e)),
            ];
            for (name, m, (r, cc)) in shapes {
                if m.nrows() != r || m.ncols() != cc {
                    return Err(Error::Dimension(format!(
                        "{name}[{t}] is {}x{}, expected {r}x{cc}",
                        m.nrows(),
                        m.ncols()
                    )));
                }
            }
        }
        let n_eps = dims.n_eps();
        if pi.nrows() != n_eps || pi.ncols() != n_eps {
            return Err(Error::Dimension(format!(
                "Pi is {}x{}, expected {n_eps}x{n_eps}",
                pi.nrows(),
                pi.ncols()
            )));
        }
        if !linalg::is_psd(&pi, 1e-9) {
            return Err(Error::Input("Pi must be symmetric PSD".into()));
        }
        Ok(LinearSystem {
            dims,
            a,
            b,
            b_d,
            b_s,
            c,
            d_d,
            d_s,
            pi: linalg::symmetrize(&pi),
        })
    }

    /// Time-invariant system: one set of matrices broadcast across the
    /// horizon (stored per step for uniformity).
    #[allow(clippy::too_many_arguments)]
    pub fn time_invariant(
        horizon: usize,
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        b_d: DMatrix<f64>,
        b_s: DMatrix<f64>,
        c: DMatrix<f64>,
        d_d: DMatrix<f64>,
        d_s: DMatrix<f64>,
        pi: DMatrix<f64>,
    ) -> Result<Self> {
        LinearSystem::new(
            vec![a; horizon],
            vec![b; horizon],
            vec![b_d; horizon],
            vec![b_s; horizon],
            vec![c; horizon],
            vec![d_d; horizon],
            vec![d_s; horizon],
            pi,
        )
    }

    pub fn dims(&self) -> SysDims {
        self.dims
    }
    pub fn horizon(&self) -> usize {
        self.dims.horizon
    }
    pub fn a(&self, t: usize) -> &DMatrix<f64> {
        &self.a[t]
    }
    pub fn b(&self, t: usize) -> &DMatrix<f64> {
        &self.b[t]
    }
    pub fn b_d(&self, t: usize) -> &DMatrix<f64> {
        &self.b_d[t]
    }
    pub fn b_s(&self, t: usize) -> &DMatrix<f64> {
        &self.b_s[t]
    }
    pub fn c(&self, t: usize) -> &DMatrix<f64> {
        &self.c[t]
    }
    pub fn d_d(&self, t: usize) -> &DMatrix<f64> {
        &self.d_d[t]
    }
    pub fn d_s(&self, t: usize) -> &DMatrix<f64> {
        &self.d_s[t]
    }
    pub fn pi(&self) -> &DMatrix<f64> {
        &self.pi
    }

    /// Split `zeta` into the initial-state part and per-step disturbances.
    pub fn split_zeta(&self, zeta: &DVector<f64>) -> (DVector<f64>, Vec<DVector<f64>>) {
        let d = self.dims;
        let z = zeta.rows(0, d.n_x).into_owned();
        let ds = (0..d.horizon)
            .map(|t| zeta.rows(d.n_x + t * d.n_d, d.n_d).into_owned())
            .collect();
        (z, ds)
    }

    /// Split `eps` into the initial-state noise and per-step noises.
    pub fn split_eps(&self, eps: &DVector<f64>) -> (DVector<f64>, Vec<DVector<f64>>) {
        let d = self.dims;
        let s0 = eps.rows(0, d.n_x).into_owned();
        let es = (0..d.horizon)
            .map(|t| eps.rows(d.n_x + t * d.n_e, d.n_e).into_owned())
            .collect();
        (s0, es)
    }
}

/// Flattening order of the policy coordinates: all offsets `h_t` first
/// (t ascending), then the gains `H_i^t` in lexicographic `(t, i)` order,
/// row-major within each `n_u x n_y` block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChiLayout {
    pub horizon: usize,
    pub n_u: usize,
    pub n_y: usize,
}

impl ChiLayout {
    pub fn from_dims(d: &SysDims) -> Self {
        ChiLayout {
            horizon: d.horizon,
            n_u: d.n_u,
            n_y: d.n_y,
        }
    }

    pub fn dim(&self) -> usize {
        self.horizon * self.n_u + self.gain_block() * self.horizon * (self.horizon + 1) / 2
    }

    fn gain_block(&self) -> usize {
        self.n_u * self.n_y
    }

    pub fn offset_h(&self, t: usize) -> usize {
        debug_assert!(t < self.horizon);
        t * self.n_u
    }

    pub fn offset_gain(&self, t: usize, i: usize) -> usize {
        debug_assert!(i <= t && t < self.horizon);
        self.horizon * self.n_u + (t * (t + 1) / 2 + i) * self.gain_block()
    }

    /// Index of entry `(row, col)` of `H_i^t` in the flat vector.
    pub fn gain_entry(&self, t: usize, i: usize, row: usize, col: usize) -> usize {
        self.offset_gain(t, i) + row * self.n_y + col
    }
}

/// Stacked purified outputs as linear maps of the disturbances:
/// `v = v_zeta * zeta + v_eps * eps`.
#[derive(Debug, Clone)]
pub struct PurifiedDynamics {
    pub v_zeta: DMatrix<f64>,
    pub v_eps: DMatrix<f64>,
    dims: SysDims,
}

impl PurifiedDynamics {
    pub fn dims(&self) -> SysDims {
        self.dims
    }

    /// Row block of `v_t`.
    pub fn v_row(&self, t: usize) -> (DMatrix<f64>, DMatrix<f64>) {
        let d = self.dims;
        (
            self.v_zeta.rows(t * d.n_y, d.n_y).into_owned(),
            self.v_eps.rows(t * d.n_y, d.n_y).into_owned(),
        )
    }
}

/// Closed-form purified-output maps: the recursion
/// `delta_0 = z + s_0; delta_{t+1} = A_t delta_t + B^d_t d_t + B^s_t e_t;
/// v_t = C_t delta_t + D^d_t d_t + D^s_t e_t` unrolled into matrices.
pub fn build_purified_dynamics(sys: &LinearSystem) -> PurifiedDynamics {
    let d = sys.dims();
    let (n_zeta, n_eps, n_v) = (d.n_zeta(), d.n_eps(), d.n_v());
    let mut v_zeta = DMatrix::zeros(n_v, n_zeta);
    let mut v_eps = DMatrix::zeros(n_v, n_eps);
    // delta_t = m_zeta * zeta + m_eps * eps.
    let mut m_zeta = DMatrix::zeros(d.n_x, n_zeta);
    m_zeta.view_mut((0, 0), (d.n_x, d.n_x)).fill_with_identity();
    let mut m_eps = DMatrix::zeros(d.n_x, n_eps);
    m_eps.view_mut((0, 0), (d.n_x, d.n_x)).fill_with_identity();
    for t in 0..d.horizon {
        let mut row_z = sys.c(t) * &m_zeta;
        row_z
            .view_mut((0, d.n_x + t * d.n_d), (d.n_y, d.n_d))
            .copy_from(sys.d_d(t));
        let mut row_e = sys.c(t) * &m_eps;
        row_e
            .view_mut((0, d.n_x + t * d.n_e), (d.n_y, d.n_e))
            .copy_from(sys.d_s(t));
        v_zeta.rows_mut(t * d.n_y, d.n_y).copy_from(&row_z);
        v_eps.rows_mut(t * d.n_y, d.n_y).copy_from(&row_e);

        m_zeta = sys.a(t) * m_zeta;
        m_zeta
            .view_mut((0, d.n_x + t * d.n_d), (d.n_x, d.n_d))
            .copy_from(sys.b_d(t));
        m_eps = sys.a(t) * m_eps;
        m_eps
            .view_mut((0, d.n_x + t * d.n_e), (d.n_x, d.n_e))
            .copy_from(sys.b_s(t));
    }
    PurifiedDynamics {
        v_zeta,
        v_eps,
        dims: d,
    }
}

/// Matrix-valued affine function of the policy coordinates: a constant part
/// plus, per coordinate, a sparse increment (stored as triplets).
#[derive(Debug, Clone)]
pub struct AffineMatrixMap {
    rows: usize,
    cols: usize,
    const_part: DMatrix<f64>,
    /// lin[k] holds the (row, col, coefficient) increments of coordinate k.
    lin: Vec<Vec<(u32, u32, f64)>>,
}

impl AffineMatrixMap {
    pub fn zeros(rows: usize, cols: usize, chi_dim: usize) -> Self {
        AffineMatrixMap {
            rows,
            cols,
            const_part: DMatrix::zeros(rows, cols),
            lin: vec![Vec::new(); chi_dim],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn chi_dim(&self) -> usize {
        self.lin.len()
    }
    pub fn const_part(&self) -> &DMatrix<f64> {
        &self.const_part
    }

    pub fn set_const(&mut self, m: DMatrix<f64>) {
        assert_eq!((m.nrows(), m.ncols()), (self.rows, self.cols));
        self.const_part = m;
    }

    pub fn push(&mut self, chi_index: usize, row: usize, col: usize, coef: f64) {
        if coef != 0.0 {
            self.lin[chi_index].push((row as u32, col as u32, coef));
        }
    }

    /// Merge duplicate triplets and drop exact zeros.
    pub fn compact(&mut self) {
        for entries in &mut self.lin {
            entries.sort_unstable_by_key(|&(r, c, _)| (r, c));
            let mut out: Vec<(u32, u32, f64)> = Vec::with_capacity(entries.len());
            for &(r, c, v) in entries.iter() {
                match out.last_mut() {
                    Some(last) if last.0 == r && last.1 == c => last.2 += v,
                    _ => out.push((r, c, v)),
                }
            }
            out.retain(|&(_, _, v)| v != 0.0);
            *entries = out;
        }
    }

    pub fn evaluate(&self, chi: &DVector<f64>) -> DMatrix<f64> {
        assert_eq!(chi.len(), self.chi_dim(), "chi length");
        let mut out = self.const_part.clone();
        for (k, entries) in self.lin.iter().enumerate() {
            let w = chi[k];
            if w == 0.0 {
                continue;
            }
            for &(r, c, v) in entries {
                out[(r as usize, c as usize)] += w * v;
            }
        }
        out
    }

    /// `L * self` for a constant left factor.
    pub fn left_mul(&self, l: &DMatrix<f64>) -> AffineMatrixMap {
        assert_eq!(l.ncols(), self.rows, "left_mul dimension");
        let mut out = AffineMatrixMap::zeros(l.nrows(), self.cols, self.chi_dim());
        out.const_part = l * &self.const_part;
        for (k, entries) in self.lin.iter().enumerate() {
            for &(r, c, v) in entries {
                for a in 0..l.nrows() {
                    let w = l[(a, r as usize)];
                    if w != 0.0 {
                        out.lin[k].push((a as u32, c, w * v));
                    }
                }
            }
        }
        out.compact();
        out
    }

    /// `self * R` for a constant right factor.
    pub fn right_mul(&self, r: &DMatrix<f64>) -> AffineMatrixMap {
        assert_eq!(self.cols, r.nrows(), "right_mul dimension");
        let mut out = AffineMatrixMap::zeros(self.rows, r.ncols(), self.chi_dim());
        out.const_part = &self.const_part * r;
        for (k, entries) in self.lin.iter().enumerate() {
            for &(row, c, v) in entries {
                for j in 0..r.ncols() {
                    let w = r[(c as usize, j)];
                    if w != 0.0 {
                        out.lin[k].push((row, j as u32, v * w));
                    }
                }
            }
        }
        out.compact();
        out
    }

    /// Add `scale * other` into self.
    pub fn add_scaled(&mut self, other: &AffineMatrixMap, scale: f64) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        assert_eq!(self.chi_dim(), other.chi_dim());
        self.const_part += &other.const_part * scale;
        for (k, entries) in other.lin.iter().enumerate() {
            for &(r, c, v) in entries {
                self.lin[k].push((r, c, scale * v));
            }
        }
    }

    /// Copy `other` into self at a row offset (same column count).
    pub fn place_rows(&mut self, row_offset: usize, other: &AffineMatrixMap) {
        assert_eq!(self.cols, other.cols);
        assert_eq!(self.chi_dim(), other.chi_dim());
        assert!(row_offset + other.rows <= self.rows);
        self.const_part
            .view_mut((row_offset, 0), (other.rows, other.cols))
            .copy_from(&other.const_part);
        for (k, entries) in other.lin.iter().enumerate() {
            for &(r, c, v) in entries {
                self.lin[k].push((r + row_offset as u32, c, v));
            }
        }
    }

    /// Per-entry affine expressions over the given variable ids (one per chi
    /// coordinate).
    pub fn to_exprs(&self, chi_vars: &[crate::conic::VarId]) -> crate::conic::ExprMat {
        assert_eq!(chi_vars.len(), self.chi_dim());
        let mut out: crate::conic::ExprMat = (0..self.rows)
            .map(|i| {
                (0..self.cols)
                    .map(|j| crate::conic::LinExpr::constant(self.const_part[(i, j)]))
                    .collect()
            })
            .collect();
        for (k, entries) in self.lin.iter().enumerate() {
            for &(r, c, v) in entries {
                out[r as usize][c as usize].push(chi_vars[k], v);
            }
        }
        for row in &mut out {
            for e in row {
                e.compact();
            }
        }
        out
    }
}

/// The affine trajectory maps together with the policy coordinate layout.
#[derive(Debug, Clone)]
pub struct TrajectoryMaps {
    zmap: AffineMatrixMap,
    emap: AffineMatrixMap,
    layout: ChiLayout,
    dims: SysDims,
}

impl TrajectoryMaps {
    pub fn zmap(&self) -> &AffineMatrixMap {
        &self.zmap
    }
    pub fn emap(&self) -> &AffineMatrixMap {
        &self.emap
    }
    pub fn layout(&self) -> ChiLayout {
        self.layout
    }
    pub fn dims(&self) -> SysDims {
        self.dims
    }
    pub fn chi_dim(&self) -> usize {
        self.layout.dim()
    }

    /// `w = Z[chi] [zeta; 1] + E[chi] eps`.
    pub fn trajectory(
        &self,
        chi: &DVector<f64>,
        zeta: &DVector<f64>,
        eps: &DVector<f64>,
    ) -> DVector<f64> {
        let z = self.zmap.evaluate(chi);
        let e = self.emap.evaluate(chi);
        let mut zeta1 = DVector::zeros(zeta.len() + 1);
        zeta1.rows_mut(0, zeta.len()).copy_from(zeta);
        zeta1[zeta.len()] = 1.0;
        z * zeta1 + e * eps
    }
}

/// Build `Z[chi]`, `E[chi]` by forward accumulation over the horizon.
pub fn build_trajectory_maps(sys: &LinearSystem) -> TrajectoryMaps {
    let d = sys.dims();
    let layout = ChiLayout::from_dims(&d);
    let chi_dim = layout.dim();
    let pd = build_purified_dynamics(sys);
    let (n_zeta, n_eps, n_w) = (d.n_zeta(), d.n_eps(), d.n_w());
    // Column layouts: zmap has [zeta columns | constant column].
    let zc = n_zeta + 1;

    let mut zmap = AffineMatrixMap::zeros(n_w, zc, chi_dim);
    let mut emap = AffineMatrixMap::zeros(n_w, n_eps, chi_dim);

    // Running state maps: x_t as affine-in-chi maps of [zeta;1] and eps.
    let mut xz = AffineMatrixMap::zeros(d.n_x, zc, chi_dim);
    let mut xe = AffineMatrixMap::zeros(d.n_x, n_eps, chi_dim);
    {
        // x_0 = z + s_0.
        let mut cz = DMatrix::zeros(d.n_x, zc);
        cz.view_mut((0, 0), (d.n_x, d.n_x)).fill_with_identity();
        xz.set_const(cz);
        let mut ce = DMatrix::zeros(d.n_x, n_eps);
        ce.view_mut((0, 0), (d.n_x, d.n_x)).fill_with_identity();
        xe.set_const(ce);
    }

    for t in 0..d.horizon {
        // u_t = h_t + sum_{i<=t} H_i^t v_i, with v_i known linear maps.
        let mut uz = AffineMatrixMap::zeros(d.n_u, zc, chi_dim);
        let mut ue = AffineMatrixMap::zeros(d.n_u, n_eps, chi_dim);
        for r in 0..d.n_u {
            uz.push(layout.offset_h(t) + r, r, n_zeta, 1.0);
        }
        for i in 0..=t {
            let (vz, ve) = pd.v_row(i);
            for gr in 0..d.n_u {
                for gc in 0..d.n_y {
                    let k = layout.gain_entry(t, i, gr, gc);
                    for col in 0..n_zeta {
                        let w = vz[(gc, col)];
                        if w != 0.0 {
                            uz.push(k, gr, col, w);
                        }
                    }
                    for col in 0..n_eps {
                        let w = ve[(gc, col)];
                        if w != 0.0 {
                            ue.push(k, gr, col, w);
                        }
                    }
                }
            }
        }
        uz.compact();
        ue.compact();

        let u_row_offset = d.horizon * d.n_x + t * d.n_u;
        zmap.place_rows(u_row_offset, &uz);
        emap.place_rows(u_row_offset, &ue);

        // x_{t+1} = A_t x_t + B_t u_t + B^d_t d_t + B^s_t e_t.
        let mut xz_next = xz.left_mul(sys.a(t));
        xz_next.add_scaled(&uz.left_mul(sys.b(t)), 1.0);
        {
            let bd = sys.b_d(t);
            let mut add = DMatrix::zeros(d.n_x, zc);
            add.view_mut((0, d.n_x + t * d.n_d), (d.n_x, d.n_d))
                .copy_from(bd);
            let cur = xz_next.const_part().clone();
            xz_next.set_const(cur + add);
        }
        let mut xe_next = xe.left_mul(sys.a(t));
        xe_next.add_scaled(&ue.left_mul(sys.b(t)), 1.0);
        {
            let bs = sys.b_s(t);
            let mut add = DMatrix::zeros(d.n_x, n_eps);
            add.view_mut((0, d.n_x + t * d.n_e), (d.n_x, d.n_e))
                .copy_from(bs);
            let cur = xe_next.const_part().clone();
            xe_next.set_const(cur + add);
        }
        xz_next.compact();
        xe_next.compact();

        zmap.place_rows(t * d.n_x, &xz_next);
        emap.place_rows(t * d.n_x, &xe_next);
        xz = xz_next;
        xe = xe_next;
    }
    zmap.compact();
    emap.compact();
    TrajectoryMaps {
        zmap,
        emap,
        layout,
        dims: d,
    }
}

/// `Sigma_w = E[chi] Pi E[chi]^T`, the trajectory covariance (independent of
/// the deterministic disturbance).
pub fn covariance_of_trajectory(
    maps: &TrajectoryMaps,
    chi: &DVector<f64>,
    pi: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    if chi.len() != maps.chi_dim() {
        return Err(Error::Dimension(format!(
            "chi has {} coordinates, expected {}",
            chi.len(),
            maps.chi_dim()
        )));
    }
    if pi.nrows() != maps.dims.n_eps() || pi.ncols() != maps.dims.n_eps() {
        return Err(Error::Dimension("Pi shape".into()));
    }
    if !linalg::is_psd(pi, 1e-9) {
        return Err(Error::Input("Pi must be symmetric PSD".into()));
    }
    let e = maps.emap.evaluate(chi);
    Ok(linalg::symmetrize(&(&e * pi * e.transpose())))
}
