//! Solver-agnostic conic program model.
//!
//! Programs are held in a primal standard form: a linear objective, equality
//! rows, and cone blocks whose rows are affine expressions of the variables
//! required to lie in the block's cone. PSD blocks use the symmetric
//! vectorization with off-diagonal sqrt(2) scaling (column-major upper
//! triangle), which round-trips losslessly with the matrix form.

mod extract;
mod solver;

pub use extract::extract_policy;
pub use solver::{solve, BlockResidual, SolveSettings, SolveStats, SolveStatus, Solution};

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type VarId = usize;

/// Affine expression `constant + sum coef * var`.
#[derive(Debug, Clone, Default)]
pub struct LinExpr {
    pub constant: f64,
    pub terms: Vec<(VarId, f64)>,
}

impl LinExpr {
    pub fn constant(c: f64) -> Self {
        LinExpr {
            constant: c,
            terms: Vec::new(),
        }
    }

    pub fn var(v: VarId) -> Self {
        LinExpr {
            constant: 0.0,
            terms: vec![(v, 1.0)],
        }
    }

    pub fn term(v: VarId, coef: f64) -> Self {
        LinExpr {
            constant: 0.0,
            terms: vec![(v, coef)],
        }
    }

    pub fn push(&mut self, v: VarId, coef: f64) {
        if coef != 0.0 {
            self.terms.push((v, coef));
        }
    }

    pub fn add_scaled(&mut self, other: &LinExpr, scale: f64) {
        if scale == 0.0 {
            return;
        }
        self.constant += scale * other.constant;
        for &(v, c) in &other.terms {
            self.push(v, scale * c);
        }
    }

    pub fn scaled(&self, scale: f64) -> LinExpr {
        let mut out = LinExpr::constant(0.0);
        out.add_scaled(self, scale);
        out
    }

    pub fn neg(&self) -> LinExpr {
        self.scaled(-1.0)
    }

    /// Merge duplicate variables and drop zero coefficients.
    pub fn compact(&mut self) {
        self.terms.sort_unstable_by_key(|&(v, _)| v);
        let mut out: Vec<(VarId, f64)> = Vec::with_capacity(self.terms.len());
        for &(v, c) in &self.terms {
            match out.last_mut() {
                Some(last) if last.0 == v => last.1 += c,
                _ => out.push((v, c)),
            }
        }
        out.retain(|&(_, c)| c != 0.0);
        self.terms = out;
    }

    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        self.constant + self.terms.iter().map(|&(v, c)| c * x[v]).sum::<f64>()
    }

    pub fn is_const(&self) -> bool {
        self.terms.is_empty()
    }
}

impl std::ops::Add<&LinExpr> for LinExpr {
    type Output = LinExpr;
    fn add(mut self, rhs: &LinExpr) -> LinExpr {
        self.add_scaled(rhs, 1.0);
        self
    }
}

impl std::ops::Sub<&LinExpr> for LinExpr {
    type Output = LinExpr;
    fn sub(mut self, rhs: &LinExpr) -> LinExpr {
        self.add_scaled(rhs, -1.0);
        self
    }
}

/// Dense matrix of affine expressions.
pub type ExprMat = Vec<Vec<LinExpr>>;

/// `P^T M P` for a constant `P` and expression matrix `M`.
pub fn congruence(p: &DMatrix<f64>, m: &ExprMat) -> ExprMat {
    let n = m.len();
    assert_eq!(p.nrows(), n, "congruence dimension");
    let k = p.ncols();
    let mut out: ExprMat = vec![vec![LinExpr::default(); k]; k];
    for i in 0..n {
        for j in 0..n {
            let e = &m[i][j];
            if e.is_const() && e.constant == 0.0 {
                continue;
            }
            for a in 0..k {
                let pia = p[(i, a)];
                if pia == 0.0 {
                    continue;
                }
                for b in 0..k {
                    let w = pia * p[(j, b)];
                    if w != 0.0 {
                        out[a][b].add_scaled(e, w);
                    }
                }
            }
        }
    }
    for row in &mut out {
        for e in row {
            e.compact();
        }
    }
    out
}

/// `M^T v` for constant `M` and expression vector `v`.
pub fn mat_t_vec(m: &DMatrix<f64>, v: &[LinExpr]) -> Vec<LinExpr> {
    assert_eq!(m.nrows(), v.len(), "mat_t_vec dimension");
    (0..m.ncols())
        .map(|j| {
            let mut e = LinExpr::default();
            for (i, vi) in v.iter().enumerate() {
                e.add_scaled(vi, m[(i, j)]);
            }
            e.compact();
            e
        })
        .collect()
}

/// Expression matrix holding a constant matrix.
pub fn const_exprs(m: &DMatrix<f64>) -> ExprMat {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| LinExpr::constant(m[(i, j)])).collect())
        .collect()
}

/// Cone kinds supported by the program model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConeKind {
    /// All rows nonnegative.
    Nonnegative(usize),
    /// `s_0 >= ||s_1..||_2`.
    SecondOrder(usize),
    /// `2 s_0 s_1 >= ||s_2..||^2`, `s_0, s_1 >= 0`.
    RotatedSecondOrder(usize),
    /// Symmetric vectorization of an `n x n` PSD matrix.
    Psd(usize),
    /// Three-dimensional power cone `s_0^a s_1^(1-a) >= |s_2|`.
    Power3(f64),
}

impl ConeKind {
    pub fn dim(&self) -> usize {
        match *self {
            ConeKind::Nonnegative(n) => n,
            ConeKind::SecondOrder(n) => n,
            ConeKind::RotatedSecondOrder(n) => n,
            ConeKind::Psd(n) => n * (n + 1) / 2,
            ConeKind::Power3(_) => 3,
        }
    }
}

/// Sparse affine row `constant + sum coef * x`.
#[derive(Debug, Clone, Default)]
pub struct SparseRow {
    pub constant: f64,
    pub terms: Vec<(u32, f64)>,
}

impl SparseRow {
    fn from_expr(mut e: LinExpr) -> Self {
        e.compact();
        SparseRow {
            constant: e.constant,
            terms: e.terms.into_iter().map(|(v, c)| (v as u32, c)).collect(),
        }
    }

    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        self.constant
            + self
                .terms
                .iter()
                .map(|&(v, c)| c * x[v as usize])
                .sum::<f64>()
    }
}

#[derive(Debug, Clone)]
pub struct ConeBlock {
    pub kind: ConeKind,
    pub rows: Vec<SparseRow>,
}

#[derive(Debug, Clone)]
pub struct ManifestEntry {
    pub name: String,
    pub first: VarId,
    pub len: usize,
}

/// Assembled conic program.
#[derive(Debug, Clone)]
pub struct ConicProgram {
    pub n_vars: usize,
    /// Sparse linear objective, minimized.
    pub objective: Vec<(VarId, f64)>,
    /// Rows required to equal zero.
    pub eq_rows: Vec<SparseRow>,
    pub blocks: Vec<ConeBlock>,
    pub manifest: Vec<ManifestEntry>,
}

impl ConicProgram {
    pub fn lookup(&self, name: &str) -> Option<&ManifestEntry> {
        self.manifest.iter().find(|e| e.name == name)
    }

    /// Slice of the primal vector belonging to a named variable group.
    pub fn named_slice(&self, x: &DVector<f64>, name: &str) -> Result<DVector<f64>> {
        let e = self
            .lookup(name)
            .ok_or_else(|| Error::State(format!("no variable named {name:?} in manifest")))?;
        Ok(DVector::from_iterator(
            e.len,
            (e.first..e.first + e.len).map(|i| x[i]),
        ))
    }

    pub fn cone_row_count(&self) -> usize {
        self.blocks.iter().map(|b| b.rows.len()).sum()
    }

    /// Self-describing sparse text dump for cross-checking against external
    /// solvers. All indices are base 0; one record per line.
    pub fn dump_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# conic program dump, format v1");
        let _ = writeln!(s, "# records: vars N | obj var coef | eq row var coef | eqconst row c");
        let _ = writeln!(s, "#          cone kind dim | row block row var coef | rowconst block row c");
        let _ = writeln!(s, "# cone rows are affine values required to lie in the cone;");
        let _ = writeln!(s, "# psd blocks are svec with off-diagonal sqrt(2) scaling,");
        let _ = writeln!(s, "# column-major upper triangle; eq rows must equal zero.");
        let _ = writeln!(s, "vars {}", self.n_vars);
        for &(v, c) in &self.objective {
            let _ = writeln!(s, "obj {} {:?}", v, c);
        }
        for (r, row) in self.eq_rows.iter().enumerate() {
            if row.constant != 0.0 {
                let _ = writeln!(s, "eqconst {} {:?}", r, row.constant);
            }
            for &(v, c) in &row.terms {
                let _ = writeln!(s, "eq {} {} {:?}", r, v, c);
            }
        }
        for (b, block) in self.blocks.iter().enumerate() {
            let kind = match block.kind {
                ConeKind::Nonnegative(n) => format!("nonneg {n}"),
                ConeKind::SecondOrder(n) => format!("soc {n}"),
                ConeKind::RotatedSecondOrder(n) => format!("rsoc {n}"),
                ConeKind::Psd(n) => format!("psd {n}"),
                ConeKind::Power3(a) => format!("power3 {a:?}"),
            };
            let _ = writeln!(s, "cone {kind}");
            for (r, row) in block.rows.iter().enumerate() {
                if row.constant != 0.0 {
                    let _ = writeln!(s, "rowconst {} {} {:?}", b, r, row.constant);
                }
                for &(v, c) in &row.terms {
                    let _ = writeln!(s, "row {} {} {} {:?}", b, r, v, c);
                }
            }
        }
        s
    }
}

/// Incremental program builder.
#[derive(Debug, Default)]
pub struct ProgramBuilder {
    n_vars: usize,
    objective: Vec<(VarId, f64)>,
    eq_rows: Vec<SparseRow>,
    blocks: Vec<ConeBlock>,
    manifest: Vec<ManifestEntry>,
}

impl ProgramBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn add_var(&mut self, name: &str) -> VarId {
        self.add_vars(name, 1)[0]
    }

    pub fn add_vars(&mut self, name: &str, n: usize) -> Vec<VarId> {
        let first = self.n_vars;
        self.n_vars += n;
        self.manifest.push(ManifestEntry {
            name: name.to_string(),
            first,
            len: n,
        });
        (first..first + n).collect()
    }

    /// Symmetric matrix variable: allocates the upper triangle and returns the
    /// full expression matrix with mirrored entries.
    pub fn add_sym_var(&mut self, name: &str, n: usize) -> ExprMat {
        let vars = self.add_vars(name, n * (n + 1) / 2);
        let mut m: ExprMat = vec![vec![LinExpr::default(); n]; n];
        let mut k = 0;
        for j in 0..n {
            for i in 0..=j {
                m[i][j] = LinExpr::var(vars[k]);
                if i != j {
                    m[j][i] = LinExpr::var(vars[k]);
                }
                k += 1;
            }
        }
        m
    }

    /// Constrain `e == 0`.
    pub fn add_eq(&mut self, e: LinExpr) {
        self.eq_rows.push(SparseRow::from_expr(e));
    }

    /// Constrain `e >= 0`.
    pub fn add_nonneg(&mut self, e: LinExpr) {
        self.add_block(ConeKind::Nonnegative(1), vec![e]);
    }

    /// Constrain `rows[0] >= ||rows[1..]||_2`.
    pub fn add_soc(&mut self, rows: Vec<LinExpr>) {
        let n = rows.len();
        assert!(n >= 1);
        self.add_block(ConeKind::SecondOrder(n), rows);
    }

    /// Constrain `2 rows[0] rows[1] >= sum rows[2..]^2`, first two nonnegative.
    pub fn add_rsoc(&mut self, rows: Vec<LinExpr>) {
        let n = rows.len();
        assert!(n >= 2);
        self.add_block(ConeKind::RotatedSecondOrder(n), rows);
    }

    /// Constrain the symmetric expression matrix to be PSD.
    pub fn add_psd(&mut self, m: &ExprMat) {
        let n = m.len();
        for row in m {
            assert_eq!(row.len(), n, "psd block must be square");
        }
        let s2 = std::f64::consts::SQRT_2;
        let mut rows = Vec::with_capacity(n * (n + 1) / 2);
        for j in 0..n {
            for i in 0..=j {
                let scale = if i == j { 1.0 } else { s2 };
                rows.push(m[i][j].scaled(scale));
            }
        }
        self.add_block(ConeKind::Psd(n), rows);
    }

    /// Constrain `rows[0]^a rows[1]^(1-a) >= |rows[2]|`.
    pub fn add_power3(&mut self, alpha: f64, rows: [LinExpr; 3]) {
        self.add_block(ConeKind::Power3(alpha), rows.into());
    }

    fn add_block(&mut self, kind: ConeKind, rows: Vec<LinExpr>) {
        debug_assert_eq!(kind.dim(), rows.len());
        let rows = rows.into_iter().map(SparseRow::from_expr).collect();
        self.blocks.push(ConeBlock { kind, rows });
    }

    /// Sparse minimization objective; later calls replace earlier ones.
    pub fn set_objective(&mut self, terms: Vec<(VarId, f64)>) {
        self.objective = terms;
    }

    pub fn build(self) -> ConicProgram {
        // Coalesce runs of scalar nonnegative rows into single blocks.
        let mut blocks: Vec<ConeBlock> = Vec::with_capacity(self.blocks.len());
        for b in self.blocks {
            match (&b.kind, blocks.last_mut()) {
                (
                    ConeKind::Nonnegative(n),
                    Some(ConeBlock {
                        kind: ConeKind::Nonnegative(m),
                        rows,
                    }),
                ) => {
                    rows.extend(b.rows);
                    *m += *n;
                }
                _ => blocks.push(b),
            }
        }
        ConicProgram {
            n_vars: self.n_vars,
            objective: self.objective,
            eq_rows: self.eq_rows,
            blocks,
            manifest: self.manifest,
        }
    }
}

/// Reconstruct a symmetric matrix from an svec slice (inverse of the PSD block
/// row layout).
pub fn mat_from_svec(svec: &[f64], n: usize) -> DMatrix<f64> {
    let s2 = std::f64::consts::SQRT_2;
    let mut m = DMatrix::zeros(n, n);
    let mut k = 0;
    for j in 0..n {
        for i in 0..=j {
            let v = if i == j { svec[k] } else { svec[k] / s2 };
            m[(i, j)] = v;
            m[(j, i)] = v;
            k += 1;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn expr_compaction_merges_terms() {
        let mut e = LinExpr::constant(1.0);
        e.push(3, 2.0);
        e.push(1, 1.0);
        e.push(3, -2.0);
        e.compact();
        assert_eq!(e.terms, vec![(1, 1.0)]);
    }

    #[test]
    fn svec_round_trip() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.5, 1.0, 3.0, -1.0, 0.5, -1.0, 4.0]);
        let mut b = ProgramBuilder::new();
        b.add_psd(&const_exprs(&m));
        let prog = b.build();
        let svec: Vec<f64> = prog.blocks[0].rows.iter().map(|r| r.constant).collect();
        let back = mat_from_svec(&svec, 3);
        assert_abs_diff_eq!(back, m, epsilon = 1e-15);
    }

    #[test]
    fn congruence_matches_dense() {
        let p = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.0, 1.0, -1.0, 0.5]);
        let x = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.0, 0.5, 2.0, 1.0, 0.0, 1.0, 3.0]);
        let exprs = congruence(&p, &const_exprs(&x));
        let expect = p.transpose() * &x * &p;
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(exprs[i][j].constant, expect[(i, j)], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn nonneg_blocks_coalesce() {
        let mut b = ProgramBuilder::new();
        let v = b.add_var("v");
        b.add_nonneg(LinExpr::var(v));
        b.add_nonneg(LinExpr::constant(1.0) - &LinExpr::var(v));
        let prog = b.build();
        assert_eq!(prog.blocks.len(), 1);
        assert_eq!(prog.blocks[0].kind, ConeKind::Nonnegative(2));
    }
}
