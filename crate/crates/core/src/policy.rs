//! Affine control laws and closed-loop simulation.
//!
//! Purified-output-based (POB) laws `u_t = h_t + sum_{i<=t} H_i^t v_i` are
//! the native representation; classical output-based (OB) laws
//! `u_t = g_t + sum_{i<=t} G_i^t y_i` are supported for the equivalence
//! check and converted to POB form. Conversion in the other direction is not
//! needed by the design pipeline and is omitted.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::system::{ChiLayout, LinearSystem, SysDims};

/// Causal affine policy in purified outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct PobPolicy {
    /// Offsets `h_t`, one per step.
    pub offsets: Vec<DVector<f64>>,
    /// Gains `H_i^t` for `i <= t`: `gains[t][i]`.
    pub gains: Vec<Vec<DMatrix<f64>>>,
}

/// Causal affine policy in raw outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ObPolicy {
    pub offsets: Vec<DVector<f64>>,
    pub gains: Vec<Vec<DMatrix<f64>>>,
}

fn check_shape(
    offsets: &[DVector<f64>],
    gains: &[Vec<DMatrix<f64>>],
    layout: &ChiLayout,
) -> Result<()> {
    if offsets.len() != layout.horizon || gains.len() != layout.horizon {
        return Err(Error::Dimension(format!(
            "policy has {} steps, expected {}",
            offsets.len().max(gains.len()),
            layout.horizon
        )));
    }
    for (t, (h, row)) in offsets.iter().zip(gains).enumerate() {
        if h.len() != layout.n_u {
            return Err(Error::Dimension(format!("offset {t} length")));
        }
        if row.len() != t + 1 {
            return Err(Error::Dimension(format!(
                "gain row {t} has {} blocks, causality requires {}",
                row.len(),
                t + 1
            )));
        }
        for (i, g) in row.iter().enumerate() {
            if g.nrows() != layout.n_u || g.ncols() != layout.n_y {
                return Err(Error::Dimension(format!("gain block ({t},{i}) shape")));
            }
        }
    }
    Ok(())
}

impl PobPolicy {
    pub fn new(offsets: Vec<DVector<f64>>, gains: Vec<Vec<DMatrix<f64>>>, layout: &ChiLayout) -> Result<Self> {
        check_shape(&offsets, &gains, layout)?;
        Ok(PobPolicy { offsets, gains })
    }

    pub fn zero(layout: &ChiLayout) -> Self {
        PobPolicy {
            offsets: vec![DVector::zeros(layout.n_u); layout.horizon],
            gains: (0..layout.horizon)
                .map(|t| vec![DMatrix::zeros(layout.n_u, layout.n_y); t + 1])
                .collect(),
        }
    }

    pub fn horizon(&self) -> usize {
        self.offsets.len()
    }

    /// Flatten into the canonical chi ordering (offsets first, then gains in
    /// lexicographic `(t, i)` order, row-major blocks).
    pub fn flatten(&self, layout: &ChiLayout) -> Result<DVector<f64>> {
        check_shape(&self.offsets, &self.gains, layout)?;
        let mut chi = DVector::zeros(layout.dim());
        for (t, h) in self.offsets.iter().enumerate() {
            chi.rows_mut(layout.offset_h(t), layout.n_u).copy_from(h);
        }
        for (t, row) in self.gains.iter().enumerate() {
            for (i, g) in row.iter().enumerate() {
                for r in 0..layout.n_u {
                    for c in 0..layout.n_y {
                        chi[layout.gain_entry(t, i, r, c)] = g[(r, c)];
                    }
                }
            }
        }
        Ok(chi)
    }

    pub fn from_flat(layout: &ChiLayout, chi: &DVector<f64>) -> Result<Self> {
        if chi.len() != layout.dim() {
            return Err(Error::Dimension(format!(
                "chi has {} coordinates, layout needs {}",
                chi.len(),
                layout.dim()
            )));
        }
        let offsets = (0..layout.horizon)
            .map(|t| chi.rows(layout.offset_h(t), layout.n_u).into_owned())
            .collect();
        let gains = (0..layout.horizon)
            .map(|t| {
                (0..=t)
                    .map(|i| {
                        DMatrix::from_fn(layout.n_u, layout.n_y, |r, c| {
                            chi[layout.gain_entry(t, i, r, c)]
                        })
                    })
                    .collect()
            })
            .collect();
        Ok(PobPolicy { offsets, gains })
    }
}

impl ObPolicy {
    pub fn new(offsets: Vec<DVector<f64>>, gains: Vec<Vec<DMatrix<f64>>>, layout: &ChiLayout) -> Result<Self> {
        check_shape(&offsets, &gains, layout)?;
        Ok(ObPolicy { offsets, gains })
    }
}

/// Full record of one closed-loop run.
#[derive(Debug, Clone)]
pub struct SimTrace {
    /// States `x_0 .. x_N`.
    pub states: Vec<DVector<f64>>,
    /// Controls `u_0 .. u_{N-1}`.
    pub controls: Vec<DVector<f64>>,
    /// Outputs `y_0 .. y_{N-1}`.
    pub outputs: Vec<DVector<f64>>,
    /// Purified outputs `v_0 .. v_{N-1}`.
    pub purified: Vec<DVector<f64>>,
}

impl SimTrace {
    /// Stacked trajectory `w = [x_1; ...; x_N; u_0; ...; u_{N-1}]`.
    pub fn trajectory(&self, dims: &SysDims) -> DVector<f64> {
        let mut w = DVector::zeros(dims.n_w());
        for t in 1..=dims.horizon {
            w.rows_mut((t - 1) * dims.n_x, dims.n_x)
                .copy_from(&self.states[t]);
        }
        for t in 0..dims.horizon {
            w.rows_mut(dims.horizon * dims.n_x + t * dims.n_u, dims.n_u)
                .copy_from(&self.controls[t]);
        }
        w
    }
}

/// Either policy kind, borrowed.
#[derive(Debug, Clone, Copy)]
pub enum PolicyRef<'a> {
    Pob(&'a PobPolicy),
    Ob(&'a ObPolicy),
}

impl<'a> From<&'a PobPolicy> for PolicyRef<'a> {
    fn from(p: &'a PobPolicy) -> Self {
        PolicyRef::Pob(p)
    }
}

impl<'a> From<&'a ObPolicy> for PolicyRef<'a> {
    fn from(p: &'a ObPolicy) -> Self {
        PolicyRef::Ob(p)
    }
}

/// Exact forward recursion of the closed loop. POB laws run the noise-free
/// model online to form the purified outputs before each control evaluation.
pub fn simulate<'a>(
    sys: &LinearSystem,
    pol: impl Into<PolicyRef<'a>>,
    zeta: &DVector<f64>,
    eps: &DVector<f64>,
) -> Result<SimTrace> {
    let pol = pol.into();
    let d = sys.dims();
    if zeta.len() != d.n_zeta() || eps.len() != d.n_eps() {
        return Err(Error::Dimension(format!(
            "disturbance lengths ({}, {}) vs ({}, {})",
            zeta.len(),
            eps.len(),
            d.n_zeta(),
            d.n_eps()
        )));
    }
    if zeta.iter().chain(eps.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Input("disturbances must be finite".into()));
    }
    let (z, ds) = sys.split_zeta(zeta);
    let (s0, es) = sys.split_eps(eps);

    let mut x = &z + &s0;
    let mut xhat = DVector::zeros(d.n_x);
    let mut states = vec![x.clone()];
    let mut controls = Vec::with_capacity(d.horizon);
    let mut outputs = Vec::with_capacity(d.horizon);
    let mut purified = Vec::with_capacity(d.horizon);

    for t in 0..d.horizon {
        let y = sys.c(t) * &x + sys.d_d(t) * &ds[t] + sys.d_s(t) * &es[t];
        let v = &y - sys.c(t) * &xhat;
        let u = match pol {
            PolicyRef::Pob(p) => {
                let mut u = p.offsets[t].clone();
                for (i, g) in p.gains[t].iter().enumerate() {
                    let vi = if i < purified.len() { &purified[i] } else { &v };
                    u += g * vi;
                }
                u
            }
            PolicyRef::Ob(p) => {
                let mut u = p.offsets[t].clone();
                for (i, g) in p.gains[t].iter().enumerate() {
                    let yi = if i < outputs.len() { &outputs[i] } else { &y };
                    u += g * yi;
                }
                u
            }
        };
        outputs.push(y);
        purified.push(v);
        x = sys.a(t) * &x + sys.b(t) * &u + sys.b_d(t) * &ds[t] + sys.b_s(t) * &es[t];
        xhat = sys.a(t) * &xhat + sys.b(t) * &u;
        states.push(x.clone());
        controls.push(u);
    }
    Ok(SimTrace {
        states,
        controls,
        outputs,
        purified,
    })
}

/// Rewrite an OB law as the POB law with the identical input-output map.
///
/// Since `y_i = v_i + C_i xhat_i` and `xhat_i` is an affine function of the
/// controls already decided, substituting in ascending time order expresses
/// each `u_t` affinely in `v_0..v_t`.
pub fn ob_to_pob(sys: &LinearSystem, theta: &ObPolicy) -> Result<PobPolicy> {
    let d = sys.dims();
    let layout = ChiLayout::from_dims(&d);
    check_shape(&theta.offsets, &theta.gains, &layout)?;

    // l[i][j] = C_i Phi_{i, j+1} B_j maps u_j into yhat_i, for j < i.
    let mut l: Vec<Vec<DMatrix<f64>>> = Vec::with_capacity(d.horizon);
    for i in 0..d.horizon {
        let mut row = Vec::with_capacity(i);
        for j in 0..i {
            // Phi_{i, j+1} = A_{i-1} ... A_{j+1}.
            let mut phi = DMatrix::identity(d.n_x, d.n_x);
            for s in (j + 1..i).rev() {
                phi = &phi * sys.a(s);
            }
            row.push(sys.c(i) * phi * sys.b(j));
        }
        l.push(row);
    }

    let mut offsets: Vec<DVector<f64>> = Vec::with_capacity(d.horizon);
    let mut gains: Vec<Vec<DMatrix<f64>>> = Vec::with_capacity(d.horizon);
    for t in 0..d.horizon {
        // u_t = g_t + sum_{i<=t} G_i^t (v_i + sum_{j<i} l[i][j] u_j)
        // with u_j already expressed in (h, H).
        let mut h_t = theta.offsets[t].clone();
        let mut h_row: Vec<DMatrix<f64>> =
            vec![DMatrix::zeros(d.n_u, d.n_y); t + 1];
        for i in 0..=t {
            h_row[i] += &theta.gains[t][i];
            for j in 0..i {
                let carry = &theta.gains[t][i] * &l[i][j];
                h_t += &carry * &offsets[j];
                for m in 0..=j {
                    h_row[m] += &carry * &gains[j][m];
                }
            }
        }
        offsets.push(h_t);
        gains.push(h_row);
    }
    PobPolicy::new(offsets, gains, &layout)
}

/// Serialized policy file: dims header, offset blocks, gain blocks keyed
/// `"t,i"`, and the scenario hash the policy was designed against.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyFile {
    pub horizon: usize,
    pub n_u: usize,
    pub n_y: usize,
    pub h: Vec<Vec<f64>>,
    #[serde(rename = "H")]
    pub gains: BTreeMap<String, Vec<Vec<f64>>>,
    pub scenario_hash: String,
}

impl PolicyFile {
    pub fn from_policy(pol: &PobPolicy, layout: &ChiLayout, scenario_hash: &str) -> Result<Self> {
        check_shape(&pol.offsets, &pol.gains, layout)?;
        let h = pol
            .offsets
            .iter()
            .map(|v| v.iter().copied().collect())
            .collect();
        let mut gains = BTreeMap::new();
        for (t, row) in pol.gains.iter().enumerate() {
            for (i, g) in row.iter().enumerate() {
                gains.insert(format!("{t},{i}"), crate::linalg::mat_to_rows(g));
            }
        }
        Ok(PolicyFile {
            horizon: layout.horizon,
            n_u: layout.n_u,
            n_y: layout.n_y,
            h,
            gains,
            scenario_hash: scenario_hash.to_string(),
        })
    }

    pub fn to_policy(&self) -> Result<(PobPolicy, ChiLayout)> {
        let layout = ChiLayout {
            horizon: self.horizon,
            n_u: self.n_u,
            n_y: self.n_y,
        };
        if self.h.len() != self.horizon {
            return Err(Error::Input(format!(
                "policy file has {} offset blocks, horizon is {}",
                self.h.len(),
                self.horizon
            )));
        }
        let offsets: Vec<DVector<f64>> = self
            .h
            .iter()
            .map(|v| DVector::from_column_slice(v))
            .collect();
        let mut gains: Vec<Vec<DMatrix<f64>>> = (0..self.horizon)
            .map(|t| vec![DMatrix::zeros(self.n_u, self.n_y); t + 1])
            .collect();
        for (key, rows) in &self.gains {
            let (t, i) = key
                .split_once(',')
                .and_then(|(a, b)| Some((a.parse::<usize>().ok()?, b.parse::<usize>().ok()?)))
                .ok_or_else(|| Error::Input(format!("bad gain key {key:?}")))?;
            if t >= self.horizon || i > t {
                return Err(Error::Input(format!(
                    "gain key {key:?} violates causality for horizon {}",
                    self.horizon
                )));
            }
            gains[t][i] = crate::linalg::mat_from_rows(rows)?;
        }
        let pol = PobPolicy::new(offsets, gains, &layout)?;
        Ok((pol, layout))
    }
}
