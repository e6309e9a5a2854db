//! Brute-force quadratic maximization over small uncertainty sets.
//!
//! Independent oracle for the relaxation machinery: multi-start projected
//! gradient ascent (radial feasibility projection, Armijo backtracking) plus
//! sign-pattern enumeration of the leading eigenvector direction and of the
//! all-ones direction. Cost grows exponentially with the latent dimension;
//! intended for latent dimensions up to about eight.

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{QuadraticForm, UncertaintySet};
use crate::error::{Error, Result};
use crate::linalg::sym_eigen;

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACK: usize = 50;
const ASCENT_ITERS: usize = 400;

/// Lower bound on `max { G(z) : z in set }` with the achieving point.
pub fn brute_force_max(
    form: &QuadraticForm,
    set: &UncertaintySet,
    budget: usize,
    seed: u64,
) -> Result<(f64, DVector<f64>)> {
    brute_force_max_with_starts(form, set, budget, seed, &[])
}

/// Same with caller-supplied warm starts (each is projected and refined like
/// any other start).
pub fn brute_force_max_with_starts(
    form: &QuadraticForm,
    set: &UncertaintySet,
    budget: usize,
    seed: u64,
    starts: &[DVector<f64>],
) -> Result<(f64, DVector<f64>)> {
    if budget == 0 {
        return Err(Error::Input("budget must be at least 1".into()));
    }
    let nbar = set.nbar();
    if let UncertaintySet::Zero { .. } = set {
        return Ok((form.value(&DVector::zeros(form.dim())), DVector::zeros(form.dim())));
    }
    if form.dim() != nbar {
        return Err(Error::Dimension(format!(
            "form dimension {} vs latent dimension {}",
            form.dim(),
            nbar
        )));
    }

    let mut best_val = f64::NEG_INFINITY;
    let mut best_z = DVector::zeros(nbar);
    let consider = |val: f64, z: &DVector<f64>, best_val: &mut f64, best_z: &mut DVector<f64>| {
        if val > *best_val {
            *best_val = val;
            *best_z = z.clone();
        }
    };

    // Origin is always feasible.
    consider(0.0, &DVector::zeros(nbar), &mut best_val, &mut best_z);

    for s in starts {
        let (v, z) = ascend(form, set, s);
        consider(v, &z, &mut best_val, &mut best_z);
    }

    // Sign-pattern enumeration of the leading eigenvector of Q and of the
    // all-ones direction, pushed radially to the boundary.
    if nbar <= 16 {
        let (vals, vecs) = sym_eigen(form.matrix());
        let top = vecs.column(vals.len() - 1).map(|v| v.abs());
        let ones = DVector::from_element(nbar, 1.0);
        for pattern in 0..(1usize << nbar) {
            for base in [&top, &ones] {
                let mut dir = DVector::zeros(nbar);
                for i in 0..nbar {
                    let s = if pattern >> i & 1 == 1 { -1.0 } else { 1.0 };
                    dir[i] = s * base[i];
                }
                if dir.amax() == 0.0 {
                    continue;
                }
                let ratio = set.level_ratio(&dir);
                if !ratio.is_finite() || ratio == 0.0 {
                    continue;
                }
                let z0 = &dir / ratio.sqrt();
                let (v, z) = ascend(form, set, &z0);
                consider(v, &z, &mut best_val, &mut best_z);
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for trial in 0..budget {
        let dir = DVector::from_iterator(nbar, (0..nbar).map(|_| {
            let v: f64 = rng.sample(StandardNormal);
            v
        }));
        let ratio = set.level_ratio(&dir);
        if !ratio.is_finite() || ratio == 0.0 {
            continue;
        }
        let boundary = 1.0 / ratio.sqrt();
        // Alternate boundary and interior starts.
        let c = if trial % 2 == 0 {
            boundary
        } else {
            let u: f64 = rng.random();
            boundary * u
        };
        let (v, z) = ascend(form, set, &(dir * c));
        consider(v, &z, &mut best_val, &mut best_z);
    }

    Ok((best_val, best_z))
}

/// Projected gradient ascent with backtracking from one start. The Armijo
/// test measures sufficient decrease against the realized projected step, so
/// progress along the boundary keeps being accepted arbitrarily close to the
/// optimum.
fn ascend(
    form: &QuadraticForm,
    set: &UncertaintySet,
    start: &DVector<f64>,
) -> (f64, DVector<f64>) {
    let mut z = set.project_radial(start);
    let mut val = form.value(&z);
    // Conservative initial step so nearby basins are not hopped over; grows
    // geometrically while steps keep being accepted.
    let mut alpha0 = 0.05 * (1.0 + z.norm());
    for _ in 0..ASCENT_ITERS {
        let g = form.grad(&z);
        let gnorm = g.norm();
        if gnorm <= 1e-14 * (1.0 + val.abs()) {
            break;
        }
        // Primary direction: the gradient. Fallback: its ray-orthogonal
        // part, which under radial reprojection walks exactly along the
        // boundary and keeps making progress when the gradient is mostly
        // radial.
        let mut dirs = vec![g.clone()];
        let zn = z.norm();
        if zn > 0.0 {
            let radial = &z * (g.dot(&z) / (zn * zn));
            let tangent = &g - radial;
            if tangent.norm() > 1e-14 * gnorm {
                dirs.push(tangent);
            }
        }
        let mut accepted = false;
        'dirs: for dir in &dirs {
            let dnorm = dir.norm();
            let mut alpha = alpha0;
            for _ in 0..MAX_BACKTRACK {
                let cand = set.project_radial(&(&z + dir * (alpha / dnorm)));
                let predicted = g.dot(&(&cand - &z));
                let cval = form.value(&cand);
                if predicted > 0.0 && cval >= val + ARMIJO * predicted {
                    z = cand;
                    val = cval;
                    alpha0 = (alpha * 2.0).min(1e2);
                    accepted = true;
                    break 'dirs;
                }
                alpha *= 0.5;
                if alpha <= 1e-15 * (1.0 + z.norm()) {
                    break;
                }
            }
        }
        if !accepted {
            break;
        }
    }
    (val, z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::uncertainty::tests::{unit_ball, unit_box2};
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    #[test]
    fn identity_on_unit_ball() {
        let form = QuadraticForm::new(DMatrix::identity(2, 2), DVector::zeros(2)).unwrap();
        let set = unit_ball(2);
        let (val, z) = brute_force_max(&form, &set, 1000, 0).unwrap();
        assert_abs_diff_eq!(val, 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(z.norm(), 1.0, epsilon = 1e-6);
    }

    #[test]
    fn top_eigenvalue_on_unit_ball() {
        let form = QuadraticForm::new(
            DMatrix::from_diagonal(&DVector::from_column_slice(&[2.0, 1.0])),
            DVector::zeros(2),
        )
        .unwrap();
        let set = unit_ball(2);
        let (val, _) = brute_force_max(&form, &set, 1000, 0).unwrap();
        assert_abs_diff_eq!(val, 2.0, epsilon = 1e-6);
    }

    #[test]
    fn corners_of_unit_box() {
        // Corner enumeration oracle: max of ||z||^2 over the unit box is at
        // the corners (+-1, +-1) with value 2.
        let form = QuadraticForm::new(DMatrix::identity(2, 2), DVector::zeros(2)).unwrap();
        let set = unit_box2();
        let (val, z) = brute_force_max(&form, &set, 1000, 0).unwrap();
        assert_abs_diff_eq!(val, 2.0, epsilon = 1e-4);
        assert_abs_diff_eq!(z[0].abs(), 1.0, epsilon = 1e-4);
        assert_abs_diff_eq!(z[1].abs(), 1.0, epsilon = 1e-4);
    }

    #[test]
    fn monotone_in_rho() {
        let form = QuadraticForm::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, -0.5]),
            DVector::from_column_slice(&[0.2, -0.1]),
        )
        .unwrap();
        let set = unit_box2();
        let mut prev = f64::NEG_INFINITY;
        for &rho in &[0.25, 1.0, 4.0] {
            let scaled = set.with_rho(rho).unwrap();
            let (val, _) = brute_force_max(&form, &scaled, 400, 9).unwrap();
            assert!(val >= prev - 1e-9);
            prev = val;
        }
    }
}
