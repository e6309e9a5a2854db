//! Exact maximization of a quadratic over a Euclidean ball or an ellipsoid.
//!
//! Independent oracle for the single-ellipsoid S-lemma reformulation: the
//! trust-region subproblem solved through the eigendecomposition and a
//! secular-equation bisection with explicit hard-case handling.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::sym_eigen;

/// `max { y' A y + 2 b' y : ||y|| <= 1 }` for symmetric `A`.
pub fn max_quadratic_over_unit_ball(a: &DMatrix<f64>, b: &DVector<f64>) -> (f64, DVector<f64>) {
    let n = b.len();
    assert_eq!(a.nrows(), n);
    let (d, v) = sym_eigen(a);
    let bt = v.transpose() * b;
    let d_max = d[n - 1];
    let scale = d.amax().max(bt.amax()).max(1.0);

    let value = |y: &DVector<f64>| (y.transpose() * a * y)[(0, 0)] + 2.0 * b.dot(y);

    // Concave case with an interior stationary point.
    if d_max <= 0.0 {
        let solvable = (0..n).all(|i| d[i].abs() > 1e-14 * scale || bt[i].abs() <= 1e-14 * scale);
        if solvable {
            let yt = DVector::from_fn(n, |i, _| {
                if d[i].abs() > 1e-14 * scale {
                    -bt[i] / d[i]
                } else {
                    0.0
                }
            });
            if yt.norm() <= 1.0 {
                let y = &v * yt;
                return (value(&y), y);
            }
        }
    }

    // Boundary: (mu I - A) y = b with mu >= max(0, d_max) and ||y|| = 1.
    let mu_floor = d_max.max(0.0);
    let phi = |mu: f64| -> f64 {
        (0..n)
            .map(|i| {
                let denom = mu - d[i];
                let t = bt[i] / denom;
                t * t
            })
            .sum()
    };
    let eps = 1e-13 * scale.max(1.0);
    let phi_floor = if (0..n).any(|i| (mu_floor - d[i]).abs() <= eps && bt[i].abs() > eps) {
        f64::INFINITY
    } else {
        phi(mu_floor + eps)
    };

    let (mu, hard_case) = if phi_floor < 1.0 {
        (mu_floor, true)
    } else {
        let mut lo = mu_floor + eps;
        let mut hi = mu_floor + scale + bt.norm() + 1.0;
        while phi(hi) >= 1.0 {
            hi = 2.0 * hi + 1.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            if phi(mid) >= 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (0.5 * (lo + hi), false)
    };

    let mut yt = DVector::from_fn(n, |i, _| {
        let denom = mu - d[i];
        if denom.abs() > eps {
            bt[i] / denom
        } else {
            0.0
        }
    });
    if hard_case {
        // Pad with the top eigendirection to reach the sphere.
        let deficit = (1.0 - yt.norm_squared()).max(0.0);
        yt[n - 1] += deficit.sqrt();
    } else {
        // Guard roundoff: renormalize onto the sphere.
        let nrm = yt.norm();
        if nrm > 0.0 {
            yt /= nrm;
        }
    }
    let y = &v * yt;
    (value(&y), y)
}

/// `max { zeta' X zeta + 2 x' zeta : zeta = P z, z' Qbar z <= 1 }` with
/// `Qbar` positive definite. Returns the value and the achieving `zeta`.
pub fn max_quadratic_over_ellipsoid(
    x_mat: &DMatrix<f64>,
    x_vec: &DVector<f64>,
    proj: &DMatrix<f64>,
    qbar: &DMatrix<f64>,
) -> Result<(f64, DVector<f64>)> {
    let chol = qbar
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Input("ellipsoid shape matrix must be positive definite".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    // y = L' z: pull the quadratic back to the unit ball.
    let pa = proj.transpose() * x_mat * proj;
    let a = &linv * pa * linv.transpose();
    let b = &linv * (proj.transpose() * x_vec);
    let (val, y) = max_quadratic_over_unit_ball(&crate::linalg::symmetrize(&a), &b);
    let z = linv.transpose() * y;
    Ok((val, proj * z))
}
