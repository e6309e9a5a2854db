//! Policy validation: Monte Carlo moment checks, worst-case disturbance
//! search with analytic noise expectations, rounding certificates and the
//! relaxation tightness harness.

mod harness;
mod round;
mod trs;

pub use harness::{
    random_ellitope, random_form, random_spectratope, tightness_harness, HarnessDims, HarnessRow,
    HarnessTable,
};
pub use round::{
    round_sdp_solution, solve_relaxation_dual, RelaxationDual, RoundingCertificate,
    RoundingOutcome,
};
pub use trs::{max_quadratic_over_ellipsoid, max_quadratic_over_unit_ball};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::compiler::PerfSpec;
use crate::error::{Error, Result};
use crate::linalg::{psd_factor, sym_op_norm, symmetrize};
use crate::policy::{simulate, PobPolicy};
use crate::system::{build_trajectory_maps, LinearSystem};
use crate::uncertainty::{SampleStrategy, UncertaintySet};

pub use harness::derived_seed;

/// One Gaussian noise draw `eps = R eta`, `eta ~ N(0, I)`, from the
/// per-sample stream `(seed, idx)`. Deterministic and independent of
/// batching.
pub fn noise_sample(r_factor: &DMatrix<f64>, seed: u64, idx: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(derived_seed(seed, idx));
    let eta = DVector::from_fn(r_factor.ncols(), |_, _| rng.sample(StandardNormal));
    r_factor * eta
}

/// Margin rule: a specification holds when `bound - worst >= -1e-6 (1+|bound|)`.
pub const MARGIN_REL_TOL: f64 = 1e-6;

/// One specification's verification record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpecCheck {
    pub index: usize,
    pub kind: String,
    /// Right-hand side of the inequality (0 for covariance caps, whose value
    /// below is the largest eigenvalue of `Q Sigma Q' - Sigma_cap`).
    pub bound: f64,
    /// Worst value of the left side over the sampled disturbances, with the
    /// noise expectations evaluated analytically.
    pub worst_value: f64,
    pub margin: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationReport {
    pub checks: Vec<SpecCheck>,
    pub samples: usize,
    pub seed: u64,
    /// Operator-norm gap between the empirical and analytic trajectory
    /// covariance, relative to the analytic norm.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub covariance_gap_rel: Option<f64>,
    pub covariance_samples: usize,
}

impl VerificationReport {
    pub fn all_ok(&self) -> bool {
        self.checks.iter().all(|c| c.ok)
    }
}

struct SpecEvaluator {
    kind: &'static str,
    bound: f64,
    /// Constant part of the value (noise expectation, or the full value for
    /// covariance caps).
    constant: f64,
    /// Quadratic part in the mean: weight matrix and offset, when present.
    quad: Option<(DMatrix<f64>, DVector<f64>)>,
    /// Linear part in the mean, when present.
    lin: Option<DVector<f64>>,
}

impl SpecEvaluator {
    /// Value at the mean trajectory `mu = Z[chi] [zeta; 1]`.
    fn value(&self, mu: &DVector<f64>) -> f64 {
        let mut v = self.constant;
        if let Some((a, beta)) = &self.quad {
            let d = mu - beta;
            v += (d.transpose() * a * &d)[(0, 0)];
        }
        if let Some(a) = &self.lin {
            v += a.dot(mu);
        }
        v
    }

    /// Gradient with respect to the mean.
    fn grad_mu(&self, mu: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(mu.len());
        if let Some((a, beta)) = &self.quad {
            g += 2.0 * (a * (mu - beta));
        }
        if let Some(a) = &self.lin {
            g += a;
        }
        g
    }

    fn is_constant(&self) -> bool {
        self.quad.is_none() && self.lin.is_none()
    }
}

fn build_evaluators(
    specs: &[PerfSpec],
    e_mat: &DMatrix<f64>,
    pi: &DMatrix<f64>,
) -> Result<Vec<SpecEvaluator>> {
    let sigma_w = symmetrize(&(e_mat * pi * e_mat.transpose()));
    specs
        .iter()
        .map(|spec| {
            Ok(match spec {
                PerfSpec::AveragedQuadratic(s) => {
                    let noise = (&s.a * &sigma_w).trace();
                    SpecEvaluator {
                        kind: "averaged_quadratic",
                        bound: s.gamma,
                        constant: noise,
                        quad: Some((s.a.clone(), s.beta.clone())),
                        lin: None,
                    }
                }
                PerfSpec::MeanQuadratic(s) => SpecEvaluator {
                    kind: "mean_quadratic",
                    bound: s.gamma,
                    constant: 0.0,
                    quad: Some((s.a.clone(), s.beta.clone())),
                    lin: None,
                },
                PerfSpec::LinearMean(s) => SpecEvaluator {
                    kind: "linear_mean",
                    bound: s.gamma,
                    constant: 0.0,
                    quad: None,
                    lin: Some(s.a.clone()),
                },
                PerfSpec::CovarianceBound(s) => {
                    let qsq = symmetrize(&(&s.q * &sigma_w * s.q.transpose())) - &s.sigma;
                    let lam_max = -crate::linalg::min_eig(&(-qsq));
                    SpecEvaluator {
                        kind: "covariance_bound",
                        bound: 0.0,
                        constant: lam_max,
                        quad: None,
                        lin: None,
                    }
                }
            })
        })
        .collect()
}

/// Worst-case check of every specification for a fixed policy.
///
/// Disturbances are sampled boundary-biased from the set; the expectation
/// over the stochastic noise is evaluated analytically (so any observed
/// violation is attributable to the deterministic disturbance), and the
/// worst sample per spec is refined by projected gradient ascent.
pub fn verify_policy(
    sys: &LinearSystem,
    pol: &PobPolicy,
    set: &UncertaintySet,
    specs: &[PerfSpec],
    n_samples: usize,
    seed: u64,
) -> Result<VerificationReport> {
    if n_samples == 0 {
        return Err(Error::Input("sample count must be at least 1".into()));
    }
    let dims = sys.dims();
    if set.dim_out() != dims.n_zeta() {
        return Err(Error::Dimension(
            "uncertainty set vs system disturbance dimension".into(),
        ));
    }
    let maps = build_trajectory_maps(sys);
    let layout = maps.layout();
    let chi = pol.flatten(&layout)?;
    let z_mat = maps.zmap().evaluate(&chi);
    let e_mat = maps.emap().evaluate(&chi);
    let evaluators = build_evaluators(specs, &e_mat, sys.pi())?;

    let n_zeta = dims.n_zeta();
    let z_cols = z_mat.columns(0, n_zeta).into_owned();
    let z_const = z_mat.column(n_zeta).into_owned();
    let mu_of = |zeta: &DVector<f64>| -> DVector<f64> { &z_cols * zeta + &z_const };

    let samples = set.sample_with_latent(n_samples, seed, SampleStrategy::BoundaryBiased)?;
    let proj = set.proj().cloned();

    let mut checks = Vec::with_capacity(specs.len());
    for (index, ev) in evaluators.iter().enumerate() {
        let mut worst_val;
        let mut worst_z: Option<DVector<f64>> = None;
        if ev.is_constant() {
            worst_val = ev.constant;
        } else {
            // zeta = 0 is always admissible for these origin-symmetric sets.
            let zero = DVector::zeros(n_zeta);
            worst_val = ev.value(&mu_of(&zero));
            for (z, x) in &samples {
                let v = ev.value(&mu_of(x));
                if v > worst_val {
                    worst_val = v;
                    worst_z = Some(z.clone());
                }
            }
            // Local ascent refinement of the worst sample.
            if let (Some(mut z), Some(p)) = (worst_z.take(), proj.as_ref()) {
                let mut step = 0.1;
                for _ in 0..50 {
                    let x = p * &z;
                    let g_zeta = ev.grad_mu(&mu_of(&x)).transpose() * &z_cols;
                    let g_z = p.transpose() * g_zeta.transpose();
                    let norm = g_z.norm();
                    if norm <= 1e-14 {
                        break;
                    }
                    let cand = set.project_radial(&(&z + &g_z * (step / norm)));
                    let v = ev.value(&mu_of(&(p * &cand)));
                    if v > worst_val {
                        worst_val = v;
                        z = cand;
                    } else {
                        step *= 0.5;
                    }
                }
            }
        }
        let margin = ev.bound - worst_val;
        checks.push(SpecCheck {
            index,
            kind: ev.kind.to_string(),
            bound: ev.bound,
            worst_value: worst_val,
            margin,
            ok: margin >= -MARGIN_REL_TOL * (1.0 + ev.bound.abs()),
        });
    }

    // Empirical-vs-analytic covariance cross-check on a capped sample count.
    let cov_samples = n_samples.clamp(2, 10_000);
    let sigma_w = symmetrize(&(&e_mat * sys.pi() * e_mat.transpose()));
    let (_, emp_cov) = empirical_moments(
        sys,
        pol,
        &DVector::zeros(n_zeta),
        sys.pi(),
        cov_samples,
        derived_seed(seed, 0xC0,),
    )?;
    let denom = sym_op_norm(&sigma_w).max(1e-300);
    let gap = sym_op_norm(&(emp_cov - &sigma_w)) / denom;

    Ok(VerificationReport {
        checks,
        samples: n_samples,
        seed,
        covariance_gap_rel: Some(gap),
        covariance_samples: cov_samples,
    })
}

/// Sample mean and covariance of simulated trajectories under Gaussian noise
/// `eps ~ N(0, Pi)` at a fixed deterministic disturbance.
pub fn empirical_moments(
    sys: &LinearSystem,
    pol: &PobPolicy,
    zeta: &DVector<f64>,
    pi: &DMatrix<f64>,
    n_samples: usize,
    seed: u64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if n_samples < 2 {
        return Err(Error::Input("need at least two samples".into()));
    }
    let dims = sys.dims();
    let r = psd_factor(pi)?;
    let n_w = dims.n_w();

    let mut mean = DVector::zeros(n_w);
    let mut second = DMatrix::zeros(n_w, n_w);
    let chunk = 2048;
    let mut buf = DMatrix::zeros(n_w, chunk);
    let mut filled = 0usize;
    for i in 0..n_samples {
        let eps = noise_sample(&r, seed, i as u64);
        let trace = simulate(sys, pol, zeta, &eps)?;
        let w = trace.trajectory(&dims);
        mean += &w;
        buf.set_column(filled, &w);
        filled += 1;
        if filled == chunk {
            second += &buf * buf.transpose();
            filled = 0;
        }
    }
    if filled > 0 {
        let part = buf.columns(0, filled).into_owned();
        second += &part * part.transpose();
    }
    mean /= n_samples as f64;
    let cov = (second - (&mean * mean.transpose()) * (n_samples as f64)) / (n_samples as f64 - 1.0);
    Ok((mean, symmetrize(&cov)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::{SpecAveragedQuadratic, SpecCovarianceBound, SpecLinearMean};
    use crate::system::ChiLayout;
    use approx::assert_abs_diff_eq;

    fn small_system(seed: u64) -> LinearSystem {
        crate::system::tests::random_system(seed, 4)
    }

    fn ball_set(dim: usize, rho: f64) -> UncertaintySet {
        UncertaintySet::Ellitope(
            crate::uncertainty::Ellitope::new(
                DMatrix::identity(dim, dim),
                vec![DMatrix::identity(dim, dim)],
                crate::uncertainty::IndexSetT::Box { blocks: 1 },
                rho,
            )
            .unwrap(),
        )
    }

    #[test]
    fn zero_noise_moments_are_exact() {
        let sys = {
            // Zero out Pi: replace with the same system but Pi = 0.
            let s = small_system(3);
            let n = s.dims().n_eps();
            LinearSystem::new(
                (0..s.horizon()).map(|t| s.a(t).clone()).collect(),
                (0..s.horizon()).map(|t| s.b(t).clone()).collect(),
                (0..s.horizon()).map(|t| s.b_d(t).clone()).collect(),
                (0..s.horizon()).map(|t| s.b_s(t).clone()).collect(),
                (0..s.horizon()).map(|t| s.c(t).clone()).collect(),
                (0..s.horizon()).map(|t| s.d_d(t).clone()).collect(),
                (0..s.horizon()).map(|t| s.d_s(t).clone()).collect(),
                DMatrix::zeros(n, n),
            )
            .unwrap()
        };
        let layout = ChiLayout::from_dims(&sys.dims());
        let pol = crate::policy::tests::random_pob(&layout, 5, 0.5);
        let maps = build_trajectory_maps(&sys);
        let chi = pol.flatten(&layout).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let zeta = DVector::from_fn(sys.dims().n_zeta(), |_, _| rng.sample(StandardNormal));
        let (mean, cov) = empirical_moments(&sys, &pol, &zeta, sys.pi(), 16, 1).unwrap();
        let expect = maps.trajectory(&chi, &zeta, &DVector::zeros(sys.dims().n_eps()));
        assert_abs_diff_eq!(mean, expect, epsilon = 1e-10);
        assert_abs_diff_eq!(
            cov,
            DMatrix::zeros(sys.dims().n_w(), sys.dims().n_w()),
            epsilon = 1e-12
        );
    }

    #[test]
    fn empirical_covariance_approaches_analytic() {
        let sys = small_system(7);
        let layout = ChiLayout::from_dims(&sys.dims());
        let pol = crate::policy::tests::random_pob(&layout, 9, 0.3);
        let maps = build_trajectory_maps(&sys);
        let chi = pol.flatten(&layout).unwrap();
        let analytic =
            crate::system::covariance_of_trajectory(&maps, &chi, sys.pi()).unwrap();
        let zeta = DVector::zeros(sys.dims().n_zeta());
        let (_, cov) = empirical_moments(&sys, &pol, &zeta, sys.pi(), 20_000, 2).unwrap();
        let gap = sym_op_norm(&(cov - &analytic)) / sym_op_norm(&analytic).max(1e-300);
        assert!(gap <= 0.05, "gap {gap}");
    }

    #[test]
    fn covariance_is_independent_of_zeta() {
        let sys = small_system(11);
        let layout = ChiLayout::from_dims(&sys.dims());
        let pol = crate::policy::tests::random_pob(&layout, 13, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z1 = DVector::from_fn(sys.dims().n_zeta(), |_, _| rng.sample(StandardNormal));
        let z2 = DVector::from_fn(sys.dims().n_zeta(), |_, _| rng.sample(StandardNormal));
        let (_, c1) = empirical_moments(&sys, &pol, &z1, sys.pi(), 15_000, 3).unwrap();
        let (_, c2) = empirical_moments(&sys, &pol, &z2, sys.pi(), 15_000, 4).unwrap();
        let gap = sym_op_norm(&(c1 - &c2)) / sym_op_norm(&c2).max(1e-300);
        assert!(gap <= 0.1, "gap {gap}");
    }

    #[test]
    fn degenerate_set_report_is_single_point() {
        let sys = small_system(17);
        let layout = ChiLayout::from_dims(&sys.dims());
        let pol = crate::policy::tests::random_pob(&layout, 19, 0.2);
        let set = UncertaintySet::Zero {
            dim: sys.dims().n_zeta(),
        };
        let maps = build_trajectory_maps(&sys);
        let chi = pol.flatten(&layout).unwrap();
        let mu0 = maps.trajectory(&chi, &DVector::zeros(sys.dims().n_zeta()), &DVector::zeros(sys.dims().n_eps()));
        let a = DVector::from_fn(sys.dims().n_w(), |i, _| if i == 0 { 1.0 } else { 0.0 });
        let specs = vec![PerfSpec::LinearMean(SpecLinearMean {
            a: a.clone(),
            gamma: a.dot(&mu0) + 1.0,
        })];
        let report = verify_policy(&sys, &pol, &set, &specs, 8, 5).unwrap();
        assert!(report.all_ok());
        assert_abs_diff_eq!(report.checks[0].worst_value, a.dot(&mu0), epsilon = 1e-9);
        assert_abs_diff_eq!(report.checks[0].margin, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn verify_is_deterministic_per_seed() {
        let sys = small_system(23);
        let layout = ChiLayout::from_dims(&sys.dims());
        let pol = crate::policy::tests::random_pob(&layout, 29, 0.2);
        let set = ball_set(sys.dims().n_zeta(), 1.0);
        let specs = vec![PerfSpec::AveragedQuadratic(SpecAveragedQuadratic {
            a: DMatrix::identity(sys.dims().n_w(), sys.dims().n_w()),
            beta: DVector::zeros(sys.dims().n_w()),
            gamma: 1e6,
        })];
        let r1 = verify_policy(&sys, &pol, &set, &specs, 64, 9).unwrap();
        let r2 = verify_policy(&sys, &pol, &set, &specs, 64, 9).unwrap();
        assert_eq!(r1.checks[0].worst_value, r2.checks[0].worst_value);
    }

    #[test]
    fn ascent_finds_the_ball_worst_case() {
        // For a linear spec over a ball the worst case is analytic; sampled
        // search plus ascent must get very close.
        let sys = small_system(31);
        let dims = sys.dims();
        let layout = ChiLayout::from_dims(&dims);
        let pol = crate::policy::tests::random_pob(&layout, 37, 0.4);
        let set = ball_set(dims.n_zeta(), 1.0);
        let maps = build_trajectory_maps(&sys);
        let chi = pol.flatten(&layout).unwrap();
        let z_mat = maps.zmap().evaluate(&chi);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = DVector::from_fn(dims.n_w(), |_, _| rng.sample(StandardNormal));
        // a' Z [zeta;1] = q + 2 p' zeta: worst over unit ball = q + 2||p||.
        let g = a.transpose() * &z_mat;
        let p = 0.5 * g.columns(0, dims.n_zeta()).transpose();
        let q = g[(0, dims.n_zeta())];
        let exact = q + 2.0 * p.norm();
        let specs = vec![PerfSpec::LinearMean(SpecLinearMean { a, gamma: exact })];
        let report = verify_policy(&sys, &pol, &set, &specs, 400, 21).unwrap();
        let got = report.checks[0].worst_value;
        assert!(
            (exact - got).abs() <= 2e-3 * (1.0 + exact.abs()),
            "exact {exact} vs searched {got}"
        );
        assert!(got <= exact + 1e-9);
    }

    #[test]
    fn analytic_spec_value_matches_raw_monte_carlo() {
        // The averaged-quadratic value used by verification (analytic in the
        // noise) must agree with a plain Monte Carlo average of the actual
        // quadratic over simulated trajectories.
        let sys = small_system(47);
        let dims = sys.dims();
        let layout = ChiLayout::from_dims(&dims);
        let pol = crate::policy::tests::random_pob(&layout, 49, 0.3);
        let maps = build_trajectory_maps(&sys);
        let chi = pol.flatten(&layout).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let half = DMatrix::from_fn(dims.n_w(), dims.n_w(), |_, _| {
            rng.sample::<f64, _>(StandardNormal) * 0.2
        });
        let a = &half * half.transpose();
        let beta = DVector::from_fn(dims.n_w(), |_, _| rng.sample(StandardNormal));
        let zeta = DVector::from_fn(dims.n_zeta(), |_, _| rng.sample(StandardNormal));
        // Analytic: (mu - beta)' A (mu - beta) + Tr(A Sigma_w).
        let e_mat = maps.emap().evaluate(&chi);
        let sigma_w = symmetrize(&(&e_mat * sys.pi() * e_mat.transpose()));
        let mu = maps.trajectory(&chi, &zeta, &DVector::zeros(dims.n_eps()));
        let dmu = &mu - &beta;
        let analytic = (dmu.transpose() * &a * &dmu)[(0, 0)] + (&a * &sigma_w).trace();
        // Raw Monte Carlo over the noise.
        let r = psd_factor(sys.pi()).unwrap();
        let n = 40_000;
        let mut acc = 0.0;
        for i in 0..n {
            let eps = noise_sample(&r, 77, i as u64);
            let w = simulate(&sys, &pol, &zeta, &eps).unwrap().trajectory(&dims);
            let dw = &w - &beta;
            acc += (dw.transpose() * &a * &dw)[(0, 0)];
        }
        let mc = acc / n as f64;
        let rel = (mc - analytic).abs() / (1.0 + analytic.abs());
        assert!(rel <= 0.02, "analytic {analytic} vs Monte Carlo {mc}");
    }

    #[test]
    fn covariance_check_matches_eigenvalue() {
        let sys = small_system(41);
        let dims = sys.dims();
        let layout = ChiLayout::from_dims(&dims);
        let pol = crate::policy::tests::random_pob(&layout, 43, 0.2);
        let maps = build_trajectory_maps(&sys);
        let chi = pol.flatten(&layout).unwrap();
        let sigma_w = crate::system::covariance_of_trajectory(&maps, &chi, sys.pi()).unwrap();
        let cap = sym_op_norm(&sigma_w) * 1.5;
        let n_w = dims.n_w();
        let specs = vec![PerfSpec::CovarianceBound(SpecCovarianceBound {
            q: DMatrix::identity(n_w, n_w),
            sigma: DMatrix::identity(n_w, n_w) * cap,
        })];
        let set = ball_set(dims.n_zeta(), 1.0);
        let report = verify_policy(&sys, &pol, &set, &specs, 4, 3).unwrap();
        assert!(report.all_ok());
        let expect = crate::linalg::sym_eigen(&(sigma_w - DMatrix::identity(n_w, n_w) * cap))
            .0
            .max();
        assert_abs_diff_eq!(report.checks[0].worst_value, expect, epsilon = 1e-9);
    }
}
