//! Scenario file model: the JSON-compatible description of a system, its
//! uncertainty set, the performance specifications and an optional
//! objective, shared by the CLI and the test suites.
//!
//! Matrices are row-major nested arrays; per-step system matrices may be
//! given either once (broadcast across the horizon) or as a list with one
//! entry per step. Unknown fields are rejected.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::compiler::{
    Objective, PerfSpec, SpecAveragedQuadratic, SpecCovarianceBound, SpecLinearMean,
    SpecMeanQuadratic,
};
use crate::error::{Error, Result};
use crate::linalg::{mat_from_rows, mat_to_rows};
use crate::system::LinearSystem;
use crate::uncertainty::{Ellitope, IndexSetT, Spectratope, SpectratopeBlock, UncertaintySet};

pub type MatData = Vec<Vec<f64>>;

/// One matrix broadcast across the horizon, or one per step.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum MatOrPerStep {
    One(MatData),
    PerStep(Vec<MatData>),
}

impl MatOrPerStep {
    fn materialize(&self, horizon: usize, field: &str) -> Result<Vec<DMatrix<f64>>> {
        match self {
            MatOrPerStep::One(m) => {
                let mat =
                    mat_from_rows(m).map_err(|e| Error::Input(format!("field {field:?}: {e}")))?;
                Ok(vec![mat; horizon])
            }
            MatOrPerStep::PerStep(list) => {
                if list.len() != horizon {
                    return Err(Error::Input(format!(
                        "field {field:?}: {} matrices for horizon {horizon}",
                        list.len()
                    )));
                }
                list.iter()
                    .map(|m| {
                        mat_from_rows(m)
                            .map_err(|e| Error::Input(format!("field {field:?}: {e}")))
                    })
                    .collect()
            }
        }
    }
}

/// Noise covariance: explicit matrix or the identity shorthand.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum PiSpec {
    Keyword(String),
    Mat(MatData),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SystemBlock {
    pub horizon: usize,
    #[serde(rename = "A")]
    pub a: MatOrPerStep,
    #[serde(rename = "B")]
    pub b: MatOrPerStep,
    #[serde(rename = "Bd")]
    pub b_d: MatOrPerStep,
    #[serde(rename = "Bs")]
    pub b_s: MatOrPerStep,
    #[serde(rename = "C")]
    pub c: MatOrPerStep,
    #[serde(rename = "Dd")]
    pub d_d: MatOrPerStep,
    #[serde(rename = "Ds")]
    pub d_s: MatOrPerStep,
    #[serde(rename = "Pi")]
    pub pi: PiSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum IndexSetSpec {
    Box,
    Pnorm { p: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum UncertaintyBlock {
    /// Degenerate singleton: no deterministic disturbance.
    None,
    Ellitope {
        #[serde(rename = "P")]
        p: MatData,
        #[serde(rename = "S")]
        s: Vec<MatData>,
        #[serde(rename = "T")]
        t: IndexSetSpec,
        rho: f64,
    },
    Spectratope {
        #[serde(rename = "P")]
        p: MatData,
        /// Per block, the coefficient matrices of the linear matrix map
        /// (one per latent coordinate).
        blocks: Vec<Vec<MatData>>,
        #[serde(rename = "T")]
        t: IndexSetSpec,
        rho: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct AveragedQuadraticSpec {
    #[serde(rename = "A")]
    pub a: MatData,
    pub beta: Vec<f64>,
    pub gamma: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LinearMeanSpec {
    pub a: Vec<f64>,
    pub gamma: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CovarianceBoundSpec {
    #[serde(rename = "Q")]
    pub q: MatData,
    #[serde(rename = "Sigma")]
    pub sigma: MatData,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SpecsBlock {
    pub averaged_quadratic: Vec<AveragedQuadraticSpec>,
    pub linear_mean: Vec<LinearMeanSpec>,
    pub mean_quadratic: Vec<AveragedQuadraticSpec>,
    pub covariance_bound: Vec<CovarianceBoundSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveTerm {
    /// Index into the flattened spec list (averaged quadratics first, then
    /// linear means, then mean quadratics, then covariance bounds).
    pub index: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub system: SystemBlock,
    pub uncertainty: UncertaintyBlock,
    pub specs: SpecsBlock,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective: Option<Vec<ObjectiveTerm>>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Input(format!("scenario parse: {e}")))
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Build the typed modules. `rho_override` replaces the uncertainty level
    /// from the file.
    pub fn to_modules(
        &self,
        rho_override: Option<f64>,
    ) -> Result<(LinearSystem, UncertaintySet, Vec<PerfSpec>, Option<Objective>)> {
        let sys = self.build_system()?;
        let set = self.build_uncertainty(&sys, rho_override)?;
        let specs = self.build_specs(&sys)?;
        let objective = match &self.objective {
            None => None,
            Some(terms) => {
                if terms.is_empty() {
                    return Err(Error::Input("field \"objective\": empty term list".into()));
                }
                Some(Objective {
                    terms: terms.iter().map(|t| (t.index, t.weight)).collect(),
                })
            }
        };
        Ok((sys, set, specs, objective))
    }

    fn build_system(&self) -> Result<LinearSystem> {
        let sb = &self.system;
        if sb.horizon == 0 {
            return Err(Error::Input(
                "field \"system.horizon\": must be positive".into(),
            ));
        }
        let n = sb.horizon;
        let a = sb.a.materialize(n, "system.A")?;
        let b = sb.b.materialize(n, "system.B")?;
        let b_d = sb.b_d.materialize(n, "system.Bd")?;
        let b_s = sb.b_s.materialize(n, "system.Bs")?;
        let c = sb.c.materialize(n, "system.C")?;
        let d_d = sb.d_d.materialize(n, "system.Dd")?;
        let d_s = sb.d_s.materialize(n, "system.Ds")?;
        let n_eps = a[0].nrows() + b_s[0].ncols() * n;
        let pi = match &sb.pi {
            PiSpec::Keyword(k) if k == "identity" => DMatrix::identity(n_eps, n_eps),
            PiSpec::Keyword(k) => {
                return Err(Error::Input(format!(
                    "field \"system.Pi\": unknown keyword {k:?} (expected \"identity\")"
                )))
            }
            PiSpec::Mat(m) => {
                mat_from_rows(m).map_err(|e| Error::Input(format!("field \"system.Pi\": {e}")))?
            }
        };
        LinearSystem::new(a, b, b_d, b_s, c, d_d, d_s, pi)
            .map_err(|e| Error::Input(format!("field \"system\": {e}")))
    }

    fn build_uncertainty(
        &self,
        sys: &LinearSystem,
        rho_override: Option<f64>,
    ) -> Result<UncertaintySet> {
        let n_zeta = sys.dims().n_zeta();
        let index_set = |t: &IndexSetSpec, blocks: usize| match t {
            IndexSetSpec::Box => IndexSetT::Box { blocks },
            IndexSetSpec::Pnorm { p } => IndexSetT::PNormBall { blocks, p: *p },
        };
        match &self.uncertainty {
            UncertaintyBlock::None => Ok(UncertaintySet::Zero { dim: n_zeta }),
            UncertaintyBlock::Ellitope { p, s, t, rho } => {
                let proj = mat_from_rows(p)
                    .map_err(|e| Error::Input(format!("field \"uncertainty.P\": {e}")))?;
                if proj.nrows() != n_zeta {
                    return Err(Error::Input(format!(
                        "field \"uncertainty.P\": {} rows, disturbance dimension is {n_zeta}",
                        proj.nrows()
                    )));
                }
                let blocks = s
                    .iter()
                    .map(|m| {
                        mat_from_rows(m)
                            .map_err(|e| Error::Input(format!("field \"uncertainty.S\": {e}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let count = blocks.len();
                Ok(UncertaintySet::Ellitope(
                    Ellitope::new(
                        proj,
                        blocks,
                        index_set(t, count),
                        rho_override.unwrap_or(*rho),
                    )
                    .map_err(|e| Error::Input(format!("field \"uncertainty\": {e}")))?,
                ))
            }
            UncertaintyBlock::Spectratope { p, blocks, t, rho } => {
                let proj = mat_from_rows(p)
                    .map_err(|e| Error::Input(format!("field \"uncertainty.P\": {e}")))?;
                if proj.nrows() != n_zeta {
                    return Err(Error::Input(format!(
                        "field \"uncertainty.P\": {} rows, disturbance dimension is {n_zeta}",
                        proj.nrows()
                    )));
                }
                let blks = blocks
                    .iter()
                    .map(|coeffs| {
                        let mats = coeffs
                            .iter()
                            .map(|m| {
                                mat_from_rows(m).map_err(|e| {
                                    Error::Input(format!("field \"uncertainty.blocks\": {e}"))
                                })
                            })
                            .collect::<Result<Vec<_>>>()?;
                        SpectratopeBlock::new(mats).map_err(|e| {
                            Error::Input(format!("field \"uncertainty.blocks\": {e}"))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let count = blks.len();
                Ok(UncertaintySet::Spectratope(
                    Spectratope::new(
                        proj,
                        blks,
                        index_set(t, count),
                        rho_override.unwrap_or(*rho),
                    )
                    .map_err(|e| Error::Input(format!("field \"uncertainty\": {e}")))?,
                ))
            }
        }
    }

    fn build_specs(&self, sys: &LinearSystem) -> Result<Vec<PerfSpec>> {
        let n_w = sys.dims().n_w();
        let mut out = Vec::new();
        for (i, s) in self.specs.averaged_quadratic.iter().enumerate() {
            let a = mat_from_rows(&s.a).map_err(|e| {
                Error::Input(format!("field \"specs.averaged_quadratic[{i}].A\": {e}"))
            })?;
            if s.beta.len() != n_w {
                return Err(Error::Input(format!(
                    "field \"specs.averaged_quadratic[{i}].beta\": length {} vs trajectory {n_w}",
                    s.beta.len()
                )));
            }
            out.push(PerfSpec::AveragedQuadratic(SpecAveragedQuadratic {
                a,
                beta: DVector::from_column_slice(&s.beta),
                gamma: s.gamma,
            }));
        }
        for (i, s) in self.specs.linear_mean.iter().enumerate() {
            if s.a.len() != n_w {
                return Err(Error::Input(format!(
                    "field \"specs.linear_mean[{i}].a\": length {} vs trajectory {n_w}",
                    s.a.len()
                )));
            }
            out.push(PerfSpec::LinearMean(SpecLinearMean {
                a: DVector::from_column_slice(&s.a),
                gamma: s.gamma,
            }));
        }
        for (i, s) in self.specs.mean_quadratic.iter().enumerate() {
            let a = mat_from_rows(&s.a)
                .map_err(|e| Error::Input(format!("field \"specs.mean_quadratic[{i}].A\": {e}")))?;
            if s.beta.len() != n_w {
                return Err(Error::Input(format!(
                    "field \"specs.mean_quadratic[{i}].beta\": length {} vs trajectory {n_w}",
                    s.beta.len()
                )));
            }
            out.push(PerfSpec::MeanQuadratic(SpecMeanQuadratic {
                a,
                beta: DVector::from_column_slice(&s.beta),
                gamma: s.gamma,
            }));
        }
        for (i, s) in self.specs.covariance_bound.iter().enumerate() {
            let q = mat_from_rows(&s.q).map_err(|e| {
                Error::Input(format!("field \"specs.covariance_bound[{i}].Q\": {e}"))
            })?;
            let sigma = mat_from_rows(&s.sigma).map_err(|e| {
                Error::Input(format!("field \"specs.covariance_bound[{i}].Sigma\": {e}"))
            })?;
            out.push(PerfSpec::CovarianceBound(SpecCovarianceBound { q, sigma }));
        }
        Ok(out)
    }
}

/// FNV-1a content hash of the scenario file plus any level override; stamps
/// derived artifacts (policy files) so stale pairings are caught.
pub fn scenario_hash(bytes: &[u8], rho_override: Option<f64>) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    let mut eat = |data: &[u8]| {
        for &b in data {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    };
    eat(bytes);
    if let Some(r) = rho_override {
        eat(format!("rho={r:?}").as_bytes());
    }
    format!("{h:016x}")
}

/// The bundled flight-control study: longitudinal dynamics of a Boeing 747
/// discretized at 10 s, horizon 20, identity noise on the disturbance
/// channel, a two-block disturbance energy budget, mean-square state bounds
/// at steps 10 and 20, and a terminal covariance cap.
pub fn boeing747() -> Scenario {
    let n: usize = 20;
    let n_x = 5;
    let n_d = 2;
    let a = vec![
        vec![1.0, -1.1267, -0.6528, -8.0749, 1.5890],
        vec![0.0, 0.7741, 0.3176, -0.9772, -2.9690],
        vec![0.0, 0.1157, 0.0201, -0.0005, -0.3628],
        vec![0.0, 0.0111, 0.0033, -0.0349, -0.0447],
        vec![0.0, 0.1388, -0.0862, 0.2935, 0.7579],
    ];
    let b = vec![
        vec![89.1973, -50.1685],
        vec![5.2231, 6.3614],
        vec![-9.4731, 5.9294],
        vec![-0.3236, 0.3178],
        vec![-4.5318, 3.2146],
    ];
    let b_d = vec![
        vec![1.1267, -19.3472],
        vec![0.2259, -0.3176],
        vec![-0.1157, 0.9799],
        vec![-0.0111, -0.0033],
        vec![-0.1388, 0.0862],
    ];
    let c = vec![
        vec![0.0, 1.0, 0.0, 0.0, 0.0],
        vec![0.0, 0.0, -1.0, 0.0, 7.74],
    ];
    let d_zero = vec![vec![0.0; n_d]; 2];

    // eps = [s_0; e_0; ...]: the initial state is deterministic (zero), so
    // its noise block is zero; the step noises are standard Gaussian.
    let n_eps = n_x + n_d * n;
    let mut pi = vec![vec![0.0; n_eps]; n_eps];
    for (i, row) in pi.iter_mut().enumerate().skip(n_x) {
        row[i] = 1.0;
    }

    // zeta = [z; d_0; ...] with z identically zero: the latent coordinates
    // are the stacked disturbances, embedded below the zero z block.
    let nbar = n_d * n;
    let n_zeta = n_x + nbar;
    let mut proj = vec![vec![0.0; nbar]; n_zeta];
    for i in 0..nbar {
        proj[n_x + i][i] = 1.0;
    }
    // Energy budgets: unit on steps 0..=N-5, 1/100 on the last four steps.
    let early = (n - 4) * n_d;
    let mut s1 = vec![vec![0.0; nbar]; nbar];
    let mut s2 = vec![vec![0.0; nbar]; nbar];
    for i in 0..nbar {
        if i < early {
            s1[i][i] = 1.0;
        } else {
            s2[i][i] = 100.0;
        }
    }

    let n_w = (n_x + n_d) * n;
    let state_selector = |t: usize| -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; n_w]; n_w];
        for j in 0..n_x {
            let idx = (t - 1) * n_x + j;
            m[idx][idx] = 1.0;
        }
        m
    };
    let mut q_sel = vec![vec![0.0; n_w]; n_x];
    for j in 0..n_x {
        q_sel[j][(n - 1) * n_x + j] = 1.0;
    }
    let mut sigma_cap = vec![vec![0.0; n_x]; n_x];
    for (j, row) in sigma_cap.iter_mut().enumerate() {
        row[j] = 400.0;
    }

    Scenario {
        system: SystemBlock {
            horizon: n,
            a: MatOrPerStep::One(a),
            b: MatOrPerStep::One(b),
            b_d: MatOrPerStep::One(b_d.clone()),
            b_s: MatOrPerStep::One(b_d),
            c: MatOrPerStep::One(c),
            d_d: MatOrPerStep::One(d_zero.clone()),
            d_s: MatOrPerStep::One(d_zero),
            pi: PiSpec::Mat(pi),
        },
        uncertainty: UncertaintyBlock::Ellitope {
            p: proj,
            s: vec![s1, s2],
            t: IndexSetSpec::Box,
            rho: 1.0,
        },
        specs: SpecsBlock {
            averaged_quadratic: vec![
                AveragedQuadraticSpec {
                    a: state_selector(10),
                    beta: vec![0.0; n_w],
                    gamma: 400.0,
                },
                AveragedQuadraticSpec {
                    a: state_selector(20),
                    beta: vec![0.0; n_w],
                    gamma: 400.0,
                },
            ],
            linear_mean: vec![],
            mean_quadratic: vec![],
            covariance_bound: vec![CovarianceBoundSpec {
                q: q_sel,
                sigma: sigma_cap,
            }],
        },
        objective: None,
    }
}

/// Dense rows from a matrix, for serializers.
pub fn matrix_rows(m: &DMatrix<f64>) -> MatData {
    mat_to_rows(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::uncertainty::SampleStrategy;

    #[test]
    fn boeing_round_trips_and_builds() {
        let sc = boeing747();
        let json = sc.to_json_pretty();
        let back = Scenario::from_json(&json).unwrap();
        assert_eq!(sc, back);
        let (sys, set, specs, obj) = back.to_modules(None).unwrap();
        assert_eq!(sys.dims().horizon, 20);
        assert_eq!(sys.dims().n_x, 5);
        assert_eq!(sys.dims().n_u, 2);
        assert_eq!(set.dim_out(), 45);
        assert_eq!(set.nbar(), 40);
        assert_eq!(specs.len(), 3);
        assert!(obj.is_none());
    }

    #[test]
    fn boeing_samples_respect_energy_budgets() {
        let (_, set, _, _) = boeing747().to_modules(None).unwrap();
        let n_x = 5;
        let n_d = 2;
        let n = 20;
        for x in set.sample(1000, 42, SampleStrategy::Interior).unwrap() {
            // The z part stays identically zero.
            for i in 0..n_x {
                assert_eq!(x[i], 0.0);
            }
            let mut early = 0.0;
            let mut late = 0.0;
            for t in 0..n {
                for j in 0..n_d {
                    let v = x[n_x + t * n_d + j];
                    if t <= n - 5 {
                        early += v * v;
                    } else {
                        late += v * v;
                    }
                }
            }
            assert!(early <= 1.0 + 1e-9, "early energy {early}");
            assert!(late <= 0.01 + 1e-9, "late energy {late}");
        }
    }

    #[test]
    fn unknown_fields_rejected() {
        let sc = boeing747();
        let mut v: serde_json::Value = serde_json::from_str(&sc.to_json_pretty()).unwrap();
        v.as_object_mut()
            .unwrap()
            .insert("surprise".into(), serde_json::json!(1));
        assert!(Scenario::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn ragged_matrix_is_named_in_error() {
        let sc = boeing747();
        let mut v: serde_json::Value = serde_json::from_str(&sc.to_json_pretty()).unwrap();
        // Drop one entry from a row of A.
        let row = v["system"]["A"][0].as_array_mut().unwrap();
        row.pop();
        let parsed = Scenario::from_json(&v.to_string()).unwrap();
        let err = parsed.to_modules(None).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("system.A"), "diagnostic was {msg:?}");
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = scenario_hash(b"abc", None);
        let b = scenario_hash(b"abc", None);
        let c = scenario_hash(b"abd", None);
        let d = scenario_hash(b"abc", Some(0.5));
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
        assert_eq!(a.len(), 16);
    }

    #[test]
    fn spectratope_scenario_builds_and_designs() {
        // Scalar two-step system with an interval disturbance expressed as a
        // one-block spectratope; identity noise through the keyword.
        let m = |v: f64| vec![vec![v]];
        let sc = Scenario {
            system: SystemBlock {
                horizon: 2,
                a: MatOrPerStep::One(m(0.5)),
                b: MatOrPerStep::One(m(1.0)),
                b_d: MatOrPerStep::One(m(1.0)),
                b_s: MatOrPerStep::One(m(0.1)),
                c: MatOrPerStep::One(m(1.0)),
                d_d: MatOrPerStep::One(m(0.0)),
                d_s: MatOrPerStep::One(m(0.0)),
                pi: PiSpec::Keyword("identity".into()),
            },
            uncertainty: UncertaintyBlock::Spectratope {
                // zeta = [z; d_0; d_1], latent = d coordinates only.
                p: vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]],
                blocks: vec![vec![
                    vec![vec![0.0, 1.0], vec![1.0, 0.0]],
                    vec![vec![0.0, 0.0], vec![0.0, 0.0]],
                ], vec![
                    vec![vec![0.0, 0.0], vec![0.0, 0.0]],
                    vec![vec![0.0, 1.0], vec![1.0, 0.0]],
                ]],
                t: IndexSetSpec::Box,
                rho: 1.0,
            },
            specs: SpecsBlock {
                averaged_quadratic: vec![AveragedQuadraticSpec {
                    a: {
                        let mut sel = vec![vec![0.0; 4]; 4];
                        sel[1][1] = 1.0;
                        sel
                    },
                    beta: vec![0.0; 4],
                    gamma: 8.0,
                }],
                ..Default::default()
            },
            objective: None,
        };
        let back = Scenario::from_json(&sc.to_json_pretty()).unwrap();
        assert_eq!(sc, back);
        let (sys, set, specs, _) = back.to_modules(None).unwrap();
        assert!(matches!(
            set,
            crate::uncertainty::UncertaintySet::Spectratope(_)
        ));
        // Samples stay in the unit square of the two interval blocks.
        for x in set.sample(64, 9, SampleStrategy::Interior).unwrap() {
            assert!(x[1].abs() <= 1.0 + 1e-9 && x[2].abs() <= 1.0 + 1e-9);
        }
        // End-to-end design through the spectratopic safe approximation.
        let maps = crate::system::build_trajectory_maps(&sys);
        let out = crate::compiler::design(
            &specs,
            &maps,
            sys.pi(),
            &set,
            &crate::conic::SolveSettings::default(),
        )
        .unwrap();
        assert!(out.feasible, "slack {}", out.max_slack);
        assert_eq!(out.report.constraints[0].mode, "safe-approx");
        let rep = crate::verify::verify_policy(
            &sys,
            &out.policy.unwrap(),
            &set,
            &specs,
            500,
            3,
        )
        .unwrap();
        assert!(rep.all_ok());
    }

    #[test]
    fn rho_override_scales_the_set() {
        let sc = boeing747();
        let (_, set1, _, _) = sc.to_modules(None).unwrap();
        let (_, set2, _, _) = sc.to_modules(Some(4.0)).unwrap();
        assert_eq!(set1.rho(), 1.0);
        assert_eq!(set2.rho(), 4.0);
    }
}
