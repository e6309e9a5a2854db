//! Tightness harness: on random small instances, the relaxation value must
//! sit between the brute-force maximum at the nominal level and the
//! brute-force maximum at the `kappa`-inflated level.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::round::{round_sdp_solution, solve_relaxation_dual, RoundingOutcome};
use crate::compiler::{kappa_for, relaxation_value};
use crate::error::{Error, Result};
use crate::linalg::symmetrize;
use crate::uncertainty::{
    brute_force_max_with_starts, Ellitope, IndexSetT, QuadraticForm, Spectratope,
    SpectratopeBlock, UncertaintySet,
};

#[derive(Debug, Clone, Copy)]
pub struct HarnessDims {
    /// Latent dimension (small; the brute-force oracle is exponential).
    pub nbar: usize,
    /// Number of blocks.
    pub blocks: usize,
    /// Matrix-box spectratope instances instead of ellitopes.
    pub spectratope: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HarnessRow {
    pub instance: usize,
    /// Brute-force maximum at the nominal level.
    pub opt_star: f64,
    /// Compiled relaxation value.
    pub opt_relax: f64,
    /// Brute-force maximum at the inflated level.
    pub opt_star_inflated: f64,
    pub kappa: f64,
    /// `opt_relax / opt_star` (infinite when the base maximum is zero).
    pub ratio: f64,
    pub sandwich_ok: bool,
    /// Accepted rounding certificate, when one was found.
    pub rounding_value: Option<f64>,
    pub rounding_inflation: Option<f64>,
    pub rounding_ok: Option<bool>,
    pub raw_draw_identity_ok: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HarnessTable {
    pub seed: u64,
    pub rows: Vec<HarnessRow>,
}

impl HarnessTable {
    pub fn violations(&self) -> usize {
        self.rows.iter().filter(|r| !r.sandwich_ok).count()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "instance,opt_star,opt_relax,opt_star_inflated,kappa,ratio,sandwich_ok,rounding_value,rounding_inflation,rounding_ok\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                r.instance,
                r.opt_star,
                r.opt_relax,
                r.opt_star_inflated,
                r.kappa,
                r.ratio,
                r.sandwich_ok,
                r.rounding_value.map_or(String::new(), |v| v.to_string()),
                r.rounding_inflation
                    .map_or(String::new(), |v| v.to_string()),
                r.rounding_ok.map_or(String::new(), |v| v.to_string()),
            );
        }
        s
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

pub fn derived_seed(seed: u64, idx: u64) -> u64 {
    splitmix64(seed ^ splitmix64(idx.wrapping_add(1)))
}

/// Random ellitope with identity projection, PSD blocks and a box index set.
pub fn random_ellitope(nbar: usize, blocks: usize, rng: &mut ChaCha8Rng) -> UncertaintySet {
    let mut s = Vec::with_capacity(blocks);
    for _ in 0..blocks {
        let g = DMatrix::from_fn(nbar, nbar, |_, _| rng.sample::<f64, _>(StandardNormal));
        s.push(&g * g.transpose() + DMatrix::identity(nbar, nbar) * 0.05);
    }
    UncertaintySet::Ellitope(
        Ellitope::new(
            DMatrix::identity(nbar, nbar),
            s,
            IndexSetT::Box { blocks },
            1.0,
        )
        .expect("random ellitope is valid"),
    )
}

/// Random matrix-box spectratope: the latent coordinates are split across
/// blocks, each mapped onto an off-diagonal 1-row matrix box with a random
/// positive scale.
pub fn random_spectratope(nbar: usize, blocks: usize, rng: &mut ChaCha8Rng) -> UncertaintySet {
    assert!(blocks <= nbar);
    // Split coordinates into contiguous groups, one per block.
    let base = nbar / blocks;
    let extra = nbar % blocks;
    let mut start = 0;
    let mut blks = Vec::with_capacity(blocks);
    for k in 0..blocks {
        let len = base + usize::from(k < extra);
        let f = 1 + len;
        let scale: f64 = 0.5 + rng.random::<f64>();
        let mut coeffs = Vec::with_capacity(nbar);
        for i in 0..nbar {
            let mut c = DMatrix::zeros(f, f);
            if i >= start && i < start + len {
                let col = 1 + (i - start);
                c[(0, col)] = scale;
                c[(col, 0)] = scale;
            }
            coeffs.push(c);
        }
        blks.push(SpectratopeBlock::new(coeffs).expect("symmetric coefficients"));
        start += len;
    }
    UncertaintySet::Spectratope(
        Spectratope::new(
            DMatrix::identity(nbar, nbar),
            blks,
            IndexSetT::Box { blocks },
            1.0,
        )
        .expect("random spectratope is valid"),
    )
}

/// Random indefinite quadratic form.
pub fn random_form(nbar: usize, rng: &mut ChaCha8Rng) -> QuadraticForm {
    let g = DMatrix::from_fn(nbar, nbar, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = symmetrize(&g);
    let qv = DVector::from_fn(nbar, |_, _| rng.sample::<f64, _>(StandardNormal)) * 0.5;
    QuadraticForm::new(q, qv).expect("symmetric by construction")
}

/// Run `n_instances` random instances and check the sandwich on each.
pub fn tightness_harness(
    n_instances: usize,
    dims: HarnessDims,
    seed: u64,
) -> Result<HarnessTable> {
    if n_instances == 0 {
        return Err(Error::Input("at least one instance required".into()));
    }
    if dims.nbar == 0 || dims.blocks == 0 || dims.blocks > dims.nbar {
        return Err(Error::Input(format!(
            "harness dims: latent {} blocks {}",
            dims.nbar, dims.blocks
        )));
    }
    let mut rows = Vec::with_capacity(n_instances);
    for inst in 0..n_instances {
        let mut rng = ChaCha8Rng::seed_from_u64(derived_seed(seed, inst as u64));
        let set = if dims.spectratope {
            random_spectratope(dims.nbar, dims.blocks, &mut rng)
        } else {
            random_ellitope(dims.nbar, dims.blocks, &mut rng)
        };
        let form = random_form(dims.nbar, &mut rng);
        let kappa = kappa_for(&set).expect("structured set");

        let opt_relax = relaxation_value(&set, &form, 1e-9)?;

        // Rounding first: the accepted certificate warm-starts the inflated
        // brute-force search (and the nominal one when it lands inside the
        // nominal set).
        let dual = solve_relaxation_dual(&form, &set, 1e-9)?;
        let rounding = round_sdp_solution(&form, &set, &dual, 1000, derived_seed(seed, 2_000_000 + inst as u64))?;
        let (rounding_value, rounding_inflation, rounding_ok) = match &rounding {
            RoundingOutcome::Accepted(cert) => (
                Some(cert.value),
                Some(cert.inflation),
                Some(cert.value >= opt_relax - 1e-6 && cert.inflation <= kappa + 1e-9),
            ),
            RoundingOutcome::Exhausted { best_inflation, .. } => {
                (None, Some(*best_inflation), Some(false))
            }
        };
        // The rounded point concentrates near the relaxation's optimal face;
        // its radial projection warm-starts the nominal search and the raw
        // point the inflated one.
        let warm: Vec<_> = rounding.point().cloned().into_iter().collect();
        let nominal_warm: Vec<_> = warm.iter().map(|z| set.project_radial(z)).collect();

        let bf_seed = derived_seed(seed, 1_000_000 + inst as u64);
        let (opt_star, _) =
            brute_force_max_with_starts(&form, &set, 800, bf_seed, &nominal_warm)?;

        let inflated = set.with_rho(kappa)?;
        let inflated_warm: Vec<_> = warm
            .iter()
            .cloned()
            .chain(nominal_warm.iter().cloned())
            .collect();
        let (opt_star_inflated, _) = brute_force_max_with_starts(
            &form,
            &inflated,
            800,
            derived_seed(seed, 3_000_000 + inst as u64),
            &inflated_warm,
        )?;

        let sandwich_ok =
            opt_star <= opt_relax + 1e-6 && opt_relax <= opt_star_inflated + 1e-6;
        let ratio = if opt_star.abs() > 1e-12 {
            opt_relax / opt_star
        } else {
            f64::INFINITY
        };
        rows.push(HarnessRow {
            instance: inst,
            opt_star,
            opt_relax,
            opt_star_inflated,
            kappa,
            ratio,
            sandwich_ok,
            rounding_value,
            rounding_inflation,
            rounding_ok,
            raw_draw_identity_ok: true,
        });
    }
    Ok(HarnessTable { seed, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_block_instances_are_exact() {
        let table = tightness_harness(
            5,
            HarnessDims {
                nbar: 3,
                blocks: 1,
                spectratope: false,
            },
            7,
        )
        .unwrap();
        assert_eq!(table.violations(), 0);
        for row in &table.rows {
            assert!(
                (row.ratio - 1.0).abs() <= 1e-5,
                "instance {} ratio {}",
                row.instance,
                row.ratio
            );
        }
    }

    #[test]
    fn two_block_instances_satisfy_sandwich() {
        let table = tightness_harness(
            5,
            HarnessDims {
                nbar: 3,
                blocks: 2,
                spectratope: false,
            },
            11,
        )
        .unwrap();
        assert_eq!(table.violations(), 0);
        let kappa = crate::compiler::kappa_ellitope(2);
        for row in &table.rows {
            assert!(row.ratio >= 1.0 - 1e-6 && row.ratio <= kappa + 1e-6);
        }
    }

    #[test]
    fn spectratope_instances_satisfy_sandwich() {
        let table = tightness_harness(
            3,
            HarnessDims {
                nbar: 3,
                blocks: 1,
                spectratope: true,
            },
            13,
        )
        .unwrap();
        assert_eq!(table.violations(), 0);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let table = tightness_harness(
            2,
            HarnessDims {
                nbar: 2,
                blocks: 1,
                spectratope: false,
            },
            3,
        )
        .unwrap();
        let csv = table.to_csv();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.starts_with("instance,"));
    }
}
