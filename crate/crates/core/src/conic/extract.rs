//! Policy extraction from solved programs through the variable manifest.

use nalgebra::{DMatrix, DVector};

use super::{ConicProgram, SolveStatus, Solution};
use crate::error::{Error, Result};
use crate::policy::PobPolicy;
use crate::system::ChiLayout;

/// Read the policy coordinates out of an optimal solution. The program must
/// carry manifest entries `h/{t}` (offsets) and `H/{t}/{i}` (gain blocks,
/// row-major) as written by the compiler.
pub fn extract_policy(sol: &Solution, prog: &ConicProgram) -> Result<PobPolicy> {
    if sol.status != SolveStatus::Optimal {
        return Err(Error::State(format!(
            "policy extraction requires an optimal solution, status is {:?}",
            sol.status
        )));
    }
    let mut h_blocks: Vec<(usize, DVector<f64>)> = Vec::new();
    let mut gain_blocks: Vec<(usize, usize, Vec<f64>)> = Vec::new();
    for entry in &prog.manifest {
        if let Some(t) = entry.name.strip_prefix("h/") {
            let t: usize = t
                .parse()
                .map_err(|_| Error::State(format!("bad manifest entry {:?}", entry.name)))?;
            let vals = DVector::from_iterator(
                entry.len,
                (entry.first..entry.first + entry.len).map(|i| sol.primal[i]),
            );
            h_blocks.push((t, vals));
        } else if let Some(rest) = entry.name.strip_prefix("H/") {
            let (t, i) = rest
                .split_once('/')
                .and_then(|(a, b)| Some((a.parse::<usize>().ok()?, b.parse::<usize>().ok()?)))
                .ok_or_else(|| Error::State(format!("bad manifest entry {:?}", entry.name)))?;
            let vals: Vec<f64> = (entry.first..entry.first + entry.len)
                .map(|c| sol.primal[c])
                .collect();
            gain_blocks.push((t, i, vals));
        }
    }
    if h_blocks.is_empty() {
        return Err(Error::State(
            "program manifest carries no policy coordinates".into(),
        ));
    }
    h_blocks.sort_by_key(|&(t, _)| t);
    let horizon = h_blocks.len();
    let n_u = h_blocks[0].1.len();
    let n_y = gain_blocks
        .first()
        .map(|(_, _, v)| v.len() / n_u)
        .unwrap_or(0);
    let layout = ChiLayout { horizon, n_u, n_y };
    let offsets: Vec<DVector<f64>> = h_blocks.into_iter().map(|(_, v)| v).collect();
    let mut gains: Vec<Vec<DMatrix<f64>>> = (0..horizon)
        .map(|t| vec![DMatrix::zeros(n_u, n_y); t + 1])
        .collect();
    for (t, i, vals) in gain_blocks {
        if t >= horizon || i > t || vals.len() != n_u * n_y {
            return Err(Error::State(format!(
                "gain block ({t},{i}) inconsistent with policy shape"
            )));
        }
        gains[t][i] = DMatrix::from_row_slice(n_u, n_y, &vals);
    }
    PobPolicy::new(offsets, gains, &layout)
}
