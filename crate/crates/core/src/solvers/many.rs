//! Training on a many-to-many correspondence.
//!
//! Each left sample is paired with one of its observed right neighbours
//! chosen uniformly at random, which yields a one-to-one paired training set
//! whose distortion rate is the fraction of cross-cluster neighbours. The
//! linear closed form is then fitted on those pairs.

use rand::Rng;

use super::{fit_pairs_closed_form, FitResult};
use crate::datagen::seeded_rng;
use crate::error::{MmclError, Result};
use crate::linalg::Mat;

/// One uniformly chosen neighbour per left node with at least one edge,
/// in increasing left order.
pub fn sample_neighbor_pairs(
    edges: &[(usize, usize)],
    n_left: usize,
    seed: u64,
) -> Vec<(usize, usize)> {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n_left];
    for &(i, j) in edges {
        if i < n_left {
            adj[i].push(j);
        }
    }
    let mut rng = seeded_rng(seed);
    adj.iter_mut()
        .enumerate()
        .filter(|(_, nb)| !nb.is_empty())
        .map(|(i, nb)| {
            nb.sort_unstable();
            (i, nb[rng.random_range(0..nb.len())])
        })
        .collect()
}

pub fn fit_many_to_many(
    x: &Mat,
    xt: &Mat,
    edges: &[(usize, usize)],
    r: usize,
    rho: f64,
    seed: u64,
) -> Result<FitResult> {
    if let Some(e) = edges
        .iter()
        .find(|&&(i, j)| i >= x.rows() || j >= xt.rows())
    {
        return Err(MmclError::InvalidInput(format!("edge {e:?} out of range")));
    }
    let pairs = sample_neighbor_pairs(edges, x.rows(), seed);
    if pairs.len() < 2 {
        return Err(MmclError::DegenerateData(
            "fewer than two left samples have neighbours".into(),
        ));
    }
    let left: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let right: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    let mut fit = fit_pairs_closed_form(
        &x.select_rows(&left),
        &xt.select_rows(&right),
        r,
        rho,
        "many-to-many",
    )?;
    fit.seed = Some(seed);
    Ok(fit)
}
