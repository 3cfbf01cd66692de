//! Ground-truth pair estimation on an unpaired pool.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::Serialize;

use crate::error::{MmclError, Result};
use crate::linalg::Mat;

/// Estimated pairs together with the threshold that selected them.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EdgeEstimate {
    /// Selected pairs, sorted by `(row, col)`.
    pub edges: Vec<(usize, usize)>,
    /// The `N`-th largest similarity in the candidate pool.
    pub threshold: f64,
    pub candidate_pool_size: usize,
    /// Fewer than `N` distinct candidates were available.
    pub short_pool: bool,
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (k, v) in values.enumerate() {
        if v > best_v {
            best_v = v;
            best = k;
        }
    }
    best
}

/// Candidates are the row-wise argmax pairs `(i, argmax_j s_ij)` together
/// with the column-wise argmax pairs `(argmax_i s_ij, j)`, ties going to the
/// lowest index. The `N` candidates with the largest similarity are kept,
/// ties at the threshold going to the lexicographically smallest pair.
pub fn estimate_edges(sims_u: &Mat) -> Result<EdgeEstimate> {
    let (n, m) = sims_u.shape();
    if n != m {
        return Err(MmclError::InvalidInput(format!(
            "edge estimation needs a square similarity matrix, got {n}x{m}"
        )));
    }
    if n == 0 {
        return Err(MmclError::InvalidInput("empty similarity matrix".into()));
    }
    let mut pool = BTreeSet::new();
    for i in 0..n {
        pool.insert((i, argmax(sims_u.row(i).iter().copied())));
    }
    for j in 0..n {
        pool.insert((argmax((0..n).map(|i| sims_u[(i, j)])), j));
    }
    let mut ranked: Vec<(usize, usize)> = pool.into_iter().collect();
    ranked.sort_by(|a, b| {
        sims_u[*b]
            .partial_cmp(&sims_u[*a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(b))
    });
    let pool_size = ranked.len();
    let take = n.min(pool_size);
    ranked.truncate(take);
    let threshold = ranked.last().map_or(f64::NAN, |&e| sims_u[e]);
    ranked.sort_unstable();
    Ok(EdgeEstimate {
        edges: ranked,
        threshold,
        candidate_pool_size: pool_size,
        short_pool: pool_size < n,
    })
}
