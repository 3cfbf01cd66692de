//! Unimodal self-supervised baseline with random masking augmentation.
//!
//! A mask `A = diag(a)`, `a_k ~ Ber(1/2)`, turns a sample into the positive
//! pair `(A x, (I − A) x)`. Since `E[a_j (1 − a_k)]` is `1/4` for `j ≠ k`
//! and `0` for `j = k`, the expected masked cross-covariance is one quarter
//! of the off-diagonal part of the centered covariance. The matrix is
//! symmetric, so the baseline uses a single tied encoder built from its
//! leading positive eigenpairs.

use rand::Rng;

use super::{check_rho, spectral_objective, FitFlags, FitResult};
use crate::datagen::seeded_rng;
use crate::error::{MmclError, Result};
use crate::linalg::{self, Mat, GAP_TOL};
use crate::losses::EncoderPair;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SsclMode {
    /// Closed-form expectation over masks.
    Expected,
    /// Average over `k_draws` sampled masks.
    Sampled { k_draws: usize, seed: u64 },
}

fn covariance(x: &Mat) -> Result<Mat> {
    if x.rows() < 2 {
        return Err(MmclError::InvalidInput("need at least 2 samples".into()));
    }
    let xc = x.centered();
    Ok(xc.t_matmul(&xc).scale(1.0 / (x.rows() as f64 - 1.0)))
}

/// `¼ · offdiag(Σ̂x)`.
pub fn masked_cross_covariance_expected(x: &Mat) -> Result<Mat> {
    let c = covariance(x)?;
    Ok(Mat::from_fn(c.rows(), c.cols(), |i, j| {
        if i == j {
            0.0
        } else {
            0.25 * c[(i, j)]
        }
    }))
}

/// Mean of `A Σ̂x (I − A)` over `k_draws` masks, one mask per draw shared by
/// all samples.
pub fn masked_cross_covariance_sampled(x: &Mat, k_draws: usize, seed: u64) -> Result<Mat> {
    if k_draws == 0 {
        return Err(MmclError::InvalidInput("k_draws must be positive".into()));
    }
    let c = covariance(x)?;
    let d = c.rows();
    let mut rng = seeded_rng(seed);
    let mut acc = Mat::zeros(d, d);
    let mut mask = vec![false; d];
    for _ in 0..k_draws {
        mask.iter_mut().for_each(|m| *m = rng.random::<bool>());
        for i in 0..d {
            if !mask[i] {
                continue;
            }
            for j in 0..d {
                if !mask[j] {
                    acc[(i, j)] += c[(i, j)];
                }
            }
        }
    }
    Ok(acc.scale(1.0 / k_draws as f64))
}

pub fn fit_sscl_baseline(x: &Mat, r: usize, rho: f64, mode: SsclMode) -> Result<FitResult> {
    let d = x.cols();
    if r == 0 || r > d {
        return Err(MmclError::InvalidRank { r, max: d });
    }
    check_rho(rho)?;
    let target = match mode {
        SsclMode::Expected => masked_cross_covariance_expected(x)?,
        SsclMode::Sampled { k_draws, seed } => masked_cross_covariance_sampled(x, k_draws, seed)?,
    };
    let scale = covariance(x)?.max_abs().max(1.0);
    let (vals, vecs) = linalg::sym_eigen(&target)?;
    let vanished = target.max_abs() <= GAP_TOL * scale;
    let degenerate = vanished
        || vals[r - 1] <= GAP_TOL * scale
        || (r < d && (vals[r - 1] - vals[r]).abs() <= GAP_TOL * scale);
    let c: Vec<f64> = vals[..r]
        .iter()
        .map(|v| {
            if vanished {
                0.0
            } else {
                (v.max(0.0) / rho).sqrt()
            }
        })
        .collect();
    let g = Mat::from_fn(r, d, |j, i| c[j] * vecs[(i, j)]);
    let enc = EncoderPair {
        g1: g.clone(),
        g2: g,
    };
    let product = enc.product();
    Ok(FitResult {
        method: "sscl".into(),
        final_loss: spectral_objective(&product, &target, rho),
        enc,
        product,
        iterations: 0,
        trace: None,
        flags: FitFlags {
            degenerate,
            ..FitFlags::default()
        },
        spec: None,
        seed: match mode {
            SsclMode::Sampled { seed, .. } => Some(seed),
            SsclMode::Expected => None,
        },
        weights: None,
        edges: None,
    })
}
