//! One-step approximation of InfoNCE training: freeze the weights at an
//! initialization and take the truncated SVD of the resulting
//! contrastive cross-covariance.

use super::{check_rank, regularized_svd_solution, FitFlags, FitResult};
use crate::datagen::PairedDataset;
use crate::error::{MmclError, Result};
use crate::losses::{self, EncoderPair, Link, LossSpec};

pub fn fit_approx_infonce(
    data: &PairedDataset,
    r: usize,
    spec: &LossSpec,
    init: &EncoderPair,
) -> Result<FitResult> {
    spec.validate()?;
    if spec.phi != Link::Log || spec.psi != Link::Exp {
        return Err(MmclError::InvalidInput(
            "the approximate solver needs a softmax-type spec (phi = log, psi = exp)".into(),
        ));
    }
    check_rank(r, data.x.cols(), data.xt.cols())?;
    let sims = losses::similarity_matrix(init, &data.x, &data.xt)?;
    let weights = losses::compute_weights(spec, &sims)?;
    let s = losses::contrastive_cross_covariance(&weights, &data.x, &data.xt, spec.cn)?;
    let (enc, product, degenerate) = regularized_svd_solution(&s, r, spec.rho)?;
    let final_loss = losses::loss_value(spec, &enc, data)?;
    Ok(FitResult {
        method: "approx".into(),
        enc,
        product,
        iterations: 1,
        final_loss,
        trace: None,
        flags: FitFlags {
            degenerate,
            ..FitFlags::default()
        },
        spec: Some(spec.clone()),
        seed: None,
        weights: Some(weights),
        edges: None,
    })
}
