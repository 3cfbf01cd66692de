//! Semi-supervised training from a small paired set and a large unpaired
//! pool.
//!
//! Step 1 fits initial encoders on the paired data. Step 2 scores every
//! cross-modal pair of the pool, estimates the hidden matching, freezes the
//! unpaired softmax weights at the initial encoders and solves the
//! resulting spectral problem in closed form. An optional anchor loop
//! repeats step 2 from the improved encoders while a validation retrieval
//! accuracy keeps improving.

use super::gradient::{fit_gradient_descent_from, GdOptions};
use super::{
    check_rank, estimate_edges, fit_linear_closed_form, regularized_svd_solution, FitFlags,
    FitResult,
};
use crate::datagen::PairedDataset;
use crate::error::{MmclError, Result};
use crate::losses::{self, EncoderPair, LossSpec, Normalizer};

/// How the step-1 encoders are obtained.
#[derive(Clone, Debug, PartialEq)]
pub enum SemiInit {
    /// Closed-form minimizer of the linear loss.
    Linear,
    /// Gradient descent on InfoNCE with `φ(x) = τ log(1 + x)`, started from
    /// the linear closed form.
    InfoNce { lr: f64, max_iter: usize },
}

/// Re-estimation loop driven by retrieval accuracy on held-out pairs.
#[derive(Clone, Debug)]
pub struct AnchorOptions {
    pub max_rounds: usize,
    /// A round is accepted when validation accuracy grows by at least this factor.
    pub eta: f64,
    pub validation: PairedDataset,
}

#[derive(Clone, Debug)]
pub struct SemiOptions {
    pub init: SemiInit,
    pub anchor: Option<AnchorOptions>,
}

impl Default for SemiOptions {
    fn default() -> Self {
        SemiOptions {
            init: SemiInit::Linear,
            anchor: None,
        }
    }
}

pub fn fit_semisupervised(
    paired: &PairedDataset,
    unpaired: &PairedDataset,
    r: usize,
    spec: &LossSpec,
) -> Result<FitResult> {
    fit_semisupervised_with(paired, unpaired, r, spec, &SemiOptions::default())
}

/// Fraction of validation rows whose most similar right-hand sample is the
/// true partner (lowest index on ties).
pub fn retrieval_accuracy(enc: &EncoderPair, data: &PairedDataset) -> Result<f64> {
    let sims = losses::similarity_matrix(enc, &data.x, &data.xt)?;
    let mut partner = vec![usize::MAX; data.x.rows()];
    for &(i, j) in &data.truth_edges {
        partner[i] = j;
    }
    let mut hits = 0usize;
    for (i, &p) in partner.iter().enumerate() {
        let row = sims.row(i);
        let mut best = 0;
        for j in 1..row.len() {
            if row[j] > row[best] {
                best = j;
            }
        }
        if best == p {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.x.rows().max(1) as f64)
}

struct Step {
    enc: EncoderPair,
    product: crate::linalg::Mat,
    degenerate: bool,
    weights: losses::ContrastiveWeights,
    edges: super::EdgeEstimate,
}

fn refit(from: &EncoderPair, unpaired: &PairedDataset, r: usize, spec: &LossSpec) -> Result<Step> {
    let sims = losses::similarity_matrix(from, &unpaired.x, &unpaired.xt)?;
    let edges = estimate_edges(&sims)?;
    let weights = losses::compute_unpaired_weights(spec, &sims, &edges.edges)?;
    drop(sims);
    let s =
        losses::contrastive_cross_covariance(&weights, &unpaired.x, &unpaired.xt, Normalizer::N)?;
    let (enc, product, degenerate) = regularized_svd_solution(&s, r, spec.rho)?;
    Ok(Step {
        enc,
        product,
        degenerate,
        weights,
        edges,
    })
}

pub fn fit_semisupervised_with(
    paired: &PairedDataset,
    unpaired: &PairedDataset,
    r: usize,
    spec: &LossSpec,
    opts: &SemiOptions,
) -> Result<FitResult> {
    spec.validate()?;
    if unpaired.x.rows() < 2 || unpaired.x.rows() != unpaired.xt.rows() {
        return Err(MmclError::InvalidInput(format!(
            "unpaired pool needs N ≥ 2 samples per side, got {} and {}",
            unpaired.x.rows(),
            unpaired.xt.rows()
        )));
    }
    if paired.x.cols() != unpaired.x.cols() || paired.xt.cols() != unpaired.xt.cols() {
        return Err(MmclError::DimensionMismatch(
            "paired and unpaired feature dimensions differ".into(),
        ));
    }
    check_rank(r, paired.x.cols(), paired.xt.cols())?;

    let linear = fit_linear_closed_form(paired, r, spec.rho)?;
    let init = match &opts.init {
        SemiInit::Linear => linear.enc,
        SemiInit::InfoNce { lr, max_iter } => {
            let init_spec = LossSpec::infonce_log1p(spec.tau, 1.0, spec.rho);
            let gd = GdOptions {
                lr: *lr,
                max_iter: *max_iter,
                tol: 1e-9,
                record_trace: false,
            };
            fit_gradient_descent_from(&init_spec, paired, linear.enc, &gd)?.enc
        }
    };

    let mut step = refit(&init, unpaired, r, spec)?;
    let mut rounds = 0;
    let mut iterations = 1;
    if let Some(anchor) = &opts.anchor {
        let mut acc = retrieval_accuracy(&step.enc, &anchor.validation)?;
        for _ in 0..anchor.max_rounds {
            let next = refit(&step.enc, unpaired, r, spec)?;
            iterations += 1;
            let next_acc = retrieval_accuracy(&next.enc, &anchor.validation)?;
            if next_acc > acc && next_acc >= anchor.eta * acc {
                step = next;
                acc = next_acc;
                rounds += 1;
            } else {
                break;
            }
        }
    }

    let final_loss = losses::unpaired_loss_value(
        spec,
        &step.enc,
        &unpaired.x,
        &unpaired.xt,
        &step.edges.edges,
    )?;
    Ok(FitResult {
        method: "semi".into(),
        enc: step.enc,
        product: step.product,
        iterations,
        final_loss,
        trace: None,
        flags: FitFlags {
            degenerate: step.degenerate,
            short_pool: step.edges.short_pool,
            anchor_rounds: rounds,
            ..FitFlags::default()
        },
        spec: Some(spec.clone()),
        seed: None,
        weights: Some(step.weights),
        edges: Some(step.edges),
    })
}
