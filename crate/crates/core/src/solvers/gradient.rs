//! Full-batch gradient descent on any member of the loss family.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{check_rank, FitFlags, FitResult};
use crate::datagen::{seeded_rng, PairedDataset};
use crate::error::{MmclError, Result};
use crate::linalg::Mat;
use crate::losses::{self, EncoderPair, LossSpec};

/// Maximum number of consecutive step halvings within one iteration.
pub const MAX_HALVINGS: usize = 20;

/// Step-size and stopping parameters.
#[derive(Clone, Copy, Debug)]
pub struct GdOptions {
    pub lr: f64,
    pub max_iter: usize,
    /// Stop once `‖∇‖_F` (both encoders) falls below this.
    pub tol: f64,
    /// Keep the per-iteration loss trace.
    pub record_trace: bool,
}

impl Default for GdOptions {
    fn default() -> Self {
        GdOptions {
            lr: 0.05,
            max_iter: 5000,
            tol: 1e-9,
            record_trace: true,
        }
    }
}

/// Gradient descent from a seeded random initialization with entries
/// `N(0, 0.01/d)`.
pub fn fit_gradient_descent(
    spec: &LossSpec,
    data: &PairedDataset,
    r: usize,
    lr: f64,
    max_iter: usize,
    tol: f64,
    seed: u64,
) -> Result<FitResult> {
    let (d1, d2) = (data.x.cols(), data.xt.cols());
    check_rank(r, d1, d2)?;
    let mut rng = seeded_rng(seed);
    let mut init = |d: usize| {
        let scale = 0.1 / (d as f64).sqrt();
        Mat::from_fn(r, d, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
    };
    let g1 = init(d1);
    let g2 = init(d2);
    let opts = GdOptions {
        lr,
        max_iter,
        tol,
        record_trace: true,
    };
    let mut fit = fit_gradient_descent_from(spec, data, EncoderPair { g1, g2 }, &opts)?;
    fit.seed = Some(seed);
    Ok(fit)
}

/// Gradient descent from given encoders. A step that fails to decrease the
/// loss is retried with the learning rate halved, up to [`MAX_HALVINGS`]
/// times; the reduced rate is kept for later iterations.
pub fn fit_gradient_descent_from(
    spec: &LossSpec,
    data: &PairedDataset,
    init: EncoderPair,
    opts: &GdOptions,
) -> Result<FitResult> {
    spec.validate()?;
    if !(opts.lr >= 0.0 && opts.lr.is_finite()) {
        return Err(MmclError::InvalidInput(format!(
            "learning rate must be nonnegative, got {}",
            opts.lr
        )));
    }
    if opts.max_iter == 0 {
        return Err(MmclError::InvalidInput(
            "max_iter must be at least 1".into(),
        ));
    }
    let mut enc = init;
    let mut loss = losses::loss_value(spec, &enc, data)?;
    if !loss.is_finite() {
        return Err(MmclError::NonFinite { iter: 0 });
    }
    let mut flags = FitFlags::default();
    let mut trace = vec![loss];

    if opts.lr == 0.0 {
        flags.no_progress = true;
        return Ok(finish(spec, enc, opts.max_iter, loss, trace, flags, opts));
    }

    let mut lr = opts.lr;
    let mut iterations = 0;
    for it in 0..opts.max_iter {
        let (g1, g2) = losses::loss_gradient(spec, &enc, data)?;
        if !(g1.is_finite() && g2.is_finite()) {
            return Err(MmclError::NonFinite { iter: it });
        }
        let gnorm = (g1.frobenius_norm().powi(2) + g2.frobenius_norm().powi(2)).sqrt();
        if gnorm < opts.tol {
            flags.converged = true;
            break;
        }
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let mut t1 = enc.g1.clone();
            t1.axpy(-lr, &g1);
            let mut t2 = enc.g2.clone();
            t2.axpy(-lr, &g2);
            let trial = EncoderPair { g1: t1, g2: t2 };
            let trial_loss = losses::loss_value(spec, &trial, data)?;
            if trial_loss.is_finite() && trial_loss <= loss {
                accepted = Some((trial, trial_loss));
                break;
            }
            lr *= 0.5;
        }
        iterations = it + 1;
        match accepted {
            Some((next, next_loss)) => {
                enc = next;
                loss = next_loss;
                trace.push(loss);
            }
            None => {
                flags.stalled = true;
                break;
            }
        }
    }
    Ok(finish(spec, enc, iterations, loss, trace, flags, opts))
}

fn finish(
    spec: &LossSpec,
    enc: EncoderPair,
    iterations: usize,
    loss: f64,
    trace: Vec<f64>,
    flags: FitFlags,
    opts: &GdOptions,
) -> FitResult {
    FitResult {
        method: "gd".into(),
        product: enc.product(),
        enc,
        iterations,
        final_loss: loss,
        trace: opts.record_trace.then_some(trace),
        flags,
        spec: Some(spec.clone()),
        seed: None,
        weights: None,
        edges: None,
    }
}
