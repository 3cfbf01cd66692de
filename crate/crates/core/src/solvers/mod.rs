//! Training procedures.
//!
//! Every solver produces a [`FitResult`] whose canonical content is the
//! product `G1ᵀG2`. For any cross-covariance `A`, the maximizer of
//! `tr(G1 A G2ᵀ) − (ρ/2)‖G1ᵀG2‖_F²` over rank-`r` encoders is
//! `G1ᵀG2 = SVD_r(A)/ρ`; the encoders are realized from the truncated SVD
//! `A ≈ U diag(s) Vᵀ` as `G1 = diag(√(s/ρ)) Uᵀ`, `G2 = diag(√(s/ρ)) Vᵀ`.

mod approx;
mod edges;
mod gradient;
mod many;
mod semi;
mod sscl;

use std::path::Path;

use serde::Serialize;

pub use approx::fit_approx_infonce;
pub use edges::{estimate_edges, EdgeEstimate};
pub use gradient::{fit_gradient_descent, fit_gradient_descent_from, GdOptions};
pub use many::{fit_many_to_many, sample_neighbor_pairs};
pub use semi::{
    fit_semisupervised, fit_semisupervised_with, retrieval_accuracy, AnchorOptions, SemiInit,
    SemiOptions,
};
pub use sscl::{
    fit_sscl_baseline, masked_cross_covariance_expected, masked_cross_covariance_sampled, SsclMode,
};

use crate::datagen::{DatasetKind, PairedDataset};
use crate::error::{MmclError, Result};
use crate::io;
use crate::linalg::{self, Mat, Subspace, GAP_TOL};
use crate::losses::{ContrastiveWeights, EncoderPair, LossSpec};

/// Status flags attached to a fit.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct FitFlags {
    /// Gradient norm fell below the tolerance.
    pub converged: bool,
    /// The learning rate was zero; encoders are the initialization.
    pub no_progress: bool,
    /// Twenty step halvings failed to decrease the loss.
    pub stalled: bool,
    /// The rank-`r` spectral selection was not unique or the target matrix vanished.
    pub degenerate: bool,
    /// The edge candidate pool held fewer pairs than requested.
    pub short_pool: bool,
    /// Accepted rounds of the anchor-update loop.
    pub anchor_rounds: usize,
}

/// Outcome of a training procedure.
#[derive(Clone, Debug)]
pub struct FitResult {
    pub method: String,
    pub enc: EncoderPair,
    /// `G1ᵀG2`.
    pub product: Mat,
    pub iterations: usize,
    pub final_loss: f64,
    pub trace: Option<Vec<f64>>,
    pub flags: FitFlags,
    pub spec: Option<LossSpec>,
    pub seed: Option<u64>,
    /// Weight tables used by single-step solvers.
    pub weights: Option<ContrastiveWeights>,
    /// Estimated pairs used by the semi-supervised solver.
    pub edges: Option<EdgeEstimate>,
}

#[derive(Serialize)]
struct FitReport<'a> {
    method: &'a str,
    rank: usize,
    iterations: usize,
    final_loss: f64,
    spec: &'a Option<LossSpec>,
    seed: Option<u64>,
    flags: &'a FitFlags,
    trace_len: usize,
    estimated_edges: Option<usize>,
}

impl FitResult {
    pub fn rank(&self) -> usize {
        self.enc.rank()
    }

    /// `P_r(G1)`: the top-`r` right singular subspace of `G1`.
    pub fn subspace_g1(&self) -> Result<Subspace> {
        linalg::right_singular_subspace(&self.enc.g1, self.rank())
    }

    /// `P_r(G2)`.
    pub fn subspace_g2(&self) -> Result<Subspace> {
        linalg::right_singular_subspace(&self.enc.g2, self.rank())
    }

    /// Writes `product.csv`, `g1.csv`, `g2.csv` and `fit.json` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        io::ensure_dir(dir)?;
        io::write_mat_csv(&dir.join("product.csv"), &self.product)?;
        io::write_mat_csv(&dir.join("g1.csv"), &self.enc.g1)?;
        io::write_mat_csv(&dir.join("g2.csv"), &self.enc.g2)?;
        let report = FitReport {
            method: &self.method,
            rank: self.rank(),
            iterations: self.iterations,
            final_loss: self.final_loss,
            spec: &self.spec,
            seed: self.seed,
            flags: &self.flags,
            trace_len: self.trace.as_ref().map_or(0, Vec::len),
            estimated_edges: self.edges.as_ref().map(|e| e.edges.len()),
        };
        io::write_json(&dir.join("fit.json"), &report)
    }
}

pub(crate) fn check_rank(r: usize, d1: usize, d2: usize) -> Result<()> {
    if r == 0 || r > d1.min(d2) {
        Err(MmclError::InvalidRank { r, max: d1.min(d2) })
    } else {
        Ok(())
    }
}

pub(crate) fn check_rho(rho: f64) -> Result<()> {
    if rho > 0.0 && rho.is_finite() {
        Ok(())
    } else {
        Err(MmclError::InvalidInput(format!(
            "rho must be positive, got {rho}"
        )))
    }
}

/// Rank-`r` maximizer of `tr(G1 A G2ᵀ) − (ρ/2)‖G1ᵀG2‖_F²`, returned as
/// `(encoders, product, degenerate)`.
pub fn regularized_svd_solution(a: &Mat, r: usize, rho: f64) -> Result<(EncoderPair, Mat, bool)> {
    check_rank(r, a.rows(), a.cols())?;
    check_rho(rho)?;
    let dec = linalg::svd(a)?;
    let scale = dec.s[0].max(1.0);
    let next = dec.s.get(r).copied().unwrap_or(0.0);
    let degenerate =
        dec.s[r - 1] <= GAP_TOL * scale || (dec.s[r - 1] - next).abs() <= GAP_TOL * scale;
    let c: Vec<f64> = dec.s[..r].iter().map(|s| (s / rho).sqrt()).collect();
    let g1 = Mat::from_fn(r, a.rows(), |j, i| c[j] * dec.u[(i, j)]);
    let g2 = Mat::from_fn(r, a.cols(), |j, i| c[j] * dec.v[(i, j)]);
    let enc = EncoderPair { g1, g2 };
    let product = enc.product();
    Ok((enc, product, degenerate))
}

/// `(n−1)⁻¹ Σ_i (x_i − x̄)(x̃_i − x̄̃)ᵀ` over row-aligned samples.
pub fn centered_cross_covariance(x: &Mat, xt: &Mat) -> Result<Mat> {
    if x.rows() != xt.rows() || x.rows() < 2 {
        return Err(MmclError::InvalidInput(format!(
            "cross-covariance needs n ≥ 2 aligned rows, got {} and {}",
            x.rows(),
            xt.rows()
        )));
    }
    let n = x.rows() as f64;
    Ok(x.centered().t_matmul(&xt.centered()).scale(1.0 / (n - 1.0)))
}

/// `−tr(G1 A G2ᵀ) + (ρ/2)‖G1ᵀG2‖_F²` written through the product.
pub(crate) fn spectral_objective(product: &Mat, a: &Mat, rho: f64) -> f64 {
    -product.frobenius_dot(a) + 0.5 * rho * product.frobenius_norm().powi(2)
}

/// Closed-form minimizer of the linear loss on the observed pairs:
/// `G1ᵀG2 = SVD_r(S̄)/ρ` with `S̄` the centered cross-covariance.
pub fn fit_linear_closed_form(data: &PairedDataset, r: usize, rho: f64) -> Result<FitResult> {
    if data.kind != DatasetKind::Paired {
        return Err(MmclError::InvalidInput(
            "closed-form fit needs observed pairs".into(),
        ));
    }
    check_rank(r, data.x.cols(), data.xt.cols())?;
    check_rho(rho)?;
    fit_pairs_closed_form(&data.x, &data.xt, r, rho, "linear")
}

pub(crate) fn fit_pairs_closed_form(
    x: &Mat,
    xt: &Mat,
    r: usize,
    rho: f64,
    method: &str,
) -> Result<FitResult> {
    check_rank(r, x.cols(), xt.cols())?;
    check_rho(rho)?;
    if x.rows() < 2 {
        return Err(MmclError::InvalidInput("need at least 2 pairs".into()));
    }
    let xc = x.centered();
    let xtc = xt.centered();
    if xc.max_abs() == 0.0 || xtc.max_abs() == 0.0 {
        return Err(MmclError::DegenerateData(
            "all samples of a modality are identical".into(),
        ));
    }
    let sbar = xc.t_matmul(&xtc).scale(1.0 / (x.rows() as f64 - 1.0));
    let (enc, product, degenerate) = regularized_svd_solution(&sbar, r, rho)?;
    Ok(FitResult {
        method: method.to_string(),
        final_loss: spectral_objective(&product, &sbar, rho),
        enc,
        product,
        iterations: 0,
        trace: None,
        flags: FitFlags {
            degenerate,
            ..FitFlags::default()
        },
        spec: Some(LossSpec::linear(rho)),
        seed: None,
        weights: None,
        edges: None,
    })
}
