//! The contrastive loss family, its regularizer, and the weight tables that
//! turn a loss gradient into a contrastive cross-covariance.
//!
//! With similarities `s_ij = ⟨G1 x_i, G2 x̃_j⟩` the loss is
//!
//! ```text
//! L = 1/(2C) Σ_i φ(Σ_j ε_ij ψ(s_ij − ν s_ii))
//!   + 1/(2C) Σ_i φ(Σ_j ε_ij ψ(s_ji − ν s_ii))
//!   + (ρ/2) ‖G1ᵀ G2‖_F²,          ε_ii = ε, ε_ij = 1 (i ≠ j).
//! ```
//!
//! Writing `α_ij = ε_ij φ'(a_i) ψ'(s_ij − ν s_ii)` for the row terms and
//! `ᾱ_ij` for the column terms, the gradient in `(G1, G2)` equals the
//! gradient of `−tr(G1 S(β) G2ᵀ) + R` with `β` frozen, where
//!
//! ```text
//! β_ij = (α_ij + ᾱ_ji) / 2
//! β_i  = ν Σ_j (α_ij + ᾱ_ij) / 2 − (α_ii + ᾱ_ii) / 2
//! S(β) = C⁻¹ Σ_i β_i x_i x̃_iᵀ − C⁻¹ Σ_{i≠j} β_ij x_i x̃_jᵀ.
//! ```
//!
//! [`loss_gradient`] computes the gradient through the similarity adjoint
//! `∂L/∂s`, independently of [`compute_weights`] and
//! [`contrastive_cross_covariance`]; tests compare the two routes.

use serde::{Deserialize, Serialize};

use crate::datagen::PairedDataset;
use crate::error::{MmclError, Result};
use crate::linalg::Mat;

/// Scalar link functions available for `φ` and `ψ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    /// `x ↦ x`
    Identity,
    /// `x ↦ τ·log(ε′ + x)` with `ε′` taken from `LossSpec::log_offset`
    Log,
    /// `x ↦ exp(x / τ)`
    Exp,
}

/// Loss normalizer `C_n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Normalizer {
    #[serde(rename = "n")]
    N,
    #[serde(rename = "n(n-1)")]
    NTimesNMinus1,
}

impl Normalizer {
    pub fn value(self, n: usize) -> f64 {
        match self {
            Normalizer::N => n as f64,
            Normalizer::NTimesNMinus1 => (n * n.saturating_sub(1)) as f64,
        }
    }
}

/// A member of the loss family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub phi: Link,
    pub psi: Link,
    pub epsilon: f64,
    pub nu: f64,
    pub tau: f64,
    pub cn: Normalizer,
    pub rho: f64,
    /// Offset `ε′` inside `τ·log(ε′ + x)`; zero for CLIP, one for the
    /// `log(1 + x)` variant.
    #[serde(default)]
    pub log_offset: f64,
}

impl LossSpec {
    /// Linear loss: identity links, `ν = 1`, `C_n = n(n−1)`.
    pub fn linear(rho: f64) -> Self {
        LossSpec {
            phi: Link::Identity,
            psi: Link::Identity,
            epsilon: 0.0,
            nu: 1.0,
            tau: 1.0,
            cn: Normalizer::NTimesNMinus1,
            rho,
            log_offset: 0.0,
        }
    }

    /// CLIP/ALIGN: `φ = τ log`, `ψ = exp(·/τ)`, `ε = 1`, `C_n = n`.
    pub fn clip(tau: f64, nu: f64, rho: f64) -> Self {
        LossSpec {
            phi: Link::Log,
            psi: Link::Exp,
            epsilon: 1.0,
            nu,
            tau,
            cn: Normalizer::N,
            rho,
            log_offset: 0.0,
        }
    }

    /// InfoNCE without the self term in the denominator (`ε = 0`).
    pub fn infonce(tau: f64, nu: f64, rho: f64) -> Self {
        LossSpec {
            epsilon: 0.0,
            ..LossSpec::clip(tau, nu, rho)
        }
    }

    /// InfoNCE with `φ(x) = τ log(1 + x)`.
    pub fn infonce_log1p(tau: f64, nu: f64, rho: f64) -> Self {
        LossSpec {
            log_offset: 1.0,
            ..LossSpec::infonce(tau, nu, rho)
        }
    }

    /// Checks every parameter, including `ρ > 0`.
    pub fn validate(&self) -> Result<()> {
        self.validate_terms()?;
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(MmclError::InvalidInput(format!(
                "rho must be positive, got {}",
                self.rho
            )));
        }
        Ok(())
    }

    /// Checks the parameters the loss terms depend on; `ρ` may be zero.
    pub fn validate_terms(&self) -> Result<()> {
        let bad = |msg: String| Err(MmclError::InvalidInput(msg));
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if !(self.nu >= 1.0 && self.nu.is_finite()) {
            return bad(format!("nu must be at least 1, got {}", self.nu));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be nonnegative, got {}", self.epsilon));
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return bad(format!("rho must be nonnegative, got {}", self.rho));
        }
        if !(self.log_offset >= 0.0 && self.log_offset.is_finite()) {
            return bad(format!(
                "log_offset must be nonnegative, got {}",
                self.log_offset
            ));
        }
        Ok(())
    }

    fn is_softmax(&self) -> bool {
        self.phi == Link::Log && self.psi == Link::Exp
    }

    fn eval(&self, link: Link, x: f64) -> f64 {
        match link {
            Link::Identity => x,
            Link::Log => self.tau * (self.log_offset + x).ln(),
            Link::Exp => (x / self.tau).exp(),
        }
    }

    fn deriv(&self, link: Link, x: f64) -> f64 {
        match link {
            Link::Identity => 1.0,
            Link::Log => self.tau / (self.log_offset + x),
            Link::Exp => (x / self.tau).exp() / self.tau,
        }
    }

    fn eps(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.epsilon
        } else {
            1.0
        }
    }
}

/// The two linear encoders `G1 (r×d1)` and `G2 (r×d2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderPair {
    pub g1: Mat,
    pub g2: Mat,
}

impl EncoderPair {
    pub fn new(g1: Mat, g2: Mat) -> Result<Self> {
        if g1.rows() != g2.rows() {
            return Err(MmclError::DimensionMismatch(format!(
                "encoder ranks differ: {} vs {}",
                g1.rows(),
                g2.rows()
            )));
        }
        if !g1.is_finite() || !g2.is_finite() {
            return Err(MmclError::InvalidInput(
                "encoders contain non-finite entries".into(),
            ));
        }
        Ok(EncoderPair { g1, g2 })
    }

    pub fn zeros(r: usize, d1: usize, d2: usize) -> Self {
        EncoderPair {
            g1: Mat::zeros(r, d1),
            g2: Mat::zeros(r, d2),
        }
    }

    pub fn rank(&self) -> usize {
        self.g1.rows()
    }

    /// `G1ᵀ G2`, the `d1×d2` matrix every similarity depends on.
    pub fn product(&self) -> Mat {
        self.g1.t_matmul(&self.g2)
    }

    fn check_data(&self, x: &Mat, xt: &Mat) -> Result<()> {
        if x.cols() != self.g1.cols() || xt.cols() != self.g2.cols() {
            return Err(MmclError::DimensionMismatch(format!(
                "data dims ({}, {}) vs encoder dims ({}, {})",
                x.cols(),
                xt.cols(),
                self.g1.cols(),
                self.g2.cols()
            )));
        }
        Ok(())
    }
}

/// Matrix of similarities `s_ij = ⟨G1 x_i, G2 x̃_j⟩ = x_iᵀ G1ᵀ G2 x̃_j`.
pub fn similarity_matrix(enc: &EncoderPair, x: &Mat, xt: &Mat) -> Result<Mat> {
    enc.check_data(x, xt)?;
    let a = x.matmul_t(&enc.g1);
    let b = xt.matmul_t(&enc.g2);
    Ok(a.matmul_t(&b))
}

/// Similarities computed from the product `G1ᵀG2` directly.
pub fn similarity_from_product(product: &Mat, x: &Mat, xt: &Mat) -> Result<Mat> {
    if x.cols() != product.rows() || xt.cols() != product.cols() {
        return Err(MmclError::DimensionMismatch(
            "data dims vs product dims".into(),
        ));
    }
    Ok(x.matmul(product).matmul_t(xt))
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Value `φ(Σ_j ε_ij ψ(u_j))` and derivative coefficients
/// `ε_ij φ'(·) ψ'(u_j)` for one row (or column) of shifted similarities
/// `u`, whose self index is `own`. The softmax pair is evaluated in the
/// log domain.
fn term(spec: &LossSpec, u: &[f64], own: usize) -> (f64, Vec<f64>) {
    if spec.is_softmax() {
        let logits: Vec<f64> = u
            .iter()
            .enumerate()
            .map(|(j, &v)| {
                let e = spec.eps(own, j);
                if e > 0.0 {
                    e.ln() + v / spec.tau
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = if m == f64::NEG_INFINITY {
            m
        } else {
            m + logits.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
        };
        let log_denom = if spec.log_offset > 0.0 {
            log_add_exp(spec.log_offset.ln(), lse)
        } else {
            lse
        };
        let coeffs = logits.iter().map(|t| (t - log_denom).exp()).collect();
        (spec.tau * log_denom, coeffs)
    } else {
        let inner: f64 = u
            .iter()
            .enumerate()
            .map(|(j, &v)| spec.eps(own, j) * spec.eval(spec.psi, v))
            .sum();
        let outer = spec.deriv(spec.phi, inner);
        let coeffs = u
            .iter()
            .enumerate()
            .map(|(j, &v)| spec.eps(own, j) * outer * spec.deriv(spec.psi, v))
            .collect();
        (spec.eval(spec.phi, inner), coeffs)
    }
}

fn row_shift(sims: &Mat, i: usize, nu: f64) -> Vec<f64> {
    let sii = sims[(i, i)];
    sims.row(i).iter().map(|s| s - nu * sii).collect()
}

fn col_shift(sims: &Mat, i: usize, nu: f64) -> Vec<f64> {
    let sii = sims[(i, i)];
    (0..sims.rows()).map(|j| sims[(j, i)] - nu * sii).collect()
}

fn check_paired(enc: &EncoderPair, data: &PairedDataset) -> Result<()> {
    enc.check_data(&data.x, &data.xt)?;
    if data.x.rows() != data.xt.rows() || data.x.rows() < 2 {
        return Err(MmclError::InvalidInput(format!(
            "paired loss needs n ≥ 2 matched rows, got {} and {}",
            data.x.rows(),
            data.xt.rows()
        )));
    }
    Ok(())
}

/// `(ρ/2) ‖G1ᵀ G2‖_F²`.
pub fn regularizer(enc: &EncoderPair, rho: f64) -> f64 {
    0.5 * rho * enc.product().frobenius_norm().powi(2)
}

fn regularizer_gradient(enc: &EncoderPair, rho: f64) -> (Mat, Mat) {
    let g1g1t = enc.g1.matmul_t(&enc.g1);
    let g2g2t = enc.g2.matmul_t(&enc.g2);
    (
        g2g2t.matmul(&enc.g1).scale(rho),
        g1g1t.matmul(&enc.g2).scale(rho),
    )
}

/// Loss value on the observed (diagonal) pairing of `data`.
pub fn loss_value(spec: &LossSpec, enc: &EncoderPair, data: &PairedDataset) -> Result<f64> {
    spec.validate_terms()?;
    check_paired(enc, data)?;
    let sims = similarity_matrix(enc, &data.x, &data.xt)?;
    Ok(loss_from_similarities(spec, &sims) + regularizer(enc, spec.rho))
}

/// Data part of the loss as a function of the similarity matrix alone.
pub fn loss_from_similarities(spec: &LossSpec, sims: &Mat) -> f64 {
    let n = sims.rows();
    let c = spec.cn.value(n);
    let mut total = 0.0;
    for i in 0..n {
        total += term(spec, &row_shift(sims, i, spec.nu), i).0;
        total += term(spec, &col_shift(sims, i, spec.nu), i).0;
    }
    total / (2.0 * c)
}

/// Adjoint `∂L/∂s` of the data part of the loss.
pub fn similarity_adjoint(spec: &LossSpec, sims: &Mat) -> Mat {
    let n = sims.rows();
    let half_c = 2.0 * spec.cn.value(n);
    let mut adj = Mat::zeros(n, n);
    for i in 0..n {
        let (_, row) = term(spec, &row_shift(sims, i, spec.nu), i);
        let (_, col) = term(spec, &col_shift(sims, i, spec.nu), i);
        let row_sum: f64 = row.iter().sum();
        let col_sum: f64 = col.iter().sum();
        for j in 0..n {
            if j != i {
                adj[(i, j)] += row[j] / half_c;
                adj[(j, i)] += col[j] / half_c;
            }
        }
        adj[(i, i)] += (row[i] - spec.nu * row_sum + col[i] - spec.nu * col_sum) / half_c;
    }
    adj
}

/// Pulls a similarity adjoint back to the encoders and adds the
/// regularizer gradient.
fn encoder_gradient(adj: &Mat, enc: &EncoderPair, x: &Mat, xt: &Mat, rho: f64) -> (Mat, Mat) {
    let m = x.t_matmul(&adj.matmul(xt));
    let (r1, r2) = regularizer_gradient(enc, rho);
    let g1 = enc.g2.matmul(&m.transpose()).add(&r1);
    let g2 = enc.g1.matmul(&m).add(&r2);
    (g1, g2)
}

/// Analytic gradient `(∂L/∂G1, ∂L/∂G2)` by the chain rule through the
/// similarity matrix.
pub fn loss_gradient(
    spec: &LossSpec,
    enc: &EncoderPair,
    data: &PairedDataset,
) -> Result<(Mat, Mat)> {
    spec.validate_terms()?;
    check_paired(enc, data)?;
    let sims = similarity_matrix(enc, &data.x, &data.xt)?;
    let adj = similarity_adjoint(spec, &sims);
    Ok(encoder_gradient(&adj, enc, &data.x, &data.xt, spec.rho))
}

/// Which cross-covariance a weight table defines.
#[derive(Clone, Debug, PartialEq)]
pub enum WeightMode {
    /// Paired loss: diagonal `β_i` and off-diagonal `β_ij`.
    Paired,
    /// Unpaired loss with estimated pairs `Ē`: all `β^u_ij` (diagonal
    /// included) stored in `beta_off`, `beta_diag` empty.
    Unpaired { edges: Vec<(usize, usize)>, nu: f64 },
}

/// Coefficients defining a contrastive cross-covariance.
#[derive(Clone, Debug)]
pub struct ContrastiveWeights {
    pub beta_diag: Vec<f64>,
    pub beta_off: Mat,
    /// Row-side derivative coefficients `α_ij` (row softmax in unpaired mode).
    pub alpha: Mat,
    /// Column-side coefficients `ᾱ_ij`; in unpaired mode the column softmax
    /// stored in the orientation of the similarity matrix.
    pub alpha_bar: Mat,
    pub mode: WeightMode,
}

impl ContrastiveWeights {
    pub fn n(&self) -> usize {
        self.beta_off.rows()
    }

    pub fn is_finite(&self) -> bool {
        self.beta_diag.iter().all(|v| v.is_finite())
            && self.beta_off.is_finite()
            && self.alpha.is_finite()
            && self.alpha_bar.is_finite()
    }
}

/// Row-wise masked softmax of `logits / τ` with an optional additive
/// offset `ε′` in the denominator: `exp(l_j/τ) / (ε′ e^{c/τ} + Σ_k exp(l_k/τ))`,
/// where `c` is the row's reference level (`ν s_ii`).
fn softmax_with_offset(
    logits: &[f64],
    weights: &[f64],
    tau: f64,
    offset: f64,
    reference: f64,
) -> Vec<f64> {
    let scaled: Vec<f64> = logits
        .iter()
        .zip(weights)
        .map(|(l, w)| {
            if *w > 0.0 {
                w.ln() + l / tau
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let mut m = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let off_logit = if offset > 0.0 {
        offset.ln() + reference / tau
    } else {
        f64::NEG_INFINITY
    };
    m = m.max(off_logit);
    if m == f64::NEG_INFINITY {
        return vec![0.0; logits.len()];
    }
    let mut denom: f64 = scaled.iter().map(|t| (t - m).exp()).sum();
    if offset > 0.0 {
        denom += (off_logit - m).exp();
    }
    scaled.iter().map(|t| (t - m).exp() / denom).collect()
}

/// Weight tables at the given similarities. The softmax family uses its
/// closed form: each row (column) of `α` (`ᾱ`) is a softmax of the
/// similarities over the pairs with `ε_ij > 0`.
pub fn compute_weights(spec: &LossSpec, sims: &Mat) -> Result<ContrastiveWeights> {
    spec.validate_terms()?;
    if sims.rows() != sims.cols() {
        return Err(MmclError::InvalidInput(format!(
            "weights need a square similarity matrix, got {}x{}",
            sims.rows(),
            sims.cols()
        )));
    }
    let n = sims.rows();
    let mut alpha = Mat::zeros(n, n);
    let mut alpha_bar = Mat::zeros(n, n);
    for i in 0..n {
        let mask: Vec<f64> = (0..n).map(|j| spec.eps(i, j)).collect();
        let sii = sims[(i, i)];
        let row: Vec<f64> = sims.row(i).to_vec();
        let col: Vec<f64> = sims.col(i);
        if spec.is_softmax() {
            let reference = spec.nu * sii;
            let a = softmax_with_offset(&row, &mask, spec.tau, spec.log_offset, reference);
            let b = softmax_with_offset(&col, &mask, spec.tau, spec.log_offset, reference);
            alpha.row_mut(i).copy_from_slice(&a);
            alpha_bar.row_mut(i).copy_from_slice(&b);
        } else {
            let a_sum: f64 = (0..n)
                .map(|j| mask[j] * spec.eval(spec.psi, row[j] - spec.nu * sii))
                .sum();
            let b_sum: f64 = (0..n)
                .map(|j| mask[j] * spec.eval(spec.psi, col[j] - spec.nu * sii))
                .sum();
            let (da, db) = (spec.deriv(spec.phi, a_sum), spec.deriv(spec.phi, b_sum));
            for j in 0..n {
                alpha[(i, j)] = mask[j] * da * spec.deriv(spec.psi, row[j] - spec.nu * sii);
                alpha_bar[(i, j)] = mask[j] * db * spec.deriv(spec.psi, col[j] - spec.nu * sii);
            }
        }
    }
    let mut beta_off = Mat::zeros(n, n);
    let mut beta_diag = vec![0.0; n];
    for i in 0..n {
        let mut total = 0.0;
        for j in 0..n {
            total += alpha[(i, j)] + alpha_bar[(i, j)];
            if i != j {
                beta_off[(i, j)] = 0.5 * (alpha[(i, j)] + alpha_bar[(j, i)]);
            }
        }
        beta_diag[i] = 0.5 * spec.nu * total - 0.5 * (alpha[(i, i)] + alpha_bar[(i, i)]);
    }
    Ok(ContrastiveWeights {
        beta_diag,
        beta_off,
        alpha,
        alpha_bar,
        mode: WeightMode::Paired,
    })
}

fn row_col_log_normalizers(sims: &Mat, tau: f64) -> (Vec<f64>, Vec<f64>) {
    let (n, m) = sims.shape();
    let mut row = vec![0.0; n];
    for (i, out) in row.iter_mut().enumerate() {
        let r = sims.row(i);
        let mx = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max) / tau;
        *out = mx + r.iter().map(|s| (s / tau - mx).exp()).sum::<f64>().ln();
    }
    let mut cmax = vec![f64::NEG_INFINITY; m];
    for i in 0..n {
        for (c, s) in cmax.iter_mut().zip(sims.row(i)) {
            *c = c.max(s / tau);
        }
    }
    let mut csum = vec![0.0; m];
    for i in 0..n {
        for ((c, s), mx) in csum.iter_mut().zip(sims.row(i)).zip(&cmax) {
            *c += (s / tau - mx).exp();
        }
    }
    let col = cmax.iter().zip(&csum).map(|(mx, s)| mx + s.ln()).collect();
    (row, col)
}

fn check_edges(edges: &[(usize, usize)], n: usize, m: usize) -> Result<()> {
    if let Some(e) = edges.iter().find(|&&(i, j)| i >= n || j >= m) {
        return Err(MmclError::InvalidInput(format!(
            "edge {e:?} out of range for {n}x{m}"
        )));
    }
    Ok(())
}

/// Loss on unpaired pools with estimated pairs `Ē`:
/// `−(ν/N) Σ_Ē s_ij + τ/(2N) Σ_i logΣ_j e^{s_ij/τ} + τ/(2N) Σ_j logΣ_i e^{s_ij/τ} + R`.
pub fn unpaired_loss_value(
    spec: &LossSpec,
    enc: &EncoderPair,
    x: &Mat,
    xt: &Mat,
    edges: &[(usize, usize)],
) -> Result<f64> {
    spec.validate_terms()?;
    let sims = similarity_matrix(enc, x, xt)?;
    check_edges(edges, sims.rows(), sims.cols())?;
    let n = sims.rows() as f64;
    let (row, col) = row_col_log_normalizers(&sims, spec.tau);
    let positive: f64 = edges.iter().map(|&(i, j)| sims[(i, j)]).sum();
    let lse: f64 = row.iter().sum::<f64>() + col.iter().sum::<f64>();
    Ok(-spec.nu / n * positive + spec.tau / (2.0 * n) * lse + regularizer(enc, spec.rho))
}

/// Gradient of [`unpaired_loss_value`] via the similarity adjoint
/// `(p_ij + q_ij)/(2N) − (ν/N)·1[(i,j) ∈ Ē]`.
pub fn unpaired_loss_gradient(
    spec: &LossSpec,
    enc: &EncoderPair,
    x: &Mat,
    xt: &Mat,
    edges: &[(usize, usize)],
) -> Result<(Mat, Mat)> {
    spec.validate_terms()?;
    let sims = similarity_matrix(enc, x, xt)?;
    check_edges(edges, sims.rows(), sims.cols())?;
    let n = sims.rows() as f64;
    let (row, col) = row_col_log_normalizers(&sims, spec.tau);
    let mut adj = Mat::from_fn(sims.rows(), sims.cols(), |i, j| {
        let s = sims[(i, j)] / spec.tau;
        ((s - row[i]).exp() + (s - col[j]).exp()) / (2.0 * n)
    });
    for &(i, j) in edges {
        adj[(i, j)] -= spec.nu / n;
    }
    Ok(encoder_gradient(&adj, enc, x, xt, spec.rho))
}

/// Unpaired weights `β^u_ij = (p_ij + q_ij)/2` from the row softmax `p` and
/// column softmax `q` of `s/τ`, tagged with the estimated pairs `Ē`.
pub fn compute_unpaired_weights(
    spec: &LossSpec,
    sims: &Mat,
    edges: &[(usize, usize)],
) -> Result<ContrastiveWeights> {
    spec.validate_terms()?;
    if sims.rows() != sims.cols() {
        return Err(MmclError::InvalidInput(
            "unpaired weights need a square similarity matrix".into(),
        ));
    }
    check_edges(edges, sims.rows(), sims.cols())?;
    let n = sims.rows();
    let mut p = Mat::zeros(n, n);
    for i in 0..n {
        let ones = vec![1.0; n];
        let sm = softmax_with_offset(sims.row(i), &ones, spec.tau, 0.0, 0.0);
        p.row_mut(i).copy_from_slice(&sm);
    }
    let mut q = Mat::zeros(n, n);
    for j in 0..n {
        let ones = vec![1.0; n];
        let sm = softmax_with_offset(&sims.col(j), &ones, spec.tau, 0.0, 0.0);
        for (i, v) in sm.into_iter().enumerate() {
            q[(i, j)] = v;
        }
    }
    let beta = Mat::from_fn(n, n, |i, j| 0.5 * (p[(i, j)] + q[(i, j)]));
    Ok(ContrastiveWeights {
        beta_diag: Vec::new(),
        beta_off: beta,
        alpha: p,
        alpha_bar: q,
        mode: WeightMode::Unpaired {
            edges: edges.to_vec(),
            nu: spec.nu,
        },
    })
}

/// `S(β)` for paired weights, or `S^u = (ν/N) Σ_Ē x_i x̃_jᵀ − (1/N) Σ_ij β^u_ij x_i x̃_jᵀ`
/// for unpaired weights (where `c_n` is ignored and `N` is used).
pub fn contrastive_cross_covariance(
    weights: &ContrastiveWeights,
    x: &Mat,
    xt: &Mat,
    c_n: Normalizer,
) -> Result<Mat> {
    let n = weights.n();
    if x.rows() != n || xt.rows() != n {
        return Err(MmclError::DimensionMismatch(format!(
            "weights are {n}x{n} but data have {} and {} rows",
            x.rows(),
            xt.rows()
        )));
    }
    let d2 = xt.cols();
    let mut s = Mat::zeros(x.cols(), d2);
    let mut acc = vec![0.0; d2];
    let c = match weights.mode {
        WeightMode::Paired => c_n.value(n),
        WeightMode::Unpaired { .. } => n as f64,
    };
    let mut positives: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut nu = 0.0;
    if let WeightMode::Unpaired { edges, nu: v } = &weights.mode {
        nu = *v;
        for &(i, j) in edges {
            positives[i].push(j);
        }
    }
    for i in 0..n {
        acc.iter_mut().for_each(|a| *a = 0.0);
        let brow = weights.beta_off.row(i);
        match weights.mode {
            WeightMode::Paired => {
                for j in 0..n {
                    let w = if j == i {
                        weights.beta_diag[i]
                    } else {
                        -brow[j]
                    };
                    if w != 0.0 {
                        acc.iter_mut().zip(xt.row(j)).for_each(|(a, v)| *a += w * v);
                    }
                }
            }
            WeightMode::Unpaired { .. } => {
                for (j, &b) in brow.iter().enumerate() {
                    if b != 0.0 {
                        acc.iter_mut().zip(xt.row(j)).for_each(|(a, v)| *a -= b * v);
                    }
                }
                for &j in &positives[i] {
                    acc.iter_mut()
                        .zip(xt.row(j))
                        .for_each(|(a, v)| *a += nu * v);
                }
            }
        }
        for (k, &xv) in x.row(i).iter().enumerate() {
            if xv != 0.0 {
                s.row_mut(k)
                    .iter_mut()
                    .zip(&acc)
                    .for_each(|(o, a)| *o += xv * a / c);
            }
        }
    }
    Ok(s)
}
