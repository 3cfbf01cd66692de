//! Synthetic two-modality data from the spiked covariance model
//!
//! ```text
//! x  = U1* Σz^{1/2} w  + Σξ^{1/2} ζ
//! x̃ = U2* Σz̃^{1/2} w̃ + Σξ̃^{1/2} ζ̃
//! ```
//!
//! where ground-truth pairs share the latent vector exactly (`w_i = w̃_j`)
//! and the noise is always drawn independently per modality. Generators
//! cover one-to-one pairing with a controlled distortion rate, unpaired
//! pools with a hidden matching, and a labeled many-to-many bipartite graph.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{MmclError, Result};
use crate::io;
use crate::linalg::{self, Mat, Subspace};

/// Deterministic generator used throughout the crate.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Unit-variance noise distributions for the `ζ` coordinates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseFamily {
    #[default]
    Gaussian,
    /// ±1 with equal probability.
    Rademacher,
    /// Uniform on `[-√3, √3]`.
    Uniform,
}

impl NoiseFamily {
    fn draw<R: Rng>(self, rng: &mut R) -> f64 {
        match self {
            NoiseFamily::Gaussian => rng.sample(StandardNormal),
            NoiseFamily::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            NoiseFamily::Uniform => (rng.random::<f64>() * 2.0 - 1.0) * 3f64.sqrt(),
        }
    }
}

/// Ground-truth factors and covariances of the two-modality spiked model.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelParams {
    pub d1: usize,
    pub d2: usize,
    pub r: usize,
    pub u1_star: Subspace,
    pub u2_star: Subspace,
    /// Diagonal of `Σz`.
    pub sigma_z: Vec<f64>,
    /// Diagonal of `Σz̃`.
    pub sigma_zt: Vec<f64>,
    pub sigma_xi: Mat,
    pub sigma_xit: Mat,
    pub noise_family: NoiseFamily,
}

fn haar_subspace<R: Rng>(d: usize, r: usize, rng: &mut R) -> Result<Subspace> {
    let g = Mat::from_fn(d, r, |_, _| rng.sample(StandardNormal));
    Subspace::from_span(&g)
}

/// Draws a model with Haar-random factors, geometric latent spectrum
/// `decay^j` (so `‖Σz‖ = 1`) and isotropic noise `Σξ = I / snr²`.
/// `snr = ∞` gives a noiseless model.
pub fn random_model(
    d1: usize,
    d2: usize,
    r: usize,
    snr: f64,
    decay: f64,
    seed: u64,
) -> Result<ModelParams> {
    if r == 0 || r > d1.min(d2) {
        return Err(MmclError::InvalidRank { r, max: d1.min(d2) });
    }
    if snr.is_nan() || snr <= 0.0 {
        return Err(MmclError::InvalidInput(format!(
            "snr must be positive, got {snr}"
        )));
    }
    if !(decay > 0.0 && decay <= 1.0) {
        return Err(MmclError::InvalidInput(format!(
            "decay must lie in (0, 1], got {decay}"
        )));
    }
    let mut rng = seeded_rng(seed);
    let u1_star = haar_subspace(d1, r, &mut rng)?;
    let u2_star = haar_subspace(d2, r, &mut rng)?;
    let sigma_z: Vec<f64> = (0..r).map(|j| decay.powi(j as i32)).collect();
    let noise_var = 1.0 / (snr * snr);
    Ok(ModelParams {
        d1,
        d2,
        r,
        u1_star,
        u2_star,
        sigma_zt: sigma_z.clone(),
        sigma_z,
        sigma_xi: Mat::identity(d1).scale(noise_var),
        sigma_xit: Mat::identity(d2).scale(noise_var),
        noise_family: NoiseFamily::Gaussian,
    })
}

/// Signal-to-noise ratio corresponding to an isotropic noise standard deviation.
pub fn snr_from_noise_sd(sd: f64) -> f64 {
    if sd == 0.0 {
        f64::INFINITY
    } else {
        1.0 / sd
    }
}

impl ModelParams {
    pub fn with_noise_family(mut self, family: NoiseFamily) -> Self {
        self.noise_family = family;
        self
    }

    /// Checks the structural invariants of the model.
    pub fn validate(&self) -> Result<()> {
        let check_diag = |name: &str, d: &[f64]| -> Result<()> {
            if d.len() != self.r {
                return Err(MmclError::DimensionMismatch(format!(
                    "{name} has {} entries, r = {}",
                    d.len(),
                    self.r
                )));
            }
            if d.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(MmclError::InvalidInput(format!("{name} must be positive")));
            }
            if d.windows(2).any(|w| w[1] > w[0]) {
                return Err(MmclError::InvalidInput(format!(
                    "{name} must be nonincreasing"
                )));
            }
            if (d[0] - 1.0).abs() > 1e-12 {
                return Err(MmclError::InvalidInput(format!(
                    "{name} must have unit operator norm"
                )));
            }
            Ok(())
        };
        check_diag("sigma_z", &self.sigma_z)?;
        check_diag("sigma_zt", &self.sigma_zt)?;
        if self.u1_star.ambient_dim() != self.d1 || self.u2_star.ambient_dim() != self.d2 {
            return Err(MmclError::DimensionMismatch(
                "factor ambient dimensions".into(),
            ));
        }
        if self.sigma_xi.shape() != (self.d1, self.d1)
            || self.sigma_xit.shape() != (self.d2, self.d2)
        {
            return Err(MmclError::DimensionMismatch(
                "noise covariance shapes".into(),
            ));
        }
        Ok(())
    }

    /// `κz² = ‖Σz‖ / λmin(Σz)`.
    pub fn kappa_z_sq(&self) -> f64 {
        self.sigma_z[0] / self.sigma_z[self.r - 1]
    }

    pub fn kappa_zt_sq(&self) -> f64 {
        self.sigma_zt[0] / self.sigma_zt[self.r - 1]
    }

    /// `s1² = ‖Σz‖ / ‖Σξ‖`; infinite for a noiseless model.
    pub fn snr1_sq(&self) -> Result<f64> {
        Ok(self.sigma_z[0] / linalg::op_norm(&self.sigma_xi)?)
    }

    pub fn snr2_sq(&self) -> Result<f64> {
        Ok(self.sigma_zt[0] / linalg::op_norm(&self.sigma_xit)?)
    }

    /// SHA-256 of the JSON serialization.
    pub fn content_hash(&self) -> String {
        io::sha256_hex(serde_json::to_string(self).unwrap_or_default().as_bytes())
    }

    /// Maps latent rows `w` to observations of modality `side` (1 or 2).
    fn emit<R: Rng>(&self, side: u8, w: &Mat, rng: &mut R) -> Result<Mat> {
        let (u, sz, sxi, d) = if side == 1 {
            (&self.u1_star, &self.sigma_z, &self.sigma_xi, self.d1)
        } else {
            (&self.u2_star, &self.sigma_zt, &self.sigma_xit, self.d2)
        };
        let root: Vec<f64> = sz.iter().map(|v| v.sqrt()).collect();
        let z = Mat::from_fn(w.rows(), self.r, |i, j| w[(i, j)] * root[j]);
        let mut x = z.matmul_t(u.basis());
        let zeta = Mat::from_fn(w.rows(), d, |_, _| self.noise_family.draw(rng));
        let offdiag = (0..d).any(|i| (0..d).any(|j| i != j && sxi[(i, j)] != 0.0));
        let noise = if offdiag {
            zeta.matmul(&linalg::psd_sqrt(sxi)?)
        } else {
            let sd: Vec<f64> = sxi.diag().iter().map(|v| v.max(0.0).sqrt()).collect();
            Mat::from_fn(w.rows(), d, |i, j| zeta[(i, j)] * sd[j])
        };
        x.axpy(1.0, &noise);
        Ok(x)
    }
}

fn gaussian_mat<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Whether a dataset carries an observed pairing or only a hidden one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Paired,
    Unpaired,
}

/// Two sample matrices with their observed pairing `C` and the latent
/// ground-truth matching `E`.
#[derive(Clone, Debug)]
pub struct PairedDataset {
    pub kind: DatasetKind,
    pub x: Mat,
    pub xt: Mat,
    /// Observed pairs `C`; the diagonal for paired data, empty for unpaired pools.
    pub observed_edges: Vec<(usize, usize)>,
    /// Ground-truth pairs `E`, sorted by left index.
    pub truth_edges: Vec<(usize, usize)>,
    /// Achieved distortion rate `1 − |C∩E| / n`.
    pub distortion: f64,
    /// Latent vectors behind `x` and `xt`, kept for diagnostics.
    pub w: Mat,
    pub wt: Mat,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub kind: DatasetKind,
    pub n: usize,
    pub d1: usize,
    pub d2: usize,
    pub distortion: f64,
    pub seed: u64,
    pub model_hash: String,
}

impl PairedDataset {
    pub fn n(&self) -> usize {
        self.x.rows()
    }

    /// Builds a paired dataset from raw samples with the identity pairing
    /// observed and assumed correct.
    pub fn from_samples(x: Mat, xt: Mat) -> Result<Self> {
        if x.rows() != xt.rows() {
            return Err(MmclError::DimensionMismatch(format!(
                "{} samples in x but {} in xt",
                x.rows(),
                xt.rows()
            )));
        }
        let n = x.rows();
        let diag: Vec<(usize, usize)> = (0..n).map(|i| (i, i)).collect();
        Ok(PairedDataset {
            kind: DatasetKind::Paired,
            w: Mat::zeros(n, 0),
            wt: Mat::zeros(n, 0),
            x,
            xt,
            observed_edges: diag.clone(),
            truth_edges: diag,
            distortion: 0.0,
            seed: 0,
        })
    }

    /// Writes `x.csv`, `xt.csv`, `edges.csv` and `meta.json` into `dir`.
    /// `edges.csv` lists every observed pair and then every ground-truth pair
    /// that was not observed, each flagged with `is_truth`.
    pub fn write_dir(&self, dir: &Path, model_hash: &str) -> Result<()> {
        io::ensure_dir(dir)?;
        io::write_mat_csv(&dir.join("x.csv"), &self.x)?;
        io::write_mat_csv(&dir.join("xt.csv"), &self.xt)?;
        let truth: std::collections::BTreeSet<(usize, usize)> =
            self.truth_edges.iter().copied().collect();
        let observed: std::collections::BTreeSet<(usize, usize)> =
            self.observed_edges.iter().copied().collect();
        let mut w = csv::Writer::from_path(dir.join("edges.csv"))?;
        w.write_record(["i", "j", "is_truth"])?;
        for &(i, j) in &self.observed_edges {
            let t = u8::from(truth.contains(&(i, j)));
            w.write_record([i.to_string(), j.to_string(), t.to_string()])?;
        }
        for &(i, j) in &self.truth_edges {
            if !observed.contains(&(i, j)) {
                w.write_record([i.to_string(), j.to_string(), "1".to_string()])?;
            }
        }
        w.flush()?;
        let meta = DatasetMeta {
            kind: self.kind,
            n: self.n(),
            d1: self.x.cols(),
            d2: self.xt.cols(),
            distortion: self.distortion,
            seed: self.seed,
            model_hash: model_hash.to_string(),
        };
        io::write_json(&dir.join("meta.json"), &meta)
    }

    /// Reads a dataset written by [`PairedDataset::write_dir`]. Latents are
    /// not stored and come back empty.
    pub fn read_dir(dir: &Path) -> Result<Self> {
        let meta: DatasetMeta =
            serde_json::from_str(&std::fs::read_to_string(dir.join("meta.json"))?)?;
        let x = io::read_mat_csv(&dir.join("x.csv"))?;
        let xt = io::read_mat_csv(&dir.join("xt.csv"))?;
        let mut observed = Vec::new();
        let mut truth = Vec::new();
        let mut r = csv::Reader::from_path(dir.join("edges.csv"))?;
        for rec in r.records() {
            let rec = rec?;
            let parse = |k: usize| -> Result<usize> {
                rec.get(k)
                    .and_then(|f| f.trim().parse().ok())
                    .ok_or_else(|| {
                        MmclError::InvalidInput(format!("malformed edges.csv record {rec:?}"))
                    })
            };
            let (i, j, t) = (parse(0)?, parse(1)?, parse(2)?);
            if meta.kind == DatasetKind::Paired && i == j {
                observed.push((i, j));
            }
            if t == 1 {
                truth.push((i, j));
            }
        }
        truth.sort_unstable();
        let n = x.rows();
        Ok(PairedDataset {
            kind: meta.kind,
            x,
            xt,
            observed_edges: observed,
            truth_edges: truth,
            distortion: meta.distortion,
            w: Mat::zeros(n, 0),
            wt: Mat::zeros(n, 0),
            seed: meta.seed,
        })
    }
}

/// Uniformly random permutation of `items` without fixed points, by rejection.
fn derange<R: Rng>(items: &[usize], rng: &mut R) -> Vec<usize> {
    let mut out = items.to_vec();
    loop {
        out.shuffle(rng);
        if out.iter().zip(items).all(|(a, b)| a != b) {
            return out;
        }
    }
}

/// One-to-one paired sample of size `n` in which exactly
/// `round((1 − p_target) n)` observed diagonal pairs are ground truth.
/// Broken indices are rematched by a random derangement; when rounding
/// would leave a single broken index, one more pair is broken so that a
/// derangement exists, and the achieved rate is recorded.
pub fn sample_paired(
    params: &ModelParams,
    n: usize,
    p_target: f64,
    seed: u64,
) -> Result<PairedDataset> {
    if !(0.0..=1.0).contains(&p_target) {
        return Err(MmclError::InvalidProbability(p_target));
    }
    if n < 2 {
        return Err(MmclError::InvalidInput(format!(
            "need at least 2 samples, got {n}"
        )));
    }
    params.validate()?;
    let mut rng = seeded_rng(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut m = ((1.0 - p_target) * n as f64).round() as usize;
    if n - m == 1 {
        m -= 1;
    }
    let mut broken = order[m..].to_vec();
    broken.sort_unstable();
    let mut partner: Vec<usize> = (0..n).collect();
    if !broken.is_empty() {
        let targets = derange(&broken, &mut rng);
        for (&b, &t) in broken.iter().zip(&targets) {
            partner[b] = t;
        }
    }

    let w = gaussian_mat(n, params.r, &mut rng);
    let mut wt = Mat::zeros(n, params.r);
    for i in 0..n {
        wt.row_mut(partner[i]).copy_from_slice(w.row(i));
    }
    let x = params.emit(1, &w, &mut rng)?;
    let xt = params.emit(2, &wt, &mut rng)?;
    let truth_edges: Vec<(usize, usize)> = (0..n).map(|i| (i, partner[i])).collect();
    let matched = (0..n).filter(|&i| partner[i] == i).count();
    Ok(PairedDataset {
        kind: DatasetKind::Paired,
        x,
        xt,
        observed_edges: (0..n).map(|i| (i, i)).collect(),
        truth_edges,
        distortion: 1.0 - matched as f64 / n as f64,
        w,
        wt,
        seed,
    })
}

/// Unpaired pool of size `n_unpaired`: every left sample has a hidden
/// partner on the right, and the right rows are shuffled so that row order
/// carries no matching information.
pub fn sample_unpaired(
    params: &ModelParams,
    n_unpaired: usize,
    seed: u64,
) -> Result<PairedDataset> {
    if n_unpaired < 2 {
        return Err(MmclError::InvalidInput(format!(
            "need at least 2 unpaired samples, got {n_unpaired}"
        )));
    }
    params.validate()?;
    let n = n_unpaired;
    let mut rng = seeded_rng(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let w = gaussian_mat(n, params.r, &mut rng);
    let mut wt = Mat::zeros(n, params.r);
    for i in 0..n {
        wt.row_mut(perm[i]).copy_from_slice(w.row(i));
    }
    let x = params.emit(1, &w, &mut rng)?;
    let xt = params.emit(2, &wt, &mut rng)?;
    Ok(PairedDataset {
        kind: DatasetKind::Unpaired,
        x,
        xt,
        observed_edges: Vec::new(),
        truth_edges: (0..n).map(|i| (i, perm[i])).collect(),
        distortion: 1.0,
        w,
        wt,
        seed,
    })
}

/// Labeled two-modality sample with a many-to-many correspondence.
#[derive(Clone, Debug)]
pub struct LabeledBipartite {
    pub x: Mat,
    pub xt: Mat,
    pub labels_x: Vec<usize>,
    pub labels_xt: Vec<usize>,
    /// Observed (possibly distorted) many-to-many edges, row-major order.
    pub edges: Vec<(usize, usize)>,
    pub k: usize,
    /// Latent cluster centers, one row per cluster.
    pub centers: Mat,
    /// Within-cluster latent spread relative to the center scale.
    pub spread: f64,
    pub p_prime: f64,
}

/// Within-cluster latent spread used by [`sample_labeled_bipartite`].
pub const DEFAULT_CLUSTER_SPREAD: f64 = 1.0;

/// `k` clusters of `n_per_cluster` samples per modality. Latents are
/// `(μ_c + spread·g) / sqrt(1 + spread²)` with `μ_c, g ~ N(0, I_r)` shared
/// across modalities by cluster. Starting from the disjoint within-cluster
/// bicliques, each intra-cluster edge is removed and each inter-cluster
/// edge is added independently with probability `p_prime`.
pub fn sample_labeled_bipartite(
    params: &ModelParams,
    n_per_cluster: usize,
    k: usize,
    p_prime: f64,
    seed: u64,
) -> Result<LabeledBipartite> {
    if k < 2 {
        return Err(MmclError::InvalidK {
            k,
            reason: "at least two clusters are required".into(),
        });
    }
    if !(0.0..=1.0).contains(&p_prime) {
        return Err(MmclError::InvalidProbability(p_prime));
    }
    if n_per_cluster == 0 {
        return Err(MmclError::InvalidInput(
            "n_per_cluster must be positive".into(),
        ));
    }
    params.validate()?;
    let mut rng = seeded_rng(seed);
    let centers = gaussian_mat(k, params.r, &mut rng);
    let labels_x: Vec<usize> = (0..k * n_per_cluster).map(|i| i / n_per_cluster).collect();
    let mut labels_xt = labels_x.clone();
    labels_xt.shuffle(&mut rng);
    let mut out = draw_labeled(
        params,
        &centers,
        DEFAULT_CLUSTER_SPREAD,
        labels_x,
        labels_xt,
        &mut rng,
    )?;
    out.p_prime = p_prime;
    out.edges.clear();
    let n = out.labels_x.len();
    for i in 0..n {
        for j in 0..n {
            let u: f64 = rng.random();
            let same = out.labels_x[i] == out.labels_xt[j];
            if (same && u >= p_prime) || (!same && u < p_prime) {
                out.edges.push((i, j));
            }
        }
    }
    Ok(out)
}

fn draw_labeled<R: Rng>(
    params: &ModelParams,
    centers: &Mat,
    spread: f64,
    labels_x: Vec<usize>,
    labels_xt: Vec<usize>,
    rng: &mut R,
) -> Result<LabeledBipartite> {
    let norm = (1.0 + spread * spread).sqrt();
    let mut latent = |labels: &[usize]| {
        Mat::from_fn(labels.len(), params.r, |i, j| {
            let g: f64 = rng.sample(StandardNormal);
            (centers[(labels[i], j)] + spread * g) / norm
        })
    };
    let w = latent(&labels_x);
    let wt = latent(&labels_xt);
    let x = params.emit(1, &w, rng)?;
    let xt = params.emit(2, &wt, rng)?;
    let edges = clean_edges(&labels_x, &labels_xt);
    Ok(LabeledBipartite {
        x,
        xt,
        k: centers.rows(),
        labels_x,
        labels_xt,
        edges,
        centers: centers.clone(),
        spread,
        p_prime: 0.0,
    })
}

fn clean_edges(labels_x: &[usize], labels_xt: &[usize]) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for (i, a) in labels_x.iter().enumerate() {
        for (j, b) in labels_xt.iter().enumerate() {
            if a == b {
                edges.push((i, j));
            }
        }
    }
    edges
}

impl LabeledBipartite {
    /// Fresh samples from the same clusters and labels with undistorted
    /// edges, used as a held-out evaluation set.
    pub fn resample(&self, params: &ModelParams, seed: u64) -> Result<LabeledBipartite> {
        let mut rng = seeded_rng(seed);
        draw_labeled(
            params,
            &self.centers,
            self.spread,
            self.labels_x.clone(),
            self.labels_xt.clone(),
            &mut rng,
        )
    }

    /// True when an edge joins two samples of the same cluster.
    pub fn is_intra(&self, (i, j): (usize, usize)) -> bool {
        self.labels_x[i] == self.labels_xt[j]
    }

    /// Writes `x.csv`, `xt.csv`, `edges.csv` (with `is_truth` marking
    /// intra-cluster edges), `labels_left.csv`, `labels_right.csv` and `meta.json`.
    pub fn write_dir(&self, dir: &Path, seed: u64, model_hash: &str) -> Result<()> {
        io::ensure_dir(dir)?;
        io::write_mat_csv(&dir.join("x.csv"), &self.x)?;
        io::write_mat_csv(&dir.join("xt.csv"), &self.xt)?;
        let mut w = csv::Writer::from_path(dir.join("edges.csv"))?;
        w.write_record(["i", "j", "is_truth"])?;
        for &e in &self.edges {
            w.write_record([
                e.0.to_string(),
                e.1.to_string(),
                u8::from(self.is_intra(e)).to_string(),
            ])?;
        }
        w.flush()?;
        io::write_usize_column(&dir.join("labels_left.csv"), "label", &self.labels_x)?;
        io::write_usize_column(&dir.join("labels_right.csv"), "label", &self.labels_xt)?;
        io::write_json(
            &dir.join("meta.json"),
            &serde_json::json!({
                "kind": "labeled",
                "n_left": self.x.rows(),
                "n_right": self.xt.rows(),
                "d1": self.x.cols(),
                "d2": self.xt.cols(),
                "k": self.k,
                "p_prime": self.p_prime,
                "edges": self.edges.len(),
                "seed": seed,
                "model_hash": model_hash,
            }),
        )
    }
}
