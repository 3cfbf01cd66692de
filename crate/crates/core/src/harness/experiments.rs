//! Sweep execution: trial enumeration, per-trial evaluation and reporting.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, ExperimentKind};
use super::metrics;
use crate::bsgmp::{self, BipartiteGraph};
use crate::datagen::{self, seeded_rng, ModelParams, PairedDataset};
use crate::error::{MmclError, Result};
use crate::io;
use crate::linalg::{self, Mat};
use crate::losses::{self, EncoderPair, LossSpec};
use crate::solvers::{self, SsclMode};

/// Environment variable capping the worker pool.
pub const THREADS_ENV: &str = "MMCL_THREADS";

/// One line of `results.csv`. Columns that do not apply to an experiment
/// are left empty; `wall_time` is always last.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricRow {
    pub experiment: String,
    pub trial: usize,
    pub method: String,
    pub seed: u64,
    pub n: Option<usize>,
    pub n_unpaired: Option<usize>,
    pub p: Option<f64>,
    pub p_prime: Option<f64>,
    pub k: Option<usize>,
    pub spec: Option<String>,
    pub tau: Option<f64>,
    pub nu: Option<f64>,
    pub rho: Option<f64>,
    pub sin_theta_g1: Option<f64>,
    pub sin_theta_g2: Option<f64>,
    pub edge_precision: Option<f64>,
    pub edge_recall: Option<f64>,
    pub downstream_accuracy: Option<f64>,
    /// Reference bound with its constant set to one (shape only).
    pub bound_value: Option<f64>,
    pub residual: Option<f64>,
    pub status: String,
    pub wall_time: f64,
}

impl MetricRow {
    fn blank(experiment: ExperimentKind, trial: usize, method: &str, seed: u64) -> Self {
        MetricRow {
            experiment: experiment.name().to_string(),
            trial,
            method: method.to_string(),
            seed,
            n: None,
            n_unpaired: None,
            p: None,
            p_prime: None,
            k: None,
            spec: None,
            tau: None,
            nu: None,
            rho: None,
            sin_theta_g1: None,
            sin_theta_g2: None,
            edge_precision: None,
            edge_recall: None,
            downstream_accuracy: None,
            bound_value: None,
            residual: None,
            status: "ok".to_string(),
            wall_time: 0.0,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok" || self.status == "degenerate"
    }

    fn metrics(&self) -> [Option<f64>; 7] {
        [
            self.sin_theta_g1,
            self.sin_theta_g2,
            self.edge_precision,
            self.edge_recall,
            self.downstream_accuracy,
            self.bound_value,
            self.residual,
        ]
    }
}

const METRIC_NAMES: [&str; 7] = [
    "sin_theta_g1",
    "sin_theta_g2",
    "edge_precision",
    "edge_recall",
    "downstream_accuracy",
    "bound_value",
    "residual",
];

/// Independent stream seed derived from a trial seed (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Temperature schedule `τ = ½ sqrt(r / ln N)` used when no `tau` grid is given.
pub fn default_tau(r: usize, n_unpaired: usize) -> f64 {
    0.5 * (r as f64 / (n_unpaired.max(3) as f64).ln()).sqrt()
}

#[derive(Clone, Debug)]
enum Trial {
    Distortion {
        n: usize,
        p: f64,
        rho: f64,
        seed: u64,
    },
    PairedOnly {
        n: usize,
        rho: f64,
        seed: u64,
    },
    Semi {
        n: usize,
        ratio: usize,
        tau: Option<f64>,
        nu: f64,
        rho: f64,
        seed: u64,
    },
    Bsgmp {
        p_prime: f64,
        k: Option<usize>,
        rho: f64,
        seed: u64,
    },
    Gradcheck {
        spec: GradSpec,
        n: usize,
        tau: f64,
        rho: f64,
        seed: u64,
    },
    Sscl {
        n: usize,
        p: f64,
        rho: f64,
        seed: u64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum GradSpec {
    Linear,
    Clip,
    InfoNce,
    Nu2,
}

impl GradSpec {
    const ALL: [GradSpec; 4] = [
        GradSpec::Linear,
        GradSpec::Clip,
        GradSpec::InfoNce,
        GradSpec::Nu2,
    ];

    fn name(self) -> &'static str {
        match self {
            GradSpec::Linear => "linear",
            GradSpec::Clip => "clip",
            GradSpec::InfoNce => "infonce",
            GradSpec::Nu2 => "clip-nu2",
        }
    }

    fn build(self, tau: f64, rho: f64) -> LossSpec {
        match self {
            GradSpec::Linear => LossSpec::linear(rho),
            GradSpec::Clip => LossSpec::clip(tau, 1.0, rho),
            GradSpec::InfoNce => LossSpec::infonce(tau, 1.0, rho),
            GradSpec::Nu2 => LossSpec::clip(tau, 2.0, rho),
        }
    }
}

fn enumerate_trials(cfg: &ExperimentConfig) -> Vec<Trial> {
    let g = &cfg.grid;
    let mut out = Vec::new();
    match cfg.experiment {
        ExperimentKind::Distortion => {
            for &n in &g.n {
                for &p in &g.p {
                    for &rho in &g.rho {
                        for &seed in &cfg.seeds {
                            out.push(Trial::Distortion { n, p, rho, seed });
                        }
                    }
                }
            }
        }
        ExperimentKind::Unpaired => {
            let taus: Vec<Option<f64>> = if g.tau.is_empty() {
                vec![None]
            } else {
                g.tau.iter().map(|&t| Some(t)).collect()
            };
            for &n in &g.n {
                for &rho in &g.rho {
                    for &seed in &cfg.seeds {
                        out.push(Trial::PairedOnly { n, rho, seed });
                    }
                    for &ratio in &g.ratios {
                        for &tau in &taus {
                            for &nu in &g.nu {
                                for &seed in &cfg.seeds {
                                    out.push(Trial::Semi {
                                        n,
                                        ratio,
                                        tau,
                                        nu,
                                        rho,
                                        seed,
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        ExperimentKind::Bsgmp => {
            for &p_prime in &g.p_prime {
                for &k in &g.k {
                    for &rho in &g.rho {
                        for &seed in &cfg.seeds {
                            out.push(Trial::Bsgmp {
                                p_prime,
                                k,
                                rho,
                                seed,
                            });
                        }
                    }
                }
            }
        }
        ExperimentKind::Gradcheck => {
            let taus = if g.tau.is_empty() {
                vec![1.0]
            } else {
                g.tau.clone()
            };
            for spec in GradSpec::ALL {
                for &n in &g.n {
                    for &tau in &taus {
                        for &rho in &g.rho {
                            for &seed in &cfg.seeds {
                                out.push(Trial::Gradcheck {
                                    spec,
                                    n,
                                    tau,
                                    rho,
                                    seed,
                                });
                            }
                        }
                    }
                }
            }
        }
        ExperimentKind::SsclCompare => {
            for &n in &g.n {
                for &p in &g.p {
                    for &rho in &g.rho {
                        for &seed in &cfg.seeds {
                            out.push(Trial::Sscl { n, p, rho, seed });
                        }
                    }
                }
            }
        }
    }
    out
}

fn model_for(cfg: &ExperimentConfig, seed: u64) -> Result<ModelParams> {
    cfg.model.build(derive_seed(seed, 0))
}

fn sin_thetas(fit: &solvers::FitResult, model: &ModelParams) -> Result<(f64, f64)> {
    Ok((
        linalg::sin_theta(&fit.subspace_g1()?, &model.u1_star)?,
        linalg::sin_theta(&fit.subspace_g2()?, &model.u2_star)?,
    ))
}

fn effective_rank_or_zero(m: &Mat) -> Result<f64> {
    match linalg::effective_rank(m) {
        Ok(v) => Ok(v),
        Err(MmclError::DivideByZero(_)) => Ok(0.0),
        Err(e) => Err(e),
    }
}

fn bound_for(model: &ModelParams, n: usize, eta: f64) -> Result<f64> {
    Ok(metrics::theory_bound(
        n,
        model.r,
        effective_rank_or_zero(&model.sigma_xi)?,
        effective_rank_or_zero(&model.sigma_xit)?,
        model.d1,
        model.d2,
        eta,
    ))
}

fn status_of(degenerate: bool) -> String {
    if degenerate { "degenerate" } else { "ok" }.to_string()
}

fn run_trial(cfg: &ExperimentConfig, index: usize, trial: &Trial) -> Vec<MetricRow> {
    let kind = cfg.experiment;
    let start = Instant::now();
    let (method, seed) = match trial {
        Trial::Distortion { seed, .. } => ("linear", *seed),
        Trial::PairedOnly { seed, .. } => ("paired-only", *seed),
        Trial::Semi { seed, .. } => ("semi", *seed),
        Trial::Bsgmp { k, seed, .. } => (if k.is_some() { "bsgmp" } else { "none" }, *seed),
        Trial::Gradcheck { seed, .. } => ("identity", *seed),
        Trial::Sscl { seed, .. } => ("mmcl", *seed),
    };
    let mut base = MetricRow::blank(kind, index, method, seed);
    fill_parameters(&mut base, cfg, trial);
    let mut rows = match evaluate(cfg, trial, &base) {
        Ok(rows) => rows,
        Err(e) => {
            let mut row = base;
            row.status = format!("failed: {e}");
            vec![row]
        }
    };
    let elapsed = start.elapsed().as_secs_f64();
    for row in &mut rows {
        row.wall_time = elapsed;
    }
    rows
}

fn fill_parameters(row: &mut MetricRow, cfg: &ExperimentConfig, trial: &Trial) {
    match *trial {
        Trial::Distortion { n, p, rho, .. } | Trial::Sscl { n, p, rho, .. } => {
            row.n = Some(n);
            row.p = Some(p);
            row.rho = Some(rho);
        }
        Trial::PairedOnly { n, rho, .. } => {
            row.n = Some(n);
            row.p = Some(0.0);
            row.rho = Some(rho);
        }
        Trial::Semi {
            n,
            ratio,
            tau,
            nu,
            rho,
            ..
        } => {
            let big_n = n * ratio;
            row.n = Some(n);
            row.n_unpaired = Some(big_n);
            row.p = Some(0.0);
            row.tau = Some(tau.unwrap_or_else(|| default_tau(cfg.model.r, big_n)));
            row.nu = Some(nu);
            row.rho = Some(rho);
        }
        Trial::Bsgmp {
            p_prime, k, rho, ..
        } => {
            row.n = Some(cfg.options.n_per_cluster * cfg.options.k_true);
            row.p_prime = Some(p_prime);
            row.k = k;
            row.rho = Some(rho);
        }
        Trial::Gradcheck {
            spec, n, tau, rho, ..
        } => {
            row.n = Some(n);
            row.spec = Some(spec.name().to_string());
            let s = spec.build(tau, rho);
            if spec != GradSpec::Linear {
                row.tau = Some(s.tau);
            }
            row.nu = Some(s.nu);
            row.rho = Some(rho);
        }
    }
}

fn evaluate(cfg: &ExperimentConfig, trial: &Trial, base: &MetricRow) -> Result<Vec<MetricRow>> {
    let r = cfg.model.r;
    match *trial {
        Trial::Distortion { n, p, rho, seed } => {
            let model = model_for(cfg, seed)?;
            let data = datagen::sample_paired(&model, n, p, derive_seed(seed, 1))?;
            let fit = solvers::fit_linear_closed_form(&data, r, rho)?;
            let (s1, s2) = sin_thetas(&fit, &model)?;
            let mut row = base.clone();
            row.sin_theta_g1 = Some(s1);
            row.sin_theta_g2 = Some(s2);
            row.bound_value = Some(bound_for(&model, n, 1.0 - p)?);
            row.status = status_of(fit.flags.degenerate);
            Ok(vec![row])
        }
        Trial::PairedOnly { n, rho, seed } => {
            let model = model_for(cfg, seed)?;
            let paired = datagen::sample_paired(&model, n, 0.0, derive_seed(seed, 1))?;
            let fit = solvers::fit_linear_closed_form(&paired, r, rho)?;
            let (s1, s2) = sin_thetas(&fit, &model)?;
            let mut row = base.clone();
            row.sin_theta_g1 = Some(s1);
            row.sin_theta_g2 = Some(s2);
            row.bound_value = Some(bound_for(&model, n, 1.0)?);
            row.status = status_of(fit.flags.degenerate);
            Ok(vec![row])
        }
        Trial::Semi {
            n,
            ratio,
            nu,
            rho,
            seed,
            ..
        } => {
            let model = model_for(cfg, seed)?;
            let paired = datagen::sample_paired(&model, n, 0.0, derive_seed(seed, 1))?;
            let pool = datagen::sample_unpaired(&model, n * ratio, derive_seed(seed, 2))?;
            let tau = base.tau.expect("tau filled");
            let spec = LossSpec::clip(tau, nu, rho);
            let fit = solvers::fit_semisupervised(&paired, &pool, r, &spec)?;
            let (s1, s2) = sin_thetas(&fit, &model)?;
            let mut row = base.clone();
            row.sin_theta_g1 = Some(s1);
            row.sin_theta_g2 = Some(s2);
            if let Some(est) = &fit.edges {
                let (prec, rec) = metrics::edge_metrics(est, &pool.truth_edges);
                row.edge_precision = Some(prec);
                row.edge_recall = Some(rec);
            }
            row.bound_value = Some(bound_for(&model, n, 1.0)?);
            row.status = status_of(fit.flags.degenerate);
            Ok(vec![row])
        }
        Trial::Bsgmp {
            p_prime,
            k,
            rho,
            seed,
        } => {
            let o = &cfg.options;
            let model = model_for(cfg, seed)?;
            let graph = datagen::sample_labeled_bipartite(
                &model,
                o.n_per_cluster,
                o.k_true,
                p_prime,
                derive_seed(seed, 1),
            )?;
            let test = graph.resample(&model, derive_seed(seed, 2))?;
            let mut degenerate = false;
            let edges = match k {
                Some(k) => {
                    let g = BipartiteGraph::new(
                        graph.x.rows(),
                        graph.xt.rows(),
                        graph.edges.clone(),
                        None,
                    )?;
                    let part = bsgmp::partition(&g, k, derive_seed(seed, 3), o.restarts)?;
                    degenerate = part.degenerate;
                    part.kept_edges
                }
                None => graph.edges.clone(),
            };
            let intra_total = graph.edges.iter().filter(|&&e| graph.is_intra(e)).count();
            let intra_kept = edges.iter().filter(|&&e| graph.is_intra(e)).count();
            let fit = solvers::fit_many_to_many(
                &graph.x,
                &graph.xt,
                &edges,
                r,
                rho,
                derive_seed(seed, 4),
            )?;
            let acc = metrics::downstream_accuracy(&fit.enc, &test)?;
            let (s1, s2) = sin_thetas(&fit, &model)?;
            let mut row = base.clone();
            row.sin_theta_g1 = Some(s1);
            row.sin_theta_g2 = Some(s2);
            row.downstream_accuracy = Some(acc.value);
            row.edge_precision = Some(if edges.is_empty() {
                0.0
            } else {
                intra_kept as f64 / edges.len() as f64
            });
            row.edge_recall = Some(if intra_total == 0 {
                0.0
            } else {
                intra_kept as f64 / intra_total as f64
            });
            row.status = status_of(degenerate || fit.flags.degenerate || acc.degenerate);
            Ok(vec![row])
        }
        Trial::Gradcheck {
            spec,
            n,
            tau,
            rho,
            seed,
        } => {
            let spec = spec.build(tau, rho);
            let (enc, data) =
                random_instance(cfg.model.d1, cfg.model.d2, r, n, derive_seed(seed, 5))?;
            let mut identity = base.clone();
            identity.residual = Some(identity_residual(&spec, &enc, &data)?);
            let mut fd = base.clone();
            fd.method = "finite-difference".to_string();
            fd.residual = Some(finite_difference_residual(&spec, &enc, &data)?);
            Ok(vec![identity, fd])
        }
        Trial::Sscl { n, p, rho, seed } => {
            let model = model_for(cfg, seed)?;
            let data = datagen::sample_paired(&model, n, p, derive_seed(seed, 1))?;
            let mmcl = solvers::fit_linear_closed_form(&data, r, rho)?;
            let (s1, s2) = sin_thetas(&mmcl, &model)?;
            let mut mm = base.clone();
            mm.sin_theta_g1 = Some(s1);
            mm.sin_theta_g2 = Some(s2);
            mm.status = status_of(mmcl.flags.degenerate);

            let sscl = solvers::fit_sscl_baseline(&data.x, r, rho, SsclMode::Expected)?;
            let mut ss = base.clone();
            ss.method = "sscl".to_string();
            ss.sin_theta_g1 = Some(linalg::sin_theta(&sscl.subspace_g1()?, &model.u1_star)?);
            ss.status = status_of(sscl.flags.degenerate);

            let expected = solvers::masked_cross_covariance_expected(&data.x)?;
            let sampled = solvers::masked_cross_covariance_sampled(
                &data.x,
                cfg.options.mc_draws,
                derive_seed(seed, 6),
            )?;
            let mut mc = base.clone();
            mc.method = "sscl-mc".to_string();
            mc.residual =
                Some(linalg::op_norm(&sampled.sub(&expected))? / linalg::op_norm(&expected)?);
            Ok(vec![mm, ss, mc])
        }
    }
}

/// Gaussian samples and encoders scaled so similarities are of order one.
fn random_instance(
    d1: usize,
    d2: usize,
    r: usize,
    n: usize,
    seed: u64,
) -> Result<(EncoderPair, PairedDataset)> {
    let mut rng = seeded_rng(seed);
    let mut draw = |rows: usize, cols: usize, scale: f64| {
        Mat::from_fn(rows, cols, |_, _| {
            scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
        })
    };
    let x = draw(n, d1, 1.0);
    let xt = draw(n, d2, 1.0);
    let g1 = draw(r, d1, 1.0 / (d1 as f64).sqrt());
    let g2 = draw(r, d2, 1.0 / (d2 as f64).sqrt());
    Ok((
        EncoderPair::new(g1, g2)?,
        PairedDataset::from_samples(x, xt)?,
    ))
}

/// Relative mismatch between the loss gradient and the gradient of
/// `−tr(G1 S(β) G2ᵀ) + R(G1ᵀG2)` with `β` frozen at the current encoders.
pub fn identity_residual(spec: &LossSpec, enc: &EncoderPair, data: &PairedDataset) -> Result<f64> {
    let (d1, d2) = losses::loss_gradient(spec, enc, data)?;
    let sims = losses::similarity_matrix(enc, &data.x, &data.xt)?;
    let weights = losses::compute_weights(spec, &sims)?;
    let s = losses::contrastive_cross_covariance(&weights, &data.x, &data.xt, spec.cn)?;
    let (g1, g2) = (&enc.g1, &enc.g2);
    let b1 = g2
        .matmul_t(&s)
        .scale(-1.0)
        .add(&g2.matmul_t(g2).matmul(g1).scale(spec.rho));
    let b2 = g1
        .matmul(&s)
        .scale(-1.0)
        .add(&g1.matmul_t(g1).matmul(g2).scale(spec.rho));
    Ok(relative_gap(&d1, &b1).max(relative_gap(&d2, &b2)))
}

fn relative_gap(reference: &Mat, other: &Mat) -> f64 {
    reference.sub(other).frobenius_norm() / reference.frobenius_norm().max(f64::MIN_POSITIVE)
}

/// Relative mismatch between the analytic gradient and central differences.
pub fn finite_difference_residual(
    spec: &LossSpec,
    enc: &EncoderPair,
    data: &PairedDataset,
) -> Result<f64> {
    const H: f64 = 1e-5;
    let (a1, a2) = losses::loss_gradient(spec, enc, data)?;
    let mut fd = [
        Mat::zeros(a1.rows(), a1.cols()),
        Mat::zeros(a2.rows(), a2.cols()),
    ];
    for (side, out) in fd.iter_mut().enumerate() {
        for idx in 0..out.as_slice().len() {
            let mut plus = enc.clone();
            let mut minus = enc.clone();
            let (p, m) = if side == 0 {
                (&mut plus.g1, &mut minus.g1)
            } else {
                (&mut plus.g2, &mut minus.g2)
            };
            p.as_mut_slice()[idx] += H;
            m.as_mut_slice()[idx] -= H;
            let diff =
                losses::loss_value(spec, &plus, data)? - losses::loss_value(spec, &minus, data)?;
            out.as_mut_slice()[idx] = diff / (2.0 * H);
        }
    }
    Ok(relative_gap(&a1, &fd[0]).max(relative_gap(&a2, &fd[1])))
}

fn worker_count() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&t| t > 0)
}

/// Runs every trial of the sweep; rows come back in sweep order regardless
/// of the number of workers.
pub fn run_trials(cfg: &ExperimentConfig) -> Result<Vec<MetricRow>> {
    cfg.validate()?;
    let trials = enumerate_trials(cfg);
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = worker_count() {
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| MmclError::InvalidInput(format!("worker pool: {e}")))?;
    let nested: Vec<Vec<MetricRow>> = pool.install(|| {
        trials
            .par_iter()
            .enumerate()
            .map(|(i, t)| run_trial(cfg, i, t))
            .collect()
    });
    Ok(nested.into_iter().flatten().collect())
}

/// Runs the sweep and writes `results.csv`, `summary.csv` and
/// `manifest.json` into `out` (or the configured output directory).
pub fn run_experiment(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<Vec<MetricRow>> {
    let dir = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| MmclError::config("output_dir", "no output directory given"))?;
    let rows = run_trials(cfg)?;
    io::ensure_dir(&dir)?;
    write_results(&dir.join("results.csv"), &rows)?;
    write_summary(&dir.join("summary.csv"), &rows)?;
    let manifest = Manifest {
        experiment: cfg.experiment.name().to_string(),
        library_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: io::sha256_hex(cfg.canonical_json().as_bytes()),
        input_hash: io::blob_hash(cfg.canonical_json().as_bytes()),
        results_hash: io::sha256_hex(results_without_timing(&rows)?.as_bytes()),
        trials: rows.iter().map(|r| r.trial).max().map_or(0, |t| t + 1),
        rows: rows.len(),
        failed_rows: rows.iter().filter(|r| !r.is_ok()).count(),
        columns: Vec::new(),
    };
    io::write_json(&dir.join("manifest.json"), &manifest.with_columns())?;
    Ok(rows)
}

#[derive(Serialize)]
struct Manifest {
    experiment: String,
    library_version: String,
    /// SHA-256 of the canonical configuration.
    config_hash: String,
    /// Git-style blob hash of the canonical configuration.
    input_hash: String,
    /// SHA-256 of `results.csv` with the `wall_time` column removed.
    results_hash: String,
    trials: usize,
    rows: usize,
    failed_rows: usize,
    columns: Vec<&'static str>,
}

impl Manifest {
    fn with_columns(mut self) -> Self {
        self.columns = RESULT_COLUMNS.to_vec();
        self
    }
}

/// Column order of `results.csv`.
pub const RESULT_COLUMNS: [&str; 22] = [
    "experiment",
    "trial",
    "method",
    "seed",
    "n",
    "n_unpaired",
    "p",
    "p_prime",
    "k",
    "spec",
    "tau",
    "nu",
    "rho",
    "sin_theta_g1",
    "sin_theta_g2",
    "edge_precision",
    "edge_recall",
    "downstream_accuracy",
    "bound_value",
    "residual",
    "status",
    "wall_time",
];

fn write_results(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record(RESULT_COLUMNS)?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn results_without_timing(rows: &[MetricRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        let mut r = row.clone();
        r.wall_time = 0.0;
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| MmclError::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn fmt_opt<T: std::fmt::Debug>(v: Option<T>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

fn fmt_f(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:?}")
    }
}

/// Median and interquartile range of every metric over seeds, grouped by
/// method and parameter values in order of first appearance.
fn write_summary(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let mut groups: BTreeMap<usize, (Vec<String>, Vec<&MetricRow>)> = BTreeMap::new();
    let mut index: BTreeMap<Vec<String>, usize> = BTreeMap::new();
    for row in rows {
        let key = summary_key(row);
        let next = index.len();
        let id = *index.entry(key.clone()).or_insert(next);
        groups
            .entry(id)
            .or_insert_with(|| (key, Vec::new()))
            .1
            .push(row);
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = SUMMARY_KEYS.iter().map(|s| s.to_string()).collect();
    header.push("trials".into());
    header.push("failed".into());
    for m in METRIC_NAMES {
        for suffix in ["median", "q1", "q3"] {
            header.push(format!("{m}_{suffix}"));
        }
    }
    w.write_record(&header)?;
    for (key, members) in groups.values() {
        let mut record = key.clone();
        let ok: Vec<&&MetricRow> = members.iter().filter(|r| r.is_ok()).collect();
        record.push(members.len().to_string());
        record.push((members.len() - ok.len()).to_string());
        for m in 0..METRIC_NAMES.len() {
            let vals: Vec<f64> = ok.iter().filter_map(|r| r.metrics()[m]).collect();
            record.push(fmt_f(metrics::median(&vals)));
            record.push(fmt_f(metrics::quantile(&vals, 0.25)));
            record.push(fmt_f(metrics::quantile(&vals, 0.75)));
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

const SUMMARY_KEYS: [&str; 11] = [
    "experiment",
    "method",
    "n",
    "n_unpaired",
    "p",
    "p_prime",
    "k",
    "spec",
    "tau",
    "nu",
    "rho",
];

fn summary_key(r: &MetricRow) -> Vec<String> {
    vec![
        r.experiment.clone(),
        r.method.clone(),
        fmt_opt(r.n),
        fmt_opt(r.n_unpaired),
        fmt_opt(r.p),
        fmt_opt(r.p_prime),
        fmt_opt(r.k),
        r.spec.clone().unwrap_or_default(),
        fmt_opt(r.tau),
        fmt_opt(r.nu),
        fmt_opt(r.rho),
    ]
}

/// Rows matching `method` grouped by a key, with the median of a metric per group.
pub fn median_by<K: Ord>(
    rows: &[MetricRow],
    method: &str,
    key: impl Fn(&MetricRow) -> K,
    metric: impl Fn(&MetricRow) -> Option<f64>,
) -> BTreeMap<K, f64> {
    let mut acc: BTreeMap<K, Vec<f64>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.method == method && r.is_ok()) {
        if let Some(v) = metric(r) {
            acc.entry(key(r)).or_default().push(v);
        }
    }
    acc.into_iter()
        .map(|(k, v)| (k, metrics::median(&v)))
        .collect()
}
