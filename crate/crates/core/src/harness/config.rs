//! Experiment and data-generation configuration files.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datagen::{self, ModelParams, NoiseFamily};
use crate::error::{MmclError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Distortion,
    Unpaired,
    Bsgmp,
    Gradcheck,
    SsclCompare,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::Distortion,
        ExperimentKind::Unpaired,
        ExperimentKind::Bsgmp,
        ExperimentKind::Gradcheck,
        ExperimentKind::SsclCompare,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Distortion => "distortion",
            ExperimentKind::Unpaired => "unpaired",
            ExperimentKind::Bsgmp => "bsgmp",
            ExperimentKind::Gradcheck => "gradcheck",
            ExperimentKind::SsclCompare => "sscl-compare",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

fn one() -> f64 {
    1.0
}

/// Spiked-model parameters: Haar factors, latent spectrum `decay^j` and
/// isotropic noise with standard deviation `noise_sd`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub d1: usize,
    pub d2: usize,
    pub r: usize,
    pub noise_sd: f64,
    #[serde(default = "one")]
    pub decay: f64,
    #[serde(default)]
    pub noise_family: NoiseFamily,
}

impl ModelConfig {
    pub fn build(&self, seed: u64) -> Result<ModelParams> {
        Ok(datagen::random_model(
            self.d1,
            self.d2,
            self.r,
            datagen::snr_from_noise_sd(self.noise_sd),
            self.decay,
            seed,
        )?
        .with_noise_family(self.noise_family))
    }

    fn validate(&self, path: &str) -> Result<()> {
        if self.d1 == 0 || self.d2 == 0 {
            return Err(MmclError::config(
                format!("{path}.d1"),
                "dimensions must be positive",
            ));
        }
        if self.r == 0 || self.r > self.d1.min(self.d2) {
            return Err(MmclError::config(
                format!("{path}.r"),
                format!("rank must lie in 1..={}", self.d1.min(self.d2)),
            ));
        }
        if !(self.noise_sd.is_finite() && self.noise_sd >= 0.0) {
            return Err(MmclError::config(
                format!("{path}.noise_sd"),
                "must be finite and nonnegative",
            ));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(MmclError::config(
                format!("{path}.decay"),
                "must lie in (0, 1]",
            ));
        }
        Ok(())
    }
}

/// Sweep axes. Axes irrelevant to an experiment are ignored; an empty
/// `tau` selects the default temperature of the experiment.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepGrid {
    /// Paired sample sizes.
    pub n: Vec<usize>,
    /// Unpaired pool sizes as multiples of `n`.
    pub ratios: Vec<usize>,
    /// Pair distortion rates.
    pub p: Vec<f64>,
    /// Edge flip probabilities of the planted bipartite graph.
    pub p_prime: Vec<f64>,
    /// Partition sizes; `null` trains on the raw graph.
    pub k: Vec<Option<usize>>,
    pub tau: Vec<f64>,
    pub nu: Vec<f64>,
    pub rho: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentOptions {
    /// Nodes per cluster and modality in planted graphs.
    pub n_per_cluster: usize,
    /// Number of planted clusters.
    pub k_true: usize,
    /// k-means restarts.
    pub restarts: usize,
    /// Mask draws of the Monte-Carlo check in `sscl-compare`.
    pub mc_draws: usize,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        ExperimentOptions {
            n_per_cluster: 50,
            k_true: 10,
            restarts: crate::bsgmp::DEFAULT_RESTARTS,
            mc_draws: 2000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub model: ModelConfig,
    #[serde(default)]
    pub grid: SweepGrid,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub options: ExperimentOptions,
}

fn require_nonempty<T>(v: &[T], path: &str) -> Result<()> {
    if v.is_empty() {
        Err(MmclError::config(path, "grid must be nonempty"))
    } else {
        Ok(())
    }
}

fn check_each<T: Copy>(v: &[T], path: &str, ok: impl Fn(T) -> bool, msg: &str) -> Result<()> {
    match v.iter().position(|&x| !ok(x)) {
        Some(i) => Err(MmclError::config(format!("{path}[{i}]"), msg)),
        None => Ok(()),
    }
}

impl ExperimentConfig {
    /// Default sweep of each experiment at desk scale.
    pub fn preset(kind: ExperimentKind) -> Self {
        let seeds: Vec<u64> = (0..20).collect();
        let (model, grid) = match kind {
            ExperimentKind::Distortion => (
                ModelConfig {
                    d1: 20,
                    d2: 20,
                    r: 3,
                    noise_sd: 0.5,
                    decay: 1.0,
                    noise_family: NoiseFamily::Gaussian,
                },
                SweepGrid {
                    n: vec![250, 500, 1000, 2000, 4000],
                    p: vec![0.0, 0.2, 0.6],
                    rho: vec![1.0],
                    ..SweepGrid::default()
                },
            ),
            ExperimentKind::Unpaired => (
                ModelConfig {
                    d1: 40,
                    d2: 39,
                    r: 10,
                    noise_sd: 0.3,
                    decay: 1.0,
                    noise_family: NoiseFamily::Gaussian,
                },
                SweepGrid {
                    n: vec![100, 200, 500],
                    ratios: vec![1, 2, 4, 8],
                    nu: vec![2.0],
                    rho: vec![1.0],
                    ..SweepGrid::default()
                },
            ),
            ExperimentKind::Bsgmp => (
                ModelConfig {
                    d1: 40,
                    d2: 39,
                    r: 10,
                    noise_sd: 0.3,
                    decay: 1.0,
                    noise_family: NoiseFamily::Gaussian,
                },
                SweepGrid {
                    p_prime: vec![0.1, 0.2, 0.3],
                    k: vec![Some(5), Some(7), Some(10), Some(13), Some(15), None],
                    rho: vec![1.0],
                    ..SweepGrid::default()
                },
            ),
            ExperimentKind::Gradcheck => (
                ModelConfig {
                    d1: 5,
                    d2: 4,
                    r: 2,
                    noise_sd: 0.0,
                    decay: 1.0,
                    noise_family: NoiseFamily::Gaussian,
                },
                SweepGrid {
                    n: (3..=8).collect(),
                    tau: vec![1.0],
                    rho: vec![0.5],
                    ..SweepGrid::default()
                },
            ),
            ExperimentKind::SsclCompare => (
                ModelConfig {
                    d1: 60,
                    d2: 60,
                    r: 3,
                    noise_sd: 0.1,
                    decay: 1.0,
                    noise_family: NoiseFamily::Gaussian,
                },
                SweepGrid {
                    n: vec![4000],
                    p: vec![0.2],
                    rho: vec![1.0],
                    ..SweepGrid::default()
                },
            ),
        };
        ExperimentConfig {
            experiment: kind,
            model,
            grid,
            seeds,
            output_dir: None,
            options: ExperimentOptions::default(),
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| {
            MmclError::config(
                format!("line {} column {}", e.line(), e.column()),
                e.to_string(),
            )
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// Serialized form used for hashing: compact JSON in field order.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate("model")?;
        if self.seeds.is_empty() {
            return Err(MmclError::config("seeds", "at least one seed is required"));
        }
        let mut seen = BTreeSet::new();
        for (i, s) in self.seeds.iter().enumerate() {
            if !seen.insert(*s) {
                return Err(MmclError::config(
                    format!("seeds[{i}]"),
                    format!("duplicate seed {s}"),
                ));
            }
        }
        let g = &self.grid;
        let positive = |x: f64| x.is_finite() && x > 0.0;
        require_nonempty(&g.rho, "grid.rho")?;
        check_each(&g.rho, "grid.rho", positive, "must be positive")?;
        check_each(&g.tau, "grid.tau", positive, "must be positive")?;
        check_each(&g.nu, "grid.nu", |x: f64| x.is_finite(), "must be finite")?;
        let rate = |x: f64| (0.0..1.0).contains(&x);
        match self.experiment {
            ExperimentKind::Distortion | ExperimentKind::SsclCompare => {
                require_nonempty(&g.n, "grid.n")?;
                check_each(&g.n, "grid.n", |n| n >= 2, "need at least 2 samples")?;
                require_nonempty(&g.p, "grid.p")?;
                check_each(&g.p, "grid.p", rate, "must lie in [0, 1)")?;
                if self.experiment == ExperimentKind::SsclCompare && self.options.mc_draws == 0 {
                    return Err(MmclError::config("options.mc_draws", "must be positive"));
                }
            }
            ExperimentKind::Unpaired => {
                require_nonempty(&g.n, "grid.n")?;
                check_each(&g.n, "grid.n", |n| n >= 2, "need at least 2 samples")?;
                require_nonempty(&g.ratios, "grid.ratios")?;
                check_each(&g.ratios, "grid.ratios", |m| m >= 1, "must be at least 1")?;
                require_nonempty(&g.nu, "grid.nu")?;
            }
            ExperimentKind::Bsgmp => {
                require_nonempty(&g.p_prime, "grid.p_prime")?;
                check_each(
                    &g.p_prime,
                    "grid.p_prime",
                    |x: f64| (0.0..=1.0).contains(&x),
                    "must lie in [0, 1]",
                )?;
                require_nonempty(&g.k, "grid.k")?;
                check_each(
                    &g.k,
                    "grid.k",
                    |k| k.is_none_or(|k| k >= 2),
                    "must be at least 2 or null",
                )?;
                let o = &self.options;
                if o.k_true < 2 {
                    return Err(MmclError::config("options.k_true", "must be at least 2"));
                }
                if o.n_per_cluster == 0 {
                    return Err(MmclError::config(
                        "options.n_per_cluster",
                        "must be positive",
                    ));
                }
                if o.restarts == 0 {
                    return Err(MmclError::config("options.restarts", "must be positive"));
                }
            }
            ExperimentKind::Gradcheck => {
                require_nonempty(&g.n, "grid.n")?;
                check_each(&g.n, "grid.n", |n| n >= 2, "need at least 2 samples")?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GenKind {
    /// One paired dataset.
    Paired,
    /// A paired set and an unpaired pool from one model, in `paired/` and `unpaired/`.
    Semi,
    /// A planted many-to-many bipartite sample.
    Labeled,
}

fn default_n_per_cluster() -> usize {
    50
}

fn default_k() -> usize {
    10
}

/// Configuration of `mmcl gen`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenConfig {
    pub kind: GenKind,
    pub model: ModelConfig,
    pub model_seed: u64,
    pub seed: u64,
    /// Paired sample size.
    #[serde(default)]
    pub n: usize,
    /// Pair distortion rate.
    #[serde(default)]
    pub p: f64,
    /// Unpaired pool size.
    #[serde(default)]
    pub n_unpaired: usize,
    #[serde(default = "default_n_per_cluster")]
    pub n_per_cluster: usize,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub p_prime: f64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl GenConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: GenConfig = serde_json::from_str(&text).map_err(|e| {
            MmclError::config(
                format!("line {} column {}", e.line(), e.column()),
                e.to_string(),
            )
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate("model")?;
        match self.kind {
            GenKind::Paired | GenKind::Semi => {
                if self.n < 2 {
                    return Err(MmclError::config("n", "need at least 2 samples"));
                }
                if !(0.0..=1.0).contains(&self.p) {
                    return Err(MmclError::config("p", "must lie in [0, 1]"));
                }
                if self.kind == GenKind::Semi && self.n_unpaired == 0 {
                    return Err(MmclError::config("n_unpaired", "must be positive"));
                }
            }
            GenKind::Labeled => {
                if self.k < 2 {
                    return Err(MmclError::config("k", "must be at least 2"));
                }
                if self.n_per_cluster == 0 {
                    return Err(MmclError::config("n_per_cluster", "must be positive"));
                }
                if !(0.0..=1.0).contains(&self.p_prime) {
                    return Err(MmclError::config("p_prime", "must lie in [0, 1]"));
                }
            }
        }
        Ok(())
    }

    /// Writes `model.json` and the generated data into `dir`.
    pub fn generate(&self, dir: &Path) -> Result<()> {
        self.validate()?;
        let model = self.model.build(self.model_seed)?;
        let hash = model.content_hash();
        crate::io::ensure_dir(dir)?;
        crate::io::write_json(&dir.join("model.json"), &model)?;
        match self.kind {
            GenKind::Paired => {
                datagen::sample_paired(&model, self.n, self.p, self.seed)?.write_dir(dir, &hash)
            }
            GenKind::Semi => {
                datagen::sample_paired(&model, self.n, self.p, self.seed)?
                    .write_dir(&dir.join("paired"), &hash)?;
                let pool_seed = super::derive_seed(self.seed, 1);
                datagen::sample_unpaired(&model, self.n_unpaired, pool_seed)?
                    .write_dir(&dir.join("unpaired"), &hash)
            }
            GenKind::Labeled => datagen::sample_labeled_bipartite(
                &model,
                self.n_per_cluster,
                self.k,
                self.p_prime,
                self.seed,
            )?
            .write_dir(dir, self.seed, &hash),
        }
    }
}
