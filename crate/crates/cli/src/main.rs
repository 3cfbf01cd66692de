//! `mmcl`: synthetic data generation, model fitting, bipartite graph
//! cleaning and experiment sweeps.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mmcl_core::bsgmp::{self, BipartiteGraph};
use mmcl_core::harness::{self, ExperimentConfig, ExperimentKind, GenConfig};
use mmcl_core::linalg;
use mmcl_core::losses::LossSpec;
use mmcl_core::solvers::{self, EdgeEstimate, FitResult, SsclMode};
use mmcl_core::{MmclError, ModelParams, PairedDataset, Result};

#[derive(Parser, Debug)]
#[command(
    name = "mmcl",
    version,
    about = "Linear multimodal contrastive learning toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset from a JSON config.
    Gen {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides `output_dir` in the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit encoders on a generated dataset.
    Fit(FitArgs),
    /// Partition a bipartite graph and drop inter-cluster edges.
    Bsgmp {
        /// CSV of `i,j[,weight]` records.
        #[arg(long)]
        edges: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = bsgmp::DEFAULT_RESTARTS)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        n_left: Option<usize>,
        #[arg(long)]
        n_right: Option<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run an experiment sweep.
    Exp {
        #[arg(value_enum)]
        experiment: ExpName,
        /// Sweep config; the built-in preset is used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ExpName {
    Distortion,
    Unpaired,
    Bsgmp,
    Gradcheck,
    SsclCompare,
}

impl ExpName {
    fn kind(self) -> ExperimentKind {
        match self {
            ExpName::Distortion => ExperimentKind::Distortion,
            ExpName::Unpaired => ExperimentKind::Unpaired,
            ExpName::Bsgmp => ExperimentKind::Bsgmp,
            ExpName::Gradcheck => ExperimentKind::Gradcheck,
            ExpName::SsclCompare => ExperimentKind::SsclCompare,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FitMethod {
    /// Closed-form minimizer of the linear loss.
    Linear,
    /// Gradient descent on a loss from the family.
    Gd,
    /// One weight evaluation at the linear solution followed by an SVD step.
    Approx,
    /// Semi-supervised fit from `paired/` and `unpaired/` subdirectories.
    Semi,
    /// Random-masking single-modality baseline on `x`.
    Sscl,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LossName {
    Linear,
    Clip,
    Infonce,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[arg(value_enum)]
    method: FitMethod,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    r: usize,
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    /// Loss used by `gd`.
    #[arg(long, value_enum, default_value = "linear")]
    loss: LossName,
    /// Temperature; `semi` defaults to `½ sqrt(r / ln N)`.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    nu: f64,
    /// Overrides the diagonal weight of the chosen loss.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, default_value_t = 5000)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Monte-Carlo mask draws for `sscl` (expected mode when omitted).
    #[arg(long)]
    draws: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn exit_code(e: &MmclError) -> u8 {
    if e.is_numerical() {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Gen { config, out } => gen(&config, out),
        Command::Fit(args) => fit(&args),
        Command::Bsgmp {
            edges,
            k,
            restarts,
            seed,
            n_left,
            n_right,
            out,
        } => run_bsgmp(&edges, k, restarts, seed, n_left, n_right, &out),
        Command::Exp {
            experiment,
            config,
            out,
        } => exp(experiment.kind(), config.as_deref(), out.as_deref()),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn gen(config: &Path, out: Option<PathBuf>) -> Result<()> {
    let cfg = GenConfig::from_path(config)?;
    let dir = out
        .or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| MmclError::Config {
            path: "output_dir".into(),
            msg: "no output directory given".into(),
        })?;
    cfg.generate(&dir)?;
    println!("wrote {}", dir.display());
    Ok(())
}

fn loss_spec(args: &FitArgs, default_tau: f64) -> LossSpec {
    let tau = args.tau.unwrap_or(default_tau);
    let mut spec = match args.loss {
        LossName::Linear => LossSpec::linear(args.rho),
        LossName::Clip => LossSpec::clip(tau, args.nu, args.rho),
        LossName::Infonce => LossSpec::infonce(tau, args.nu, args.rho),
    };
    if let Some(eps) = args.epsilon {
        spec.epsilon = eps;
    }
    spec
}

fn fit(args: &FitArgs) -> Result<()> {
    let mut truth_edges = None;
    let result = match args.method {
        FitMethod::Linear => solvers::fit_linear_closed_form(
            &PairedDataset::read_dir(&args.data)?,
            args.r,
            args.rho,
        )?,
        FitMethod::Gd => {
            let data = PairedDataset::read_dir(&args.data)?;
            let spec = loss_spec(args, 1.0);
            solvers::fit_gradient_descent(
                &spec,
                &data,
                args.r,
                args.lr,
                args.max_iter,
                args.tol,
                args.seed,
            )?
        }
        FitMethod::Approx => {
            let data = PairedDataset::read_dir(&args.data)?;
            let mut spec = LossSpec::infonce(args.tau.unwrap_or(1.0), args.nu, args.rho);
            if let Some(eps) = args.epsilon {
                spec.epsilon = eps;
            }
            let init = solvers::fit_linear_closed_form(&data, args.r, args.rho)?.enc;
            solvers::fit_approx_infonce(&data, args.r, &spec, &init)?
        }
        FitMethod::Semi => {
            let paired = PairedDataset::read_dir(&args.data.join("paired"))?;
            let pool = PairedDataset::read_dir(&args.data.join("unpaired"))?;
            let tau = args
                .tau
                .unwrap_or_else(|| harness::default_tau(args.r, pool.n()));
            let spec = LossSpec::clip(tau, args.nu, args.rho);
            truth_edges = Some(pool.truth_edges.clone());
            solvers::fit_semisupervised(&paired, &pool, args.r, &spec)?
        }
        FitMethod::Sscl => {
            let data = PairedDataset::read_dir(&args.data)?;
            let mode = match args.draws {
                Some(k_draws) => SsclMode::Sampled {
                    k_draws,
                    seed: args.seed,
                },
                None => SsclMode::Expected,
            };
            solvers::fit_sscl_baseline(&data.x, args.r, args.rho, mode)?
        }
    };
    result.write_dir(&args.out)?;
    let model = read_model(&args.data)?;
    write_fit_metrics(
        &args.out.join("metrics.csv"),
        &result,
        model.as_ref(),
        result.edges.as_ref().zip(truth_edges.as_deref()),
    )?;
    println!(
        "{}: rank {} final loss {} after {} iterations; wrote {}",
        result.method,
        result.rank(),
        result.final_loss,
        result.iterations,
        args.out.display()
    );
    Ok(())
}

fn read_model(data: &Path) -> Result<Option<ModelParams>> {
    let path = data.join("model.json");
    if !path.exists() {
        return Ok(None);
    }
    Ok(Some(serde_json::from_str(&std::fs::read_to_string(path)?)?))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

fn write_fit_metrics(
    path: &Path,
    fit: &FitResult,
    model: Option<&ModelParams>,
    edges: Option<(&EdgeEstimate, &[(usize, usize)])>,
) -> Result<()> {
    let (s1, s2) = match model {
        Some(m) if m.d1 == fit.enc.g1.cols() => (
            Some(linalg::sin_theta(&fit.subspace_g1()?, &m.u1_star)?),
            (m.d2 == fit.enc.g2.cols())
                .then(|| {
                    fit.subspace_g2()
                        .and_then(|s| linalg::sin_theta(&s, &m.u2_star))
                })
                .transpose()?,
        ),
        _ => (None, None),
    };
    let (prec, rec) = match edges {
        Some((est, truth)) => {
            let (p, r) = harness::edge_metrics(est, truth);
            (Some(p), Some(r))
        }
        None => (None, None),
    };
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "method",
        "rank",
        "iterations",
        "final_loss",
        "sin_theta_g1",
        "sin_theta_g2",
        "edge_precision",
        "edge_recall",
    ])?;
    w.write_record([
        fit.method.clone(),
        fit.rank().to_string(),
        fit.iterations.to_string(),
        format!("{:?}", fit.final_loss),
        fmt_opt(s1),
        fmt_opt(s2),
        fmt_opt(prec),
        fmt_opt(rec),
    ])?;
    w.flush()?;
    Ok(())
}

fn run_bsgmp(
    edges: &Path,
    k: usize,
    restarts: usize,
    seed: u64,
    n_left: Option<usize>,
    n_right: Option<usize>,
    out: &Path,
) -> Result<()> {
    let graph = BipartiteGraph::read_csv(edges, n_left, n_right)?;
    let part = bsgmp::partition(&graph, k, seed, restarts)?;
    part.write_dir(out, seed, restarts)?;
    println!(
        "kept {} of {} edges in {} clusters; wrote {}",
        part.kept_edges.len(),
        graph.edges.len(),
        k,
        out.display()
    );
    Ok(())
}

fn exp(kind: ExperimentKind, config: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let cfg = match config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => ExperimentConfig::preset(kind),
    };
    if cfg.experiment != kind {
        return Err(MmclError::Config {
            path: "experiment".into(),
            msg: format!(
                "config describes `{}` but `{}` was requested",
                cfg.experiment.name(),
                kind.name()
            ),
        });
    }
    let dir = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let rows = harness::run_experiment(&cfg, Some(&dir))?;
    let failed = rows.iter().filter(|r| !r.is_ok()).count();
    println!(
        "{}: {} rows ({} failed); wrote {}",
        kind.name(),
        rows.len(),
        failed,
        dir.display()
    );
    Ok(())
}
