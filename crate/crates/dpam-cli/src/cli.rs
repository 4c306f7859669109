//! Argument definitions and the four subcommand implementations.

use crate::config::{parse_lam_flag, ExperimentConfig};
use crate::data::{
    centered_empirical_norm, ingest_csv, read_features_csv, split_indices, take_rows,
    write_dataset_csv, IngestOptions,
};
use crate::experiment::{
    misclassification, mse, run_experiment, validation_metric, write_trace_csv, ExperimentReport,
};
use anyhow::{bail, Context, Result};
use clap::{ArgAction, Args, Parser, Subcommand};
use dpam::single_block::StepSizes;
use dpam::{
    fit_linear, fit_logistic, gen_logistic, gen_phase_shift, gen_regression, predict, DpamModel,
    ModelFamily, SolverKind, SyntheticFamily, SyntheticSpec, TrainConfig,
};
use std::path::PathBuf;
use std::str::FromStr;

#[derive(Parser)]
#[command(
    name = "dpam",
    version,
    about = "Sparse additive models with interaction selection: generate data, fit, run grids, predict"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Draw a synthetic dataset and write it as CSV.
    Generate(GenerateArgs),
    /// Fit one model to a CSV dataset.
    Fit(FitArgs),
    /// Run a full (rho, lambda) grid experiment from a TOML config.
    Grid(GridArgs),
    /// Apply a saved model to new data.
    Predict(PredictArgs),
}

#[derive(Args)]
pub struct GenerateArgs {
    /// Synthetic family: linear-g, logistic-g, or phase-shift.
    #[arg(long)]
    pub family: String,
    /// Number of rows.
    #[arg(long)]
    pub n: usize,
    /// Number of covariates (defaults: 10 for the g-function families, 4
    /// for phase-shift).
    #[arg(long)]
    pub p: Option<usize>,
    /// Noise standard deviation; omit for the family's 3:1
    /// signal-to-noise calibration.
    #[arg(long = "noise-sd")]
    pub noise_sd: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV path (header y,x1..xp).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct FitArgs {
    /// Training data CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Response column name.
    #[arg(long, default_value = "y")]
    pub response: String,
    /// Model family: linear or logistic.
    #[arg(long, default_value = "linear")]
    pub family: String,
    /// Solver: cp, ama, stoc-cp, stoc-ama-sag, stoc-ama-saga, cc,
    /// stoc-cc, condat-vu, or oracle.
    #[arg(long, default_value = "oracle")]
    pub solver: String,
    /// Roughness penalty weight ρ.
    #[arg(long)]
    pub rho: f64,
    /// Component penalty λ: a number or "norm_y / 2^k".
    #[arg(long)]
    pub lam: String,
    /// Knots per covariate.
    #[arg(long, default_value_t = 6)]
    pub knots: usize,
    /// Basis order m: 1 (piecewise constant) or 2 (piecewise linear).
    #[arg(long = "order-m", default_value_t = 2)]
    pub order_m: usize,
    /// Highest interaction order K.
    #[arg(long = "interaction-k", alias = "interaction-K", default_value_t = 2)]
    pub interaction_k: usize,
    /// Epoch budget.
    #[arg(long)]
    pub epochs: Option<f64>,
    /// Steps (batch) or scans (stochastic) per block visit.
    #[arg(long = "batch-steps")]
    pub batch_steps: Option<usize>,
    /// Solver step size τ (with --alpha; omit both for defaults).
    #[arg(long)]
    pub tau: Option<f64>,
    /// Solver step size α.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Perturbation δ for the cc solvers.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Revert block updates that increase the objective.
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    pub recovery: bool,
    /// Standardize covariates to mean 0, sd 1 before fitting.
    #[arg(long)]
    pub standardize: bool,
    /// Training fraction in (0,1); the rest becomes a validation set.
    #[arg(long)]
    pub split: Option<f64>,
    #[arg(long = "split-seed", default_value_t = 0)]
    pub split_seed: u64,
    /// Fail on the first malformed CSV cell instead of dropping the row.
    #[arg(long)]
    pub strict: bool,
    /// Where to save the fitted model (JSON).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Where to save the training trace (CSV).
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Args)]
pub struct GridArgs {
    /// Experiment TOML file.
    #[arg(long)]
    pub config: PathBuf,
    /// Override the configured output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct PredictArgs {
    /// Fitted model JSON.
    #[arg(long)]
    pub model: PathBuf,
    /// Input CSV; a response column, if present, is used for metrics.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "y")]
    pub response: String,
    /// Output CSV of predictions (header `pred`).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub strict: bool,
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<(usize, usize)> {
    let family = SyntheticFamily::from_str(&args.family).map_err(anyhow::Error::msg)?;
    let p = args.p.unwrap_or(match family {
        SyntheticFamily::PhaseShift => 4,
        _ => 10,
    });
    let spec = SyntheticSpec { n: args.n, p, noise_sd: args.noise_sd, seed: args.seed, family };
    spec.validate().map_err(anyhow::Error::msg)?;
    let (x, y) = match family {
        SyntheticFamily::LinearG => gen_regression(&spec),
        SyntheticFamily::LogisticG => gen_logistic(&spec),
        SyntheticFamily::PhaseShift => {
            let d = gen_phase_shift(&spec);
            (d.x_unit, d.y)
        }
    };
    write_dataset_csv(&args.out, x.view(), y.view())?;
    Ok((args.n, p))
}

pub struct FitSummary {
    pub final_objective: f64,
    pub nonzero_blocks: usize,
    pub nonzero_coefs: usize,
    pub train_metric: f64,
    pub val_metric: Option<f64>,
    pub metric_name: &'static str,
    pub rejected_rows: usize,
}

fn parse_model_family(text: &str) -> Result<ModelFamily> {
    match text {
        "linear" => Ok(ModelFamily::Linear),
        "logistic" => Ok(ModelFamily::Logistic),
        other => bail!("family must be \"linear\" or \"logistic\", got {other:?}"),
    }
}

pub fn cmd_fit(args: &FitArgs) -> Result<FitSummary> {
    let family = parse_model_family(&args.family)?;
    let solver = SolverKind::from_str(&args.solver).map_err(anyhow::Error::msg)?;
    let lam_spec = parse_lam_flag(&args.lam)?;
    let opts = IngestOptions {
        response: args.response.clone(),
        standardize: args.standardize,
        strict: args.strict,
    };
    let report = ingest_csv(&args.data, &opts)?;
    let ds = report.dataset;
    let (x_train, y_train, val) = match args.split {
        Some(frac) => {
            if !(frac > 0.0 && frac < 1.0) {
                bail!("--split must lie strictly between 0 and 1, got {frac}");
            }
            let (tr, va) = split_indices(ds.y.len(), frac, args.split_seed);
            let (xt, yt) = take_rows(ds.x.view(), ds.y.view(), &tr);
            let (xv, yv) = take_rows(ds.x.view(), ds.y.view(), &va);
            (xt, yt, Some((xv, yv)))
        }
        None => (ds.x, ds.y, None),
    };
    let lam = lam_spec.resolve(centered_empirical_norm(y_train.view()))?;

    let mut cfg = match family {
        ModelFamily::Linear => TrainConfig::linear_default(solver),
        ModelFamily::Logistic => TrainConfig::logistic_default(solver),
    };
    if let Some(steps) = args.batch_steps {
        cfg.batch_steps_per_block = steps;
    }
    if let Some(epochs) = args.epochs {
        cfg.max_epochs = epochs;
    }
    if args.tau.is_none() && args.alpha.is_some() {
        bail!("--alpha without --tau; give both or neither");
    }
    if let Some(tau) = args.tau {
        cfg.sizes = Some(StepSizes::new(tau, args.alpha.unwrap_or(1.0)));
    }
    if let Some(delta) = args.delta {
        cfg.delta = delta;
    }
    cfg.recovery_enabled = args.recovery;
    cfg.seed = args.seed;

    let basis = dpam::BasisSpec {
        m: args.order_m,
        num_knots: args.knots,
        k_max: args.interaction_k,
    };
    let (model, trace) = match family {
        ModelFamily::Linear => {
            fit_linear(x_train.view(), y_train.view(), &basis, args.rho, lam, &cfg)
        }
        ModelFamily::Logistic => {
            fit_logistic(x_train.view(), y_train.view(), &basis, args.rho, lam, &cfg)
        }
    }
    .with_context(|| {
        format!("fit failed (solver={} rho={} lam={lam} seed={})", args.solver, args.rho, args.seed)
    })?;

    if let Some(path) = &args.out {
        model.save(path).with_context(|| format!("cannot write {}", path.display()))?;
    }
    if let Some(path) = &args.trace {
        write_trace_csv(path, &trace)?;
    }
    let train_metric = validation_metric(&model, &x_train, &y_train)?;
    let val_metric = match &val {
        Some((xv, yv)) => Some(validation_metric(&model, xv, yv)?),
        None => None,
    };
    Ok(FitSummary {
        final_objective: *trace.objective.last().expect("trace never empty"),
        nonzero_blocks: model.nonzero_blocks(),
        nonzero_coefs: model.nonzero_coefs(),
        train_metric,
        val_metric,
        metric_name: match family {
            ModelFamily::Linear => "mse",
            ModelFamily::Logistic => "misclass",
        },
        rejected_rows: report.rejected.len(),
    })
}

pub fn cmd_grid(args: &GridArgs) -> Result<ExperimentReport> {
    let mut cfg = ExperimentConfig::from_path(&args.config)?;
    if let Some(dir) = &args.out {
        cfg.output.dir = dir.clone();
    }
    run_experiment(&cfg)
}

pub struct PredictSummary {
    pub rows: usize,
    pub metric: Option<(String, f64)>,
    pub rejected_rows: usize,
}

pub fn cmd_predict(args: &PredictArgs) -> Result<PredictSummary> {
    let model = DpamModel::load(&args.model)
        .with_context(|| format!("cannot load model {}", args.model.display()))?;
    let table = read_features_csv(&args.data, &args.response, args.strict)?;
    if table.x.ncols() != model.p() {
        bail!(
            "{}: model expects {} covariates, file has {}",
            args.data.display(),
            model.p(),
            table.x.ncols()
        );
    }
    let pred = predict(&model, table.x.view())?;
    let mut out = String::from("pred\n");
    for v in pred.iter() {
        out.push_str(&format!("{v}\n"));
    }
    std::fs::write(&args.out, out)
        .with_context(|| format!("cannot write {}", args.out.display()))?;
    let metric = table.y.as_ref().map(|y| match model.family {
        ModelFamily::Linear => ("mse".to_string(), mse(pred.view(), y.view())),
        ModelFamily::Logistic => {
            ("misclass".to_string(), misclassification(pred.view(), y.view()))
        }
    });
    Ok(PredictSummary { rows: pred.len(), metric, rejected_rows: table.rejected.len() })
}

fn report_rejections(rejected: usize) {
    if rejected > 0 {
        eprintln!("note: dropped {rejected} malformed row(s); use --strict to fail instead");
    }
}

/// Dispatch a parsed command line; errors bubble up for the binary to
/// print and turn into a nonzero exit.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(args) => {
            let (n, p) = cmd_generate(&args)?;
            println!("wrote {n} rows x {p} covariates to {}", args.out.display());
        }
        Command::Fit(args) => {
            let summary = cmd_fit(&args)?;
            report_rejections(summary.rejected_rows);
            let mut line = format!(
                "objective={} nonzero_blocks={} nonzero_coefs={} train_{}={}",
                summary.final_objective,
                summary.nonzero_blocks,
                summary.nonzero_coefs,
                summary.metric_name,
                summary.train_metric
            );
            if let Some(v) = summary.val_metric {
                line.push_str(&format!(" val_{}={v}", summary.metric_name));
            }
            println!("{line}");
            if let Some(path) = &args.out {
                println!("model written to {}", path.display());
            }
            if let Some(path) = &args.trace {
                println!("trace written to {}", path.display());
            }
        }
        Command::Grid(args) => {
            let report = cmd_grid(&args)?;
            report_rejections(report.rejected_rows);
            for point in &report.points {
                println!(
                    "rho={} lam={} ({}): nonzero_blocks={} nonzero_coefs={} {}={}",
                    point.rho,
                    point.lam,
                    point.lam_text,
                    point.mean_nonzero_blocks,
                    point.mean_nonzero_coefs,
                    report.metric_name,
                    point.mean_val_metric
                );
            }
            println!("artifacts in {}", report.out_dir.display());
        }
        Command::Predict(args) => {
            let summary = cmd_predict(&args)?;
            report_rejections(summary.rejected_rows);
            match &summary.metric {
                Some((name, v)) => {
                    println!("wrote {} predictions to {} ({name}={v})", summary.rows, args.out.display())
                }
                None => println!("wrote {} predictions to {}", summary.rows, args.out.display()),
            }
        }
    }
    Ok(())
}
