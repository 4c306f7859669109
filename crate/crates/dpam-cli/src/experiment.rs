//! Grid experiments: load or generate a dataset once, fan the (ρ, λ) ×
//! seed runs out to a worker pool, and write plot-ready artifacts.
//!
//! Output layout under the configured directory:
//! - `rho<i>_lam<j>/trace_seed<seed>.csv` — per-run trace with columns
//!   `epoch,training_loss,nonzero_blocks,nonzero_coefs`;
//! - `rho<i>_lam<j>/summary.csv` — across seeds, columns
//!   `epoch,mean_loss,min_loss,max_loss`;
//! - `table.csv` — one row per grid point with the resolved penalties,
//!   mean sparsity, and the mean validation metric.
//!
//! Identical config and seeds reproduce every file byte for byte.

use crate::config::ExperimentConfig;
use crate::data::{
    centered_empirical_norm, ingest_csv, split_indices, take_rows, IngestOptions,
};
use anyhow::{bail, Context, Result};
use dpam::{
    fit_linear, fit_logistic, gen_logistic, gen_phase_shift, gen_regression, predict, DpamModel,
    ModelFamily, SyntheticFamily, SyntheticSpec, TrainTrace,
};
use ndarray::{Array1, Array2, ArrayView1};
use rayon::prelude::*;
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// Offset between the training seed and the fresh validation seed when the
/// dataset is generated: the paper-style layout of a validation set drawn
/// independently at the same size.
const VALIDATION_SEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

/// Training and validation matrices ready for fitting.
pub struct LoadedData {
    pub family: ModelFamily,
    pub x_train: Array2<f64>,
    pub y_train: Array1<f64>,
    pub x_val: Array2<f64>,
    pub y_val: Array1<f64>,
    /// Rows dropped during CSV ingestion (lenient mode).
    pub rejected_rows: usize,
}

/// Aggregates for one (ρ, λ) grid point, averaged over seeds.
pub struct GridPointResult {
    pub rho_index: usize,
    pub lam_index: usize,
    pub rho: f64,
    pub lam: f64,
    pub lam_text: String,
    pub dir: PathBuf,
    pub mean_nonzero_blocks: f64,
    pub mean_nonzero_coefs: f64,
    pub mean_val_metric: f64,
}

pub struct ExperimentReport {
    pub out_dir: PathBuf,
    /// `"val_mse"` or `"val_misclass"`, the last column name of table.csv.
    pub metric_name: &'static str,
    pub points: Vec<GridPointResult>,
    pub rejected_rows: usize,
}

/// Mean squared prediction error.
pub fn mse(pred: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
    assert_eq!(pred.len(), y.len());
    pred.iter().zip(y.iter()).map(|(p, v)| (p - v) * (p - v)).sum::<f64>() / y.len() as f64
}

/// Fraction of labels the probability forecast gets wrong at the 1/2 cut.
pub fn misclassification(prob: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
    assert_eq!(prob.len(), y.len());
    let wrong = prob
        .iter()
        .zip(y.iter())
        .filter(|&(p, &v)| (*p > 0.5) != (v == 1.0))
        .count();
    wrong as f64 / y.len() as f64
}

/// Validation metric for a fitted model: MSE for linear models,
/// misclassification for logistic models.
pub fn validation_metric(model: &DpamModel, x: &Array2<f64>, y: &Array1<f64>) -> Result<f64> {
    let pred = predict(model, x.view())?;
    Ok(match model.family {
        ModelFamily::Linear => mse(pred.view(), y.view()),
        ModelFamily::Logistic => misclassification(pred.view(), y.view()),
    })
}

/// Resolve the dataset section: generate the synthetic family (training
/// set at the configured seed, validation set at a shifted seed, same
/// size) or ingest a CSV with optional standardization and split. Without
/// a split, the validation set aliases the training set.
pub fn load_data(cfg: &ExperimentConfig) -> Result<LoadedData> {
    let family = cfg.model_family()?;
    match cfg.dataset.source.as_str() {
        "generate" => {
            let syn = SyntheticFamily::from_str(
                cfg.dataset.family.as_deref().expect("validated"),
            )
            .map_err(anyhow::Error::msg)?;
            let n = cfg.dataset.n.expect("validated");
            let p = cfg.dataset.p.unwrap_or(match syn {
                SyntheticFamily::PhaseShift => 4,
                _ => 10,
            });
            let seed = cfg.dataset.seed.unwrap_or(0);
            let make = |seed: u64| -> Result<(Array2<f64>, Array1<f64>)> {
                let spec = SyntheticSpec {
                    n,
                    p,
                    noise_sd: cfg.dataset.noise_sd,
                    seed,
                    family: syn,
                };
                spec.validate().map_err(anyhow::Error::msg)?;
                Ok(match syn {
                    SyntheticFamily::LinearG => gen_regression(&spec),
                    SyntheticFamily::LogisticG => gen_logistic(&spec),
                    SyntheticFamily::PhaseShift => {
                        let d = gen_phase_shift(&spec);
                        (d.x_unit, d.y)
                    }
                })
            };
            let (x_train, y_train) = make(seed)?;
            let (x_val, y_val) = make(seed.wrapping_add(VALIDATION_SEED_OFFSET))?;
            // A logistic model needs 0/1 labels, which only LogisticG draws.
            if family == ModelFamily::Logistic && syn != SyntheticFamily::LogisticG {
                bail!("model.family \"logistic\" needs dataset.family \"logistic-g\", got {syn}");
            }
            Ok(LoadedData { family, x_train, y_train, x_val, y_val, rejected_rows: 0 })
        }
        "csv" => {
            let opts = IngestOptions {
                response: cfg.dataset.response.clone().unwrap_or_else(|| "y".into()),
                standardize: cfg.dataset.standardize.unwrap_or(false),
                strict: cfg.dataset.strict.unwrap_or(false),
            };
            let report = ingest_csv(cfg.dataset.path.as_ref().expect("validated"), &opts)?;
            let ds = report.dataset;
            let (x_train, y_train, x_val, y_val) = match cfg.dataset.split {
                Some(frac) => {
                    let seed = cfg.dataset.split_seed.unwrap_or(0);
                    let (tr, va) = split_indices(ds.y.len(), frac, seed);
                    let (xt, yt) = take_rows(ds.x.view(), ds.y.view(), &tr);
                    let (xv, yv) = take_rows(ds.x.view(), ds.y.view(), &va);
                    (xt, yt, xv, yv)
                }
                None => (ds.x.clone(), ds.y.clone(), ds.x, ds.y),
            };
            Ok(LoadedData {
                family,
                x_train,
                y_train,
                x_val,
                y_val,
                rejected_rows: report.rejected.len(),
            })
        }
        other => bail!("unknown dataset source {other:?}"),
    }
}

/// Render a training trace as CSV text.
pub fn trace_csv_string(trace: &TrainTrace) -> String {
    let mut out = String::from("epoch,training_loss,nonzero_blocks,nonzero_coefs\n");
    for i in 0..trace.epoch_marks.len() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            trace.epoch_marks[i], trace.objective[i], trace.nonzero_blocks[i], trace.nonzero_coefs[i]
        ));
    }
    out
}

/// Across-seed summary rows on a common epoch axis: the axis of the trace
/// with the most marks, other traces step-interpolated (each contributes
/// its latest value at or before the axis epoch, its final value beyond).
pub fn summary_csv_string(traces: &[TrainTrace]) -> String {
    assert!(!traces.is_empty());
    let axis_owner = traces
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| {
            a.epoch_marks
                .len()
                .cmp(&b.epoch_marks.len())
                .then(ib.cmp(ia))
        })
        .map(|(i, _)| i)
        .unwrap();
    let axis = &traces[axis_owner].epoch_marks;
    let value_at = |trace: &TrainTrace, epoch: f64| -> f64 {
        let idx = trace.epoch_marks.partition_point(|&m| m <= epoch + 1e-12);
        trace.objective[idx.saturating_sub(1).min(trace.objective.len() - 1)]
    };
    let mut out = String::from("epoch,mean_loss,min_loss,max_loss\n");
    for &e in axis {
        let mut sum = 0.0;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for t in traces {
            let v = value_at(t, e);
            sum += v;
            lo = lo.min(v);
            hi = hi.max(v);
        }
        out.push_str(&format!("{e},{},{lo},{hi}\n", sum / traces.len() as f64));
    }
    out
}

struct RunOutcome {
    seed: u64,
    trace: TrainTrace,
    nonzero_blocks: usize,
    nonzero_coefs: usize,
    val_metric: f64,
}

/// Run the full grid and write all artifacts. Returns the in-memory
/// aggregates so callers can assert on them without re-reading the files.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let data = load_data(cfg)?;
    let norm_y = centered_empirical_norm(data.y_train.view());
    let lams: Vec<(String, f64)> = cfg
        .penalty
        .lam
        .iter()
        .map(|spec| Ok((spec.display(), spec.resolve(norm_y)?)))
        .collect::<Result<_>>()?;
    let seeds = cfg.seeds();
    let basis = cfg.basis_spec();
    let out_dir = cfg.output.dir.clone();

    struct RunSpec {
        rho: f64,
        lam: f64,
        seed: u64,
        dir: PathBuf,
    }
    let mut runs = Vec::new();
    for (i, &rho) in cfg.penalty.rho.iter().enumerate() {
        for (j, (_, lam)) in lams.iter().enumerate() {
            let dir = out_dir.join(format!("rho{i}_lam{j}"));
            std::fs::create_dir_all(&dir)
                .with_context(|| format!("cannot create {}", dir.display()))?;
            for &seed in &seeds {
                runs.push(RunSpec { rho, lam: *lam, seed, dir: dir.clone() });
            }
        }
    }

    let outcomes: Vec<RunOutcome> = runs
        .par_iter()
        .map(|run| -> Result<RunOutcome> {
            let train_cfg = cfg.train_config(run.seed)?;
            let fit = match data.family {
                ModelFamily::Linear => fit_linear(
                    data.x_train.view(),
                    data.y_train.view(),
                    &basis,
                    run.rho,
                    run.lam,
                    &train_cfg,
                ),
                ModelFamily::Logistic => fit_logistic(
                    data.x_train.view(),
                    data.y_train.view(),
                    &basis,
                    run.rho,
                    run.lam,
                    &train_cfg,
                ),
            };
            let (model, trace) = fit.with_context(|| {
                format!(
                    "run rho={} lam={} seed={} failed",
                    run.rho, run.lam, run.seed
                )
            })?;
            let val_metric = validation_metric(&model, &data.x_val, &data.y_val)?;
            let trace_path = run.dir.join(format!("trace_seed{}.csv", run.seed));
            std::fs::write(&trace_path, trace_csv_string(&trace))
                .with_context(|| format!("cannot write {}", trace_path.display()))?;
            Ok(RunOutcome {
                seed: run.seed,
                trace,
                nonzero_blocks: model.nonzero_blocks(),
                nonzero_coefs: model.nonzero_coefs(),
                val_metric,
            })
        })
        .collect::<Result<_>>()?;

    let metric_name = match data.family {
        ModelFamily::Linear => "val_mse",
        ModelFamily::Logistic => "val_misclass",
    };
    let per_seed = seeds.len();
    let mut points = Vec::new();
    let mut table =
        format!("rho,lam,dir,nonzero_blocks,nonzero_coefs,{metric_name}\n");
    for (i, &rho) in cfg.penalty.rho.iter().enumerate() {
        for (j, (lam_text, lam)) in lams.iter().enumerate() {
            let base = (i * lams.len() + j) * per_seed;
            let group = &outcomes[base..base + per_seed];
            debug_assert!(group.iter().zip(&seeds).all(|(o, &s)| o.seed == s));
            let dir_name = format!("rho{i}_lam{j}");
            let dir = out_dir.join(&dir_name);
            let traces: Vec<TrainTrace> = group.iter().map(|o| o.trace.clone()).collect();
            let summary_path = dir.join("summary.csv");
            std::fs::write(&summary_path, summary_csv_string(&traces))
                .with_context(|| format!("cannot write {}", summary_path.display()))?;
            let mean = |f: &dyn Fn(&RunOutcome) -> f64| {
                group.iter().map(|o| f(o)).sum::<f64>() / per_seed as f64
            };
            let point = GridPointResult {
                rho_index: i,
                lam_index: j,
                rho,
                lam: *lam,
                lam_text: lam_text.clone(),
                dir: dir.clone(),
                mean_nonzero_blocks: mean(&|o| o.nonzero_blocks as f64),
                mean_nonzero_coefs: mean(&|o| o.nonzero_coefs as f64),
                mean_val_metric: mean(&|o| o.val_metric),
            };
            table.push_str(&format!(
                "{},{},{dir_name},{},{},{}\n",
                point.rho, point.lam, point.mean_nonzero_blocks, point.mean_nonzero_coefs,
                point.mean_val_metric
            ));
            points.push(point);
        }
    }
    let table_path = out_dir.join("table.csv");
    std::fs::write(&table_path, &table)
        .with_context(|| format!("cannot write {}", table_path.display()))?;
    Ok(ExperimentReport {
        out_dir,
        metric_name,
        points,
        rejected_rows: data.rejected_rows,
    })
}

/// Write a single run's trace CSV (used by the `fit` subcommand).
pub fn write_trace_csv(path: impl AsRef<Path>, trace: &TrainTrace) -> Result<()> {
    std::fs::write(path.as_ref(), trace_csv_string(trace))
        .with_context(|| format!("cannot write {}", path.as_ref().display()))
}
