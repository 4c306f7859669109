//! Dataset files and preprocessing: CSV in both directions, optional
//! per-covariate standardization, and seeded train/validation splits.
//!
//! The CSV contract is a header row with the response column named `y` and
//! covariates `x1..xp`; all numbers are written in round-trip decimal, so
//! reading a file back reproduces the exact `f64` values.

use anyhow::{bail, Context, Result};
use dpam::rng::SplitMix64;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use std::path::Path;

/// A parsed numeric table: response plus covariates in header order.
#[derive(Clone, Debug)]
pub struct Dataset {
    /// Covariate column names, in file order.
    pub covariate_names: Vec<String>,
    pub x: Array2<f64>,
    pub y: Array1<f64>,
}

/// How [`ingest_csv`] treats unparseable cells.
#[derive(Clone, Debug)]
pub struct IngestOptions {
    /// Name of the response column.
    pub response: String,
    /// Subtract each covariate's mean and divide by its standard deviation
    /// (the 1/n convention, matching the empirical norms used in training).
    pub standardize: bool,
    /// `true`: fail on the first bad cell. `false`: drop the row and record
    /// it in the rejection report.
    pub strict: bool,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions { response: "y".into(), standardize: false, strict: false }
    }
}

/// One rejected input row: 1-based file line and the reason.
#[derive(Clone, Debug)]
pub struct RejectedRow {
    pub line: u64,
    pub reason: String,
}

/// [`ingest_csv`] output: the data plus the rows it refused.
#[derive(Clone, Debug)]
pub struct IngestReport {
    pub dataset: Dataset,
    pub rejected: Vec<RejectedRow>,
}

/// Covariates with an optional response, as read for prediction.
pub struct FeatureTable {
    pub covariate_names: Vec<String>,
    pub x: Array2<f64>,
    pub y: Option<Array1<f64>>,
    pub rejected: Vec<RejectedRow>,
}

/// Write `y` and the columns of `x` as CSV with the standard header.
pub fn write_dataset_csv(
    path: impl AsRef<Path>,
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
) -> Result<()> {
    assert_eq!(x.nrows(), y.len(), "row count mismatch");
    let mut w = csv::Writer::from_path(path.as_ref())
        .with_context(|| format!("cannot create {}", path.as_ref().display()))?;
    let mut header = vec!["y".to_string()];
    header.extend((1..=x.ncols()).map(|j| format!("x{j}")));
    w.write_record(&header)?;
    let mut record = Vec::with_capacity(x.ncols() + 1);
    for i in 0..x.nrows() {
        record.clear();
        record.push(format!("{}", y[i]));
        for j in 0..x.ncols() {
            record.push(format!("{}", x[[i, j]]));
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a numeric CSV. The response column is found by name and required;
/// every other column is a covariate, kept in header order.
pub fn ingest_csv(path: impl AsRef<Path>, opts: &IngestOptions) -> Result<IngestReport> {
    let path = path.as_ref();
    let table = parse_numeric_csv(path, Some(&opts.response), true, opts.strict)?;
    let mut x = table.x;
    if opts.standardize {
        standardize_columns(&mut x)?;
    }
    Ok(IngestReport {
        dataset: Dataset {
            covariate_names: table.covariate_names,
            x,
            y: table.y.expect("response required"),
        },
        rejected: table.rejected,
    })
}

/// Read covariates for prediction. If the named response column exists it
/// is returned separately (for metrics); otherwise every column is a
/// covariate.
pub fn read_features_csv(
    path: impl AsRef<Path>,
    response: &str,
    strict: bool,
) -> Result<FeatureTable> {
    parse_numeric_csv(path.as_ref(), Some(response), false, strict)
}

fn parse_numeric_csv(
    path: &Path,
    response: Option<&str>,
    require_response: bool,
    strict: bool,
) -> Result<FeatureTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        // Field-count mismatches become per-row rejections, not reader
        // errors, so lenient mode can skip them.
        .flexible(true)
        .from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let y_idx = match response {
        Some(name) => {
            let found = headers.iter().position(|h| h == name);
            if found.is_none() && require_response {
                bail!("{}: no column named {name:?}", path.display());
            }
            found
        }
        None => None,
    };
    let covariate_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| Some(i) != y_idx)
        .map(|(_, h)| h.to_string())
        .collect();
    let p = covariate_names.len();
    if p == 0 {
        bail!("{}: no covariate columns besides the response", path.display());
    }

    let mut rows: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let mut rejected = Vec::new();
    let mut buf = vec![0.0_f64; p];
    for record in reader.records() {
        let record = record.with_context(|| format!("{}: malformed CSV", path.display()))?;
        let line = record.position().map_or(0, |pos| pos.line());
        let mut problem: Option<String> = None;
        if record.len() != headers.len() {
            problem =
                Some(format!("expected {} fields, found {}", headers.len(), record.len()));
        } else {
            let mut k = 0;
            let mut yv = f64::NAN;
            for (idx, cell) in record.iter().enumerate() {
                match cell.trim().parse::<f64>() {
                    Ok(v) if v.is_finite() => {
                        if Some(idx) == y_idx {
                            yv = v;
                        } else {
                            buf[k] = v;
                            k += 1;
                        }
                    }
                    _ => {
                        problem = Some(format!(
                            "column {:?}: cannot parse {:?} as a finite number",
                            &headers[idx], cell
                        ));
                        break;
                    }
                }
            }
            if problem.is_none() {
                if y_idx.is_some() {
                    ys.push(yv);
                }
                rows.extend_from_slice(&buf);
            }
        }
        if let Some(reason) = problem {
            if strict {
                bail!("{}: line {line}: {reason}", path.display());
            }
            rejected.push(RejectedRow { line, reason });
        }
    }
    let n = rows.len() / p;
    if n == 0 {
        bail!("{}: no usable data rows", path.display());
    }
    let x = Array2::from_shape_vec((n, p), rows).expect("row-major fill");
    Ok(FeatureTable {
        covariate_names,
        x,
        y: y_idx.map(|_| Array1::from_vec(ys)),
        rejected,
    })
}

/// In-place: each column to mean 0 and standard deviation 1 (1/n).
pub fn standardize_columns(x: &mut Array2<f64>) -> Result<()> {
    let n = x.nrows() as f64;
    for (j, mut col) in x.columns_mut().into_iter().enumerate() {
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        if var <= 0.0 {
            bail!("column {} is constant; cannot standardize", j + 1);
        }
        let sd = var.sqrt();
        col.mapv_inplace(|v| (v - mean) / sd);
    }
    Ok(())
}

/// Stream index reserved for row splitting, so the split never shares
/// draws with data generation under the same seed.
const SPLIT_STREAM: u64 = 0x51e1;

/// Deterministic row split: shuffle `0..n` with the seeded generator and
/// take the first ⌊fraction·n⌋ indices for training.
pub fn split_indices(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    assert!(fraction > 0.0 && fraction < 1.0, "fraction must be in (0,1)");
    let mut idx: Vec<usize> = (0..n).collect();
    SplitMix64::substream(seed, SPLIT_STREAM).shuffle(&mut idx);
    let cut = (fraction * n as f64).floor() as usize;
    let val = idx.split_off(cut);
    (idx, val)
}

/// Materialize the selected rows.
pub fn take_rows(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    idx: &[usize],
) -> (Array2<f64>, Array1<f64>) {
    let xs = x.select(Axis(0), idx);
    let ys = Array1::from_iter(idx.iter().map(|&i| y[i]));
    (xs, ys)
}

/// ‖y − ȳ‖ₙ of a response vector: the scale against which relative
/// penalty levels like `norm_y / 2^8` are resolved.
pub fn centered_empirical_norm(y: ArrayView1<f64>) -> f64 {
    let n = y.len() as f64;
    let mean = y.sum() / n;
    (y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}
