//! Spline bases for ANOVA components.
//!
//! Each covariate gets `M` knots at equally spaced quantile levels of the
//! training data. The univariate basis has `M − 1` columns: step functions
//! `1{x > t_j}` for order `m = 1`, or one global linear column `x − t₁` plus
//! hinges `(x − t_j)₊` at the interior knots for `m = 2`. A block for the
//! covariate set `S` takes all tensor products of one univariate column per
//! covariate in `S` and centers every column empirically; the per-column
//! penalty weight is `ρ` except for the product of global linear columns
//! (order 2 only), which is unpenalized.

use crate::rng::SplitMix64;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BasisError {
    #[error("covariate {covariate} is degenerate: fewer than 2 distinct knots")]
    DegenerateCovariate { covariate: usize },
    #[error("need at least 2 knots, got {0}")]
    TooFewKnots(usize),
    #[error("unsupported spline order m = {0}; only 1 and 2 are implemented")]
    UnsupportedOrder(usize),
    #[error("interaction order K = {k} out of range for p = {p} covariates")]
    BadInteractionOrder { p: usize, k: usize },
    #[error("basis matrices disagree on the sample count")]
    SampleCountMismatch,
    #[error("input column is empty or contains non-finite values")]
    BadInput,
    #[error("power iteration did not converge within {0} iterations")]
    PowerIterationDivergence(usize),
}

/// Per-covariate knot vectors, strictly increasing after deduplication.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct KnotGrid {
    pub knots: Vec<Vec<f64>>,
}

impl KnotGrid {
    /// Knots for every column of `x`, `num_knots` per covariate.
    pub fn from_data(x: ArrayView2<f64>, num_knots: usize) -> Result<Self, BasisError> {
        let mut knots = Vec::with_capacity(x.ncols());
        for (j, col) in x.columns().into_iter().enumerate() {
            let ks = compute_knots(col, num_knots)
                .map_err(|e| match e {
                    BasisError::DegenerateCovariate { .. } => {
                        BasisError::DegenerateCovariate { covariate: j }
                    }
                    other => other,
                })?;
            knots.push(ks);
        }
        Ok(KnotGrid { knots })
    }

    pub fn p(&self) -> usize {
        self.knots.len()
    }

    /// Univariate basis column count for covariate `j`.
    pub fn dim(&self, j: usize) -> usize {
        self.knots[j].len() - 1
    }
}

/// A sorted set of covariate indices naming one ANOVA component.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BlockId {
    pub vars: Vec<usize>,
}

impl BlockId {
    pub fn new(mut vars: Vec<usize>) -> Self {
        vars.sort_unstable();
        vars.dedup();
        BlockId { vars }
    }

    pub fn order(&self) -> usize {
        self.vars.len()
    }

    /// Human-readable label with 1-based covariate numbers, e.g. `x4*x5`.
    pub fn label(&self) -> String {
        self.vars
            .iter()
            .map(|v| format!("x{}", v + 1))
            .collect::<Vec<_>>()
            .join("*")
    }
}

impl std::fmt::Display for BlockId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.label())
    }
}

/// Centered design matrix and penalty diagonal for one component.
#[derive(Clone, Debug)]
pub struct DesignBlock {
    pub id: BlockId,
    /// Centered basis matrix, n × d.
    pub basis: Array2<f64>,
    /// Column means of the uncentered basis, stored for prediction.
    pub col_means: Array1<f64>,
    /// Penalty diagonal; entries are 0 or ρ.
    pub gamma_diag: Array1<f64>,
    /// Estimate of ‖basis‖₂².
    pub spectral_norm_sq: f64,
}

impl DesignBlock {
    pub fn n(&self) -> usize {
        self.basis.nrows()
    }

    pub fn d(&self) -> usize {
        self.basis.ncols()
    }
}

/// Knots at quantile levels `0, 1/(M−1), …, 1` of `x_col`, using the
/// linear-interpolation (type-7) quantile. Exact duplicates are collapsed;
/// fewer than 2 surviving knots is an error.
pub fn compute_knots(x_col: ArrayView1<f64>, num_knots: usize) -> Result<Vec<f64>, BasisError> {
    if num_knots < 2 {
        return Err(BasisError::TooFewKnots(num_knots));
    }
    if x_col.is_empty() || x_col.iter().any(|v| !v.is_finite()) {
        return Err(BasisError::BadInput);
    }
    let mut sorted: Vec<f64> = x_col.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let mut knots = Vec::with_capacity(num_knots);
    for j in 0..num_knots {
        let level = j as f64 / (num_knots - 1) as f64;
        let h = level * (n - 1) as f64;
        let lo = h.floor() as usize;
        let q = if lo + 1 < n {
            let w = h - lo as f64;
            sorted[lo] + w * (sorted[lo + 1] - sorted[lo])
        } else {
            sorted[n - 1]
        };
        knots.push(q);
    }
    knots.dedup();
    if knots.len() < 2 {
        return Err(BasisError::DegenerateCovariate { covariate: 0 });
    }
    Ok(knots)
}

/// Univariate basis matrix, n × (M−1).
///
/// Order 1: column `j` is `1{x > t_j}` for `j = 1..M−1`.
/// Order 2: column 1 is the global linear term `x − t₁`; columns `2..M−1`
/// are the hinges `(x − t_j)₊` at the interior knots.
pub fn univariate_basis(
    x: ArrayView1<f64>,
    knots: &[f64],
    m: usize,
) -> Result<Array2<f64>, BasisError> {
    if knots.len() < 2 {
        return Err(BasisError::TooFewKnots(knots.len()));
    }
    let n = x.len();
    let d = knots.len() - 1;
    let mut out = Array2::zeros((n, d));
    match m {
        1 => {
            for (i, &xi) in x.iter().enumerate() {
                for (j, &t) in knots[..d].iter().enumerate() {
                    out[[i, j]] = if xi > t { 1.0 } else { 0.0 };
                }
            }
        }
        2 => {
            for (i, &xi) in x.iter().enumerate() {
                out[[i, 0]] = xi - knots[0];
                for j in 1..d {
                    out[[i, j]] = (xi - knots[j]).max(0.0);
                }
            }
        }
        other => return Err(BasisError::UnsupportedOrder(other)),
    }
    Ok(out)
}

/// Penalty diagonal for a block whose covariates contribute `dims[k]`
/// univariate columns each. With tensor columns ordered lexicographically by
/// the per-covariate column index, entry 0 (every factor is the first
/// univariate column) is unpenalized when `m = 2`; all other entries are
/// `rho_k`.
pub fn gamma_matrix(id: &BlockId, m: usize, rho_k: f64, dims: &[usize]) -> Array1<f64> {
    assert!(rho_k >= 0.0, "rho must be nonnegative");
    assert_eq!(id.order(), dims.len(), "one dimension per covariate in the block");
    let d: usize = dims.iter().product();
    let mut gamma = Array1::from_elem(d, rho_k);
    if m == 2 && d > 0 {
        gamma[0] = 0.0;
    }
    gamma
}

/// Tensor-product design block for `id`, built from the per-covariate
/// univariate bases `uni_bases` (indexed by covariate, all with the same
/// sample count). Columns are products of one univariate column per
/// covariate, ordered lexicographically by the per-covariate column index;
/// they are then centered and the means stored.
pub fn tensor_block_basis(
    id: &BlockId,
    uni_bases: &[Array2<f64>],
    m: usize,
    rho_k: f64,
) -> Result<DesignBlock, BasisError> {
    let mut basis = tensor_columns(id, uni_bases)?;
    let dims: Vec<usize> = id.vars.iter().map(|&v| uni_bases[v].ncols()).collect();
    let col_means = basis.mean_axis(ndarray::Axis(0)).expect("n > 0");
    for (mut col, &mean) in basis.columns_mut().into_iter().zip(col_means.iter()) {
        col.mapv_inplace(|v| v - mean);
    }
    let gamma_diag = gamma_matrix(id, m, rho_k, &dims);
    let spectral_norm_sq = spectral_norm_sq(basis.view())?;
    Ok(DesignBlock { id: id.clone(), basis, col_means, gamma_diag, spectral_norm_sq })
}

/// Uncentered tensor-product columns for `id`: every product of one
/// univariate column per covariate, ordered lexicographically by the
/// per-covariate column index with the first covariate most significant.
/// Prediction rebuilds new-data columns through this same routine and then
/// subtracts the training means stored in the model, so fitted values on the
/// training inputs are reproduced exactly.
pub fn tensor_columns(
    id: &BlockId,
    uni_bases: &[Array2<f64>],
) -> Result<Array2<f64>, BasisError> {
    let parts: Vec<&Array2<f64>> = id.vars.iter().map(|&v| &uni_bases[v]).collect();
    let n = parts.first().map(|b| b.nrows()).ok_or(BasisError::BadInput)?;
    if parts.iter().any(|b| b.nrows() != n) {
        return Err(BasisError::SampleCountMismatch);
    }
    let dims: Vec<usize> = parts.iter().map(|b| b.ncols()).collect();
    let d: usize = dims.iter().product();
    let mut basis = Array2::zeros((n, d));
    let mut index = vec![0usize; dims.len()];
    for col in 0..d {
        for i in 0..n {
            let mut prod = 1.0;
            for (part, &ci) in parts.iter().zip(index.iter()) {
                prod *= part[[i, ci]];
            }
            basis[[i, col]] = prod;
        }
        for k in (0..index.len()).rev() {
            index[k] += 1;
            if index[k] < dims[k] {
                break;
            }
            index[k] = 0;
        }
    }
    Ok(basis)
}

/// All covariate subsets of size 1..=K, ordered by size then
/// lexicographically.
pub fn enumerate_blocks(p: usize, k_max: usize) -> Result<Vec<BlockId>, BasisError> {
    if k_max < 1 || k_max > p {
        return Err(BasisError::BadInteractionOrder { p, k: k_max });
    }
    let mut blocks = Vec::new();
    for size in 1..=k_max {
        let mut current: Vec<usize> = (0..size).collect();
        loop {
            blocks.push(BlockId { vars: current.clone() });
            // Next lexicographic combination of `size` items out of `p`.
            let mut i = size;
            loop {
                if i == 0 {
                    break;
                }
                i -= 1;
                if current[i] != i + p - size {
                    current[i] += 1;
                    for j in i + 1..size {
                        current[j] = current[j - 1] + 1;
                    }
                    break;
                }
                if i == 0 {
                    current.clear();
                    break;
                }
            }
            if current.is_empty() {
                break;
            }
        }
    }
    Ok(blocks)
}

/// Estimate of `‖X‖₂²` (largest eigenvalue of `XᵀX`) by power iteration on
/// the Gram operator, started from a fixed seeded random vector. Stops when
/// the eigenvalue estimate changes by a relative 1e-10 between iterations;
/// errors after 10000 iterations.
pub fn spectral_norm_sq(x: ArrayView2<f64>) -> Result<f64, BasisError> {
    let d = x.ncols();
    if d == 0 || x.nrows() == 0 {
        return Ok(0.0);
    }
    let mut rng = SplitMix64::new(POWER_ITERATION_SEED);
    let mut v = Array1::from_iter((0..d).map(|_| rng.next_f64() - 0.5));
    let norm = v.dot(&v).sqrt();
    if norm == 0.0 {
        return Ok(0.0);
    }
    v.mapv_inplace(|t| t / norm);
    let mut estimate = 0.0_f64;
    let cap = 10_000;
    for _ in 0..cap {
        let xv = x.dot(&v);
        let mut gv = x.t().dot(&xv);
        let new_estimate = v.dot(&gv);
        let gnorm = gv.dot(&gv).sqrt();
        if gnorm == 0.0 {
            return Ok(0.0);
        }
        gv.mapv_inplace(|t| t / gnorm);
        v = gv;
        if (new_estimate - estimate).abs() <= 1e-10 * new_estimate.abs().max(1e-300) {
            return Ok(new_estimate);
        }
        estimate = new_estimate;
    }
    Err(BasisError::PowerIterationDivergence(cap))
}

/// Fixed seed for the power-iteration start vector, so spectral-norm
/// estimates are reproducible across runs.
const POWER_ITERATION_SEED: u64 = 0x9E37_79B9;
