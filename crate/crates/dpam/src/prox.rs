//! Thresholding operators and proximal maps for the empirical-norm term.
//!
//! The single-block subproblem, rescaled by `n`, is
//!
//! ```text
//! min_β  f(Xβ) + g(β),   f(z) = ½‖r − z‖₂² + λ√n‖z‖₂,   g(β) = n‖Γβ‖₁.
//! ```
//!
//! This module provides the pieces the splitting solvers need: the
//! element-wise soft-thresholding operator `𝒮` (the prox of a weighted L1
//! norm), the joint soft-thresholding operator `𝒯` (the prox of an L2 norm),
//! and closed forms for `prox_{αf}`, the conjugate `f*`, its gradient, and
//! `prox_{αf*}`, plus a coordinate-wise prox of `αf*` used by the stochastic
//! solvers.
//!
//! All operations are pure functions; none hold shared state.

use ndarray::{Array1, ArrayView1};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProxError {
    /// The root search inside [`coord_prox_f_star`] failed to reach the
    /// residual tolerance within the iteration cap.
    #[error("coordinate prox root solver did not converge: residual {residual:e} after {iters} bisection steps")]
    RootSolverFailure { residual: f64, iters: usize },
}

/// Per-coefficient and joint threshold levels; all entries nonnegative.
#[derive(Clone, Debug)]
pub struct ThresholdSpec {
    pub gamma_vec: Array1<f64>,
    pub gamma_joint: f64,
}

impl ThresholdSpec {
    pub fn new(gamma_vec: Array1<f64>, gamma_joint: f64) -> Self {
        assert!(
            gamma_vec.iter().all(|&g| g >= 0.0) && gamma_joint >= 0.0,
            "thresholds must be nonnegative"
        );
        ThresholdSpec { gamma_vec, gamma_joint }
    }

    /// Apply `𝒮(x, gamma_vec)` element-wise.
    pub fn apply_elementwise(&self, x: ArrayView1<f64>) -> Array1<f64> {
        soft_threshold(x, self.gamma_vec.view())
    }

    /// Apply `𝒯(x, gamma_joint)`.
    pub fn apply_joint(&self, x: ArrayView1<f64>) -> Array1<f64> {
        joint_soft_threshold(x, self.gamma_joint)
    }
}

/// The data term `f(z) = ½‖r − z‖₂² + λ√n‖z‖₂` of the rescaled single-block
/// problem; `r` is the length-`n` residual target and `lam ≥ 0`.
#[derive(Clone, Debug)]
pub struct EmpiricalNormTerm {
    pub r: Array1<f64>,
    pub lam: f64,
    pub n: usize,
    pub sqrt_n: f64,
}

impl EmpiricalNormTerm {
    pub fn new(r: Array1<f64>, lam: f64) -> Self {
        assert!(lam >= 0.0, "lam must be nonnegative");
        let n = r.len();
        EmpiricalNormTerm { r, lam, n, sqrt_n: (n as f64).sqrt() }
    }

    /// `f(z) = ½‖r − z‖₂² + λ√n‖z‖₂`.
    pub fn value(&self, z: ArrayView1<f64>) -> f64 {
        assert_eq!(z.len(), self.n);
        let mut sq = 0.0;
        let mut znorm_sq = 0.0;
        for (zi, ri) in z.iter().zip(self.r.iter()) {
            let d = ri - zi;
            sq += d * d;
            znorm_sq += zi * zi;
        }
        0.5 * sq + self.lam * self.sqrt_n * znorm_sq.sqrt()
    }
}

/// Element-wise soft thresholding `𝒮(x, γ)ᵢ = sign(xᵢ)·max(|xᵢ| − γᵢ, 0)`,
/// with `𝒮(0, γ) = 0`.
pub fn soft_threshold(x: ArrayView1<f64>, gamma_vec: ArrayView1<f64>) -> Array1<f64> {
    assert_eq!(x.len(), gamma_vec.len(), "soft_threshold length mismatch");
    Array1::from_iter(
        x.iter()
            .zip(gamma_vec.iter())
            .map(|(&xi, &gi)| soft_threshold_scalar(xi, gi)),
    )
}

#[inline]
pub(crate) fn soft_threshold_scalar(x: f64, gamma: f64) -> f64 {
    if x > gamma {
        x - gamma
    } else if x < -gamma {
        x + gamma
    } else {
        0.0
    }
}

/// Joint soft thresholding `𝒯(x, γ) = (1 − γ/‖x‖₂)₊ x`, with `𝒯(0, γ) = 0`.
/// Returns the exact zero vector whenever `‖x‖₂ ≤ γ`.
pub fn joint_soft_threshold(x: ArrayView1<f64>, gamma: f64) -> Array1<f64> {
    assert!(gamma >= 0.0, "joint threshold must be nonnegative");
    let norm = x.dot(&x).sqrt();
    assert!(norm.is_finite(), "joint_soft_threshold: non-finite input norm");
    if norm <= gamma {
        Array1::zeros(x.len())
    } else {
        let scale = 1.0 - gamma / norm;
        x.map(|&xi| scale * xi)
    }
}

/// `prox_{αf}(z) = 𝒯(z + αr, αλ√n) / (1 + α)`, the unique minimizer of
/// `½‖u − z‖₂² + α f(u)`.
pub fn prox_f(z: ArrayView1<f64>, alpha: f64, term: &EmpiricalNormTerm) -> Array1<f64> {
    assert_eq!(z.len(), term.n, "prox_f length mismatch");
    assert!(alpha > 0.0, "alpha must be positive");
    let arg = Array1::from_iter(z.iter().zip(term.r.iter()).map(|(&zi, &ri)| zi + alpha * ri));
    let mut out = joint_soft_threshold(arg.view(), alpha * term.lam * term.sqrt_n);
    out.mapv_inplace(|v| v / (1.0 + alpha));
    out
}

/// `prox_{αf*}(x) = x − (α/(1+α)) 𝒯(x + r, λ√n)`.
///
/// This closed form agrees with the Moreau decomposition
/// `prox_{αf*}(x) = x − α·prox_{f/α}(x/α)`; the identity is checked in tests
/// against the independent [`prox_f`] implementation.
pub fn prox_f_star(v: ArrayView1<f64>, alpha: f64, term: &EmpiricalNormTerm) -> Array1<f64> {
    assert_eq!(v.len(), term.n, "prox_f_star length mismatch");
    assert!(alpha > 0.0, "alpha must be positive");
    let arg = Array1::from_iter(v.iter().zip(term.r.iter()).map(|(&vi, &ri)| vi + ri));
    let t = joint_soft_threshold(arg.view(), term.lam * term.sqrt_n);
    let scale = alpha / (1.0 + alpha);
    Array1::from_iter(v.iter().zip(t.iter()).map(|(&vi, &ti)| vi - scale * ti))
}

/// `f*(u) = ½(‖u + r‖₂ − λ√n)₊² − ½‖r‖₂²`, the Fenchel conjugate of `f`.
pub fn f_star_value(u: ArrayView1<f64>, term: &EmpiricalNormTerm) -> f64 {
    assert_eq!(u.len(), term.n, "f_star_value length mismatch");
    let mut sum_sq = 0.0;
    let mut r_sq = 0.0;
    for (ui, ri) in u.iter().zip(term.r.iter()) {
        let s = ui + ri;
        sum_sq += s * s;
        r_sq += ri * ri;
    }
    let hinge = (sum_sq.sqrt() - term.lam * term.sqrt_n).max(0.0);
    0.5 * hinge * hinge - 0.5 * r_sq
}

/// `∇f*(u) = 𝒯(u + r, λ√n)`.
///
/// `f*` is not differentiable on the sphere `‖u + r‖₂ = λ√n`; there this
/// returns the zero vector, the subgradient selected by `𝒯`.
pub fn grad_f_star(u: ArrayView1<f64>, term: &EmpiricalNormTerm) -> Array1<f64> {
    assert_eq!(u.len(), term.n, "grad_f_star length mismatch");
    let arg = Array1::from_iter(u.iter().zip(term.r.iter()).map(|(&ui, &ri)| ui + ri));
    joint_soft_threshold(arg.view(), term.lam * term.sqrt_n)
}

/// Fixed coordinate context for [`coord_prox_f_star`]: the residual entry
/// `r_i` and the running `‖v + r‖₂² − (v_i + r_i)²` over the other
/// coordinates (clamped at zero by the caller).
#[derive(Clone, Copy, Debug)]
pub struct CoordState {
    pub r_i: f64,
    pub sq_norm_minus_i: f64,
}

/// Minimizer over the single coordinate `v_i` of `½‖v − b‖₂² + α f*(v)`
/// with all other coordinates of `v` held fixed.
///
/// Writing `a = b_i + r_i` and `s² = sq_norm_minus_i`, the solution is
/// `c·a − r_i` with
/// - `c = 1` if `a² + s² ≤ nλ²`,
/// - `c = (1 + αλ√n/|a|)/(1 + α)` if `s² = 0` and `|a| > λ√n`,
/// - otherwise `c = c*`, the unique root in (0, 1) of
///   `(1 + α − αλ√n/√(c²a² + s²))·c = 1`,
///
/// and `−r_i` when `a = 0`. The root is found by bisection (the left-hand
/// side is strictly increasing in `c`) to a residual of 1e-12, with a cap of
/// 200 halvings.
pub fn coord_prox_f_star(
    b_i: f64,
    state: CoordState,
    alpha: f64,
    term: &EmpiricalNormTerm,
) -> Result<f64, ProxError> {
    assert!(alpha > 0.0, "alpha must be positive");
    assert!(state.sq_norm_minus_i >= 0.0, "sq_norm_minus_i must be nonnegative");
    let a = b_i + state.r_i;
    if a == 0.0 {
        return Ok(-state.r_i);
    }
    let s_sq = state.sq_norm_minus_i;
    let lam_sqrt_n = term.lam * term.sqrt_n;
    if a * a + s_sq <= lam_sqrt_n * lam_sqrt_n {
        return Ok(b_i);
    }
    if s_sq == 0.0 {
        // |a| > λ√n holds here because the previous branch failed.
        let c = (1.0 + alpha * lam_sqrt_n / a.abs()) / (1.0 + alpha);
        return Ok(c * a - state.r_i);
    }
    // lhs(c) = (1 + α − αλ√n/√(c²a² + s²))·c is strictly increasing on [0, ∞)
    // with lhs(0) = 0 and lhs(1) > 1, so the root brackets in (0, 1).
    let lhs = |c: f64| (1.0 + alpha - alpha * lam_sqrt_n / (c * c * a * a + s_sq).sqrt()) * c;
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut c = 0.5;
    let mut residual = f64::INFINITY;
    for _ in 0..200 {
        c = 0.5 * (lo + hi);
        let val = lhs(c);
        residual = (val - 1.0).abs();
        if residual <= 1e-12 {
            return Ok(c * a - state.r_i);
        }
        if val < 1.0 {
            lo = c;
        } else {
            hi = c;
        }
    }
    if residual <= 1e-12 {
        Ok(c * a - state.r_i)
    } else {
        Err(ProxError::RootSolverFailure { residual, iters: 200 })
    }
}
