//! Solvers for the single-block problem
//!
//!   min_β  (1/2n)‖r − Xβ‖₂² + ‖Γβ‖₁ + λ‖Xβ‖ₙ,
//!
//! with ‖z‖ₙ = ‖z‖₂/√n. Internally the solvers work on the equivalent
//! problem rescaled by n, splitting it as f(Xβ) + g(β) with
//! f(z) = ½‖r − z‖₂² + λ√n‖z‖₂ and g(β) = n‖Γβ‖₁.
//!
//! Available methods: batch and stochastic Chambolle–Pock, batch and
//! stochastic linearized AMA (SAG or SAGA gradients), batch and stochastic
//! concave-conjugate majorization (CC), batch Condat–Vũ, and an exact
//! oracle that solves the Lasso part by coordinate descent and applies a
//! closed-form group threshold.

use crate::prox::{
    coord_prox_f_star, grad_f_star, prox_f_star, soft_threshold_scalar, CoordState,
    EmpiricalNormTerm, ProxError,
};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basis::DesignBlock;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("non-finite iterate at step {step}")]
    Divergence { step: usize },
    #[error("perturbed objective increased by {increase:.3e} at step {step}")]
    DescentViolation { step: usize, increase: f64 },
    #[error("coordinate descent failed the optimality check after {0} sweeps")]
    NoConvergence(usize),
    #[error(transparent)]
    Prox(#[from] ProxError),
}

/// One block's data: design matrix, working response, penalty diagonal, the
/// empirical-norm penalty level, and a spectral-norm estimate for step-size
/// defaults. Borrows its arrays so backfitting can hand out views without
/// copying.
#[derive(Clone, Copy, Debug)]
pub struct SingleBlockProblem<'a> {
    pub x: ArrayView2<'a, f64>,
    pub r: ArrayView1<'a, f64>,
    pub gamma_diag: ArrayView1<'a, f64>,
    pub lam: f64,
    pub spectral_norm_sq: f64,
}

impl<'a> SingleBlockProblem<'a> {
    pub fn new(
        x: ArrayView2<'a, f64>,
        r: ArrayView1<'a, f64>,
        gamma_diag: ArrayView1<'a, f64>,
        lam: f64,
        spectral_norm_sq: f64,
    ) -> Self {
        assert_eq!(x.nrows(), r.len(), "row count of X must match length of r");
        assert_eq!(x.ncols(), gamma_diag.len(), "one penalty weight per column of X");
        assert!(lam >= 0.0, "lam must be nonnegative");
        SingleBlockProblem { x, r, gamma_diag, lam, spectral_norm_sq }
    }

    /// View of a prebuilt design block together with a working response.
    pub fn from_block(block: &'a DesignBlock, r: ArrayView1<'a, f64>, lam: f64) -> Self {
        Self::new(
            block.basis.view(),
            r,
            block.gamma_diag.view(),
            lam,
            block.spectral_norm_sq,
        )
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }
}

/// (1/2n)‖r − Xβ‖₂² + ‖Γβ‖₁ + λ‖Xβ‖ₙ, evaluated exactly.
pub fn single_block_objective(beta: ArrayView1<f64>, prob: &SingleBlockProblem) -> f64 {
    let nf = prob.n() as f64;
    let xb = prob.x.dot(&beta);
    let mut quad = 0.0;
    for (&ri, &zi) in prob.r.iter().zip(xb.iter()) {
        quad += (ri - zi) * (ri - zi);
    }
    let l1: f64 = prob
        .gamma_diag
        .iter()
        .zip(beta.iter())
        .map(|(&g, &b)| g * b.abs())
        .sum();
    let norm = (xb.dot(&xb) / nf).sqrt();
    quad / (2.0 * nf) + l1 + prob.lam * norm
}

/// Primal step τ and dual step α for the primal-dual solvers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSizes {
    pub tau: f64,
    pub alpha: f64,
}

impl StepSizes {
    pub fn new(tau: f64, alpha: f64) -> Self {
        assert!(tau > 0.0 && alpha > 0.0, "step sizes must be positive");
        // The cap keeps one divergent step from overflowing straight past
        // the per-step magnitude check; sizes anywhere near it are a
        // configuration error regardless.
        assert!(tau < 1e30 && alpha < 1e30, "step sizes must be below 1e30");
        StepSizes { tau, alpha }
    }

    /// α = 1, τ = n/(α‖X‖₂²): equality in the Chambolle–Pock condition
    /// ατ‖X‖₂² ≤ n.
    pub fn cp_default(prob: &SingleBlockProblem) -> Self {
        let alpha = 1.0;
        let tau = prob.n() as f64 / (alpha * prob.spectral_norm_sq.max(f64::MIN_POSITIVE));
        StepSizes { tau, alpha }
    }

    /// α = 1, τ = (4n/3)/‖X‖₂²: equality in the AMA condition
    /// ατ‖X‖₂² ≤ 4n/3 with α < 2.
    pub fn ama_default(prob: &SingleBlockProblem) -> Self {
        let alpha = 1.0;
        let tau =
            4.0 * prob.n() as f64 / (3.0 * alpha * prob.spectral_norm_sq.max(f64::MIN_POSITIVE));
        StepSizes { tau, alpha }
    }

    /// α = 1 with τ slightly inside the strict Condat–Vũ condition
    /// (α + ½)τ‖X‖₂² < n.
    pub fn condat_vu_default(prob: &SingleBlockProblem) -> Self {
        let alpha = 1.0;
        let tau = 0.999 * prob.n() as f64
            / ((alpha + 0.5) * prob.spectral_norm_sq.max(f64::MIN_POSITIVE));
        StepSizes { tau, alpha }
    }

    pub fn cp_feasible(&self, prob: &SingleBlockProblem) -> bool {
        self.alpha * self.tau * prob.spectral_norm_sq <= prob.n() as f64 * (1.0 + 1e-9)
    }

    pub fn ama_feasible(&self, prob: &SingleBlockProblem) -> bool {
        self.alpha < 2.0
            && self.alpha * self.tau * prob.spectral_norm_sq
                <= 4.0 * prob.n() as f64 / 3.0 * (1.0 + 1e-9)
    }

    pub fn condat_vu_feasible(&self, prob: &SingleBlockProblem) -> bool {
        (self.alpha + 0.5) * self.tau * prob.spectral_norm_sq < prob.n() as f64
    }
}

/// Iterates carried across solver calls: primal β (and the previous β for
/// Chambolle–Pock extrapolation), the dual vector, and the running
/// quantities the stochastic solvers maintain incrementally (w = Xᵀdual/n
/// and L² = ‖dual + r‖₂²). `rng_seed` drives row sampling in the stochastic
/// solvers.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverState {
    pub beta: Array1<f64>,
    pub beta_prev: Array1<f64>,
    pub dual: Array1<f64>,
    pub w: Array1<f64>,
    pub l2: f64,
    pub rng_seed: u64,
}

impl SolverState {
    /// β = 0 with the dual at Xβ − r = −r, so L² starts at 0.
    pub fn zero_init(prob: &SingleBlockProblem, rng_seed: u64) -> Self {
        Self::warm(Array1::zeros(prob.d()), prob, rng_seed)
    }

    /// Start from a given β with the dual at Xβ − r.
    pub fn warm(beta: Array1<f64>, prob: &SingleBlockProblem, rng_seed: u64) -> Self {
        assert_eq!(beta.len(), prob.d(), "warm start has wrong dimension");
        let xb = prob.x.dot(&beta);
        let dual = &xb - &prob.r;
        let w = prob.x.t().dot(&dual) / prob.n() as f64;
        let l2 = xb.dot(&xb);
        SolverState { beta_prev: beta.clone(), beta, dual, w, l2, rng_seed }
    }
}

/// Outcome of one solver run. `objective_trace` holds the exact objective
/// after every batch step (or full scan for the stochastic solvers);
/// `perturbed_trace` additionally holds the δ-perturbed objective for the
/// CC solvers and is empty otherwise. `was_reset_to_zero` records whether
/// the final group-sparsity check replaced β with the exact zero vector;
/// `final_state`, when present, keeps the raw pre-reset iterates (with the
/// advanced RNG state for stochastic runs) so callers can inspect the dual
/// and its running sums or continue the run.
#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub beta_hat: Array1<f64>,
    pub objective_trace: Vec<f64>,
    pub perturbed_trace: Vec<f64>,
    pub was_reset_to_zero: bool,
    pub scans_used: f64,
    pub feasibility_warning: bool,
    pub rng_seed: Option<u64>,
    pub final_state: Option<SolverState>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AmaVariant {
    Sag,
    Saga,
}

/// Iterates beyond this magnitude are declared divergent. The cap is far
/// above anything a convergent run produces, yet small enough that the next
/// step's squared norms still evaluate without overflowing to infinity, so
/// divergence surfaces as an error instead of a panic deeper in the solver.
const DIVERGENCE_LIMIT: f64 = 1e100;

fn ensure_finite(beta: &Array1<f64>, dual: &Array1<f64>, step: usize) -> Result<(), SolveError> {
    let ok = |v: &f64| v.is_finite() && v.abs() <= DIVERGENCE_LIMIT;
    if beta.iter().all(ok) && dual.iter().all(ok) {
        Ok(())
    } else {
        Err(SolveError::Divergence { step })
    }
}

fn soft_threshold_vec(x: &Array1<f64>, thresholds: &Array1<f64>) -> Array1<f64> {
    let mut out = x.clone();
    for (v, &t) in out.iter_mut().zip(thresholds.iter()) {
        *v = soft_threshold_scalar(*v, t);
    }
    out
}

fn norm2(z: &Array1<f64>) -> f64 {
    z.dot(z).sqrt()
}

/// Batch Chambolle–Pock. Each step updates the dual by the proximal map of
/// f* at the extrapolated primal point and then the primal by elementwise
/// soft-thresholding:
///
///   v⁺ = prox_{αf*}(v + αX(2β − β_prev)),
///   β⁺ = 𝒮(β − (τ/n)Xᵀv⁺, τ·Γ).
///
/// After the final step, if ‖αX(2β − β_prev) + v + r‖ₙ ≤ λ held in that
/// step (the slack variable of the equivalent linearized ADMM is zero), the
/// returned β is exactly the zero vector.
pub fn solve_cp_batch(
    prob: &SingleBlockProblem,
    steps: usize,
    sizes: &StepSizes,
    init: &SolverState,
) -> Result<SolveReport, SolveError> {
    let nf = prob.n() as f64;
    let term = EmpiricalNormTerm::new(prob.r.to_owned(), prob.lam);
    let thresholds = prob.gamma_diag.mapv(|g| g * sizes.tau);
    let mut beta = init.beta.clone();
    let mut beta_prev = init.beta_prev.clone();
    let mut v = init.dual.clone();
    let mut trace = Vec::with_capacity(steps);
    let mut reset = false;
    for k in 0..steps {
        let extrap = 2.0 * &beta - &beta_prev;
        let b = &v + &(prob.x.dot(&extrap) * sizes.alpha);
        if k + 1 == steps {
            let arg = &b + &prob.r;
            reset = norm2(&arg) / nf.sqrt() <= prob.lam;
        }
        v = prox_f_star(b.view(), sizes.alpha, &term);
        let grad = prob.x.t().dot(&v);
        let cand = &beta - &(grad * (sizes.tau / nf));
        beta_prev = std::mem::replace(&mut beta, soft_threshold_vec(&cand, &thresholds));
        ensure_finite(&beta, &v, k)?;
        trace.push(single_block_objective(beta.view(), prob));
    }
    let final_state = {
        let w = prob.x.t().dot(&v) / nf;
        let arg = &v + &prob.r;
        let l2 = arg.dot(&arg);
        SolverState { beta: beta.clone(), beta_prev, dual: v, w, l2, rng_seed: init.rng_seed }
    };
    let beta_hat = if reset { Array1::zeros(prob.d()) } else { beta };
    Ok(SolveReport {
        beta_hat,
        objective_trace: trace,
        perturbed_trace: Vec::new(),
        was_reset_to_zero: reset,
        scans_used: steps as f64,
        feasibility_warning: !sizes.cp_feasible(prob),
        rng_seed: None,
        final_state: Some(final_state),
    })
}

/// Batch linearized AMA. Each step computes the auxiliary point
/// z⁺ = ∇f*(u) = 𝒯(r + u, λ√n) and performs
///
///   β⁺ = 𝒮(β − (τ/n)Xᵀ(u + α(Xβ − z⁺)), τ·Γ),
///   u⁺ = u + α(Xβ⁺ − z⁺).
///
/// After the final step, if ‖r + u‖ₙ ≤ λ for the final dual, the returned β
/// is exactly the zero vector.
pub fn solve_ama_batch(
    prob: &SingleBlockProblem,
    steps: usize,
    sizes: &StepSizes,
    init: &SolverState,
) -> Result<SolveReport, SolveError> {
    let nf = prob.n() as f64;
    let term = EmpiricalNormTerm::new(prob.r.to_owned(), prob.lam);
    let thresholds = prob.gamma_diag.mapv(|g| g * sizes.tau);
    let mut beta = init.beta.clone();
    let mut u = init.dual.clone();
    let mut trace = Vec::with_capacity(steps);
    for k in 0..steps {
        let z = grad_f_star(u.view(), &term);
        let xb = prob.x.dot(&beta);
        let inner = &u + &((&xb - &z) * sizes.alpha);
        let grad = prob.x.t().dot(&inner);
        let cand = &beta - &(grad * (sizes.tau / nf));
        beta = soft_threshold_vec(&cand, &thresholds);
        let xb_new = prob.x.dot(&beta);
        u = &u + &((&xb_new - &z) * sizes.alpha);
        ensure_finite(&beta, &u, k)?;
        trace.push(single_block_objective(beta.view(), prob));
    }
    let arg = &u + &prob.r;
    let reset = steps > 0 && norm2(&arg) / nf.sqrt() <= prob.lam;
    let final_state = {
        let w = prob.x.t().dot(&u) / nf;
        let l2 = arg.dot(&arg);
        SolverState {
            beta: beta.clone(),
            beta_prev: beta.clone(),
            dual: u,
            w,
            l2,
            rng_seed: init.rng_seed,
        }
    };
    let beta_hat = if reset { Array1::zeros(prob.d()) } else { beta };
    Ok(SolveReport {
        beta_hat,
        objective_trace: trace,
        perturbed_trace: Vec::new(),
        was_reset_to_zero: reset,
        scans_used: steps as f64,
        feasibility_warning: !sizes.ama_feasible(prob),
        rng_seed: None,
        final_state: Some(final_state),
    })
}

/// Stochastic Chambolle–Pock. Each of the nB row steps picks i uniformly,
/// minimizes the dual prox objective in coordinate i alone (O(d) via the
/// running total L² = ‖v + r‖₂²), and takes a SAGA-style primal step
///
///   G = Xᵢ(vᵢ⁺ − vᵢ) + w,   β⁺ = 𝒮(β − τG, τ·Γ),   w⁺ = w + Xᵢ(vᵢ⁺ − vᵢ)/n.
///
/// The objective is recorded once per scan (n row steps). The same
/// group-sparsity reset as the batch version runs once at the end, using
/// the final (β, β_prev, v).
pub fn solve_cp_stochastic(
    prob: &SingleBlockProblem,
    batch_steps: usize,
    sizes: &StepSizes,
    init: &SolverState,
) -> Result<SolveReport, SolveError> {
    let n = prob.n();
    let d = prob.d();
    let nf = n as f64;
    let term = EmpiricalNormTerm::new(prob.r.to_owned(), prob.lam);
    let thresholds = prob.gamma_diag.mapv(|g| g * sizes.tau);
    let mut beta = init.beta.clone();
    let mut beta_prev = init.beta_prev.clone();
    let mut beta_next = Array1::zeros(d);
    let mut v = init.dual.clone();
    let mut w = init.w.clone();
    let mut l2 = init.l2.max(0.0);
    let mut rng = crate::rng::SplitMix64::new(init.rng_seed);
    let mut trace = Vec::with_capacity(batch_steps);
    for step in 0..n * batch_steps {
        let i = rng.next_index(n);
        let xi = prob.x.row(i);
        let extrap = 2.0 * xi.dot(&beta) - xi.dot(&beta_prev);
        let b_i = v[i] + sizes.alpha * extrap;
        let vpr = v[i] + prob.r[i];
        let state = CoordState { r_i: prob.r[i], sq_norm_minus_i: (l2 - vpr * vpr).max(0.0) };
        let v_new = coord_prox_f_star(b_i, state, sizes.alpha, &term)?;
        let dv = v_new - v[i];
        for j in 0..d {
            let cand = beta[j] - sizes.tau * (w[j] + dv * xi[j]);
            beta_next[j] = soft_threshold_scalar(cand, thresholds[j]);
        }
        std::mem::swap(&mut beta_prev, &mut beta);
        std::mem::swap(&mut beta, &mut beta_next);
        for j in 0..d {
            w[j] += dv * xi[j] / nf;
        }
        let vpr_new = v_new + prob.r[i];
        l2 = (l2 - vpr * vpr + vpr_new * vpr_new).max(0.0);
        v[i] = v_new;
        if (step + 1) % n == 0 {
            ensure_finite(&beta, &v, step)?;
            trace.push(single_block_objective(beta.view(), prob));
        }
    }
    let reset = if batch_steps > 0 {
        let extrap = 2.0 * &beta - &beta_prev;
        let arg = &(&v + &(prob.x.dot(&extrap) * sizes.alpha)) + &prob.r;
        norm2(&arg) / nf.sqrt() <= prob.lam
    } else {
        false
    };
    let final_state = SolverState {
        beta: beta.clone(),
        beta_prev,
        dual: v,
        w,
        l2,
        rng_seed: rng.state(),
    };
    let beta_hat = if reset { Array1::zeros(d) } else { beta };
    Ok(SolveReport {
        beta_hat,
        objective_trace: trace,
        perturbed_trace: Vec::new(),
        was_reset_to_zero: reset,
        scans_used: batch_steps as f64,
        feasibility_warning: false,
        rng_seed: Some(init.rng_seed),
        final_state: Some(final_state),
    })
}

/// Stochastic linearized AMA. Each row step updates one dual coordinate
/// using the scalar form of ∇f*, refreshes the running norm L², and takes a
/// primal step with either the SAG gradient
///
///   G = w + (1/n)Xᵢ(uᵢ⁺ − uᵢ) + αXᵢ(Xᵢᵀβ − ∇ᵢf*(u⁺))
///
/// or the SAGA gradient, which replaces the 1/n factor by 1. The reset
/// check ‖r + u‖ₙ ≤ λ runs once after the last scan.
pub fn solve_ama_stochastic(
    prob: &SingleBlockProblem,
    batch_steps: usize,
    sizes: &StepSizes,
    init: &SolverState,
    variant: AmaVariant,
) -> Result<SolveReport, SolveError> {
    let n = prob.n();
    let d = prob.d();
    let nf = n as f64;
    let sqrt_n = nf.sqrt();
    let lam_sqrt_n = prob.lam * sqrt_n;
    let thresholds = prob.gamma_diag.mapv(|g| g * sizes.tau);
    let mut beta = init.beta.clone();
    let mut beta_next = Array1::zeros(d);
    let mut u = init.dual.clone();
    let mut w = init.w.clone();
    let mut l2 = init.l2.max(0.0);
    let mut rng = crate::rng::SplitMix64::new(init.rng_seed);
    let mut trace = Vec::with_capacity(batch_steps);
    let shrink = |l: f64| if l > lam_sqrt_n { 1.0 - lam_sqrt_n / l } else { 0.0 };
    for step in 0..n * batch_steps {
        let i = rng.next_index(n);
        let xi = prob.x.row(i);
        let upr = u[i] + prob.r[i];
        let grad_i_old = shrink(l2.sqrt()) * upr;
        let xib = xi.dot(&beta);
        let u_new = u[i] + sizes.alpha * (xib - grad_i_old);
        let upr_new = u_new + prob.r[i];
        l2 = (l2 - upr * upr + upr_new * upr_new).max(0.0);
        let grad_i_new = shrink(l2.sqrt()) * upr_new;
        let du = u_new - u[i];
        let correction = match variant {
            AmaVariant::Sag => du / nf,
            AmaVariant::Saga => du,
        };
        let a = correction + sizes.alpha * (xib - grad_i_new);
        for j in 0..d {
            let cand = beta[j] - sizes.tau * (w[j] + a * xi[j]);
            beta_next[j] = soft_threshold_scalar(cand, thresholds[j]);
        }
        std::mem::swap(&mut beta, &mut beta_next);
        for j in 0..d {
            w[j] += du * xi[j] / nf;
        }
        u[i] = u_new;
        if (step + 1) % n == 0 {
            ensure_finite(&beta, &u, step)?;
            trace.push(single_block_objective(beta.view(), prob));
        }
    }
    let arg = &u + &prob.r;
    let reset = batch_steps > 0 && norm2(&arg) / sqrt_n <= prob.lam;
    let final_state = SolverState {
        beta: beta.clone(),
        beta_prev: beta.clone(),
        dual: u,
        w,
        l2,
        rng_seed: rng.state(),
    };
    let beta_hat = if reset { Array1::zeros(d) } else { beta };
    Ok(SolveReport {
        beta_hat,
        objective_trace: trace,
        perturbed_trace: Vec::new(),
        was_reset_to_zero: reset,
        scans_used: batch_steps as f64,
        feasibility_warning: false,
        rng_seed: Some(init.rng_seed),
        final_state: Some(final_state),
    })
}

fn perturbed_objective(beta: ArrayView1<f64>, prob: &SingleBlockProblem, delta: f64) -> f64 {
    let nf = prob.n() as f64;
    let xb = prob.x.dot(&beta);
    let mut quad = 0.0;
    for (&ri, &zi) in prob.r.iter().zip(xb.iter()) {
        quad += (ri - zi) * (ri - zi);
    }
    let l1: f64 = prob
        .gamma_diag
        .iter()
        .zip(beta.iter())
        .map(|(&g, &b)| g * b.abs())
        .sum();
    quad / (2.0 * nf) + l1 + prob.lam * (xb.dot(&xb) / nf + delta).sqrt()
}

/// Batch concave-conjugate majorization. Each step majorizes the perturbed
/// penalty λ√(‖Xβ‖ₙ² + δ) by its tangent line in ‖Xβ‖ₙ² and takes a
/// proximal-gradient step with the adaptive size
///
///   τᵏ = (n/‖X‖₂²) / (1 + λ/√(‖Xβ‖ₙ² + δ)),
///
/// which by construction never increases the perturbed objective. Any
/// increase beyond 1e-10 is reported as an internal error, since it can
/// only come from a step-size or gradient bug.
pub fn solve_cc_batch(
    prob: &SingleBlockProblem,
    steps: usize,
    delta: f64,
    init: &SolverState,
) -> Result<SolveReport, SolveError> {
    assert!(delta > 0.0, "delta must be positive");
    let nf = prob.n() as f64;
    let tau_base = nf / prob.spectral_norm_sq.max(f64::MIN_POSITIVE);
    let mut beta = init.beta.clone();
    let mut trace = Vec::with_capacity(steps);
    let mut perturbed_trace = Vec::with_capacity(steps);
    let mut prev = perturbed_objective(beta.view(), prob, delta);
    for k in 0..steps {
        let xb = prob.x.dot(&beta);
        let root = (xb.dot(&xb) / nf + delta).sqrt();
        let tau_k = tau_base / (1.0 + prob.lam / root);
        let inner = &(&xb - &prob.r) + &(xb.mapv(|z| z * prob.lam / root));
        let grad = prob.x.t().dot(&inner);
        let cand = &beta - &(grad * (tau_k / nf));
        let thresholds = prob.gamma_diag.mapv(|g| g * tau_k);
        beta = soft_threshold_vec(&cand, &thresholds);
        ensure_finite(&beta, &beta, k)?;
        let pert = perturbed_objective(beta.view(), prob, delta);
        if pert > prev + 1e-10 {
            return Err(SolveError::DescentViolation { step: k, increase: pert - prev });
        }
        prev = pert;
        perturbed_trace.push(pert);
        trace.push(single_block_objective(beta.view(), prob));
    }
    Ok(SolveReport {
        beta_hat: beta,
        objective_trace: trace,
        perturbed_trace,
        was_reset_to_zero: false,
        scans_used: steps as f64,
        feasibility_warning: false,
        rng_seed: None,
        final_state: None,
    })
}

/// Stochastic concave-conjugate majorization. Each outer step fixes the
/// majorization at the current β (through the factor
/// scale = 1 + λ/√(‖Xβ‖ₙ² + δ)) and runs n SAGA iterations on the
/// resulting rescaled Lasso, maintaining the residual table v = Xβ̃ − r/scale
/// and its running column average w = Xᵀv/n. One outer step costs one scan.
pub fn solve_cc_stochastic(
    prob: &SingleBlockProblem,
    batch_steps: usize,
    tau: f64,
    delta: f64,
    init: &SolverState,
) -> Result<SolveReport, SolveError> {
    assert!(tau > 0.0 && delta > 0.0, "tau and delta must be positive");
    let n = prob.n();
    let d = prob.d();
    let nf = n as f64;
    let mut beta = init.beta.clone();
    let mut rng = crate::rng::SplitMix64::new(init.rng_seed);
    let mut trace = Vec::with_capacity(batch_steps);
    let mut perturbed_trace = Vec::with_capacity(batch_steps);
    for k in 0..batch_steps {
        let xb = prob.x.dot(&beta);
        let root = (xb.dot(&xb) / nf + delta).sqrt();
        let scale = 1.0 + prob.lam / root;
        let mut v = &xb - &(prob.r.mapv(|ri| ri / scale));
        let mut w = prob.x.t().dot(&v) / nf;
        let thresholds = prob.gamma_diag.mapv(|g| g * tau / scale);
        let mut btil = beta;
        let mut btil_next = Array1::zeros(d);
        for _ in 0..n {
            let i = rng.next_index(n);
            let xi = prob.x.row(i);
            let v_new = xi.dot(&btil) - prob.r[i] / scale;
            let dv = v_new - v[i];
            for j in 0..d {
                let cand = btil[j] - tau * (w[j] + dv * xi[j]);
                btil_next[j] = soft_threshold_scalar(cand, thresholds[j]);
            }
            std::mem::swap(&mut btil, &mut btil_next);
            for j in 0..d {
                w[j] += dv * xi[j] / nf;
            }
            v[i] = v_new;
        }
        beta = btil;
        ensure_finite(&beta, &beta, k)?;
        perturbed_trace.push(perturbed_objective(beta.view(), prob, delta));
        trace.push(single_block_objective(beta.view(), prob));
    }
    Ok(SolveReport {
        beta_hat: beta,
        objective_trace: trace,
        perturbed_trace,
        was_reset_to_zero: false,
        scans_used: batch_steps as f64,
        feasibility_warning: false,
        rng_seed: Some(init.rng_seed),
        final_state: None,
    })
}

fn project_ball(z: Array1<f64>, radius: f64) -> Array1<f64> {
    let norm = norm2(&z);
    if norm <= radius || norm == 0.0 {
        z
    } else {
        z * (radius / norm)
    }
}

/// Batch Condat–Vũ three-operator splitting, which handles the smooth
/// squared-error term by its gradient rather than a prox:
///
///   β⁺ = 𝒮(β − (τ/n)Xᵀ(u + Xβ − r), τ·Γ),
///   u⁺ = Π_{‖z‖₂ ≤ λ√n}(u + αX(2β⁺ − β)).
///
/// The dual iterate stays inside the radius-λ√n ball at every step; the
/// initial dual is projected into the ball before the first iteration.
pub fn solve_condat_vu(
    prob: &SingleBlockProblem,
    steps: usize,
    sizes: &StepSizes,
    init: &SolverState,
) -> Result<SolveReport, SolveError> {
    let nf = prob.n() as f64;
    let radius = prob.lam * nf.sqrt();
    let thresholds = prob.gamma_diag.mapv(|g| g * sizes.tau);
    let mut beta = init.beta.clone();
    let mut u = project_ball(init.dual.clone(), radius);
    let mut trace = Vec::with_capacity(steps);
    for k in 0..steps {
        let xb = prob.x.dot(&beta);
        let inner = &(&u + &xb) - &prob.r;
        let grad = prob.x.t().dot(&inner);
        let cand = &beta - &(grad * (sizes.tau / nf));
        let beta_new = soft_threshold_vec(&cand, &thresholds);
        let extrap = 2.0 * &beta_new - &beta;
        u = project_ball(&u + &(prob.x.dot(&extrap) * sizes.alpha), radius);
        beta = beta_new;
        ensure_finite(&beta, &u, k)?;
        trace.push(single_block_objective(beta.view(), prob));
    }
    let final_state = {
        let w = prob.x.t().dot(&u) / nf;
        let arg = &u + &prob.r;
        let l2 = arg.dot(&arg);
        SolverState {
            beta: beta.clone(),
            beta_prev: beta.clone(),
            dual: u,
            w,
            l2,
            rng_seed: init.rng_seed,
        }
    };
    Ok(SolveReport {
        beta_hat: beta,
        objective_trace: trace,
        perturbed_trace: Vec::new(),
        was_reset_to_zero: false,
        scans_used: steps as f64,
        feasibility_warning: !sizes.condat_vu_feasible(prob),
        rng_seed: None,
        final_state: Some(final_state),
    })
}

/// Exact minimizer of the Lasso part (1/2n)‖r − Xβ‖₂² + ‖Γβ‖₁ (the
/// empirical-norm penalty is ignored here) by cyclic coordinate descent
/// with residual maintenance, accelerated by direct solves on the
/// identified support. Termination is certified: the routine returns only
/// when every coordinate satisfies the stationarity conditions
/// |Xⱼᵀ(r − Xβ)/n| ≤ Γⱼ + tol at zero coordinates and
/// |Xⱼᵀ(r − Xβ)/n − sign(βⱼ)Γⱼ| ≤ tol at active ones.
pub fn lasso_exact(prob: &SingleBlockProblem, tol: f64) -> Result<Array1<f64>, SolveError> {
    lasso_exact_warm(prob, tol, Array1::zeros(prob.d()))
}

/// In-place lower Cholesky factor of a symmetric positive definite matrix.
/// Returns `None` when a pivot falls below a scale-relative floor, which
/// covers both indefiniteness and numerically dependent columns.
fn cholesky_factor(mut g: Array2<f64>) -> Option<Array2<f64>> {
    let a = g.nrows();
    let floor = g.diag().iter().fold(0.0_f64, |m, &v| m.max(v)) * 1e-13;
    if floor <= 0.0 {
        return None;
    }
    for k in 0..a {
        let mut diag = g[[k, k]];
        for m in 0..k {
            diag -= g[[k, m]] * g[[k, m]];
        }
        if diag <= floor {
            return None;
        }
        let l = diag.sqrt();
        g[[k, k]] = l;
        for i in k + 1..a {
            let mut v = g[[i, k]];
            for m in 0..k {
                v -= g[[i, m]] * g[[k, m]];
            }
            g[[i, k]] = v / l;
        }
    }
    Some(g)
}

/// Solve LLᵀ·z = b given the lower factor from [`cholesky_factor`].
fn cholesky_solve(l: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let a = l.nrows();
    let mut z = b.clone();
    for i in 0..a {
        let mut v = z[i];
        for k in 0..i {
            v -= l[[i, k]] * z[k];
        }
        z[i] = v / l[[i, i]];
    }
    for i in (0..a).rev() {
        let mut v = z[i];
        for k in i + 1..a {
            v -= l[[k, i]] * z[k];
        }
        z[i] = v / l[[i, i]];
    }
    z
}

/// [`lasso_exact`] started from a given β instead of zero. The certificate
/// checked at exit is the same, so the start point only affects speed;
/// backfitting warm-starts each block visit at its previous coefficients.
///
/// Coordinate descent alone has a painfully slow tail on nearly collinear
/// designs (tensor-product spline columns with a tiny penalty are the worst
/// case), so whenever the support settles the routine also solves the
/// restriction to that support exactly: on A = {j : βⱼ ≠ 0 or Γⱼ = 0} with
/// the iterate's signs s, the orthant-restricted minimizer solves
/// (XᴀᵀXᴀ)βᴀ = Xᴀᵀr − nΓᴀs. A solution that keeps every sign lies in the
/// iterate's orthant and can only lower the objective, so it is adopted;
/// the full certificate still decides termination either way.
pub fn lasso_exact_warm(
    prob: &SingleBlockProblem,
    tol: f64,
    init: Array1<f64>,
) -> Result<Array1<f64>, SolveError> {
    assert!(tol > 0.0, "tol must be positive");
    let n = prob.n();
    let d = prob.d();
    assert_eq!(init.len(), d, "warm start has wrong dimension");
    let nf = n as f64;
    let x = prob.x;
    let colsq: Vec<f64> = (0..d).map(|j| x.column(j).dot(&x.column(j))).collect();
    let mut beta = init;
    let mut res = &prob.r - &x.dot(&beta);
    let update_coord = |j: usize, beta: &mut Array1<f64>, res: &mut Array1<f64>| -> f64 {
        if colsq[j] == 0.0 {
            return 0.0;
        }
        let col = x.column(j);
        let arg = col.dot(res) + colsq[j] * beta[j];
        let new = soft_threshold_scalar(arg, nf * prob.gamma_diag[j]) / colsq[j];
        let diff = new - beta[j];
        if diff != 0.0 {
            for (ri, &cij) in res.iter_mut().zip(col.iter()) {
                *ri -= cij * diff;
            }
            beta[j] = new;
        }
        diff
    };
    let kkt_ok = |beta: &Array1<f64>, res: &Array1<f64>| -> bool {
        for j in 0..d {
            let g = x.column(j).dot(res) / nf;
            let ok = if beta[j] == 0.0 {
                g.abs() <= prob.gamma_diag[j] + tol
            } else {
                (g - beta[j].signum() * prob.gamma_diag[j]).abs() <= tol
            };
            if !ok {
                return false;
            }
        }
        true
    };
    let mut last_face: Option<(Vec<usize>, Vec<i8>)> = None;
    let cap = 5000;
    for _ in 0..cap {
        for j in 0..d {
            update_coord(j, &mut beta, &mut res);
        }
        // Polish the active set cheaply before paying for the full check.
        for _ in 0..200 {
            let active: Vec<usize> = (0..d).filter(|&j| beta[j] != 0.0).collect();
            let mut max_effect = 0.0_f64;
            for &j in &active {
                let diff = update_coord(j, &mut beta, &mut res);
                max_effect = max_effect.max(diff.abs() * colsq[j].sqrt() / nf.sqrt());
            }
            if max_effect <= tol * 1e-2 {
                break;
            }
        }
        // Direct solve on the identified support, at most once per face.
        let active: Vec<usize> =
            (0..d).filter(|&j| beta[j] != 0.0 || prob.gamma_diag[j] == 0.0).collect();
        let signs: Vec<i8> = active
            .iter()
            .map(|&j| {
                if prob.gamma_diag[j] == 0.0 {
                    0
                } else if beta[j] > 0.0 {
                    1
                } else {
                    -1
                }
            })
            .collect();
        let face = (active, signs);
        if !face.0.is_empty() && last_face.as_ref() != Some(&face) {
            if let Some(sol) = solve_on_face(prob, &face.0, &face.1) {
                for b in beta.iter_mut() {
                    *b = 0.0;
                }
                for (&j, &v) in face.0.iter().zip(sol.iter()) {
                    beta[j] = v;
                }
                res = prob.r.to_owned();
                for (&j, &v) in face.0.iter().zip(sol.iter()) {
                    for (ri, &cij) in res.iter_mut().zip(x.column(j).iter()) {
                        *ri -= cij * v;
                    }
                }
            }
            last_face = Some(face);
        }
        if kkt_ok(&beta, &res) {
            return Ok(beta);
        }
    }
    Err(SolveError::NoConvergence(cap))
}

/// Exact minimizer of the Lasso objective restricted to the orthant given by
/// `active` and `signs` (0 marks an unpenalized coordinate): solves
/// (XᴀᵀXᴀ)βᴀ = Xᴀᵀr − nΓᴀs with one iterative-refinement pass, and returns
/// the solution only when it keeps every penalized sign, i.e. actually lies
/// in that orthant. Returns `None` on numerically dependent columns.
fn solve_on_face(
    prob: &SingleBlockProblem,
    active: &[usize],
    signs: &[i8],
) -> Option<Array1<f64>> {
    let nf = prob.n() as f64;
    let xa = prob.x.select(Axis(1), active);
    let gram = xa.t().dot(&xa);
    let mut rhs = xa.t().dot(&prob.r);
    for ((v, &j), &s) in rhs.iter_mut().zip(active).zip(signs) {
        *v -= nf * prob.gamma_diag[j] * s as f64;
    }
    let l = cholesky_factor(gram.clone())?;
    let mut sol = cholesky_solve(&l, &rhs);
    let resid = &rhs - &gram.dot(&sol);
    sol += &cholesky_solve(&l, &resid);
    for (&s, &v) in signs.iter().zip(sol.iter()) {
        if s != 0 && (s as f64) * v <= 0.0 {
            return None;
        }
    }
    Some(sol)
}

/// ‖Xβ̃‖ₙ for a Lasso minimizer β̃: the level of the empirical-norm penalty
/// at and above which the doubly penalized solution is exactly zero.
pub fn lambda_zero(prob: &SingleBlockProblem, beta_tilde: ArrayView1<f64>) -> f64 {
    let xb = prob.x.dot(&beta_tilde);
    (xb.dot(&xb) / prob.n() as f64).sqrt()
}

/// Closed-form map from a Lasso minimizer β̃ to the minimizer of the doubly
/// penalized problem: β̂ = (1 − λ/‖Xβ̃‖ₙ)₊ β̃, with β̂ = 0 when ‖Xβ̃‖ₙ = 0.
pub fn threshold_lasso_solution(
    beta_tilde: ArrayView1<f64>,
    prob: &SingleBlockProblem,
) -> Array1<f64> {
    let norm = lambda_zero(prob, beta_tilde);
    if norm == 0.0 {
        return Array1::zeros(beta_tilde.len());
    }
    let factor = (1.0 - prob.lam / norm).max(0.0);
    beta_tilde.mapv(|b| factor * b)
}
