//! Doubly penalized additive ANOVA modeling (DPAM).
//!
//! This crate fits regression and classification models of the form
//!
//! ```text
//! f(x) = β₀ + Σ_{S} f_S(x_S),
//! ```
//!
//! where each component `f_S` is a main effect or a low-order interaction
//! represented in a truncated spline basis, and the fit is doubly penalized:
//! a weighted L1 penalty `‖Γ_S β_S‖₁` controls the roughness of each
//! component and an empirical-norm penalty `λ‖X_S β_S‖ₙ` switches whole
//! components off.
//!
//! Training is block-wise backfitting: cycle over components, and solve for
//! one coefficient block at a time with the others held fixed. The
//! single-block subproblem
//!
//! ```text
//! min_β  (1/2n)‖r − Xβ‖₂² + ‖Γβ‖₁ + λ‖Xβ‖ₙ
//! ```
//!
//! can be solved by several interchangeable methods: batch and stochastic
//! primal-dual splitting ([`solve_cp_batch`], [`solve_ama_batch`],
//! [`solve_cp_stochastic`], [`solve_ama_stochastic`]), a
//! majorize-minimize scheme ([`solve_cc_batch`], [`solve_cc_stochastic`]),
//! a three-operator splitting method ([`solve_condat_vu`]), and an exact
//! path via a Lasso solve followed by a closed-form shrinkage
//! ([`lasso_exact`], [`threshold_lasso_solution`]).
//!
//! Modules:
//! - [`prox`]: thresholding operators, proximal maps and conjugates of the
//!   empirical-norm term.
//! - [`basis`]: knots, univariate and tensor-product spline bases, penalty
//!   diagonals, block enumeration.
//! - [`single_block`]: the single-block solvers.
//! - [`backfit`]: multi-block training, prediction, model (de)serialization.
//! - [`datagen`]: seeded synthetic data generators for benchmark tasks.
//! - [`rng`]: the counter-based random number generator used throughout.

pub mod backfit;
pub mod basis;
pub mod datagen;
pub mod prox;
pub mod rng;
pub mod single_block;

mod book;

pub use backfit::{
    check_and_recovery, epoch_cost, fit_linear, fit_logistic, predict, predict_linear_predictor,
    training_objective, BasisSpec, BlockCoef, DpamModel, FitError, ModelFamily, RecoveryDecision,
    SolverKind, TrainConfig, TrainTrace,
};
pub use basis::{
    compute_knots, enumerate_blocks, gamma_matrix, spectral_norm_sq, tensor_block_basis,
    tensor_columns, BlockId, DesignBlock, KnotGrid,
};
pub use datagen::{
    g_functions, gen_logistic, gen_phase_shift, gen_regression, PhaseShiftData, SyntheticFamily,
    SyntheticSpec,
};
pub use prox::{
    coord_prox_f_star, f_star_value, grad_f_star, joint_soft_threshold, prox_f, prox_f_star,
    soft_threshold, CoordState, EmpiricalNormTerm, ThresholdSpec,
};
pub use single_block::{
    lambda_zero, lasso_exact, lasso_exact_warm, single_block_objective, solve_ama_batch,
    solve_ama_stochastic, solve_cc_batch, solve_cc_stochastic, solve_condat_vu, solve_cp_batch,
    solve_cp_stochastic, threshold_lasso_solution, AmaVariant, SingleBlockProblem, SolveError,
    SolveReport, SolverState, StepSizes,
};
