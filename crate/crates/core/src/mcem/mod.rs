//! Monte Carlo EM for the multivariate probit likelihood. The E step draws
//! weighted truncated-normal samples per observation (fresh or recycled),
//! the M step maximizes the resulting surrogate by cycling closed-form
//! conditional updates, and the driver schedules particle counts, averages
//! the final iterations, and reports identified estimates with
//! finite-difference standard errors.

mod design;
mod driver;
mod mstep;

pub use design::{e_step, EStepConfig, ModelDesign, SufficientMoments, WeightedLatentSample};
pub use driver::{
    covariance_coords, run_mcem, standard_errors, variance_reduction_update,
    variance_reduction_zeta, EmPhase, EmState, EmTrace, McemConfig, ParticleSchedule, SeConfig,
    StandardErrors,
};
pub use mstep::{
    beta_hat, cycle_conditional_max, d_solve, m_step, omega_iterate, q_function, q_hat, s_hat,
    sigma_hat, tilde_q, MaxMode, MaximizerConfig, Objective,
};
