//! Sequential Monte Carlo sampling of truncated multivariate normals.
//!
//! The target is built up in two phases. First a Student-t kernel is pushed
//! through a family of shrinking box truncations controlled by an adaptive
//! schedule; the heavy tails keep Metropolis moves mobile while mass is cut
//! away. Then the degrees of freedom are doubled up to the Gaussian limit at
//! the final region. Reweighting steps accumulate an unbiased estimate of the
//! truncated region's probability as a byproduct, and a finished particle
//! system can be bridged to nearby parameter values far more cheaply than
//! sampling from scratch.

mod particles;
mod recycle;
mod sampler;
mod target;

pub use particles::{
    adapt_kappa, ess, resample_systematic, reweight_to_next_target, rw_mh_move, KernelConfig,
    ParticleSystem,
};
pub use recycle::{recycle_to_new_params, RecycleOutcome};
pub use sampler::{
    advance_schedule, sample_tmvn, Phase, ScheduleState, SmcConfig, SmcStats, StepRecord,
    TmvnSample,
};
pub use target::{initial_lower_bounds, Region, TargetSpec};
