//! The two-phase sampler: an ESS-controlled truncation schedule under a
//! heavy-tailed Student-t kernel, followed by annealing of the degrees of
//! freedom up to the Gaussian limit at the final region.

use nalgebra::{DMatrix, DVector};

use super::particles::{
    adapt_kappa, resample_systematic, rw_mh_move, KernelConfig, ParticleSystem,
};
use super::target::{flip_matrix, flip_vector, initial_lower_bounds, Region, TargetSpec};
use crate::probit::Orthant;
use crate::{Error, Result};

/// Floor on the effective sample size a committed truncation stride may
/// leave, as a fraction of the particle count: 1 - 0.6/sqrt(p). The
/// membership cut of a stride concentrates exponentially with the dimension,
/// so wider problems get proportionally finer strides; the floor also means
/// no single stride can cut the system down to nothing.
fn stride_guard(p: usize, m: usize) -> f64 {
    ((1.0 - 0.6 / (p as f64).sqrt()) * m as f64).max(2.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Truncation,
    DofAnneal,
    ParamShift,
}

/// State of the adaptive schedule driving one phase of the sampler.
#[derive(Clone, Copy, Debug)]
pub struct ScheduleState {
    pub theta: f64,
    pub theta_final: f64,
    pub zeta: f64,
    pub delta_theta_min: f64,
    pub ess_star: f64,
    pub phase: Phase,
}

/// One Robbins-Monro update: move theta by the ESS surplus of the previous
/// step (scaled by 1/M), floored at the minimum step and clamped at the end.
pub fn advance_schedule(schedule: &mut ScheduleState, observed_ess: f64, m: usize) {
    let correction = schedule.zeta * (observed_ess - schedule.ess_star) / m as f64;
    let step = correction.max(schedule.delta_theta_min);
    schedule.theta = (schedule.theta + step).min(schedule.theta_final);
}

/// Sampler settings. The defaults reproduce the reference configuration used
/// throughout the tests; only the particle count routinely needs changing.
#[derive(Clone, Debug)]
pub struct SmcConfig {
    /// Number of particles M.
    pub particles: usize,
    /// Resampling threshold as a fraction r of M.
    pub ess_fraction: f64,
    /// Gain zeta of the schedule feedback.
    pub schedule_gain: f64,
    /// Smallest schedule step.
    pub min_theta_step: f64,
    pub target_acceptance: f64,
    /// Metropolis sweeps after each reweight.
    pub moves_per_step: usize,
    /// Degrees of freedom of the initial Student kernel.
    pub nu_init: f64,
    /// Annealing stops once nu reaches this value and switches to the
    /// Gaussian target.
    pub nu_max: f64,
    /// When set, the first schedule step jumps straight to this theta and the
    /// outcome records the mass estimate right after it. Used by the scaling
    /// experiment.
    pub forced_first_theta: Option<f64>,
    /// Keep a per-step diagnostic trace.
    pub record_steps: bool,
}

impl Default for SmcConfig {
    fn default() -> Self {
        Self {
            particles: 4000,
            ess_fraction: 0.9,
            schedule_gain: 1.0,
            min_theta_step: 1e-4,
            target_acceptance: 0.3,
            moves_per_step: 2,
            nu_init: 4.0,
            nu_max: 512.0,
            forced_first_theta: None,
            record_steps: false,
        }
    }
}

impl SmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.particles < 2 {
            return Err(Error::InvalidArgument(
                "particle count must be at least 2".into(),
            ));
        }
        if !(self.ess_fraction > 0.0 && self.ess_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "ess fraction must lie in (0,1), got {}",
                self.ess_fraction
            )));
        }
        if !(self.schedule_gain > 0.0) {
            return Err(Error::InvalidArgument("schedule gain must be positive".into()));
        }
        if !(self.min_theta_step > 0.0) {
            return Err(Error::InvalidArgument(
                "minimum schedule step must be positive".into(),
            ));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(Error::InvalidArgument(
                "target acceptance must lie in (0,1)".into(),
            ));
        }
        if self.moves_per_step == 0 {
            return Err(Error::InvalidArgument(
                "at least one Metropolis sweep per step is required".into(),
            ));
        }
        if !(self.nu_init > 2.0) {
            return Err(Error::InvalidArgument(format!(
                "initial degrees of freedom must exceed 2, got {}",
                self.nu_init
            )));
        }
        if !(self.nu_max >= self.nu_init) {
            return Err(Error::InvalidArgument(
                "nu_max must be at least nu_init".into(),
            ));
        }
        if let Some(t) = self.forced_first_theta {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "forced first theta must lie in (0,1], got {t}"
                )));
            }
        }
        Ok(())
    }
}

/// Diagnostics for one schedule step.
#[derive(Clone, Copy, Debug)]
pub struct StepRecord {
    pub phase: Phase,
    pub theta: f64,
    pub nu: f64,
    /// ESS right after the reweight, before any resampling.
    pub ess: f64,
    pub resampled: bool,
    pub relocated: usize,
    /// Mean weighted acceptance over the sweeps of this step.
    pub acceptance: f64,
    pub kappa: f64,
    pub log_constant: f64,
}

/// Summary of one sampler run.
#[derive(Clone, Debug, Default)]
pub struct SmcStats {
    /// Adaptive truncation steps, excluding the initial cut and any forced
    /// first move.
    pub truncation_steps: usize,
    pub resamples: usize,
    pub relocations: usize,
    pub terminal_resample: bool,
    pub final_ess: f64,
    /// Log estimated kernel mass of the region reached by the forced first
    /// move, relative to the full space.
    pub log_mass_after_forced: Option<f64>,
    /// Log estimated kernel mass of the final region under the Student
    /// kernel, relative to the full space.
    pub log_mass_truncation_end: f64,
    pub records: Option<Vec<StepRecord>>,
}

/// Weighted particle approximation of a normal truncated to an orthant,
/// produced by `sample_tmvn` and reusable across nearby parameter values via
/// `recycle_to_new_params`.
#[derive(Clone, Debug)]
pub struct TmvnSample {
    pub(crate) signs: Vec<bool>,
    /// Flipped frame: all truncations are lower bounds at zero.
    pub(crate) mu_f: DVector<f64>,
    pub(crate) sigma_f: DMatrix<f64>,
    pub(crate) system: ParticleSystem,
    pub(crate) kernel: KernelConfig,
    pub(crate) log_prob: f64,
    pub(crate) stats: SmcStats,
}

impl TmvnSample {
    /// Log probability of the orthant under the current parameters.
    pub fn log_prob(&self) -> f64 {
        self.log_prob
    }

    pub fn system(&self) -> &ParticleSystem {
        &self.system
    }

    pub fn stats(&self) -> &SmcStats {
        &self.stats
    }

    pub fn signs(&self) -> &[bool] {
        &self.signs
    }

    pub fn weights(&self) -> &DVector<f64> {
        self.system.weights()
    }

    /// Particles mapped back to the original orthant frame.
    pub fn particles_original(&self) -> DMatrix<f64> {
        let mut out = self.system.particles().clone();
        for (i, &s) in self.signs.iter().enumerate() {
            if !s {
                for k in 0..out.ncols() {
                    out[(i, k)] = -out[(i, k)];
                }
            }
        }
        out
    }

    /// Weighted first and second moments in the original frame:
    /// an estimate of (E[Z], E[Z Z']) over the truncated distribution.
    pub fn weighted_moments(&self) -> (DVector<f64>, DMatrix<f64>) {
        let p = self.system.dim();
        let m = self.system.len();
        let particles = self.system.particles();
        let weights = self.system.weights();
        let mut mean = DVector::zeros(p);
        let mut second = DMatrix::zeros(p, p);
        for k in 0..m {
            let w = weights[k];
            if w == 0.0 {
                continue;
            }
            for i in 0..p {
                let zi = particles[(i, k)];
                mean[i] += w * zi;
                for j in 0..=i {
                    second[(i, j)] += w * zi * particles[(j, k)];
                }
            }
        }
        for i in 0..p {
            for j in 0..i {
                second[(j, i)] = second[(i, j)];
            }
        }
        for i in 0..p {
            let si = if self.signs[i] { 1.0 } else { -1.0 };
            mean[i] *= si;
            for j in 0..p {
                let sj = if self.signs[j] { 1.0 } else { -1.0 };
                second[(i, j)] *= si * sj;
            }
        }
        (mean, second)
    }
}

/// ESS the weights would keep after truncating to `region`, without touching
/// the system.
fn trial_kept_ess(particles: &DMatrix<f64>, weights: &DVector<f64>, region: &Region) -> f64 {
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for k in 0..particles.ncols() {
        if region.contains(&particles.column(k)) {
            let w = weights[k];
            sum += w;
            sum_sq += w * w;
        }
    }
    if sum_sq == 0.0 {
        0.0
    } else {
        sum * sum / sum_sq
    }
}

struct Driver<'a> {
    system: ParticleSystem,
    kernel: KernelConfig,
    config: &'a SmcConfig,
    records: Option<Vec<StepRecord>>,
    resamples: usize,
    relocations: usize,
}

impl Driver<'_> {
    /// Reweight to `next`, resample or relocate, rejuvenate. Returns the
    /// post-reweight ESS that feeds the schedule.
    fn round(
        &mut self,
        current: &TargetSpec,
        next: &TargetSpec,
        schedule: &ScheduleState,
    ) -> Result<f64> {
        let theta = schedule.theta;
        super::particles::reweight_to_next_target(&mut self.system, current, next).map_err(
            |e| match e {
                Error::ZeroWeights => Error::TargetUnreachable { theta },
                other => other,
            },
        )?;
        if !current.kernel_matches(next) {
            self.system.invalidate_kernel_cache();
        }
        let observed = self.system.ess();
        let resampled = observed < schedule.ess_star;
        let mut relocated = 0;
        if resampled {
            resample_systematic(&mut self.system);
            self.resamples += 1;
        } else {
            relocated = self.system.relocate_outside(next.region());
            self.relocations += relocated;
        }
        let mut acc_sum = 0.0;
        for _ in 0..self.kernel.moves_per_step {
            let acc = rw_mh_move(&mut self.system, next, &self.kernel)?;
            adapt_kappa(&mut self.kernel, acc);
            acc_sum += acc;
        }
        if let Some(records) = &mut self.records {
            records.push(StepRecord {
                phase: schedule.phase,
                theta,
                nu: next.nu(),
                ess: observed,
                resampled,
                relocated,
                acceptance: acc_sum / self.kernel.moves_per_step as f64,
                kappa: self.kernel.kappa,
                log_constant: self.system.log_constant(),
            });
        }
        Ok(observed)
    }
}

/// Draw a weighted particle approximation of the normal with mean `mu` and
/// covariance `sigma` truncated to `orthant`, and estimate the orthant's log
/// probability along the way.
pub fn sample_tmvn(
    orthant: &Orthant,
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
    config: &SmcConfig,
    seed: u64,
) -> Result<TmvnSample> {
    config.validate()?;
    let p = orthant.dim();
    if mu.len() != p || sigma.nrows() != p || sigma.ncols() != p {
        return Err(Error::DimensionMismatch(format!(
            "orthant has dimension {p} but mu is {} and sigma {}x{}",
            mu.len(),
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    let m = config.particles;
    let signs = orthant.signs().to_vec();
    let mu_f = flip_vector(mu, &signs);
    let sigma_f = flip_matrix(sigma, &signs);
    let end_bounds = DVector::zeros(p);
    let start_bounds = initial_lower_bounds(&mu_f, &sigma_f, config.nu_init, &end_bounds)?;

    let unbounded = TargetSpec::new(
        config.nu_init,
        mu_f.clone(),
        &sigma_f,
        Region::unbounded(p),
    )?;
    let system = ParticleSystem::init(&unbounded, m, seed)?;
    let initial_log_constant = system.log_constant();
    let mut driver = Driver {
        system,
        kernel: KernelConfig {
            kappa: 2.38 * 2.38 / p as f64,
            target_acceptance: config.target_acceptance,
            moves_per_step: config.moves_per_step,
        },
        config,
        records: config.record_steps.then(Vec::new),
        resamples: 0,
        relocations: 0,
    };
    let mut schedule = ScheduleState {
        theta: 0.0,
        theta_final: 1.0,
        zeta: config.schedule_gain,
        delta_theta_min: config.min_theta_step,
        ess_star: config.ess_fraction * m as f64,
        phase: Phase::Truncation,
    };

    // The cut to the schedule's starting bounds is itself a reweight, so the
    // occasional initial draw below them is weighted out exactly.
    let mut current = unbounded.with_region(Region::at_theta(&start_bounds, &end_bounds, 0.0))?;
    driver.round(&unbounded, &current, &schedule)?;

    let mut log_mass_after_forced = None;
    if let Some(theta0) = config.forced_first_theta {
        schedule.theta = theta0.min(schedule.theta_final);
        let next =
            current.with_region(Region::at_theta(&start_bounds, &end_bounds, schedule.theta))?;
        driver.round(&current, &next, &schedule)?;
        current = next;
        log_mass_after_forced = Some(driver.system.log_constant() - initial_log_constant);
    }

    let mut truncation_steps = 0usize;
    let guard = stride_guard(p, m);
    while schedule.theta < schedule.theta_final {
        let prev_theta = schedule.theta;
        // Feed the system's current ESS: after a resample the weights are
        // rebalanced, and that is the state the next stride cuts into.
        advance_schedule(&mut schedule, driver.system.ess(), m);
        // Within the truncation phase the kernel is fixed and a reweight is a
        // pure membership cut, so the ESS a stride would leave is cheap to
        // evaluate. Shrink the stride until enough mass survives.
        loop {
            let region = Region::at_theta(&start_bounds, &end_bounds, schedule.theta);
            let kept = trial_kept_ess(driver.system.particles(), driver.system.weights(), &region);
            let stride = schedule.theta - prev_theta;
            if kept >= guard || stride <= schedule.delta_theta_min {
                break;
            }
            schedule.theta = prev_theta + (0.5 * stride).max(schedule.delta_theta_min);
        }
        let next =
            current.with_region(Region::at_theta(&start_bounds, &end_bounds, schedule.theta))?;
        driver.round(&current, &next, &schedule)?;
        current = next;
        truncation_steps += 1;
    }
    let log_mass_truncation_end = driver.system.log_constant() - initial_log_constant;

    schedule.phase = Phase::DofAnneal;
    let final_region = current.region().clone();
    let mut nu = config.nu_init;
    while nu < config.nu_max {
        nu = (2.0 * nu).min(config.nu_max);
        let next = TargetSpec::new(nu, mu_f.clone(), &sigma_f, final_region.clone())?;
        driver.round(&current, &next, &schedule)?;
        current = next;
    }
    let gaussian = TargetSpec::new(f64::INFINITY, mu_f.clone(), &sigma_f, final_region)?;
    driver.round(&current, &gaussian, &schedule)?;

    // Terminal guarantee: hand back a system with healthy ESS.
    let mut terminal_resample = false;
    if driver.system.ess() < schedule.ess_star {
        resample_systematic(&mut driver.system);
        driver.resamples += 1;
        terminal_resample = true;
        for _ in 0..driver.kernel.moves_per_step {
            let acc = rw_mh_move(&mut driver.system, &gaussian, &driver.kernel)?;
            adapt_kappa(&mut driver.kernel, acc);
        }
    }

    let log_prob = driver.system.log_constant() + gaussian.log_norm_constant();
    if !log_prob.is_finite() {
        return Err(Error::NonFinite {
            context: "orthant probability estimate".into(),
        });
    }
    let stats = SmcStats {
        truncation_steps,
        resamples: driver.resamples,
        relocations: driver.relocations,
        terminal_resample,
        final_ess: driver.system.ess(),
        log_mass_after_forced,
        log_mass_truncation_end,
        records: driver.records.take(),
    };
    debug_assert!(driver.config.particles == m);
    Ok(TmvnSample {
        signs,
        mu_f,
        sigma_f,
        system: driver.system,
        kernel: driver.kernel,
        log_prob,
        stats,
    })
}
