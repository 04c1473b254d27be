//! The outer Monte Carlo EM loop: particle schedules that grow the sample
//! size as the iterates settle, averaged updates over the final iterations
//! to damp simulation noise, and standard errors from common-random-number
//! finite differences of the simulated log-likelihood.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};

use super::design::{e_step, EStepConfig, ModelDesign, WeightedLatentSample};
use super::mstep::{m_step, MaxMode, MaximizerConfig};
use crate::probit::{
    project_to_identified, univariate_probit_init, IdentifiedParameters, IdentifyMode, Layout,
    Parameters, ProbitDataset,
};
use crate::tmvn::SmcConfig;
use crate::{Error, Result};

/// How many particles each EM iteration uses: a linear ramp, an optional
/// plateau at the ceiling, then the averaged tail.
#[derive(Debug, Clone)]
pub struct ParticleSchedule {
    pub start: usize,
    pub step: usize,
    pub growth_iters: usize,
    pub plateau_iters: usize,
    pub vr_steps: usize,
    pub max_particles: usize,
}

impl Default for ParticleSchedule {
    fn default() -> Self {
        Self {
            start: 100,
            step: 100,
            growth_iters: 40,
            plateau_iters: 0,
            vr_steps: 10,
            max_particles: 4000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmPhase {
    Growing,
    Plateau,
    VarianceReduction,
}

impl ParticleSchedule {
    /// Constant particle count throughout, the form recycling requires.
    pub fn constant(particles: usize, iters: usize, vr_steps: usize) -> Self {
        Self {
            start: particles,
            step: 0,
            growth_iters: iters,
            plateau_iters: 0,
            vr_steps,
            max_particles: particles,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.start < 2 || self.max_particles < self.start {
            return Err(Error::InvalidArgument(
                "particle schedule needs start >= 2 and a ceiling no smaller".into(),
            ));
        }
        if self.growth_iters == 0 {
            return Err(Error::InvalidArgument(
                "particle schedule needs at least one growth iteration".into(),
            ));
        }
        Ok(())
    }

    pub fn total_iters(&self) -> usize {
        self.growth_iters + self.plateau_iters + self.vr_steps
    }

    pub fn particles_at(&self, iteration: usize) -> usize {
        if iteration < self.growth_iters {
            (self.start + self.step * iteration).min(self.max_particles)
        } else {
            self.max_particles
        }
    }

    pub fn phase_at(&self, iteration: usize) -> EmPhase {
        if iteration < self.growth_iters {
            EmPhase::Growing
        } else if iteration < self.growth_iters + self.plateau_iters {
            EmPhase::Plateau
        } else {
            EmPhase::VarianceReduction
        }
    }

    fn is_constant(&self) -> bool {
        (0..self.total_iters()).all(|i| self.particles_at(i) == self.max_particles)
    }
}

/// Shrinking-stepsize average of the raw maximizer output: step k of the
/// tail uses weight `1/(k+2)`, so the first averaged update moves halfway
/// and later ones progressively less.
pub fn variance_reduction_zeta(k: usize) -> f64 {
    1.0 / (k as f64 + 2.0)
}

pub fn variance_reduction_update(
    previous: &Parameters,
    raw: &Parameters,
    zeta: f64,
) -> Parameters {
    Parameters {
        beta: (1.0 - zeta) * &previous.beta + zeta * &raw.beta,
        sigma: (1.0 - zeta) * &previous.sigma + zeta * &raw.sigma,
    }
}

/// One EM iteration as recorded in the trace. The likelihood estimate is the
/// E step's byproduct, so it refers to the parameters the iteration started
/// from; `params` holds the updated values.
#[derive(Debug, Clone)]
pub struct EmState {
    pub iteration: usize,
    pub phase: EmPhase,
    pub particles: usize,
    pub loglik: f64,
    pub params: Parameters,
    pub min_ess: f64,
    pub mean_ess: f64,
    pub recycle_fallbacks: usize,
}

#[derive(Debug, Clone)]
pub struct EmTrace {
    pub states: Vec<EmState>,
    pub final_params: Parameters,
    pub final_identified: IdentifiedParameters,
    /// Fresh likelihood estimate at the final parameters, at the schedule's
    /// particle ceiling.
    pub final_loglik: f64,
    pub wall_time: Duration,
}

#[derive(Debug, Clone)]
pub struct McemConfig {
    pub layout: Layout,
    pub maximizer: MaximizerConfig,
    pub schedule: ParticleSchedule,
    /// Sampler settings; the particle count is overridden per iteration.
    pub smc: SmcConfig,
    /// Move the previous iteration's particles to the new parameters instead
    /// of sampling afresh. Requires a constant particle schedule.
    pub recycle: bool,
    pub seed: u64,
}

impl McemConfig {
    pub fn validate(&self) -> Result<()> {
        self.maximizer.validate()?;
        self.schedule.validate()?;
        if self.recycle && !self.schedule.is_constant() {
            return Err(Error::InvalidArgument(
                "recycling keeps the particle set across iterations, so the schedule \
                 must hold the count constant"
                    .into(),
            ));
        }
        let mut smc = self.smc.clone();
        smc.particles = self.schedule.max_particles;
        smc.validate()
    }

    fn identify_mode(&self) -> IdentifyMode {
        match self.maximizer.mode {
            MaxMode::Constrained | MaxMode::CorrelationForm => IdentifyMode::Correlation,
            MaxMode::Unconstrained | MaxMode::FixedFirst => IdentifyMode::FixedFirst,
        }
    }
}

/// Run the full estimation: univariate-probit initialization, the scheduled
/// EM iterations, the averaged tail, and a fresh likelihood evaluation at
/// the final parameters, which are also reported on the identified scale
/// matching the maximization mode.
pub fn run_mcem(dataset: &ProbitDataset, config: &McemConfig) -> Result<EmTrace> {
    config.validate()?;
    let started = Instant::now();
    let design = ModelDesign::new(dataset, config.layout)?;
    let structure = design.structure().clone();
    let mut params = univariate_probit_init(dataset, config.layout)?;
    let mut carried: Option<WeightedLatentSample> = None;
    let total = config.schedule.total_iters();
    let vr_start = config.schedule.growth_iters + config.schedule.plateau_iters;
    let mut states = Vec::with_capacity(total);
    for iteration in 0..total {
        let mut smc = config.smc.clone();
        smc.particles = config.schedule.particles_at(iteration);
        let e_cfg = EStepConfig {
            smc,
            seed: config.seed,
            iteration: iteration as u64,
        };
        let previous = if config.recycle { carried.take() } else { None };
        let (latent, loglik) = e_step(&params, &design, &e_cfg, previous)?;
        let moments = latent.moments();
        let raw = m_step(&moments, &design, &params, &config.maximizer)?;
        let phase = config.schedule.phase_at(iteration);
        let updated = if phase == EmPhase::VarianceReduction {
            let zeta = variance_reduction_zeta(iteration - vr_start);
            variance_reduction_update(&params, &raw, zeta)
        } else {
            raw
        };
        states.push(EmState {
            iteration,
            phase,
            particles: latent.sample(0).weights().len(),
            loglik,
            params: updated.clone(),
            min_ess: latent.min_ess(),
            mean_ess: latent.mean_ess(),
            recycle_fallbacks: latent.recycle_fallbacks(),
        });
        if config.recycle {
            carried = Some(latent);
        }
        params = updated;
    }
    let mut smc = config.smc.clone();
    smc.particles = config.schedule.max_particles;
    let e_cfg = EStepConfig {
        smc,
        seed: config.seed,
        iteration: total as u64,
    };
    let (_, final_loglik) = e_step(&params, &design, &e_cfg, None)?;
    let final_identified = project_to_identified(&params, &structure, config.identify_mode())?;
    Ok(EmTrace {
        states,
        final_params: params,
        final_identified,
        final_loglik,
        wall_time: started.elapsed(),
    })
}

#[derive(Debug, Clone)]
pub struct SeConfig {
    pub particles: usize,
    pub seed: u64,
    /// Finite-difference step on the identified coordinates.
    pub step: f64,
}

impl Default for SeConfig {
    fn default() -> Self {
        Self {
            particles: 4000,
            seed: 0,
            step: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StandardErrors {
    pub labels: Vec<String>,
    pub values: Vec<Option<f64>>,
    /// Negated Hessian of the simulated log-likelihood on the identified
    /// coordinates.
    pub information: DMatrix<f64>,
}

/// Free covariance entries of an identified parameterization in row-major
/// upper-triangle order: off-diagonals for correlation form, everything but
/// the pinned first entry otherwise. Standard errors and reporting share
/// this ordering.
pub fn covariance_coords(p: usize, mode: IdentifyMode) -> Vec<(usize, usize)> {
    let mut coords = Vec::new();
    for i in 0..p {
        for l in i..p {
            let free = match mode {
                IdentifyMode::Correlation => i != l,
                IdentifyMode::FixedFirst => !(i == 0 && l == 0),
            };
            if free {
                coords.push((i, l));
            }
        }
    }
    coords
}

fn pack(identified: &IdentifiedParameters, coords: &[(usize, usize)]) -> DVector<f64> {
    let k = identified.lambda.len();
    let mut theta = DVector::zeros(k + coords.len());
    theta.rows_mut(0, k).copy_from(&identified.lambda);
    for (idx, &(i, l)) in coords.iter().enumerate() {
        theta[k + idx] = identified.omega[(i, l)];
    }
    theta
}

fn unpack(
    theta: &DVector<f64>,
    template: &IdentifiedParameters,
    coords: &[(usize, usize)],
) -> Parameters {
    let k = template.lambda.len();
    let mut omega = template.omega.clone();
    for (idx, &(i, l)) in coords.iter().enumerate() {
        omega[(i, l)] = theta[k + idx];
        omega[(l, i)] = theta[k + idx];
    }
    Parameters {
        beta: theta.rows(0, k).into_owned(),
        sigma: omega,
    }
}

/// Observed-information standard errors at the identified estimate: central
/// second differences of the simulated log-likelihood over the identified
/// coordinates. One weighted particle set is drawn at the estimate and every
/// perturbed evaluation reweights that same set by the Gaussian density
/// ratio, so all evaluations lie on a single smooth surface. (Differencing
/// fresh runs, even with shared seeds, amplifies resampling and acceptance
/// decisions that flip under tiny shifts by 1/h^2 and buries the curvature.)
/// A non-invertible information matrix yields no standard errors rather than
/// an error.
pub fn standard_errors(
    dataset: &ProbitDataset,
    layout: Layout,
    identified: &IdentifiedParameters,
    config: &SeConfig,
) -> Result<StandardErrors> {
    if !(config.step > 0.0) {
        return Err(Error::InvalidArgument(
            "finite-difference step must be positive".into(),
        ));
    }
    let design = ModelDesign::new(dataset, layout)?;
    let p = design.p();
    let k = identified.lambda.len();
    let coords = covariance_coords(p, identified.mode);
    let dim = k + coords.len();
    let theta0 = pack(identified, &coords);
    let params0 = unpack(&theta0, identified, &coords);

    let mut smc = SmcConfig::default();
    smc.particles = config.particles;
    let e_cfg = EStepConfig {
        smc,
        seed: config.seed,
        iteration: 0,
    };
    let (latent, _) = e_step(&params0, &design, &e_cfg, None).map_err(|e| {
        Error::StandardErrorFailed(format!("sampling at the estimate failed: {e}"))
    })?;

    let log_density = |z: &DVector<f64>,
                       mu: &DVector<f64>,
                       chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>,
                       half_log_det: f64| {
        let diff = z - mu;
        let solved = chol.l_dirty().solve_lower_triangular(&diff).unwrap();
        -half_log_det - 0.5 * solved.norm_squared()
    };

    // Per observation: particle positions, log weights, and the anchor
    // density at the estimate. Perturbed log-likelihood contributions are
    // log-sum-exp of logw + logN(theta') - logN(theta0).
    let chol0 = params0
        .sigma
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite)?;
    let half_log_det0: f64 = chol0.l_dirty().diagonal().iter().map(|v| v.ln()).sum();
    let mut cache = Vec::with_capacity(design.n());
    for j in 0..design.n() {
        let sample = latent.sample(j);
        let z = sample.particles_original();
        let mu0 = design.mean(j, &params0.beta);
        let entries: Vec<(DVector<f64>, f64)> = z
            .column_iter()
            .zip(sample.weights().iter())
            .filter(|(_, &w)| w > 0.0)
            .map(|(col, &w)| {
                let zk = col.into_owned();
                let anchor = log_density(&zk, &mu0, &chol0, half_log_det0);
                (zk, w.ln() - anchor)
            })
            .collect();
        cache.push(entries);
    }

    let eval = |theta: &DVector<f64>| -> Result<f64> {
        let params = unpack(theta, identified, &coords);
        let chol = params.sigma.clone().cholesky().ok_or_else(|| {
            Error::StandardErrorFailed(
                "perturbed covariance left the positive definite cone; \
                 reduce the differencing step"
                    .into(),
            )
        })?;
        let half_log_det: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum();
        let mut total = 0.0;
        for (j, entries) in cache.iter().enumerate() {
            let mu = design.mean(j, &params.beta);
            let terms: Vec<f64> = entries
                .iter()
                .map(|(zk, base)| base + log_density(zk, &mu, &chol, half_log_det))
                .collect();
            let mx = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if !mx.is_finite() {
                return Err(Error::StandardErrorFailed(format!(
                    "all particle weights vanished for observation {j}"
                )));
            }
            let sum: f64 = terms.iter().map(|t| (t - mx).exp()).sum();
            total += mx + sum.ln();
        }
        Ok(total)
    };

    let h = config.step;
    let base = eval(&theta0)?;
    let mut plus = vec![0.0; dim];
    let mut minus = vec![0.0; dim];
    for i in 0..dim {
        let mut t = theta0.clone();
        t[i] += h;
        plus[i] = eval(&t)?;
        t[i] -= 2.0 * h;
        minus[i] = eval(&t)?;
    }
    let mut hessian = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        hessian[(i, i)] = (plus[i] - 2.0 * base + minus[i]) / (h * h);
    }
    for i in 0..dim {
        for l in (i + 1)..dim {
            let mut t = theta0.clone();
            t[i] += h;
            t[l] += h;
            let pp = eval(&t)?;
            t[l] -= 2.0 * h;
            let pm = eval(&t)?;
            t[i] -= 2.0 * h;
            let mm = eval(&t)?;
            t[l] += 2.0 * h;
            let mp = eval(&t)?;
            let mixed = (pp - pm - mp + mm) / (4.0 * h * h);
            hessian[(i, l)] = mixed;
            hessian[(l, i)] = mixed;
        }
    }
    let information = -hessian;
    let values = match information.clone().cholesky() {
        Some(chol) => {
            let cov = chol.inverse();
            (0..dim).map(|i| Some(cov[(i, i)].sqrt())).collect()
        }
        None => vec![None; dim],
    };
    let mut labels: Vec<String> = (1..=k).map(|i| format!("lambda_{i}")).collect();
    let cov_name = match identified.mode {
        IdentifyMode::Correlation => "omega",
        IdentifyMode::FixedFirst => "sigma",
    };
    for &(i, l) in &coords {
        labels.push(format!("{cov_name}_{}{}", i + 1, l + 1));
    }
    Ok(StandardErrors {
        labels,
        values,
        information,
    })
}
