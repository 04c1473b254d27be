//! Particle-system state and the operations the sampler cycles through:
//! reweighting toward the next target, systematic resampling, relocation of
//! weightless strays and the adaptive random-walk Metropolis rejuvenation.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::target::{Region, TargetSpec};
use crate::{Error, Result};

/// Ridge added to the weighted proposal covariance before factorization.
const PROPOSAL_RIDGE: f64 = 1e-8;
/// Log-scale gain of the acceptance-rate feedback on kappa.
const KAPPA_GAIN: f64 = 1.0;
const KAPPA_MIN: f64 = 1e-4;
const KAPPA_MAX: f64 = 1e2;

pub(crate) fn kahan_sum(xs: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for x in xs {
        let y = x - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Effective sample size `1 / sum(w^2)` of normalized weights.
pub fn ess(weights: &[f64]) -> Result<f64> {
    let s = kahan_sum(weights.iter().map(|w| w * w));
    if s <= 0.0 {
        return Err(Error::ZeroWeights);
    }
    Ok(1.0 / s)
}

/// Random-walk Metropolis settings. The proposal covariance itself is
/// recomputed from the weighted sample on every sweep; only its scaling
/// factor kappa is carried across steps.
#[derive(Clone, Copy, Debug)]
pub struct KernelConfig {
    pub kappa: f64,
    pub target_acceptance: f64,
    pub moves_per_step: usize,
}

impl KernelConfig {
    /// The classical optimal-scaling start, kappa = 2.38^2 / p.
    pub fn for_dim(p: usize) -> Self {
        Self {
            kappa: 2.38 * 2.38 / p as f64,
            target_acceptance: 0.3,
            moves_per_step: 2,
        }
    }
}

/// Nudge log(kappa) toward the target acceptance rate.
pub fn adapt_kappa(kernel: &mut KernelConfig, observed_acceptance: f64) {
    debug_assert!((0.0..=1.0).contains(&observed_acceptance));
    let next = kernel.kappa.ln() + KAPPA_GAIN * (observed_acceptance - kernel.target_acceptance);
    kernel.kappa = next.exp().clamp(KAPPA_MIN, KAPPA_MAX);
}

/// Weighted particle approximation of one truncated target, together with
/// the running log of the unnormalized-kernel mass estimate.
#[derive(Clone, Debug)]
pub struct ParticleSystem {
    /// Column k is particle k.
    particles: DMatrix<f64>,
    weights: DVector<f64>,
    log_constant: f64,
    rng: ChaCha8Rng,
    // Reusable buffers so the per-sweep loops stay allocation free.
    cols_buf: DMatrix<f64>,
    weights_buf: DVector<f64>,
    vec_buf_a: DVector<f64>,
    vec_buf_b: DVector<f64>,
    /// Per-particle log-kernel values under the current target, refreshed
    /// lazily by the move sweep. Valid only while `kernel_cache_valid`; the
    /// sampler invalidates it whenever the kernel (not just the region)
    /// changes.
    log_kernels: DVector<f64>,
    kernel_cache_valid: bool,
}

impl ParticleSystem {
    /// Draw `m` exact samples from the untruncated kernel of `target` and
    /// price the mass estimate at its full-space integral. The target's
    /// region must be unbounded; cutting to a first finite region is an
    /// ordinary reweight.
    pub fn init(target: &TargetSpec, m: usize, seed: u64) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidArgument(format!(
                "a particle system needs at least 2 particles, got {m}"
            )));
        }
        if target.region().lower().iter().any(|b| b.is_finite()) {
            return Err(Error::InvalidArgument(
                "initial draws are exact only for an unbounded region".into(),
            ));
        }
        let p = target.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut particles = DMatrix::zeros(p, m);
        let mut scratch = DVector::zeros(p);
        for k in 0..m {
            target.sample_into(&mut rng, &mut particles.column_mut(k), &mut scratch);
        }
        Ok(Self {
            particles,
            weights: DVector::from_element(m, 1.0 / m as f64),
            log_constant: -target.log_norm_constant(),
            rng,
            cols_buf: DMatrix::zeros(p, m),
            weights_buf: DVector::zeros(m),
            vec_buf_a: DVector::zeros(p),
            vec_buf_b: DVector::zeros(p),
            log_kernels: DVector::zeros(m),
            kernel_cache_valid: false,
        })
    }

    pub(crate) fn invalidate_kernel_cache(&mut self) {
        self.kernel_cache_valid = false;
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.particles.nrows()
    }

    pub fn particles(&self) -> &DMatrix<f64> {
        &self.particles
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn ess(&self) -> f64 {
        ess(self.weights.as_slice()).expect("weights stay normalized")
    }

    pub fn log_constant(&self) -> f64 {
        self.log_constant
    }

    pub(crate) fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Candidate weights for moving to `next`, left normalized in the
    /// internal buffer. Returns their effective sample size and the log-mass
    /// increment; `commit_pending` applies them.
    pub(crate) fn tentative_reweight(
        &mut self,
        current: &TargetSpec,
        next: &TargetSpec,
    ) -> Result<(f64, f64)> {
        let m = self.len();
        let increment = if current.kernel_matches(next) {
            // Pure region change: the kernel ratio is an indicator.
            for k in 0..m {
                let w = self.weights[k];
                let keep = w > 0.0 && next.region().contains(&self.particles.column(k));
                self.weights_buf[k] = if keep { w } else { 0.0 };
            }
            let total = kahan_sum(self.weights_buf.iter().copied());
            if total <= 0.0 {
                return Err(Error::ZeroWeights);
            }
            for k in 0..m {
                self.weights_buf[k] /= total;
            }
            total.ln()
        } else {
            let mut max_log = f64::NEG_INFINITY;
            for k in 0..m {
                let w = self.weights[k];
                let lw = if w > 0.0 && next.region().contains(&self.particles.column(k)) {
                    let col = self.particles.column(k);
                    let log_ratio = next.log_kernel_with(&col, &mut self.vec_buf_a)
                        - current.log_kernel_with(&col, &mut self.vec_buf_a);
                    w.ln() + log_ratio
                } else {
                    f64::NEG_INFINITY
                };
                self.weights_buf[k] = lw;
                if lw > max_log {
                    max_log = lw;
                }
            }
            if max_log == f64::NEG_INFINITY {
                return Err(Error::ZeroWeights);
            }
            for k in 0..m {
                let lw = self.weights_buf[k];
                self.weights_buf[k] = if lw == f64::NEG_INFINITY {
                    0.0
                } else {
                    (lw - max_log).exp()
                };
            }
            let total = kahan_sum(self.weights_buf.iter().copied());
            if total <= 0.0 {
                return Err(Error::ZeroWeights);
            }
            for k in 0..m {
                self.weights_buf[k] /= total;
            }
            max_log + total.ln()
        };
        let new_ess = ess(self.weights_buf.as_slice())?;
        Ok((new_ess, increment))
    }

    pub(crate) fn commit_pending(&mut self, increment: f64) {
        self.weights.copy_from(&self.weights_buf);
        self.log_constant += increment;
    }

    /// Copy weightless particles that fell outside `region` onto weighted
    /// donors. Their weights stay zero, so the represented measure is
    /// untouched; this only restores valid Metropolis starting positions.
    /// Returns how many particles moved.
    pub(crate) fn relocate_outside(&mut self, region: &Region) -> usize {
        let m = self.len();
        let strays: Vec<usize> = (0..m)
            .filter(|&k| self.weights[k] == 0.0 && !region.contains(&self.particles.column(k)))
            .collect();
        if strays.is_empty() {
            return 0;
        }
        let mut cum = Vec::with_capacity(m);
        let mut acc = 0.0;
        let mut heaviest = 0;
        for k in 0..m {
            acc += self.weights[k];
            cum.push(acc);
            if self.weights[k] > self.weights[heaviest] {
                heaviest = k;
            }
        }
        for &k in &strays {
            let u: f64 = self.rng.gen();
            let mut donor = cum.partition_point(|&c| c <= u).min(m - 1);
            if self.weights[donor] == 0.0 {
                // Only reachable through floating-point ties in the running
                // sum; fall back to the heaviest particle.
                donor = heaviest;
            }
            self.vec_buf_a.copy_from(&self.particles.column(donor));
            self.particles.column_mut(k).copy_from(&self.vec_buf_a);
            self.log_kernels[k] = self.log_kernels[donor];
        }
        strays.len()
    }

    #[cfg(test)]
    pub(crate) fn for_tests(particles: DMatrix<f64>, weights: DVector<f64>, seed: u64) -> Self {
        let (p, m) = (particles.nrows(), particles.ncols());
        assert_eq!(m, weights.len());
        Self {
            particles,
            weights,
            log_constant: 0.0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            cols_buf: DMatrix::zeros(p, m),
            weights_buf: DVector::zeros(m),
            vec_buf_a: DVector::zeros(p),
            vec_buf_b: DVector::zeros(p),
            log_kernels: DVector::zeros(m),
            kernel_cache_valid: false,
        }
    }
}

/// Replace the weighted sample by an equally weighted one with expected
/// multiplicities `m * w_k`, using a single uniform offset. The mass
/// estimate is untouched.
pub fn resample_systematic(system: &mut ParticleSystem) {
    let m = system.len();
    let u = system.rng.gen::<f64>() / m as f64;
    let mut donor = 0usize;
    let mut cum = system.weights[0];
    for k in 0..m {
        let pos = u + k as f64 / m as f64;
        while pos > cum && donor + 1 < m {
            donor += 1;
            cum += system.weights[donor];
        }
        system
            .cols_buf
            .column_mut(k)
            .copy_from(&system.particles.column(donor));
        system.weights_buf[k] = system.log_kernels[donor];
    }
    std::mem::swap(&mut system.particles, &mut system.cols_buf);
    std::mem::swap(&mut system.log_kernels, &mut system.weights_buf);
    system.weights.fill(1.0 / m as f64);
}

/// Reweight the system from `current` to the nested target `next`,
/// accumulating the mass ratio into the running constant.
pub fn reweight_to_next_target(
    system: &mut ParticleSystem,
    current: &TargetSpec,
    next: &TargetSpec,
) -> Result<()> {
    let (_, increment) = system.tentative_reweight(current, next)?;
    system.commit_pending(increment);
    Ok(())
}

/// One random-walk Metropolis sweep over all particles, targeting the
/// truncated kernel of `target` with proposal covariance
/// `kappa * (weighted sample covariance + ridge)`. Returns the
/// weight-averaged expected acceptance probability.
pub fn rw_mh_move(
    system: &mut ParticleSystem,
    target: &TargetSpec,
    kernel: &KernelConfig,
) -> Result<f64> {
    let m = system.len();
    let p = system.dim();
    for k in 0..m {
        if !target.region().contains(&system.particles.column(k)) {
            return Err(Error::ParticleOutsideRegion);
        }
    }
    if !system.kernel_cache_valid {
        for k in 0..m {
            system.log_kernels[k] =
                target.log_kernel_with(&system.particles.column(k), &mut system.vec_buf_a);
        }
        system.kernel_cache_valid = true;
    }
    // Row-packed lower triangle, so the per-proposal loops run on slices.
    let lp = proposal_cholesky(system)?;
    let sqrt_kappa = kernel.kappa.sqrt();
    let mut acc_mass = 0.0;
    let mut acc_comp = 0.0;
    for k in 0..m {
        for i in 0..p {
            system.vec_buf_a[i] = system.rng.sample::<f64, _>(StandardNormal);
        }
        {
            let noise = system.vec_buf_a.as_slice();
            let prop = system.vec_buf_b.as_mut_slice();
            let col = &system.particles.as_slice()[k * p..(k + 1) * p];
            let mut row = 0;
            for i in 0..p {
                let mut s = 0.0;
                for (j, &lij) in lp[row..row + i + 1].iter().enumerate() {
                    s += lij * noise[j];
                }
                row += i + 1;
                prop[i] = col[i] + sqrt_kappa * s;
            }
        }
        let u: f64 = system.rng.gen();
        let mut accept_prob = 0.0;
        if target.region().contains(&system.vec_buf_b) {
            let log_new = target.log_kernel_with(&system.vec_buf_b, &mut system.vec_buf_a);
            let delta = log_new - system.log_kernels[k];
            accept_prob = if delta >= 0.0 { 1.0 } else { delta.exp() };
            if u < accept_prob {
                system.particles.column_mut(k).copy_from(&system.vec_buf_b);
                system.log_kernels[k] = log_new;
            }
        }
        // Kahan-accumulate the weighted acceptance statistic.
        let term = system.weights[k] * accept_prob;
        let y = term - acc_comp;
        let t = acc_mass + y;
        acc_comp = (t - acc_mass) - y;
        acc_mass = t;
    }
    Ok(acc_mass)
}

/// Cholesky factor of the weighted sample covariance plus ridge, returned as
/// a row-packed lower triangle.
fn proposal_cholesky(system: &ParticleSystem) -> Result<Vec<f64>> {
    let m = system.len();
    let p = system.dim();
    let data = system.particles.as_slice();
    let weights = system.weights.as_slice();
    let mut mean = vec![0.0f64; p];
    for k in 0..m {
        let w = weights[k];
        if w == 0.0 {
            continue;
        }
        let col = &data[k * p..(k + 1) * p];
        for i in 0..p {
            mean[i] += w * col[i];
        }
    }
    let tri = p * (p + 1) / 2;
    let mut cov_packed = vec![0.0f64; tri];
    let mut d = vec![0.0f64; p];
    for k in 0..m {
        let w = weights[k];
        if w == 0.0 {
            continue;
        }
        let col = &data[k * p..(k + 1) * p];
        for i in 0..p {
            d[i] = col[i] - mean[i];
        }
        let mut idx = 0;
        for i in 0..p {
            let wd = w * d[i];
            for &dj in &d[0..=i] {
                cov_packed[idx] += wd * dj;
                idx += 1;
            }
        }
    }
    let mut cov = DMatrix::zeros(p, p);
    let mut idx = 0;
    for i in 0..p {
        for j in 0..=i {
            cov[(i, j)] = cov_packed[idx];
            cov[(j, i)] = cov_packed[idx];
            idx += 1;
        }
    }
    let mut ridge = PROPOSAL_RIDGE;
    for _ in 0..6 {
        let mut c = cov.clone();
        for i in 0..p {
            c[(i, i)] += ridge;
        }
        if let Some(chol) = c.cholesky() {
            let l = chol.l();
            let mut packed = Vec::with_capacity(tri);
            for i in 0..p {
                for j in 0..=i {
                    packed.push(l[(i, j)]);
                }
            }
            return Ok(packed);
        }
        ridge *= 100.0;
    }
    Err(Error::NotPositiveDefinite)
}
