//! Per-observation design matrices, the weighted latent sample produced by
//! the E step, and the moment sums consumed by the M step.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::probit::{log_likelihood, Layout, ModelStructure, Orthant, Parameters, ProbitDataset};
use crate::tmvn::{recycle_to_new_params, sample_tmvn, SmcConfig, TmvnSample};
use crate::{Error, Result};

/// A dataset bound to a layout, with design matrices and orthants cached.
#[derive(Debug, Clone)]
pub struct ModelDesign {
    dataset: ProbitDataset,
    structure: ModelStructure,
    xs: Vec<DMatrix<f64>>,
    orthants: Vec<Orthant>,
}

impl ModelDesign {
    pub fn new(dataset: &ProbitDataset, layout: Layout) -> Result<Self> {
        let structure = dataset.structure(layout)?;
        let xs = dataset
            .observations()
            .iter()
            .map(|o| crate::probit::design_matrix(&o.covariates, &structure))
            .collect();
        let orthants = dataset
            .observations()
            .iter()
            .map(|o| Orthant::from_response(&o.response))
            .collect();
        Ok(Self {
            dataset: dataset.clone(),
            structure,
            xs,
            orthants,
        })
    }

    pub fn n(&self) -> usize {
        self.dataset.n()
    }

    pub fn p(&self) -> usize {
        self.dataset.p()
    }

    pub fn k(&self) -> usize {
        self.structure.k()
    }

    pub fn structure(&self) -> &ModelStructure {
        &self.structure
    }

    pub fn dataset(&self) -> &ProbitDataset {
        &self.dataset
    }

    pub fn x(&self, j: usize) -> &DMatrix<f64> {
        &self.xs[j]
    }

    pub fn orthant(&self, j: usize) -> &Orthant {
        &self.orthants[j]
    }

    /// Latent mean of observation `j`.
    pub fn mean(&self, j: usize, beta: &DVector<f64>) -> DVector<f64> {
        &self.xs[j] * beta
    }
}

/// First and second weighted moments of the latent vectors, one pair per
/// observation: `m_j = sum_k W Z` and `S_j = sum_k W Z Z'`.
#[derive(Debug, Clone)]
pub struct SufficientMoments {
    pub m: Vec<DVector<f64>>,
    pub s: Vec<DMatrix<f64>>,
}

impl SufficientMoments {
    pub fn n(&self) -> usize {
        self.m.len()
    }

    pub fn p(&self) -> usize {
        self.m[0].len()
    }
}

/// The E-step output: one truncated-normal particle approximation per
/// observation.
#[derive(Debug, Clone)]
pub struct WeightedLatentSample {
    samples: Vec<TmvnSample>,
    recycle_fallbacks: usize,
}

impl WeightedLatentSample {
    pub fn n(&self) -> usize {
        self.samples.len()
    }

    pub fn sample(&self, j: usize) -> &TmvnSample {
        &self.samples[j]
    }

    pub fn samples(&self) -> &[TmvnSample] {
        &self.samples
    }

    /// Fallbacks to fresh sampling during the most recent recycling pass.
    pub fn recycle_fallbacks(&self) -> usize {
        self.recycle_fallbacks
    }

    pub fn log_probs(&self) -> Vec<f64> {
        self.samples.iter().map(TmvnSample::log_prob).collect()
    }

    pub fn min_ess(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.system().ess())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn mean_ess(&self) -> f64 {
        let total: f64 = self.samples.iter().map(|s| s.system().ess()).sum();
        total / self.samples.len() as f64
    }

    pub fn moments(&self) -> SufficientMoments {
        let mut m = Vec::with_capacity(self.samples.len());
        let mut s = Vec::with_capacity(self.samples.len());
        for sample in &self.samples {
            let (mj, sj) = sample.weighted_moments();
            m.push(mj);
            s.push(sj);
        }
        SufficientMoments { m, s }
    }
}

/// Settings for one E step.
#[derive(Debug, Clone)]
pub struct EStepConfig {
    pub smc: SmcConfig,
    /// Master seed; per-observation streams are derived from it.
    pub seed: u64,
    /// EM iteration index, part of the per-observation seed derivation.
    pub iteration: u64,
}

fn mix(mut x: u64) -> u64 {
    x ^= x >> 30;
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^= x >> 31;
    x
}

/// Independent, reproducible stream per (seed, iteration, observation).
pub(crate) fn observation_seed(seed: u64, iteration: u64, obs: u64) -> u64 {
    mix(seed ^ mix(iteration.wrapping_add(0x9E37_79B9_7F4A_7C15))
        ^ mix(obs.wrapping_add(0xD1B5_4A32_D192_ED03)))
}

/// Monte Carlo E step: a truncated-normal sample per observation, either
/// fresh or by moving `previous` to the new parameters, plus the summed
/// log-likelihood estimate that the samplers produce as a byproduct.
pub fn e_step(
    params: &Parameters,
    design: &ModelDesign,
    config: &EStepConfig,
    previous: Option<WeightedLatentSample>,
) -> Result<(WeightedLatentSample, f64)> {
    params.validate(design.structure())?;
    let n = design.n();
    let latent = match previous {
        None => {
            let results: Vec<Result<TmvnSample>> = (0..n)
                .into_par_iter()
                .map(|j| {
                    let mu = design.mean(j, &params.beta);
                    let seed = observation_seed(config.seed, config.iteration, j as u64);
                    sample_tmvn(design.orthant(j), &mu, &params.sigma, &config.smc, seed)
                })
                .collect();
            let mut samples = Vec::with_capacity(n);
            for (j, r) in results.into_iter().enumerate() {
                samples.push(r.map_err(|e| Error::EStepFailed {
                    observation: j,
                    source: Box::new(e),
                })?);
            }
            WeightedLatentSample {
                samples,
                recycle_fallbacks: 0,
            }
        }
        Some(mut prev) => {
            if prev.samples.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "previous sample covers {} observations, dataset has {n}",
                    prev.samples.len()
                )));
            }
            let outcomes: Vec<Result<bool>> = prev
                .samples
                .par_iter_mut()
                .enumerate()
                .map(|(j, s)| {
                    let mu = design.mean(j, &params.beta);
                    recycle_to_new_params(s, &mu, &params.sigma, &config.smc)
                        .map(|o| o.used_fallback)
                })
                .collect();
            let mut fallbacks = 0;
            for (j, r) in outcomes.into_iter().enumerate() {
                match r {
                    Ok(true) => fallbacks += 1,
                    Ok(false) => {}
                    Err(e) => {
                        return Err(Error::EStepFailed {
                            observation: j,
                            source: Box::new(e),
                        })
                    }
                }
            }
            prev.recycle_fallbacks = fallbacks;
            prev
        }
    };
    let probs: Vec<f64> = latent.samples.iter().map(|s| s.log_prob().exp()).collect();
    let loglik = log_likelihood(design.dataset(), &probs)?;
    Ok((latent, loglik))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normal;
    use crate::probit::Observation;

    fn univariate_dataset() -> ProbitDataset {
        // Alternating responses with an intercept-only design.
        let observations = (0..6)
            .map(|j| Observation {
                response: vec![j % 2 == 0],
                covariates: vec![vec![1.0]],
            })
            .collect();
        ProbitDataset::new(observations).unwrap()
    }

    fn smc(particles: usize) -> SmcConfig {
        SmcConfig {
            particles,
            ..SmcConfig::default()
        }
    }

    #[test]
    fn univariate_moments_match_truncated_normal_formulas() {
        let dataset = univariate_dataset();
        let design = ModelDesign::new(&dataset, Layout::BlockDiagonal).unwrap();
        let params = Parameters {
            beta: DVector::from_row_slice(&[0.3]),
            sigma: DMatrix::identity(1, 1),
        };
        let config = EStepConfig {
            smc: smc(4000),
            seed: 99,
            iteration: 0,
        };
        let (latent, loglik) = e_step(&params, &design, &config, None).unwrap();
        let moments = latent.moments();
        let mu = 0.3;
        // Z ~ N(mu, 1) above zero: mean mu + r, variance 1 - r(mu + r)
        // where r is the hazard pdf(mu)/cdf(mu); below zero by symmetry.
        let r_pos = normal::pdf(mu) / normal::cdf(mu);
        let mean_pos = mu + r_pos;
        let second_pos = 1.0 - r_pos * (mu + r_pos) + mean_pos * mean_pos;
        let r_neg = normal::pdf(mu) / normal::sf(mu);
        let mean_neg = mu - r_neg;
        let second_neg = 1.0 + r_neg * (mu - r_neg) + mean_neg * mean_neg;
        for j in 0..6 {
            let (want_mean, want_second) = if j % 2 == 0 {
                (mean_pos, second_pos)
            } else {
                (mean_neg, second_neg)
            };
            assert!(
                (moments.m[j][0] - want_mean).abs() < 0.05,
                "obs {j}: {} vs {want_mean}",
                moments.m[j][0]
            );
            assert!(
                (moments.s[j][(0, 0)] - want_second).abs() < 0.08,
                "obs {j}: {} vs {want_second}",
                moments.s[j][(0, 0)]
            );
        }
        let want_ll = 3.0 * normal::cdf(mu).ln() + 3.0 * normal::sf(mu).ln();
        assert!((loglik - want_ll).abs() < 0.05, "{loglik} vs {want_ll}");
    }

    #[test]
    fn recycling_with_unchanged_params_reproduces_fresh_moments() {
        let dataset = univariate_dataset();
        let design = ModelDesign::new(&dataset, Layout::BlockDiagonal).unwrap();
        let params = Parameters {
            beta: DVector::from_row_slice(&[0.4]),
            sigma: DMatrix::identity(1, 1),
        };
        let config = EStepConfig {
            smc: smc(2000),
            seed: 5,
            iteration: 0,
        };
        let (fresh, _) = e_step(&params, &design, &config, None).unwrap();
        let fresh_moments = fresh.moments();
        let (recycled, _) = e_step(&params, &design, &config, Some(fresh)).unwrap();
        assert_eq!(recycled.recycle_fallbacks, 0);
        let rec_moments = recycled.moments();
        for j in 0..6 {
            // Identical targets: only Metropolis rejuvenation happened, so
            // the moments move by at most Monte Carlo jitter.
            assert!((rec_moments.m[j][0] - fresh_moments.m[j][0]).abs() < 0.05);
        }
    }

    #[test]
    fn e_step_is_deterministic_and_seed_sensitive() {
        let dataset = univariate_dataset();
        let design = ModelDesign::new(&dataset, Layout::BlockDiagonal).unwrap();
        let params = Parameters {
            beta: DVector::from_row_slice(&[-0.2]),
            sigma: DMatrix::identity(1, 1),
        };
        let config = EStepConfig {
            smc: smc(500),
            seed: 7,
            iteration: 3,
        };
        let (a, la) = e_step(&params, &design, &config, None).unwrap();
        let (b, lb) = e_step(&params, &design, &config, None).unwrap();
        assert_eq!(la, lb);
        for j in 0..6 {
            assert_eq!(a.sample(j).log_prob(), b.sample(j).log_prob());
        }
        let other = EStepConfig {
            iteration: 4,
            ..config
        };
        let (_, lc) = e_step(&params, &design, &other, None).unwrap();
        assert_ne!(la, lc);
    }

    #[test]
    fn per_observation_streams_differ() {
        let s0 = observation_seed(1, 2, 3);
        assert_ne!(s0, observation_seed(1, 2, 4));
        assert_ne!(s0, observation_seed(1, 3, 3));
        assert_ne!(s0, observation_seed(2, 2, 3));
        assert_eq!(s0, observation_seed(1, 2, 3));
    }
}
