//! Shared fixtures for the benchmark targets.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mvprobit::probit::{Observation, Orthant, ProbitDataset};

/// Equicorrelated covariance with unit diagonal.
pub fn equicorrelated(p: usize, rho: f64) -> DMatrix<f64> {
    let mut sigma = DMatrix::from_element(p, p, rho);
    for i in 0..p {
        sigma[(i, i)] = 1.0;
    }
    sigma
}

/// A moderately hard truncation problem: shifted mean, all-plus orthant.
pub fn shifted_target(p: usize, shift: f64) -> (Orthant, DVector<f64>, DMatrix<f64>) {
    let orthant = Orthant::from_response(&vec![true; p]);
    let mu = DVector::from_element(p, -shift);
    let sigma = equicorrelated(p, 0.5);
    (orthant, mu, sigma)
}

/// Synthetic block-diagonal dataset with two covariates per component.
pub fn synthetic_dataset(n: usize, p: usize, seed: u64) -> ProbitDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = equicorrelated(p, 0.5);
    let chol = sigma.cholesky().expect("correlation is SPD");
    let obs: Vec<Observation> = (0..n)
        .map(|_| {
            let x: Vec<f64> = (0..p).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let eps = DVector::from_fn(p, |_, _| {
                rng.sample::<f64, _>(rand_distr::StandardNormal)
            });
            let noise = chol.l() * eps;
            Observation {
                response: (0..p).map(|i| 0.3 + 0.5 * x[i] + noise[i] > 0.0).collect(),
                covariates: (0..p).map(|i| vec![1.0, x[i]]).collect(),
            }
        })
        .collect();
    ProbitDataset::new(obs).expect("dataset is consistent")
}
