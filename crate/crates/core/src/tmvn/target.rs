//! Bridge targets: Student-t or Gaussian kernels truncated to a region of
//! per-coordinate lower bounds.
//!
//! The sampler works internally in a frame where every truncation is a lower
//! bound; the sign flip back to the requested orthant happens at the module
//! boundary. Densities are split into an unnormalized kernel and a separate
//! log normalizing constant so the running mass estimate can telescope over
//! kernel ratios alone.

use nalgebra::storage::{Storage, StorageMut};
use nalgebra::{DMatrix, DVector, Dyn, Vector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::{Error, Result};

/// Truncation region: one lower bound per coordinate, with negative infinity
/// meaning unconstrained. Membership is strict, matching the half-open
/// orthant convention.
#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    lower: DVector<f64>,
}

impl Region {
    pub fn new(lower: DVector<f64>) -> Result<Self> {
        if lower.iter().any(|b| b.is_nan() || *b == f64::INFINITY) {
            return Err(Error::InvalidArgument(
                "region bounds must be finite or negative infinity".into(),
            ));
        }
        Ok(Self { lower })
    }

    pub fn unbounded(p: usize) -> Self {
        Self {
            lower: DVector::from_element(p, f64::NEG_INFINITY),
        }
    }

    /// Bounds interpolated along the straight path from `start` to `end`,
    /// with `theta = 1` landing exactly on `end`.
    pub fn at_theta(start: &DVector<f64>, end: &DVector<f64>, theta: f64) -> Self {
        debug_assert!((0.0..=1.0).contains(&theta));
        let lower = start.zip_map(end, |s, e| {
            if theta == 1.0 {
                e
            } else {
                (1.0 - theta) * s + theta * e
            }
        });
        Self { lower }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn contains<S: Storage<f64, Dyn>>(&self, z: &Vector<f64, Dyn, S>) -> bool {
        (0..self.lower.len()).all(|i| z[i] > self.lower[i])
    }
}

/// One intermediate target of the sampler. `nu = f64::INFINITY` selects the
/// Gaussian limit; any finite positive value gives the Student-t kernel with
/// that many degrees of freedom.
#[derive(Clone, Debug)]
pub struct TargetSpec {
    nu: f64,
    mu: DVector<f64>,
    /// Lower Cholesky factor of sigma.
    l: DMatrix<f64>,
    /// Rows of `l` up to the diagonal, packed contiguously so the
    /// per-particle forward solve runs on slices.
    l_packed: Vec<f64>,
    log_det_sigma: f64,
    region: Region,
}

impl TargetSpec {
    pub fn new(nu: f64, mu: DVector<f64>, sigma: &DMatrix<f64>, region: Region) -> Result<Self> {
        let p = mu.len();
        if sigma.nrows() != p || sigma.ncols() != p {
            return Err(Error::DimensionMismatch(format!(
                "target mean has length {p} but sigma is {}x{}",
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        if region.dim() != p {
            return Err(Error::DimensionMismatch(format!(
                "target dimension {p} but region has {} bounds",
                region.dim()
            )));
        }
        if nu.is_nan() || nu <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "degrees of freedom must be positive or infinite, got {nu}"
            )));
        }
        let chol = sigma
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite)?;
        let l = chol.l();
        let log_det_sigma = 2.0 * (0..p).map(|i| l[(i, i)].ln()).sum::<f64>();
        let mut l_packed = Vec::with_capacity(p * (p + 1) / 2);
        for i in 0..p {
            for j in 0..=i {
                l_packed.push(l[(i, j)]);
            }
        }
        Ok(Self {
            nu,
            mu,
            l,
            l_packed,
            log_det_sigma,
            region,
        })
    }

    /// Same kernel, different truncation region. Reuses the factorization.
    pub fn with_region(&self, region: Region) -> Result<Self> {
        if region.dim() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "target dimension {} but region has {} bounds",
                self.dim(),
                region.dim()
            )));
        }
        let mut t = self.clone();
        t.region = region;
        Ok(t)
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    /// True when kernels agree pointwise, so an incremental weight reduces to
    /// the indicator of the next region.
    pub(crate) fn kernel_matches(&self, other: &Self) -> bool {
        self.nu == other.nu && self.mu == other.mu && self.l == other.l
    }

    /// (z - mu)' inv(sigma) (z - mu) by forward substitution on the cached
    /// factor. `scratch` must have length p and is clobbered.
    pub(crate) fn quad_form_with<S: Storage<f64, Dyn>>(
        &self,
        z: &Vector<f64, Dyn, S>,
        scratch: &mut DVector<f64>,
    ) -> f64 {
        let p = self.mu.len();
        for i in 0..p {
            scratch[i] = z[i] - self.mu[i];
        }
        let x = scratch.as_mut_slice();
        let mut q = 0.0;
        let mut row = 0;
        for i in 0..p {
            let mut s = x[i];
            for (j, &lij) in self.l_packed[row..row + i].iter().enumerate() {
                s -= lij * x[j];
            }
            let y = s / self.l_packed[row + i];
            row += i + 1;
            x[i] = y;
            q += y * y;
        }
        q
    }

    pub(crate) fn log_kernel_with<S: Storage<f64, Dyn>>(
        &self,
        z: &Vector<f64, Dyn, S>,
        scratch: &mut DVector<f64>,
    ) -> f64 {
        let q = self.quad_form_with(z, scratch);
        if self.nu.is_finite() {
            let p = self.mu.len() as f64;
            -0.5 * (self.nu + p) * (q / self.nu).ln_1p()
        } else {
            -0.5 * q
        }
    }

    /// Log of the unnormalized density kernel, ignoring the region.
    pub fn log_density_unnorm(&self, z: &DVector<f64>) -> f64 {
        let mut scratch = DVector::zeros(self.dim());
        self.log_kernel_with(z, &mut scratch)
    }

    /// Log normalizing prefactor of the untruncated density, so that
    /// `exp(log_norm_constant + log_density_unnorm)` integrates to one.
    pub fn log_norm_constant(&self) -> f64 {
        let p = self.mu.len() as f64;
        if self.nu.is_finite() {
            ln_gamma(0.5 * (self.nu + p)) - ln_gamma(0.5 * self.nu)
                - 0.5 * p * (std::f64::consts::PI * self.nu).ln()
                - 0.5 * self.log_det_sigma
        } else {
            -0.5 * p * (2.0 * std::f64::consts::PI).ln() - 0.5 * self.log_det_sigma
        }
    }

    /// One exact draw from the untruncated kernel. `scratch` must have
    /// length p and is clobbered.
    pub(crate) fn sample_into<S: StorageMut<f64, Dyn>>(
        &self,
        rng: &mut ChaCha8Rng,
        out: &mut Vector<f64, Dyn, S>,
        scratch: &mut DVector<f64>,
    ) {
        let p = self.mu.len();
        for i in 0..p {
            scratch[i] = rng.sample::<f64, _>(StandardNormal);
        }
        let scale = if self.nu.is_finite() {
            let chi2 = ChiSquared::new(self.nu)
                .expect("validated degrees of freedom")
                .sample(rng);
            (self.nu / chi2).sqrt()
        } else {
            1.0
        };
        for i in 0..p {
            let mut s = 0.0;
            for j in 0..=i {
                s += self.l[(i, j)] * scratch[j];
            }
            out[i] = self.mu[i] + scale * s;
        }
    }
}

/// Schedule start bounds: six marginal Student standard deviations below the
/// mean, clipped so the path toward `end` never widens the region.
pub fn initial_lower_bounds(
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
    nu: f64,
    end: &DVector<f64>,
) -> Result<DVector<f64>> {
    if !(nu > 2.0) {
        return Err(Error::InvalidArgument(format!(
            "initial bounds need a finite Student variance, so nu > 2 (got {nu})"
        )));
    }
    if sigma.nrows() != mu.len() || sigma.ncols() != mu.len() || end.len() != mu.len() {
        return Err(Error::DimensionMismatch(
            "initial bounds: mu, sigma and end bounds disagree".into(),
        ));
    }
    let p = mu.len();
    let mut out = DVector::zeros(p);
    for i in 0..p {
        let var = nu * sigma[(i, i)] / (nu - 2.0);
        out[i] = (mu[i] - 6.0 * var.sqrt()).min(end[i]);
    }
    Ok(out)
}

/// Componentwise sign flip taking the orthant frame to the all-lower-bound
/// frame and back.
pub(crate) fn flip_vector(v: &DVector<f64>, signs: &[bool]) -> DVector<f64> {
    DVector::from_fn(v.len(), |i, _| if signs[i] { v[i] } else { -v[i] })
}

pub(crate) fn flip_matrix(m: &DMatrix<f64>, signs: &[bool]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| {
        let s = if signs[i] == signs[j] { 1.0 } else { -1.0 };
        s * m[(i, j)]
    })
}
