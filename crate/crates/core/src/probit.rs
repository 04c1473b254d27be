//! Model types for the multivariate probit likelihood.
//!
//! An observation is a binary vector `y` of length `p` together with one
//! covariate vector per component. The latent vector `Z ~ N(X beta, Sigma)`
//! produces `y` through its signs: `y_i = 1` iff `Z_i > 0`, so each
//! observation constrains `Z` to an orthant and the likelihood is a product
//! of orthant probabilities.
//!
//! Two design layouts are supported. In the block-diagonal layout every
//! component has its own coefficient block and `X` is `p x (k_1+...+k_p)`
//! with the i-th covariate vector in block position i. In the shared layout
//! all components use one common coefficient vector and `X` simply stacks
//! the covariate rows.
//!
//! Only `(Sigma, beta)` up to a positive diagonal rescaling of the latent
//! scale is identified; [`project_to_identified`] maps parameters onto the
//! two reduced spaces used here (unit diagonal, or unit first diagonal).

use nalgebra::{DMatrix, DVector};

use crate::normal;
use crate::{Error, Result};

const PROB_CLAMP: f64 = 1e-10;
const IRLS_TOL: f64 = 1e-8;
const IRLS_MAX_ITERS: usize = 50;

/// How per-component covariates map onto the coefficient vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// Separate coefficient block per component.
    BlockDiagonal,
    /// One coefficient vector shared by all components; requires equal
    /// covariate counts across components.
    Shared,
}

/// One subject: binary responses plus one covariate vector per component.
#[derive(Debug, Clone)]
pub struct Observation {
    pub response: Vec<bool>,
    pub covariates: Vec<Vec<f64>>,
}

/// A validated collection of observations with consistent dimensions.
#[derive(Debug, Clone)]
pub struct ProbitDataset {
    observations: Vec<Observation>,
    p: usize,
    block_dims: Vec<usize>,
}

impl ProbitDataset {
    pub fn new(observations: Vec<Observation>) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::InvalidDataset("no observations".into()));
        }
        let p = observations[0].response.len();
        if p == 0 {
            return Err(Error::InvalidDataset("zero-dimensional response".into()));
        }
        let block_dims: Vec<usize> = observations[0].covariates.iter().map(Vec::len).collect();
        if block_dims.len() != p {
            return Err(Error::InvalidDataset(format!(
                "observation 0 has {} covariate vectors for {} responses",
                block_dims.len(),
                p
            )));
        }
        if block_dims.iter().any(|&k| k == 0) {
            return Err(Error::InvalidDataset("empty covariate vector".into()));
        }
        for (j, obs) in observations.iter().enumerate() {
            if obs.response.len() != p || obs.covariates.len() != p {
                return Err(Error::InvalidDataset(format!(
                    "observation {j} does not have {p} components"
                )));
            }
            for (i, x) in obs.covariates.iter().enumerate() {
                if x.len() != block_dims[i] {
                    return Err(Error::InvalidDataset(format!(
                        "observation {j}, component {i}: expected {} covariates, found {}",
                        block_dims[i],
                        x.len()
                    )));
                }
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidDataset(format!(
                        "observation {j}, component {i}: non-finite covariate"
                    )));
                }
            }
        }
        Ok(Self {
            observations,
            p,
            block_dims,
        })
    }

    pub fn n(&self) -> usize {
        self.observations.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn block_dims(&self) -> &[usize] {
        &self.block_dims
    }

    /// Coefficient structure induced by a layout choice.
    pub fn structure(&self, layout: Layout) -> Result<ModelStructure> {
        ModelStructure::new(self.p, layout, &self.block_dims)
    }
}

/// Dimensions of the coefficient vector under a given layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelStructure {
    pub p: usize,
    pub layout: Layout,
    /// Per-component block sizes (block-diagonal) or the single shared size.
    pub blocks: Vec<usize>,
}

impl ModelStructure {
    pub fn new(p: usize, layout: Layout, block_dims: &[usize]) -> Result<Self> {
        match layout {
            Layout::BlockDiagonal => Ok(Self {
                p,
                layout,
                blocks: block_dims.to_vec(),
            }),
            Layout::Shared => {
                let k = block_dims[0];
                if block_dims.iter().any(|&ki| ki != k) {
                    return Err(Error::InvalidDataset(
                        "shared layout requires equal covariate counts across components".into(),
                    ));
                }
                Ok(Self {
                    p,
                    layout,
                    blocks: vec![k],
                })
            }
        }
    }

    /// Total coefficient count.
    pub fn k(&self) -> usize {
        self.blocks.iter().sum()
    }
}

/// The orthant of latent space selected by a binary response: component i is
/// `(0, inf)` when the response is 1 and `(-inf, 0]` otherwise.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Orthant {
    signs: Vec<bool>,
}

impl Orthant {
    pub fn from_response(response: &[bool]) -> Self {
        Self {
            signs: response.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.signs.len()
    }

    pub fn signs(&self) -> &[bool] {
        &self.signs
    }

    pub fn contains(&self, z: &DVector<f64>) -> bool {
        debug_assert_eq!(z.len(), self.signs.len());
        self.signs
            .iter()
            .zip(z.iter())
            .all(|(&pos, &zi)| if pos { zi > 0.0 } else { zi <= 0.0 })
    }
}

/// Model parameters on the unidentified (full) scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub beta: DVector<f64>,
    pub sigma: DMatrix<f64>,
}

impl Parameters {
    pub fn validate(&self, structure: &ModelStructure) -> Result<()> {
        let p = structure.p;
        if self.sigma.nrows() != p || self.sigma.ncols() != p {
            return Err(Error::DimensionMismatch(format!(
                "sigma is {}x{}, expected {p}x{p}",
                self.sigma.nrows(),
                self.sigma.ncols()
            )));
        }
        if self.beta.len() != structure.k() {
            return Err(Error::DimensionMismatch(format!(
                "beta has length {}, expected {}",
                self.beta.len(),
                structure.k()
            )));
        }
        for i in 0..p {
            for l in 0..i {
                if (self.sigma[(i, l)] - self.sigma[(l, i)]).abs()
                    > 1e-8 * (1.0 + self.sigma[(i, i)].abs())
                {
                    return Err(Error::InvalidArgument("sigma is not symmetric".into()));
                }
            }
        }
        if self.sigma.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(())
    }
}

/// Which reduced parameter space to project onto.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdentifyMode {
    /// Unit diagonal: Sigma becomes a correlation matrix.
    Correlation,
    /// Only the first diagonal entry is pinned to one.
    FixedFirst,
}

/// Parameters on an identified scale, together with the rescaling that
/// produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentifiedParameters {
    pub omega: DMatrix<f64>,
    pub lambda: DVector<f64>,
    /// Per-component latent scales d_i that were divided out.
    pub scale: DVector<f64>,
    pub mode: IdentifyMode,
}

/// Rescale `(beta, Sigma)` onto the requested identified space.
///
/// Correlation mode divides component i by `d_i = sqrt(sigma_ii)`, which for
/// the block-diagonal layout rescales block i of beta. A shared coefficient
/// vector only admits a common scale, so correlation mode then requires equal
/// diagonal entries. Fixed-first mode always rescales uniformly by
/// `sqrt(sigma_11)`.
pub fn project_to_identified(
    params: &Parameters,
    structure: &ModelStructure,
    mode: IdentifyMode,
) -> Result<IdentifiedParameters> {
    params.validate(structure)?;
    let p = structure.p;
    let sigma = &params.sigma;
    let scale = match mode {
        IdentifyMode::Correlation => {
            DVector::from_iterator(p, (0..p).map(|i| sigma[(i, i)].sqrt()))
        }
        IdentifyMode::FixedFirst => DVector::from_element(p, sigma[(0, 0)].sqrt()),
    };
    if scale.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::NotPositiveDefinite);
    }
    let lambda = match (mode, structure.layout) {
        (IdentifyMode::FixedFirst, _) => &params.beta / scale[0],
        (IdentifyMode::Correlation, Layout::BlockDiagonal) => {
            let mut lambda = params.beta.clone();
            let mut offset = 0;
            for (i, &ki) in structure.blocks.iter().enumerate() {
                for c in 0..ki {
                    lambda[offset + c] /= scale[i];
                }
                offset += ki;
            }
            lambda
        }
        (IdentifyMode::Correlation, Layout::Shared) => {
            let d0 = scale[0];
            if scale.iter().any(|&d| (d - d0).abs() > 1e-8 * d0) {
                return Err(Error::IdentificationError(
                    "correlation projection of a shared coefficient vector needs equal \
                     latent scales across components"
                        .into(),
                ));
            }
            &params.beta / d0
        }
    };
    let mut omega = DMatrix::zeros(p, p);
    for i in 0..p {
        for l in 0..p {
            omega[(i, l)] = sigma[(i, l)] / (scale[i] * scale[l]);
        }
    }
    // Pin the constrained entries exactly.
    match mode {
        IdentifyMode::Correlation => {
            for i in 0..p {
                omega[(i, i)] = 1.0;
            }
        }
        IdentifyMode::FixedFirst => omega[(0, 0)] = 1.0,
    }
    Ok(IdentifiedParameters {
        omega,
        lambda,
        scale,
        mode,
    })
}

/// Undo [`project_to_identified`]: rebuild `(beta, Sigma)` from identified
/// parameters and their scales.
pub fn recompose(identified: &IdentifiedParameters, structure: &ModelStructure) -> Parameters {
    let p = structure.p;
    let scale = &identified.scale;
    let mut sigma = DMatrix::zeros(p, p);
    for i in 0..p {
        for l in 0..p {
            sigma[(i, l)] = identified.omega[(i, l)] * scale[i] * scale[l];
        }
    }
    let beta = match (identified.mode, structure.layout) {
        (IdentifyMode::FixedFirst, _) | (IdentifyMode::Correlation, Layout::Shared) => {
            &identified.lambda * scale[0]
        }
        (IdentifyMode::Correlation, Layout::BlockDiagonal) => {
            let mut beta = identified.lambda.clone();
            let mut offset = 0;
            for (i, &ki) in structure.blocks.iter().enumerate() {
                for c in 0..ki {
                    beta[offset + c] *= scale[i];
                }
                offset += ki;
            }
            beta
        }
    };
    Parameters { beta, sigma }
}

/// Design matrix of one observation: `p x k` mapping the coefficient vector
/// to the latent mean.
pub fn design_matrix(covariates: &[Vec<f64>], structure: &ModelStructure) -> DMatrix<f64> {
    let p = structure.p;
    match structure.layout {
        Layout::Shared => {
            let k = structure.blocks[0];
            DMatrix::from_fn(p, k, |i, c| covariates[i][c])
        }
        Layout::BlockDiagonal => {
            let k = structure.k();
            let mut x = DMatrix::zeros(p, k);
            let mut offset = 0;
            for (i, &ki) in structure.blocks.iter().enumerate() {
                for c in 0..ki {
                    x[(i, offset + c)] = covariates[i][c];
                }
                offset += ki;
            }
            x
        }
    }
}

/// Independent-component starting values: probit regressions fitted by
/// Fisher scoring, one per component (block-diagonal) or pooled over all
/// components (shared), with Sigma set to the identity.
pub fn univariate_probit_init(dataset: &ProbitDataset, layout: Layout) -> Result<Parameters> {
    let structure = dataset.structure(layout)?;
    let p = dataset.p();
    let beta = match layout {
        Layout::Shared => {
            let k = structure.blocks[0];
            let mut rows = Vec::with_capacity(dataset.n() * p);
            let mut ys = Vec::with_capacity(dataset.n() * p);
            for obs in dataset.observations() {
                for i in 0..p {
                    rows.push(obs.covariates[i].as_slice());
                    ys.push(obs.response[i]);
                }
            }
            probit_irls(&rows, &ys, k, 1)?
        }
        Layout::BlockDiagonal => {
            let mut beta = DVector::zeros(structure.k());
            let mut offset = 0;
            for (i, &ki) in structure.blocks.iter().enumerate() {
                let rows: Vec<&[f64]> = dataset
                    .observations()
                    .iter()
                    .map(|o| o.covariates[i].as_slice())
                    .collect();
                let ys: Vec<bool> = dataset.observations().iter().map(|o| o.response[i]).collect();
                let bi = probit_irls(&rows, &ys, ki, i + 1)?;
                beta.rows_mut(offset, ki).copy_from(&bi);
                offset += ki;
            }
            beta
        }
    };
    Ok(Parameters {
        beta,
        sigma: DMatrix::identity(p, p),
    })
}

fn probit_irls(rows: &[&[f64]], ys: &[bool], k: usize, component: usize) -> Result<DVector<f64>> {
    let mut beta = DVector::zeros(k);
    for _ in 0..IRLS_MAX_ITERS {
        let mut xtwx: DMatrix<f64> = DMatrix::zeros(k, k);
        let mut xtwz: DVector<f64> = DVector::zeros(k);
        let mut score: DVector<f64> = DVector::zeros(k);
        for (x, &y) in rows.iter().zip(ys) {
            let eta: f64 = x.iter().zip(beta.iter()).map(|(a, b)| a * b).sum();
            let mu = normal::cdf(eta).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            let dens = normal::pdf(eta);
            let resid = (if y { 1.0 } else { 0.0 }) - mu;
            let ratio = dens / (mu * (1.0 - mu));
            let w = dens * ratio;
            // Working response for Fisher scoring on the probit link.
            let z = if dens > 0.0 { eta + resid / dens } else { eta };
            for a in 0..k {
                score[a] += x[a] * resid * ratio;
                xtwz[a] += w * x[a] * z;
                for b in 0..k {
                    xtwx[(a, b)] += w * x[a] * x[b];
                }
            }
        }
        if score.amax() < IRLS_TOL {
            return Ok(beta);
        }
        let chol = xtwx.cholesky().ok_or(Error::SingularSystem)?;
        let new_beta = chol.solve(&xtwz);
        if new_beta.iter().any(|v: &f64| !v.is_finite()) {
            return Err(Error::ProbitInitFailed {
                component,
                max_iters: IRLS_MAX_ITERS,
            });
        }
        beta = new_beta;
    }
    Err(Error::ProbitInitFailed {
        component,
        max_iters: IRLS_MAX_ITERS,
    })
}

/// Sum of log orthant-probability estimates, one per observation.
pub fn log_likelihood(dataset: &ProbitDataset, orthant_probs: &[f64]) -> Result<f64> {
    if orthant_probs.len() != dataset.n() {
        return Err(Error::DimensionMismatch(format!(
            "{} probability estimates for {} observations",
            orthant_probs.len(),
            dataset.n()
        )));
    }
    let mut total = 0.0;
    for (j, &pj) in orthant_probs.iter().enumerate() {
        if !(pj > 0.0 && pj <= 1.0) {
            return Err(Error::DegenerateProbability {
                observation: j,
                value: pj,
            });
        }
        total += pj.ln();
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn intercept_only(n_pos: usize, n: usize) -> ProbitDataset {
        let observations = (0..n)
            .map(|j| Observation {
                response: vec![j < n_pos],
                covariates: vec![vec![1.0]],
            })
            .collect();
        ProbitDataset::new(observations).unwrap()
    }

    #[test]
    fn orthant_membership_uses_half_open_components() {
        let orthant = Orthant::from_response(&[true, false, true]);
        assert!(orthant.contains(&DVector::from_vec(vec![0.5, -1.0, 2.0])));
        // Zero belongs to the nonpositive side only.
        assert!(!orthant.contains(&DVector::from_vec(vec![0.0, -1.0, 2.0])));
        assert!(orthant.contains(&DVector::from_vec(vec![0.5, 0.0, 2.0])));
        assert!(!orthant.contains(&DVector::from_vec(vec![0.5, -1.0, -2.0])));
    }

    #[test]
    fn design_matrix_layouts() {
        let covs = vec![vec![1.0, 3.0], vec![2.0]];
        let s = ModelStructure::new(2, Layout::BlockDiagonal, &[2, 1]).unwrap();
        let x = design_matrix(&covs, &s);
        assert_eq!(x.nrows(), 2);
        assert_eq!(x.ncols(), 3);
        assert_eq!(x[(0, 0)], 1.0);
        assert_eq!(x[(0, 1)], 3.0);
        assert_eq!(x[(0, 2)], 0.0);
        assert_eq!(x[(1, 0)], 0.0);
        assert_eq!(x[(1, 2)], 2.0);

        let covs = vec![vec![1.0, -2.0], vec![1.0, -1.0], vec![1.0, 0.0]];
        let s = ModelStructure::new(3, Layout::Shared, &[2, 2, 2]).unwrap();
        let x = design_matrix(&covs, &s);
        assert_eq!(x.nrows(), 3);
        assert_eq!(x.ncols(), 2);
        assert_eq!(x[(1, 1)], -1.0);
    }

    #[test]
    fn shared_layout_rejects_ragged_blocks() {
        assert!(ModelStructure::new(2, Layout::Shared, &[2, 3]).is_err());
    }

    #[test]
    fn correlation_projection_rescales_blocks() {
        let params = Parameters {
            beta: DVector::from_vec(vec![1.0, -2.0, 3.0]),
            sigma: DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0])),
        };
        let s = ModelStructure::new(2, Layout::BlockDiagonal, &[2, 1]).unwrap();
        let id = project_to_identified(&params, &s, IdentifyMode::Correlation).unwrap();
        assert_eq!(id.omega, DMatrix::identity(2, 2));
        assert_eq!(id.scale, DVector::from_vec(vec![2.0, 3.0]));
        assert_eq!(id.lambda, DVector::from_vec(vec![0.5, -1.0, 1.0]));
        let back = recompose(&id, &s);
        assert!((back.beta - params.beta).amax() < 1e-14);
        assert!((back.sigma - params.sigma).amax() < 1e-14);
    }

    #[test]
    fn fixed_first_projection_scales_uniformly() {
        let params = Parameters {
            beta: DVector::from_vec(vec![2.0, 4.0]),
            sigma: DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 4.0]),
        };
        let s = ModelStructure::new(2, Layout::Shared, &[2, 2]).unwrap();
        let id = project_to_identified(&params, &s, IdentifyMode::FixedFirst).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        assert!((id.omega.clone() - expected).amax() < 1e-14);
        assert_eq!(id.scale, DVector::from_vec(vec![2.0, 2.0]));
        assert_eq!(id.lambda, DVector::from_vec(vec![1.0, 2.0]));
    }

    #[test]
    fn correlation_projection_of_shared_needs_equal_scales() {
        let params = Parameters {
            beta: DVector::from_vec(vec![1.0]),
            sigma: DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 9.0]),
        };
        let s = ModelStructure::new(2, Layout::Shared, &[1, 1]).unwrap();
        let err = project_to_identified(&params, &s, IdentifyMode::Correlation).unwrap_err();
        assert!(matches!(err, Error::IdentificationError(_)));
    }

    #[test]
    fn intercept_only_probit_hits_closed_form() {
        let dataset = intercept_only(3, 10);
        let params = univariate_probit_init(&dataset, Layout::BlockDiagonal).unwrap();
        let expected = normal::quantile(0.3);
        assert!(
            (params.beta[0] - expected).abs() < 1e-8,
            "{} vs {expected}",
            params.beta[0]
        );
        assert_eq!(params.sigma, DMatrix::identity(1, 1));
    }

    #[test]
    fn separated_component_is_reported() {
        // y perfectly follows the sign of x: no finite MLE.
        let observations = (0..20)
            .map(|j| {
                let x = j as f64 - 9.5;
                Observation {
                    response: vec![x > 0.0],
                    covariates: vec![vec![1.0, x]],
                }
            })
            .collect();
        let dataset = ProbitDataset::new(observations).unwrap();
        let err = univariate_probit_init(&dataset, Layout::BlockDiagonal).unwrap_err();
        assert!(matches!(err, Error::ProbitInitFailed { component: 1, .. }));
    }

    #[test]
    fn log_likelihood_sums_and_flags_degenerate() {
        let dataset = intercept_only(1, 3);
        let ll = log_likelihood(&dataset, &[0.5, 0.25, 1.0]).unwrap();
        assert!((ll - (0.5f64.ln() + 0.25f64.ln())).abs() < 1e-14);
        let err = log_likelihood(&dataset, &[0.5, 0.0, 1.0]).unwrap_err();
        assert!(matches!(
            err,
            Error::DegenerateProbability { observation: 1, .. }
        ));
    }
}
