use thiserror::Error;

/// Errors shared across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("normal-equations matrix is singular")]
    SingularSystem,

    #[error("univariate probit fit for component {component} did not converge within {max_iters} iterations (separation?)")]
    ProbitInitFailed { component: usize, max_iters: usize },

    #[error("degenerate orthant-probability estimate {value:e} for observation {observation}")]
    DegenerateProbability { observation: usize, value: f64 },

    #[error("all particle weights are zero")]
    ZeroWeights,

    #[error("a particle lies outside the target region on entry to a Metropolis move")]
    ParticleOutsideRegion,

    #[error("no particle carries mass under the next target (schedule value {theta})")]
    TargetUnreachable { theta: f64 },

    #[error("effective sample size collapsed during reweighting toward new parameters")]
    EssCollapse,

    #[error(
        "correlation fixed-point iteration did not converge within {max_iters} iterations \
         (input diagonal {s_diag:?})"
    )]
    OmegaNotConverged { max_iters: usize, s_diag: Vec<f64> },

    #[error("scale solve produced non-positive diagonal entry {value}")]
    NonPositiveScale { value: f64 },

    #[error("conditional-maximisation cycle did not converge within {max_iters} iterations")]
    MStepNotConverged { max_iters: usize },

    #[error("identified projection is not defined: {0}")]
    IdentificationError(String),

    #[error("E step failed for observation {observation}: {source}")]
    EStepFailed {
        observation: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("rejection sampler acceptance rate {rate:e} below minimum {min:e}")]
    AcceptanceTooLow { rate: f64, min: f64 },

    #[error("standard-error computation failed: {0}")]
    StandardErrorFailed(String),
}
