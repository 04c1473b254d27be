//! Maximum-likelihood estimation for multivariate probit models.
//!
//! A multivariate probit model observes binary vectors `y` whose components
//! are the sign indicators of a latent Gaussian vector `Z ~ N(X beta, Sigma)`.
//! The likelihood of one observation is the probability that `Z` falls in the
//! orthant selected by `y`, and the MLE is found by Monte Carlo EM:
//!
//! * the E step draws weighted particles from the latent normal truncated to
//!   each observation's orthant ([`tmvn`]), which also yields an estimate of
//!   the orthant probability and hence of the log-likelihood;
//! * the M step maximises the expected complete-data log-likelihood by
//!   cycling conditional maximisations in beta and Sigma ([`mcem`]), with
//!   optional handling of the scale invariance of the model.
//!
//! The truncated-normal sampler is a sequential Monte Carlo sampler that
//! starts from a heavy-tailed Student t distribution, slides the truncation
//! bounds inward along an adaptive schedule, and finally anneals the degrees
//! of freedom up to the Gaussian limit. [`oracle`] holds slow reference
//! implementations (rejection and Gibbs samplers, quadrature for orthant
//! probabilities) used to validate the fast paths.

pub mod error;
pub mod mcem;
pub mod normal;
pub mod oracle;
pub mod probit;
pub mod tmvn;

pub use error::Error;
pub type Result<T> = std::result::Result<T, Error>;
