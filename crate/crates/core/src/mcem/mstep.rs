//! Conditional maximizations of the Monte Carlo EM surrogate: generalized
//! least squares for the coefficients, closed-form covariance updates, the
//! cycling scheme that turns the two-step update into a full maximization,
//! and the rescale-invariant variant with its correlation fixed point and
//! latent-scale solve.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::design::{ModelDesign, SufficientMoments};
use crate::probit::{IdentifyMode, Layout, Parameters};
use crate::{Error, Result};

const OMEGA_MAX_ITERS: usize = 200;
const OMEGA_TOL: f64 = 1e-10;
const DAMPING_HALVINGS: usize = 30;
/// Ridge applied once when a moment-derived covariance loses definiteness
/// to roundoff.
const MOMENT_RIDGE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// The plain EM surrogate.
    Q,
    /// The surrogate rewritten to be invariant under latent rescaling.
    QTilde,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaxMode {
    /// Covariance restricted to correlation form throughout.
    Constrained,
    /// Full parameter space.
    Unconstrained,
    /// Only the first diagonal entry pinned to one (shared-coefficient
    /// models, where a common rescale is the only flat direction).
    FixedFirst,
    /// Correlation form under the invariant objective.
    CorrelationForm,
}

#[derive(Debug, Clone)]
pub struct MaximizerConfig {
    pub objective: Objective,
    pub mode: MaxMode,
    /// Euclidean tolerance on successive coefficient updates.
    pub inner_tol: f64,
    pub inner_max_iters: usize,
}

impl Default for MaximizerConfig {
    fn default() -> Self {
        Self {
            objective: Objective::Q,
            mode: MaxMode::Constrained,
            inner_tol: 1e-8,
            inner_max_iters: 100,
        }
    }
}

impl MaximizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.inner_tol > 0.0) {
            return Err(Error::InvalidArgument(
                "inner tolerance must be positive".into(),
            ));
        }
        if self.inner_max_iters == 0 {
            return Err(Error::InvalidArgument(
                "at least one inner iteration is required".into(),
            ));
        }
        match (self.objective, self.mode) {
            (Objective::Q, MaxMode::Constrained)
            | (Objective::Q, MaxMode::Unconstrained)
            | (Objective::QTilde, MaxMode::CorrelationForm)
            | (Objective::QTilde, MaxMode::Unconstrained)
            | (Objective::QTilde, MaxMode::FixedFirst) => Ok(()),
            (objective, mode) => Err(Error::InvalidArgument(format!(
                "objective {objective:?} cannot be maximized in mode {mode:?}"
            ))),
        }
    }
}

fn cholesky_strict(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    m.clone().cholesky().ok_or(Error::NotPositiveDefinite)
}

/// Factor a covariance assembled from moments, absorbing a zero eigenvalue
/// from roundoff with a tiny ridge.
fn cholesky_moments(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if let Some(c) = m.clone().cholesky() {
        return Ok(c);
    }
    let mut ridged = m.clone();
    for i in 0..m.nrows() {
        ridged[(i, i)] += MOMENT_RIDGE;
    }
    ridged.cholesky().ok_or(Error::NotPositiveDefinite)
}

fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

/// `-(N/2) [ log|Sigma| + tr(Sigma^{-1} C) ]` given a factored Sigma.
fn gaussian_fit_value(chol: &Cholesky<f64, Dyn>, c: &DMatrix<f64>, n: usize) -> f64 {
    let solved = chol.solve(c);
    -(n as f64) / 2.0 * (log_det(chol) + solved.trace())
}

/// Mean residual second moment with per-component scales divided out of the
/// fitted mean: `(1/N) sum_j sum_k W (Z - D^{-1} X^j beta)(...)^T`.
pub fn s_hat(
    beta: &DVector<f64>,
    d: &DVector<f64>,
    moments: &SufficientMoments,
    design: &ModelDesign,
) -> Result<DMatrix<f64>> {
    let p = design.p();
    if let Some(&bad) = d.iter().find(|&&v| !(v > 0.0)) {
        return Err(Error::NonPositiveScale { value: bad });
    }
    if d.len() != p {
        return Err(Error::DimensionMismatch(format!(
            "{} scales for {p} components",
            d.len()
        )));
    }
    let n = design.n();
    let mut acc = DMatrix::zeros(p, p);
    for j in 0..n {
        let mut b = design.mean(j, beta);
        for i in 0..p {
            b[i] /= d[i];
        }
        let m = &moments.m[j];
        acc += &moments.s[j];
        for i in 0..p {
            for l in 0..p {
                acc[(i, l)] += b[i] * b[l] - m[i] * b[l] - b[i] * m[l];
            }
        }
    }
    acc /= n as f64;
    // Exact symmetry, so downstream factorizations see a clean input.
    for i in 0..p {
        for l in 0..i {
            let avg = 0.5 * (acc[(i, l)] + acc[(l, i)]);
            acc[(i, l)] = avg;
            acc[(l, i)] = avg;
        }
    }
    Ok(acc)
}

/// The covariance maximizing the surrogate at fixed coefficients.
pub fn sigma_hat(
    beta: &DVector<f64>,
    moments: &SufficientMoments,
    design: &ModelDesign,
) -> Result<DMatrix<f64>> {
    s_hat(beta, &DVector::from_element(design.p(), 1.0), moments, design)
}

/// The EM surrogate `-(N/2)[log|Sigma| + tr{Sigma^{-1} (1/N) sum_j E_j}]`.
pub fn q_function(
    params: &Parameters,
    moments: &SufficientMoments,
    design: &ModelDesign,
) -> Result<f64> {
    let chol = cholesky_strict(&params.sigma)?;
    let e_bar = sigma_hat(&params.beta, moments, design)?;
    Ok(gaussian_fit_value(&chol, &e_bar, design.n()))
}

/// Profile value of the surrogate after the covariance step.
pub fn q_hat(sigma: &DMatrix<f64>, n: usize) -> Result<f64> {
    let chol = cholesky_strict(sigma)?;
    let p = sigma.nrows();
    Ok(-(n as f64) / 2.0 * log_det(&chol) - (n * p) as f64 / 2.0)
}

/// Generalized least squares for the coefficients at fixed covariance, with
/// an optional diagonal premultiplying the moment vectors (the coefficient
/// step of the rescale-invariant objective).
fn gls_beta(
    sigma_chol: &Cholesky<f64, Dyn>,
    moments: &SufficientMoments,
    design: &ModelDesign,
    d: Option<&DVector<f64>>,
) -> Result<DVector<f64>> {
    let k = design.k();
    let mut normal = DMatrix::zeros(k, k);
    let mut rhs = DVector::zeros(k);
    for j in 0..design.n() {
        let x = design.x(j);
        let solved_x = sigma_chol.solve(x);
        let mut target = moments.m[j].clone();
        if let Some(d) = d {
            for i in 0..target.len() {
                target[i] *= d[i];
            }
        }
        normal += x.transpose() * &solved_x;
        rhs += solved_x.transpose() * target;
    }
    let chol = normal.cholesky().ok_or(Error::SingularSystem)?;
    Ok(chol.solve(&rhs))
}

/// Coefficient update at fixed covariance.
pub fn beta_hat(
    sigma: &DMatrix<f64>,
    moments: &SufficientMoments,
    design: &ModelDesign,
) -> Result<DVector<f64>> {
    let chol = cholesky_strict(sigma)?;
    gls_beta(&chol, moments, design, None)
}

/// Alternate the coefficient and covariance updates until the coefficient
/// change is below tolerance. The first pass through the loop is exactly the
/// classic two-step update; continuing the cycle converges to the joint
/// maximizer of the surrogate.
pub fn cycle_conditional_max(
    moments: &SufficientMoments,
    design: &ModelDesign,
    start: &Parameters,
    config: &MaximizerConfig,
) -> Result<Parameters> {
    let mut sigma = start.sigma.clone();
    let mut beta = start.beta.clone();
    for _ in 0..config.inner_max_iters {
        let chol = cholesky_moments(&sigma)?;
        let beta_new = gls_beta(&chol, moments, design, None)?;
        sigma = sigma_hat(&beta_new, moments, design)?;
        let delta = (&beta_new - &beta).norm();
        beta = beta_new;
        if delta < config.inner_tol {
            break;
        }
    }
    Ok(Parameters { beta, sigma })
}

/// The invariant surrogate: the plain surrogate evaluated on the rescaled
/// parameters `(Omega, lambda)`, which makes its value independent of the
/// latent scales. Shared-coefficient designs admit only a common rescale, so
/// there the scale is taken from the first diagonal entry alone.
pub fn tilde_q(
    params: &Parameters,
    moments: &SufficientMoments,
    design: &ModelDesign,
) -> Result<f64> {
    let p = design.p();
    let d = scales_for_layout(&params.sigma, design)?;
    let mut omega = DMatrix::zeros(p, p);
    for i in 0..p {
        for l in 0..p {
            omega[(i, l)] = params.sigma[(i, l)] / (d[i] * d[l]);
        }
    }
    let chol = cholesky_strict(&omega)?;
    let shat = s_hat(&params.beta, &d, moments, design)?;
    Ok(gaussian_fit_value(&chol, &shat, design.n()))
}

fn scales_for_layout(sigma: &DMatrix<f64>, design: &ModelDesign) -> Result<DVector<f64>> {
    let p = design.p();
    let d = match design.structure().layout {
        Layout::BlockDiagonal => {
            DVector::from_iterator(p, (0..p).map(|i| sigma[(i, i)].sqrt()))
        }
        Layout::Shared => DVector::from_element(p, sigma[(0, 0)].sqrt()),
    };
    if let Some(&bad) = d.iter().find(|&&v| !(v > 0.0)) {
        return Err(Error::NonPositiveScale { value: bad });
    }
    Ok(d)
}

/// Fixed point of `Omega_{k+1} = S + Omega_k A Omega_k` over correlation
/// matrices (or with only the leading entry pinned), solving for the diagonal
/// `A` at each step so the constrained entries land on one. Returns the
/// matrix and the diagonal of `A`.
pub fn omega_iterate(
    s: &DMatrix<f64>,
    mode: IdentifyMode,
    tol: f64,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let p = s.nrows();
    let mut omega = s.clone();
    // Start from the matching rescale of S itself.
    match mode {
        IdentifyMode::Correlation => {
            let d: Vec<f64> = (0..p).map(|i| s[(i, i)].sqrt()).collect();
            if d.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::NotPositiveDefinite);
            }
            for i in 0..p {
                for l in 0..p {
                    omega[(i, l)] /= d[i] * d[l];
                }
                omega[(i, i)] = 1.0;
            }
        }
        IdentifyMode::FixedFirst => {
            let s11 = s[(0, 0)];
            if !(s11 > 0.0) {
                return Err(Error::NotPositiveDefinite);
            }
            omega /= s11;
            omega[(0, 0)] = 1.0;
        }
    }
    let mut a = DVector::zeros(p);
    for _ in 0..OMEGA_MAX_ITERS {
        match mode {
            IdentifyMode::Correlation => {
                // (Omega A Omega)_ii = sum_l omega_il^2 a_l must equal
                // 1 - s_ii.
                let b = DMatrix::from_fn(p, p, |i, l| omega[(i, l)] * omega[(i, l)]);
                let rhs = DVector::from_fn(p, |i, _| 1.0 - s[(i, i)]);
                a = b
                    .lu()
                    .solve(&rhs)
                    .ok_or(Error::SingularSystem)?;
            }
            IdentifyMode::FixedFirst => {
                a.fill(0.0);
                a[0] = 1.0 - s[(0, 0)];
            }
        }
        let mut next = s.clone();
        // next += Omega A Omega with A = diag(a).
        for i in 0..p {
            for l in 0..=i {
                let mut acc = 0.0;
                for t in 0..p {
                    acc += omega[(i, t)] * a[t] * omega[(t, l)];
                }
                next[(i, l)] += acc;
                next[(l, i)] = next[(i, l)];
            }
        }
        match mode {
            IdentifyMode::Correlation => {
                for i in 0..p {
                    next[(i, i)] = 1.0;
                }
            }
            IdentifyMode::FixedFirst => next[(0, 0)] = 1.0,
        }
        omega = next;
        // Stationarity: Omega^{-1} - Omega^{-1} S Omega^{-1} is diagonal
        // (or supported on the pinned entry alone).
        if residual_off_constraint(&omega, s, mode)? < tol {
            return Ok((omega, a));
        }
    }
    Err(Error::OmegaNotConverged {
        max_iters: OMEGA_MAX_ITERS,
        s_diag: s.diagonal().iter().copied().collect(),
    })
}

/// Largest entry of `Omega^{-1} - Omega^{-1} S Omega^{-1}` outside the
/// positions absorbed by the multiplier matrix.
fn residual_off_constraint(
    omega: &DMatrix<f64>,
    s: &DMatrix<f64>,
    mode: IdentifyMode,
) -> Result<f64> {
    let p = omega.nrows();
    let chol = cholesky_moments(omega)?;
    let inv = chol.inverse();
    let r = &inv - &inv * s * &inv;
    let mut worst = 0.0f64;
    for i in 0..p {
        for l in 0..p {
            let constrained = match mode {
                IdentifyMode::Correlation => i == l,
                IdentifyMode::FixedFirst => i == 0 && l == 0,
            };
            if !constrained {
                worst = worst.max(r[(i, l)].abs());
            }
        }
    }
    Ok(worst)
}

/// Solve the linear stationarity condition for the latent scales at fixed
/// correlation part: per component (`Correlation`) or a single common scale
/// via the trace condition (`FixedFirst`). Returns the scales and whether
/// they moved; with zero coefficients the scales drop out of the objective
/// and the current value is handed back unchanged.
pub fn d_solve(
    omega: &DMatrix<f64>,
    a: &DVector<f64>,
    beta: &DVector<f64>,
    moments: &SufficientMoments,
    design: &ModelDesign,
    mode: IdentifyMode,
    current_d: &DVector<f64>,
) -> Result<(DVector<f64>, bool)> {
    let p = design.p();
    let n = design.n();
    let mut b = DMatrix::zeros(p, p);
    let mut s_bar = DMatrix::zeros(p, p);
    for j in 0..n {
        let bj = design.mean(j, beta);
        let mj = &moments.m[j];
        for i in 0..p {
            for l in 0..p {
                b[(i, l)] += bj[i] * mj[l];
            }
        }
        s_bar += &moments.s[j];
    }
    b /= n as f64;
    s_bar /= n as f64;
    if b.amax() <= 1e-12 * s_bar.amax().max(1.0) {
        return Ok((current_d.clone(), false));
    }
    let chol = cholesky_moments(omega)?;
    let inv = chol.inverse();
    let inv_s = &inv * &s_bar;
    match mode {
        IdentifyMode::Correlation => {
            // Row i of the diagonal condition:
            // sum_l (Omega^{-1})_il B_li u_l = a_i - 1 + (Omega^{-1} S)_ii.
            let m = DMatrix::from_fn(p, p, |i, l| inv[(i, l)] * b[(l, i)]);
            let v = DVector::from_fn(p, |i, _| a[i] - 1.0 + inv_s[(i, i)]);
            let u = m.lu().solve(&v).ok_or(Error::SingularSystem)?;
            if let Some(&bad) = u.iter().find(|&&ui| !(ui > 0.0)) {
                return Err(Error::NonPositiveScale { value: bad });
            }
            let d = DVector::from_fn(p, |i, _| 1.0 / u[i]);
            Ok((d, true))
        }
        IdentifyMode::FixedFirst => {
            let mut denom = 0.0;
            for i in 0..p {
                for l in 0..p {
                    denom += inv[(i, l)] * b[(l, i)];
                }
            }
            if denom.abs() <= 1e-12 * s_bar.amax().max(1.0) {
                return Ok((current_d.clone(), false));
            }
            let numer: f64 = (0..p).map(|i| a[i] - 1.0 + inv_s[(i, i)]).sum();
            let u = numer / denom;
            if !(u > 0.0) {
                return Err(Error::NonPositiveScale { value: u });
            }
            Ok((DVector::from_element(p, 1.0 / u), true))
        }
    }
}

/// One covariance update of the invariant objective at fixed coefficients:
/// cycle the correlation fixed point and the scale solve, damping the scale
/// step whenever it would lower the objective.
fn tilde_sigma_step(
    beta: &DVector<f64>,
    moments: &SufficientMoments,
    design: &ModelDesign,
    mode: IdentifyMode,
    start_d: &DVector<f64>,
    config: &MaximizerConfig,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let n = design.n();
    let value = |omega: &DMatrix<f64>, d: &DVector<f64>| -> Result<f64> {
        let shat = s_hat(beta, d, moments, design)?;
        let chol = cholesky_moments(omega)?;
        Ok(gaussian_fit_value(&chol, &shat, n))
    };
    let mut d = start_d.clone();
    let mut shat = s_hat(beta, &d, moments, design)?;
    let (mut omega, mut a) = omega_iterate(&shat, mode, OMEGA_TOL)?;
    let mut current = value(&omega, &d)?;
    for _ in 0..config.inner_max_iters {
        let (d_cand, changed) = d_solve(&omega, &a, beta, moments, design, mode, &d)?;
        if !changed {
            return Ok((omega, d));
        }
        let u_old = DVector::from_fn(d.len(), |i, _| 1.0 / d[i]);
        let u_new = DVector::from_fn(d.len(), |i, _| 1.0 / d_cand[i]);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..DAMPING_HALVINGS {
            let u_try = (1.0 - t) * &u_old + t * &u_new;
            if u_try.iter().any(|&ui| !(ui > 0.0)) {
                t *= 0.5;
                continue;
            }
            let d_try = DVector::from_fn(d.len(), |i, _| 1.0 / u_try[i]);
            shat = s_hat(beta, &d_try, moments, design)?;
            let (omega_try, a_try) = omega_iterate(&shat, mode, OMEGA_TOL)?;
            let val = value(&omega_try, &d_try)?;
            if val >= current - 1e-12 {
                accepted = Some((omega_try, a_try, d_try, val));
                break;
            }
            t *= 0.5;
        }
        let Some((omega_new, a_new, d_new, val)) = accepted else {
            // No step improves the objective: already stationary.
            return Ok((omega, d));
        };
        let moved = (0..d.len())
            .map(|i| (1.0 / d_new[i] - 1.0 / d[i]).abs())
            .fold(0.0f64, f64::max);
        omega = omega_new;
        a = a_new;
        d = d_new;
        current = val;
        if moved < config.inner_tol {
            break;
        }
    }
    Ok((omega, d))
}

/// Covariance update constrained to the identified form: the correlation
/// fixed point applied to the residual moment, with a damped fallback toward
/// the previous matrix if the raw fixed point would lower the objective.
fn constrained_omega_update(
    beta: &DVector<f64>,
    omega_prev: &DMatrix<f64>,
    moments: &SufficientMoments,
    design: &ModelDesign,
    mode: IdentifyMode,
) -> Result<DMatrix<f64>> {
    let n = design.n();
    let shat = sigma_hat(beta, moments, design)?;
    let (candidate, _) = omega_iterate(&shat, mode, OMEGA_TOL)?;
    let value = |omega: &DMatrix<f64>| -> Result<f64> {
        let chol = cholesky_moments(omega)?;
        Ok(gaussian_fit_value(&chol, &shat, n))
    };
    let base = value(omega_prev)?;
    let mut t = 1.0;
    for _ in 0..DAMPING_HALVINGS {
        // Convex combinations preserve the constrained form.
        let blended = t * &candidate + (1.0 - t) * omega_prev;
        if value(&blended)? >= base - 1e-12 {
            return Ok(blended);
        }
        t *= 0.5;
    }
    Ok(omega_prev.clone())
}

/// One M step: dispatch on objective and mode, cycling the conditional
/// updates until the coefficient change drops below tolerance.
pub fn m_step(
    moments: &SufficientMoments,
    design: &ModelDesign,
    start: &Parameters,
    config: &MaximizerConfig,
) -> Result<Parameters> {
    config.validate()?;
    match (config.objective, config.mode) {
        (Objective::Q, MaxMode::Unconstrained) => {
            cycle_conditional_max(moments, design, start, config)
        }
        (Objective::Q, MaxMode::Constrained)
        | (Objective::QTilde, MaxMode::CorrelationForm) => {
            identified_cycle(moments, design, start, config, IdentifyMode::Correlation)
        }
        (Objective::QTilde, MaxMode::FixedFirst) => {
            if design.structure().layout != Layout::Shared {
                return Err(Error::InvalidArgument(
                    "pinning only the first scale identifies shared-coefficient models; \
                     use correlation form for block-diagonal designs"
                        .into(),
                ));
            }
            identified_cycle(moments, design, start, config, IdentifyMode::FixedFirst)
        }
        (Objective::QTilde, MaxMode::Unconstrained) => {
            let scale_mode = match design.structure().layout {
                Layout::Shared => IdentifyMode::FixedFirst,
                Layout::BlockDiagonal => IdentifyMode::Correlation,
            };
            tilde_unconstrained_cycle(moments, design, start, config, scale_mode)
        }
        _ => unreachable!("validate rejects other combinations"),
    }
}

/// Coefficients by generalized least squares against the identified
/// covariance, covariance by the constrained fixed point; latent scales stay
/// pinned at one.
fn identified_cycle(
    moments: &SufficientMoments,
    design: &ModelDesign,
    start: &Parameters,
    config: &MaximizerConfig,
    mode: IdentifyMode,
) -> Result<Parameters> {
    let p = design.p();
    // Project the starting covariance onto the identified form.
    let d0 = match mode {
        IdentifyMode::Correlation => {
            DVector::from_fn(p, |i, _| start.sigma[(i, i)].sqrt())
        }
        IdentifyMode::FixedFirst => DVector::from_element(p, start.sigma[(0, 0)].sqrt()),
    };
    if d0.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::NotPositiveDefinite);
    }
    let mut omega = DMatrix::from_fn(p, p, |i, l| start.sigma[(i, l)] / (d0[i] * d0[l]));
    match mode {
        IdentifyMode::Correlation => (0..p).for_each(|i| omega[(i, i)] = 1.0),
        IdentifyMode::FixedFirst => omega[(0, 0)] = 1.0,
    }
    let mut beta = start.beta.clone();
    for _ in 0..config.inner_max_iters {
        let chol = cholesky_moments(&omega)?;
        let beta_new = gls_beta(&chol, moments, design, None)?;
        omega = constrained_omega_update(&beta_new, &omega, moments, design, mode)?;
        let delta = (&beta_new - &beta).norm();
        beta = beta_new;
        if delta < config.inner_tol {
            break;
        }
    }
    Ok(Parameters { beta, sigma: omega })
}

/// Full invariant maximization: the coefficient step carries the latent
/// scales into the moment vectors, and the covariance step cycles the
/// correlation fixed point with the scale solve.
fn tilde_unconstrained_cycle(
    moments: &SufficientMoments,
    design: &ModelDesign,
    start: &Parameters,
    config: &MaximizerConfig,
    scale_mode: IdentifyMode,
) -> Result<Parameters> {
    let p = design.p();
    let mut sigma = start.sigma.clone();
    let mut beta = start.beta.clone();
    for _ in 0..config.inner_max_iters {
        let d = match scale_mode {
            IdentifyMode::Correlation => {
                DVector::from_fn(p, |i, _| sigma[(i, i)].sqrt())
            }
            IdentifyMode::FixedFirst => DVector::from_element(p, sigma[(0, 0)].sqrt()),
        };
        if d.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::NotPositiveDefinite);
        }
        let chol = cholesky_moments(&sigma)?;
        let beta_new = gls_beta(&chol, moments, design, Some(&d))?;
        let (omega, d_new) =
            tilde_sigma_step(&beta_new, moments, design, scale_mode, &d, config)?;
        sigma = DMatrix::from_fn(p, p, |i, l| omega[(i, l)] * d_new[i] * d_new[l]);
        let delta = (&beta_new - &beta).norm();
        beta = beta_new;
        if delta < config.inner_tol {
            break;
        }
    }
    Ok(Parameters { beta, sigma })
}
