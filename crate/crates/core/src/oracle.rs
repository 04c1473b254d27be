//! Slow, independent reference implementations used to validate the fast
//! sampling and maximisation code.
//!
//! Nothing here shares machinery with the production paths: truncated-normal
//! draws come from plain rejection or coordinate-wise Gibbs sampling, orthant
//! probabilities from closed forms and adaptive Gauss-Kronrod quadrature, and
//! maximisers can be cross-checked against a derivative-free simplex search
//! or finite differences. These routines are deliberately simple and are only
//! expected to be fast enough for tests.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::normal;
use crate::probit::Orthant;
use crate::{Error, Result};

/// Smallest acceptance rate the rejection oracle will tolerate.
pub const MIN_REJECTION_ACCEPTANCE: f64 = 1e-4;
/// Absolute tolerance for quadrature-based orthant probabilities.
pub const QUAD_TOL: f64 = 1e-8;

fn validated_cholesky(sigma: &DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    if sigma.nrows() != sigma.ncols() {
        return Err(Error::DimensionMismatch("sigma is not square".into()));
    }
    sigma.clone().cholesky().ok_or(Error::NotPositiveDefinite)
}

fn check_dims(orthant: &Orthant, mu: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<usize> {
    let p = orthant.dim();
    if mu.len() != p || sigma.nrows() != p {
        return Err(Error::DimensionMismatch(format!(
            "orthant dim {p}, mu len {}, sigma {}x{}",
            mu.len(),
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    Ok(p)
}

/// Draw `n_draws` exact samples from `N(mu, sigma)` restricted to `orthant`
/// by plain rejection. Only sensible in low dimension and for regions with
/// acceptance rate above [`MIN_REJECTION_ACCEPTANCE`].
pub fn rejection_sample_tmvn<R: Rng + ?Sized>(
    orthant: &Orthant,
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
    n_draws: usize,
    rng: &mut R,
) -> Result<Vec<DVector<f64>>> {
    let p = check_dims(orthant, mu, sigma)?;
    if p > 4 {
        return Err(Error::InvalidArgument(
            "rejection oracle supports p <= 4".into(),
        ));
    }
    let chol = validated_cholesky(sigma)?;
    let l = chol.l();
    let mut draws = Vec::with_capacity(n_draws);
    let mut attempts: usize = 0;
    // Generous cap: even at the minimum legal acceptance rate this leaves a
    // comfortable margin before we give up.
    let cap = 100_000 + n_draws.saturating_mul(50_000);
    let mut xi = DVector::zeros(p);
    while draws.len() < n_draws {
        attempts += 1;
        if attempts > cap || (attempts > 100_000 && draws.is_empty()) {
            let rate = draws.len() as f64 / attempts as f64;
            return Err(Error::AcceptanceTooLow {
                rate,
                min: MIN_REJECTION_ACCEPTANCE,
            });
        }
        for i in 0..p {
            xi[i] = rng.sample(StandardNormal);
        }
        let z = mu + &l * &xi;
        if orthant.contains(&z) {
            draws.push(z);
        }
    }
    Ok(draws)
}

/// Gibbs sampler for the same truncated normal: full conditionals are
/// univariate truncated normals sampled by inverse CDF (survival-function
/// form, so deep truncations stay exact). Returns `n_draws` states taken
/// every `thin` sweeps after `burn_in` sweeps.
pub fn gibbs_sample_tmvn<R: Rng + ?Sized>(
    orthant: &Orthant,
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
    n_draws: usize,
    burn_in: usize,
    thin: usize,
    rng: &mut R,
) -> Result<Vec<DVector<f64>>> {
    let p = check_dims(orthant, mu, sigma)?;
    if thin == 0 {
        return Err(Error::InvalidArgument("thin must be positive".into()));
    }
    let chol = validated_cholesky(sigma)?;
    let precision = chol.inverse();
    let cond_sd: Vec<f64> = (0..p).map(|i| (1.0 / precision[(i, i)]).sqrt()).collect();

    // Start from independent draws of each component's marginal restricted to
    // its half-line, which is always inside the region.
    let mut z = DVector::zeros(p);
    for i in 0..p {
        let sd = sigma[(i, i)].sqrt();
        z[i] = truncated_component(orthant.signs()[i], mu[i], sd, rng);
    }

    let sweep = |z: &mut DVector<f64>, rng: &mut R| {
        for i in 0..p {
            let mut shift = 0.0;
            for l in 0..p {
                if l != i {
                    shift += precision[(i, l)] * (z[l] - mu[l]);
                }
            }
            let m = mu[i] - shift / precision[(i, i)];
            z[i] = truncated_component(orthant.signs()[i], m, cond_sd[i], rng);
        }
    };

    for _ in 0..burn_in {
        sweep(&mut z, rng);
    }
    let mut draws = Vec::with_capacity(n_draws);
    for _ in 0..n_draws {
        for _ in 0..thin {
            sweep(&mut z, rng);
        }
        draws.push(z.clone());
    }
    Ok(draws)
}

/// One draw from `N(m, sd^2)` restricted to `(0, inf)` (positive sign) or
/// `(-inf, 0]` (negative sign).
fn truncated_component<R: Rng + ?Sized>(positive: bool, m: f64, sd: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    if positive {
        m + sd * normal::sample_lower_truncated(-m / sd, u)
    } else {
        m - sd * normal::sample_lower_truncated(m / sd, u)
    }
}

/// Orthant probability `P(Z in orthant)` for `Z ~ N(mu, sigma)`, supported
/// for `p <= 3`: closed forms where available, otherwise nested adaptive
/// quadrature with absolute tolerance [`QUAD_TOL`].
pub fn orthant_prob(orthant: &Orthant, mu: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<f64> {
    let p = check_dims(orthant, mu, sigma)?;
    validated_cholesky(sigma)?;
    // Flip negative components so every bound becomes a lower bound at zero.
    let s: Vec<f64> = orthant
        .signs()
        .iter()
        .map(|&pos| if pos { 1.0 } else { -1.0 })
        .collect();
    let fmu = DVector::from_iterator(p, (0..p).map(|i| s[i] * mu[i]));
    let fsigma = DMatrix::from_fn(p, p, |i, l| s[i] * s[l] * sigma[(i, l)]);
    match p {
        1 => Ok(normal::sf(-fmu[0] / fsigma[(0, 0)].sqrt())),
        2 => {
            if fmu.amax() < 1e-14 {
                let rho = fsigma[(0, 1)] / (fsigma[(0, 0)] * fsigma[(1, 1)]).sqrt();
                Ok(0.25 + rho.asin() / (2.0 * std::f64::consts::PI))
            } else {
                Ok(bivariate_lower(&fmu, &fsigma, 0.0, 0.0, QUAD_TOL))
            }
        }
        3 => Ok(trivariate_lower(&fmu, &fsigma, QUAD_TOL)),
        _ => Err(Error::InvalidArgument(
            "orthant probability oracle supports p <= 3".into(),
        )),
    }
}

/// `P(Z1 > l1, Z2 > l2)` for a bivariate normal, by integrating the exact
/// conditional survival function over the first coordinate.
fn bivariate_lower(mu: &DVector<f64>, sigma: &DMatrix<f64>, l1: f64, l2: f64, tol: f64) -> f64 {
    let s1 = sigma[(0, 0)].sqrt();
    let s2 = sigma[(1, 1)].sqrt();
    let rho = (sigma[(0, 1)] / (s1 * s2)).clamp(-1.0, 1.0);
    let resid = (1.0 - rho * rho).max(1e-14).sqrt() * s2;
    let a = l1.max(mu[0] - 10.0 * s1);
    let b = mu[0] + 10.0 * s1;
    if b <= a {
        // The first coordinate's bound sits beyond the mass we can resolve.
        return 0.0;
    }
    let f = |t: f64| {
        let std1 = (t - mu[0]) / s1;
        let cond_mean = mu[1] + rho * s2 * std1;
        normal::pdf(std1) / s1 * normal::sf((l2 - cond_mean) / resid)
    };
    adaptive_quad(&f, a, b, tol)
}

/// `P(Z > 0)` componentwise for a trivariate normal, conditioning on the
/// first coordinate and reusing the bivariate integral for the remainder.
fn trivariate_lower(mu: &DVector<f64>, sigma: &DMatrix<f64>, tol: f64) -> f64 {
    let s1 = sigma[(0, 0)].sqrt();
    let sig11 = sigma[(0, 0)];
    // Schur complement of the (2,3) block: constant in the conditioning value.
    let mut cond_sigma = DMatrix::zeros(2, 2);
    for i in 0..2 {
        for l in 0..2 {
            cond_sigma[(i, l)] =
                sigma[(i + 1, l + 1)] - sigma[(i + 1, 0)] * sigma[(0, l + 1)] / sig11;
        }
    }
    let a = 0.0f64.max(mu[0] - 10.0 * s1);
    let b = mu[0] + 10.0 * s1;
    if b <= a {
        return 0.0;
    }
    let f = |t: f64| {
        let std1 = (t - mu[0]) / s1;
        let cond_mu = DVector::from_vec(vec![
            mu[1] + sigma[(1, 0)] / sig11 * (t - mu[0]),
            mu[2] + sigma[(2, 0)] / sig11 * (t - mu[0]),
        ]);
        normal::pdf(std1) / s1 * bivariate_lower(&cond_mu, &cond_sigma, 0.0, 0.0, tol * 1e-2)
    };
    adaptive_quad(&f, a, b, tol)
}

// 15-point Kronrod extension of 7-point Gauss (QUADPACK constants).
const XGK: [f64; 8] = [
    0.991455371120813,
    0.949107912342759,
    0.864864423359769,
    0.741531185599394,
    0.586087235467691,
    0.405845151377397,
    0.207784955007898,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529,
    0.063092092629979,
    0.104790010322250,
    0.140653259715525,
    0.169004726639267,
    0.190350578064785,
    0.204432940075298,
    0.209482141084728,
];
const WG: [f64; 4] = [
    0.129484966168870,
    0.279705391489277,
    0.381830050505119,
    0.417959183673469,
];

fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let half = 0.5 * (b - a);
    let center = 0.5 * (a + b);
    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let x = half * XGK[j];
        let fsum = f(center - x) + f(center + x);
        kronrod += WGK[j] * fsum;
        if j % 2 == 1 {
            gauss += WG[j / 2] * fsum;
        }
    }
    kronrod *= half;
    gauss *= half;
    (kronrod, (kronrod - gauss).abs())
}

/// Adaptive bisection on top of Gauss-Kronrod with an absolute tolerance.
fn adaptive_quad<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn recurse<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: usize) -> f64 {
        let (value, err) = gauss_kronrod(f, a, b);
        if err <= tol || depth >= 30 {
            return value;
        }
        let mid = 0.5 * (a + b);
        recurse(f, a, mid, 0.5 * tol, depth + 1) + recurse(f, mid, b, 0.5 * tol, depth + 1)
    }
    recurse(f, a, b, tol, 0)
}

/// Central-difference gradient of `f` at `x`.
pub fn finite_diff_gradient<F: Fn(&DVector<f64>) -> f64>(
    f: &F,
    x: &DVector<f64>,
    h: f64,
) -> DVector<f64> {
    let mut grad = DVector::zeros(x.len());
    let mut xp = x.clone();
    for i in 0..x.len() {
        xp[i] = x[i] + h;
        let up = f(&xp);
        xp[i] = x[i] - h;
        let down = f(&xp);
        xp[i] = x[i];
        grad[i] = (up - down) / (2.0 * h);
    }
    grad
}

/// Largest componentwise discrepancy between an analytic gradient and the
/// central-difference gradient.
pub fn finite_diff_check<F: Fn(&DVector<f64>) -> f64>(
    f: &F,
    x: &DVector<f64>,
    analytic: &DVector<f64>,
    h: f64,
) -> f64 {
    (finite_diff_gradient(f, x, h) - analytic).amax()
}

/// Derivative-free Nelder-Mead minimisation with periodic restarts, tuned
/// for the low-dimensional cross-checks in the test suite: reliable rather
/// than fast. Returns the best point and its value.
pub fn nelder_mead<F: Fn(&DVector<f64>) -> f64>(
    f: F,
    x0: &DVector<f64>,
    step: f64,
    max_iters: usize,
    ftol: f64,
) -> (DVector<f64>, f64) {
    let n = x0.len();
    let mut best = x0.clone();
    let mut best_val = f(&best);
    let mut scale = step;
    for _restart in 0..4 {
        let mut simplex: Vec<DVector<f64>> = Vec::with_capacity(n + 1);
        simplex.push(best.clone());
        for i in 0..n {
            let mut v = best.clone();
            v[i] += scale;
            simplex.push(v);
        }
        let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
        for _ in 0..max_iters {
            // Order ascending by value.
            let mut idx: Vec<usize> = (0..=n).collect();
            idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
            let reorder_s: Vec<_> = idx.iter().map(|&i| simplex[i].clone()).collect();
            let reorder_v: Vec<_> = idx.iter().map(|&i| values[i]).collect();
            simplex = reorder_s;
            values = reorder_v;
            if (values[n] - values[0]).abs() < ftol {
                break;
            }
            let centroid: DVector<f64> =
                simplex[..n].iter().fold(DVector::zeros(n), |acc, v| acc + v) / n as f64;
            let reflect = &centroid + (&centroid - &simplex[n]);
            let fr = f(&reflect);
            if fr < values[0] {
                let expand = &centroid + (&reflect - &centroid) * 2.0;
                let fe = f(&expand);
                if fe < fr {
                    simplex[n] = expand;
                    values[n] = fe;
                } else {
                    simplex[n] = reflect;
                    values[n] = fr;
                }
            } else if fr < values[n - 1] {
                simplex[n] = reflect;
                values[n] = fr;
            } else {
                let contract = &centroid + (&simplex[n] - &centroid) * 0.5;
                let fc = f(&contract);
                if fc < values[n] {
                    simplex[n] = contract;
                    values[n] = fc;
                } else {
                    for i in 1..=n {
                        simplex[i] = (&simplex[i] + &simplex[0]) * 0.5;
                        values[i] = f(&simplex[i]);
                    }
                }
            }
        }
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
        if values[idx[0]] < best_val {
            best_val = values[idx[0]];
            best = simplex[idx[0]].clone();
        }
        scale *= 0.1;
    }
    (best, best_val)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn vec2(a: f64, b: f64) -> DVector<f64> {
        DVector::from_vec(vec![a, b])
    }

    #[test]
    fn quadrature_integrates_gaussian_density() {
        let total = adaptive_quad(&normal::pdf, -12.0, 12.0, 1e-12);
        assert!((total - 1.0).abs() < 1e-11, "{total}");
        let half = adaptive_quad(&normal::pdf, 0.0, 12.0, 1e-12);
        assert!((half - 0.5).abs() < 1e-11);
    }

    #[test]
    fn univariate_orthant_prob_is_normal_cdf() {
        let orthant = Orthant::from_response(&[true]);
        let mu = DVector::from_vec(vec![1.0]);
        let sigma = DMatrix::from_vec(1, 1, vec![1.0]);
        let p = orthant_prob(&orthant, &mu, &sigma).unwrap();
        assert!((p - 0.8413447460685429).abs() < 1e-12);
        let neg = Orthant::from_response(&[false]);
        let q = orthant_prob(&neg, &mu, &sigma).unwrap();
        assert!((p + q - 1.0).abs() < 1e-12);
    }

    #[test]
    fn centered_bivariate_closed_form_and_quadrature_agree() {
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.9, 0.9, 1.0]);
        let orthant = Orthant::from_response(&[true, true]);
        let p = orthant_prob(&orthant, &vec2(0.0, 0.0), &sigma).unwrap();
        let closed = 0.25 + 0.9f64.asin() / (2.0 * std::f64::consts::PI);
        assert!((p - closed).abs() < 1e-12);
        assert!((closed - 0.42821685343564686).abs() < 1e-15);
        // Nudge the mean so the quadrature path runs, then compare to the
        // closed form via continuity plus a direct analytic value at zero.
        let p_quad = bivariate_lower(&vec2(1e-9, 1e-9), &sigma, 0.0, 0.0, 1e-10);
        assert!((p_quad - closed).abs() < 1e-8);
    }

    #[test]
    fn bivariate_orthants_sum_to_one() {
        let sigma = DMatrix::from_row_slice(2, 2, &[2.0, -0.7, -0.7, 1.5]);
        let mu = vec2(0.3, -0.6);
        let mut total = 0.0;
        for a in [false, true] {
            for b in [false, true] {
                total += orthant_prob(&Orthant::from_response(&[a, b]), &mu, &sigma).unwrap();
            }
        }
        assert!((total - 1.0).abs() < 1e-7, "{total}");
    }

    #[test]
    fn trivariate_exchangeable_half_correlation_is_one_quarter() {
        // Centered, all correlations 1/2: P(+,+,+) = 1/8 + 3 asin(1/2)/(4 pi) = 1/4.
        let mut sigma = DMatrix::from_element(3, 3, 0.5);
        sigma.fill_diagonal(1.0);
        let orthant = Orthant::from_response(&[true, true, true]);
        let p = orthant_prob(&orthant, &DVector::zeros(3), &sigma).unwrap();
        assert!((p - 0.25).abs() < 1e-7, "{p}");
    }

    #[test]
    fn trivariate_independent_matches_product_and_sums_to_one() {
        let sigma = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0, 0.25]));
        let mu = DVector::from_vec(vec![0.5, -1.0, 0.2]);
        let orthant = Orthant::from_response(&[true, false, true]);
        let p = orthant_prob(&orthant, &mu, &sigma).unwrap();
        let expected = normal::sf(-0.5) * normal::cdf(1.0 / 2.0) * normal::sf(-0.2 / 0.5);
        assert!((p - expected).abs() < 1e-8, "{p} vs {expected}");

        let full = DMatrix::from_row_slice(3, 3, &[1.0, 0.3, -0.2, 0.3, 1.0, 0.5, -0.2, 0.5, 1.0]);
        let mut total = 0.0;
        for a in [false, true] {
            for b in [false, true] {
                for c in [false, true] {
                    total +=
                        orthant_prob(&Orthant::from_response(&[a, b, c]), &mu, &full).unwrap();
                }
            }
        }
        assert!((total - 1.0).abs() < 1e-6, "{total}");
    }

    #[test]
    fn rejection_matches_truncated_normal_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let orthant = Orthant::from_response(&[true]);
        let draws = rejection_sample_tmvn(
            &orthant,
            &DVector::zeros(1),
            &DMatrix::identity(1, 1),
            20_000,
            &mut rng,
        )
        .unwrap();
        let mean = draws.iter().map(|z| z[0]).sum::<f64>() / draws.len() as f64;
        // Half-normal mean sqrt(2/pi), sd of the estimator about 0.0043.
        let expected = (2.0 / std::f64::consts::PI).sqrt();
        assert!((mean - expected).abs() < 3.0 * 0.0043, "{mean} vs {expected}");
        assert!(draws.iter().all(|z| z[0] > 0.0));
    }

    #[test]
    fn rejection_gives_up_on_tiny_regions() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let orthant = Orthant::from_response(&[true, true]);
        let mu = vec2(-5.0, -5.0);
        let err = rejection_sample_tmvn(&orthant, &mu, &DMatrix::identity(2, 2), 10, &mut rng)
            .unwrap_err();
        assert!(matches!(err, Error::AcceptanceTooLow { .. }));
    }

    #[test]
    fn gibbs_matches_rejection_in_two_dimensions() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.8, 0.8, 1.0]);
        let mu = vec2(0.4, -0.3);
        let orthant = Orthant::from_response(&[true, false]);
        let n = 8000;
        let gibbs = gibbs_sample_tmvn(&orthant, &mu, &sigma, n, 200, 10, &mut rng).unwrap();
        let rej = rejection_sample_tmvn(&orthant, &mu, &sigma, n, &mut rng).unwrap();
        assert!(gibbs.iter().all(|z| orthant.contains(z)));
        for i in 0..2 {
            let (mut mg, mut mr, mut vg, mut vr) = (0.0, 0.0, 0.0, 0.0);
            for z in &gibbs {
                mg += z[i];
            }
            for z in &rej {
                mr += z[i];
            }
            mg /= n as f64;
            mr /= n as f64;
            for z in &gibbs {
                vg += (z[i] - mg).powi(2);
            }
            for z in &rej {
                vr += (z[i] - mr).powi(2);
            }
            vg /= (n - 1) as f64;
            vr /= (n - 1) as f64;
            let se = ((vg + vr) / n as f64).sqrt();
            assert!(
                (mg - mr).abs() < 4.0 * se,
                "component {i}: gibbs {mg} vs rejection {mr} (se {se})"
            );
        }
    }

    #[test]
    fn gibbs_univariate_matches_closed_form_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let orthant = Orthant::from_response(&[true]);
        let mu = DVector::from_vec(vec![-1.0]);
        // For N(-1,1) truncated to (0,inf): mean = -1 + pdf(1)/sf(1).
        let expected = -1.0 + normal::pdf(1.0) / normal::sf(1.0);
        let draws =
            gibbs_sample_tmvn(&orthant, &mu, &DMatrix::identity(1, 1), 20_000, 100, 1, &mut rng)
                .unwrap();
        let mean = draws.iter().map(|z| z[0]).sum::<f64>() / draws.len() as f64;
        assert!((mean - expected).abs() < 0.02, "{mean} vs {expected}");
    }

    #[test]
    fn finite_difference_gradient_on_quadratic() {
        let f = |x: &DVector<f64>| x.iter().map(|v| v * v).sum::<f64>();
        let x = DVector::from_vec(vec![1.5, -2.0, 0.0]);
        let analytic = DVector::from_vec(vec![3.0, -4.0, 0.0]);
        let err = finite_diff_check(&f, &x, &analytic, 1e-6);
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn nelder_mead_solves_rosenbrock() {
        let f = |x: &DVector<f64>| {
            let (a, b) = (x[0], x[1]);
            (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
        };
        let (x, v) = nelder_mead(f, &vec2(-1.2, 1.0), 0.5, 4000, 1e-14);
        assert!(v < 1e-9, "{v}");
        assert!((x[0] - 1.0).abs() < 1e-4 && (x[1] - 1.0).abs() < 1e-4);
    }
}
