//! Scalar standard-normal utilities.
//!
//! The complementary error function is implemented here (Cody's rational
//! Chebyshev approximations, good to a few ulp) rather than taken from a
//! statistics crate: both tails enter likelihood computations and diagnostic
//! inverses, and the approximations commonly bundled elsewhere lose five or
//! six digits in exactly the ranges this crate leans on.

pub const SQRT_2: f64 = std::f64::consts::SQRT_2;
const FRAC_1_SQRT_2PI: f64 = 0.3989422804014326779399461;
const FRAC_1_SQRT_PI: f64 = 0.5641895835477562869480795;

// Coefficients from W. J. Cody's CALERF (double precision).
const ERF_A: [f64; 5] = [
    3.16112374387056560e0,
    1.13864154151050156e2,
    3.77485237685302021e2,
    3.20937758913846947e3,
    1.85777706184603153e-1,
];
const ERF_B: [f64; 4] = [
    2.36012909523441209e1,
    2.44024637934444173e2,
    1.28261652607737228e3,
    2.84423683343917062e3,
];
const ERF_C: [f64; 9] = [
    5.64188496988670089e-1,
    8.88314979438837594e0,
    6.61191906371416295e1,
    2.98635138197400131e2,
    8.81952221241769090e2,
    1.71204761263407058e3,
    2.05107837782607147e3,
    1.23033935479799725e3,
    2.15311535474403846e-8,
];
const ERF_D: [f64; 8] = [
    1.57449261107098347e1,
    1.17693950891312499e2,
    5.37181101862009858e2,
    1.62138957456669019e3,
    3.29079923573345963e3,
    4.36261909014324716e3,
    3.43936767414372164e3,
    1.23033935480374942e3,
];
const ERF_P: [f64; 6] = [
    3.05326634961232344e-1,
    3.60344899949804439e-1,
    1.25781726111229246e-1,
    1.60837851487422766e-2,
    6.58749161529837803e-4,
    1.63153871373020978e-2,
];
const ERF_Q: [f64; 5] = [
    2.56852019228982242e0,
    1.87295284992346047e0,
    5.27905102951428412e-1,
    6.05183413124413191e-2,
    2.33520497626869185e-3,
];

/// Complementary error function, accurate to a few ulp over the full range.
pub fn erfc(x: f64) -> f64 {
    let y = x.abs();
    let result = if y <= 0.46875 {
        // erfc = 1 - erf with erf from the rational approximation.
        let z = y * y;
        let mut num = ERF_A[4] * z;
        let mut den = z;
        for i in 0..3 {
            num = (num + ERF_A[i]) * z;
            den = (den + ERF_B[i]) * z;
        }
        return 1.0 - x * (num + ERF_A[3]) / (den + ERF_B[3]);
    } else if y <= 4.0 {
        let mut num = ERF_C[8] * y;
        let mut den = y;
        for i in 0..7 {
            num = (num + ERF_C[i]) * y;
            den = (den + ERF_D[i]) * y;
        }
        exp_neg_sq(y) * (num + ERF_C[7]) / (den + ERF_D[7])
    } else if y < 26.65 {
        let z = 1.0 / (y * y);
        let mut num = ERF_P[5] * z;
        let mut den = z;
        for i in 0..4 {
            num = (num + ERF_P[i]) * z;
            den = (den + ERF_Q[i]) * z;
        }
        let r = z * (num + ERF_P[4]) / (den + ERF_Q[4]);
        exp_neg_sq(y) / y * (FRAC_1_SQRT_PI - r)
    } else {
        0.0
    };
    if x < 0.0 {
        2.0 - result
    } else {
        result
    }
}

/// `exp(-y^2)` split so that the argument reduction loses no precision.
fn exp_neg_sq(y: f64) -> f64 {
    let ysq = (y * 16.0).trunc() / 16.0;
    let del = (y - ysq) * (y + ysq);
    (-ysq * ysq).exp() * (-del).exp()
}

/// Standard normal density.
pub fn pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal cumulative distribution function.
pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Upper-tail probability `P(X > x)`.
pub fn sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// Quantile function, `cdf(quantile(p)) = p`.
pub fn quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile needs p in (0,1), got {p}");
    -sf_quantile(p)
}

/// Upper-tail quantile: the `x` with `sf(x) = q`.
pub fn sf_quantile(q: f64) -> f64 {
    assert!(q > 0.0 && q < 1.0, "sf_quantile needs q in (0,1), got {q}");
    // Seed with the Acklam-style rational approximation, then polish with
    // Newton steps on the survival function. The seed loses accuracy deep in
    // the tail, so three quadratically convergent steps are used.
    let mut x = quantile_seed(q);
    for _ in 0..3 {
        let d = pdf(x);
        // The density stays a normal float out to x ~ 37.6, past which the
        // step would divide by a subnormal; the seed alone must serve there.
        if d < f64::MIN_POSITIVE {
            break;
        }
        x += (sf(x) - q) / d;
    }
    x
}

/// Rational approximation for the upper-tail normal quantile (relative error
/// below 1e-9; only used as a Newton seed).
fn quantile_seed(q: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383577518672690e2,
        -3.066479806614716e1,
        2.506628277459239e0,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838e0,
        -2.549732539343734e0,
        4.374664141464968e0,
        2.938163982698783e0,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-3,
        3.224671290700398e-1,
        2.445134137142996e0,
        3.754408661907416e0,
    ];
    // Work with the lower-tail probability of -x: p = q maps to x = -z(p).
    let p = q;
    let x = if p < 0.02425 {
        let t = (-2.0 * p.ln()).sqrt();
        (((((C[0] * t + C[1]) * t + C[2]) * t + C[3]) * t + C[4]) * t + C[5])
            / ((((D[0] * t + D[1]) * t + D[2]) * t + D[3]) * t + 1.0)
    } else if p <= 0.97575 {
        let u = p - 0.5;
        let t = u * u;
        u * (((((A[0] * t + A[1]) * t + A[2]) * t + A[3]) * t + A[4]) * t + A[5])
            / (((((B[0] * t + B[1]) * t + B[2]) * t + B[3]) * t + B[4]) * t + 1.0)
    } else {
        let t = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * t + C[1]) * t + C[2]) * t + C[3]) * t + C[4]) * t + C[5])
            / ((((D[0] * t + D[1]) * t + D[2]) * t + D[3]) * t + 1.0)
    };
    -x
}

/// Inverse-CDF draw from a standard normal truncated to `(alpha, inf)`,
/// mapping `u` in `(0,1)` monotonically decreasing onto the region.
///
/// Formulated through the survival function so it remains exact for
/// truncation points deep in the upper tail.
pub fn sample_lower_truncated(alpha: f64, u: f64) -> f64 {
    debug_assert!(u > 0.0 && u < 1.0);
    let tail = sf(alpha);
    if tail <= 0.0 {
        // Beyond circa 38 sigma the tail mass underflows entirely; return the
        // boundary, which is where all the remaining mass concentrates.
        return alpha;
    }
    let x = sf_quantile((u * tail).max(f64::MIN_POSITIVE));
    x.max(alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erfc_matches_high_precision_table() {
        let table: [(f64, f64); 19] = [
            (-6.5, 2.0000000000000000),
            (-3.0, 1.9999779095030014),
            (-1.0, 1.8427007929497149),
            (-0.46875, 1.4926134732179380),
            (-0.2, 1.2227025892104785),
            (0.0, 1.0000000000000000),
            (0.1, 0.88753708398171511),
            (0.46, 0.51534460999832034),
            (0.47, 0.50625494911391786),
            (1.0, 0.15729920705028513),
            (1.3859292911256332, 0.049995790296440860),
            (2.5, 0.00040695201744495894),
            (4.0, 1.5417257900280019e-8),
            (4.5, 1.9661604415428875e-10),
            (6.0, 2.1519736712498913e-17),
            (8.0, 1.1224297172982927e-29),
            (12.0, 1.3562611692059042e-64),
            (20.0, 5.3958656116079009e-176),
            (26.0, 5.6631924088561428e-296),
        ];
        for (x, want) in table {
            let got = erfc(x);
            let rel = (got - want).abs() / want;
            assert!(rel < 5e-15, "erfc({x}) = {got:e}, want {want:e}, rel {rel:e}");
        }
    }

    #[test]
    fn cdf_matches_tabled_values() {
        assert!((cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((cdf(1.0) - 0.84134474606854295).abs() < 1e-15);
        assert!((cdf(-1.96) - 0.024997895148220434).abs() < 1e-16);
    }

    #[test]
    fn sf_is_complement_and_tail_accurate() {
        assert!((sf(1.0) - (1.0 - cdf(1.0))).abs() < 1e-15);
        let p8 = 6.2209605742717841e-16;
        assert!((sf(8.0) - p8).abs() / p8 < 1e-14);
        let p37 = 5.7255712225245768e-300;
        assert!((sf(37.0) - p37).abs() / p37 < 1e-12);
        // Beyond the erfc underflow cutoff the tail rounds to zero.
        assert_eq!(sf(40.0), 0.0);
    }

    #[test]
    fn quantile_round_trips() {
        for &p in &[1e-12, 1e-6, 0.025, 0.5, 0.9, 1.0 - 1e-10] {
            let x = quantile(p);
            assert!(
                (cdf(x) - p).abs() <= 1e-16 + 1e-14 * p,
                "p={p} x={x} cdf={}",
                cdf(x)
            );
        }
        for &q in &[1e-300, 1e-100, 1e-20, 1e-8, 0.3, 0.9] {
            let x = sf_quantile(q);
            let back = sf(x);
            assert!((back - q).abs() / q < 1e-12, "q={q} x={x} back={back}");
        }
    }

    #[test]
    fn truncated_draw_stays_in_region_and_inverts() {
        for &alpha in &[-3.0, 0.0, 2.0, 6.5, 9.0, 40.0] {
            for &u in &[1e-9, 0.1, 0.5, 0.999999] {
                let x = sample_lower_truncated(alpha, u);
                assert!(x >= alpha, "alpha={alpha} u={u} x={x}");
            }
        }
        // Against the plain inverse-CDF construction in the easy range.
        let alpha = 0.7;
        let u = 0.37;
        let direct = quantile(cdf(alpha) + (1.0 - u) * (1.0 - cdf(alpha)));
        let ours = sample_lower_truncated(alpha, u);
        assert!((direct - ours).abs() < 1e-12, "{direct} vs {ours}");
    }
}
