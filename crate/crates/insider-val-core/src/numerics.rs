//! Scalar numerics shared by every module: error function, normal
//! distribution helpers, adaptive Gauss-Kronrod quadrature, bisection root
//! finding, deterministic summation, and a Kolmogorov-Smirnov statistic.
//!
//! Summation uses a fixed pairwise tree order so that aggregate statistics
//! are bit-identical no matter how path generation was partitioned across
//! workers.

use crate::{CoreError, Result};

// ---------------------------------------------------------------------------
// erf / erfc
//
// Ported from the Go standard library's erf.go, which in turn follows
// FreeBSD's /usr/src/lib/msun/src/s_erf.c and came with this notice:
//
// ====================================================
// Copyright (C) 1993 by Sun Microsystems, Inc. All rights reserved.
//
// Developed at SunPro, a Sun Microsystems, Inc. business.
// Permission to use, copy, modify, and distribute this
// software is freely granted, provided that this notice
// is preserved.
// ====================================================
//
// Rational approximations on four ranges; absolute error below 1e-14,
// far inside the 1e-12 budget required of the normal CDF.
// ---------------------------------------------------------------------------

const ERX: f64 = 8.45062911510467529297e-01;

// coefficients for approximation to erf in [0, 0.84375]
const EFX: f64 = 1.28379167095512586316e-01;
const EFX8: f64 = 1.02703333676410069053e+00;
const PP0: f64 = 1.28379167095512558561e-01;
const PP1: f64 = -3.25042107247001499370e-01;
const PP2: f64 = -2.84817495755985104766e-02;
const PP3: f64 = -5.77027029648944159157e-03;
const PP4: f64 = -2.37630166566501626084e-05;
const QQ1: f64 = 3.97917223959155352819e-01;
const QQ2: f64 = 6.50222499887672944485e-02;
const QQ3: f64 = 5.08130628187576562776e-03;
const QQ4: f64 = 1.32494738004321644526e-04;
const QQ5: f64 = -3.96022827877536812320e-06;

// coefficients for approximation to erf in [0.84375, 1.25]
const PA0: f64 = -2.36211856075265944077e-03;
const PA1: f64 = 4.14856118683748331666e-01;
const PA2: f64 = -3.72207876035701323847e-01;
const PA3: f64 = 3.18346619901161753674e-01;
const PA4: f64 = -1.10894694282396677476e-01;
const PA5: f64 = 3.54783043256182359371e-02;
const PA6: f64 = -2.16637559486879084300e-03;
const QA1: f64 = 1.06420880400844228286e-01;
const QA2: f64 = 5.40397917702171048937e-01;
const QA3: f64 = 7.18286544141962662868e-02;
const QA4: f64 = 1.26171219808761642112e-01;
const QA5: f64 = 1.36370839120290507362e-02;
const QA6: f64 = 1.19844998467991074170e-02;

// coefficients for approximation to erfc in [1.25, 1/0.35]
const RA0: f64 = -9.86494403484714822705e-03;
const RA1: f64 = -6.93858572707181764372e-01;
const RA2: f64 = -1.05586262253232909814e+01;
const RA3: f64 = -6.23753324503260060396e+01;
const RA4: f64 = -1.62396669462573470355e+02;
const RA5: f64 = -1.84605092906711035994e+02;
const RA6: f64 = -8.12874355063065934246e+01;
const RA7: f64 = -9.81432934416914548592e+00;
const SA1: f64 = 1.96512716674392571292e+01;
const SA2: f64 = 1.37657754143519042600e+02;
const SA3: f64 = 4.34565877475229228821e+02;
const SA4: f64 = 6.45387271733267880336e+02;
const SA5: f64 = 4.29008140027567833386e+02;
const SA6: f64 = 1.08635005541779435134e+02;
const SA7: f64 = 6.57024977031928170135e+00;
const SA8: f64 = -6.04244152148580987438e-02;

// coefficients for approximation to erfc in [1/0.35, 28]
const RB0: f64 = -9.86494292470009928597e-03;
const RB1: f64 = -7.99283237680523006574e-01;
const RB2: f64 = -1.77579549177547519889e+01;
const RB3: f64 = -1.60636384855821916062e+02;
const RB4: f64 = -6.37566443368389627722e+02;
const RB5: f64 = -1.02509513161107724954e+03;
const RB6: f64 = -4.83519191608651397019e+02;
const SB1: f64 = 3.03380607434824582924e+01;
const SB2: f64 = 3.25792512996573918826e+02;
const SB3: f64 = 1.53672958608443695994e+03;
const SB4: f64 = 3.19985821950859553908e+03;
const SB5: f64 = 2.55305040643316442583e+03;
const SB6: f64 = 4.74528541206955367215e+02;
const SB7: f64 = -2.24409524465858183362e+01;

const VERY_TINY: f64 = 2.848094538889218e-306;
const TINY: f64 = 1.3877787807814457e-17; // 2^-56
const SMALL: f64 = 3.725290298461914e-9; // 2^-28

/// Error function.
pub fn erf(x: f64) -> f64 {
    if f64::is_nan(x) {
        return f64::NAN;
    } else if x == f64::INFINITY {
        return 1.0;
    } else if x == f64::NEG_INFINITY {
        return -1.0;
    }
    let mut sign = false;
    let mut x = x;
    if x < 0.0 {
        x = -x;
        sign = true;
    }
    if x < 0.84375 {
        let temp: f64;
        if x < SMALL {
            if x < VERY_TINY {
                temp = 0.125 * (8.0 * x + EFX8 * x); // avoid underflow
            } else {
                temp = x + EFX * x;
            }
        } else {
            let z = x * x;
            let r = PP0 + z * (PP1 + z * (PP2 + z * (PP3 + z * PP4)));
            let s = 1.0 + z * (QQ1 + z * (QQ2 + z * (QQ3 + z * (QQ4 + z * QQ5))));
            let y = r / s;
            temp = x + x * y;
        }
        if sign {
            return -temp;
        }
        return temp;
    }
    if x < 1.25 {
        let s = x - 1.0;
        let p = PA0 + s * (PA1 + s * (PA2 + s * (PA3 + s * (PA4 + s * (PA5 + s * PA6)))));
        let q = 1.0 + s * (QA1 + s * (QA2 + s * (QA3 + s * (QA4 + s * (QA5 + s * QA6)))));
        if sign {
            return -ERX - p / q;
        }
        return ERX + p / q;
    }
    if x >= 6.0 {
        if sign {
            return -1.0;
        }
        return 1.0;
    }
    let s = 1.0 / (x * x);
    let rr: f64;
    let ss: f64;
    if x < 1.0 / 0.35 {
        rr = RA0 + s * (RA1 + s * (RA2 + s * (RA3 + s * (RA4 + s * (RA5 + s * (RA6 + s * RA7))))));
        ss = 1.0
            + s * (SA1
                + s * (SA2 + s * (SA3 + s * (SA4 + s * (SA5 + s * (SA6 + s * (SA7 + s * SA8)))))));
    } else {
        rr = RB0 + s * (RB1 + s * (RB2 + s * (RB3 + s * (RB4 + s * (RB5 + s * RB6)))));
        ss = 1.0
            + s * (SB1 + s * (SB2 + s * (SB3 + s * (SB4 + s * (SB5 + s * (SB6 + s * SB7))))));
    }
    // pseudo-single (20-bit) precision x, as in the original
    let z = f64::from_bits(f64::to_bits(x) & 0xffff_ffff_0000_0000);
    let r = f64::exp(-z * z - 0.5625) * f64::exp((z - x) * (z + x) + rr / ss);
    if sign {
        return r / x - 1.0;
    }
    1.0 - r / x
}

/// Complementary error function, `erfc(x) = 1 - erf(x)` without cancellation
/// in the tails.
pub fn erfc(x: f64) -> f64 {
    if f64::is_nan(x) {
        return f64::NAN;
    } else if x == f64::INFINITY {
        return 0.0;
    } else if x == f64::NEG_INFINITY {
        return 2.0;
    }
    let mut sign = false;
    let mut x = x;
    if x < 0.0 {
        x = -x;
        sign = true;
    }
    if x < 0.84375 {
        let temp: f64;
        if x < TINY {
            temp = x;
        } else {
            let z = x * x;
            let r = PP0 + z * (PP1 + z * (PP2 + z * (PP3 + z * PP4)));
            let s = 1.0 + z * (QQ1 + z * (QQ2 + z * (QQ3 + z * (QQ4 + z * QQ5))));
            let y = r / s;
            if x < 0.25 {
                temp = x + x * y;
            } else {
                temp = 0.5 + (x * y + (x - 0.5));
            }
        }
        if sign {
            return 1.0 + temp;
        }
        return 1.0 - temp;
    }
    if x < 1.25 {
        let s = x - 1.0;
        let p = PA0 + s * (PA1 + s * (PA2 + s * (PA3 + s * (PA4 + s * (PA5 + s * PA6)))));
        let q = 1.0 + s * (QA1 + s * (QA2 + s * (QA3 + s * (QA4 + s * (QA5 + s * QA6)))));
        if sign {
            return 1.0 + ERX + p / q;
        }
        return 1.0 - ERX - p / q;
    }
    if x < 28.0 {
        let s = 1.0 / (x * x);
        let rr: f64;
        let ss: f64;
        if x < 1.0 / 0.35 {
            rr = RA0
                + s * (RA1 + s * (RA2 + s * (RA3 + s * (RA4 + s * (RA5 + s * (RA6 + s * RA7))))));
            ss = 1.0
                + s * (SA1
                    + s * (SA2
                        + s * (SA3 + s * (SA4 + s * (SA5 + s * (SA6 + s * (SA7 + s * SA8)))))));
        } else {
            if sign && x > 6.0 {
                return 2.0;
            }
            rr = RB0 + s * (RB1 + s * (RB2 + s * (RB3 + s * (RB4 + s * (RB5 + s * RB6)))));
            ss = 1.0
                + s * (SB1 + s * (SB2 + s * (SB3 + s * (SB4 + s * (SB5 + s * (SB6 + s * SB7))))));
        }
        let z = f64::from_bits(f64::to_bits(x) & 0xffff_ffff_0000_0000);
        let r = f64::exp(-z * z - 0.5625) * f64::exp((z - x) * (z + x) + rr / ss);
        if sign {
            return 2.0 - r / x;
        }
        return r / x;
    }
    if sign {
        return 2.0;
    }
    0.0
}

// ---------------------------------------------------------------------------
// Normal distribution
// ---------------------------------------------------------------------------

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Standard normal cumulative distribution function.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Inverse of [`norm_cdf`] for `p` strictly inside (0, 1).
///
/// Bisection against the forward CDF followed by a Newton polish; accurate to
/// a few ulps over the whole representable range of `p`.
pub fn norm_cdf_inv(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(CoreError::InvalidParameter(format!(
            "normal quantile requires p in (0,1), got {p}"
        )));
    }
    let mut lo = -40.0_f64;
    let mut hi = 40.0_f64;
    for _ in 0..120 {
        let mid = 0.5 * (lo + hi);
        if norm_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..2 {
        let d = norm_pdf(x);
        if d > 0.0 {
            x -= (norm_cdf(x) - p) / d;
        }
    }
    Ok(x)
}

// ---------------------------------------------------------------------------
// Adaptive Gauss-Kronrod quadrature (7-15 pair)
// ---------------------------------------------------------------------------

// Kronrod abscissae (positive half) and weights, with the embedded 7-point
// Gauss weights on the odd-indexed abscissae.
const XGK: [f64; 8] = [
    0.9914553711208126,
    0.9491079123427585,
    0.8648644233597691,
    0.7415311855993944,
    0.5860872354676911,
    0.4058451513773972,
    0.2077849550078985,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224,
    0.06309209262997855,
    0.10479001032225018,
    0.14065325971552592,
    0.16900472663926790,
    0.19035057806478540,
    0.20443294007529889,
    0.20948214108472782,
];
const WG: [f64; 4] = [
    0.12948496616886969,
    0.27970539148927666,
    0.38183005050511894,
    0.41795918367346938,
];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let dx = h * XGK[i];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        k += WGK[i] * (f1 + f2);
        if i % 2 == 1 {
            g += WG[i / 2] * (f1 + f2);
        }
    }
    (k * h, ((k - g) * h).abs())
}

const MAX_QUAD_DEPTH: u32 = 48;

fn adapt(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> Result<f64> {
    let (k, e) = gk15(f, a, b);
    if !k.is_finite() {
        return Err(CoreError::Solver(format!(
            "non-finite quadrature value on [{a}, {b}]"
        )));
    }
    if e <= tol || depth >= MAX_QUAD_DEPTH {
        return Ok(k);
    }
    let c = 0.5 * (a + b);
    Ok(adapt(f, a, c, 0.5 * tol, depth + 1)? + adapt(f, c, b, 0.5 * tol, depth + 1)?)
}

/// Adaptive integral of `f` over `[a, b]` to absolute tolerance `abs_tol`.
///
/// Abscissae are strictly interior, so integrable endpoint singularities and
/// jumps located exactly at `a` or `b` are never evaluated.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, abs_tol: f64) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) || !(abs_tol > 0.0) {
        return Err(CoreError::InvalidParameter(
            "integration limits must be finite and abs_tol positive".into(),
        ));
    }
    if a == b {
        return Ok(0.0);
    }
    adapt(&f, a, b, abs_tol, 0)
}

/// Adaptive integral over consecutive segments `points[0] .. points[n]`.
///
/// Use when the integrand has known kinks or jumps: placing them on segment
/// boundaries keeps them away from quadrature abscissae.
pub fn integrate_split(f: impl Fn(f64) -> f64, points: &[f64], abs_tol: f64) -> Result<f64> {
    if points.len() < 2 {
        return Err(CoreError::InvalidParameter(
            "integrate_split needs at least two points".into(),
        ));
    }
    if points.windows(2).any(|w| w[1] < w[0]) {
        return Err(CoreError::InvalidParameter(
            "integrate_split points must be nondecreasing".into(),
        ));
    }
    let nseg = points.len() - 1;
    let seg_tol = abs_tol / nseg as f64;
    let mut total = 0.0;
    for w in points.windows(2) {
        if w[0] < w[1] {
            total += adapt(&f, w[0], w[1], seg_tol, 0)?;
        }
    }
    Ok(total)
}

// ---------------------------------------------------------------------------
// Root finding
// ---------------------------------------------------------------------------

/// Expand `[lo, hi]` geometrically (up to 200 doublings) until `f` changes
/// sign across it.
pub fn expand_bracket(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> Result<(f64, f64)> {
    if !(lo < hi) {
        return Err(CoreError::InvalidParameter(
            "bracket requires lo < hi".into(),
        ));
    }
    let mut lo = lo;
    let mut hi = hi;
    let mut flo = f(lo);
    let mut fhi = f(hi);
    for _ in 0..200 {
        if flo == 0.0 || fhi == 0.0 || (flo < 0.0) != (fhi < 0.0) {
            return Ok((lo, hi));
        }
        let width = hi - lo;
        if flo.abs() < fhi.abs() {
            lo -= width;
            flo = f(lo);
        } else {
            hi += width;
            fhi = f(hi);
        }
    }
    Err(CoreError::Solver(
        "no sign change after 200 bracket doublings".into(),
    ))
}

/// Bisection root of `f` on `[lo, hi]`; requires a sign change on the
/// bracket. Runs until the bracket width drops below `x_tol` (or 200
/// iterations), then returns the midpoint.
pub fn bisect(f: impl Fn(f64) -> f64, lo: f64, hi: f64, x_tol: f64) -> Result<f64> {
    let mut lo = lo;
    let mut hi = hi;
    let flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if (flo < 0.0) == (fhi < 0.0) {
        return Err(CoreError::Solver(format!(
            "no sign change on bracket [{lo}, {hi}]: f(lo)={flo}, f(hi)={fhi}"
        )));
    }
    let neg_at_lo = flo < 0.0;
    for _ in 0..200 {
        if hi - lo <= x_tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break; // bracket already at floating-point resolution
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm < 0.0) == neg_at_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

// ---------------------------------------------------------------------------
// Deterministic reductions
// ---------------------------------------------------------------------------

/// Sum in a fixed pairwise tree order (split at `len/2`, leaves of at most 32
/// summed left to right). The result depends only on the slice contents, so
/// statistics aggregated from a parallel-generated but index-ordered buffer
/// are bit-identical across worker counts.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        let mut s = 0.0;
        for &x in xs {
            s += x;
        }
        return s;
    }
    let m = xs.len() / 2;
    pairwise_sum(&xs[..m]) + pairwise_sum(&xs[m..])
}

/// Mean via [`pairwise_sum`]. Empty input is rejected by debug assertion and
/// returns NaN in release builds.
pub fn mean(xs: &[f64]) -> f64 {
    debug_assert!(!xs.is_empty());
    pairwise_sum(xs) / xs.len() as f64
}

/// Sample mean and its standard error (two-pass, pairwise reductions).
/// A single observation yields a standard error of zero.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    debug_assert!(!xs.is_empty());
    let n = xs.len() as f64;
    let m = mean(xs);
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let sq: Vec<f64> = xs.iter().map(|&x| (x - m) * (x - m)).collect();
    let var = pairwise_sum(&sq) / (n - 1.0);
    (m, (var / n).sqrt())
}

// ---------------------------------------------------------------------------
// Kolmogorov-Smirnov
// ---------------------------------------------------------------------------

/// One-sample Kolmogorov-Smirnov statistic of `samples` against the
/// continuous CDF `cdf`. Sorts a copy of the samples.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).expect("no NaN in KS samples"));
    let n = xs.len() as f64;
    let mut d = 0.0_f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        let hi = (i as f64 + 1.0) / n - f;
        let lo = f - i as f64 / n;
        d = d.max(hi).max(lo);
    }
    d
}

/// Critical value of the KS statistic at the 1% level for sample size `n`
/// (asymptotic formula).
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.6276236115189503 / (n as f64).sqrt()
}

// ---------------------------------------------------------------------------
// Factorials
// ---------------------------------------------------------------------------

/// Natural log of n! by direct summation; exact enough (few ulps) for the
/// series prefactors used in the Poisson model.
pub fn ln_factorial(n: u64) -> f64 {
    let mut s = 0.0;
    for i in 2..=n {
        s += (i as f64).ln();
    }
    s
}
