//! F and Student-t distribution functions via the regularized incomplete
//! beta function.

use super::InferenceError;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

const CF_MAX_ITER: usize = 10_000;
const CF_EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;

/// `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut sum = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        sum += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + sum.ln()
}

pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Continued fraction for `I_x(a, b)`, modified Lentz. Converges quickly
/// for `x < (a + 1) / (a + b + 2)`.
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_EPS {
            break;
        }
    }
    h
}

/// Stirling-series remainder `ln Γ(z) − [(z − ½) ln z − z + ½ ln 2π]`,
/// accurate to double precision for `z >= 10`.
fn stirling_delta(z: f64) -> f64 {
    const C: [f64; 7] = [
        1.0 / 12.0,
        -1.0 / 360.0,
        1.0 / 1260.0,
        -1.0 / 1680.0,
        1.0 / 1188.0,
        -691.0 / 360_360.0,
        1.0 / 156.0,
    ];
    let r = 1.0 / (z * z);
    C.iter().rev().fold(0.0, |acc, c| acc * r + c) / z
}

/// `ln[x^a y^b / B(a, b)]`.
///
/// For large `a` and `b` both terms are huge and nearly cancel, so the
/// expression is rearranged around the mean `a / (a + b)`.
fn ln_beta_front(a: f64, b: f64, x: f64, y: f64) -> f64 {
    if a < 10.0 || b < 10.0 {
        return a * x.ln() + b * y.ln() - ln_beta(a, b);
    }
    let s = a + b;
    let dx = (x * s - a) / a;
    let dy = (y * s - b) / b;
    a * dx.ln_1p()
        + b * dy.ln_1p()
        + 0.5 * (a * b / (s * 2.0 * std::f64::consts::PI)).ln()
        + stirling_delta(s)
        - stirling_delta(a)
        - stirling_delta(b)
}

/// Regularized incomplete beta `I_x(a, b)` where the caller supplies both
/// `x` and `y = 1 − x` so that neither loses precision near 1.
///
/// Returns `(I_x(a, b), 1 − I_x(a, b))`.
pub fn beta_reg_pair(a: f64, b: f64, x: f64, y: f64) -> (f64, f64) {
    if x <= 0.0 {
        return (0.0, 1.0);
    }
    if y <= 0.0 {
        return (1.0, 0.0);
    }
    let ln_front = ln_beta_front(a, b, x, y);
    if x < (a + 1.0) / (a + b + 2.0) {
        let lower = (ln_front.exp() * beta_cf(a, b, x) / a).clamp(0.0, 1.0);
        (lower, 1.0 - lower)
    } else {
        let upper = (ln_front.exp() * beta_cf(b, a, y) / b).clamp(0.0, 1.0);
        (1.0 - upper, upper)
    }
}

pub fn beta_reg(a: f64, b: f64, x: f64) -> f64 {
    beta_reg_pair(a, b, x, 1.0 - x).0
}

fn check_df(d: f64) -> Result<(), InferenceError> {
    if d.is_finite() && d > 0.0 {
        Ok(())
    } else {
        Err(InferenceError::InvalidDegreesOfFreedom(d))
    }
}

/// `(cdf, sf)` of the F(d1, d2) distribution at `x`.
pub fn f_cdf_sf(x: f64, d1: f64, d2: f64) -> Result<(f64, f64), InferenceError> {
    check_df(d1)?;
    check_df(d2)?;
    if x.is_nan() || x < 0.0 {
        return Err(InferenceError::InvalidArgument(x));
    }
    if x == f64::INFINITY {
        return Ok((1.0, 0.0));
    }
    let num = d1 * x;
    let den = num + d2;
    Ok(beta_reg_pair(0.5 * d1, 0.5 * d2, num / den, d2 / den))
}

/// CDF of the F(d1, d2) distribution.
pub fn f_cdf(x: f64, d1: u32, d2: u32) -> Result<f64, InferenceError> {
    f_cdf_sf(x, f64::from(d1), f64::from(d2)).map(|(c, _)| c)
}

/// Upper tail `P(F > x)`, computed without cancellation.
pub fn f_sf(x: f64, d1: u32, d2: u32) -> Result<f64, InferenceError> {
    f_cdf_sf(x, f64::from(d1), f64::from(d2)).map(|(_, s)| s)
}

/// CDF of Student's t with `df` degrees of freedom.
pub fn t_cdf(q: f64, df: u32) -> Result<f64, InferenceError> {
    let nu = f64::from(df);
    check_df(nu)?;
    if q.is_nan() {
        return Err(InferenceError::InvalidArgument(q));
    }
    if q.is_infinite() {
        return Ok(if q > 0.0 { 1.0 } else { 0.0 });
    }
    let den = nu + q * q;
    // P(|T| > |q|) = I_{ν/(ν+q²)}(ν/2, 1/2)
    let (two_tail, _) = beta_reg_pair(0.5 * nu, 0.5, nu / den, q * q / den);
    Ok(if q >= 0.0 {
        1.0 - 0.5 * two_tail
    } else {
        0.5 * two_tail
    })
}

/// Quantile of Student's t: the `q` with `t_cdf(q, df) = p`.
pub fn t_quantile(p: f64, df: u32) -> Result<f64, InferenceError> {
    check_df(f64::from(df))?;
    if !(p > 0.0 && p < 1.0) {
        return Err(InferenceError::InvalidArgument(p));
    }
    if p < 0.5 {
        return t_quantile(1.0 - p, df).map(|q| -q);
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while t_cdf(hi, df)? < p {
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            return Ok(f64::INFINITY);
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if t_cdf(mid, df)? < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_gamma_known_values() {
        assert!(ln_gamma(1.0).abs() < 1e-14);
        assert!(ln_gamma(2.0).abs() < 1e-14);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-14);
        // ln(10!) = ln 3628800
        assert!((ln_gamma(11.0) - 3_628_800f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn beta_reg_edges() {
        assert_eq!(beta_reg(2.0, 3.0, 0.0), 0.0);
        assert_eq!(beta_reg(2.0, 3.0, 1.0), 1.0);
        assert!((beta_reg(1.0, 1.0, 0.3) - 0.3).abs() < 1e-15);
        // I_x(a, 1) = x^a
        assert!((beta_reg(3.5, 1.0, 0.6) - 0.6f64.powf(3.5)).abs() < 1e-14);
    }

    #[test]
    fn f_cdf_basics() {
        assert_eq!(f_cdf(0.0, 3, 7).unwrap(), 0.0);
        assert!((f_cdf(1.0, 5, 5).unwrap() - 0.5).abs() < 1e-12);
        assert!(f_cdf(-1.0, 3, 7).is_err());
        assert!(f_cdf(1.0, 0, 7).is_err());
        // F(2, d2): CDF = 1 - (1 + 2x/d2)^(-d2/2)
        let x = 1.7;
        let exact = 1.0 - (1.0 + 2.0 * x / 9.0f64).powf(-4.5);
        assert!((f_cdf(x, 2, 9).unwrap() - exact).abs() < 1e-14);
    }

    #[test]
    fn large_df_tail() {
        let sf = f_sf(40.0, 1, 5000).unwrap();
        assert!(sf > 0.0 && sf < 1e-8);
        let (c, s) = f_cdf_sf(2.0, 350.0, 5200.0).unwrap();
        assert!((c + s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn t_quantile_inverts_cdf() {
        for df in [1, 2, 5, 30, 1000] {
            for p in [0.6, 0.9, 0.975, 0.999] {
                let q = t_quantile(p, df).unwrap();
                assert!((t_cdf(q, df).unwrap() - p).abs() < 1e-12, "df={df} p={p}");
            }
        }
        // Cauchy: quantile(0.9) = tan(0.4π)
        let q = t_quantile(0.9, 1).unwrap();
        assert!((q - (0.4 * std::f64::consts::PI).tan()).abs() < 1e-9);
    }
}
