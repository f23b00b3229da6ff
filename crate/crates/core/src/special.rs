//! Special functions behind the parametric tests: the regularized incomplete
//! beta function, Student's t CDF and quantile, and the standard normal tail.

use crate::error::{Error, Result};

const CF_EPS: f64 = 1e-16;
const CF_TINY: f64 = 1e-300;
const CF_MAX_ITER: usize = 200_000;

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < CF_TINY {
        d = CF_TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
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

fn ln_beta(a: f64, b: f64) -> f64 {
    libm::lgamma(a) + libm::lgamma(b) - libm::lgamma(a + b)
}

/// `I_x(a, b)` given both `x` and `y = 1 - x`, so callers can supply the
/// complement without cancellation.
fn inc_beta_split(a: f64, b: f64, x: f64, y: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if y <= 0.0 {
        return 1.0;
    }
    let ln_front = a * x.ln() + b * y.ln() - ln_beta(a, b);
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * beta_cf(b, a, y) / b
    }
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn regularized_inc_beta(a: f64, b: f64, x: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::invalid(format!("incomplete beta needs a, b > 0 (got {a}, {b})")));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::invalid(format!("incomplete beta argument {x} outside [0, 1]")));
    }
    Ok(inc_beta_split(a, b, x, 1.0 - x))
}

fn check_df(df: f64) -> Result<()> {
    if df > 0.0 && !df.is_nan() {
        Ok(())
    } else {
        Err(Error::invalid(format!("degrees of freedom must be positive, got {df}")))
    }
}

/// `P(|T| >= |t|)` for Student's t with `df` degrees of freedom.
pub fn t_two_sided_p(t: f64, df: f64) -> Result<f64> {
    check_df(df)?;
    if t.is_nan() {
        return Err(Error::invalid("t statistic is NaN"));
    }
    if t.is_infinite() {
        return Ok(0.0);
    }
    let t2 = t * t;
    let x = df / (df + t2);
    let y = t2 / (df + t2);
    Ok(inc_beta_split(df / 2.0, 0.5, x, y).clamp(0.0, 1.0))
}

/// CDF of Student's t distribution.
pub fn t_cdf(t: f64, df: f64) -> Result<f64> {
    let half_tail = t_two_sided_p(t, df)? / 2.0;
    Ok(if t > 0.0 { 1.0 - half_tail } else { half_tail })
}

/// Quantile of Student's t distribution, by bisection on [`t_cdf`] until the
/// bracket is narrower than 1e-12.
pub fn t_quantile(p: f64, df: f64) -> Result<f64> {
    check_df(df)?;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("quantile probability {p} outside (0, 1)")));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    // solve for the upper tail and mirror
    let upper = p.max(1.0 - p);
    let mut lo = 0.0;
    let mut hi = 1.0;
    while t_cdf(hi, df)? < upper {
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::invalid("t quantile diverged"));
        }
    }
    while hi - lo > 1e-12 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if t_cdf(mid, df)? < upper {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let q = 0.5 * (lo + hi);
    Ok(if p > 0.5 { q } else { -q })
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// `P(|Z| >= z)` for a standard normal `Z` and `z >= 0`.
pub fn normal_two_sided_p(z: f64) -> f64 {
    libm::erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0)
}
