use super::{direction_of, Direction, Method, SigTestResult};
use crate::error::{Error, Result};
use crate::special::t_two_sided_p;

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Welch's unequal-variance t-test, two-tailed.
///
/// If both samples have zero variance the test degenerates: p = 1 when the
/// means agree and p = 0 (with an infinite t) when they differ.
pub fn welch_t(x: &[f64], y: &[f64]) -> Result<SigTestResult> {
    if x.len() < 2 || y.len() < 2 {
        return Err(Error::precondition(format!(
            "welch_t needs at least 2 values per sample (got {} and {})",
            x.len(),
            y.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("welch_t input contains a non-finite value"));
    }
    let (mx, vx) = mean_var(x);
    let (my, vy) = mean_var(y);
    let (sx, sy) = (vx / x.len() as f64, vy / y.len() as f64);
    let diff = mx - my;
    let result = |statistic: f64, p_value: f64, direction: Direction| SigTestResult {
        method: Method::WelchT,
        statistic,
        p_value,
        direction,
        resamples: None,
        seed: None,
    };
    if sx + sy == 0.0 {
        return Ok(if diff == 0.0 {
            result(0.0, 1.0, Direction::Equal)
        } else {
            result(diff.signum() * f64::INFINITY, 0.0, direction_of(diff))
        });
    }
    let t = diff / (sx + sy).sqrt();
    let df = (sx + sy).powi(2) / (sx * sx / (x.len() as f64 - 1.0) + sy * sy / (y.len() as f64 - 1.0));
    Ok(result(t, t_two_sided_p(t, df)?, direction_of(diff)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn identical_samples() {
        let r = welch_t(&[1., 2., 3.], &[1., 2., 3.]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.direction, Direction::Equal);
    }

    #[test]
    fn large_shift() {
        let x = [1., 2., 3., 4.];
        let y: Vec<f64> = x.iter().map(|v| v + 1000.0).collect();
        let r = welch_t(&x, &y).unwrap();
        assert!(r.p_value < 1e-6);
        assert_eq!(r.direction, Direction::BGreater);
    }

    #[test]
    fn reference_fixture() {
        // t = -1 / sqrt(4/3 + 2), df = (10/3)^2 / ((4/3)^2/2 + 2^2/4)
        // p from scipy.stats.ttest_ind(equal_var=False)
        let r = welch_t(&[2., 4., 6.], &[1., 3., 5., 7., 9.]).unwrap();
        assert_relative_eq!(r.statistic, -1.0 / (10.0f64 / 3.0).sqrt(), max_relative = 1e-12);
        assert_relative_eq!(r.p_value, 0.6040266913860823, max_relative = 1e-9);
    }

    #[test]
    fn degenerate_variances() {
        let r = welch_t(&[5., 5.], &[5., 5., 5.]).unwrap();
        assert_eq!(r.p_value, 1.0);
        let r = welch_t(&[5., 5.], &[6., 6.]).unwrap();
        assert_eq!(r.p_value, 0.0);
        assert_eq!(r.direction, Direction::BGreater);
        assert!(welch_t(&[1.], &[1., 2.]).is_err());
        assert!(welch_t(&[1., f64::NAN], &[1., 2.]).is_err());
    }

    #[test]
    fn swap_negates_statistic() {
        let (x, y) = ([88.1, 90.2, 89.7, 91.0], [89.9, 90.5, 90.1]);
        let (a, b) = (welch_t(&x, &y).unwrap(), welch_t(&y, &x).unwrap());
        assert_eq!(a.statistic, -b.statistic);
        assert_eq!(a.p_value, b.p_value);
    }
}
