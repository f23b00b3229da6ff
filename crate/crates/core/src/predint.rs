//! Least-squares fit of test scores on dev scores and the prediction
//! interval around it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::t_quantile;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub n: usize,
    /// Residual standard deviation, `sqrt(SSR / (n - 2))`.
    pub s_y: f64,
    /// Unbiased standard deviation of the dev scores.
    pub s_x: f64,
    pub mean_x: f64,
}

impl LinearFit {
    pub fn predict(&self, dev: f64) -> f64 {
        self.intercept + self.slope * dev
    }
}

/// Regresses test on dev over `(dev, test)` points.
pub fn fit_dev_test(points: &[(f64, f64)]) -> Result<LinearFit> {
    let n = points.len();
    if n < 3 {
        return Err(Error::precondition(format!("regression needs at least 3 points, got {n}")));
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::invalid("regression input contains a non-finite score"));
    }
    let nf = n as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    if sxx == 0.0 {
        return Err(Error::precondition("all dev scores are equal; the regression slope is undefined"));
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ssr: f64 = points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    Ok(LinearFit { slope, intercept, n, s_y: (ssr / (nf - 2.0)).sqrt(), s_x: (sxx / (nf - 1.0)).sqrt(), mean_x })
}

/// Half-width ζ of the two-tailed prediction interval with confidence
/// `alpha` for a fresh test score at `dev`:
/// `t*_{n-2} · s_y · sqrt(1 + 1/n + (dev - mean_x)² / ((n - 1) s_x²))`.
pub fn prediction_interval(fit: &LinearFit, dev: f64, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("confidence level {alpha} outside (0, 1)")));
    }
    if fit.n < 3 || fit.s_x <= 0.0 {
        return Err(Error::precondition("prediction interval needs a fit over at least 3 distinct dev scores"));
    }
    let t_star = t_quantile((1.0 + alpha) / 2.0, fit.n as f64 - 2.0)?;
    let nf = fit.n as f64;
    let leverage = (dev - fit.mean_x).powi(2) / ((nf - 1.0) * fit.s_x * fit.s_x);
    Ok(t_star * fit.s_y * (1.0 + 1.0 / nf + leverage).sqrt())
}

/// Single-interval confidence whose square complement is `pair_confidence`:
/// `alpha = 1 - sqrt(pair_confidence)`.
pub fn pair_alpha(pair_confidence: f64) -> Result<f64> {
    if !(pair_confidence > 0.0 && pair_confidence < 1.0) {
        return Err(Error::invalid(format!("pair confidence {pair_confidence} outside (0, 1)")));
    }
    Ok(1.0 - pair_confidence.sqrt())
}

/// Mean of `2ζ` over the observed dev scores, with `alpha` from
/// [`pair_alpha`].
pub fn interval_width_summary(points: &[(f64, f64)], pair_confidence: f64) -> Result<f64> {
    let alpha = pair_alpha(pair_confidence)?;
    let fit = fit_dev_test(points)?;
    let mut total = 0.0;
    for &(dev, _) in points {
        total += 2.0 * prediction_interval(&fit, dev, alpha)?;
    }
    Ok(total / points.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::special::{normal_cdf, t_cdf};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::Rng as _;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn exact_line() {
        let pts: Vec<(f64, f64)> = (0..5).map(|x| (f64::from(x), 2.0 * f64::from(x) + 1.0)).collect();
        let fit = fit_dev_test(&pts).unwrap();
        assert_relative_eq!(fit.slope, 2.0, max_relative = 1e-12);
        assert_relative_eq!(fit.intercept, 1.0, max_relative = 1e-12);
        assert_abs_diff_eq!(fit.s_y, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(prediction_interval(&fit, 7.0, 0.9).unwrap(), 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(interval_width_summary(&pts, 0.05).unwrap(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn three_point_fixture() {
        let fit = fit_dev_test(&[(0.0, 0.0), (1.0, 1.0), (2.0, 0.0)]).unwrap();
        assert_abs_diff_eq!(fit.slope, 0.0, epsilon = 1e-15);
        assert_relative_eq!(fit.intercept, 1.0 / 3.0, max_relative = 1e-14);
        assert_relative_eq!(fit.s_y, (2.0f64 / 3.0).sqrt(), max_relative = 1e-14);
        assert_relative_eq!(fit.s_x, 1.0, max_relative = 1e-14);
    }

    #[test]
    fn errors() {
        assert!(fit_dev_test(&[(0.0, 1.0), (1.0, 2.0)]).is_err());
        assert!(fit_dev_test(&[(1.0, 1.0), (1.0, 2.0), (1.0, 3.0)]).is_err());
        let fit = fit_dev_test(&[(0.0, 0.0), (1.0, 1.0), (2.0, 0.0)]).unwrap();
        assert!(prediction_interval(&fit, 0.0, 0.0).is_err());
        assert!(prediction_interval(&fit, 0.0, 1.0).is_err());
        assert!(pair_alpha(0.0).is_err());
    }

    #[test]
    fn pair_alpha_closed_form() {
        assert_abs_diff_eq!(pair_alpha(0.05).unwrap(), 0.776393202250021, epsilon = 1e-12);
    }

    fn noisy_line(seed: u64, n: usize) -> Vec<(f64, f64)> {
        let mut rng = stream(seed, &[]);
        let noise = Normal::new(0.0, 0.4).unwrap();
        (0..n)
            .map(|_| {
                let x = rng.random_range(88.0..92.0);
                (x, 0.3 * x + 63.0 + noise.sample(&mut rng))
            })
            .collect()
    }

    /// Normal equations solved by Cramer's rule on the raw sums.
    fn normal_equations(points: &[(f64, f64)]) -> (f64, f64) {
        let n = points.len() as f64;
        let (sx, sy) = points.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
        let (sxx, sxy) = points.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0 * p.0, b + p.0 * p.1));
        let det = n * sxx - sx * sx;
        ((n * sxy - sx * sy) / det, (sxx * sy - sx * sxy) / det)
    }

    #[test]
    fn matches_normal_equations() {
        for seed in 0..20 {
            // centred data keep the raw-sum formulation well conditioned
            let pts: Vec<(f64, f64)> = noisy_line(seed, 10 + seed as usize * 7)
                .into_iter()
                .map(|(x, y)| (x - 90.0, y))
                .collect();
            let fit = fit_dev_test(&pts).unwrap();
            let (slope, intercept) = normal_equations(&pts);
            assert_relative_eq!(fit.slope, slope, max_relative = 1e-10);
            assert_relative_eq!(fit.intercept, intercept, max_relative = 1e-10);
        }
    }

    #[test]
    fn zeta_matches_direct_formula() {
        let pts = noisy_line(3, 10);
        let fit = fit_dev_test(&pts).unwrap();
        // direct evaluation from the raw points: x residual sum of squares
        // replaces (n - 1) s_x^2, and the t quantile is located on the CDF
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        let ssr: f64 = pts.iter().map(|p| (p.1 - fit.predict(p.0)).powi(2)).sum();
        let alpha = 0.9;
        let t_star = t_quantile(0.95, n - 2.0).unwrap();
        assert_abs_diff_eq!(t_cdf(t_star, n - 2.0).unwrap(), 0.95, epsilon = 1e-12);
        for dev in [87.0, 89.5, 90.0, 93.0] {
            let direct = t_star * (ssr / (n - 2.0)).sqrt() * (1.0 + 1.0 / n + (dev - mx).powi(2) / sxx).sqrt();
            assert_relative_eq!(prediction_interval(&fit, dev, alpha).unwrap(), direct, max_relative = 1e-9);
        }
    }

    #[test]
    fn zeta_symmetric_and_increasing() {
        let fit = fit_dev_test(&noisy_line(5, 50)).unwrap();
        let z = |d: f64| prediction_interval(&fit, fit.mean_x + d, 0.77).unwrap();
        let mut last = z(0.0);
        for k in 1..20 {
            let d = f64::from(k) * 0.25;
            assert_relative_eq!(z(d), z(-d), max_relative = 1e-12);
            assert!(z(d) > last);
            last = z(d);
        }
    }

    /// Two fresh scores at the same dev value differ by N(0, 2σ²), so
    /// `P(|t1 - t2| >= 2ζ) ≈ 2Φ(-√2 · t*)`, not the `(1 - alpha)²` that
    /// two independent interval misses would give.
    #[test]
    fn paired_event_frequency_is_analytic() {
        let alpha = pair_alpha(0.05).unwrap();
        let pts = noisy_line(11, 5000);
        let fit = fit_dev_test(&pts).unwrap();
        let mut rng = stream(12, &[]);
        let noise = Normal::new(0.0, 0.4).unwrap();
        let trials = 40_000;
        let mut hits = 0;
        let mut expected = 0.0;
        for _ in 0..trials {
            let x = rng.random_range(88.0..92.0);
            let zeta = prediction_interval(&fit, x, alpha).unwrap();
            expected += 2.0 * normal_cdf(-std::f64::consts::SQRT_2 * zeta / 0.4);
            let (t1, t2): (f64, f64) = (noise.sample(&mut rng), noise.sample(&mut rng));
            if (t1 - t2).abs() >= 2.0 * zeta {
                hits += 1;
            }
        }
        let freq = f64::from(hits) / f64::from(trials);
        let expected = expected / f64::from(trials);
        let se = (expected * (1.0 - expected) / f64::from(trials)).sqrt();
        assert!((freq - expected).abs() < 4.0 * se, "freq {freq} vs expected {expected}");
        let t_star = t_quantile((1.0 + alpha) / 2.0, 4998.0).unwrap();
        let limit = 2.0 * normal_cdf(-std::f64::consts::SQRT_2 * t_star);
        assert!(limit > 0.08 && limit < 0.09, "{limit}");
        assert!(freq > 0.07);
    }
}
