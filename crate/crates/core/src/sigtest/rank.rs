//! Wilcoxon signed-rank and Mann-Whitney U tests with exact small-sample
//! distributions.

use super::{Direction, Method, SigTestResult};
use crate::error::{Error, Result};
use crate::metric::mid_ranks_with_tolerance;
use crate::special::normal_two_sided_p;

/// Largest effective sample size for which Wilcoxon uses the exact null
/// distribution.
pub const EXACT_WILCOXON_MAX_N: usize = 25;

/// Largest `nx * ny` for which Mann-Whitney uses the exact null distribution
/// (tie-free samples only).
pub const EXACT_MANN_WHITNEY_MAX_PRODUCT: usize = 400;

/// Values (or differences) closer than this count as tied.
const TIE_EPS: f64 = 1e-9;

fn rank_result(method: Method, statistic: f64, p_value: f64, direction: Direction) -> SigTestResult {
    SigTestResult { method, statistic, p_value: p_value.clamp(0.0, 1.0), direction, resamples: None, seed: None }
}

/// Sum of `t^3 - t` over groups of tied mid-ranks.
fn tie_term(ranks: &[f64]) -> f64 {
    let mut sorted = ranks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut total = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        total += t * t * t - t;
        i = j;
    }
    total
}

fn check_finite(v: &[f64], what: &str) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid(format!("{what} contains a non-finite value")));
    }
    Ok(())
}

/// Wilcoxon signed-rank test for matched pairs, two-tailed.
///
/// Zero differences are discarded; the absolute differences get mid-ranks.
/// For up to [`EXACT_WILCOXON_MAX_N`] non-zero differences the p-value comes
/// from the exact permutation distribution of the (tie-adjusted) ranks;
/// above that from the normal approximation with tie and continuity
/// correction. The statistic is `W = min(W+, W-)`.
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> Result<SigTestResult> {
    if x.len() != y.len() {
        return Err(Error::precondition(format!(
            "wilcoxon_signed_rank needs matched pairs (got {} and {} values)",
            x.len(),
            y.len()
        )));
    }
    if x.is_empty() {
        return Err(Error::Empty("wilcoxon_signed_rank on empty samples".into()));
    }
    check_finite(x, "wilcoxon input")?;
    check_finite(y, "wilcoxon input")?;

    let diffs: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).filter(|d| d.abs() > TIE_EPS).collect();
    if diffs.is_empty() {
        return Ok(rank_result(Method::Wilcoxon, 0.0, 1.0, Direction::Equal));
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = mid_ranks_with_tolerance(&abs, TIE_EPS);
    let w_plus: f64 = ranks.iter().zip(&diffs).filter(|(_, d)| **d > 0.0).map(|(r, _)| r).sum();
    let n = diffs.len();
    let total = (n * (n + 1)) as f64 / 2.0;
    let w_minus = total - w_plus;
    let w = w_plus.min(w_minus);
    let direction = if w_plus > w_minus {
        Direction::AGreater
    } else if w_plus < w_minus {
        Direction::BGreater
    } else {
        Direction::Equal
    };

    let p = if n <= EXACT_WILCOXON_MAX_N {
        // Mid-ranks are multiples of 1/2, so doubled ranks are integers.
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let max_sum: usize = doubled.iter().sum();
        let mut ways = vec![0u64; max_sum + 1];
        ways[0] = 1;
        let mut reach = 0;
        for &r in &doubled {
            for s in (0..=reach).rev() {
                if ways[s] > 0 {
                    ways[s + r] += ways[s];
                }
            }
            reach += r;
        }
        let w2 = (2.0 * w).round() as usize;
        let at_most: u64 = ways[..=w2.min(max_sum)].iter().sum();
        2.0 * at_most as f64 / (1u64 << n) as f64
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term(&ranks) / 48.0;
        if var <= 0.0 {
            1.0
        } else {
            let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
            normal_two_sided_p(z)
        }
    };
    Ok(rank_result(Method::Wilcoxon, w, p, direction))
}

/// Number of arrangements of `m` x-values and `n` y-values realizing each
/// value of `U_x` (no ties).
fn mann_whitney_null_counts(m: usize, n: usize) -> Vec<u64> {
    // counts[i][j] is the distribution for sizes (i, j); built row by row
    // with f(i, j, u) = f(i - 1, j, u - j) + f(i, j - 1, u).
    let mut prev: Vec<Vec<u64>> = (0..=n).map(|_| vec![1]).collect();
    for i in 1..=m {
        let mut cur: Vec<Vec<u64>> = Vec::with_capacity(n + 1);
        cur.push(vec![1]);
        for j in 1..=n {
            let mut dist = vec![0u64; i * j + 1];
            for (u, &c) in prev[j].iter().enumerate() {
                dist[u + j] += c;
            }
            for (u, &c) in cur[j - 1].iter().enumerate() {
                dist[u] += c;
            }
            cur.push(dist);
        }
        prev = cur;
    }
    prev.swap_remove(n)
}

/// Mann-Whitney U test for independent samples, two-tailed.
///
/// Exact when `nx * ny <=` [`EXACT_MANN_WHITNEY_MAX_PRODUCT`] and the
/// samples contain no ties; otherwise the normal approximation with tie and
/// continuity correction. The statistic is `U = min(Ux, Uy)`.
pub fn mann_whitney_u(x: &[f64], y: &[f64]) -> Result<SigTestResult> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::Empty("mann_whitney_u needs non-empty samples".into()));
    }
    check_finite(x, "mann_whitney input")?;
    check_finite(y, "mann_whitney input")?;
    let (m, n) = (x.len(), y.len());
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let ranks = mid_ranks_with_tolerance(&pooled, TIE_EPS);
    let rank_sum_x: f64 = ranks[..m].iter().sum();
    let (mf, nf) = (m as f64, n as f64);
    let u_x = rank_sum_x - mf * (mf + 1.0) / 2.0;
    let u_y = mf * nf - u_x;
    let u = u_x.min(u_y);
    let direction = if u_x > u_y {
        Direction::AGreater
    } else if u_x < u_y {
        Direction::BGreater
    } else {
        Direction::Equal
    };
    let ties = tie_term(&ranks);

    let p = if m * n <= EXACT_MANN_WHITNEY_MAX_PRODUCT && ties == 0.0 {
        let counts = mann_whitney_null_counts(m, n);
        let total: u64 = counts.iter().sum();
        let at_most: u64 = counts[..=(u.round() as usize)].iter().sum();
        2.0 * at_most as f64 / total as f64
    } else {
        let big_n = mf + nf;
        let var = mf * nf / 12.0 * ((big_n + 1.0) - ties / (big_n * (big_n - 1.0)));
        if var <= 0.0 {
            1.0
        } else {
            let z = ((u_x - mf * nf / 2.0).abs() - 0.5).max(0.0) / var.sqrt();
            normal_two_sided_p(z)
        }
    };
    Ok(rank_result(Method::MannWhitney, u, p, direction))
}
