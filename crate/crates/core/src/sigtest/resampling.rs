//! Paired resampling tests over per-instance statistics.
//!
//! Both randomized tests run on a [`PairedSample`], the multiset of distinct
//! `(a_i, b_i)` instance pairs with their multiplicities. Drawing `n` indices
//! with replacement is the same, in distribution, as drawing multinomial
//! counts over those pairs, and swapping each pair with probability 1/2 is
//! the same as drawing a Binomial(count, 1/2) number of swaps per distinct
//! pair. A resample therefore costs O(distinct pairs) instead of O(n).
//!
//! Multinomial counts are drawn as sequential conditional binomials over the
//! distinct pairs in ascending order: the k-th pair receives
//! `Binomial(remaining, c_k / (c_k + ... + c_last))` draws and the last pair
//! takes the remainder.

use std::collections::BTreeMap;

use rand::Rng as _;
use rand_distr::{Binomial, Distribution};

use super::{direction_of, Direction, Method, SigTestResult};
use crate::error::{Error, Result};
use crate::metric::{aggregate, InstanceSeq, InstanceStats, MetricMode};
use crate::rng::{rng_from_seed, Rng};

/// Score differences closer than this (in percentage points) are treated as
/// ties by the counting rules.
pub const SCORE_EPS: f64 = 1e-9;

pub const MIN_BOOTSTRAP_RESAMPLES: u64 = 1000;

pub const DEFAULT_EXACT_MAX_N: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub struct PairedSample {
    mode: MetricMode,
    n: u64,
    pairs: Vec<(InstanceStats, InstanceStats, u64)>,
}

impl PairedSample {
    /// Pairs `a[i]` with `b[i]`.
    pub fn from_stats(a: &[InstanceStats], b: &[InstanceStats]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::precondition(format!(
                "paired samples differ in length ({} vs {})",
                a.len(),
                b.len()
            )));
        }
        let mode = aggregate(a)?.mode();
        if aggregate(b)?.mode() != mode {
            return Err(Error::invalid("paired samples use different metric modes"));
        }
        let mut counts: BTreeMap<(InstanceStats, InstanceStats), u64> = BTreeMap::new();
        for (x, y) in a.iter().zip(b) {
            *counts.entry((*x, *y)).or_default() += 1;
        }
        Ok(Self::from_counts(mode, counts))
    }

    pub fn from_seqs(a: &InstanceSeq, b: &InstanceSeq) -> Result<Self> {
        match (a, b) {
            (InstanceSeq::Binary(x), InstanceSeq::Binary(y)) => {
                if x.len() != y.len() {
                    return Err(Error::precondition(format!(
                        "paired samples differ in length ({} vs {})",
                        x.len(),
                        y.len()
                    )));
                }
                if x.is_empty() {
                    return Err(Error::Empty("no instance statistics".into()));
                }
                let n = x.len() as u64;
                let both = x.count_both_correct(y);
                let only_a = x.count_correct() - both;
                let only_b = y.count_correct() - both;
                let neither = n - both - only_a - only_b;
                let right = InstanceStats::Accuracy { correct: 1, total: 1 };
                let wrong = InstanceStats::Accuracy { correct: 0, total: 1 };
                let counts = BTreeMap::from([
                    ((right, right), both),
                    ((right, wrong), only_a),
                    ((wrong, right), only_b),
                    ((wrong, wrong), neither),
                ]);
                Ok(Self::from_counts(MetricMode::Accuracy, counts))
            }
            _ => Self::from_stats(&a.to_stats(), &b.to_stats()),
        }
    }

    fn from_counts(mode: MetricMode, counts: BTreeMap<(InstanceStats, InstanceStats), u64>) -> Self {
        let pairs: Vec<_> = counts.into_iter().filter(|&(_, c)| c > 0).map(|((x, y), c)| (x, y, c)).collect();
        let n = pairs.iter().map(|p| p.2).sum();
        PairedSample { mode, n, pairs }
    }

    pub fn len(&self) -> u64 {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn mode(&self) -> MetricMode {
        self.mode
    }

    /// Number of distinct `(a_i, b_i)` pairs.
    pub fn distinct_pairs(&self) -> usize {
        self.pairs.len()
    }

    /// Metric of system a and of system b on the full sample.
    pub fn observed_scores(&self) -> (f64, f64) {
        let mut a = InstanceStats::zero(self.mode);
        let mut b = InstanceStats::zero(self.mode);
        for (x, y, c) in &self.pairs {
            a.add_scaled(x, *c);
            b.add_scaled(y, *c);
        }
        (a.score(), b.score())
    }

    fn observed_direction(&self) -> (f64, Direction) {
        let (ma, mb) = self.observed_scores();
        let delta = ma - mb;
        let direction = if delta.abs() <= SCORE_EPS { Direction::Equal } else { direction_of(delta) };
        (delta, direction)
    }

    /// Paired bootstrap with the `delta* > 2 delta` counting rule.
    ///
    /// The observed difference `delta = metric(a) - metric(b)` is made
    /// non-negative by orienting the comparison towards the better system;
    /// `statistic` keeps the sign. The p-value is the raw fraction of
    /// resamples whose oriented difference exceeds twice the observed one.
    /// With zero observed difference no resample can exceed it, so p = 0;
    /// such results carry [`Direction::Equal`] and are never significant.
    pub fn bootstrap(&self, resamples: u64, seed: u64) -> Result<SigTestResult> {
        if resamples < MIN_BOOTSTRAP_RESAMPLES {
            return Err(Error::precondition(format!(
                "bootstrap needs at least {MIN_BOOTSTRAP_RESAMPLES} resamples, got {resamples}"
            )));
        }
        let (delta, direction) = self.observed_direction();
        let flip = delta < 0.0;
        let threshold = 2.0 * delta.abs() + SCORE_EPS;

        // P(pair k | pair k or later) for the sequential binomial draws
        let mut tail: u64 = self.n;
        let conditional: Vec<f64> = self
            .pairs
            .iter()
            .map(|&(_, _, c)| {
                let p = if tail == 0 { 0.0 } else { (c as f64 / tail as f64).min(1.0) };
                tail -= c;
                p
            })
            .collect();

        let mut rng = rng_from_seed(seed);
        let mut exceed = 0u64;
        for _ in 0..resamples {
            let mut a = InstanceStats::zero(self.mode);
            let mut b = InstanceStats::zero(self.mode);
            let mut remaining = self.n;
            let last = self.pairs.len() - 1;
            for (k, ((x, y, _), &p)) in self.pairs.iter().zip(&conditional).enumerate() {
                if remaining == 0 {
                    break;
                }
                let draws = if k == last { remaining } else { binomial(&mut rng, remaining, p) };
                a.add_scaled(x, draws);
                b.add_scaled(y, draws);
                remaining -= draws;
            }
            let d = if flip { b.score() - a.score() } else { a.score() - b.score() };
            if d > threshold {
                exceed += 1;
            }
        }
        Ok(SigTestResult {
            method: Method::Bootstrap,
            statistic: delta,
            p_value: exceed as f64 / resamples as f64,
            direction,
            resamples: Some(resamples),
            seed: Some(seed),
        })
    }

    /// Approximate randomization: each pair is swapped with probability 1/2;
    /// `p = (#{d* >= d} + 1) / (resamples + 1)` on absolute differences.
    pub fn approx_randomization(&self, resamples: u64, seed: u64) -> Result<SigTestResult> {
        if resamples < MIN_BOOTSTRAP_RESAMPLES {
            return Err(Error::precondition(format!(
                "approximate randomization needs at least {MIN_BOOTSTRAP_RESAMPLES} resamples, got {resamples}"
            )));
        }
        let (delta, direction) = self.observed_direction();
        let threshold = delta.abs() - SCORE_EPS;

        // Identical pairs are unaffected by swapping. The others only matter
        // as unordered pairs: after independent fair swaps, the number of
        // pairs in {lo, hi} that leave `lo` on side a is Binomial(m, 1/2)
        // whichever way round they started. Merging them makes the draws
        // (and so the p-value) invariant under exchanging a and b.
        let mut base = InstanceStats::zero(self.mode);
        let mut unordered: BTreeMap<(InstanceStats, InstanceStats), u64> = BTreeMap::new();
        for (x, y, c) in &self.pairs {
            if x == y {
                base.add_scaled(x, *c);
            } else {
                *unordered.entry(((*x).min(*y), (*x).max(*y))).or_default() += c;
            }
        }
        let swappable: Vec<_> = unordered.into_iter().map(|((lo, hi), m)| (lo, hi, m)).collect();

        let mut rng = rng_from_seed(seed);
        let mut reach = 0u64;
        for _ in 0..resamples {
            let mut a = base;
            let mut b = base;
            for (lo, hi, m) in &swappable {
                let lo_on_a = binomial(&mut rng, *m, 0.5);
                a.add_scaled(lo, lo_on_a);
                a.add_scaled(hi, m - lo_on_a);
                b.add_scaled(hi, lo_on_a);
                b.add_scaled(lo, m - lo_on_a);
            }
            if (a.score() - b.score()).abs() >= threshold {
                reach += 1;
            }
        }
        Ok(SigTestResult {
            method: Method::ApproxRand,
            statistic: delta,
            p_value: (reach + 1) as f64 / (resamples + 1) as f64,
            direction,
            resamples: Some(resamples),
            seed: Some(seed),
        })
    }
}

fn binomial(rng: &mut Rng, n: u64, p: f64) -> u64 {
    if p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    if n == 1 {
        return u64::from(rng.random::<f64>() < p);
    }
    Binomial::new(n, p).expect("p in (0, 1)").sample(rng)
}

/// Paired bootstrap over index-aligned instance statistics.
pub fn paired_bootstrap(a: &[InstanceStats], b: &[InstanceStats], resamples: u64, seed: u64) -> Result<SigTestResult> {
    PairedSample::from_stats(a, b)?.bootstrap(resamples, seed)
}

/// Approximate randomization over index-aligned instance statistics.
pub fn approx_randomization(
    a: &[InstanceStats],
    b: &[InstanceStats],
    resamples: u64,
    seed: u64,
) -> Result<SigTestResult> {
    PairedSample::from_stats(a, b)?.approx_randomization(resamples, seed)
}

/// Exact randomization: enumerates all `2^n` swap assignments of the raw
/// instance sequence; `p = #{d* >= d} / 2^n`.
pub fn exact_randomization(a: &[InstanceStats], b: &[InstanceStats], max_n: usize) -> Result<SigTestResult> {
    if a.len() != b.len() {
        return Err(Error::precondition(format!(
            "paired samples differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n > max_n || n >= 63 {
        return Err(Error::precondition(format!(
            "exact randomization over {n} instances exceeds the limit of {}",
            max_n.min(62)
        )));
    }
    let mode = aggregate(a)?.mode();
    if aggregate(b)?.mode() != mode {
        return Err(Error::invalid("paired samples use different metric modes"));
    }
    let score_pair = |mask: u64| {
        let mut sa = InstanceStats::zero(mode);
        let mut sb = InstanceStats::zero(mode);
        for i in 0..n {
            let (x, y) = if mask >> i & 1 == 1 { (&b[i], &a[i]) } else { (&a[i], &b[i]) };
            sa.add_scaled(x, 1);
            sb.add_scaled(y, 1);
        }
        (sa.score(), sb.score())
    };
    let (ma, mb) = score_pair(0);
    let delta = ma - mb;
    let threshold = delta.abs() - SCORE_EPS;
    let total = 1u64 << n;
    let reach = (0..total)
        .filter(|&mask| {
            let (x, y) = score_pair(mask);
            (x - y).abs() >= threshold
        })
        .count();
    let direction = if delta.abs() <= SCORE_EPS { Direction::Equal } else { direction_of(delta) };
    Ok(SigTestResult {
        method: Method::ExactRand,
        statistic: delta,
        p_value: reach as f64 / total as f64,
        direction,
        resamples: None,
        seed: None,
    })
}
