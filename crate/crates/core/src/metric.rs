//! Metric definitions over per-instance sufficient statistics, and the
//! descriptive statistics shared by the protocols (percentiles, ranks,
//! Spearman correlation).
//!
//! All scores are in percentage points on the scale `[0, 100]`.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A score in percentage points.
pub type Score = f64;

/// Tolerance, in percentage points, for the score/stats consistency check of
/// a [`RunRecord`].
pub const CONSISTENCY_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricMode {
    /// Micro-averaged span F1.
    SpanF1,
    /// Fraction of correct decisions.
    Accuracy,
}

/// Sufficient statistics of one evaluation instance (a sentence, a document,
/// a single classification decision). Any supported metric over a set of
/// instances is computed from the component-wise sum.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceStats {
    Span { tp: u64, fp: u64, fn_: u64 },
    Accuracy { correct: u64, total: u64 },
}

impl InstanceStats {
    pub const fn span(tp: u64, fp: u64, fn_: u64) -> Self {
        InstanceStats::Span { tp, fp, fn_ }
    }

    pub fn accuracy(correct: u64, total: u64) -> Result<Self> {
        if correct > total {
            return Err(Error::invalid(format!(
                "correct count {correct} exceeds total {total}"
            )));
        }
        Ok(InstanceStats::Accuracy { correct, total })
    }

    pub fn mode(&self) -> MetricMode {
        match self {
            InstanceStats::Span { .. } => MetricMode::SpanF1,
            InstanceStats::Accuracy { .. } => MetricMode::Accuracy,
        }
    }

    /// The all-zero statistics of the given mode.
    pub const fn zero(mode: MetricMode) -> Self {
        match mode {
            MetricMode::SpanF1 => InstanceStats::Span { tp: 0, fp: 0, fn_: 0 },
            MetricMode::Accuracy => InstanceStats::Accuracy { correct: 0, total: 0 },
        }
    }

    /// Adds `times` copies of `other`. Both must share a mode; callers check
    /// this once up front so the resampling loops stay branch-light.
    #[inline]
    pub(crate) fn add_scaled(&mut self, other: &InstanceStats, times: u64) {
        match (self, other) {
            (
                InstanceStats::Span { tp, fp, fn_ },
                InstanceStats::Span { tp: otp, fp: ofp, fn_: ofn },
            ) => {
                *tp += otp * times;
                *fp += ofp * times;
                *fn_ += ofn * times;
            }
            (
                InstanceStats::Accuracy { correct, total },
                InstanceStats::Accuracy { correct: oc, total: ot },
            ) => {
                *correct += oc * times;
                *total += ot * times;
            }
            _ => debug_assert!(false, "mixed metric modes"),
        }
    }

    /// The metric value of these statistics, in percentage points.
    ///
    /// Span mode: precision and recall are 0 when their denominator is 0 and
    /// F1 is 0 when `P + R = 0`. Accuracy mode: 0 when `total = 0`.
    #[inline]
    pub fn score(&self) -> Score {
        match *self {
            InstanceStats::Span { tp, fp, fn_ } => {
                let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
                let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
                if precision + recall == 0.0 {
                    0.0
                } else {
                    200.0 * precision * recall / (precision + recall)
                }
            }
            InstanceStats::Accuracy { correct, total } => {
                if total == 0 {
                    0.0
                } else {
                    100.0 * correct as f64 / total as f64
                }
            }
        }
    }
}

/// Component-wise sum of a non-empty, single-mode sequence of statistics.
pub fn aggregate(stats: &[InstanceStats]) -> Result<InstanceStats> {
    let first = stats
        .first()
        .ok_or_else(|| Error::Empty("no instance statistics".into()))?;
    let mode = first.mode();
    let mut acc = InstanceStats::zero(mode);
    for (i, s) in stats.iter().enumerate() {
        if s.mode() != mode {
            return Err(Error::invalid(format!(
                "mixed metric modes: instance {i} is {:?}, expected {mode:?}",
                s.mode()
            )));
        }
        if let InstanceStats::Accuracy { correct, total } = *s {
            if correct > total {
                return Err(Error::invalid(format!(
                    "instance {i}: correct count {correct} exceeds total {total}"
                )));
            }
        }
        acc.add_scaled(s, 1);
    }
    Ok(acc)
}

/// Micro-averaged span F1 over a sequence of span statistics.
pub fn f1_from_stats(stats: &[InstanceStats]) -> Result<Score> {
    let total = aggregate(stats)?;
    if total.mode() != MetricMode::SpanF1 {
        return Err(Error::invalid("f1_from_stats requires span statistics"));
    }
    Ok(total.score())
}

/// Metric of a sequence in whatever mode it carries.
pub fn score_from_stats(stats: &[InstanceStats]) -> Result<Score> {
    Ok(aggregate(stats)?.score())
}

/// Correct/incorrect outcomes of single-decision instances, packed one bit
/// per instance. Equivalent to a sequence of `Accuracy { correct: 0|1,
/// total: 1 }` statistics at a fraction of the memory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryOutcomes {
    words: Vec<u64>,
    len: usize,
}

impl BinaryOutcomes {
    /// All-incorrect outcomes of the given length.
    pub fn new(len: usize) -> Self {
        BinaryOutcomes { words: vec![0; len.div_ceil(64)], len }
    }

    /// All-correct outcomes of the given length.
    pub fn all_correct(len: usize) -> Self {
        let mut out = BinaryOutcomes { words: vec![u64::MAX; len.div_ceil(64)], len };
        out.clear_tail();
        out
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut out = Self::new(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b {
                out.set(i, true);
            }
        }
        out
    }

    fn clear_tail(&mut self) {
        let rem = self.len % 64;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "index {i} out of range for {} outcomes", self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, correct: bool) {
        assert!(i < self.len, "index {i} out of range for {} outcomes", self.len);
        let mask = 1u64 << (i % 64);
        if correct {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn count_correct(&self) -> u64 {
        self.words.iter().map(|w| u64::from(w.count_ones())).sum()
    }

    /// Number of instances where both `self` and `other` are correct.
    pub fn count_both_correct(&self, other: &BinaryOutcomes) -> u64 {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| u64::from((a & b).count_ones()))
            .sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }
}

/// Per-instance statistics of one model on one evaluation set.
#[derive(Clone, Debug, PartialEq)]
pub enum InstanceSeq {
    Stats(Vec<InstanceStats>),
    Binary(BinaryOutcomes),
}

impl InstanceSeq {
    pub fn len(&self) -> usize {
        match self {
            InstanceSeq::Stats(v) => v.len(),
            InstanceSeq::Binary(b) => b.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The metric mode shared by every instance; fails on empty or mixed
    /// sequences.
    pub fn mode(&self) -> Result<MetricMode> {
        match self {
            InstanceSeq::Stats(v) => aggregate(v).map(|s| s.mode()),
            InstanceSeq::Binary(b) if b.is_empty() => {
                Err(Error::Empty("no instance statistics".into()))
            }
            InstanceSeq::Binary(_) => Ok(MetricMode::Accuracy),
        }
    }

    pub fn aggregate(&self) -> Result<InstanceStats> {
        match self {
            InstanceSeq::Stats(v) => aggregate(v),
            InstanceSeq::Binary(b) if b.is_empty() => {
                Err(Error::Empty("no instance statistics".into()))
            }
            InstanceSeq::Binary(b) => InstanceStats::accuracy(b.count_correct(), b.len() as u64),
        }
    }

    pub fn score(&self) -> Result<Score> {
        Ok(self.aggregate()?.score())
    }

    /// Expands to one [`InstanceStats`] per instance.
    pub fn to_stats(&self) -> Vec<InstanceStats> {
        match self {
            InstanceSeq::Stats(v) => v.clone(),
            InstanceSeq::Binary(b) => b
                .iter()
                .map(|c| InstanceStats::Accuracy { correct: u64::from(c), total: 1 })
                .collect(),
        }
    }
}

impl From<Vec<InstanceStats>> for InstanceSeq {
    fn from(v: Vec<InstanceStats>) -> Self {
        InstanceSeq::Stats(v)
    }
}

impl From<BinaryOutcomes> for InstanceSeq {
    fn from(b: BinaryOutcomes) -> Self {
        InstanceSeq::Binary(b)
    }
}

/// One trained model: its dev and test score and, optionally, the
/// per-instance statistics the scores were computed from.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub run_id: String,
    pub dev: Score,
    pub test: Score,
    pub dev_stats: Option<InstanceSeq>,
    pub test_stats: Option<InstanceSeq>,
}

impl RunRecord {
    pub fn new(run_id: impl Into<String>, dev: Score, test: Score) -> Self {
        RunRecord { run_id: run_id.into(), dev, test, dev_stats: None, test_stats: None }
    }

    /// Checks finiteness and, where stats are present, that they reproduce
    /// the stored score within [`CONSISTENCY_TOLERANCE`].
    pub fn validate(&self) -> Result<()> {
        for (name, score, stats) in [
            ("dev", self.dev, &self.dev_stats),
            ("test", self.test, &self.test_stats),
        ] {
            if !score.is_finite() {
                return Err(Error::invalid(format!("run {}: {name} score is not finite", self.run_id)));
            }
            if let Some(stats) = stats {
                let recomputed = stats.score()?;
                if (recomputed - score).abs() > CONSISTENCY_TOLERANCE {
                    return Err(Error::invalid(format!(
                        "run {}: {name} score {score} disagrees with its instance statistics ({recomputed})",
                        self.run_id
                    )));
                }
            }
        }
        Ok(())
    }
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("{what} contains a non-finite value")));
    }
    Ok(())
}

/// Nearest-rank percentile: the element at 1-based position `ceil(q * n)` of
/// the ascending sort. No interpolation, so the result is always a member of
/// `values`.
pub fn percentile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("percentile of an empty sequence".into()));
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::invalid(format!("percentile fraction {q} outside (0, 1]")));
    }
    check_finite(values, "percentile input")?;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    // Guard against q * n landing a hair above an integer, e.g. 0.95 * 20.
    let rank = ((q * sorted.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    Ok(sorted[rank.min(sorted.len()) - 1])
}

/// Ranks (1-based) with ties receiving the mean of the positions they span.
/// Values closer than `tie_eps` to the first member of a run count as tied.
pub fn mid_ranks_with_tolerance(values: &[f64], tie_eps: f64) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let anchor = values[order[start]];
        let mut end = start + 1;
        while end < order.len() && values[order[end]] - anchor <= tie_eps {
            end += 1;
        }
        // positions start+1 ..= end share the average rank
        let rank = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = rank;
        }
        start = end;
    }
    ranks
}

/// Mid-ranks with exact tie detection.
pub fn mid_ranks(values: &[f64]) -> Vec<f64> {
    mid_ranks_with_tolerance(values, 0.0)
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rank correlation: Pearson correlation of the mid-ranks.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::precondition(format!(
            "spearman_rho: length mismatch ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::precondition("spearman_rho needs at least two pairs"));
    }
    check_finite(x, "spearman_rho input")?;
    check_finite(y, "spearman_rho input")?;
    pearson(&mid_ranks(x), &mid_ranks(y))
        .ok_or_else(|| Error::precondition("spearman_rho undefined for constant input"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn f1_examples() {
        assert_eq!(f1_from_stats(&[InstanceStats::span(3, 0, 0)]).unwrap(), 100.0);
        assert_abs_diff_eq!(
            f1_from_stats(&[InstanceStats::span(2, 1, 1)]).unwrap(),
            200.0 / 3.0,
            epsilon = 1e-12
        );
        assert_eq!(f1_from_stats(&[InstanceStats::span(0, 2, 3)]).unwrap(), 0.0);
    }

    #[test]
    fn f1_errors() {
        assert!(matches!(f1_from_stats(&[]), Err(Error::Empty(_))));
        let mixed = [InstanceStats::span(1, 0, 0), InstanceStats::accuracy(1, 1).unwrap()];
        assert!(matches!(f1_from_stats(&mixed), Err(Error::Invalid(_))));
        let acc = [InstanceStats::accuracy(1, 2).unwrap()];
        assert!(f1_from_stats(&acc).is_err());
        assert!(InstanceStats::accuracy(3, 2).is_err());
    }

    #[test]
    fn zero_denominators() {
        // no predictions and no gold spans
        assert_eq!(InstanceStats::span(0, 0, 0).score(), 0.0);
        assert_eq!(InstanceStats::Accuracy { correct: 0, total: 0 }.score(), 0.0);
    }

    #[test]
    fn percentile_examples() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile(&v, 0.95).unwrap(), 95.0);
        assert_eq!(percentile(&[7.0], 0.95).unwrap(), 7.0);
        assert_eq!(percentile(&[5.0; 4], 0.5).unwrap(), 5.0);
        assert_eq!(percentile(&v, 1.0).unwrap(), 100.0);
        let twenty: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(percentile(&twenty, 0.95).unwrap(), 19.0);
    }

    #[test]
    fn percentile_errors() {
        assert!(percentile(&[], 0.5).is_err());
        assert!(percentile(&[1.0], 0.0).is_err());
        assert!(percentile(&[1.0], 1.5).is_err());
        assert!(percentile(&[f64::NAN], 0.5).is_err());
    }

    #[test]
    fn spearman_examples() {
        assert_abs_diff_eq!(spearman_rho(&[1., 2., 3.], &[10., 20., 30.]).unwrap(), 1.0);
        assert_abs_diff_eq!(spearman_rho(&[1., 2., 3.], &[30., 20., 10.]).unwrap(), -1.0);
        assert_abs_diff_eq!(
            spearman_rho(&[1., 2., 3., 4.], &[2., 1., 4., 3.]).unwrap(),
            0.6,
            epsilon = 1e-12
        );
    }

    #[test]
    fn spearman_errors() {
        assert!(spearman_rho(&[1., 2.], &[1.]).is_err());
        assert!(spearman_rho(&[1.], &[1.]).is_err());
        assert!(spearman_rho(&[1., 1., 1.], &[1., 2., 3.]).is_err());
    }

    #[test]
    fn mid_ranks_ties() {
        assert_eq!(mid_ranks(&[10., 20., 20., 30.]), vec![1.0, 2.5, 2.5, 4.0]);
        assert_eq!(mid_ranks(&[3., 3., 3.]), vec![2.0, 2.0, 2.0]);
        assert_eq!(mid_ranks_with_tolerance(&[1.0, 1.0 + 1e-12, 2.0], 1e-9), vec![1.5, 1.5, 3.0]);
    }

    #[test]
    fn binary_outcomes_match_expanded_stats() {
        let bits = [true, false, true, true, false];
        let b = BinaryOutcomes::from_bools(&bits);
        let seq = InstanceSeq::from(b.clone());
        assert_eq!(seq.aggregate().unwrap(), InstanceStats::accuracy(3, 5).unwrap());
        assert_eq!(aggregate(&seq.to_stats()).unwrap(), seq.aggregate().unwrap());
        let all = BinaryOutcomes::all_correct(70);
        assert_eq!(all.count_correct(), 70);
        assert_eq!(all.count_both_correct(&BinaryOutcomes::new(70)), 0);
    }

    #[test]
    fn run_record_consistency() {
        let mut r = RunRecord::new("a", 100.0 * 2.0 / 3.0, 50.0);
        r.dev_stats = Some(vec![InstanceStats::span(2, 1, 1)].into());
        r.test_stats = Some(BinaryOutcomes::from_bools(&[true, false]).into());
        r.validate().unwrap();
        r.test = 51.0;
        assert!(r.validate().is_err());
    }

    fn span_stats() -> impl Strategy<Value = InstanceStats> {
        (0u64..5, 0u64..5, 0u64..5).prop_map(|(tp, fp, fn_)| InstanceStats::span(tp, fp, fn_))
    }

    proptest! {
        #[test]
        fn f1_invariant_under_permutation_and_chunking(
            stats in prop::collection::vec(span_stats(), 1..40),
            split in 0usize..40,
            seed in any::<u64>(),
        ) {
            let whole = f1_from_stats(&stats).unwrap();
            let mut shuffled = stats.clone();
            // deterministic Fisher-Yates from the proptest seed
            let mut s = seed;
            for i in (1..shuffled.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                shuffled.swap(i, (s >> 33) as usize % (i + 1));
            }
            prop_assert_eq!(f1_from_stats(&shuffled).unwrap(), whole);
            let k = split.min(stats.len());
            let mut chunked = Vec::new();
            for part in [&stats[..k], &stats[k..]] {
                if !part.is_empty() {
                    chunked.push(aggregate(part).unwrap());
                }
            }
            prop_assert_eq!(f1_from_stats(&chunked).unwrap(), whole);
        }

        #[test]
        fn percentile_is_member(v in prop::collection::vec(-1e3f64..1e3, 1..60), q in 0.001f64..=1.0) {
            let p = percentile(&v, q).unwrap();
            prop_assert!(v.contains(&p));
        }

        #[test]
        fn spearman_monotone_invariance(
            x in prop::collection::vec(-100f64..100., 3..30),
            y_seed in prop::collection::vec(-100f64..100., 30),
        ) {
            let y = &y_seed[..x.len()];
            if let Ok(rho) = spearman_rho(&x, y) {
                let tx: Vec<f64> = x.iter().map(|v| (v / 10.0).exp() * 3.0).collect();
                let ty: Vec<f64> = y.iter().map(|v| v.powi(3) - 5.0).collect();
                prop_assert!((spearman_rho(&tx, &ty).unwrap() - rho).abs() < 1e-12);
                prop_assert!((spearman_rho(&x, &x).unwrap() - 1.0).abs() < 1e-12);
            }
        }
    }
}
