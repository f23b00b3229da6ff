//! The four evaluation protocols and the summary statistics reported for
//! them.
//!
//! A [`ScoreMatrix`] holds `R` independent trials (rows) of `n` training runs
//! (columns) for one approach. Evaluations 1 and 2 compare single models per
//! row with a paired test on instance statistics; Evaluations 3 and 4 compare
//! the score samples of two approaches.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{percentile, spearman_rho, InstanceSeq, MetricMode, RunRecord, Score};
use crate::rng::derive_seed;
use crate::sigtest::{
    exact_randomization, mann_whitney_u, welch_t, wilcoxon_signed_rank, PairedSample, SigTestResult,
    DEFAULT_EXACT_MAX_N,
};

/// Band of p-values whose score gaps define the threshold τ.
pub const TAU_BAND: (f64, f64) = (0.04, 0.05);

/// Minimum sample size per side for Evaluation 4: with 5 runs the smallest
/// attainable two-tailed p of the exact rank tests is 0.0625.
pub const MIN_EVAL4_RUNS: usize = 6;

/// Dense `rows × cols` grid of training runs of one approach, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMatrix {
    approach_id: String,
    rows: usize,
    cols: usize,
    cells: Vec<RunRecord>,
}

impl ScoreMatrix {
    pub fn new(approach_id: impl Into<String>, rows: usize, cols: usize, cells: Vec<RunRecord>) -> Result<Self> {
        let approach_id = approach_id.into();
        if rows == 0 || cols == 0 {
            return Err(Error::Empty(format!("score matrix {approach_id} has no cells")));
        }
        if cells.len() != rows * cols {
            return Err(Error::invalid(format!(
                "score matrix {approach_id}: expected {rows}x{cols} = {} cells, got {}",
                rows * cols,
                cells.len()
            )));
        }
        let mut mode: Option<MetricMode> = None;
        for cell in &cells {
            cell.validate()?;
            for seq in [&cell.dev_stats, &cell.test_stats].into_iter().flatten() {
                let m = seq.mode()?;
                if *mode.get_or_insert(m) != m {
                    return Err(Error::invalid(format!("score matrix {approach_id} mixes metric modes")));
                }
            }
        }
        Ok(ScoreMatrix { approach_id, rows, cols, cells })
    }

    /// Builds a matrix from plain `(dev, test)` scores without instance
    /// statistics.
    pub fn from_scores(
        approach_id: impl Into<String>,
        rows: usize,
        cols: usize,
        scores: impl IntoIterator<Item = (Score, Score)>,
    ) -> Result<Self> {
        let approach_id = approach_id.into();
        let cells = scores
            .into_iter()
            .enumerate()
            .map(|(k, (dev, test))| {
                RunRecord::new(format!("{approach_id}[{},{}]", k / cols.max(1) + 1, k % cols.max(1) + 1), dev, test)
            })
            .collect();
        ScoreMatrix::new(approach_id, rows, cols, cells)
    }

    pub fn approach_id(&self) -> &str {
        &self.approach_id
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Row `j` (0-based).
    pub fn row(&self, j: usize) -> &[RunRecord] {
        &self.cells[j * self.cols..(j + 1) * self.cols]
    }

    /// Cell in row `j`, column `i` (both 0-based).
    pub fn cell(&self, j: usize, i: usize) -> &RunRecord {
        &self.row(j)[i]
    }

    pub fn cells(&self) -> &[RunRecord] {
        &self.cells
    }

    /// Copy of the first `rows` rows.
    pub fn first_rows(&self, rows: usize) -> Result<ScoreMatrix> {
        if rows == 0 || rows > self.rows {
            return Err(Error::precondition(format!("cannot take {rows} of {} rows", self.rows)));
        }
        Ok(ScoreMatrix {
            approach_id: self.approach_id.clone(),
            rows,
            cols: self.cols,
            cells: self.cells[..rows * self.cols].to_vec(),
        })
    }

    fn check_same_shape(&self, other: &ScoreMatrix) -> Result<()> {
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return Err(Error::precondition(format!(
                "matrices {} ({}x{}) and {} ({}x{}) differ in shape",
                self.approach_id, self.rows, self.cols, other.approach_id, other.rows, other.cols
            )));
        }
        Ok(())
    }

    fn check_width(&self, n: usize) -> Result<()> {
        if n == 0 || n > self.cols {
            return Err(Error::precondition(format!(
                "n = {n} is outside 1..={} (matrix width)",
                self.cols
            )));
        }
        Ok(())
    }
}

/// Paired significance test on the instance statistics of two models.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum PairedTest {
    Bootstrap { resamples: u64 },
    ApproxRandomization { resamples: u64 },
    ExactRandomization { max_n: usize },
}

impl PairedTest {
    pub fn run(&self, a: &InstanceSeq, b: &InstanceSeq, seed: u64) -> Result<SigTestResult> {
        match *self {
            PairedTest::Bootstrap { resamples } => PairedSample::from_seqs(a, b)?.bootstrap(resamples, seed),
            PairedTest::ApproxRandomization { resamples } => {
                PairedSample::from_seqs(a, b)?.approx_randomization(resamples, seed)
            }
            PairedTest::ExactRandomization { max_n } => exact_randomization(&a.to_stats(), &b.to_stats(), max_n),
        }
    }
}

impl Default for PairedTest {
    fn default() -> Self {
        PairedTest::Bootstrap { resamples: 10_000 }
    }
}

impl PairedTest {
    pub fn exact() -> Self {
        PairedTest::ExactRandomization { max_n: DEFAULT_EXACT_MAX_N }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Eval1,
    Eval2,
    Eval3,
    Eval4,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Eval1 => "eval1",
            Protocol::Eval2 => "eval2",
            Protocol::Eval3 => "eval3",
            Protocol::Eval4 => "eval4",
        })
    }
}

/// Summary of one protocol over all trials. Score differences are in
/// percentage points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    pub protocol: Protocol,
    /// Fraction of trials with a significant difference; absent when no
    /// significance test was run.
    pub pct_significant: Option<f64>,
    /// Mean test-score gap over trials with p in (0.04, 0.05).
    pub tau: Option<f64>,
    pub delta95_dev: Option<f64>,
    pub delta95_test: f64,
    pub delta_max: f64,
    /// Spearman ρ between dev and test scores over all cells of matrix a.
    pub spearman_dev_test: Option<f64>,
    /// The same over the cells of both matrices.
    pub spearman_pooled: Option<f64>,
    pub trials: usize,
    pub p_threshold: f64,
    /// Runs per approach entering each trial.
    pub models_per_side: usize,
}

/// One trial of a protocol: the score gap and, if tested, the test result.
struct Trial {
    delta_dev: f64,
    delta_test: f64,
    result: Option<SigTestResult>,
}

/// Best run by dev score; ties go to the lowest column.
pub fn select_best(row: &[RunRecord]) -> Result<&RunRecord> {
    let mut best = row.first().ok_or_else(|| Error::Empty("select_best on an empty row".into()))?;
    for rec in &row[1..] {
        if rec.dev > best.dev {
            best = rec;
        }
    }
    Ok(best)
}

fn compare_records(a: &RunRecord, b: &RunRecord, test: Option<&PairedTest>, seed: u64) -> Result<Trial> {
    let result = match test {
        None => None,
        Some(t) => {
            let (Some(sa), Some(sb)) = (&a.test_stats, &b.test_stats) else {
                return Err(Error::precondition(format!(
                    "paired test between {} and {} needs test instance statistics on both runs",
                    a.run_id, b.run_id
                )));
            };
            Some(t.run(sa, sb, seed)?)
        }
    };
    Ok(Trial { delta_dev: (a.dev - b.dev).abs(), delta_test: (a.test - b.test).abs(), result })
}

fn check_threshold(p_threshold: f64) -> Result<()> {
    if !(p_threshold > 0.0 && p_threshold <= 1.0) {
        return Err(Error::invalid(format!("p threshold {p_threshold} outside (0, 1]")));
    }
    Ok(())
}

fn optional_spearman(cells: impl Iterator<Item = (f64, f64)>) -> Option<f64> {
    let (dev, test): (Vec<f64>, Vec<f64>) = cells.unzip();
    spearman_rho(&dev, &test).ok()
}

fn summarize(
    protocol: Protocol,
    trials: &[Trial],
    p_threshold: f64,
    models_per_side: usize,
    with_dev: bool,
) -> Result<ProtocolReport> {
    let delta_test: Vec<f64> = trials.iter().map(|t| t.delta_test).collect();
    let delta_dev: Vec<f64> = trials.iter().map(|t| t.delta_dev).collect();
    let tested = trials.iter().all(|t| t.result.is_some());
    let (pct_significant, tau) = if tested {
        let significant = trials.iter().filter(|t| t.result.as_ref().unwrap().is_significant(p_threshold)).count();
        let band: Vec<f64> = trials
            .iter()
            .filter(|t| {
                let p = t.result.as_ref().unwrap().p_value;
                p > TAU_BAND.0 && p < TAU_BAND.1
            })
            .map(|t| t.delta_test)
            .collect();
        let tau = (!band.is_empty()).then(|| band.iter().sum::<f64>() / band.len() as f64);
        (Some(significant as f64 / trials.len() as f64), tau)
    } else {
        (None, None)
    };
    Ok(ProtocolReport {
        protocol,
        pct_significant,
        tau,
        delta95_dev: if with_dev { Some(percentile(&delta_dev, 0.95)?) } else { None },
        delta95_test: percentile(&delta_test, 0.95)?,
        delta_max: delta_test.iter().copied().fold(0.0, f64::max),
        spearman_dev_test: None,
        spearman_pooled: None,
        trials: trials.len(),
        p_threshold,
        models_per_side,
    })
}

/// Evaluation 1: one model per approach. Every cell pair
/// `(a[j][i], b[j][i])` is a trial; the pair is tested with `test` on its
/// test instance statistics using the seed derived from `(seed, [j, i])`.
/// Without a test only the score gaps are reported.
pub fn run_eval1(
    a: &ScoreMatrix,
    b: &ScoreMatrix,
    test: Option<PairedTest>,
    p_threshold: f64,
    seed: u64,
) -> Result<ProtocolReport> {
    a.check_same_shape(b)?;
    check_threshold(p_threshold)?;
    let per_row: Vec<Vec<Trial>> = (0..a.rows)
        .into_par_iter()
        .map(|j| {
            (0..a.cols)
                .map(|i| {
                    let cell_seed = derive_seed(seed, &[j as u64, i as u64]);
                    compare_records(a.cell(j, i), b.cell(j, i), test.as_ref(), cell_seed)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let trials: Vec<Trial> = per_row.into_iter().flatten().collect();
    summarize(Protocol::Eval1, &trials, p_threshold, 1, false)
}

fn eval2_trials(
    a: &ScoreMatrix,
    b: &ScoreMatrix,
    n: usize,
    test: Option<&PairedTest>,
    seed: u64,
) -> Result<Vec<Trial>> {
    (0..a.rows)
        .into_par_iter()
        .map(|j| {
            let best_a = select_best(&a.row(j)[..n])?;
            let best_b = select_best(&b.row(j)[..n])?;
            compare_records(best_a, best_b, test, derive_seed(seed, &[j as u64, 0]))
        })
        .collect()
}

/// Evaluation 2: per row, the best-on-dev model of each approach among all
/// columns is selected and the two are tested. The row seed is derived from
/// `(seed, [j, 0])`, so a one-column matrix reproduces Evaluation 1.
pub fn run_eval2(
    a: &ScoreMatrix,
    b: &ScoreMatrix,
    test: Option<PairedTest>,
    p_threshold: f64,
    seed: u64,
) -> Result<ProtocolReport> {
    run_eval2_n(a, b, a.cols, test, p_threshold, seed)
}

/// [`run_eval2`] restricted to the first `n` columns.
pub fn run_eval2_n(
    a: &ScoreMatrix,
    b: &ScoreMatrix,
    n: usize,
    test: Option<PairedTest>,
    p_threshold: f64,
    seed: u64,
) -> Result<ProtocolReport> {
    a.check_same_shape(b)?;
    a.check_width(n)?;
    check_threshold(p_threshold)?;
    let trials = eval2_trials(a, b, n, test.as_ref(), seed)?;
    let mut report = summarize(Protocol::Eval2, &trials, p_threshold, n, true)?;
    report.spearman_dev_test = optional_spearman(leading_scores(a, n));
    report.spearman_pooled = optional_spearman(leading_scores(a, n).chain(leading_scores(b, n)));
    Ok(report)
}

/// `(dev, test)` of the first `n` runs of every row.
fn leading_scores(m: &ScoreMatrix, n: usize) -> impl Iterator<Item = (f64, f64)> + '_ {
    (0..m.rows).flat_map(move |j| m.row(j)[..n].iter().map(|r| (r.dev, r.test)))
}

/// Evaluation 3: Welch's t-test on the two samples of test scores.
pub fn run_eval3(a_scores: &[Score], b_scores: &[Score]) -> Result<SigTestResult> {
    welch_t(a_scores, b_scores)
}

/// Evaluation 4: Wilcoxon signed-rank for matched runs, Mann-Whitney U for
/// independent ones. Needs at least [`MIN_EVAL4_RUNS`] scores per side.
pub fn run_eval4(a_scores: &[Score], b_scores: &[Score], paired: bool) -> Result<SigTestResult> {
    let smallest = a_scores.len().min(b_scores.len());
    if smallest < MIN_EVAL4_RUNS {
        return Err(Error::precondition(format!(
            "Evaluation 4 needs at least {MIN_EVAL4_RUNS} models per approach: with {smallest} the \
             two-tailed rank test can never reach p < 0.05"
        )));
    }
    if paired {
        wilcoxon_signed_rank(a_scores, b_scores)
    } else {
        mann_whitney_u(a_scores, b_scores)
    }
}

fn sample_trials(
    a: &ScoreMatrix,
    b: &ScoreMatrix,
    n: usize,
    test: impl Fn(&[Score], &[Score]) -> Result<SigTestResult> + Sync,
) -> Result<Vec<Trial>> {
    (0..a.rows)
        .into_par_iter()
        .map(|j| {
            let xa: Vec<Score> = a.row(j)[..n].iter().map(|r| r.test).collect();
            let xb: Vec<Score> = b.row(j)[..n].iter().map(|r| r.test).collect();
            let da: Vec<Score> = a.row(j)[..n].iter().map(|r| r.dev).collect();
            let db: Vec<Score> = b.row(j)[..n].iter().map(|r| r.dev).collect();
            Ok(Trial {
                delta_dev: (mean(&da) - mean(&db)).abs(),
                delta_test: (mean(&xa) - mean(&xb)).abs(),
                result: Some(test(&xa, &xb)?),
            })
        })
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Evaluation 3 on every row of two matrices, each row's first `n` test
/// scores forming the samples. The Δ statistics refer to the differences of
/// the sample means.
pub fn run_eval3_matrix(a: &ScoreMatrix, b: &ScoreMatrix, n: usize, p_threshold: f64) -> Result<ProtocolReport> {
    a.check_same_shape(b)?;
    a.check_width(n)?;
    check_threshold(p_threshold)?;
    let trials = sample_trials(a, b, n, run_eval3)?;
    summarize(Protocol::Eval3, &trials, p_threshold, n, true)
}

/// Evaluation 4 on every row of two matrices; see [`run_eval3_matrix`].
pub fn run_eval4_matrix(
    a: &ScoreMatrix,
    b: &ScoreMatrix,
    n: usize,
    paired: bool,
    p_threshold: f64,
) -> Result<ProtocolReport> {
    a.check_same_shape(b)?;
    a.check_width(n)?;
    check_threshold(p_threshold)?;
    let trials = sample_trials(a, b, n, |x, y| run_eval4(x, y, paired))?;
    summarize(Protocol::Eval4, &trials, p_threshold, n, true)
}

/// Fraction of significant Evaluation 2 comparisons for each `n`, using the
/// first `n` columns of both matrices.
pub fn sweep_n(
    a: &ScoreMatrix,
    b: &ScoreMatrix,
    n_values: &[usize],
    test: PairedTest,
    p_threshold: f64,
    seed: u64,
) -> Result<Vec<(usize, f64)>> {
    a.check_same_shape(b)?;
    n_values.iter().try_for_each(|&n| a.check_width(n))?;
    check_threshold(p_threshold)?;
    n_values
        .iter()
        .map(|&n| {
            let trials = eval2_trials(a, b, n, Some(&test), seed)?;
            let significant =
                trials.iter().filter(|t| t.result.as_ref().is_some_and(|r| r.is_significant(p_threshold))).count();
            Ok((n, significant as f64 / trials.len() as f64))
        })
        .collect()
}

/// For each `n`: the 95th percentile over rows of `|mean(first n test
/// scores of a) - mean(first n test scores of b)|`.
pub fn mean_delta95(a: &ScoreMatrix, b: &ScoreMatrix, n_values: &[usize]) -> Result<Vec<(usize, f64)>> {
    a.check_same_shape(b)?;
    n_values.iter().try_for_each(|&n| a.check_width(n))?;
    n_values
        .iter()
        .map(|&n| {
            let diffs: Vec<f64> = (0..a.rows)
                .map(|j| {
                    let ma = a.row(j)[..n].iter().map(|r| r.test).sum::<f64>() / n as f64;
                    let mb = b.row(j)[..n].iter().map(|r| r.test).sum::<f64>() / n as f64;
                    (ma - mb).abs()
                })
                .collect();
            Ok((n, percentile(&diffs, 0.95)?))
        })
        .collect()
}
