//! Synthetic populations of trained models.
//!
//! Each model has a true score `Ψ_true ~ Normal(true_mean, true_sd)`; its dev
//! and test scores add the sampling noise of finite evaluation sets,
//! `Ψ_dev = Ψ_true + X_dev` and `Ψ_test = Ψ_true + X_test`. Two matrices
//! drawn from the same generator play the roles of two approaches that are
//! in truth equally good.

use std::path::Path;

use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Binomial, Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{BinaryOutcomes, InstanceSeq, RunRecord, Score};
use crate::protocols::ScoreMatrix;
use crate::rng::{stream, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceModel {
    /// Every dev/test instance is an independent Bernoulli trial with success
    /// probability `Ψ_true / 100`; scores are accuracies and runs carry their
    /// instance outcomes.
    BernoulliAccuracy,
    /// Normal noise with the standard deviation of the Bernoulli accuracy at
    /// the same set size; no instance statistics.
    GaussianAdditive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub true_mean: Score,
    pub true_sd: Score,
    pub dev_size: u64,
    pub test_size: u64,
    pub rows: usize,
    pub cols: usize,
    pub seed: u64,
    pub instance_model: InstanceModel,
    /// Keep dev instance outcomes on each run (bernoulli mode). Test
    /// outcomes are always kept since the paired tests need them.
    #[serde(default)]
    pub keep_dev_stats: bool,
}

impl SyntheticConfig {
    /// Calibrated so that the 95th percentile of single-run test-score
    /// differences between the twin approaches is about 0.8 points.
    pub fn conll_ner_like() -> Self {
        SyntheticConfig {
            true_mean: 91.0,
            true_sd: 0.235,
            dev_size: 30_000,
            test_size: 30_000,
            rows: 500,
            cols: 50,
            seed: 1,
            instance_model: InstanceModel::BernoulliAccuracy,
            keep_dev_stats: false,
        }
    }

    /// Named presets accepted by [`SyntheticConfig::preset`].
    pub const PRESETS: [&'static str; 1] = ["conll-ner-like"];

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "conll-ner-like" => Some(Self::conll_ner_like()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.true_mean.is_finite() {
            return Err(Error::invalid("true_mean must be finite"));
        }
        if !(self.true_sd >= 0.0 && self.true_sd.is_finite()) {
            return Err(Error::invalid(format!("true_sd must be a finite value >= 0, got {}", self.true_sd)));
        }
        if self.dev_size == 0 || self.test_size == 0 {
            return Err(Error::invalid("dev_size and test_size must be at least 1"));
        }
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::invalid("rows and cols must be at least 1"));
        }
        Ok(())
    }

    /// Parses `key = value` lines (TOML syntax).
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SyntheticConfig = toml::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }
}

/// Two equally good approaches plus the true score of every run, row-major.
#[derive(Clone, Debug)]
pub struct TwinPopulation {
    pub a: ScoreMatrix,
    pub b: ScoreMatrix,
    pub true_a: Vec<Score>,
    pub true_b: Vec<Score>,
}

impl TwinPopulation {
    pub fn into_matrices(self) -> (ScoreMatrix, ScoreMatrix) {
        (self.a, self.b)
    }
}

/// `size` Bernoulli outcomes with success probability `p`: the number of
/// successes is binomial, and given that number every arrangement is equally
/// likely, so only the positions of the rarer outcome are drawn.
fn bernoulli_outcomes(rng: &mut Rng, size: u64, p: f64) -> BinaryOutcomes {
    let correct = binomial_count(rng, size, p);
    let len = size as usize;
    let flip = correct > size / 2;
    let (mut bits, rare) =
        if flip { (BinaryOutcomes::all_correct(len), size - correct) } else { (BinaryOutcomes::new(len), correct) };
    for i in index::sample(rng, len, rare as usize) {
        bits.set(i, !flip);
    }
    bits
}

fn binomial_count(rng: &mut Rng, size: u64, p: f64) -> u64 {
    if p <= 0.0 {
        0
    } else if p >= 1.0 {
        size
    } else {
        Binomial::new(size, p).expect("p in (0, 1)").sample(rng)
    }
}

fn accuracy(correct: u64, size: u64) -> Score {
    100.0 * correct as f64 / size as f64
}

/// One run: its true score and record. The true score is drawn from the
/// stream of `(seed, [side, row, col])`, the dev and test noise from its
/// sub-streams `0` and `1`.
fn generate_run(cfg: &SyntheticConfig, side: u64, row: usize, col: usize) -> (Score, RunRecord) {
    let path = [side, row as u64, col as u64];
    let mut rng = stream(cfg.seed, &path);
    let true_score = if cfg.true_sd > 0.0 {
        Normal::new(cfg.true_mean, cfg.true_sd).expect("valid sd").sample(&mut rng)
    } else {
        cfg.true_mean
    };
    let mut dev_rng = stream(cfg.seed, &[path[0], path[1], path[2], 0]);
    let mut test_rng = stream(cfg.seed, &[path[0], path[1], path[2], 1]);
    let id = format!("{}[{},{}]", if side == 0 { "A" } else { "B" }, row + 1, col + 1);
    match cfg.instance_model {
        InstanceModel::BernoulliAccuracy => {
            let true_score = true_score.clamp(0.0, 100.0);
            let p = true_score / 100.0;
            let (dev, dev_stats) = if cfg.keep_dev_stats {
                let bits = bernoulli_outcomes(&mut dev_rng, cfg.dev_size, p);
                (accuracy(bits.count_correct(), cfg.dev_size), Some(InstanceSeq::Binary(bits)))
            } else {
                (accuracy(binomial_count(&mut dev_rng, cfg.dev_size, p), cfg.dev_size), None)
            };
            let test_bits = bernoulli_outcomes(&mut test_rng, cfg.test_size, p);
            let test = accuracy(test_bits.count_correct(), cfg.test_size);
            let mut record = RunRecord::new(id, dev, test);
            record.dev_stats = dev_stats;
            record.test_stats = Some(InstanceSeq::Binary(test_bits));
            (true_score, record)
        }
        InstanceModel::GaussianAdditive => {
            let p = (true_score / 100.0).clamp(0.0, 1.0);
            let noisy = |rng: &mut Rng, size: u64| {
                let z: f64 = rng.sample(StandardNormal);
                true_score + 100.0 * (p * (1.0 - p) / size as f64).sqrt() * z
            };
            let dev = noisy(&mut dev_rng, cfg.dev_size);
            let test = noisy(&mut test_rng, cfg.test_size);
            (true_score, RunRecord::new(id, dev, test))
        }
    }
}

fn generate_side(cfg: &SyntheticConfig, side: u64) -> Result<(ScoreMatrix, Vec<Score>)> {
    let runs: Vec<(Score, RunRecord)> = (0..cfg.rows)
        .into_par_iter()
        .flat_map_iter(|j| (0..cfg.cols).map(move |i| generate_run(cfg, side, j, i)))
        .collect();
    let (truth, cells): (Vec<Score>, Vec<RunRecord>) = runs.into_iter().unzip();
    let name = if side == 0 { "A" } else { "B" };
    Ok((ScoreMatrix::new(name, cfg.rows, cfg.cols, cells)?, truth))
}

/// Draws both approaches' matrices. Every run has its own random stream, so
/// the output does not depend on thread scheduling, and a population with
/// more rows extends one with fewer.
pub fn generate_population(cfg: &SyntheticConfig) -> Result<TwinPopulation> {
    cfg.validate()?;
    let (a, true_a) = generate_side(cfg, 0)?;
    let (b, true_b) = generate_side(cfg, 1)?;
    Ok(TwinPopulation { a, b, true_a, true_b })
}

/// Noise terms of a run with known true score: `(dev - true, test - true)`.
pub fn decompose(record: &RunRecord, true_score: Score) -> (Score, Score) {
    (record.dev - true_score, record.test - true_score)
}

/// Inverse of [`decompose`]: the run whose noise terms are `x_dev`, `x_test`.
pub fn compose(run_id: impl Into<String>, true_score: Score, x_dev: Score, x_test: Score) -> RunRecord {
    RunRecord::new(run_id, true_score + x_dev, true_score + x_test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::spearman_rho;

    fn small(model: InstanceModel) -> SyntheticConfig {
        SyntheticConfig {
            true_mean: 91.0,
            true_sd: 0.3,
            dev_size: 500,
            test_size: 700,
            rows: 4,
            cols: 5,
            seed: 99,
            instance_model: model,
            keep_dev_stats: true,
        }
    }

    #[test]
    fn gaussian_large_sets_track_true_mean() {
        let cfg = SyntheticConfig {
            true_sd: 0.0,
            dev_size: 1_000_000,
            test_size: 1_000_000,
            rows: 10,
            cols: 10,
            instance_model: InstanceModel::GaussianAdditive,
            ..small(InstanceModel::GaussianAdditive)
        };
        let pop = generate_population(&cfg).unwrap();
        for m in [&pop.a, &pop.b] {
            assert!(m.cells().iter().all(|r| (r.test - 91.0).abs() < 0.1 && r.test_stats.is_none()));
        }
    }

    #[test]
    fn single_instance_sets() {
        let cfg = SyntheticConfig { dev_size: 1, test_size: 1, ..small(InstanceModel::BernoulliAccuracy) };
        let pop = generate_population(&cfg).unwrap();
        for r in pop.a.cells().iter().chain(pop.b.cells()) {
            assert!(r.dev == 0.0 || r.dev == 100.0);
            assert!(r.test == 0.0 || r.test == 100.0);
        }
    }

    #[test]
    fn worked_example() {
        let r = compose("A1", 80.0, -2.0, 1.0);
        assert_eq!((r.dev, r.test), (78.0, 81.0));
        assert_eq!(decompose(&r, 80.0), (-2.0, 1.0));
        let a2 = RunRecord::new("A2", 78.0, 75.0);
        assert_eq!(decompose(&a2, 76.0), (2.0, -1.0));
        let exact = RunRecord::new("x", 90.0, 90.0);
        assert_eq!(decompose(&exact, 90.0), (0.0, 0.0));
    }

    #[test]
    fn deterministic_and_consistent() {
        let cfg = small(InstanceModel::BernoulliAccuracy);
        let (p, q) = (generate_population(&cfg).unwrap(), generate_population(&cfg).unwrap());
        assert_eq!(p.a, q.a);
        assert_eq!(p.b, q.b);
        assert_ne!(p.a.cells()[0].test, p.b.cells()[0].test);
        for r in p.a.cells() {
            r.validate().unwrap();
            assert_eq!(r.test_stats.as_ref().unwrap().len(), 700);
            assert_eq!(r.dev_stats.as_ref().unwrap().len(), 500);
        }
    }

    #[test]
    fn dev_stats_flag_does_not_change_scores() {
        let with = generate_population(&small(InstanceModel::BernoulliAccuracy)).unwrap();
        let cfg = SyntheticConfig { keep_dev_stats: false, ..small(InstanceModel::BernoulliAccuracy) };
        let without = generate_population(&cfg).unwrap();
        for (x, y) in with.a.cells().iter().zip(without.a.cells()) {
            assert_eq!((x.dev, x.test), (y.dev, y.test));
            assert_eq!(x.test_stats, y.test_stats);
            assert!(y.dev_stats.is_none());
        }
    }

    #[test]
    fn more_rows_extend_fewer() {
        let cfg = small(InstanceModel::BernoulliAccuracy);
        let tall = SyntheticConfig { rows: 9, ..cfg.clone() };
        let (p, q) = (generate_population(&cfg).unwrap(), generate_population(&tall).unwrap());
        assert_eq!(p.a.cells(), &q.a.cells()[..20]);
        assert_eq!(p.true_b, q.true_b[..20]);
    }

    #[test]
    fn noise_terms_are_unbiased() {
        let cfg = SyntheticConfig { rows: 100, cols: 100, keep_dev_stats: false, ..small(InstanceModel::BernoulliAccuracy) };
        let pop = generate_population(&cfg).unwrap();
        let x: Vec<f64> = pop.a.cells().iter().zip(&pop.true_a).map(|(r, t)| decompose(r, *t).0).collect();
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!(mean.abs() < 3.0 * sd / n.sqrt(), "mean {mean}, se {}", sd / n.sqrt());
        // binomial sampling noise of a 500-instance set around 91%
        assert!((sd - 100.0 * (0.91f64 * 0.09 / 500.0).sqrt()).abs() < 0.05);
    }

    fn mean_rho(true_sd: f64, size: u64) -> f64 {
        (0..20)
            .map(|rep| {
                let cfg = SyntheticConfig {
                    true_sd,
                    dev_size: size,
                    test_size: size,
                    rows: 10,
                    cols: 30,
                    seed: rep,
                    instance_model: InstanceModel::GaussianAdditive,
                    ..small(InstanceModel::GaussianAdditive)
                };
                let pop = generate_population(&cfg).unwrap();
                let (dev, test): (Vec<f64>, Vec<f64>) = pop.a.cells().iter().map(|r| (r.dev, r.test)).unzip();
                spearman_rho(&dev, &test).unwrap()
            })
            .sum::<f64>()
            / 20.0
    }

    #[test]
    fn dev_test_correlation_follows_the_variance_split() {
        let rhos: Vec<f64> = [0.05, 0.2, 0.5].iter().map(|&sd| mean_rho(sd, 10_000)).collect();
        assert!(rhos[0] < rhos[1] && rhos[1] < rhos[2], "{rhos:?}");
        let rhos: Vec<f64> = [100_000, 10_000, 1_000].iter().map(|&n| mean_rho(0.2, n)).collect();
        assert!(rhos[0] > rhos[1] && rhos[1] > rhos[2], "{rhos:?}");
    }

    #[test]
    fn config_round_trip_and_validation() {
        let cfg = SyntheticConfig::conll_ner_like();
        assert_eq!(SyntheticConfig::from_toml_str(&cfg.to_toml_string()).unwrap(), cfg);
        let text = "true_mean = 80.0\ntrue_sd = 1.0\ndev_size = 10\ntest_size = 10\nrows = 2\ncols = 3\n\
                    seed = 5\ninstance_model = \"gaussian_additive\"\n";
        let parsed = SyntheticConfig::from_toml_str(text).unwrap();
        assert!(!parsed.keep_dev_stats);
        assert!(SyntheticConfig::from_toml_str(&text.replace("rows = 2", "rows = 0")).is_err());
        assert!(SyntheticConfig::from_toml_str(&text.replace("true_sd = 1.0", "true_sd = -1.0")).is_err());
        assert!(SyntheticConfig::from_toml_str(&format!("{text}bogus = 1\n")).is_err());
        assert!(SyntheticConfig::from_toml_str("true_mean = 1").is_err());
        assert_eq!(SyntheticConfig::preset("conll-ner-like"), Some(cfg));
    }

    #[test]
    fn calibration_record_matches_preset() {
        let record: toml::Table = toml::from_str(include_str!("../calibration/conll-ner-like.toml")).unwrap();
        let config: SyntheticConfig = record["config"].clone().try_into().unwrap();
        assert_eq!(config, SyntheticConfig::conll_ner_like());
        // column 1 alone draws the same runs as column 1 of the full matrix
        let pop = generate_population(&SyntheticConfig { cols: 1, ..config }).unwrap();
        let d95 = crate::protocols::mean_delta95(&pop.a, &pop.b, &[1]).unwrap()[0].1;
        assert_eq!(d95, record["measured"]["delta95_test_column1"].as_float().unwrap());
    }
}
