//! Hypothesis tests used by the evaluation protocols.
//!
//! Paired resampling tests over per-instance statistics
//! ([`paired_bootstrap`], [`approx_randomization`], [`exact_randomization`])
//! compare two *models* on the same test set. The score-sample tests
//! ([`welch_t`], [`wilcoxon_signed_rank`], [`mann_whitney_u`]) compare two
//! *approaches* through samples of scores from repeated training runs.

use std::fmt;

use serde::{Deserialize, Serialize};

mod parametric;
mod rank;
mod resampling;

pub use parametric::welch_t;
pub use rank::{mann_whitney_u, wilcoxon_signed_rank, EXACT_MANN_WHITNEY_MAX_PRODUCT, EXACT_WILCOXON_MAX_N};
pub use resampling::{
    approx_randomization, exact_randomization, paired_bootstrap, PairedSample, DEFAULT_EXACT_MAX_N,
    MIN_BOOTSTRAP_RESAMPLES, SCORE_EPS,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Bootstrap,
    ApproxRand,
    ExactRand,
    WelchT,
    Wilcoxon,
    MannWhitney,
}

impl Method {
    pub fn is_resampling(self) -> bool {
        matches!(self, Method::Bootstrap | Method::ApproxRand)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Bootstrap => "bootstrap",
            Method::ApproxRand => "approx_rand",
            Method::ExactRand => "exact_rand",
            Method::WelchT => "welch_t",
            Method::Wilcoxon => "wilcoxon",
            Method::MannWhitney => "mann_whitney",
        })
    }
}

/// Which side the observed effect favours, independent of significance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    AGreater,
    BGreater,
    Equal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    ASuperior,
    BSuperior,
    NotSignificant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigTestResult {
    pub method: Method,
    /// Observed test statistic: the signed score difference `a - b` for the
    /// paired resampling tests, `t` for Welch, `W = min(W+, W-)` for
    /// Wilcoxon and `U = min(Ux, Uy)` for Mann-Whitney.
    pub statistic: f64,
    pub p_value: f64,
    pub direction: Direction,
    /// Present iff the method draws random resamples.
    pub resamples: Option<u64>,
    pub seed: Option<u64>,
}

impl SigTestResult {
    /// A difference is significant when `p < threshold` and the observed
    /// effect has a direction. Zero observed difference is never significant.
    pub fn is_significant(&self, threshold: f64) -> bool {
        self.p_value < threshold && self.direction != Direction::Equal
    }

    pub fn verdict(&self, threshold: f64) -> Verdict {
        if !self.is_significant(threshold) {
            return Verdict::NotSignificant;
        }
        match self.direction {
            Direction::AGreater => Verdict::ASuperior,
            Direction::BGreater => Verdict::BSuperior,
            Direction::Equal => Verdict::NotSignificant,
        }
    }
}

pub(crate) fn direction_of(diff: f64) -> Direction {
    if diff > 0.0 {
        Direction::AGreater
    } else if diff < 0.0 {
        Direction::BGreater
    } else {
        Direction::Equal
    }
}
