//! Comparing learning approaches through the distribution of their scores.
//!
//! * [`metric`]: span F1 and accuracy over per-instance statistics,
//!   percentiles and Spearman's ρ.
//! * [`conll`]: CoNLL column files, span extraction and score tables.
//! * [`sigtest`]: paired resampling tests and score-sample tests.
//! * [`protocols`]: Evaluations 1 to 4 over matrices of training runs.
//! * [`predint`]: dev→test regression and its prediction interval.
//! * [`synthgen`]: synthetic populations of twin approaches.

pub mod conll;
pub mod error;
pub mod metric;
pub mod predint;
pub mod protocols;
pub mod rng;
pub mod sigtest;
pub mod special;
pub mod synthgen;

pub use error::{Error, Result};
pub use metric::{InstanceSeq, InstanceStats, MetricMode, RunRecord, Score};
pub use protocols::{PairedTest, Protocol, ProtocolReport, ScoreMatrix};
pub use sigtest::{Direction, Method, SigTestResult, Verdict};
pub use synthgen::{InstanceModel, SyntheticConfig};
