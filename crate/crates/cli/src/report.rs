use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use scoredist::predint::LinearFit;
use scoredist::{PairedTest, ProtocolReport, SigTestResult, Verdict};

pub const SCHEMA_VERSION: &str = "1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub name: String,
    pub sha256: String,
}

impl InputDigest {
    pub fn of_bytes(name: impl Into<String>, bytes: &[u8]) -> Self {
        InputDigest { name: name.into(), sha256: hex(&Sha256::digest(bytes)) }
    }

    pub fn of_file(path: &Path) -> Result<(Self, Vec<u8>)> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        Ok((Self::of_bytes(path.display().to_string(), &bytes), bytes))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: String,
    pub command: String,
    pub inputs: Vec<InputDigest>,
    pub results: Results,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Results {
    Score {
        sentences: usize,
        tp: u64,
        fp: u64,
        #[serde(rename = "fn")]
        fn_: u64,
        precision: f64,
        recall: f64,
        f1: f64,
    },
    Compare {
        score_a: f64,
        score_b: f64,
        p_threshold: f64,
        verdict: Verdict,
        result: SigTestResult,
    },
    Eval {
        test: Option<PairedTest>,
        report: ProtocolReport,
        /// The single comparison when the protocol ran on one row.
        result: Option<SigTestResult>,
    },
    Sweep {
        test: PairedTest,
        p_threshold: f64,
        pct_significant: Vec<(usize, f64)>,
        delta95_of_means: Vec<(usize, f64)>,
    },
    Predint {
        pair_confidence: f64,
        alpha: f64,
        fit: LinearFit,
        mean_two_zeta: f64,
    },
    Generate {
        output: String,
        rows: usize,
        cols: usize,
        approaches: Vec<String>,
    },
}

impl Report {
    pub fn new(command: &str, inputs: Vec<InputDigest>, results: Results, seed: Option<u64>) -> Self {
        Report { schema_version: SCHEMA_VERSION.to_string(), command: command.to_string(), inputs, results, seed }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// True when the command found a significant difference.
    pub fn significant(&self) -> bool {
        match &self.results {
            Results::Compare { verdict, .. } => *verdict != Verdict::NotSignificant,
            Results::Eval { report, .. } => report.pct_significant.is_some_and(|p| p > 0.0),
            _ => false,
        }
    }

    /// Markdown table mirroring the report; score differences with two
    /// decimals.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let opt = |v: Option<f64>, digits: usize| v.map_or("-".to_string(), |x| format!("{x:.digits$}"));
        let pct = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{:.2}%", 100.0 * x));
        match &self.results {
            Results::Score { sentences, tp, fp, fn_, precision, recall, f1 } => {
                out.push_str("| sentences | TP | FP | FN | precision | recall | F1 |\n|---|---|---|---|---|---|---|\n");
                let _ = writeln!(out, "| {sentences} | {tp} | {fp} | {fn_} | {precision:.2} | {recall:.2} | {f1:.2} |");
            }
            Results::Compare { score_a, score_b, p_threshold, verdict, result } => {
                out.push_str("| method | score A | score B | difference | p | resamples | verdict |\n");
                out.push_str("|---|---|---|---|---|---|---|\n");
                let _ = writeln!(
                    out,
                    "| {} | {score_a:.2} | {score_b:.2} | {:.2} | {:.4} | {} | {} (p < {p_threshold}) |",
                    result.method,
                    result.statistic,
                    result.p_value,
                    result.resamples.map_or("-".to_string(), |r| r.to_string()),
                    verdict_text(*verdict)
                );
            }
            Results::Eval { report, result, .. } => {
                out.push_str(
                    "| protocol | trials | n | threshold τ | % significant | Δ95 (dev) | Δ95 (test) | Δmax | Spearman ρ |\n",
                );
                out.push_str("|---|---|---|---|---|---|---|---|---|\n");
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | {} | {} | {} | {:.2} | {:.2} | {} |",
                    report.protocol,
                    report.trials,
                    report.models_per_side,
                    opt(report.tau, 2),
                    pct(report.pct_significant),
                    opt(report.delta95_dev, 2),
                    report.delta95_test,
                    report.delta_max,
                    opt(report.spearman_dev_test, 3)
                );
                if let Some(r) = result {
                    let _ = writeln!(out, "\n{} statistic {:.4}, p = {:.4}", r.method, r.statistic, r.p_value);
                }
            }
            Results::Sweep { pct_significant, delta95_of_means, .. } => {
                out.push_str("| n | % significant |\n|---|---|\n");
                for (n, p) in pct_significant {
                    let _ = writeln!(out, "| {n} | {:.2}% |", 100.0 * p);
                }
                out.push_str("\n| n | Δ95 of mean difference |\n|---|---|\n");
                for (n, d) in delta95_of_means {
                    let _ = writeln!(out, "| {n} | {d:.2} |");
                }
            }
            Results::Predint { pair_confidence, alpha, fit, mean_two_zeta } => {
                out.push_str("| points | slope | intercept | s_y | s_x | alpha | (1-alpha)² | mean 2ζ |\n");
                out.push_str("|---|---|---|---|---|---|---|---|\n");
                let _ = writeln!(
                    out,
                    "| {} | {:.4} | {:.2} | {:.2} | {:.2} | {alpha:.4} | {pair_confidence} | {mean_two_zeta:.2} |",
                    fit.n, fit.slope, fit.intercept, fit.s_y, fit.s_x
                );
            }
            Results::Generate { output, rows, cols, approaches } => {
                let _ = writeln!(out, "| output | approaches | rows | cols |\n|---|---|---|---|");
                let _ = writeln!(out, "| {output} | {} | {rows} | {cols} |", approaches.join(", "));
            }
        }
        out
    }
}

fn verdict_text(v: Verdict) -> &'static str {
    match v {
        Verdict::ASuperior => "A superior",
        Verdict::BSuperior => "B superior",
        Verdict::NotSignificant => "not significant",
    }
}
