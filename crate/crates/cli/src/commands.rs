use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use scoredist::conll::{self, TagScheme};
use scoredist::metric::{self, InstanceStats};
use scoredist::predint;
use scoredist::protocols::{self, ScoreMatrix};
use scoredist::synthgen::{self, SyntheticConfig};
use scoredist::{InstanceSeq, PairedTest};

use crate::report::{InputDigest, Report, Results};
use crate::{EvalTest, Scheme, SourceArgs, TestArgs, TestKind};

fn paired_test(kind: TestKind, opts: &TestArgs) -> PairedTest {
    match kind {
        TestKind::Bootstrap => PairedTest::Bootstrap { resamples: opts.resamples },
        TestKind::Ar => PairedTest::ApproxRandomization { resamples: opts.resamples },
        TestKind::Exact => PairedTest::ExactRandomization { max_n: opts.max_n },
    }
}

fn load_stats(path: &Path) -> Result<(InputDigest, Vec<InstanceStats>)> {
    let (digest, bytes) = InputDigest::of_file(path)?;
    let stats = conll::read_stats_csv(bytes.as_slice()).with_context(|| format!("parsing {}", path.display()))?;
    Ok((digest, stats))
}

pub fn score(path: &Path, scheme: Scheme, per_sentence: Option<&Path>) -> Result<Report> {
    let (digest, bytes) = InputDigest::of_file(path)?;
    let scheme = match scheme {
        Scheme::Iob2 => TagScheme::Iob2,
        Scheme::BioLenient => TagScheme::BioLenient,
    };
    let sentences = conll::parse_conll(bytes.as_slice(), scheme).with_context(|| format!("parsing {}", path.display()))?;
    let stats: Vec<InstanceStats> = sentences.iter().map(conll::sentence_stats).collect();
    if let Some(out) = per_sentence {
        let file = File::create(out).with_context(|| format!("creating {}", out.display()))?;
        conll::write_stats_csv(&stats, BufWriter::new(file))?;
    }
    let InstanceStats::Span { tp, fp, fn_ } = metric::aggregate(&stats)? else {
        unreachable!("CoNLL sentences yield span statistics")
    };
    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { 100.0 * num as f64 / den as f64 };
    Ok(Report::new(
        "score",
        vec![digest],
        Results::Score {
            sentences: stats.len(),
            tp,
            fp,
            fn_,
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
            f1: metric::f1_from_stats(&stats)?,
        },
        None,
    ))
}

pub fn compare(path_a: &Path, path_b: &Path, kind: TestKind, opts: &TestArgs) -> Result<Report> {
    let (da, sa) = load_stats(path_a)?;
    let (db, sb) = load_stats(path_b)?;
    let (a, b) = (InstanceSeq::from(sa), InstanceSeq::from(sb));
    let test = paired_test(kind, opts);
    let result = test.run(&a, &b, opts.seed)?;
    let seed = result.seed;
    Ok(Report::new(
        "compare",
        vec![da, db],
        Results::Compare {
            score_a: a.score()?,
            score_b: b.score()?,
            p_threshold: opts.p_threshold,
            verdict: result.verdict(opts.p_threshold),
            result,
        },
        seed,
    ))
}

struct Source {
    a: ScoreMatrix,
    b: ScoreMatrix,
    inputs: Vec<InputDigest>,
}

fn synthetic_config(name: &str) -> Result<(SyntheticConfig, InputDigest)> {
    if let Some(cfg) = SyntheticConfig::preset(name) {
        let digest = InputDigest::of_bytes(format!("preset:{name}"), cfg.to_toml_string().as_bytes());
        return Ok((cfg, digest));
    }
    let path = Path::new(name);
    if !path.exists() {
        bail!(
            "{name} is neither a config file nor a preset (available: {})",
            SyntheticConfig::PRESETS.join(", ")
        );
    }
    let (digest, bytes) = InputDigest::of_file(path)?;
    let text = String::from_utf8(bytes).with_context(|| format!("{} is not UTF-8", path.display()))?;
    let cfg = SyntheticConfig::from_toml_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok((cfg, digest))
}

fn load_source(src: &SourceArgs) -> Result<Source> {
    if let Some(name) = &src.synthetic {
        let (cfg, digest) = synthetic_config(name)?;
        let (a, b) = synthgen::generate_population(&cfg)?.into_matrices();
        return pick(vec![a, b], src.approaches.as_deref(), vec![digest]);
    }
    if src.inputs.is_empty() {
        bail!("no input: pass score CSV files or --synthetic");
    }
    let mut matrices = Vec::new();
    let mut inputs = Vec::new();
    for path in &src.inputs {
        let (digest, bytes) = InputDigest::of_file(path)?;
        let table = conll::parse_score_csv(bytes.as_slice()).with_context(|| format!("parsing {}", path.display()))?;
        for id in table.approaches() {
            if matrices.iter().any(|m: &ScoreMatrix| m.approach_id() == id) {
                bail!("approach {id} appears in more than one input");
            }
            matrices.push(table.to_matrix(&id)?);
        }
        inputs.push(digest);
    }
    pick(matrices, src.approaches.as_deref(), inputs)
}

fn pick(mut matrices: Vec<ScoreMatrix>, wanted: Option<&[String]>, inputs: Vec<InputDigest>) -> Result<Source> {
    let (ia, ib) = match wanted {
        Some([x, y]) => {
            let find = |id: &str| {
                matrices.iter().position(|m| m.approach_id() == id).with_context(|| format!("no approach named {id}"))
            };
            (find(x)?, find(y)?)
        }
        Some(_) => bail!("--approaches takes exactly two names"),
        None if matrices.len() >= 2 => (0, 1),
        None => bail!("need two approaches, found {}", matrices.len()),
    };
    if ia == ib {
        bail!("--approaches names the same approach twice");
    }
    let b = matrices[ib].clone();
    let a = matrices.swap_remove(ia);
    Ok(Source { a, b, inputs })
}

fn has_test_stats(m: &ScoreMatrix) -> bool {
    m.cells().iter().all(|r| r.test_stats.is_some())
}

pub fn eval(
    protocol: u8,
    src: &SourceArgs,
    n: Option<usize>,
    test: EvalTest,
    opts: &TestArgs,
    paired: bool,
) -> Result<Report> {
    let Source { a, b, inputs } = load_source(src)?;
    let n = n.unwrap_or(a.cols());
    let stats = has_test_stats(&a) && has_test_stats(&b);
    let test = match test {
        EvalTest::Auto if stats => Some(PairedTest::Bootstrap { resamples: opts.resamples }),
        EvalTest::Auto | EvalTest::None => None,
        EvalTest::Bootstrap => Some(paired_test(TestKind::Bootstrap, opts)),
        EvalTest::Ar => Some(paired_test(TestKind::Ar, opts)),
        EvalTest::Exact => Some(paired_test(TestKind::Exact, opts)),
    };
    let (report, test, result, seed) = match protocol {
        1 => (protocols::run_eval1(&a, &b, test, opts.p_threshold, opts.seed)?, test, None, Some(opts.seed)),
        2 => (protocols::run_eval2_n(&a, &b, n, test, opts.p_threshold, opts.seed)?, test, None, Some(opts.seed)),
        3 | 4 => {
            let report = if protocol == 3 {
                protocols::run_eval3_matrix(&a, &b, n, opts.p_threshold)?
            } else {
                protocols::run_eval4_matrix(&a, &b, n, paired, opts.p_threshold)?
            };
            let result = if a.rows() == 1 {
                let xa: Vec<f64> = a.row(0)[..n].iter().map(|r| r.test).collect();
                let xb: Vec<f64> = b.row(0)[..n].iter().map(|r| r.test).collect();
                Some(if protocol == 3 { protocols::run_eval3(&xa, &xb)? } else { protocols::run_eval4(&xa, &xb, paired)? })
            } else {
                None
            };
            (report, None, result, None)
        }
        _ => unreachable!("clap restricts the protocol to 1..=4"),
    };
    Ok(Report::new("eval", inputs, Results::Eval { test, report, result }, seed))
}

pub fn sweep(n_list: &[usize], src: &SourceArgs, kind: TestKind, opts: &TestArgs) -> Result<Report> {
    let Source { a, b, inputs } = load_source(src)?;
    let test = paired_test(kind, opts);
    Ok(Report::new(
        "sweep",
        inputs,
        Results::Sweep {
            test,
            p_threshold: opts.p_threshold,
            pct_significant: protocols::sweep_n(&a, &b, n_list, test, opts.p_threshold, opts.seed)?,
            delta95_of_means: protocols::mean_delta95(&a, &b, n_list)?,
        },
        Some(opts.seed),
    ))
}

#[derive(Deserialize)]
struct DevTest {
    dev: f64,
    test: f64,
}

fn dev_test_points(bytes: &[u8]) -> Result<Vec<(f64, f64)>> {
    let first = bytes.split(|&c| c == b'\n').next().unwrap_or_default();
    if first.starts_with(b"approach,") {
        let table = conll::parse_score_csv(bytes)?;
        return Ok(table.rows().iter().map(|r| (r.dev, r.test)).collect());
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
    let mut points = Vec::new();
    for (i, row) in rdr.deserialize::<DevTest>().enumerate() {
        let row = row.with_context(|| format!("line {}", i + 2))?;
        points.push((row.dev, row.test));
    }
    Ok(points)
}

pub fn predint(path: &Path, pair_confidence: f64) -> Result<Report> {
    let (digest, bytes) = InputDigest::of_file(path)?;
    let points = dev_test_points(&bytes).with_context(|| format!("parsing {}", path.display()))?;
    let alpha = predint::pair_alpha(pair_confidence)?;
    let fit = predint::fit_dev_test(&points)?;
    let mean_two_zeta = predint::interval_width_summary(&points, pair_confidence)?;
    Ok(Report::new("predint", vec![digest], Results::Predint { pair_confidence, alpha, fit, mean_two_zeta }, None))
}

pub fn generate(name: &str, out: &Path, seed: Option<u64>) -> Result<Report> {
    let (mut cfg, digest) = synthetic_config(name)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let (a, b) = synthgen::generate_population(&cfg)?.into_matrices();
    let table = conll::ScoreTable::from_matrices(&[&a, &b])?;
    let file = File::create(out).with_context(|| format!("creating {}", out.display()))?;
    conll::write_score_csv(&table, BufWriter::new(file))?;
    // Parse the written file back so the report reflects what landed on disk.
    let written = conll::parse_score_csv(BufReader::new(File::open(out)?))?;
    Ok(Report::new(
        "generate",
        vec![digest],
        Results::Generate {
            output: out.display().to_string(),
            rows: cfg.rows,
            cols: cfg.cols,
            approaches: written.approaches(),
        },
        Some(cfg.seed),
    ))
}
