mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use report::Report;

#[derive(Parser)]
#[command(
    name = "scoredist",
    version,
    about = "Compare learning approaches through score distributions",
    after_help = "\
Exit codes: 0 success, 1 significant difference found (with --gate), 2 input error, 3 precondition error.

Examples:
  scoredist score run.conll --per-sentence stats.csv
  scoredist compare a.csv b.csv --test bootstrap --resamples 10000
  scoredist eval --protocol 2 --synthetic conll-ner-like
  scoredist eval --protocol 3 scores.csv --n 10
  scoredist sweep --n-list 1,5,10,20 --synthetic config.toml
  scoredist predint scores.csv --pair-confidence 0.05"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Output style on stdout
    #[arg(long, value_enum, default_value_t = Format::Json, global = true)]
    format: Format,

    /// Also write the JSON report to this file
    #[arg(long, global = true)]
    report: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Markdown,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scheme {
    Iob2,
    BioLenient,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TestKind {
    Bootstrap,
    Ar,
    Exact,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalTest {
    /// bootstrap when instance statistics are available, otherwise none
    Auto,
    Bootstrap,
    Ar,
    Exact,
    None,
}

#[derive(clap::Args)]
pub struct SourceArgs {
    /// Score CSV files (approach,row,col,dev,test)
    pub inputs: Vec<PathBuf>,

    /// Synthetic population: a config file or a preset name (conll-ner-like)
    #[arg(long, conflicts_with = "inputs")]
    pub synthetic: Option<String>,

    /// The two approaches to compare, in order (default: first two in the input)
    #[arg(long, value_delimiter = ',', num_args = 2)]
    pub approaches: Option<Vec<String>>,
}

#[derive(clap::Args)]
pub struct TestArgs {
    #[arg(long, default_value_t = 10_000)]
    pub resamples: u64,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long, default_value_t = 0.05)]
    pub p_threshold: f64,

    /// Largest instance count for --test exact
    #[arg(long, default_value_t = scoredist::sigtest::DEFAULT_EXACT_MAX_N)]
    pub max_n: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Span F1 of a CoNLL file (gold and predicted tags in the last two columns)
    Score {
        conll: PathBuf,

        #[arg(long, value_enum, default_value_t = Scheme::BioLenient)]
        scheme: Scheme,

        /// Write per-sentence statistics (sentence,tp,fp,fn) to this file
        #[arg(long)]
        per_sentence: Option<PathBuf>,
    },
    /// Paired significance test between two per-sentence statistics files
    Compare {
        stats_a: PathBuf,
        stats_b: PathBuf,

        #[arg(long, value_enum, default_value_t = TestKind::Bootstrap)]
        test: TestKind,

        #[command(flatten)]
        opts: TestArgs,

        /// Exit with code 1 when the difference is significant
        #[arg(long)]
        gate: bool,
    },
    /// Run one of the evaluation protocols
    Eval {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
        protocol: u8,

        #[command(flatten)]
        source: SourceArgs,

        /// Runs per approach (protocols 2-4; default: all columns)
        #[arg(long)]
        n: Option<usize>,

        /// Paired test for protocols 1 and 2
        #[arg(long, value_enum, default_value_t = EvalTest::Auto)]
        test: EvalTest,

        #[command(flatten)]
        opts: TestArgs,

        /// Protocol 4: matched runs (Wilcoxon) instead of independent ones (Mann-Whitney)
        #[arg(long)]
        paired: bool,

        /// Exit with code 1 when any comparison is significant
        #[arg(long)]
        gate: bool,
    },
    /// Significance rate of protocol 2 and Δ95 of mean differences over n
    Sweep {
        #[arg(long, value_delimiter = ',', required = true)]
        n_list: Vec<usize>,

        #[command(flatten)]
        source: SourceArgs,

        #[arg(long, value_enum, default_value_t = TestKind::Bootstrap)]
        test: TestKind,

        #[command(flatten)]
        opts: TestArgs,
    },
    /// Dev→test regression and mean prediction-interval width 2ζ
    Predint {
        /// CSV with dev,test columns, or a score CSV
        csv: PathBuf,

        #[arg(long, default_value_t = 0.05)]
        pair_confidence: f64,
    },
    /// Write a synthetic population as a score CSV
    Generate {
        /// Config file or preset name
        #[arg(long)]
        synthetic: String,

        #[arg(long)]
        out: PathBuf,

        /// Override the config seed
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn run(cli: Cli) -> anyhow::Result<(Report, bool)> {
    let (report, gate) = match cli.command {
        Command::Score { conll, scheme, per_sentence } => (commands::score(&conll, scheme, per_sentence.as_deref())?, false),
        Command::Compare { stats_a, stats_b, test, opts, gate } => {
            (commands::compare(&stats_a, &stats_b, test, &opts)?, gate)
        }
        Command::Eval { protocol, source, n, test, opts, paired, gate } => {
            (commands::eval(protocol, &source, n, test, &opts, paired)?, gate)
        }
        Command::Sweep { n_list, source, test, opts } => (commands::sweep(&n_list, &source, test, &opts)?, false),
        Command::Predint { csv, pair_confidence } => (commands::predint(&csv, pair_confidence)?, false),
        Command::Generate { synthetic, out, seed } => (commands::generate(&synthetic, &out, seed)?, false),
    };
    Ok((report, gate))
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<scoredist::Error>() {
        Some(e) if !e.is_input_error() => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (format, report_path) = (cli.format, cli.report.clone());
    match run(cli) {
        Ok((report, gate)) => {
            match format {
                Format::Json => println!("{}", report.to_json()),
                Format::Markdown => print!("{}", report.to_markdown()),
            }
            if let Some(path) = report_path {
                if let Err(e) = std::fs::write(&path, report.to_json() + "\n") {
                    eprintln!("error: writing {}: {e}", path.display());
                    return ExitCode::from(2);
                }
            }
            if gate && report.significant() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
