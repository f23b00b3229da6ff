//! Readers for CoNLL-style column files, per-instance statistics CSVs and
//! score tables, plus IOB span extraction.
//!
//! A CoNLL token line has at least three whitespace-separated columns; the
//! last two are the gold and the predicted tag. Sentences are separated by
//! blank lines, lines starting with `#` are comments and `-DOCSTART-` lines
//! are document markers, not tokens.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{InstanceStats, RunRecord, Score};
use crate::protocols::ScoreMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TagScheme {
    /// Strict IOB2: an `I-X` must continue a span of label `X`.
    Iob2,
    /// conlleval semantics: an `I-X` that does not continue an `X` span
    /// opens a new one.
    BioLenient,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Tag {
    Outside,
    Begin(String),
    Inside(String),
}

impl Tag {
    pub fn parse(s: &str) -> Result<Tag> {
        if s == "O" {
            return Ok(Tag::Outside);
        }
        let (prefix, label) = s
            .split_once('-')
            .ok_or_else(|| Error::invalid(format!("invalid tag {s:?}")))?;
        if label.is_empty() {
            return Err(Error::invalid(format!("tag {s:?} has an empty label")));
        }
        match prefix {
            "B" => Ok(Tag::Begin(label.to_string())),
            "I" => Ok(Tag::Inside(label.to_string())),
            _ => Err(Error::invalid(format!("invalid tag prefix in {s:?}"))),
        }
    }

    fn label(&self) -> Option<&str> {
        match self {
            Tag::Outside => None,
            Tag::Begin(l) | Tag::Inside(l) => Some(l),
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::Outside => f.write_str("O"),
            Tag::Begin(l) => write!(f, "B-{l}"),
            Tag::Inside(l) => write!(f, "I-{l}"),
        }
    }
}

/// A labeled span; `end` is inclusive.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

impl Span {
    pub fn new(start: usize, end: usize, label: impl Into<String>) -> Self {
        Span { start, end, label: label.into() }
    }
}

/// Index of the first tag that is not a valid IOB2 continuation, if any.
fn first_iob2_violation(tags: &[Tag]) -> Option<usize> {
    let mut prev: Option<&str> = None;
    for (i, tag) in tags.iter().enumerate() {
        if let Tag::Inside(l) = tag {
            if prev != Some(l.as_str()) {
                return Some(i);
            }
        }
        prev = tag.label();
    }
    None
}

/// Maximal spans of a tag sequence under conlleval semantics (a stray `I-`
/// opens a span). For valid IOB2 input this is plain IOB2 decoding.
pub fn extract_spans(tags: &[Tag]) -> BTreeSet<Span> {
    let mut spans = BTreeSet::new();
    let mut open: Option<(usize, &str)> = None;
    for (i, tag) in tags.iter().enumerate() {
        let continues = matches!((tag, open), (Tag::Inside(l), Some((_, cur))) if l == cur);
        if continues {
            continue;
        }
        if let Some((start, label)) = open.take() {
            spans.insert(Span::new(start, i - 1, label));
        }
        open = tag.label().map(|l| (i, l));
    }
    if let Some((start, label)) = open {
        spans.insert(Span::new(start, tags.len() - 1, label));
    }
    spans
}

/// [`extract_spans`] over textual tags.
pub fn extract_spans_str<S: AsRef<str>>(tags: &[S]) -> Result<BTreeSet<Span>> {
    let parsed = tags.iter().map(|t| Tag::parse(t.as_ref())).collect::<Result<Vec<_>>>()?;
    Ok(extract_spans(&parsed))
}

/// IOB2 encoding of a set of non-overlapping spans over `len` tokens.
pub fn tags_from_spans(spans: &BTreeSet<Span>, len: usize) -> Result<Vec<Tag>> {
    let mut tags = vec![Tag::Outside; len];
    for span in spans {
        if span.start > span.end || span.end >= len {
            return Err(Error::invalid(format!("span {span:?} out of range for {len} tokens")));
        }
        if tags[span.start..=span.end].iter().any(|t| *t != Tag::Outside) {
            return Err(Error::invalid(format!("span {span:?} overlaps another span")));
        }
        tags[span.start] = Tag::Begin(span.label.clone());
        for t in &mut tags[span.start + 1..=span.end] {
            *t = Tag::Inside(span.label.clone());
        }
    }
    Ok(tags)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    pub gold: Tag,
    pub pred: Tag,
}

/// A non-empty sentence whose tags are valid under the scheme it was built
/// with.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sentence {
    tokens: Vec<Token>,
}

impl Sentence {
    pub fn new(tokens: Vec<Token>, scheme: TagScheme) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::Empty("sentence without tokens".into()));
        }
        if scheme == TagScheme::Iob2 {
            for side in [Side::Gold, Side::Pred] {
                let tags = side.tags(&tokens);
                if let Some(i) = first_iob2_violation(&tags) {
                    return Err(Error::invalid(format!(
                        "token {}: {} tag {} does not continue a span (strict IOB2)",
                        i + 1,
                        side.name(),
                        tags[i]
                    )));
                }
            }
        }
        Ok(Sentence { tokens })
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn gold_tags(&self) -> Vec<Tag> {
        Side::Gold.tags(&self.tokens)
    }

    pub fn pred_tags(&self) -> Vec<Tag> {
        Side::Pred.tags(&self.tokens)
    }
}

#[derive(Clone, Copy)]
enum Side {
    Gold,
    Pred,
}

impl Side {
    fn tags(self, tokens: &[Token]) -> Vec<Tag> {
        tokens
            .iter()
            .map(|t| match self {
                Side::Gold => t.gold.clone(),
                Side::Pred => t.pred.clone(),
            })
            .collect()
    }

    fn name(self) -> &'static str {
        match self {
            Side::Gold => "gold",
            Side::Pred => "predicted",
        }
    }
}

/// Exact-match span counts of one sentence.
pub fn sentence_stats(sentence: &Sentence) -> InstanceStats {
    let gold = extract_spans(&sentence.gold_tags());
    let pred = extract_spans(&sentence.pred_tags());
    let tp = gold.intersection(&pred).count() as u64;
    InstanceStats::span(tp, pred.len() as u64 - tp, gold.len() as u64 - tp)
}

/// Reads a CoNLL column file.
pub fn parse_conll<R: BufRead>(input: R, scheme: TagScheme) -> Result<Vec<Sentence>> {
    let mut sentences = Vec::new();
    let mut tokens: Vec<Token> = Vec::new();
    let mut token_lines: Vec<usize> = Vec::new();

    let flush = |tokens: &mut Vec<Token>, token_lines: &mut Vec<usize>, out: &mut Vec<Sentence>| -> Result<()> {
        if tokens.is_empty() {
            return Ok(());
        }
        if scheme == TagScheme::Iob2 {
            for side in [Side::Gold, Side::Pred] {
                let tags = side.tags(tokens);
                if let Some(i) = first_iob2_violation(&tags) {
                    return Err(Error::Parse {
                        line: token_lines[i],
                        msg: format!("{} tag {} does not continue a span (strict IOB2)", side.name(), tags[i]),
                    });
                }
            }
        }
        token_lines.clear();
        out.push(Sentence::new(std::mem::take(tokens), scheme)?);
        Ok(())
    };

    for (idx, line) in input.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Parse { line: line_no, msg: e.to_string() })?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            flush(&mut tokens, &mut token_lines, &mut sentences)?;
            continue;
        }
        if trimmed.starts_with('#') || trimmed.starts_with("-DOCSTART-") {
            continue;
        }
        let cols: Vec<&str> = trimmed.split_whitespace().collect();
        if cols.len() < 3 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected at least 3 columns, found {}", cols.len()),
            });
        }
        let parse_tag = |s: &str| Tag::parse(s).map_err(|e| Error::Parse { line: line_no, msg: e.to_string() });
        let gold = parse_tag(cols[cols.len() - 2])?;
        let pred = parse_tag(cols[cols.len() - 1])?;
        token_lines.push(line_no);
        tokens.push(Token { surface: cols[0].to_string(), gold, pred });
    }
    flush(&mut tokens, &mut token_lines, &mut sentences)?;
    if sentences.is_empty() {
        return Err(Error::Empty("no sentences in CoNLL input".into()));
    }
    Ok(sentences)
}

/// Writes per-sentence span statistics as `sentence,tp,fp,fn` (1-based
/// sentence index).
pub fn write_stats_csv<W: Write>(stats: &[InstanceStats], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mode = crate::metric::aggregate(stats)?.mode();
    match mode {
        crate::metric::MetricMode::SpanF1 => w.write_record(["sentence", "tp", "fp", "fn"]),
        crate::metric::MetricMode::Accuracy => w.write_record(["sentence", "correct", "total"]),
    }
    .map_err(csv_error)?;
    for (i, s) in stats.iter().enumerate() {
        let idx = (i + 1).to_string();
        match *s {
            InstanceStats::Span { tp, fp, fn_ } => {
                w.write_record([idx, tp.to_string(), fp.to_string(), fn_.to_string()])
            }
            InstanceStats::Accuracy { correct, total } => {
                w.write_record([idx, correct.to_string(), total.to_string()])
            }
        }
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::Parse { line, msg: format!("{kind:?}") },
    }
}

fn parse_count(field: &str, line: usize, what: &str) -> Result<u64> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::Parse { line, msg: format!("{what} {field:?} is not a non-negative integer") })
}

/// Reads a per-instance statistics CSV with header `sentence,tp,fp,fn` or
/// `sentence,correct,total`.
pub fn read_stats_csv<R: Read>(input: R) -> Result<Vec<InstanceStats>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(input);
    let mut records = rdr.records();
    let header = match records.next() {
        None => return Err(Error::Empty("statistics CSV has no header".into())),
        Some(h) => h.map_err(csv_error)?,
    };
    let header: Vec<&str> = header.iter().map(str::trim).collect();
    let span_mode = match header.as_slice() {
        ["sentence", "tp", "fp", "fn"] => true,
        ["sentence", "correct", "total"] => false,
        other => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected header sentence,tp,fp,fn or sentence,correct,total, found {}", other.join(",")),
            })
        }
    };
    let mut stats = Vec::new();
    for rec in records {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let width = if span_mode { 4 } else { 3 };
        if rec.len() != width {
            return Err(Error::Parse { line, msg: format!("expected {width} fields, found {}", rec.len()) });
        }
        let s = if span_mode {
            InstanceStats::span(
                parse_count(&rec[1], line, "tp")?,
                parse_count(&rec[2], line, "fp")?,
                parse_count(&rec[3], line, "fn")?,
            )
        } else {
            InstanceStats::accuracy(parse_count(&rec[1], line, "correct")?, parse_count(&rec[2], line, "total")?)
                .map_err(|e| Error::Parse { line, msg: e.to_string() })?
        };
        stats.push(s);
    }
    if stats.is_empty() {
        return Err(Error::Empty("statistics CSV has no records".into()));
    }
    Ok(stats)
}

/// Exact header of a score table CSV.
pub const SCORE_CSV_HEADER: [&str; 5] = ["approach", "row", "col", "dev", "test"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub approach: String,
    /// 1-based.
    pub row: usize,
    /// 1-based.
    pub col: usize,
    pub dev: Score,
    pub test: Score,
}

/// Dev/test scores of one or more approaches laid out as dense row/column
/// grids.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ScoreTable {
    rows: Vec<ScoreRow>,
}

impl ScoreTable {
    /// Validates uniqueness of `(approach, row, col)` and that each
    /// approach covers the full `1..=R x 1..=C` rectangle.
    pub fn new(rows: Vec<ScoreRow>) -> Result<Self> {
        let mut seen = HashSet::new();
        for r in &rows {
            if !r.dev.is_finite() || !r.test.is_finite() {
                return Err(Error::invalid(format!(
                    "non-finite score for ({}, {}, {})",
                    r.approach, r.row, r.col
                )));
            }
            if r.row == 0 || r.col == 0 {
                return Err(Error::invalid(format!(
                    "row and col indices are 1-based, got ({}, {}, {})",
                    r.approach, r.row, r.col
                )));
            }
            if !seen.insert((r.approach.as_str(), r.row, r.col)) {
                return Err(Error::invalid(format!(
                    "duplicate key ({}, {}, {})",
                    r.approach, r.row, r.col
                )));
            }
        }
        let table = ScoreTable { rows };
        for approach in table.approaches() {
            let mut cols_by_row: HashMap<usize, BTreeSet<usize>> = HashMap::new();
            for r in table.rows.iter().filter(|r| r.approach == approach) {
                cols_by_row.entry(r.row).or_default().insert(r.col);
            }
            let n_rows = cols_by_row.len();
            let n_cols = cols_by_row.values().map(BTreeSet::len).max().unwrap_or(0);
            let full_cols: BTreeSet<usize> = (1..=n_cols).collect();
            for row in 1..=n_rows {
                match cols_by_row.get(&row) {
                    None => {
                        return Err(Error::invalid(format!(
                            "ragged rectangle for approach {approach}: row {row} is missing"
                        )))
                    }
                    Some(cols) if *cols != full_cols => {
                        return Err(Error::invalid(format!(
                            "ragged rectangle for approach {approach}: row {row} has columns {:?}, expected 1..={n_cols}",
                            cols
                        )))
                    }
                    Some(_) => {}
                }
            }
        }
        Ok(table)
    }

    pub fn rows(&self) -> &[ScoreRow] {
        &self.rows
    }

    /// Approach ids in order of first appearance.
    pub fn approaches(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.approach) {
                out.push(r.approach.clone());
            }
        }
        out
    }

    /// The approach's scores as a matrix without instance statistics.
    pub fn to_matrix(&self, approach: &str) -> Result<ScoreMatrix> {
        let mine: Vec<&ScoreRow> = self.rows.iter().filter(|r| r.approach == approach).collect();
        if mine.is_empty() {
            return Err(Error::invalid(format!("no scores for approach {approach}")));
        }
        let n_rows = mine.iter().map(|r| r.row).max().unwrap_or(0);
        let n_cols = mine.iter().map(|r| r.col).max().unwrap_or(0);
        let mut cells: Vec<Option<RunRecord>> = vec![None; n_rows * n_cols];
        for r in mine {
            cells[(r.row - 1) * n_cols + (r.col - 1)] =
                Some(RunRecord::new(format!("{}[{},{}]", r.approach, r.row, r.col), r.dev, r.test));
        }
        let cells = cells.into_iter().collect::<Option<Vec<_>>>().ok_or_else(|| {
            Error::invalid(format!("ragged rectangle for approach {approach}"))
        })?;
        ScoreMatrix::new(approach, n_rows, n_cols, cells)
    }

    /// A table holding the scores of the given matrices.
    pub fn from_matrices(matrices: &[&ScoreMatrix]) -> Result<Self> {
        let mut rows = Vec::new();
        for m in matrices {
            for j in 0..m.rows() {
                for (i, rec) in m.row(j).iter().enumerate() {
                    rows.push(ScoreRow {
                        approach: m.approach_id().to_string(),
                        row: j + 1,
                        col: i + 1,
                        dev: rec.dev,
                        test: rec.test,
                    });
                }
            }
        }
        ScoreTable::new(rows)
    }
}

/// Reads a score table; the header must be exactly
/// `approach,row,col,dev,test`.
pub fn parse_score_csv<R: Read>(input: R) -> Result<ScoreTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(input);
    let mut records = rdr.records();
    let header = match records.next() {
        None => return Err(Error::Empty("score CSV has no header".into())),
        Some(h) => h.map_err(csv_error)?,
    };
    if header.iter().collect::<Vec<_>>() != SCORE_CSV_HEADER {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header {}, found {}", SCORE_CSV_HEADER.join(","), header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut rows = Vec::new();
    for rec in records {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != 5 {
            return Err(Error::Parse { line, msg: format!("expected 5 fields, found {}", rec.len()) });
        }
        let index = |s: &str, what: &str| -> Result<usize> {
            s.trim().parse().map_err(|_| Error::Parse { line, msg: format!("{what} {s:?} is not an integer") })
        };
        let score = |s: &str, what: &str| -> Result<f64> {
            let v: f64 = s
                .trim()
                .parse()
                .map_err(|_| Error::Parse { line, msg: format!("{what} score {s:?} is not numeric") })?;
            if !v.is_finite() {
                return Err(Error::Parse { line, msg: format!("{what} score {s:?} is not finite") });
            }
            Ok(v)
        };
        rows.push(ScoreRow {
            approach: rec[0].trim().to_string(),
            row: index(&rec[1], "row")?,
            col: index(&rec[2], "col")?,
            dev: score(&rec[3], "dev")?,
            test: score(&rec[4], "test")?,
        });
    }
    if rows.is_empty() {
        return Err(Error::Empty("score CSV has no records".into()));
    }
    ScoreTable::new(rows)
}

/// Writes a score table with full float precision.
pub fn write_score_csv<W: Write>(table: &ScoreTable, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SCORE_CSV_HEADER).map_err(csv_error)?;
    for r in &table.rows {
        w.write_record([
            r.approach.clone(),
            r.row.to_string(),
            r.col.to_string(),
            r.dev.to_string(),
            r.test.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}
