//! Text formats: expression and z-score ingestion, summary tables, chain
//! dumps, reports and plot data.
//!
//! Delimited inputs are tab- or comma-separated (detected from the first
//! data line), UTF-8, with `.` as decimal separator. Lines starting with `#`
//! and blank lines are ignored.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bdp::BdpState;
use crate::data::{validate_expression, ChainState, DataError, ExpressionDataset, ZScoreDataset};
use crate::evaluation::{EvalReport, SensitivityPoint};
use crate::relevance::PosteriorSummary;
use crate::simulation::GeneClass;

/// A malformed input line.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{source_name}: line {line}, column {column}: {message}")]
pub struct ParseError {
    pub source_name: String,
    /// 1-based line number.
    pub line: usize,
    /// 1-based field number.
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("{0}")]
    Format(String),
}

impl IoError {
    fn file(path: &Path, source: std::io::Error) -> Self {
        IoError::File {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub fn read_text(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|e| IoError::file(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Delim {
    Tab,
    Comma,
}

impl Delim {
    fn detect(line: &str) -> Self {
        if line.contains('\t') {
            Delim::Tab
        } else {
            Delim::Comma
        }
    }

    fn split<'a>(&self, line: &'a str) -> Vec<&'a str> {
        let c = match self {
            Delim::Tab => '\t',
            Delim::Comma => ',',
        };
        line.split(c).map(str::trim).collect()
    }
}

/// Non-comment, non-blank lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
}

fn parse_err(source: &str, line: usize, column: usize, message: impl Into<String>) -> ParseError {
    ParseError {
        source_name: source.to_string(),
        line,
        column,
        message: message.into(),
    }
}

fn parse_real(source: &str, line: usize, column: usize, field: &str) -> Result<f64, ParseError> {
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(_) => Err(parse_err(source, line, column, format!("'{field}' is not finite"))),
        Err(_) => Err(parse_err(source, line, column, format!("'{field}' is not a number"))),
    }
}

fn parse_label(source: &str, line: usize, column: usize, field: &str) -> Result<u8, ParseError> {
    match field {
        "0" => Ok(0),
        "1" => Ok(1),
        _ => Err(parse_err(
            source,
            line,
            column,
            format!("label '{field}' is not 0 or 1"),
        )),
    }
}

fn is_label_row(first: &str) -> bool {
    matches!(first.to_ascii_lowercase().as_str(), "label" | "labels" | "group")
}

/// Parse a gene × sample table: header row of sample ids (first field is
/// the id column name), one row per gene, and either a row whose first
/// field is `label` or a separate `labels` text giving 0/1 per sample.
pub fn parse_expression(text: &str, source: &str, labels: Option<(&str, &str)>) -> Result<ExpressionDataset, IoError> {
    let mut lines = content_lines(text);
    let (header_line, header) = lines.next().ok_or_else(|| parse_err(source, 1, 1, "empty input"))?;
    let delim = Delim::detect(header);
    let n_samples = delim.split(header).len().saturating_sub(1);
    if n_samples == 0 {
        return Err(parse_err(source, header_line, 1, "header names no samples").into());
    }
    let mut gene_ids = Vec::new();
    let mut values = Vec::new();
    let mut inline_labels: Option<Vec<u8>> = None;
    for (ln, line) in lines {
        let fields = delim.split(line);
        if fields.len() != n_samples + 1 {
            return Err(parse_err(
                source,
                ln,
                fields.len().min(n_samples + 1) + 1,
                format!("expected {} fields, found {}", n_samples + 1, fields.len()),
            )
            .into());
        }
        if fields[0].is_empty() {
            return Err(parse_err(source, ln, 1, "empty gene id").into());
        }
        if is_label_row(fields[0]) {
            if inline_labels.is_some() {
                return Err(parse_err(source, ln, 1, "second label row").into());
            }
            let row = fields[1..]
                .iter()
                .enumerate()
                .map(|(j, f)| parse_label(source, ln, j + 2, f))
                .collect::<Result<Vec<_>, _>>()?;
            inline_labels = Some(row);
            continue;
        }
        let row = fields[1..]
            .iter()
            .enumerate()
            .map(|(j, f)| parse_real(source, ln, j + 2, f))
            .collect::<Result<Vec<_>, _>>()?;
        gene_ids.push(fields[0].to_string());
        values.push(row);
    }
    let labels = match (inline_labels, labels) {
        (Some(_), Some(_)) => {
            return Err(IoError::Format(format!(
                "{source} has a label row and a separate label file was given"
            )))
        }
        (Some(l), None) => l,
        (None, Some((text, name))) => parse_labels(text, name)?,
        (None, None) => {
            return Err(IoError::Format(format!(
                "{source} has no label row; supply a label file"
            )))
        }
    };
    Ok(validate_expression(gene_ids, values, &labels)?)
}

/// 0/1 labels separated by whitespace, commas or tabs, over any number of
/// lines. A leading `label` token is allowed.
pub fn parse_labels(text: &str, source: &str) -> Result<Vec<u8>, ParseError> {
    let mut out = Vec::new();
    for (ln, line) in content_lines(text) {
        let fields = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty());
        for (j, f) in fields.enumerate() {
            if j == 0 && is_label_row(f) {
                continue;
            }
            out.push(parse_label(source, ln, j + 1, f)?);
        }
    }
    if out.is_empty() {
        return Err(parse_err(source, 1, 1, "no labels found"));
    }
    Ok(out)
}

pub fn read_expression(path: &Path, labels: Option<&Path>) -> Result<ExpressionDataset, IoError> {
    let text = read_text(path)?;
    let label_text = labels.map(read_text).transpose()?;
    let label_name = labels.map(|p| p.display().to_string());
    parse_expression(
        &text,
        &path.display().to_string(),
        label_text.as_deref().zip(label_name.as_deref()),
    )
}

/// Parse `gene_id, z` rows. A first row whose second field is not numeric is
/// taken as a header.
pub fn parse_z(text: &str, source: &str) -> Result<ZScoreDataset, IoError> {
    let mut ids = Vec::new();
    let mut z = Vec::new();
    let mut delim = None;
    for (ln, line) in content_lines(text) {
        let d = *delim.get_or_insert_with(|| Delim::detect(line));
        let fields = d.split(line);
        if fields.len() != 2 {
            return Err(parse_err(
                source,
                ln,
                fields.len().min(2) + 1,
                format!("expected 2 fields (gene_id, z), found {}", fields.len()),
            )
            .into());
        }
        if ids.is_empty() && z.is_empty() && fields[1].parse::<f64>().is_err() {
            continue;
        }
        if fields[0].is_empty() {
            return Err(parse_err(source, ln, 1, "empty gene id").into());
        }
        z.push(parse_real(source, ln, 2, fields[1])?);
        ids.push(fields[0].to_string());
    }
    Ok(ZScoreDataset::new(ids, z)?)
}

pub fn read_z(path: &Path) -> Result<ZScoreDataset, IoError> {
    parse_z(&read_text(path)?, &path.display().to_string())
}

/// Flat `key = value` text; `#` starts a comment.
pub fn parse_key_values(text: &str, source: &str) -> Result<BTreeMap<String, String>, ParseError> {
    let mut out = BTreeMap::new();
    for (ln, line) in content_lines(text) {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| parse_err(source, ln, 1, "expected key = value"))?;
        let k = k.trim().replace('-', "_");
        if k.is_empty() {
            return Err(parse_err(source, ln, 1, "empty key"));
        }
        if out.insert(k.clone(), v.trim().to_string()).is_some() {
            return Err(parse_err(source, ln, 1, format!("duplicate key '{k}'")));
        }
    }
    Ok(out)
}

/// Shortest representation that parses back to the same value.
fn real(x: f64) -> String {
    format!("{x}")
}

pub fn format_z(data: &ZScoreDataset) -> String {
    let mut s = String::from("gene_id\tz\n");
    for (id, z) in data.gene_ids().iter().zip(data.z()) {
        let _ = writeln!(s, "{id}\t{}", real(*z));
    }
    s
}

/// Expression table with an inline `label` row after the header.
pub fn format_expression(data: &ExpressionDataset) -> String {
    let mut s = String::from("gene_id");
    for j in 0..data.n_samples() {
        let _ = write!(s, "\ts{}", j + 1);
    }
    s.push_str("\nlabel");
    for &l in data.labels() {
        let _ = write!(s, "\t{}", u8::from(l));
    }
    s.push('\n');
    for (id, row) in data.gene_ids().iter().zip(data.rows()) {
        s.push_str(id);
        for v in row {
            let _ = write!(s, "\t{}", real(*v));
        }
        s.push('\n');
    }
    s
}

pub fn format_truth(ids: &[String], truth: &[GeneClass]) -> String {
    let mut s = String::from("gene_id\tclass\tpositive\n");
    for (id, t) in ids.iter().zip(truth) {
        let _ = writeln!(s, "{id}\t{}\t{}", t.as_str(), u8::from(t.is_positive()));
    }
    s
}

/// Per-gene table `gene_id, mean_rank, mode_rank, v`.
pub fn format_summary(ids: &[String], summary: &PosteriorSummary) -> String {
    let mut s = String::from("gene_id\tmean_rank\tmode_rank\tv\n");
    for (g, id) in ids.iter().enumerate() {
        let _ = writeln!(
            s,
            "{id}\t{}\t{}\t{}",
            real(summary.mean_rank[g]),
            summary.mode_rank[g],
            real(summary.v[g])
        );
    }
    s
}

/// Gene ids and mode ranks from a summary table.
pub fn parse_summary_mode_ranks(text: &str, source: &str) -> Result<Vec<(String, u32)>, ParseError> {
    let mut lines = content_lines(text);
    let (hl, header) = lines.next().ok_or_else(|| parse_err(source, 1, 1, "empty summary"))?;
    let delim = Delim::detect(header);
    let cols = delim.split(header);
    let col = cols
        .iter()
        .position(|c| *c == "mode_rank")
        .ok_or_else(|| parse_err(source, hl, 1, "no mode_rank column"))?;
    let mut out = Vec::new();
    for (ln, line) in lines {
        let fields = delim.split(line);
        if fields.len() != cols.len() {
            return Err(parse_err(
                source,
                ln,
                fields.len().min(cols.len()) + 1,
                format!("expected {} fields, found {}", cols.len(), fields.len()),
            ));
        }
        let r = fields[col]
            .parse::<u32>()
            .map_err(|_| parse_err(source, ln, col + 1, format!("'{}' is not a rank", fields[col])))?;
        out.push((fields[0].to_string(), r));
    }
    Ok(out)
}

/// Chain-level statistics written next to a summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainStats {
    pub model: String,
    pub n_genes: usize,
    pub retained_iterations: u64,
    pub c_m: usize,
    pub k_distribution: BTreeMap<usize, u64>,
    pub rank_ties: u64,
    pub gamma: TraceSummary,
}

/// Moments and quantiles of a scalar trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub q025: f64,
    pub median: f64,
    pub q975: f64,
    pub max: f64,
}

impl TraceSummary {
    pub fn from_trace(trace: &[f64]) -> Option<Self> {
        if trace.is_empty() {
            return None;
        }
        let n = trace.len() as f64;
        let mean = trace.iter().sum::<f64>() / n;
        let sd = if trace.len() > 1 {
            (trace.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let mut sorted = trace.to_vec();
        sorted.sort_by(f64::total_cmp);
        // nearest-rank quantile
        let q = |p: f64| sorted[((p * n).ceil() as usize).clamp(1, sorted.len()) - 1];
        Some(Self {
            mean,
            sd,
            min: sorted[0],
            q025: q(0.025),
            median: q(0.5),
            q975: q(0.975),
            max: sorted[sorted.len() - 1],
        })
    }
}

/// One retained iteration of either sampler, as written to a chain dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpRecord {
    pub model: String,
    pub iteration: u64,
    pub gamma: f64,
    pub k: usize,
    /// φ² per cluster (relevance model) or μ per cluster (baseline).
    pub params: Vec<f64>,
    pub assignments: Vec<usize>,
    /// Empty for the reduced and baseline models.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub alpha: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub beta: Vec<f64>,
    /// Per gene (full model) or a single shared value (baseline).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sigma2: Vec<f64>,
}

impl DumpRecord {
    pub fn from_brd(s: &ChainState) -> Self {
        Self {
            model: "brd".into(),
            iteration: s.iteration,
            gamma: s.gamma,
            k: s.k(),
            params: s.partition.params.clone(),
            assignments: s.partition.assignments.clone(),
            alpha: s.alpha.clone(),
            beta: s.beta.clone(),
            sigma2: s.sigma2.clone(),
        }
    }

    pub fn from_bdp(s: &BdpState) -> Self {
        Self {
            model: "bdp".into(),
            iteration: s.iteration,
            gamma: s.gamma,
            k: s.k(),
            params: s.partition.params.clone(),
            assignments: s.partition.assignments.clone(),
            alpha: Vec::new(),
            beta: Vec::new(),
            sigma2: vec![s.sigma2],
        }
    }

    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("dump records serialize");
        s.push('\n');
        s
    }
}

/// Read every record of a line-delimited chain dump.
pub fn read_chain_dump(path: &Path) -> Result<Vec<DumpRecord>, IoError> {
    let f = fs::File::open(path).map_err(|e| IoError::file(path, e))?;
    let source = path.display().to_string();
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| IoError::file(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DumpRecord =
            serde_json::from_str(&line).map_err(|e| parse_err(&source, i + 1, e.column(), e.to_string()))?;
        if rec.assignments.iter().any(|&c| c >= rec.params.len()) || rec.k != rec.params.len() {
            return Err(parse_err(&source, i + 1, 1, "inconsistent cluster labels").into());
        }
        out.push(rec);
    }
    if out.is_empty() {
        return Err(parse_err(&source, 1, 1, "chain dump is empty").into());
    }
    Ok(out)
}

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

/// Table with one row per design and `method:measure` column pairs of AUC
/// mean and standard error in percent, followed by modal cluster counts.
pub fn format_report_table(reports: &[EvalReport]) -> String {
    let mut keys = Vec::new();
    let mut methods = Vec::new();
    for r in reports {
        for c in &r.columns {
            if !keys.contains(&c.key) {
                keys.push(c.key);
            }
        }
        for c in &r.c_m {
            if !methods.contains(&c.method) {
                methods.push(c.method);
            }
        }
    }
    let mut s = String::from("design\treplicates");
    for k in &keys {
        let _ = write!(s, "\t{k}:auc_pct\t{k}:se_pct");
    }
    for m in &methods {
        let _ = write!(s, "\t{m}:c_m_mean\t{m}:c_m_se");
    }
    s.push('\n');
    for r in reports {
        let _ = write!(s, "{}\t{}", r.design, r.replicates);
        for k in &keys {
            match r.column(k.method, k.measure) {
                Some(c) => {
                    let _ = write!(s, "\t{}\t{}", pct(c.mean), pct(c.se));
                }
                None => s.push_str("\tNA\tNA"),
            }
        }
        for m in &methods {
            match r.cm(*m) {
                Some(c) => {
                    let _ = write!(s, "\t{:.4}\t{:.4}", c.mean, c.se);
                }
                None => s.push_str("\tNA\tNA"),
            }
        }
        s.push('\n');
    }
    s
}

/// Paired comparisons of AUC columns.
pub fn format_comparisons(report: &EvalReport) -> String {
    let mut s = String::from("design\tfirst\tsecond\tmean_difference_pct\tt_statistic\tp_value\n");
    for c in &report.comparisons {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{:.4}\t{:.6}",
            report.design,
            c.first,
            c.second,
            pct(c.mean_difference),
            c.t_statistic,
            c.p_value
        );
    }
    s
}

pub fn format_sensitivity(points: &[SensitivityPoint]) -> String {
    let mut s = String::from("# modal cluster count on null data per prior location a (scale b)\n");
    s.push_str("a\tb\tc_m_mean\tc_m_se\thalf_width_95\tdatasets\n");
    for p in points {
        let _ = writeln!(
            s,
            "{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{}",
            real(p.a),
            real(p.b),
            p.mean,
            p.se,
            p.half_width,
            p.values.len()
        );
    }
    s
}

/// Bar heights of the mode-rank histogram.
pub fn rank_histogram(ranks: &[u32]) -> BTreeMap<u32, usize> {
    let mut h = BTreeMap::new();
    for &r in ranks {
        *h.entry(r).or_insert(0) += 1;
    }
    h
}

pub fn format_rank_histogram(hist: &BTreeMap<u32, usize>) -> String {
    let mut s = String::from("# histogram of mode ranks; x = rank group (1 = least relevant), y = genes\n");
    s.push_str("mode_rank\tgene_count\n");
    for (r, c) in hist {
        let _ = writeln!(s, "{r}\t{c}");
    }
    s
}

pub fn format_density(grid: &[f64], density: &[f64]) -> String {
    let mut s = String::from("# posterior predictive null density N(z; 0, phi0^2) averaged over iterations\n");
    s.push_str("z\tdensity_per_unit_z\n");
    for (x, y) in grid.iter().zip(density) {
        let _ = writeln!(s, "{}\t{:.10e}", real(*x), y);
    }
    s
}

/// Density-scaled histogram of observed values over `bins` equal bins on
/// [lo, hi]; values outside the range are dropped from the counts but not
/// from the normalizing total.
pub fn histogram_density(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<(f64, f64, usize, f64)> {
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        if v >= lo && v <= hi {
            let b = (((v - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
    }
    let n = values.len().max(1) as f64;
    counts
        .into_iter()
        .enumerate()
        .map(|(b, c)| {
            let left = lo + b as f64 * width;
            (left, left + width, c, c as f64 / (n * width))
        })
        .collect()
}

pub fn format_histogram_density(bins: &[(f64, f64, usize, f64)]) -> String {
    let mut s = String::from("# observed z histogram scaled to unit area\n");
    s.push_str("bin_left\tbin_right\tcount\tdensity_per_unit_z\n");
    for (l, r, c, d) in bins {
        let _ = writeln!(s, "{}\t{}\t{c}\t{:.10e}", real(*l), real(*r), d);
    }
    s
}

pub fn format_sensitivity_curve(points: &[SensitivityPoint]) -> String {
    let mut s = String::from("# x = prior location a of log gamma, y = mean modal cluster count, 95% t interval\n");
    s.push_str("a\tc_m_mean\thalf_width_95\tlower\tupper\n");
    for p in points {
        let _ = writeln!(
            s,
            "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
            real(p.a),
            p.mean,
            p.half_width,
            p.mean - p.half_width,
            p.mean + p.half_width
        );
    }
    s
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    s
}

pub fn from_json<T: for<'de> Deserialize<'de>>(text: &str, source: &str) -> Result<T, ParseError> {
    serde_json::from_str(text).map_err(|e| parse_err(source, e.line(), e.column(), e.to_string()))
}

/// Files produced by one command, written to a hidden staging directory
/// and moved into the output directory only by [`StagedOutput::commit`].
/// Dropping an uncommitted set removes the staging directory.
#[derive(Debug)]
pub struct StagedOutput {
    target: PathBuf,
    staging: PathBuf,
    files: Vec<String>,
    committed: bool,
    /// The target did not exist before; remove it again if nothing is committed.
    created_target: bool,
}

impl StagedOutput {
    pub fn new(target: &Path) -> Result<Self, IoError> {
        let created_target = !target.exists();
        fs::create_dir_all(target).map_err(|e| IoError::file(target, e))?;
        let staging = target.join(format!(".staging-{}", std::process::id()));
        if staging.exists() {
            fs::remove_dir_all(&staging).map_err(|e| IoError::file(&staging, e))?;
        }
        fs::create_dir(&staging).map_err(|e| IoError::file(&staging, e))?;
        Ok(Self {
            target: target.to_path_buf(),
            staging,
            files: Vec::new(),
            committed: false,
            created_target,
        })
    }

    pub fn target(&self) -> &Path {
        &self.target
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), IoError> {
        let path = self.staging.join(name);
        fs::write(&path, contents).map_err(|e| IoError::file(&path, e))?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// Buffered writer for large streamed files such as chain dumps.
    pub fn create(&mut self, name: &str) -> Result<std::io::BufWriter<fs::File>, IoError> {
        let path = self.staging.join(name);
        let f = fs::File::create(&path).map_err(|e| IoError::file(&path, e))?;
        self.files.push(name.to_string());
        Ok(std::io::BufWriter::new(f))
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    pub fn commit(mut self) -> Result<Vec<PathBuf>, IoError> {
        let mut out = Vec::with_capacity(self.files.len());
        for name in &self.files {
            let from = self.staging.join(name);
            let to = self.target.join(name);
            fs::rename(&from, &to).map_err(|e| IoError::file(&to, e))?;
            out.push(to);
        }
        self.committed = true;
        let _ = fs::remove_dir_all(&self.staging);
        Ok(out)
    }
}

impl Drop for StagedOutput {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_dir_all(&self.staging);
            if self.created_target {
                // only succeeds while empty
                let _ = fs::remove_dir(&self.target);
            }
        }
    }
}

/// Write helper that maps failures to [`IoError`].
pub fn write_all(w: &mut impl Write, path: &str, bytes: &[u8]) -> Result<(), IoError> {
    w.write_all(bytes).map_err(|e| IoError::file(Path::new(path), e))
}
