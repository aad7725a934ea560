//! Versioned CSV files. Every file starts with the line [`CSV_VERSION`];
//! readers refuse anything else.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::bench::RunResult;
use crate::energy::ProfileReport;
use crate::error::{Error, Result};
use crate::explore::{Fit, RobustnessRow, RobustnessStats, Savings, SearchResult};
use crate::fpcore::{OpClass, Width};
use crate::instrument::TraceRecord;
use crate::scope::{format_genome, RuleKind};

pub const CSV_VERSION: &str = "# precis-csv v1";

/// Serialize rows under the version line. Headers come from the row type,
/// so an empty table still has them.
pub fn to_csv_string<T: Serialize>(rows: &[T], header: &[&str]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.serialize(row)?;
    }
    let body = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    let body = String::from_utf8(body).map_err(|e| Error::Format(e.to_string()))?;
    Ok(format!("{CSV_VERSION}\n{body}"))
}

pub fn write_csv<T: Serialize>(path: impl AsRef<Path>, rows: &[T], header: &[&str]) -> Result<()> {
    let text = to_csv_string(rows, header)?;
    let mut f = fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

/// Strip and check the version line.
pub fn check_version(text: &str) -> Result<&str> {
    let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
    if first.trim_end_matches('\r') != CSV_VERSION {
        return Err(Error::Format(format!("expected `{CSV_VERSION}` as the first line, found `{first}`")));
    }
    Ok(rest)
}

pub fn parse_csv<T: DeserializeOwned>(text: &str) -> Result<Vec<T>> {
    let body = check_version(text)?;
    let mut r = csv::Reader::from_reader(body.as_bytes());
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn read_csv<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    parse_csv(&fs::read_to_string(path)?)
}

// --- evaluation log and frontier ---

pub const EVAL_HEADER: &[&str] = &[
    "config_id",
    "rule_kind",
    "genome",
    "error_pct",
    "fpu_norm",
    "mem_norm",
    "fpu_pj",
    "mem_pj",
    "is_frontier",
    "is_hull",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub config_id: usize,
    pub rule_kind: RuleKind,
    /// Semicolon-joined mantissa widths.
    pub genome: String,
    pub error_pct: f64,
    pub fpu_norm: f64,
    pub mem_norm: f64,
    pub fpu_pj: f64,
    pub mem_pj: f64,
    pub is_frontier: bool,
    pub is_hull: bool,
}

/// One row per evaluation, in evaluation order.
pub fn eval_rows(result: &SearchResult) -> Vec<EvalRow> {
    let f = &result.frontier;
    result
        .log
        .iter()
        .enumerate()
        .map(|(i, p)| EvalRow {
            config_id: i,
            rule_kind: p.config.rule_kind,
            genome: format_genome(&p.config.genome),
            error_pct: p.error_pct,
            fpu_norm: p.fpu_norm,
            mem_norm: p.mem_norm,
            fpu_pj: p.fpu_pj,
            mem_pj: p.mem_pj,
            is_frontier: f.point_ids.contains(&i),
            is_hull: f.hull_ids.contains(&i),
        })
        .collect()
}

/// Frontier rows only, in ascending error.
pub fn frontier_rows(result: &SearchResult) -> Vec<EvalRow> {
    let all = eval_rows(result);
    result.frontier.point_ids.iter().map(|&i| all[i].clone()).collect()
}

pub const SAVINGS_HEADER: &[&str] = &["rule_kind", "threshold_pct", "fpu_saving_pct", "mem_saving_pct"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavingsRow {
    pub rule_kind: RuleKind,
    pub threshold_pct: f64,
    pub fpu_saving_pct: f64,
    pub mem_saving_pct: f64,
}

pub fn savings_rows(rule_kind: RuleKind, savings: &[Savings]) -> Vec<SavingsRow> {
    savings
        .iter()
        .map(|s| SavingsRow {
            rule_kind,
            threshold_pct: s.threshold_pct,
            fpu_saving_pct: s.fpu_saving_pct,
            mem_saving_pct: s.mem_saving_pct,
        })
        .collect()
}

// --- profile ---

pub const PROFILE_HEADER: &[&str] = &[
    "scope",
    "flops_single",
    "flops_double",
    "add",
    "sub",
    "mul",
    "div",
    "mem_bits_loaded",
    "mem_bits_stored",
    "share_pct",
    "top10_rank",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileCsvRow {
    pub scope: String,
    pub flops_single: u64,
    pub flops_double: u64,
    pub add: u64,
    pub sub: u64,
    pub mul: u64,
    pub div: u64,
    pub mem_bits_loaded: u64,
    pub mem_bits_stored: u64,
    pub share_pct: f64,
    /// 1-based rank among the top scopes, empty otherwise.
    pub top10_rank: Option<usize>,
}

pub fn profile_rows(report: &ProfileReport) -> Vec<ProfileCsvRow> {
    let all: u64 = report.rows.iter().map(|r| r.total()).sum();
    report
        .rows
        .iter()
        .map(|r| {
            let c = &r.counters;
            let op = |o: OpClass| Width::ALL.iter().map(|&w| c.flop_count(o, w)).sum();
            ProfileCsvRow {
                scope: r.scope.to_string(),
                flops_single: c.flops_of_width(Width::Single),
                flops_double: c.flops_of_width(Width::Double),
                add: op(OpClass::Add),
                sub: op(OpClass::Sub),
                mul: op(OpClass::Mul),
                div: op(OpClass::Div),
                mem_bits_loaded: c.mem_bits_loaded(),
                mem_bits_stored: c.mem_bits_stored(),
                share_pct: if all == 0 { 0.0 } else { 100.0 * r.total() as f64 / all as f64 },
                top10_rank: report.top10.iter().position(|s| *s == r.scope).map(|p| p + 1),
            }
        })
        .collect()
}

pub const SUMMARY_HEADER: &[&str] = &["metric", "value"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub metric: String,
    pub value: String,
}

pub fn profile_summary_rows(report: &ProfileReport) -> Vec<SummaryRow> {
    let total: u64 = report.rows.iter().map(|r| r.total()).sum();
    let single: u64 = report.rows.iter().map(|r| r.counters.flops_of_width(Width::Single)).sum();
    let row = |m: &str, v: String| SummaryRow { metric: m.to_string(), value: v };
    vec![
        row("total_flops", total.to_string()),
        row("flops_single", single.to_string()),
        row("flops_double", (total - single).to_string()),
        row("single_ratio", report.single_ratio.to_string()),
        row("double_ratio", report.double_ratio.to_string()),
        row("top10", report.top10.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(";")),
        row("top10_coverage", report.top10_coverage.to_string()),
    ]
}

// --- single runs ---

pub const RUN_HEADER: &[&str] = &[
    "input",
    "rule_kind",
    "genome",
    "error_pct",
    "fpu_norm",
    "mem_norm",
    "fpu_pj",
    "mem_pj",
    "flops_single",
    "flops_double",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    /// Input index, or `median` for the summary row.
    pub input: String,
    pub rule_kind: RuleKind,
    pub genome: String,
    pub error_pct: f64,
    pub fpu_norm: f64,
    pub mem_norm: f64,
    pub fpu_pj: f64,
    pub mem_pj: f64,
    pub flops_single: u64,
    pub flops_double: u64,
}

impl RunRow {
    pub fn from_result(input: String, rule_kind: RuleKind, genome: &[u32], r: &RunResult) -> Self {
        Self {
            input,
            rule_kind,
            genome: format_genome(genome),
            error_pct: r.error_pct,
            fpu_norm: r.fpu_norm(),
            mem_norm: r.mem_norm(),
            fpu_pj: r.fpu_pj(),
            mem_pj: r.mem_pj(),
            flops_single: r.energy.flops_single,
            flops_double: r.energy.flops_double,
        }
    }
}

/// Trace lines under the version line and a fixed header.
pub fn trace_csv(records: &[TraceRecord]) -> String {
    let mut out = format!("{CSV_VERSION}\nscope,op,width,a_hex,b_hex,r_hex\n");
    for r in records {
        out.push_str(&r.to_string());
        out.push('\n');
    }
    out
}

// --- robustness ---

pub const ROBUSTNESS_HEADER: &[&str] =
    &["config_id", "genome", "train_error_pct", "test_error_pct", "train_energy", "test_energy"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessCsvRow {
    pub config_id: usize,
    pub genome: String,
    pub train_error_pct: f64,
    pub test_error_pct: f64,
    pub train_energy: f64,
    pub test_energy: f64,
}

pub const FIT_HEADER: &[&str] = &["quantity", "slope", "intercept", "r", "defined"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub quantity: String,
    /// Empty cells when undefined.
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub r: Option<f64>,
    pub defined: bool,
}

/// `config_ids` label the rows, normally the ids from the frontier file.
pub fn robustness_csv_rows(rows: &[RobustnessRow], config_ids: &[usize]) -> Vec<RobustnessCsvRow> {
    rows.iter()
        .zip(config_ids)
        .map(|(r, &id)| RobustnessCsvRow {
            config_id: id,
            genome: format_genome(&r.config.genome),
            train_error_pct: r.train_error_pct,
            test_error_pct: r.test_error_pct,
            train_energy: r.train_energy,
            test_energy: r.test_energy,
        })
        .collect()
}

/// Error and energy fit rows; `None` writes both as undefined.
pub fn fit_csv_rows(stats: Option<&RobustnessStats>) -> Vec<FitRow> {
    let row = |q: &str, f: Option<&Fit>| FitRow {
        quantity: q.to_string(),
        slope: f.map(|f| f.slope),
        intercept: f.map(|f| f.intercept),
        r: f.and_then(|f| f.r),
        defined: f.is_some_and(|f| f.r.is_some()),
    };
    vec![row("error", stats.map(|s| &s.error_fit)), row("energy", stats.map(|s| &s.energy_fit))]
}
