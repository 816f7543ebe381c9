//! Report serialization: CSV, JSON and Markdown.
//!
//! JSON keys follow struct declaration order and floats use shortest
//! round-trip formatting, so identical inputs give byte-identical reports.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{CrossValMatrix, IpdResult};
use crate::pipeline::{PairOutcome, PipelineConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    #[default]
    Json,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            "markdown" | "md" => Ok(Self::Markdown),
            other => Err(Error::invalid(format!("unknown report format {other:?}"))),
        }
    }
}

/// Result of one real-vs-synthetic evaluation, with everything needed to
/// reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IpdReport {
    pub tool_version: String,
    pub real_dataset: String,
    pub synth_dataset: String,
    pub class_filter: Option<u32>,
    pub config: PipelineConfig,
    pub result: IpdResult,
    pub image_pairs: Vec<PairOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub train_domain: String,
    pub eval_pair: (String, String),
    /// Full result when the cell was computed rather than supplied.
    pub result: Option<IpdResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValReport {
    pub tool_version: String,
    pub config: Option<PipelineConfig>,
    pub matrix: CrossValMatrix,
    pub cells: Vec<CellResult>,
}

impl CrossValReport {
    pub fn new(matrix: CrossValMatrix) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config: None,
            matrix,
            cells: Vec::new(),
        }
    }
}

fn check_complete(m: &CrossValMatrix) -> Result<()> {
    if m.domains.is_empty() || m.rows.is_empty() {
        return Err(Error::IncompleteResults("nothing to render: no domains".into()));
    }
    if m.rows.len() != m.domains.len() {
        return Err(Error::IncompleteResults(format!(
            "{} rows for {} domains",
            m.rows.len(),
            m.domains.len()
        )));
    }
    for (train, row) in m.domains.iter().zip(&m.rows) {
        if row.len() != m.columns.len() {
            return Err(Error::IncompleteResults(format!("row {train} has {} cells", row.len())));
        }
        for c in row {
            if c.involves(train) != c.ipd.is_some() {
                return Err(Error::IncompleteResults(format!(
                    "cell train={train} pair=({}, {}) is {}",
                    c.eval_pair.0,
                    c.eval_pair.1,
                    if c.ipd.is_some() { "unexpectedly filled" } else { "missing" }
                )));
            }
        }
    }
    Ok(())
}

/// Renders a complete cross-validation report.
pub fn write_report(report: &CrossValReport, format: ReportFormat) -> Result<String> {
    check_complete(&report.matrix)?;
    match format {
        ReportFormat::Json => Ok(serde_json::to_string_pretty(report)? + "\n"),
        ReportFormat::Markdown => Ok(render_crossval_markdown(&report.matrix)),
        ReportFormat::Csv => render_crossval_csv(&report.matrix),
    }
}

fn md_escape(s: &str) -> String {
    s.replace('|', "\\|")
}

fn pair_label(a: &str, b: &str) -> String {
    format!("‖{} − {}‖", md_escape(a), md_escape(b))
}

/// Rows are training domains, columns are domain pairs; cells outside the
/// training domain show `-` and each row's minimum is bold.
pub fn render_crossval_markdown(m: &CrossValMatrix) -> String {
    let mut out = String::from("| Train\\Eval |");
    for (a, b) in &m.columns {
        let _ = write!(out, " {} |", pair_label(a, b));
    }
    out.push_str("\n|---|");
    out.push_str(&"---|".repeat(m.columns.len()));
    out.push('\n');
    for ((train, row), min) in m.domains.iter().zip(&m.rows).zip(m.row_minima()) {
        let _ = write!(out, "| {} |", md_escape(train));
        for c in row {
            match c.ipd {
                None => out.push_str(" - |"),
                Some(v) if Some(v) == min => {
                    let _ = write!(out, " **{v:.4}** |");
                }
                Some(v) => {
                    let _ = write!(out, " {v:.4} |");
                }
            }
        }
        out.push('\n');
    }
    out
}

fn render_crossval_csv(m: &CrossValMatrix) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["train_domain", "domain_a", "domain_b", "ipd", "row_minimum"])?;
    for (row, min) in m.rows.iter().zip(m.row_minima()) {
        for c in row {
            let (ipd, is_min) = match c.ipd {
                Some(v) => (format!("{v}"), (Some(v) == min).to_string()),
                None => (String::new(), String::new()),
            };
            w.write_record([
                c.train_domain.as_str(),
                c.eval_pair.0.as_str(),
                c.eval_pair.1.as_str(),
                ipd.as_str(),
                is_min.as_str(),
            ])?;
        }
    }
    finish_csv(w)
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| Error::invalid(format!("csv buffer: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::invalid(format!("csv utf-8: {e}")))
}

pub fn write_ipd_report(report: &IpdReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => Ok(serde_json::to_string_pretty(report)? + "\n"),
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record([
                "dataset_pair_id",
                "image_id",
                "real_index",
                "synth_index",
                "p_real",
                "p_synth",
                "abs_diff",
            ])?;
            for r in &report.result.records {
                w.write_record([
                    r.dataset_pair_id.clone(),
                    r.image_id.clone(),
                    r.real_index.to_string(),
                    r.synth_index.to_string(),
                    format!("{}", r.p_real),
                    format!("{}", r.p_synth),
                    format!("{}", r.abs_diff()),
                ])?;
            }
            finish_csv(w)
        }
        ReportFormat::Markdown => {
            let r = &report.result;
            let mut out = String::new();
            let _ = writeln!(out, "| Real | Synthetic | IPD | Pairs | Unmatched real | Unmatched synthetic |");
            let _ = writeln!(out, "|---|---|---|---|---|---|");
            let _ = writeln!(
                out,
                "| {} | {} | {:.4} | {} | {} | {} |",
                md_escape(&report.real_dataset),
                md_escape(&report.synth_dataset),
                r.ipd,
                r.instance_count,
                r.unmatched_real_total,
                r.unmatched_synth_total
            );
            out.push('\n');
            let _ = writeln!(out, "| Image | IPD | Pairs | Unmatched real | Unmatched synthetic |");
            let _ = writeln!(out, "|---|---|---|---|---|");
            for c in &r.per_image_breakdown {
                let v = c.ipd_contribution.map_or("-".to_string(), |v| format!("{v:.4}"));
                let _ = writeln!(
                    out,
                    "| {} | {v} | {} | {} | {} |",
                    md_escape(&c.image_id),
                    c.pair_count,
                    c.unmatched_real,
                    c.unmatched_synth
                );
            }
            Ok(out)
        }
    }
}
