//! Recall@K, MRecall@K and report tables.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{DocId, JudgedQuery};
use crate::error::{Error, Result};
use crate::query::Template;
use crate::retrieval::RankedList;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalConfig {
    pub k_values: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { k_values: vec![1, 5, 10, 100] }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_values.is_empty()
            || self.k_values[0] == 0
            || self.k_values.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::InvalidConfig(format!(
                "k values must be non-empty, strictly ascending and at least 1, got {:?}",
                self.k_values
            )));
        }
        Ok(())
    }

    pub fn max_k(&self) -> usize {
        *self.k_values.last().expect("validated")
    }
}

fn hits(relevant: &BTreeSet<DocId>, ranked: &RankedList, k: usize) -> usize {
    ranked.doc_ids().take(k).filter(|d| relevant.contains(d)).count()
}

pub fn recall_at_k(relevant: &BTreeSet<DocId>, ranked: &RankedList, k: usize) -> Result<f64> {
    if relevant.is_empty() {
        return Err(Error::EmptyRelevantSet);
    }
    Ok(hits(relevant, ranked, k) as f64 / relevant.len() as f64)
}

/// 1 when every answer is in the top `k` (few answers) or at least `k`
/// answers are (many answers), else 0.
pub fn mrecall_at_k(relevant: &BTreeSet<DocId>, ranked: &RankedList, k: usize) -> Result<f64> {
    if relevant.is_empty() {
        return Err(Error::EmptyRelevantSet);
    }
    let h = hits(relevant, ranked, k);
    let ok = if relevant.len() <= k { h == relevant.len() } else { h >= k };
    Ok(if ok { 1.0 } else { 0.0 })
}

/// Metrics of one query under one retriever, aligned with `k_values`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryResult {
    pub query_id: u32,
    pub template: Template,
    pub recall: Vec<f64>,
    pub mrecall: Vec<f64>,
}

pub fn score_query(q: &JudgedQuery, ranked: &RankedList, cfg: &EvalConfig) -> Result<QueryResult> {
    let mut recall = Vec::with_capacity(cfg.k_values.len());
    let mut mrecall = Vec::with_capacity(cfg.k_values.len());
    for &k in &cfg.k_values {
        recall.push(recall_at_k(&q.relevant, ranked, k)?);
        mrecall.push(mrecall_at_k(&q.relevant, ranked, k)?);
    }
    Ok(QueryResult { query_id: q.query_id, template: q.template(), recall, mrecall })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrieverRun {
    pub name: String,
    pub results: Vec<QueryResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrieverSummary {
    pub name: String,
    pub recall: Vec<f64>,
    pub mrecall: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateRow {
    pub template: Template,
    pub queries: usize,
    /// Recall at the largest K, one value per retriever.
    pub recall: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub k_values: Vec<usize>,
    pub retrievers: Vec<RetrieverSummary>,
    pub templates: Vec<TemplateRow>,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 { 0.0 } else { s / n as f64 }
}

/// Unweighted means over queries. Every run must cover the same queries.
pub fn aggregate(runs: &[RetrieverRun], cfg: &EvalConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let Some(first) = runs.first() else {
        return Err(Error::InvalidConfig("no retriever results to aggregate".into()));
    };
    if first.results.is_empty() {
        return Err(Error::InvalidConfig("no queries to aggregate".into()));
    }
    let ids: Vec<u32> = first.results.iter().map(|r| r.query_id).collect();
    let nk = cfg.k_values.len();
    for run in runs {
        if run.results.iter().map(|r| r.query_id).ne(ids.iter().copied())
            || run.results.iter().any(|r| r.recall.len() != nk || r.mrecall.len() != nk)
        {
            return Err(Error::ShapeMismatch(format!("results of {:?} do not line up", run.name)));
        }
    }
    let retrievers = runs
        .iter()
        .map(|run| RetrieverSummary {
            name: run.name.clone(),
            recall: (0..nk).map(|i| mean(run.results.iter().map(|r| r.recall[i]))).collect(),
            mrecall: (0..nk).map(|i| mean(run.results.iter().map(|r| r.mrecall[i]))).collect(),
        })
        .collect();
    let templates = Template::ALL
        .iter()
        .filter_map(|&t| {
            let count = first.results.iter().filter(|r| r.template == t).count();
            (count > 0).then(|| TemplateRow {
                template: t,
                queries: count,
                recall: runs
                    .iter()
                    .map(|run| mean(run.results.iter().filter(|r| r.template == t).map(|r| r.recall[nk - 1])))
                    .collect(),
            })
        })
        .collect();
    Ok(EvalReport { k_values: cfg.k_values.clone(), retrievers, templates })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Tsv,
    Markdown,
}

fn table(fmt: ReportFormat, header: &[String], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    match fmt {
        ReportFormat::Tsv => {
            let _ = writeln!(out, "{}", header.join("\t"));
            for r in rows {
                let _ = writeln!(out, "{}", r.join("\t"));
            }
        }
        ReportFormat::Markdown => {
            let _ = writeln!(out, "| {} |", header.join(" | "));
            let _ = writeln!(out, "|{}", "---|".repeat(header.len()));
            for r in rows {
                let _ = writeln!(out, "| {} |", r.join(" | "));
            }
        }
    }
    out
}

fn num(x: f64) -> String {
    format!("{x:.3}")
}

/// Averages table: one row per retriever, Recall@k then MRecall@k columns.
pub fn emit_averages(report: &EvalReport, fmt: ReportFormat) -> String {
    let mut header = vec!["retriever".to_string()];
    header.extend(report.k_values.iter().map(|k| format!("Recall@{k}")));
    header.extend(report.k_values.iter().map(|k| format!("MRecall@{k}")));
    let rows: Vec<Vec<String>> = report
        .retrievers
        .iter()
        .map(|r| {
            let mut row = vec![r.name.clone()];
            row.extend(r.recall.iter().chain(&r.mrecall).map(|&x| num(x)));
            row
        })
        .collect();
    table(fmt, &header, &rows)
}

/// Per-template Recall at the largest K for the named retrievers, in the
/// given order. Unknown names are skipped.
pub fn emit_templates(report: &EvalReport, retrievers: &[&str], fmt: ReportFormat) -> String {
    let cols: Vec<usize> = retrievers
        .iter()
        .filter_map(|name| report.retrievers.iter().position(|r| r.name == *name))
        .collect();
    let max_k = report.k_values.last().copied().unwrap_or(0);
    let mut header = vec!["template".to_string(), "queries".to_string()];
    header.extend(cols.iter().map(|&c| format!("{} Recall@{max_k}", report.retrievers[c].name)));
    let rows: Vec<Vec<String>> = report
        .templates
        .iter()
        .map(|t| {
            let mut row = vec![t.template.label().to_string(), t.queries.to_string()];
            row.extend(cols.iter().map(|&c| num(t.recall[c])));
            row
        })
        .collect();
    table(fmt, &header, &rows)
}

pub fn emit_report(report: &EvalReport, fmt: ReportFormat) -> String {
    let names: Vec<&str> = report.retrievers.iter().map(|r| r.name.as_str()).collect();
    format!("{}\n{}", emit_averages(report, fmt), emit_templates(report, &names, fmt))
}

/// One line per (retriever, query) with every Recall and MRecall value.
pub fn per_query_tsv(runs: &[RetrieverRun], k_values: &[usize]) -> String {
    let mut out = String::from("retriever\tquery_id\ttemplate");
    for k in k_values {
        let _ = write!(out, "\trecall@{k}");
    }
    for k in k_values {
        let _ = write!(out, "\tmrecall@{k}");
    }
    out.push('\n');
    for run in runs {
        for r in &run.results {
            let _ = write!(out, "{}\t{}\t{}", run.name, r.query_id, r.template.label());
            for x in r.recall.iter().chain(&r.mrecall) {
                let _ = write!(out, "\t{x:.6}");
            }
            out.push('\n');
        }
    }
    out
}
