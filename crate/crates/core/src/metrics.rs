//! Statistics over run records: per-method accuracy, the rate of
//! Direct/Inverse conflicts, and hybrid accuracy split by agreement.
//!
//! Accuracy is macro-averaged over runs (the mean of per-run accuracies).
//! The agreement split instead pools counts across runs before dividing,
//! so its partition accuracies always bracket the pooled overall
//! accuracy. Raw values are kept unrounded; rounding to two decimals
//! happens only at display time.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::types::{Method, MethodResult, Problem, RunRecord};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no records to score")]
    EmptyRecords,
    #[error("records contain no hybrid results")]
    MissingHybrid,
    #[error("records contain no results for method {}", .0.key())]
    MissingMethod(Method),
}

/// Whether a method result counts as correct for a problem: normalized
/// string equality with the gold value (MATH) or letter (MathQA). An
/// absent chosen answer is never correct.
pub fn score(result: &MethodResult, problem: &Problem) -> bool {
    score_chosen(result.chosen.as_deref(), problem)
}

/// Correctness of a chosen answer by itself.
pub fn score_chosen(chosen: Option<&str>, problem: &Problem) -> bool {
    match chosen {
        Some(answer) => answer == problem.gold.as_str(),
        None => false,
    }
}

fn per_run<'a, F>(records: &'a [RunRecord], mut pick: F) -> BTreeMap<u32, (u32, u32)>
where
    F: FnMut(&'a RunRecord) -> Option<bool>,
{
    let mut runs: BTreeMap<u32, (u32, u32)> = BTreeMap::new();
    for record in records {
        if let Some(hit) = pick(record) {
            let entry = runs.entry(record.run_index).or_insert((0, 0));
            entry.1 += 1;
            if hit {
                entry.0 += 1;
            }
        }
    }
    runs
}

fn macro_average(runs: &BTreeMap<u32, (u32, u32)>) -> f64 {
    let per_run: Vec<f64> = runs
        .values()
        .map(|(hits, total)| *hits as f64 / *total as f64 * 100.0)
        .collect();
    per_run.iter().sum::<f64>() / per_run.len() as f64
}

/// Percentage of problems the method answered correctly, averaged over
/// run indices.
pub fn accuracy(records: &[RunRecord], method: Method) -> Result<f64, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyRecords);
    }
    let runs = per_run(records, |r| r.result_for(method).map(|m| m.correct));
    if runs.is_empty() {
        return Err(MetricsError::MissingMethod(method));
    }
    Ok(macro_average(&runs))
}

/// Percentage of problems whose hybrid result flags a Direct/Inverse
/// conflict, averaged over run indices.
pub fn conflict_rate(records: &[RunRecord]) -> Result<f64, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyRecords);
    }
    let runs = per_run(records, |r| {
        r.result_for(Method::Hybrid).and_then(|m| m.conflict)
    });
    if runs.is_empty() {
        return Err(MetricsError::MissingHybrid);
    }
    Ok(macro_average(&runs))
}

/// Complement of [`conflict_rate`], defined relationally so the identity
/// `conflict_rate + agreement_rate = 100` holds exactly.
pub fn agreement_rate(records: &[RunRecord]) -> Result<f64, MetricsError> {
    Ok(100.0 - conflict_rate(records)?)
}

/// Hybrid counts for one run, partitioned by the agreement flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RunPartition {
    pub run_index: u32,
    pub agreed_total: u32,
    pub agreed_correct: u32,
    pub disagreed_total: u32,
    pub disagreed_correct: u32,
}

/// Hybrid accuracy partitioned by whether Direct and Inverse agreed.
/// Partition accuracies pool counts across runs; an empty partition
/// reports `None`, never a fabricated zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FinegrainedSplit {
    pub per_run: Vec<RunPartition>,
    pub agreed_accuracy: Option<f64>,
    pub disagreed_accuracy: Option<f64>,
}

impl FinegrainedSplit {
    pub fn agreed_totals(&self) -> (u32, u32) {
        self.per_run
            .iter()
            .fold((0, 0), |(c, t), r| (c + r.agreed_correct, t + r.agreed_total))
    }

    pub fn disagreed_totals(&self) -> (u32, u32) {
        self.per_run.iter().fold((0, 0), |(c, t), r| {
            (c + r.disagreed_correct, t + r.disagreed_total)
        })
    }

    /// Pooled hybrid accuracy over both partitions together.
    pub fn overall_accuracy(&self) -> f64 {
        let (ac, at) = self.agreed_totals();
        let (dc, dt) = self.disagreed_totals();
        (ac + dc) as f64 / (at + dt) as f64 * 100.0
    }
}

/// Partitions problems by the hybrid agreement flag and reports hybrid
/// accuracy within each partition.
pub fn finegrained_split(records: &[RunRecord]) -> Result<FinegrainedSplit, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyRecords);
    }
    let mut runs: BTreeMap<u32, RunPartition> = BTreeMap::new();
    let mut saw_hybrid = false;
    for record in records {
        let Some(result) = record.result_for(Method::Hybrid) else {
            continue;
        };
        let Some(agreement) = result.agreement else {
            continue;
        };
        saw_hybrid = true;
        let entry = runs.entry(record.run_index).or_insert(RunPartition {
            run_index: record.run_index,
            agreed_total: 0,
            agreed_correct: 0,
            disagreed_total: 0,
            disagreed_correct: 0,
        });
        if agreement {
            entry.agreed_total += 1;
            entry.agreed_correct += u32::from(result.correct);
        } else {
            entry.disagreed_total += 1;
            entry.disagreed_correct += u32::from(result.correct);
        }
    }
    if !saw_hybrid {
        return Err(MetricsError::MissingHybrid);
    }
    let split = FinegrainedSplit {
        per_run: runs.into_values().collect(),
        agreed_accuracy: None,
        disagreed_accuracy: None,
    };
    let (ac, at) = split.agreed_totals();
    let (dc, dt) = split.disagreed_totals();
    Ok(FinegrainedSplit {
        agreed_accuracy: (at > 0).then(|| ac as f64 / at as f64 * 100.0),
        disagreed_accuracy: (dt > 0).then(|| dc as f64 / dt as f64 * 100.0),
        ..split
    })
}

/// Everything the report prints, in raw (unrounded) form.
#[derive(Debug, Clone, Serialize)]
pub struct ReportSummary {
    pub runs: u32,
    pub problems: usize,
    pub records: usize,
    pub methods: Vec<(Method, f64)>,
    pub conflict_rate: Option<f64>,
    pub agreement_rate: Option<f64>,
    pub agreed_accuracy: Option<f64>,
    pub disagreed_accuracy: Option<f64>,
}

/// Computes the full summary for the methods present in `methods`,
/// keeping method order.
pub fn summarize(records: &[RunRecord], methods: &[Method]) -> Result<ReportSummary, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyRecords);
    }
    let mut method_rows = Vec::new();
    for &method in methods {
        method_rows.push((method, accuracy(records, method)?));
    }
    let has_hybrid = methods.contains(&Method::Hybrid);
    let (conflict, agreement, agreed, disagreed) = if has_hybrid {
        let c = conflict_rate(records)?;
        let split = finegrained_split(records)?;
        (
            Some(c),
            Some(100.0 - c),
            split.agreed_accuracy,
            split.disagreed_accuracy,
        )
    } else {
        (None, None, None, None)
    };
    let runs = records.iter().map(|r| r.run_index).max().unwrap_or(0) + 1;
    let problems = {
        let ids: std::collections::BTreeSet<&str> =
            records.iter().map(|r| r.problem_id.as_str()).collect();
        ids.len()
    };
    Ok(ReportSummary {
        runs,
        problems,
        records: records.len(),
        methods: method_rows,
        conflict_rate: conflict,
        agreement_rate: agreement,
        agreed_accuracy: agreed,
        disagreed_accuracy: disagreed,
    })
}

fn fmt_pct(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v:.2}"),
        None => "—".to_string(),
    }
}

/// Renders the aligned plain-text tables.
pub fn render_text(summary: &ReportSummary) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "Accuracy by method (%), mean over {} run(s), {} problem(s)\n",
        summary.runs, summary.problems
    ));
    for (method, value) in &summary.methods {
        out.push_str(&format!(
            "  {:<28} {:>8}\n",
            method.display_name(),
            fmt_pct(Some(*value))
        ));
    }
    if let (Some(conflict), Some(agreement)) = (summary.conflict_rate, summary.agreement_rate) {
        out.push('\n');
        out.push_str("Direct/Inverse conflict\n");
        out.push_str(&format!("  {:<28} {:>8}\n", "conflict rate (%)", fmt_pct(Some(conflict))));
        out.push_str(&format!(
            "  {:<28} {:>8}\n",
            "agreement rate (%)",
            fmt_pct(Some(agreement))
        ));
        out.push('\n');
        out.push_str("Hybrid accuracy by agreement partition (%)\n");
        out.push_str(&format!(
            "  {:<28} {:>8}\n",
            "agreed",
            fmt_pct(summary.agreed_accuracy)
        ));
        out.push_str(&format!(
            "  {:<28} {:>8}\n",
            "disagreed",
            fmt_pct(summary.disagreed_accuracy)
        ));
    }
    out
}

/// Machine-readable summary: method key → raw accuracy, plus the
/// conflict and partition figures.
pub fn render_json(summary: &ReportSummary) -> serde_json::Value {
    let methods: BTreeMap<&str, f64> = summary
        .methods
        .iter()
        .map(|(m, v)| (m.key(), *v))
        .collect();
    serde_json::json!({
        "runs": summary.runs,
        "problems": summary.problems,
        "records": summary.records,
        "methods": methods,
        "conflict_rate": summary.conflict_rate,
        "agreement_rate": summary.agreement_rate,
        "agreed_accuracy": summary.agreed_accuracy,
        "disagreed_accuracy": summary.disagreed_accuracy,
    })
}
