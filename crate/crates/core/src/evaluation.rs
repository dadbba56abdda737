//! Benchmark metrics over run traces: success rate by difficulty, element
//! perception accuracy, exploration accuracy with and without human help, and
//! the human-intervention count.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Corpus, Difficulty};
use crate::orchestrator::{RunTrace, Source};
use crate::sim::JUDGE_LABEL;
use crate::text::normalize;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("trace for id {0} has no corpus record")]
    UnknownId(u32),
    #[error("more than one trace for id {0}")]
    DuplicateTrace(u32),
    #[error("trace {0} was run on different instruction text than the corpus record")]
    TextMismatch(u32),
}

/// `hits` out of `total`; the fraction is 0 when `total` is 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ratio {
    pub hits: usize,
    pub total: usize,
    pub fraction: f64,
}

impl Ratio {
    pub fn new(hits: usize, total: usize) -> Self {
        let fraction = if total == 0 { 0.0 } else { hits as f64 / total as f64 };
        Ratio { hits, total, fraction }
    }

    pub fn percent(&self) -> String {
        format!("{:.1}%", self.fraction * 100.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessRates {
    pub simple: Ratio,
    pub normal: Ratio,
    pub hard: Ratio,
    pub overall: Ratio,
}

impl SuccessRates {
    pub fn get(&self, difficulty: Difficulty) -> Ratio {
        match difficulty {
            Difficulty::Simple => self.simple,
            Difficulty::Normal => self.normal,
            Difficulty::Hard => self.hard,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub success_rate: SuccessRates,
    pub ep_accuracy: Ratio,
    pub ex_accuracy_without_hi: Ratio,
    pub ex_accuracy_with_hi: Ratio,
    pub hi_count: usize,
    /// How success was decided.
    pub judge: String,
}

pub fn compute_metrics(traces: &[RunTrace], corpus: &Corpus) -> Result<MetricsReport, EvalError> {
    let mut seen = HashSet::new();
    let mut success = [(0usize, 0usize); 3];
    let (mut ep, mut ex, mut ex_hi, mut personalized) = (0, 0, 0, 0);
    let mut hi_count = 0;

    for trace in traces {
        let record = corpus.get(trace.id).ok_or(EvalError::UnknownId(trace.id))?;
        if !seen.insert(trace.id) {
            return Err(EvalError::DuplicateTrace(trace.id));
        }
        if record.text != trace.instruction {
            return Err(EvalError::TextMismatch(trace.id));
        }

        let slot = &mut success[record.difficulty.ordinal() as usize - 1];
        slot.1 += 1;
        if trace.verdict.success {
            slot.0 += 1;
        }
        hi_count += trace.interventions.iter().filter(|i| i.supplied.is_some()).count();

        if !record.is_personalized() {
            continue;
        }
        personalized += 1;
        let gold: BTreeSet<String> = record.gold_elements.iter().map(|e| normalize(e)).collect();
        if trace.perception.result.as_ref().map(|p| p.normalized_set()) == Some(gold) {
            ep += 1;
        }
        let source_of = |e: &String| trace.gold_sources.get(e).copied().unwrap_or(Source::Unresolved);
        if record
            .gold_elements
            .iter()
            .all(|e| matches!(source_of(e), Source::Memory | Source::Exploration))
        {
            ex += 1;
        }
        if record
            .gold_elements
            .iter()
            .all(|e| matches!(source_of(e), Source::Memory | Source::Exploration | Source::Human))
        {
            ex_hi += 1;
        }
    }

    let ratio = |(h, t): (usize, usize)| Ratio::new(h, t);
    let overall = success.iter().fold((0, 0), |acc, s| (acc.0 + s.0, acc.1 + s.1));
    Ok(MetricsReport {
        success_rate: SuccessRates {
            simple: ratio(success[0]),
            normal: ratio(success[1]),
            hard: ratio(success[2]),
            overall: ratio(overall),
        },
        ep_accuracy: Ratio::new(ep, personalized),
        ex_accuracy_without_hi: Ratio::new(ex, personalized),
        ex_accuracy_with_hi: Ratio::new(ex_hi, personalized),
        hi_count,
        judge: JUDGE_LABEL.to_string(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Table,
    Json,
}

pub fn render_report(report: &MetricsReport, format: Format) -> String {
    match format {
        Format::Json => serde_json::to_string_pretty(report).expect("report serializes"),
        Format::Table => {
            let s = &report.success_rate;
            let cell = |r: Ratio| format!("{} ({}/{})", r.percent(), r.hits, r.total);
            let mut out = String::new();
            let _ = writeln!(out, "{:<14} | {:<16} | {:<16} | {:<16} | {:<16}", "", "Simple", "Normal", "Hard", "Overall");
            let _ = writeln!(out, "{}", "-".repeat(88));
            let _ = writeln!(
                out,
                "{:<14} | {:<16} | {:<16} | {:<16} | {:<16}",
                "SuccessRate",
                cell(s.simple),
                cell(s.normal),
                cell(s.hard),
                cell(s.overall)
            );
            let _ = writeln!(out);
            let _ = writeln!(out, "{:<22} | {}", "EP Acc.", cell(report.ep_accuracy));
            let _ = writeln!(out, "{:<22} | {}", "Ex Acc. (without HI)", cell(report.ex_accuracy_without_hi));
            let _ = writeln!(out, "{:<22} | {}", "Ex Acc. (with HI)", cell(report.ex_accuracy_with_hi));
            let _ = writeln!(out, "{:<22} | {}", "HI Count", report.hi_count);
            let _ = writeln!(out, "judge: {}", report.judge);
            out
        }
    }
}

pub fn parse_report_json(source: &str) -> Result<MetricsReport, serde_json::Error> {
    serde_json::from_str(source)
}
