//! Auditor report over a finished trace, plus the information coverage score.

mod coverage;
mod render;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use coverage::{
    coverage, coverage_rate, CoverageReport, Entity, EntityKind, EntityStatus, Mention, ReportChecklist,
};
pub use render::{render_template, SECTION_TITLES};

use crate::backend::{BackendError, BackendPort};
use crate::extractor::CaseClues;
use crate::model::{RiskAssessment, SuspicionLevel};
use crate::prompts::{PromptError, PromptId, PromptRegistry};
use crate::reasoner::indicates_risk;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("the trace produced no labelled accounts")]
    EmptyTrace,
    #[error("coverage needs at least one checklist entity")]
    EmptyChecklist,
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("backend report is unusable: {0}")]
    MalformedReport(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

/// Writes `n` with comma thousands separators.
pub fn group_digits(n: u128) -> String {
    let s = n.to_string();
    let mut out = String::with_capacity(s.len() + s.len() / 3);
    for (i, c) in s.chars().enumerate() {
        if i > 0 && (s.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    out
}

/// Shares of `counts` in tenths of a percent, rounded by largest remainder
/// so they always sum to exactly 100.0 (or are all zero).
pub fn percentages(counts: &[usize]) -> Vec<f64> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return vec![0.0; counts.len()];
    }
    let raw: Vec<f64> = counts.iter().map(|&c| c as f64 * 1000.0 / total as f64).collect();
    let mut tenths: Vec<u64> = raw.iter().map(|r| r.floor() as u64).collect();
    let short = 1000 - tenths.iter().sum::<u64>();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())).then(a.cmp(&b)));
    for &i in order.iter().take(short as usize) {
        tenths[i] += 1;
    }
    tenths.into_iter().map(|t| t as f64 / 10.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRow {
    pub level: SuspicionLevel,
    pub count: usize,
    pub pct_of_analyzed: f64,
    /// Share among accounts rated above No Suspicion; `None` for that level itself.
    pub pct_of_suspected: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerRow {
    pub layer: u32,
    pub accounts: usize,
    pub high: usize,
    pub medium: usize,
    pub low: usize,
    pub no_suspicion: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub analyzed: usize,
    /// Analyzed accounts rated Low or above.
    pub suspected: usize,
    pub normal_controls: Option<usize>,
    pub levels: Vec<LevelRow>,
    pub layers: Vec<LayerRow>,
    /// Accounts whose transaction-pattern, fund-flow, counterparty and timing results report risk.
    pub dimension_hits: [usize; 4],
}

impl DatasetSummary {
    pub fn compute(l_all: &[RiskAssessment], normal_controls: Option<usize>) -> Self {
        let count = |l: SuspicionLevel| l_all.iter().filter(|r| r.suspicion_level == l).count();
        let counts: Vec<usize> = SuspicionLevel::ALL.iter().map(|l| count(*l)).collect();
        let of_all = percentages(&counts);
        let of_suspected = percentages(&counts[..3]);
        let levels = SuspicionLevel::ALL
            .iter()
            .enumerate()
            .map(|(i, &level)| LevelRow {
                level,
                count: counts[i],
                pct_of_analyzed: of_all[i],
                pct_of_suspected: of_suspected.get(i).copied(),
            })
            .collect();
        let mut layers: BTreeMap<u32, LayerRow> = BTreeMap::new();
        for r in l_all {
            let row = layers.entry(r.hop_depth).or_insert(LayerRow {
                layer: r.hop_depth,
                accounts: 0,
                high: 0,
                medium: 0,
                low: 0,
                no_suspicion: 0,
            });
            row.accounts += 1;
            match r.suspicion_level {
                SuspicionLevel::High => row.high += 1,
                SuspicionLevel::Medium => row.medium += 1,
                SuspicionLevel::Low => row.low += 1,
                SuspicionLevel::NoSuspicion => row.no_suspicion += 1,
            }
        }
        let mut dimension_hits = [0; 4];
        for r in l_all {
            for (i, d) in dimensions(r).iter().enumerate() {
                dimension_hits[i] += usize::from(indicates_risk(&d.result));
            }
        }
        Self {
            analyzed: l_all.len(),
            suspected: l_all.len() - counts[3],
            normal_controls,
            levels,
            layers: layers.into_values().collect(),
            dimension_hits,
        }
    }
}

pub(crate) fn dimensions(r: &RiskAssessment) -> [&crate::model::RiskDimension; 4] {
    [&r.transaction_patterns, &r.fund_flows, &r.associated_addresses, &r.temporal_signs]
}

/// Everything the report draws on.
#[derive(Debug, Clone, Copy)]
pub struct ExplainInput<'a> {
    pub clues: &'a CaseClues,
    pub l_all: &'a [RiskAssessment],
    pub r_final: &'a [RiskAssessment],
    pub normal_controls: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplainOptions {
    /// Fill the template from statistics when the backend cannot produce a report.
    pub fallback: bool,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for ExplainOptions {
    fn default() -> Self {
        Self {
            fallback: true,
            temperature: 0.3,
            max_tokens: 4096,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub markdown: String,
    /// `template` or the backend tag.
    pub renderer: String,
    pub fallback_reason: Option<String>,
}

/// The JSON document substituted into the explainer prompt.
pub fn formatted_analysis(input: &ExplainInput<'_>) -> String {
    let summary = DatasetSummary::compute(input.l_all, input.normal_controls);
    let examples: Vec<_> = input
        .r_final
        .iter()
        .take(20)
        .map(|r| {
            serde_json::json!({
                "address": r.target_address.hex(),
                "chain": r.target_address.chain().as_str(),
                "layer": r.hop_depth,
                "transaction_patterns": r.transaction_patterns,
                "fund_flows": r.fund_flows,
                "associated_addresses": r.associated_addresses,
                "temporal_signs": r.temporal_signs,
            })
        })
        .collect();
    let doc = serde_json::json!({
        "case_clues": input.clues,
        "dataset_summary": summary,
        "high_risk_examples": examples,
    });
    serde_json::to_string_pretty(&doc).expect("analysis serialises")
}

pub fn build_explainer_prompt(prompts: &PromptRegistry, input: &ExplainInput<'_>) -> Result<String, ExplainError> {
    let analysis = formatted_analysis(input);
    let part1 = prompts.render(PromptId::ExplainerPart1, &[("formatted_analysis", &analysis)])?;
    let part2 = prompts.render(PromptId::ExplainerPart2, &[])?;
    Ok(format!("{part1}\n{part2}"))
}

/// Level-two headings of a markdown document, in order.
pub fn section_headings(markdown: &str) -> Vec<String> {
    markdown
        .lines()
        .filter_map(|l| l.strip_prefix("## "))
        .map(|h| h.trim().to_owned())
        .collect()
}

fn check_structure(markdown: &str) -> Result<(), String> {
    let found = section_headings(markdown).len();
    if found != SECTION_TITLES.len() {
        return Err(format!("expected {} sections, found {found}", SECTION_TITLES.len()));
    }
    Ok(())
}

/// Backend narrative when available and well formed, otherwise the
/// deterministic template (when `opts.fallback` allows it).
pub fn generate_report(
    input: &ExplainInput<'_>,
    backend: Option<&dyn BackendPort>,
    prompts: &PromptRegistry,
    opts: &ExplainOptions,
) -> Result<Report, ExplainError> {
    if input.l_all.is_empty() {
        return Err(ExplainError::EmptyTrace);
    }
    let Some(backend) = backend else {
        return Ok(Report {
            markdown: render_template(input),
            renderer: "template".into(),
            fallback_reason: None,
        });
    };
    let prompt = build_explainer_prompt(prompts, input)?;
    let attempt = backend
        .complete(&prompt, opts.temperature, opts.max_tokens)
        .map_err(ExplainError::from)
        .and_then(|md| match check_structure(&md) {
            Ok(()) => Ok(md),
            Err(e) => Err(ExplainError::MalformedReport(e)),
        });
    match attempt {
        Ok(markdown) => Ok(Report {
            markdown,
            renderer: backend.tag().to_owned(),
            fallback_reason: None,
        }),
        Err(e) if opts.fallback => {
            tracing::info!(error = %e, "using template report");
            Ok(Report {
                markdown: render_template(input),
                renderer: "template".into(),
                fallback_reason: Some(e.to_string()),
            })
        }
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests;
