//! Aggregation of verdicts into summary artifacts: exclusion tables with
//! collapsed id ranges, category counts and ratios, and fix-rate tables,
//! emitted as stable structured JSON or human-readable text.

use serde::{Deserialize, Serialize};

use crate::adequacy::AdequacySummary;
use crate::dataset::DefectEntry;
use crate::paperdata::PaperReproduction;
use crate::workability::{classify_dataset, ExclusionSummary, FinalOutcome};

/// One row of the exclusion table: a collapsed id range plus the reason.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionRow {
    /// `Project/N` or `Project/N–M` (en dash).
    pub ids: String,
    pub outcome: FinalOutcome,
}

impl ExclusionRow {
    pub fn reason(&self) -> &'static str {
        reason_label(self.outcome)
    }
}

pub fn reason_label(outcome: FinalOutcome) -> &'static str {
    match outcome {
        FinalOutcome::Workable => "Workable",
        FinalOutcome::CompilationFails => "Compilation failed",
        FinalOutcome::InconsistentSuite => "Inconsistent test suite",
        FinalOutcome::ResultDiffers => "Result differs from dataset",
        FinalOutcome::Flaky => "Flaky",
    }
}

fn format_range(project: &str, first: u64, last: u64) -> String {
    if first == last {
        format!("{project}/{first}")
    } else {
        format!("{project}/{first}\u{2013}{last}")
    }
}

/// Collapses non-workable defects into table rows: same-project, same-reason
/// ids with numerically adjacent suffixes become one range. Rows are ordered
/// by project name, then number.
pub fn exclusion_table(outcomes: &[(String, FinalOutcome)]) -> Vec<ExclusionRow> {
    let mut excluded: Vec<(String, u64, FinalOutcome)> = outcomes
        .iter()
        .filter(|(_, o)| *o != FinalOutcome::Workable)
        .filter_map(|(id, o)| {
            DefectEntry::split_id(id).map(|(project, n)| (project.to_string(), n, *o))
        })
        .collect();
    excluded.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut rows = Vec::new();
    let mut run: Option<(String, u64, u64, FinalOutcome)> = None;
    for (project, n, outcome) in excluded {
        match run.take() {
            Some((p, first, last, o)) if p == project && o == outcome && n == last + 1 => {
                run = Some((p, first, n, o));
            }
            Some((p, first, last, o)) => {
                rows.push(ExclusionRow {
                    ids: format_range(&p, first, last),
                    outcome: o,
                });
                run = Some((project, n, n, outcome));
            }
            None => run = Some((project, n, n, outcome)),
        }
    }
    if let Some((p, first, last, o)) = run {
        rows.push(ExclusionRow {
            ids: format_range(&p, first, last),
            outcome: o,
        });
    }
    rows
}

/// Renders exclusion rows in the documented text format: one row per line,
/// `<ids><TAB><reason>`.
pub fn render_exclusion_rows(rows: &[ExclusionRow]) -> String {
    let mut out = String::new();
    for row in rows {
        out.push_str(&row.ids);
        out.push('\t');
        out.push_str(row.reason());
        out.push('\n');
    }
    out
}

/// Audit portion of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditSection {
    pub dataset: String,
    pub summary: ExclusionSummary,
    pub exclusion_rows: Vec<ExclusionRow>,
}

impl AuditSection {
    pub fn from_outcomes(dataset: &str, outcomes: &[(String, FinalOutcome)]) -> Self {
        let summary = classify_dataset(outcomes.iter().map(|(_, o)| o));
        AuditSection {
            dataset: dataset.to_string(),
            summary,
            exclusion_rows: exclusion_table(outcomes),
        }
    }
}

/// A complete report document. Sections are present when their inputs were.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub audit: Option<AuditSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adequacy: Option<AdequacySummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paper: Option<PaperReproduction>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Structured,
    Human,
}

/// Emits a report. The structured form is byte-identical for identical input
/// and parses back to an equal document; the human form carries the counts
/// and ratios as text.
pub fn emit(doc: &ReportDocument, format: ReportFormat) -> String {
    match format {
        ReportFormat::Structured => {
            let mut s = serde_json::to_string_pretty(doc).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Human => render_human(doc),
    }
}

pub fn parse_structured(text: &str) -> Result<ReportDocument, serde_json::Error> {
    serde_json::from_str(text)
}

fn pct(x: f64) -> String {
    format!("{:.1} %", x)
}

fn render_summary(out: &mut String, summary: &ExclusionSummary) {
    out.push_str(&format!(
        "Workable: {} of {} ({})\n",
        summary.workable,
        summary.total,
        pct(summary.workable_ratio * 100.0)
    ));
    out.push_str(&format!("Excluded: {}\n", summary.excluded()));
    out.push_str(&format!(
        "  Compilation failed:          {:>4}\n",
        summary.compilation_fails
    ));
    out.push_str(&format!(
        "  Inconsistent test suite:     {:>4}\n",
        summary.inconsistent_suite
    ));
    out.push_str(&format!(
        "  Result differs from dataset: {:>4}\n",
        summary.result_differs
    ));
    out.push_str(&format!(
        "  Flaky:                       {:>4}\n",
        summary.flaky
    ));
    if summary.audit_errors > 0 {
        out.push_str(&format!(
            "  Audit errors (not counted above): {}\n",
            summary.audit_errors
        ));
    }
    if let Some(w) = &summary.warning {
        out.push_str(&format!("  Warning: {w}\n"));
    }
}

fn render_adequacy(out: &mut String, adequacy: &AdequacySummary) {
    out.push_str(&format!(
        "Suite adequacy over {} workable defects:\n",
        adequacy.total
    ));
    out.push_str(&format!(
        "  Trivially plausible (a single-statement deletion passes the suite): {} ({})\n",
        adequacy.trivially_plausible,
        pct(adequacy.trivially_plausible_rate_pct)
    ));
    out.push_str(&format!(
        "  ... of which the human patch is deletion-only: {}\n",
        adequacy.deletion_only_patches
    ));
    out.push_str(&format!(
        "  Under-specified test suites: {} ({})\n",
        adequacy.under_specified,
        pct(adequacy.under_specified_rate_pct)
    ));
    if adequacy.truncated_sweeps > 0 {
        out.push_str(&format!(
            "  Sweeps truncated by the budget (reported separately): {}\n",
            adequacy.truncated_sweeps
        ));
    }
}

fn render_human(doc: &ReportDocument) -> String {
    let mut out = String::new();
    if let Some(audit) = &doc.audit {
        out.push_str(&format!("== Audit: {} ==\n", audit.dataset));
        render_summary(&mut out, &audit.summary);
        if !audit.exclusion_rows.is_empty() {
            out.push_str("Exclusion table:\n");
            out.push_str(&render_exclusion_rows(&audit.exclusion_rows));
        }
        out.push('\n');
    }
    if let Some(adequacy) = &doc.adequacy {
        out.push_str("== Adequacy ==\n");
        render_adequacy(&mut out, adequacy);
        out.push('\n');
    }
    if let Some(paper) = &doc.paper {
        out.push_str(&format!("== Bundled study data: {} ==\n", paper.dataset));
        render_summary(&mut out, &paper.exclusion_summary);
        if let Some(note) = &paper.note {
            out.push_str(&format!("Note: {note}\n"));
        }
        out.push_str("Exclusion table:\n");
        out.push_str(&render_exclusion_rows(&paper.exclusion_rows));
        out.push('\n');
        render_adequacy(&mut out, &paper.adequacy);
        out.push('\n');
        out.push_str(&format!("Fix-rate table ({}):\n", paper.fix_rate_tool));
        for row in &paper.fix_rate {
            out.push_str(&format!(
                "  {:<28} {:>4} defects  {:>3} fixed  {}\n",
                row.label,
                row.defects,
                row.fixed,
                pct(row.rate_pct)
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcomes(spec: &[(&str, FinalOutcome)]) -> Vec<(String, FinalOutcome)> {
        spec.iter().map(|(id, o)| (id.to_string(), *o)).collect()
    }

    #[test]
    fn contiguous_ids_collapse_into_one_range() {
        use FinalOutcome::InconsistentSuite;
        let input: Vec<(String, FinalOutcome)> = (5..=26)
            .map(|i| (format!("Chart/{i}"), InconsistentSuite))
            .collect();
        let rows = exclusion_table(&input);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].ids, "Chart/5\u{2013}26");
        assert_eq!(rows[0].reason(), "Inconsistent test suite");
    }

    #[test]
    fn all_workable_gives_an_empty_table() {
        let input = outcomes(&[
            ("Chart/1", FinalOutcome::Workable),
            ("Chart/2", FinalOutcome::Workable),
        ]);
        assert!(exclusion_table(&input).is_empty());
    }

    #[test]
    fn reason_changes_break_ranges() {
        use FinalOutcome::*;
        let input = outcomes(&[
            ("Collections/25", InconsistentSuite),
            ("Collections/26", CompilationFails),
            ("Collections/27", CompilationFails),
            ("Collections/28", InconsistentSuite),
        ]);
        let rows = exclusion_table(&input);
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].ids, "Collections/25");
        assert_eq!(rows[1].ids, "Collections/26\u{2013}27");
        assert_eq!(rows[2].ids, "Collections/28");
    }

    #[test]
    fn numeric_gaps_break_ranges() {
        use FinalOutcome::InconsistentSuite;
        let input = outcomes(&[
            ("Lang/1", InconsistentSuite),
            // Lang/2 absent from the dataset
            ("Lang/3", InconsistentSuite),
            ("Lang/4", InconsistentSuite),
        ]);
        let rows = exclusion_table(&input);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].ids, "Lang/1");
        assert_eq!(rows[1].ids, "Lang/3\u{2013}4");
    }

    #[test]
    fn rows_are_ordered_by_project_then_number() {
        use FinalOutcome::Flaky;
        let input = outcomes(&[
            ("Math/40", Flaky),
            ("Chart/7", Flaky),
            ("Math/29", Flaky),
        ]);
        let rows = exclusion_table(&input);
        assert_eq!(rows[0].ids, "Chart/7");
        assert_eq!(rows[1].ids, "Math/29");
        assert_eq!(rows[2].ids, "Math/40");
    }

    #[test]
    fn structured_emission_round_trips() {
        let input = outcomes(&[
            ("Demo/1", FinalOutcome::Workable),
            ("Demo/2", FinalOutcome::Flaky),
        ]);
        let doc = ReportDocument {
            audit: Some(AuditSection::from_outcomes("demo", &input)),
            adequacy: None,
            paper: None,
        };
        let text = emit(&doc, ReportFormat::Structured);
        let back = parse_structured(&text).unwrap();
        assert_eq!(doc, back);
        // byte stability
        assert_eq!(text, emit(&doc, ReportFormat::Structured));
    }

    #[test]
    fn counts_partition_the_dataset() {
        use FinalOutcome::*;
        let input = outcomes(&[
            ("A/1", Workable),
            ("A/2", Flaky),
            ("A/3", CompilationFails),
            ("A/4", InconsistentSuite),
            ("A/5", ResultDiffers),
        ]);
        let section = AuditSection::from_outcomes("demo", &input);
        let s = &section.summary;
        assert_eq!(
            s.workable + s.compilation_fails + s.inconsistent_suite + s.result_differs + s.flaky,
            input.len()
        );
    }

    #[test]
    fn human_emission_carries_the_counts() {
        use FinalOutcome::*;
        let input = outcomes(&[("A/1", Workable), ("A/2", Flaky)]);
        let doc = ReportDocument {
            audit: Some(AuditSection::from_outcomes("demo", &input)),
            adequacy: None,
            paper: None,
        };
        let text = emit(&doc, ReportFormat::Human);
        assert!(text.contains("Workable: 1 of 2 (50.0 %)"));
        assert!(text.contains("Flaky:"));
        assert!(text.contains("A/2\tFlaky"));
    }
}
