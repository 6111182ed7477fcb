//! Loader for the bundled published-study data (`paper-data/`): the full
//! Defects4J 2.0 defect list, the exclusion table, the adequacy counts, and
//! the jGenProg evaluation sets. Reports reproduce the published aggregates
//! from these files by arithmetic — no Java execution is involved.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adequacy::{fix_rate, round_pct, AdequacySummary, FixRateRow};
use crate::dataset::{load_manifest, Dataset, DefectEntry};
use crate::report::{exclusion_table, ExclusionRow};
use crate::workability::{classify_dataset, ExclusionSummary, FinalOutcome};

#[derive(Debug, Error)]
pub enum PaperDataError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("cannot parse {path}: {message}")]
    Parse { path: String, message: String },
    #[error("inconsistent bundled data: {0}")]
    Inconsistent(String),
}

fn read(dir: &Path, name: &str) -> Result<String, PaperDataError> {
    let path = dir.join(name);
    std::fs::read_to_string(&path).map_err(|e| PaperDataError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn parse_toml<T: for<'de> Deserialize<'de>>(
    dir: &Path,
    name: &str,
) -> Result<T, PaperDataError> {
    let text = read(dir, name)?;
    toml::from_str(&text).map_err(|e| PaperDataError::Parse {
        path: dir.join(name).display().to_string(),
        message: e.to_string(),
    })
}

/// Expands `Project/5` or `Project/5-26` into individual ids.
pub fn expand_range(spec: &str) -> Result<Vec<String>, PaperDataError> {
    let bad = || PaperDataError::Inconsistent(format!("malformed id range `{spec}`"));
    let (project, numbers) = spec.split_once('/').ok_or_else(bad)?;
    if project.is_empty() {
        return Err(bad());
    }
    let (first, last) = match numbers.split_once('-') {
        Some((a, b)) => (
            a.parse::<u64>().map_err(|_| bad())?,
            b.parse::<u64>().map_err(|_| bad())?,
        ),
        None => {
            let n = numbers.parse::<u64>().map_err(|_| bad())?;
            (n, n)
        }
    };
    if first > last {
        return Err(bad());
    }
    Ok((first..=last).map(|n| format!("{project}/{n}")).collect())
}

fn expand_all(specs: &[String]) -> Result<BTreeSet<String>, PaperDataError> {
    let mut out = BTreeSet::new();
    for spec in specs {
        out.extend(expand_range(spec)?);
    }
    Ok(out)
}

// --------------------------------------------------------------------------
// File shapes
// --------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
struct ExclusionsFile {
    dataset: String,
    exclusions: Vec<ExclusionSpec>,
}

#[derive(Debug, Deserialize)]
struct ExclusionSpec {
    ids: String,
    reason: String,
}

#[derive(Debug, Deserialize)]
struct AdequacyFile {
    trivially_plausible: Vec<String>,
    deletion_only_patches: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct JGenProgFile {
    tool: String,
    population_label: String,
    population: Vec<String>,
    fixed: Vec<String>,
    exclusions: Vec<JGenProgExclusion>,
}

#[derive(Debug, Deserialize)]
struct JGenProgExclusion {
    label: String,
    ids: Vec<String>,
}

fn parse_reason(code: &str) -> Result<FinalOutcome, PaperDataError> {
    match code {
        "compilation-fails" => Ok(FinalOutcome::CompilationFails),
        "inconsistent-suite" => Ok(FinalOutcome::InconsistentSuite),
        "result-differs" => Ok(FinalOutcome::ResultDiffers),
        "flaky" => Ok(FinalOutcome::Flaky),
        other => Err(PaperDataError::Inconsistent(format!(
            "unknown exclusion reason `{other}`"
        ))),
    }
}

/// The bundled data, loaded and cross-checked.
#[derive(Debug)]
pub struct PaperData {
    pub dataset: Dataset,
    /// Per-defect verdict over the whole dataset (excluded ids carry their
    /// reason, everything else is workable).
    pub outcomes: Vec<(String, FinalOutcome)>,
    pub trivially_plausible: BTreeSet<String>,
    pub deletion_only: BTreeSet<String>,
    pub jgenprog_tool: String,
    pub jgenprog_population_label: String,
    pub jgenprog_population: BTreeSet<String>,
    pub jgenprog_fixed: BTreeSet<String>,
    pub jgenprog_exclusions: Vec<(String, BTreeSet<String>)>,
}

pub fn load_paper_data(dir: &Path) -> Result<PaperData, PaperDataError> {
    let manifest_path = dir.join("defects4j-2.0-summary").join("manifest.toml");
    let dataset = load_manifest(&manifest_path).map_err(|e| PaperDataError::Parse {
        path: manifest_path.display().to_string(),
        message: e.to_string(),
    })?;
    let all_ids: BTreeSet<&str> = dataset.entries.iter().map(|e| e.id.as_str()).collect();

    let exclusions_file: ExclusionsFile = parse_toml(dir, "exclusions.toml")?;
    if exclusions_file.dataset != dataset.name {
        return Err(PaperDataError::Inconsistent(format!(
            "exclusions refer to dataset `{}`, manifest is `{}`",
            exclusions_file.dataset, dataset.name
        )));
    }
    let mut excluded: std::collections::BTreeMap<String, FinalOutcome> = Default::default();
    for spec in &exclusions_file.exclusions {
        let reason = parse_reason(&spec.reason)?;
        for id in expand_range(&spec.ids)? {
            if !all_ids.contains(id.as_str()) {
                return Err(PaperDataError::Inconsistent(format!(
                    "excluded id {id} is not in the dataset"
                )));
            }
            if excluded.insert(id.clone(), reason).is_some() {
                return Err(PaperDataError::Inconsistent(format!(
                    "id {id} excluded twice"
                )));
            }
        }
    }
    let outcomes: Vec<(String, FinalOutcome)> = dataset
        .entries
        .iter()
        .map(|e| {
            let outcome = excluded
                .get(&e.id)
                .copied()
                .unwrap_or(FinalOutcome::Workable);
            (e.id.clone(), outcome)
        })
        .collect();

    let adequacy_file: AdequacyFile = parse_toml(dir, "adequacy.toml")?;
    let trivially_plausible = expand_all(&adequacy_file.trivially_plausible)?;
    let deletion_only = expand_all(&adequacy_file.deletion_only_patches)?;
    for id in &trivially_plausible {
        if !all_ids.contains(id.as_str()) {
            return Err(PaperDataError::Inconsistent(format!(
                "trivially-plausible id {id} is not in the dataset"
            )));
        }
        if excluded.contains_key(id) {
            return Err(PaperDataError::Inconsistent(format!(
                "trivially-plausible id {id} is excluded as non-workable"
            )));
        }
    }
    if !deletion_only.is_subset(&trivially_plausible) {
        return Err(PaperDataError::Inconsistent(
            "deletion-only ids must be a subset of the trivially-plausible ids".into(),
        ));
    }

    let jgenprog: JGenProgFile = parse_toml(dir, "jgenprog.toml")?;
    let population = expand_all(&jgenprog.population)?;
    let fixed = expand_all(&jgenprog.fixed)?;
    let mut jgenprog_exclusions = Vec::new();
    for e in &jgenprog.exclusions {
        jgenprog_exclusions.push((e.label.clone(), expand_all(&e.ids)?));
    }

    Ok(PaperData {
        dataset,
        outcomes,
        trivially_plausible,
        deletion_only,
        jgenprog_tool: jgenprog.tool,
        jgenprog_population_label: jgenprog.population_label,
        jgenprog_population: population,
        jgenprog_fixed: fixed,
        jgenprog_exclusions,
    })
}

/// All published aggregates recomputed from the bundled data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaperReproduction {
    pub dataset: String,
    pub exclusion_summary: ExclusionSummary,
    pub workable_ratio_pct: f64,
    pub exclusion_rows: Vec<ExclusionRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub adequacy: AdequacySummary,
    pub fix_rate_tool: String,
    pub fix_rate: Vec<FixRateRow>,
}

/// The count the published ratio figure is labeled with; it disagrees with
/// the exclusion arithmetic (835 − 180 = 655) and reports surface that.
pub const PUBLISHED_FIGURE_WORKABLE_LABEL: usize = 666;

pub fn reproduce(data: &PaperData) -> Result<PaperReproduction, PaperDataError> {
    let exclusion_summary = classify_dataset(data.outcomes.iter().map(|(_, o)| o));
    let workable = exclusion_summary.workable;

    let note = (workable != PUBLISHED_FIGURE_WORKABLE_LABEL).then(|| {
        format!(
            "the published ratio figure labels {PUBLISHED_FIGURE_WORKABLE_LABEL} defects \
             workable; the exclusion arithmetic yields {workable}, which is used throughout"
        )
    });

    let adequacy = AdequacySummary {
        total: workable,
        trivially_plausible: data.trivially_plausible.len(),
        deletion_only_patches: data.deletion_only.len(),
        under_specified: data.trivially_plausible.len() - data.deletion_only.len(),
        truncated_sweeps: 0,
        trivially_plausible_rate_pct: round_pct(data.trivially_plausible.len(), workable),
        under_specified_rate_pct: round_pct(
            data.trivially_plausible.len() - data.deletion_only.len(),
            workable,
        ),
    };

    let fix_rate_rows = fix_rate(
        &data.jgenprog_population_label,
        &data.jgenprog_population,
        &data.jgenprog_fixed,
        &data.jgenprog_exclusions,
    )
    .map_err(|e| PaperDataError::Inconsistent(e.to_string()))?;

    Ok(PaperReproduction {
        dataset: data.dataset.name.clone(),
        workable_ratio_pct: round_pct(workable, exclusion_summary.total),
        exclusion_rows: exclusion_table(&data.outcomes),
        note,
        exclusion_summary,
        adequacy,
        fix_rate_tool: data.jgenprog_tool.clone(),
        fix_rate: fix_rate_rows,
    })
}

/// Ids of the workable defects in the bundled data (used by cross-checks).
pub fn workable_ids(data: &PaperData) -> BTreeSet<String> {
    data.outcomes
        .iter()
        .filter(|(_, o)| *o == FinalOutcome::Workable)
        .map(|(id, _)| id.clone())
        .collect()
}

/// Convenience: the per-entry outcome pairs restricted to one project.
pub fn project_outcomes<'a>(
    data: &'a PaperData,
    project: &str,
) -> Vec<&'a (String, FinalOutcome)> {
    data.outcomes
        .iter()
        .filter(|(id, _)| DefectEntry::split_id(id).is_some_and(|(p, _)| p == project))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_expansion() {
        assert_eq!(
            expand_range("Chart/5-7").unwrap(),
            vec!["Chart/5", "Chart/6", "Chart/7"]
        );
        assert_eq!(expand_range("Time/27").unwrap(), vec!["Time/27"]);
        assert!(expand_range("Chart").is_err());
        assert!(expand_range("Chart/7-5").is_err());
        assert!(expand_range("/5").is_err());
    }

    #[test]
    fn reason_codes_parse() {
        assert_eq!(
            parse_reason("compilation-fails").unwrap(),
            FinalOutcome::CompilationFails
        );
        assert_eq!(parse_reason("flaky").unwrap(), FinalOutcome::Flaky);
        assert!(parse_reason("mysterious").is_err());
    }
}
