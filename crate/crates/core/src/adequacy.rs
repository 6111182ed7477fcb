//! Test-suite adequacy: single-statement-deletion sweeps over
//! fault-localization candidates, plausibility classification, and fix-rate
//! arithmetic.
//!
//! A defect is *trivially plausible* when deleting one statement makes the
//! whole suite pass. When that happens although the human patch is not
//! deletion-only, the suite is *under-specified*: it accepts a variant that
//! almost certainly does not implement the intended fix.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{is_deletion_only, DefectEntry};
use crate::subject::{ExecLimits, StatementLocation, SubjectAdapter, WorkspaceFactory};
use crate::workability::AdapterFailure;

/// Result of compiling and testing one single-statement-deletion variant.
/// `evaluated == false` means the sweep budget expired before this candidate
/// ran; its flags are meaningless then.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeletionTrial {
    pub defect_id: String,
    pub loc: StatementLocation,
    pub compile_ok: bool,
    pub suite_passed: bool,
    pub evaluated: bool,
}

/// Wall-clock budget of one defect's sweep plus the per-variant suite
/// timeout. Desk-scale default is a minute; survey-scale sweeps of real
/// subjects run with hours here.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepBudget {
    pub wall_clock_limit: Duration,
    pub per_variant_timeout: Duration,
}

impl Default for SweepBudget {
    fn default() -> Self {
        SweepBudget {
            wall_clock_limit: Duration::from_secs(60),
            per_variant_timeout: Duration::from_secs(10),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdequacyVerdict {
    pub defect_id: String,
    pub trivially_plausible: bool,
    pub plausible_locations: Vec<StatementLocation>,
    pub human_patch_deletion_only: bool,
    pub under_specified: bool,
    /// True when the budget expired before every candidate was evaluated;
    /// such sweeps are reported separately from complete ones.
    pub truncated: bool,
}

/// Deletes the candidates one by one — each in a fresh private workspace —
/// compiles the variant, and runs the whole suite on it. Trials keep
/// candidate order. When the wall-clock budget expires, remaining trials are
/// recorded unevaluated rather than failing the defect.
pub fn deletion_sweep(
    entry: &DefectEntry,
    adapter: &dyn SubjectAdapter,
    factory: &WorkspaceFactory,
    candidates: &[StatementLocation],
    budget: &SweepBudget,
    limits: &ExecLimits,
) -> Result<Vec<DeletionTrial>, AdapterFailure> {
    let start = Instant::now();
    let fail = |message: String| AdapterFailure {
        defect_id: entry.id.clone(),
        message,
    };
    let variant_limits = ExecLimits {
        suite_timeout: budget.per_variant_timeout,
        ..*limits
    };

    let mut trials = Vec::with_capacity(candidates.len());
    for (i, loc) in candidates.iter().enumerate() {
        if start.elapsed() >= budget.wall_clock_limit {
            trials.push(DeletionTrial {
                defect_id: entry.id.clone(),
                loc: loc.clone(),
                compile_ok: false,
                suite_passed: false,
                evaluated: false,
            });
            continue;
        }

        let ws = factory
            .checkout(entry, &format!("sweep-trial-{i}"))
            .map_err(|e| fail(format!("checkout failed: {e}")))?;
        adapter
            .delete_statement(&ws, loc)
            .map_err(|e| fail(format!("deleting {loc} failed: {e}")))?;

        let compiled = adapter
            .compile(&ws)
            .map_err(|e| fail(format!("compiling variant {loc} failed: {e}")))?;
        let suite_passed = if compiled.ok {
            match adapter.run_suite(&ws, &variant_limits) {
                Ok(suite) => suite.all_passed(),
                // a variant that crashes or hangs simply does not pass
                Err(crate::subject::AdapterError::SubjectCrash(_))
                | Err(crate::subject::AdapterError::TimeoutExceeded(_)) => false,
                Err(e) => return Err(fail(format!("running variant {loc} failed: {e}"))),
            }
        } else {
            false
        };

        trials.push(DeletionTrial {
            defect_id: entry.id.clone(),
            loc: loc.clone(),
            compile_ok: compiled.ok,
            suite_passed,
            evaluated: true,
        });
    }
    Ok(trials)
}

/// Classifies a defect from its sweep trials. Only evaluated trials count.
pub fn adequacy_verdict(entry: &DefectEntry, trials: &[DeletionTrial]) -> AdequacyVerdict {
    let plausible_locations: Vec<StatementLocation> = trials
        .iter()
        .filter(|t| t.evaluated && t.suite_passed)
        .map(|t| t.loc.clone())
        .collect();
    let trivially_plausible = !plausible_locations.is_empty();
    let human_patch_deletion_only = is_deletion_only(&entry.human_patch);
    AdequacyVerdict {
        defect_id: entry.id.clone(),
        trivially_plausible,
        plausible_locations,
        human_patch_deletion_only,
        under_specified: trivially_plausible && !human_patch_deletion_only,
        truncated: trials.iter().any(|t| !t.evaluated),
    }
}

// ---------------------------------------------------------------------------
// Fix-rate arithmetic
// ---------------------------------------------------------------------------

#[derive(Debug, Error)]
pub enum FixRateError {
    #[error("inconsistent sets: {0}")]
    InconsistentSets(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixRateRow {
    pub label: String,
    pub defects: usize,
    pub fixed: usize,
    /// Percentage rounded to one decimal.
    pub rate_pct: f64,
}

pub fn round_pct(numerator: usize, denominator: usize) -> f64 {
    if denominator == 0 {
        return 0.0;
    }
    let pct = numerator as f64 * 100.0 / denominator as f64;
    (pct * 10.0).round() / 10.0
}

/// Computes the fix-rate table: the full population first, then one row per
/// successively applied exclusion set.
pub fn fix_rate(
    population_label: &str,
    total: &BTreeSet<String>,
    fixed: &BTreeSet<String>,
    exclusions: &[(String, BTreeSet<String>)],
) -> Result<Vec<FixRateRow>, FixRateError> {
    if !fixed.is_subset(total) {
        let stray: Vec<&String> = fixed.difference(total).take(3).collect();
        return Err(FixRateError::InconsistentSets(format!(
            "fixed defects not in the population: {stray:?}"
        )));
    }
    for (label, set) in exclusions {
        if !set.is_subset(total) {
            let stray: Vec<&String> = set.difference(total).take(3).collect();
            return Err(FixRateError::InconsistentSets(format!(
                "exclusion `{label}` contains defects outside the population: {stray:?}"
            )));
        }
    }

    let mut remaining: BTreeSet<String> = total.clone();
    let mut remaining_fixed: BTreeSet<String> = fixed.clone();
    let mut rows = vec![FixRateRow {
        label: population_label.to_string(),
        defects: remaining.len(),
        fixed: remaining_fixed.len(),
        rate_pct: round_pct(remaining_fixed.len(), remaining.len()),
    }];
    for (label, set) in exclusions {
        remaining = remaining.difference(set).cloned().collect();
        remaining_fixed = remaining_fixed.difference(set).cloned().collect();
        rows.push(FixRateRow {
            label: label.clone(),
            defects: remaining.len(),
            fixed: remaining_fixed.len(),
            rate_pct: round_pct(remaining_fixed.len(), remaining.len()),
        });
    }
    Ok(rows)
}

/// Aggregate adequacy counts over the workable population.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AdequacySummary {
    pub total: usize,
    pub trivially_plausible: usize,
    pub deletion_only_patches: usize,
    pub under_specified: usize,
    pub truncated_sweeps: usize,
    pub trivially_plausible_rate_pct: f64,
    pub under_specified_rate_pct: f64,
}

/// Counts over one verdict per workable defect. `deletion_only_patches`
/// counts trivially-plausible defects whose human patch is deletion-only
/// (so `trivially_plausible = deletion_only_patches + under_specified`).
pub fn dataset_adequacy_summary(verdicts: &[AdequacyVerdict]) -> AdequacySummary {
    let total = verdicts.len();
    let trivially_plausible = verdicts.iter().filter(|v| v.trivially_plausible).count();
    let deletion_only_patches = verdicts
        .iter()
        .filter(|v| v.trivially_plausible && v.human_patch_deletion_only)
        .count();
    let under_specified = verdicts.iter().filter(|v| v.under_specified).count();
    AdequacySummary {
        total,
        trivially_plausible,
        deletion_only_patches,
        under_specified,
        truncated_sweeps: verdicts.iter().filter(|v| v.truncated).count(),
        trivially_plausible_rate_pct: round_pct(trivially_plausible, total),
        under_specified_rate_pct: round_pct(under_specified, total),
    }
}
