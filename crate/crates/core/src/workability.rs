//! The per-defect setup-test and the multi-round flakiness protocol.
//!
//! One round checks a defect in phases, each shadowing the ones after it:
//! checkout, parse and compile (failure ⇒ `CompilationFails`), whole-suite
//! run, per-test individual re-execution compared against the suite result
//! (mismatch ⇒ `InconsistentSuite`), and finally the observed failing set
//! against the documented one (mismatch ⇒ `ResultDiffers`). A defect whose
//! rounds do not all agree — in outcome category or in observed failing set —
//! is `Flaky`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::DefectEntry;
use crate::subject::{
    AdapterError, Diagnostic, ExecLimits, SubjectAdapter, TestStatus, WorkspaceFactory,
};

/// Outcome of one setup-test round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoundOutcome {
    Workable,
    CompilationFails,
    InconsistentSuite,
    ResultDiffers,
}

/// Final verdict category over all rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FinalOutcome {
    Workable,
    CompilationFails,
    InconsistentSuite,
    ResultDiffers,
    Flaky,
}

impl From<RoundOutcome> for FinalOutcome {
    fn from(r: RoundOutcome) -> Self {
        match r {
            RoundOutcome::Workable => FinalOutcome::Workable,
            RoundOutcome::CompilationFails => FinalOutcome::CompilationFails,
            RoundOutcome::InconsistentSuite => FinalOutcome::InconsistentSuite,
            RoundOutcome::ResultDiffers => FinalOutcome::ResultDiffers,
        }
    }
}

impl std::fmt::Display for FinalOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            FinalOutcome::Workable => "workable",
            FinalOutcome::CompilationFails => "compilation-fails",
            FinalOutcome::InconsistentSuite => "inconsistent-suite",
            FinalOutcome::ResultDiffers => "result-differs",
            FinalOutcome::Flaky => "flaky",
        };
        f.write_str(s)
    }
}

/// A test whose individual execution disagreed with its whole-suite result.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Disagreement {
    pub test_id: String,
    pub suite_status: TestStatus,
    pub single_status: TestStatus,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundEvidence {
    /// Tests that did not pass in the whole-suite run.
    pub failing: BTreeSet<String>,
    pub disagreements: Vec<Disagreement>,
    pub compile_diagnostics: Vec<Diagnostic>,
    /// Free-form note for abnormal situations (suite crash, timeout).
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundVerdict {
    pub defect_id: String,
    pub outcome: RoundOutcome,
    pub evidence: RoundEvidence,
    pub round_index: u32,
    pub parallelism_level: u32,
}

impl RoundVerdict {
    /// The pair the flakiness rule compares across rounds: outcome category
    /// plus observed failing set. Category-stable evidence variation (e.g.
    /// different disagreement lists) is noise, not flakiness.
    pub fn signature(&self) -> (RoundOutcome, &BTreeSet<String>) {
        (self.outcome, &self.evidence.failing)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkabilityVerdict {
    pub defect_id: String,
    pub outcome: FinalOutcome,
    pub rounds: Vec<RoundVerdict>,
}

/// Audit configuration: how many setup-test rounds and at which parallelism
/// levels they are co-scheduled (the schedule cycles when shorter than the
/// round count).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundConfig {
    pub rounds: u32,
    pub parallelism_schedule: Vec<u32>,
    pub limits: ExecLimits,
}

impl Default for RoundConfig {
    fn default() -> Self {
        RoundConfig {
            rounds: 20,
            parallelism_schedule: vec![1, 5, 10, 15, 20, 25],
            limits: ExecLimits::default(),
        }
    }
}

impl RoundConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.rounds < 1 {
            return Err("rounds must be at least 1".into());
        }
        if self.parallelism_schedule.is_empty() {
            return Err("parallelism schedule must not be empty".into());
        }
        if self.parallelism_schedule.iter().any(|&l| l < 1) {
            return Err("every parallelism level must be at least 1".into());
        }
        Ok(())
    }

    pub fn level_for_round(&self, round_index: u32) -> u32 {
        self.parallelism_schedule[round_index as usize % self.parallelism_schedule.len()]
    }
}

/// The adapter itself broke (as opposed to the subject failing). Audits of
/// the affected defect abort and the defect is reported as an audit error,
/// never as one of the five subject outcomes.
#[derive(Debug, Error)]
#[error("adapter failure auditing {defect_id}: {message}")]
pub struct AdapterFailure {
    pub defect_id: String,
    pub message: String,
}

fn adapter_failure(entry: &DefectEntry, e: AdapterError) -> AdapterFailure {
    AdapterFailure {
        defect_id: entry.id.clone(),
        message: e.to_string(),
    }
}

/// Runs one setup-test round for a defect.
///
/// Phases run in order and earlier failures shadow later checks: a defect
/// that does not compile never executes tests, and an inconsistent suite is
/// never compared against the documented failing set.
pub fn setup_test(
    entry: &DefectEntry,
    adapter: &dyn SubjectAdapter,
    factory: &WorkspaceFactory,
    limits: &ExecLimits,
    round_index: u32,
    parallelism_level: u32,
) -> Result<RoundVerdict, AdapterFailure> {
    let verdict = |outcome, evidence| RoundVerdict {
        defect_id: entry.id.clone(),
        outcome,
        evidence,
        round_index,
        parallelism_level,
    };

    let label = format!("round-{round_index}");
    let ws = factory
        .checkout(entry, &label)
        .map_err(|e| adapter_failure(entry, AdapterError::Io(e)))?;

    // R1: sources must parse
    let parsed = adapter.parse(&ws).map_err(|e| adapter_failure(entry, e))?;
    if !parsed.ok {
        return Ok(verdict(
            RoundOutcome::CompilationFails,
            RoundEvidence {
                compile_diagnostics: parsed.diagnostics,
                ..Default::default()
            },
        ));
    }

    // R2: sources must compile
    let compiled = adapter.compile(&ws).map_err(|e| adapter_failure(entry, e))?;
    if !compiled.ok {
        return Ok(verdict(
            RoundOutcome::CompilationFails,
            RoundEvidence {
                compile_diagnostics: compiled.diagnostics,
                ..Default::default()
            },
        ));
    }

    // R3/R4: run the whole suite with per-test results. A suite that crashes
    // or exceeds its budget outright cannot reproduce the documented failing
    // set, which is a result mismatch, not a harness error.
    let suite = match adapter.run_suite(&ws, limits) {
        Ok(s) => s,
        Err(e @ (AdapterError::SubjectCrash(_) | AdapterError::TimeoutExceeded(_))) => {
            return Ok(verdict(
                RoundOutcome::ResultDiffers,
                RoundEvidence {
                    note: Some(format!("whole-suite run aborted: {e}")),
                    ..Default::default()
                },
            ));
        }
        Err(e) => return Err(adapter_failure(entry, e)),
    };

    // R5/R6: each test individually must agree with its whole-suite result
    let mut disagreements = Vec::new();
    for (test_id, suite_outcome) in &suite.outcomes {
        let (single, _coverage) = match adapter.run_single(&ws, test_id, limits) {
            Ok(r) => r,
            Err(e @ (AdapterError::SubjectCrash(_) | AdapterError::TimeoutExceeded(_))) => {
                return Ok(verdict(
                    RoundOutcome::ResultDiffers,
                    RoundEvidence {
                        failing: suite.failing_set(),
                        note: Some(format!("individual run of {test_id} aborted: {e}")),
                        ..Default::default()
                    },
                ));
            }
            Err(e) => return Err(adapter_failure(entry, e)),
        };
        if single.status != suite_outcome.status {
            disagreements.push(Disagreement {
                test_id: test_id.clone(),
                suite_status: suite_outcome.status,
                single_status: single.status,
            });
        }
    }
    if !disagreements.is_empty() {
        return Ok(verdict(
            RoundOutcome::InconsistentSuite,
            RoundEvidence {
                failing: suite.failing_set(),
                disagreements,
                ..Default::default()
            },
        ));
    }

    // R6: observed failing tests must match the documented ones
    let failing = suite.failing_set();
    if failing != entry.expected_failing {
        return Ok(verdict(
            RoundOutcome::ResultDiffers,
            RoundEvidence {
                failing,
                ..Default::default()
            },
        ));
    }

    Ok(verdict(
        RoundOutcome::Workable,
        RoundEvidence {
            failing,
            ..Default::default()
        },
    ))
}

/// Combines a defect's rounds into its final verdict: `Flaky` iff any two
/// rounds differ in (outcome, failing set), otherwise the unanimous outcome.
pub fn combine_rounds(defect_id: &str, rounds: Vec<RoundVerdict>) -> WorkabilityVerdict {
    debug_assert!(!rounds.is_empty());
    let flaky = rounds
        .windows(2)
        .any(|w| w[0].signature() != w[1].signature());
    let outcome = if flaky {
        FinalOutcome::Flaky
    } else {
        rounds[0].outcome.into()
    };
    WorkabilityVerdict {
        defect_id: defect_id.to_string(),
        outcome,
        rounds,
    }
}

/// Runs the full multi-round audit of one defect, serially. (Cross-defect
/// co-scheduling at the configured parallelism levels is the harness's job;
/// the per-round level is still recorded here.)
pub fn audit(
    entry: &DefectEntry,
    adapter: &dyn SubjectAdapter,
    factory: &WorkspaceFactory,
    cfg: &RoundConfig,
) -> Result<WorkabilityVerdict, AdapterFailure> {
    let mut rounds = Vec::with_capacity(cfg.rounds as usize);
    for round_index in 0..cfg.rounds {
        rounds.push(setup_test(
            entry,
            adapter,
            factory,
            &cfg.limits,
            round_index,
            cfg.level_for_round(round_index),
        )?);
    }
    Ok(combine_rounds(&entry.id, rounds))
}

/// Counts per final outcome over a whole dataset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExclusionSummary {
    pub total: usize,
    pub workable: usize,
    pub compilation_fails: usize,
    pub inconsistent_suite: usize,
    pub result_differs: usize,
    pub flaky: usize,
    /// Defects whose audit aborted on a harness error; reported separately,
    /// never counted in the five outcome categories above.
    pub audit_errors: usize,
    pub workable_ratio: f64,
    pub warning: Option<String>,
}

impl ExclusionSummary {
    pub fn excluded(&self) -> usize {
        self.compilation_fails + self.inconsistent_suite + self.result_differs + self.flaky
    }
}

/// Aggregates verdict categories into counts and the workable ratio.
pub fn classify_dataset<'a, I>(outcomes: I) -> ExclusionSummary
where
    I: IntoIterator<Item = &'a FinalOutcome>,
{
    let mut summary = ExclusionSummary::default();
    for outcome in outcomes {
        summary.total += 1;
        match outcome {
            FinalOutcome::Workable => summary.workable += 1,
            FinalOutcome::CompilationFails => summary.compilation_fails += 1,
            FinalOutcome::InconsistentSuite => summary.inconsistent_suite += 1,
            FinalOutcome::ResultDiffers => summary.result_differs += 1,
            FinalOutcome::Flaky => summary.flaky += 1,
        }
    }
    if summary.total == 0 {
        summary.workable_ratio = 1.0;
        summary.warning = Some("no verdicts: workable ratio is vacuous".into());
    } else {
        summary.workable_ratio = summary.workable as f64 / summary.total as f64;
    }
    summary
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Hunk, Patch};
    use crate::scripted::{Behavior, Scenario, ScenarioTest, ScriptedAdapter, SCENARIO_FILE};
    use std::collections::BTreeSet;
    use std::path::Path;

    pub(crate) fn scripted_entry(dir: &Path, scenario: &Scenario, expected: &[&str]) -> DefectEntry {
        let src = dir.join(format!("{}-src", scenario.defect_id.replace('/', "_")));
        let tests = dir.join(format!("{}-tests", scenario.defect_id.replace('/', "_")));
        std::fs::create_dir_all(&src).unwrap();
        std::fs::create_dir_all(&tests).unwrap();
        std::fs::write(src.join(SCENARIO_FILE), toml::to_string(scenario).unwrap()).unwrap();
        std::fs::write(tests.join("placeholder.minitest"), "").unwrap();
        DefectEntry {
            id: scenario.defect_id.clone(),
            project: scenario
                .defect_id
                .split('/')
                .next()
                .unwrap_or("S")
                .to_string(),
            source_root: src,
            test_root: tests,
            adapter: "scripted".into(),
            expected_failing: expected.iter().map(|s| s.to_string()).collect(),
            human_patch: Patch {
                hunks: vec![Hunk {
                    file: SCENARIO_FILE.into(),
                    removed: vec!["x".into()],
                    added: vec!["y".into()],
                }],
            },
            notes: None,
        }
    }

    fn scenario(id: &str, compile_ok: bool, tests: Vec<(&str, Behavior)>) -> Scenario {
        Scenario {
            defect_id: id.into(),
            compile_ok,
            seed: 7,
            tests: tests
                .into_iter()
                .map(|(id, behavior)| ScenarioTest {
                    id: id.into(),
                    behavior,
                })
                .collect(),
        }
    }

    fn fail(msg: &str) -> Behavior {
        Behavior::AlwaysFail {
            message: msg.into(),
        }
    }

    fn run_setup(entry: &DefectEntry, adapter: &ScriptedAdapter) -> RoundVerdict {
        let factory = WorkspaceFactory::ephemeral().unwrap();
        setup_test(entry, adapter, &factory, &ExecLimits::default(), 0, 1).unwrap()
    }

    #[test]
    fn compile_failure_shadows_everything() {
        let dir = tempfile::tempdir().unwrap();
        let s = scenario("S/1", false, vec![("T::bug", fail("boom"))]);
        let entry = scripted_entry(dir.path(), &s, &["T::bug"]);
        let adapter = ScriptedAdapter::new();
        let verdict = run_setup(&entry, &adapter);
        assert_eq!(verdict.outcome, RoundOutcome::CompilationFails);
        assert!(!verdict.evidence.compile_diagnostics.is_empty());
        // shadowing: no test execution happened
        let calls = adapter.calls("S/1");
        assert!(calls.contains(&"compile".to_string()));
        assert!(!calls.contains(&"run_suite".to_string()));
        assert!(!calls.contains(&"run_single".to_string()));
    }

    #[test]
    fn matching_failing_set_is_workable() {
        let dir = tempfile::tempdir().unwrap();
        let s = scenario(
            "S/2",
            true,
            vec![("T::bug", fail("expected defect")), ("T::ok", Behavior::AlwaysPass)],
        );
        let entry = scripted_entry(dir.path(), &s, &["T::bug"]);
        let verdict = run_setup(&entry, &ScriptedAdapter::new());
        assert_eq!(verdict.outcome, RoundOutcome::Workable);
        assert_eq!(
            verdict.evidence.failing,
            BTreeSet::from(["T::bug".to_string()])
        );
    }

    #[test]
    fn mode_asymmetry_is_an_inconsistent_suite() {
        let dir = tempfile::tempdir().unwrap();
        let s = scenario(
            "S/3",
            true,
            vec![
                ("T::bug", fail("expected defect")),
                ("T::dirty", Behavior::FailOnlyInFullSuite),
            ],
        );
        let entry = scripted_entry(dir.path(), &s, &["T::bug"]);
        let verdict = run_setup(&entry, &ScriptedAdapter::new());
        assert_eq!(verdict.outcome, RoundOutcome::InconsistentSuite);
        assert_eq!(verdict.evidence.disagreements.len(), 1);
        assert_eq!(verdict.evidence.disagreements[0].test_id, "T::dirty");
    }

    #[test]
    fn extra_failing_test_differs_from_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let s = scenario(
            "S/4",
            true,
            vec![("T::bug", fail("expected defect")), ("T::extra", fail("surprise"))],
        );
        let entry = scripted_entry(dir.path(), &s, &["T::bug"]);
        let verdict = run_setup(&entry, &ScriptedAdapter::new());
        assert_eq!(verdict.outcome, RoundOutcome::ResultDiffers);
        assert!(verdict.evidence.failing.contains("T::extra"));
    }

    #[test]
    fn verdict_precedence_over_all_phase_combinations() {
        // enumerate compile x consistency x failing-set-match on scripted
        // scenarios; the expected verdict is a pure function of the phases
        let dir = tempfile::tempdir().unwrap();
        for (i, (compile_ok, consistent, matches)) in
            itertools_like_product().into_iter().enumerate()
        {
            let mut tests = vec![("T::bug", fail("expected defect"))];
            if !consistent {
                tests.push(("T::dirty", Behavior::FailOnlyInFullSuite));
            }
            if !matches {
                tests.push(("T::extra", fail("surprise")));
            }
            let s = scenario(&format!("Combo/{i}"), compile_ok, tests);
            let entry = scripted_entry(dir.path(), &s, &["T::bug"]);
            let verdict = run_setup(&entry, &ScriptedAdapter::new());
            let expected = if !compile_ok {
                RoundOutcome::CompilationFails
            } else if !consistent {
                RoundOutcome::InconsistentSuite
            } else if !matches {
                RoundOutcome::ResultDiffers
            } else {
                RoundOutcome::Workable
            };
            assert_eq!(verdict.outcome, expected, "combo {i}");
        }
    }

    fn itertools_like_product() -> Vec<(bool, bool, bool)> {
        let mut out = Vec::new();
        for a in [true, false] {
            for b in [true, false] {
                for c in [true, false] {
                    out.push((a, b, c));
                }
            }
        }
        out
    }

    #[test]
    fn fail_after_13_within_20_rounds_is_flaky() {
        let dir = tempfile::tempdir().unwrap();
        let s = scenario(
            "S/5",
            true,
            vec![
                ("T::bug", fail("expected defect")),
                ("T::tides", Behavior::FailAfterNthExecution { n: 13 }),
            ],
        );
        let entry = scripted_entry(dir.path(), &s, &["T::bug"]);
        let adapter = ScriptedAdapter::new();
        let factory = WorkspaceFactory::ephemeral().unwrap();
        let verdict = audit(&entry, &adapter, &factory, &RoundConfig::default()).unwrap();
        assert_eq!(verdict.outcome, FinalOutcome::Flaky);
        assert_eq!(verdict.rounds.len(), 20);
        assert_eq!(verdict.rounds[11].outcome, RoundOutcome::Workable);
        assert_eq!(verdict.rounds[12].outcome, RoundOutcome::ResultDiffers);
    }

    #[test]
    fn zero_probability_flake_is_never_flaky() {
        let dir = tempfile::tempdir().unwrap();
        let s = scenario(
            "S/6",
            true,
            vec![
                ("T::bug", fail("expected defect")),
                ("T::solid", Behavior::FlakyFail { p: 0.0 }),
            ],
        );
        let entry = scripted_entry(dir.path(), &s, &["T::bug"]);
        let adapter = ScriptedAdapter::new();
        let factory = WorkspaceFactory::ephemeral().unwrap();
        let verdict = audit(&entry, &adapter, &factory, &RoundConfig::default()).unwrap();
        assert_eq!(verdict.outcome, FinalOutcome::Workable);
    }

    #[test]
    fn category_stable_rounds_with_differing_failing_sets_are_flaky() {
        // two ResultDiffers rounds with different failing sets
        let mk_round = |idx: u32, failing: &[&str]| RoundVerdict {
            defect_id: "X/1".into(),
            outcome: RoundOutcome::ResultDiffers,
            evidence: RoundEvidence {
                failing: failing.iter().map(|s| s.to_string()).collect(),
                ..Default::default()
            },
            round_index: idx,
            parallelism_level: 1,
        };
        let flaky = combine_rounds("X/1", vec![mk_round(0, &["T::a"]), mk_round(1, &["T::b"])]);
        assert_eq!(flaky.outcome, FinalOutcome::Flaky);

        let stable = combine_rounds("X/1", vec![mk_round(0, &["T::a"]), mk_round(1, &["T::a"])]);
        assert_eq!(stable.outcome, FinalOutcome::ResultDiffers);
    }

    #[test]
    fn differing_disagreement_lists_alone_are_not_flaky() {
        let mk_round = |idx: u32, test: &str| RoundVerdict {
            defect_id: "X/2".into(),
            outcome: RoundOutcome::InconsistentSuite,
            evidence: RoundEvidence {
                failing: BTreeSet::from(["T::bug".to_string()]),
                disagreements: vec![Disagreement {
                    test_id: test.into(),
                    suite_status: TestStatus::Fail,
                    single_status: TestStatus::Pass,
                }],
                ..Default::default()
            },
            round_index: idx,
            parallelism_level: 1,
        };
        let verdict = combine_rounds("X/2", vec![mk_round(0, "T::a"), mk_round(1, "T::b")]);
        assert_eq!(verdict.outcome, FinalOutcome::InconsistentSuite);
    }

    #[test]
    fn classify_counts_partition_and_ratio() {
        use FinalOutcome::*;
        let outcomes = vec![Workable, Workable, Flaky, CompilationFails, InconsistentSuite];
        let summary = classify_dataset(outcomes.iter());
        assert_eq!(summary.total, 5);
        assert_eq!(summary.workable, 2);
        assert_eq!(summary.excluded(), 3);
        assert!((summary.workable_ratio - 0.4).abs() < 1e-12);
        assert!(summary.warning.is_none());
    }

    #[test]
    fn classify_empty_is_vacuous_with_warning() {
        let summary = classify_dataset(std::iter::empty());
        assert_eq!(summary.total, 0);
        assert_eq!(summary.workable_ratio, 1.0);
        assert!(summary.warning.is_some());
    }

    #[test]
    fn unknown_adapter_style_failure_aborts_with_adapter_failure() {
        // a scripted entry whose scenario file is missing breaks the adapter
        let dir = tempfile::tempdir().unwrap();
        let s = scenario("S/7", true, vec![("T::bug", fail("x"))]);
        let mut entry = scripted_entry(dir.path(), &s, &["T::bug"]);
        std::fs::remove_file(entry.source_root.join(SCENARIO_FILE)).unwrap();
        // parse reports a diagnostic for the missing file, which is a
        // CompilationFails-style result, not an abort; make compile blow up
        // instead by removing the whole source root
        std::fs::remove_dir_all(&entry.source_root).unwrap();
        entry.source_root = dir.path().join("gone");
        let factory = WorkspaceFactory::ephemeral().unwrap();
        let err = setup_test(
            &entry,
            &ScriptedAdapter::new(),
            &factory,
            &ExecLimits::default(),
            0,
            1,
        );
        assert!(err.is_err());
    }
}
