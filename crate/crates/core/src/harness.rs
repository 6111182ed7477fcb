//! Dataset-wide orchestration: co-scheduled audit rounds at the configured
//! parallelism levels, resumable through the results log, plus the SBFL +
//! deletion-sweep pipeline over workable defects.
//!
//! Scheduling is round-major: round `r` of every defect still missing it runs
//! on a pool of `level(r)` workers, and the round's records are appended in
//! dataset order regardless of completion order, so a full log is
//! reproducible for deterministic subjects.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::Path;
use std::sync::Mutex;

use thiserror::Error;

use crate::adequacy::{
    adequacy_verdict, dataset_adequacy_summary, deletion_sweep, AdequacySummary, AdequacyVerdict,
    SweepBudget,
};
use crate::dataset::{Dataset, DefectEntry, ManifestAdapters};
use crate::results_log::{replay_file, LogError, LogWriter, Record, Replay};
use crate::sbfl::{build_matrix, rank, select_candidates};
use crate::subject::{
    external::ExternalAdapter, AdapterRegistry, CoverageRecord, ExecLimits, WorkspaceFactory,
};
use crate::workability::{setup_test, RoundConfig, WorkabilityVerdict};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("workspace setup failed: {0}")]
    Workspace(#[from] std::io::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Registers each `[adapters]` entry of a manifest as an external
/// stdio-protocol adapter.
pub fn register_manifest_adapters(
    registry: &AdapterRegistry,
    adapters: &ManifestAdapters,
) -> Result<(), crate::subject::AdapterError> {
    for (id, argv) in &adapters.commands {
        registry.register(id.clone(), std::sync::Arc::new(ExternalAdapter::new(argv.clone())))?;
    }
    Ok(())
}

#[derive(Debug, Default)]
pub struct AuditOutcome {
    pub verdicts: BTreeMap<String, WorkabilityVerdict>,
    pub audit_errors: BTreeMap<String, String>,
    /// Rounds actually executed by this invocation (0 when fully resumed).
    pub rounds_run: usize,
}

/// Audits every dataset entry for `cfg.rounds` rounds, appending one record
/// per round to the log. Rounds already present in the log are skipped, so
/// an interrupted audit resumes to the same final state.
pub fn audit_dataset(
    dataset: &Dataset,
    registry: &AdapterRegistry,
    cfg: &RoundConfig,
    factory: &WorkspaceFactory,
    log_path: &Path,
) -> Result<AuditOutcome, HarnessError> {
    cfg.validate().map_err(HarnessError::Config)?;

    let existing = replay_file(log_path)?;
    let done: BTreeSet<(String, u32)> = existing.completed_rounds();
    let mut errored: BTreeSet<String> = existing.audit_errors.keys().cloned().collect();
    let mut writer = LogWriter::append(log_path)?;
    let mut rounds_run = 0usize;

    for round_index in 0..cfg.rounds {
        let level = cfg.level_for_round(round_index) as usize;
        let pending: Vec<(usize, &DefectEntry)> = dataset
            .entries
            .iter()
            .enumerate()
            .filter(|(_, e)| {
                !errored.contains(&e.id) && !done.contains(&(e.id.clone(), round_index))
            })
            .collect();
        if pending.is_empty() {
            continue;
        }
        rounds_run += pending.len();

        let queue: Mutex<VecDeque<(usize, &DefectEntry)>> = Mutex::new(pending.into());
        let results: Mutex<Vec<(usize, Record)>> = Mutex::new(Vec::new());
        let workers = level.max(1);

        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let Some((idx, entry)) = queue.lock().expect("queue poisoned").pop_front()
                    else {
                        break;
                    };
                    let record = match registry.resolve(&entry.adapter) {
                        Ok(adapter) => match setup_test(
                            entry,
                            adapter.as_ref(),
                            factory,
                            &cfg.limits,
                            round_index,
                            level as u32,
                        ) {
                            Ok(verdict) => Record::Round(verdict),
                            Err(failure) => Record::AuditError {
                                defect_id: failure.defect_id,
                                message: failure.message,
                            },
                        },
                        Err(e) => Record::AuditError {
                            defect_id: entry.id.clone(),
                            message: e.to_string(),
                        },
                    };
                    results.lock().expect("results poisoned").push((idx, record));
                });
            }
        });

        let mut results = results.into_inner().expect("results poisoned");
        results.sort_by_key(|(idx, _)| *idx);
        for (_, record) in results {
            if let Record::AuditError { defect_id, .. } = &record {
                errored.insert(defect_id.clone());
            }
            writer.write(&record)?;
        }
    }

    let replayed = replay_file(log_path)?;
    Ok(AuditOutcome {
        verdicts: replayed.verdicts,
        audit_errors: replayed.audit_errors,
        rounds_run,
    })
}

#[derive(Debug, Clone)]
pub struct AdequacyConfig {
    pub threshold: f64,
    pub cap: usize,
    pub budget: SweepBudget,
    pub limits: ExecLimits,
}

impl Default for AdequacyConfig {
    fn default() -> Self {
        AdequacyConfig {
            threshold: crate::sbfl::DEFAULT_THRESHOLD,
            cap: crate::sbfl::DEFAULT_CAP,
            budget: SweepBudget::default(),
            limits: ExecLimits::default(),
        }
    }
}

#[derive(Debug, Default)]
pub struct AdequacyOutcome {
    pub verdicts: Vec<AdequacyVerdict>,
    pub errors: BTreeMap<String, String>,
    pub summary: AdequacySummary,
}

/// Runs fault localization plus a deletion sweep over every defect the
/// replayed log shows as workable, appending trial and verdict records.
pub fn run_adequacy(
    dataset: &Dataset,
    registry: &AdapterRegistry,
    audited: &Replay,
    cfg: &AdequacyConfig,
    factory: &WorkspaceFactory,
    log_path: &Path,
) -> Result<AdequacyOutcome, HarnessError> {
    let mut writer = LogWriter::append(log_path)?;
    let mut outcome = AdequacyOutcome::default();

    for entry in &dataset.entries {
        let workable = audited
            .verdicts
            .get(&entry.id)
            .is_some_and(|v| v.outcome == crate::workability::FinalOutcome::Workable);
        if !workable {
            continue;
        }
        match sweep_one(entry, registry, cfg, factory) {
            Ok((trials, verdict)) => {
                for t in &trials {
                    writer.write(&Record::Trial(t.clone()))?;
                }
                writer.write(&Record::Adequacy(verdict.clone()))?;
                outcome.verdicts.push(verdict);
            }
            Err(message) => {
                writer.write(&Record::AuditError {
                    defect_id: entry.id.clone(),
                    message: message.clone(),
                })?;
                outcome.errors.insert(entry.id.clone(), message);
            }
        }
    }
    outcome.summary = dataset_adequacy_summary(&outcome.verdicts);
    Ok(outcome)
}

fn sweep_one(
    entry: &DefectEntry,
    registry: &AdapterRegistry,
    cfg: &AdequacyConfig,
    factory: &WorkspaceFactory,
) -> Result<(Vec<crate::adequacy::DeletionTrial>, AdequacyVerdict), String> {
    let adapter = registry
        .resolve(&entry.adapter)
        .map_err(|e| e.to_string())?;
    let adapter = adapter.as_ref();

    // coverage pass on a pristine checkout
    let ws = factory
        .checkout(entry, "sbfl")
        .map_err(|e| format!("checkout failed: {e}"))?;
    let compiled = adapter.compile(&ws).map_err(|e| e.to_string())?;
    if !compiled.ok {
        return Err("workable defect stopped compiling during adequacy run".into());
    }
    let suite = adapter
        .run_suite(&ws, &cfg.limits)
        .map_err(|e| e.to_string())?;
    let mut records: Vec<CoverageRecord> = Vec::with_capacity(suite.outcomes.len());
    for test_id in suite.outcomes.keys() {
        let (_, coverage) = adapter
            .run_single(&ws, test_id, &cfg.limits)
            .map_err(|e| e.to_string())?;
        records.push(coverage);
    }
    let program_statements = adapter.statements(&ws).map_err(|e| e.to_string())?;

    let matrix = build_matrix(&records, &program_statements).map_err(|e| e.to_string())?;
    let ranked = rank(&matrix).map_err(|e| e.to_string())?;
    let candidates = select_candidates(&ranked, cfg.threshold, cfg.cap);

    let trials = deletion_sweep(entry, adapter, factory, &candidates, &cfg.budget, &cfg.limits)
        .map_err(|e| e.message)?;
    let verdict = adequacy_verdict(entry, &trials);
    Ok((trials, verdict))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Hunk, Patch};
    use crate::workability::FinalOutcome;
    use std::fs;
    use std::path::PathBuf;

    /// A deterministic minilang defect: `mid` returns the wrong constant, one
    /// test catches it, the others pass.
    pub(crate) fn minilang_entry(dir: &Path, id: &str, failing_tests: usize) -> DefectEntry {
        let safe = id.replace('/', "_");
        let src = dir.join(format!("{safe}-src"));
        let tests = dir.join(format!("{safe}-tests"));
        fs::create_dir_all(&src).unwrap();
        fs::create_dir_all(&tests).unwrap();
        fs::write(
            src.join("lib.mini"),
            "fn mid(a, b) { return (a + b) / 2; }\nfn off_by_one(x) { return x; }\n",
        )
        .unwrap();
        let mut suite = String::from("test T::mid_ok { assert mid(2, 4) == 3; }\n");
        for i in 0..failing_tests {
            // off_by_one should add one; these tests expose it
            suite.push_str(&format!(
                "test T::bug{i} {{ assert off_by_one({i}) == {}; }}\n",
                i + 1
            ));
        }
        fs::write(tests.join("suite.minitest"), suite).unwrap();
        let patch = dir.join(format!("{safe}.diff"));
        fs::write(
            &patch,
            "--- a/lib.mini\n+++ b/lib.mini\n@@ -2 +2 @@\n-fn off_by_one(x) { return x; }\n+fn off_by_one(x) { return x + 1; }\n",
        )
        .unwrap();
        DefectEntry {
            id: id.into(),
            project: id.split('/').next().unwrap().into(),
            source_root: src,
            test_root: tests,
            adapter: "minilang".into(),
            expected_failing: (0..failing_tests).map(|i| format!("T::bug{i}")).collect(),
            human_patch: Patch {
                hunks: vec![Hunk {
                    file: "lib.mini".into(),
                    removed: vec!["fn off_by_one(x) { return x; }".into()],
                    added: vec!["fn off_by_one(x) { return x + 1; }".into()],
                }],
            },
            notes: None,
        }
    }

    fn dataset_of(entries: Vec<DefectEntry>) -> Dataset {
        Dataset {
            name: "harness-test".into(),
            version: "0".into(),
            entries,
        }
    }

    fn tiny_cfg(rounds: u32, schedule: Vec<u32>) -> RoundConfig {
        RoundConfig {
            rounds,
            parallelism_schedule: schedule,
            limits: ExecLimits::default(),
        }
    }

    #[test]
    fn audit_writes_one_verdict_per_entry() {
        let dir = tempfile::tempdir().unwrap();
        let entries = (1..=3)
            .map(|i| minilang_entry(dir.path(), &format!("Demo/{i}"), 1))
            .collect();
        let dataset = dataset_of(entries);
        let registry = AdapterRegistry::with_builtins();
        let factory = WorkspaceFactory::ephemeral().unwrap();
        let log = dir.path().join("log.jsonl");

        let outcome =
            audit_dataset(&dataset, &registry, &tiny_cfg(3, vec![1, 2]), &factory, &log).unwrap();
        assert_eq!(outcome.verdicts.len(), 3);
        assert!(outcome
            .verdicts
            .values()
            .all(|v| v.outcome == FinalOutcome::Workable && v.rounds.len() == 3));
    }

    #[test]
    fn interrupted_audit_resumes_to_the_same_log() {
        let dir = tempfile::tempdir().unwrap();
        let entries: Vec<DefectEntry> = (1..=3)
            .map(|i| minilang_entry(dir.path(), &format!("Demo/{i}"), 1))
            .collect();
        let dataset = dataset_of(entries);
        let registry = AdapterRegistry::with_builtins();
        let factory = WorkspaceFactory::ephemeral().unwrap();

        // uninterrupted reference
        let full_log = dir.path().join("full.jsonl");
        audit_dataset(&dataset, &registry, &tiny_cfg(4, vec![2]), &factory, &full_log).unwrap();

        // interrupted: first run only 2 rounds, then the full config
        let resumed_log = dir.path().join("resumed.jsonl");
        audit_dataset(&dataset, &registry, &tiny_cfg(2, vec![2]), &factory, &resumed_log).unwrap();
        let second =
            audit_dataset(&dataset, &registry, &tiny_cfg(4, vec![2]), &factory, &resumed_log)
                .unwrap();
        assert_eq!(second.rounds_run, 6, "only the missing rounds run");

        let full = crate::results_log::read_log(&full_log).unwrap();
        let resumed = crate::results_log::read_log(&resumed_log).unwrap();
        assert_eq!(full.len(), resumed.len());
        // same record set (append order differs across the interruption)
        let canon = |records: &[Record]| {
            let mut v: Vec<String> = records
                .iter()
                .map(|r| serde_json::to_string(r).unwrap())
                .collect();
            v.sort();
            v
        };
        assert_eq!(canon(&full), canon(&resumed));

        // and the replayed verdicts agree exactly
        let a = crate::results_log::replay_file(&full_log).unwrap();
        let b = crate::results_log::replay_file(&resumed_log).unwrap();
        assert_eq!(a.verdicts, b.verdicts);
    }

    #[test]
    fn resuming_a_complete_log_runs_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let dataset = dataset_of(vec![minilang_entry(dir.path(), "Demo/1", 1)]);
        let registry = AdapterRegistry::with_builtins();
        let factory = WorkspaceFactory::ephemeral().unwrap();
        let log = dir.path().join("log.jsonl");
        let cfg = tiny_cfg(3, vec![1]);
        let first = audit_dataset(&dataset, &registry, &cfg, &factory, &log).unwrap();
        assert_eq!(first.rounds_run, 3);
        let second = audit_dataset(&dataset, &registry, &cfg, &factory, &log).unwrap();
        assert_eq!(second.rounds_run, 0);
    }

    #[test]
    fn unknown_adapter_becomes_an_audit_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut entry = minilang_entry(dir.path(), "Demo/1", 1);
        entry.adapter = "no-such-adapter".into();
        let dataset = dataset_of(vec![entry]);
        let registry = AdapterRegistry::with_builtins();
        let factory = WorkspaceFactory::ephemeral().unwrap();
        let log = dir.path().join("log.jsonl");
        let outcome =
            audit_dataset(&dataset, &registry, &tiny_cfg(5, vec![1]), &factory, &log).unwrap();
        assert!(outcome.verdicts.is_empty());
        assert_eq!(outcome.audit_errors.len(), 1);
        // the defect is abandoned after the first failing round
        let records = crate::results_log::read_log(&log).unwrap();
        assert_eq!(records.len(), 1);
    }

    #[test]
    fn serial_and_parallel_schedules_agree_on_deterministic_subjects() {
        let dir = tempfile::tempdir().unwrap();
        let entries: Vec<DefectEntry> = (1..=6)
            .map(|i| minilang_entry(dir.path(), &format!("Demo/{i}"), 1 + (i as usize % 2)))
            .collect();
        let dataset = dataset_of(entries);
        let registry = AdapterRegistry::with_builtins();
        let factory = WorkspaceFactory::ephemeral().unwrap();

        let serial_log = dir.path().join("serial.jsonl");
        let parallel_log = dir.path().join("parallel.jsonl");
        let serial = audit_dataset(&dataset, &registry, &tiny_cfg(3, vec![1]), &factory, &serial_log)
            .unwrap();
        let parallel =
            audit_dataset(&dataset, &registry, &tiny_cfg(3, vec![6]), &factory, &parallel_log)
                .unwrap();

        let project = |o: &AuditOutcome| -> Vec<(String, FinalOutcome, BTreeSet<String>)> {
            o.verdicts
                .values()
                .map(|v| {
                    (
                        v.defect_id.clone(),
                        v.outcome,
                        v.rounds[0].evidence.failing.clone(),
                    )
                })
                .collect()
        };
        assert_eq!(project(&serial), project(&parallel));
    }

    fn fixture_entry(dir: &Path, name: &str, program: &str, suite: &str, diff: &str) -> DefectEntry {
        let src = dir.join(format!("{name}-src"));
        let tests = dir.join(format!("{name}-tests"));
        fs::create_dir_all(&src).unwrap();
        fs::create_dir_all(&tests).unwrap();
        fs::write(src.join("lib.mini"), program).unwrap();
        fs::write(tests.join("suite.minitest"), suite).unwrap();
        let patch_path: PathBuf = dir.join(format!("{name}.diff"));
        fs::write(&patch_path, diff).unwrap();
        DefectEntry {
            id: format!("Fix/{name}").replace('-', ""),
            project: "Fix".into(),
            source_root: src,
            test_root: tests,
            adapter: "minilang".into(),
            expected_failing: ["Fmt::empty_arg_is_plain".to_string()].into_iter().collect(),
            human_patch: crate::dataset::parse_unified_diff(diff).unwrap(),
            notes: None,
        }
    }

    /// The under-specified-guard fixture: a decoration statement inside an
    /// `if` whose content no test pins down.
    pub(crate) const GUARD_PROGRAM: &str = "\
fn render(has_arg, arg_len) {
  out = 100;
  if has_arg {
    out = out + arg_len;
    out = out + 1;
  }
  return out;
}
";

    pub(crate) const GUARD_SUITE: &str = "\
test Fmt::empty_arg_is_plain { assert render(true, 0) == 100; }
test Fmt::no_arg_is_plain { assert render(false, 3) == 100; }
test Fmt::arg_widens_output { assert render(true, 7) > 105; }
";

    pub(crate) const GUARD_DIFF: &str = "\
--- a/lib.mini
+++ b/lib.mini
@@ -3 +3 @@
-  if has_arg {
+  if has_arg && arg_len > 0 {
";

    #[test]
    fn adequacy_pipeline_finds_the_unasserted_statement() {
        let dir = tempfile::tempdir().unwrap();
        let entry = fixture_entry(dir.path(), "guard", GUARD_PROGRAM, GUARD_SUITE, GUARD_DIFF);
        let dataset = dataset_of(vec![entry]);
        let registry = AdapterRegistry::with_builtins();
        let factory = WorkspaceFactory::ephemeral().unwrap();
        let log = dir.path().join("log.jsonl");

        audit_dataset(&dataset, &registry, &tiny_cfg(2, vec![1]), &factory, &log).unwrap();
        let replayed = replay_file(&log).unwrap();
        assert_eq!(
            replayed.verdicts["Fix/guard"].outcome,
            FinalOutcome::Workable
        );

        let outcome = run_adequacy(
            &dataset,
            &registry,
            &replayed,
            &AdequacyConfig::default(),
            &factory,
            &log,
        )
        .unwrap();
        assert_eq!(outcome.verdicts.len(), 1);
        let verdict = &outcome.verdicts[0];
        assert!(verdict.trivially_plausible);
        assert_eq!(
            verdict.plausible_locations,
            vec![crate::subject::StatementLocation::new("src/lib.mini", 4)],
            "exactly the unasserted decoration statement"
        );
        assert!(!verdict.human_patch_deletion_only);
        assert!(verdict.under_specified);
        assert!(!verdict.truncated);
    }
}
