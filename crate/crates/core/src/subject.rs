//! The adapter contract through which subjects are parsed, compiled, and
//! tested, plus the workspace machinery that keeps concurrent executions from
//! interfering with each other.
//!
//! Every execution works on a [`Workspace`]: a private copy of the defect's
//! source and test trees plus a fresh scratch directory. The original dataset
//! files are never touched after checkout, so any number of rounds, variants,
//! and defects can run in parallel.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::DefectEntry;

pub mod external;

#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("unknown test {0}")]
    UnknownTest(String),
    #[error("adapter {0} is already registered")]
    DuplicateAdapter(String),
    #[error("no adapter registered under id {0}")]
    UnknownAdapter(String),
    #[error("statement {0} is not deletable: {1}")]
    NotDeletable(String, String),
    #[error("adapter does not support statement mutation")]
    MutationUnsupported,
    #[error("subject process terminated abnormally: {0}")]
    SubjectCrash(String),
    #[error("whole-suite budget exceeded after {0:?}")]
    TimeoutExceeded(Duration),
    #[error("external adapter protocol error: {0}")]
    Protocol(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Other(String),
}

/// Execution limits handed to adapters. The suite timeout bounds one whole
/// test-suite run, the test timeout one individual test, and the fuel bounds
/// interpreter steps per test so infinite loops terminate deterministically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecLimits {
    pub suite_timeout: Duration,
    pub test_timeout: Duration,
    pub fuel: u64,
}

impl Default for ExecLimits {
    fn default() -> Self {
        ExecLimits {
            suite_timeout: Duration::from_secs(60),
            test_timeout: Duration::from_secs(10),
            fuel: 1_000_000,
        }
    }
}

// ---------------------------------------------------------------------------
// Result types
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub file: PathBuf,
    pub line: u32,
    pub message: String,
    pub severity: Severity,
}

impl Diagnostic {
    pub fn error(file: impl Into<PathBuf>, line: u32, message: impl Into<String>) -> Self {
        Diagnostic {
            file: file.into(),
            line,
            message: message.into(),
            severity: Severity::Error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseReport {
    pub ok: bool,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompileResult {
    pub ok: bool,
    pub diagnostics: Vec<Diagnostic>,
}

impl CompileResult {
    /// Builds a result whose `ok` flag is consistent with the diagnostics:
    /// success never carries error-severity entries.
    pub fn from_diagnostics(diagnostics: Vec<Diagnostic>) -> Self {
        let ok = diagnostics.iter().all(|d| d.severity != Severity::Error);
        CompileResult { ok, diagnostics }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TestStatus {
    Pass,
    Fail,
    Error,
    Timeout,
}

impl std::fmt::Display for TestStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            TestStatus::Pass => "pass",
            TestStatus::Fail => "fail",
            TestStatus::Error => "error",
            TestStatus::Timeout => "timeout",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub test_id: String,
    pub status: TestStatus,
    pub message: Option<String>,
    pub duration_ms: u64,
}

impl TestOutcome {
    pub fn pass(test_id: impl Into<String>, duration_ms: u64) -> Self {
        TestOutcome {
            test_id: test_id.into(),
            status: TestStatus::Pass,
            message: None,
            duration_ms,
        }
    }

    pub fn not_passing(
        test_id: impl Into<String>,
        status: TestStatus,
        message: impl Into<String>,
        duration_ms: u64,
    ) -> Self {
        debug_assert!(status != TestStatus::Pass);
        TestOutcome {
            test_id: test_id.into(),
            status,
            message: Some(message.into()),
            duration_ms,
        }
    }

    pub fn passed(&self) -> bool {
        self.status == TestStatus::Pass
    }
}

/// Per-test outcomes of one test-suite execution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub outcomes: BTreeMap<String, TestOutcome>,
    pub wall_time_ms: u64,
}

impl SuiteResult {
    /// Ids of tests that did not pass (fail, error, or timeout all count).
    pub fn failing_set(&self) -> BTreeSet<String> {
        self.outcomes
            .values()
            .filter(|o| !o.passed())
            .map(|o| o.test_id.clone())
            .collect()
    }

    pub fn all_passed(&self) -> bool {
        self.outcomes.values().all(|o| o.passed())
    }

    /// Equality up to durations: same tests, same statuses, same messages.
    pub fn same_outcomes(&self, other: &SuiteResult) -> bool {
        self.outcomes.len() == other.outcomes.len()
            && self.outcomes.iter().all(|(id, o)| {
                other
                    .outcomes
                    .get(id)
                    .is_some_and(|p| p.status == o.status && p.message == o.message)
            })
    }
}

/// A statement within the unmutated source tree, identified by file and a
/// pre-order ordinal assigned at parse time. Deletion never renumbers: the
/// location always refers to the original tree, which keeps fault-localization
/// keys stable across variants.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StatementLocation {
    pub file: PathBuf,
    pub statement_index: u32,
}

impl StatementLocation {
    pub fn new(file: impl Into<PathBuf>, statement_index: u32) -> Self {
        StatementLocation {
            file: file.into(),
            statement_index,
        }
    }
}

impl std::fmt::Display for StatementLocation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.file.display(), self.statement_index)
    }
}

/// Statement coverage of one individual test execution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageRecord {
    pub test_id: String,
    pub covered: BTreeSet<StatementLocation>,
    pub outcome: TestOutcome,
}

// ---------------------------------------------------------------------------
// Workspaces
// ---------------------------------------------------------------------------

/// A private checkout of one defect: `root/src` and `root/tests` hold copies
/// of the entry's trees, `temp_dir` is execution-private scratch. No two live
/// workspaces ever share either path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Workspace {
    pub defect_id: String,
    pub root: PathBuf,
    pub temp_dir: PathBuf,
    pub label: String,
}

impl Workspace {
    pub fn src_dir(&self) -> PathBuf {
        self.root.join("src")
    }

    pub fn tests_dir(&self) -> PathBuf {
        self.root.join("tests")
    }
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

fn copy_tree(from: &Path, to: &Path) -> std::io::Result<()> {
    for entry in walkdir::WalkDir::new(from) {
        let entry = entry.map_err(std::io::Error::other)?;
        let rel = entry
            .path()
            .strip_prefix(from)
            .map_err(std::io::Error::other)?;
        let target = to.join(rel);
        if entry.file_type().is_dir() {
            std::fs::create_dir_all(&target)?;
        } else {
            if let Some(parent) = target.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::copy(entry.path(), &target)?;
        }
    }
    Ok(())
}

/// Creates checkouts under one base directory, guaranteeing unique workspace
/// paths via a monotone counter.
#[derive(Debug)]
pub struct WorkspaceFactory {
    base: PathBuf,
    counter: AtomicU64,
    _owned: Option<tempfile::TempDir>,
}

impl WorkspaceFactory {
    /// A factory rooted at a fresh temporary directory that is removed when
    /// the factory is dropped.
    pub fn ephemeral() -> std::io::Result<Self> {
        let dir = tempfile::Builder::new().prefix("apr-audit-").tempdir()?;
        Ok(WorkspaceFactory {
            base: dir.path().to_path_buf(),
            counter: AtomicU64::new(0),
            _owned: Some(dir),
        })
    }

    /// A factory rooted at a caller-managed directory (kept after drop).
    pub fn at(base: impl Into<PathBuf>) -> std::io::Result<Self> {
        let base = base.into();
        std::fs::create_dir_all(&base)?;
        Ok(WorkspaceFactory {
            base,
            counter: AtomicU64::new(0),
            _owned: None,
        })
    }

    /// Checks out a private copy of the entry's source and test trees.
    /// The returned workspace's paths are disjoint from every other
    /// workspace's, its temp dir starts empty, and nothing done to the copy
    /// can reach the original dataset files.
    pub fn checkout(&self, entry: &DefectEntry, label: &str) -> std::io::Result<Workspace> {
        let n = self.counter.fetch_add(1, Ordering::Relaxed);
        let dir = self
            .base
            .join(format!("{}-{n:05}-{}", sanitize(&entry.id), sanitize(label)));
        let root = dir.join("work");
        let temp_dir = dir.join("tmp");
        std::fs::create_dir_all(&root)?;
        std::fs::create_dir_all(&temp_dir)?;
        copy_tree(&entry.source_root, &root.join("src"))?;
        copy_tree(&entry.test_root, &root.join("tests"))?;
        Ok(Workspace {
            defect_id: entry.id.clone(),
            root,
            temp_dir,
            label: label.to_string(),
        })
    }
}

// ---------------------------------------------------------------------------
// The adapter contract
// ---------------------------------------------------------------------------

/// What the auditor needs from a subject toolchain. Adapters must tolerate
/// concurrent invocations on distinct workspaces; a single workspace is used
/// by at most one execution at a time (caller-enforced).
pub trait SubjectAdapter: Send + Sync {
    /// Syntax-checks every source file. Failures are diagnostics, not errors.
    fn parse(&self, ws: &Workspace) -> Result<ParseReport, AdapterError>;

    /// Builds an executable program image for the workspace. Failure is a
    /// value, not an error.
    fn compile(&self, ws: &Workspace) -> Result<CompileResult, AdapterError>;

    /// Runs the whole test suite in declared order, one outcome per test.
    fn run_suite(&self, ws: &Workspace, limits: &ExecLimits) -> Result<SuiteResult, AdapterError>;

    /// Runs exactly one test in a fresh execution context, with coverage.
    fn run_single(
        &self,
        ws: &Workspace,
        test_id: &str,
        limits: &ExecLimits,
    ) -> Result<(TestOutcome, CoverageRecord), AdapterError>;

    /// All statement locations of the compiled program, in canonical order.
    /// Adapters without statement granularity report none.
    fn statements(&self, _ws: &Workspace) -> Result<Vec<StatementLocation>, AdapterError> {
        Ok(Vec::new())
    }

    /// Marks one statement of the workspace's program as deleted, so later
    /// compile/run calls observe the variant. Only mutation-capable adapters
    /// support this.
    fn delete_statement(
        &self,
        _ws: &Workspace,
        _loc: &StatementLocation,
    ) -> Result<(), AdapterError> {
        Err(AdapterError::MutationUnsupported)
    }
}

/// Thread-safe id -> adapter map.
#[derive(Default)]
pub struct AdapterRegistry {
    adapters: RwLock<BTreeMap<String, Arc<dyn SubjectAdapter>>>,
}

impl AdapterRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// A registry with the built-in adapters (`minilang`, `scripted`)
    /// pre-registered.
    pub fn with_builtins() -> Self {
        let reg = Self::new();
        reg.register("minilang", Arc::new(crate::minilang::MinilangAdapter::new()))
            .expect("fresh registry");
        reg.register("scripted", Arc::new(crate::scripted::ScriptedAdapter::new()))
            .expect("fresh registry");
        reg
    }

    pub fn register(
        &self,
        id: impl Into<String>,
        adapter: Arc<dyn SubjectAdapter>,
    ) -> Result<(), AdapterError> {
        let id = id.into();
        let mut map = self.adapters.write().expect("registry poisoned");
        if map.contains_key(&id) {
            return Err(AdapterError::DuplicateAdapter(id));
        }
        map.insert(id, adapter);
        Ok(())
    }

    pub fn resolve(&self, id: &str) -> Result<Arc<dyn SubjectAdapter>, AdapterError> {
        self.adapters
            .read()
            .expect("registry poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| AdapterError::UnknownAdapter(id.to_string()))
    }

    pub fn ids(&self) -> Vec<String> {
        self.adapters
            .read()
            .expect("registry poisoned")
            .keys()
            .cloned()
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet as Set;
    use std::fs;

    fn demo_entry(dir: &Path) -> DefectEntry {
        let src = dir.join("src");
        let tests = dir.join("tests");
        fs::create_dir_all(&src).unwrap();
        fs::create_dir_all(&tests).unwrap();
        fs::write(src.join("lib.mini"), "fn f(x) { return x; }\n").unwrap();
        fs::write(tests.join("suite.minitest"), "test T::a { assert f(1) == 1; }\n").unwrap();
        DefectEntry {
            id: "Demo/1".into(),
            project: "Demo".into(),
            source_root: src,
            test_root: tests,
            adapter: "minilang".into(),
            expected_failing: ["T::a".to_string()].into_iter().collect(),
            human_patch: crate::dataset::Patch {
                hunks: vec![crate::dataset::Hunk {
                    file: "lib.mini".into(),
                    removed: vec!["x".into()],
                    added: vec![],
                }],
            },
            notes: None,
        }
    }

    #[test]
    fn two_checkouts_have_distinct_paths() {
        let dir = tempfile::tempdir().unwrap();
        let entry = demo_entry(dir.path());
        let factory = WorkspaceFactory::ephemeral().unwrap();
        let a = factory.checkout(&entry, "round-0").unwrap();
        let b = factory.checkout(&entry, "round-0").unwrap();
        assert_ne!(a.root, b.root);
        assert_ne!(a.temp_dir, b.temp_dir);
        assert!(!a.root.starts_with(&b.root) && !b.root.starts_with(&a.root));
    }

    #[test]
    fn temp_dir_is_empty_at_creation() {
        let dir = tempfile::tempdir().unwrap();
        let entry = demo_entry(dir.path());
        let factory = WorkspaceFactory::ephemeral().unwrap();
        let ws = factory.checkout(&entry, "r").unwrap();
        assert_eq!(fs::read_dir(&ws.temp_dir).unwrap().count(), 0);
    }

    #[test]
    fn mutating_the_checkout_leaves_the_original_untouched() {
        let dir = tempfile::tempdir().unwrap();
        let entry = demo_entry(dir.path());
        let original = fs::read(entry.source_root.join("lib.mini")).unwrap();

        let factory = WorkspaceFactory::ephemeral().unwrap();
        let ws = factory.checkout(&entry, "r").unwrap();
        fs::write(ws.src_dir().join("lib.mini"), "fn f(x) { return 0; }\n").unwrap();
        fs::write(ws.temp_dir.join("scratch"), "junk").unwrap();

        assert_eq!(fs::read(entry.source_root.join("lib.mini")).unwrap(), original);
    }

    #[test]
    fn twenty_five_concurrent_checkouts_are_pairwise_disjoint() {
        let dir = tempfile::tempdir().unwrap();
        let entry = demo_entry(dir.path());
        let factory = WorkspaceFactory::ephemeral().unwrap();

        let workspaces: Vec<Workspace> = std::thread::scope(|scope| {
            let handles: Vec<_> = (0..25)
                .map(|i| {
                    let factory = &factory;
                    let entry = &entry;
                    scope.spawn(move || factory.checkout(entry, &format!("trial-{i}")).unwrap())
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });

        assert_eq!(workspaces.len(), 25);
        let mut paths = Set::new();
        for ws in &workspaces {
            assert!(paths.insert(ws.root.clone()));
            assert!(paths.insert(ws.temp_dir.clone()));
        }
        // no path is a prefix of another
        for a in &paths {
            for b in &paths {
                if a != b {
                    assert!(!a.starts_with(b), "{} under {}", a.display(), b.display());
                }
            }
        }
    }

    #[test]
    fn registry_rejects_duplicate_ids() {
        let reg = AdapterRegistry::with_builtins();
        let dup = reg.register(
            "minilang",
            Arc::new(crate::minilang::MinilangAdapter::new()),
        );
        assert!(matches!(dup, Err(AdapterError::DuplicateAdapter(_))));
        assert!(reg.resolve("minilang").is_ok());
        assert!(matches!(
            reg.resolve("nope"),
            Err(AdapterError::UnknownAdapter(_))
        ));
    }

    #[test]
    fn pass_outcomes_carry_no_message() {
        let o = TestOutcome::pass("T::a", 3);
        assert!(o.message.is_none());
        assert!(o.passed());
    }

    #[test]
    fn compile_result_ok_flag_tracks_error_severity() {
        let ok = CompileResult::from_diagnostics(vec![Diagnostic {
            file: "lib.mini".into(),
            line: 1,
            message: "shadowed name".into(),
            severity: Severity::Warning,
        }]);
        assert!(ok.ok);
        let bad = CompileResult::from_diagnostics(vec![Diagnostic::error("lib.mini", 2, "boom")]);
        assert!(!bad.ok);
    }
}
