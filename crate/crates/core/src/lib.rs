//! Batch auditing harness for defect benchmarks used in automated program
//! repair (APR) evaluations.
//!
//! The harness answers two questions about every defect in a dataset:
//!
//! 1. **Is it workable?** A defect is workable when its sources parse, compile,
//!    its test suite reports per-test results, individual test execution agrees
//!    with whole-suite execution, the observed failing tests match the ones the
//!    dataset documents, and all of that stays stable across repeated runs at
//!    varying parallelism. Non-workable defects are classified by exclusion
//!    reason (compilation failure, inconsistent suite, result mismatch, flaky).
//!
//! 2. **Is its test suite adequate?** For workable defects, statements are
//!    ranked by Ochiai suspiciousness and deleted one at a time; a defect whose
//!    whole suite passes after a single-statement deletion is trivially
//!    plausible to "fix", and when the human patch is not deletion-only the
//!    suite is flagged as under-specified.
//!
//! Subjects run behind the [`subject::SubjectAdapter`] contract. Two adapters
//! are built in: a deterministic mini-language toolchain ([`minilang`]) and a
//! scenario-replay adapter ([`scripted`]) that simulates pathological subjects
//! (flakiness, order dependence, compile failures) deterministically. External
//! adapters attach over a line-delimited stdio protocol.

pub mod adequacy;
pub mod cli;
pub mod dataset;
pub mod harness;
pub mod minilang;
pub mod paperdata;
pub mod report;
pub mod results_log;
pub mod sbfl;
pub mod scripted;
pub mod subject;
pub mod workability;

pub use dataset::{Dataset, DefectEntry, Patch};
pub use subject::{
    AdapterRegistry, CoverageRecord, StatementLocation, SubjectAdapter, SuiteResult, TestOutcome,
    TestStatus, Workspace, WorkspaceFactory,
};
pub use workability::{RoundConfig, RoundVerdict, WorkabilityVerdict};
