//! The built-in deterministic subject language: parser, static checker,
//! tree-walking interpreter with statement coverage, test harness, and
//! single-statement deletion.
//!
//! Programs live in `.mini` files, suites in `.minitest` files. Whole-suite
//! execution runs every test in declared order inside one interpreter
//! instance, so writes to program globals leak from test to test — exactly
//! the state-pollution failure mode the auditor hunts. Single-test execution
//! always gets a fresh instance.

pub mod ast;
pub mod check;
pub mod interp;
pub mod parser;

mod adapter;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use thiserror::Error;

pub use adapter::MinilangAdapter;
pub use ast::{Program, TestSuiteDef};
pub use interp::{Interpreter, RunError, Value};

use crate::subject::{Diagnostic, StatementLocation, SuiteResult, TestOutcome, TestStatus};

#[derive(Debug, Error)]
pub enum MiniError {
    #[error("unknown test {0}")]
    UnknownTest(String),
    #[error("{0} is not a deletable statement: {1}")]
    NotDeletable(StatementLocation, String),
}

/// Parses a set of `.mini` sources into one program. Paths are the location
/// keys (conventionally relative to the workspace root, e.g. `src/lib.mini`).
pub fn parse_program(sources: &[(PathBuf, String)]) -> Result<Program, Vec<Diagnostic>> {
    let mut files = Vec::new();
    let mut diags = Vec::new();
    for (path, text) in sources {
        match parser::parse_program_file(path, text) {
            Ok(f) => files.push(f),
            Err(d) => diags.push(d),
        }
    }
    if diags.is_empty() {
        Ok(Program { files })
    } else {
        Err(diags)
    }
}

/// Parses a set of `.minitest` sources into one suite.
pub fn parse_suite(sources: &[(PathBuf, String)]) -> Result<TestSuiteDef, Vec<Diagnostic>> {
    let mut files = Vec::new();
    let mut diags = Vec::new();
    for (path, text) in sources {
        match parser::parse_test_file(path, text) {
            Ok(f) => files.push(f),
            Err(d) => diags.push(d),
        }
    }
    if diags.is_empty() {
        Ok(TestSuiteDef { files })
    } else {
        Err(diags)
    }
}

/// Runs a program function directly, returning the executed-statement trace
/// alongside the result.
pub fn interpret(
    program: &Program,
    entry_function: &str,
    args: &[Value],
    fuel: u64,
) -> (BTreeSet<StatementLocation>, Result<Value, RunError>) {
    match Interpreter::new(program, fuel) {
        Ok(mut interp) => interp.call_function(entry_function, args, fuel),
        Err(e) => (BTreeSet::new(), Err(e)),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunMode {
    WholeSuite,
    SingleTest(String),
}

/// Outcome of [`run_tests`]: per-test results plus the full execution trace
/// of every test that ran (program and test-body statements alike).
#[derive(Debug, Clone)]
pub struct RunResult {
    pub suite: SuiteResult,
    pub traces: BTreeMap<String, BTreeSet<StatementLocation>>,
}

fn outcome_for(test_id: &str, result: Result<(), RunError>, duration_ms: u64) -> TestOutcome {
    match result {
        Ok(()) => TestOutcome::pass(test_id, duration_ms),
        Err(RunError::FuelExhausted) => TestOutcome::not_passing(
            test_id,
            TestStatus::Timeout,
            "step budget exhausted",
            duration_ms,
        ),
        Err(e @ RunError::AssertFailed(_)) => {
            TestOutcome::not_passing(test_id, TestStatus::Fail, e.to_string(), duration_ms)
        }
        Err(e @ RunError::Runtime { .. }) => {
            TestOutcome::not_passing(test_id, TestStatus::Error, e.to_string(), duration_ms)
        }
    }
}

/// Executes tests.
///
/// `WholeSuite` runs every test in declared order in ONE interpreter
/// instance (globals persist across tests). `SingleTest` runs exactly the
/// named test in a FRESH instance. Each test gets a fresh fuel budget.
pub fn run_tests(
    program: &Program,
    suite: &TestSuiteDef,
    mode: RunMode,
    limits: &crate::subject::ExecLimits,
) -> Result<RunResult, MiniError> {
    let start = Instant::now();
    let mut outcomes = BTreeMap::new();
    let mut traces = BTreeMap::new();

    let selected: Vec<&ast::TestDef> = match &mode {
        RunMode::WholeSuite => suite.files.iter().flat_map(|f| f.tests.iter()).collect(),
        RunMode::SingleTest(id) => {
            vec![suite.test(id).ok_or_else(|| MiniError::UnknownTest(id.clone()))?]
        }
    };

    let mut interp = match Interpreter::new(program, limits.fuel) {
        Ok(i) => Some(i),
        Err(init_err) => {
            // initializers failed: every selected test reports the failure
            for test in &selected {
                outcomes.insert(
                    test.id.clone(),
                    outcome_for(&test.id, Err(init_err.clone()), 0),
                );
                traces.insert(test.id.clone(), BTreeSet::new());
            }
            None
        }
    };

    if let Some(interp) = interp.as_mut() {
        for test in &selected {
            if start.elapsed() > limits.suite_timeout {
                outcomes.insert(
                    test.id.clone(),
                    TestOutcome::not_passing(
                        &test.id,
                        TestStatus::Timeout,
                        "whole-suite budget exhausted",
                        0,
                    ),
                );
                traces.insert(test.id.clone(), BTreeSet::new());
                continue;
            }
            let test_start = Instant::now();
            let (trace, result) = interp.run_body(&test.body, limits.fuel);
            let duration_ms = test_start.elapsed().as_millis() as u64;
            outcomes.insert(test.id.clone(), outcome_for(&test.id, result, duration_ms));
            traces.insert(test.id.clone(), trace);
        }
    }

    Ok(RunResult {
        suite: SuiteResult {
            outcomes,
            wall_time_ms: start.elapsed().as_millis() as u64,
        },
        traces,
    })
}

fn remove_in(stmts: &mut Vec<ast::Stmt>, loc: &StatementLocation) -> bool {
    if let Some(i) = stmts.iter().position(|s| &s.loc == loc) {
        stmts.remove(i);
        return true;
    }
    for s in stmts.iter_mut() {
        let found = match &mut s.kind {
            ast::StmtKind::If {
                then_body,
                else_body,
                ..
            } => remove_in(then_body, loc) || remove_in(else_body, loc),
            ast::StmtKind::While { body, .. } => remove_in(body, loc),
            _ => false,
        };
        if found {
            return true;
        }
    }
    false
}

/// Returns a new program with exactly the statement at `loc` removed (a
/// compound statement disappears together with its body). The input program
/// is untouched and every other statement keeps its original location.
pub fn delete_statement(program: &Program, loc: &StatementLocation) -> Result<Program, MiniError> {
    let mut variant = program.clone();
    for file in &mut variant.files {
        if file.path != loc.file {
            continue;
        }
        for func in &mut file.functions {
            if remove_in(&mut func.body, loc) {
                return Ok(variant);
            }
        }
    }
    Err(MiniError::NotDeletable(
        loc.clone(),
        "no such statement in the program (function headers, global \
         declarations, and test bodies are not deletion candidates)"
            .into(),
    ))
}

/// Convenience for fixtures: parse a single-file program from source text.
pub fn program_from_source(path: &str, text: &str) -> Result<Program, Vec<Diagnostic>> {
    parse_program(&[(PathBuf::from(path), text.to_string())])
}

/// Convenience for fixtures: parse a single-file suite from source text.
pub fn suite_from_source(path: &str, text: &str) -> Result<TestSuiteDef, Vec<Diagnostic>> {
    parse_suite(&[(PathBuf::from(path), text.to_string())])
}

/// Relative path (inside a workspace root) of the variant spec consulted by
/// the adapter; see [`MinilangAdapter`].
pub const DELETIONS_FILE: &str = "deletions.txt";

pub(crate) fn parse_deletion_line(line: &str) -> Option<StatementLocation> {
    let (path, index) = line.rsplit_once(':')?;
    let index: u32 = index.trim().parse().ok()?;
    let path = Path::new(path.trim());
    Some(StatementLocation::new(path, index))
}
