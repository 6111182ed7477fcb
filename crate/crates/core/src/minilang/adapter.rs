//! [`SubjectAdapter`] implementation for the mini language.
//!
//! The adapter is stateless: everything an execution needs lives in the
//! workspace. Variants are expressed by a `deletions.txt` file in the
//! workspace root listing statement locations (one `path:index` per line);
//! every build freshly parses the copied sources and then applies the listed
//! deletions, so locations always refer to the unmutated tree.

use std::path::{Path, PathBuf};

use super::{
    check, delete_statement, parse_program, parse_suite, run_tests, Program, RunMode,
    TestSuiteDef, DELETIONS_FILE,
};
use crate::subject::{
    AdapterError, CompileResult, CoverageRecord, Diagnostic, ExecLimits, ParseReport,
    StatementLocation, SubjectAdapter, SuiteResult, TestOutcome, Workspace,
};

#[derive(Debug, Default)]
pub struct MinilangAdapter;

impl MinilangAdapter {
    pub fn new() -> Self {
        MinilangAdapter
    }
}

/// Reads all files with `ext` under `root/<sub>`, keyed by path relative to
/// the workspace root. Refuses to read anything that resolves outside the
/// workspace (the test-execution context must contain nothing but the
/// subject).
fn collect_sources(
    ws_root: &Path,
    sub: &str,
    ext: &str,
) -> Result<Vec<(PathBuf, String)>, AdapterError> {
    let dir = ws_root.join(sub);
    let ws_canon = ws_root
        .canonicalize()
        .map_err(|e| AdapterError::Other(format!("workspace root missing: {e}")))?;
    let mut out = Vec::new();
    if !dir.exists() {
        return Ok(out);
    }
    for entry in walkdir::WalkDir::new(&dir).sort_by_file_name() {
        let entry = entry.map_err(|e| AdapterError::Other(e.to_string()))?;
        if !entry.file_type().is_file() {
            continue;
        }
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) != Some(ext) {
            continue;
        }
        let canon = path.canonicalize()?;
        if !canon.starts_with(&ws_canon) {
            return Err(AdapterError::Other(format!(
                "refusing to load {} from outside the workspace",
                path.display()
            )));
        }
        let rel = path
            .strip_prefix(ws_root)
            .map_err(|e| AdapterError::Other(e.to_string()))?
            .to_path_buf();
        let text = std::fs::read_to_string(path)?;
        out.push((rel, text));
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

fn read_deletions(ws: &Workspace) -> Result<Vec<StatementLocation>, AdapterError> {
    let path = ws.root.join(DELETIONS_FILE);
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = std::fs::read_to_string(&path)?;
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let loc = super::parse_deletion_line(line).ok_or_else(|| {
            AdapterError::Other(format!("malformed deletion spec line: {line}"))
        })?;
        out.push(loc);
    }
    Ok(out)
}

struct Build {
    program: Program,
    suite: TestSuiteDef,
}

enum BuildOutcome {
    Ok(Build),
    Failed(Vec<Diagnostic>),
}

fn build(ws: &Workspace) -> Result<BuildOutcome, AdapterError> {
    let program_sources = collect_sources(&ws.root, "src", "mini")?;
    let test_sources = collect_sources(&ws.root, "tests", "minitest")?;

    let mut diags = Vec::new();
    let program = match parse_program(&program_sources) {
        Ok(p) => Some(p),
        Err(d) => {
            diags.extend(d);
            None
        }
    };
    let suite = match parse_suite(&test_sources) {
        Ok(s) => Some(s),
        Err(d) => {
            diags.extend(d);
            None
        }
    };
    let (Some(mut program), Some(suite)) = (program, suite) else {
        return Ok(BuildOutcome::Failed(diags));
    };

    diags.extend(check::check_program(&program));
    diags.extend(check::check_suite(&suite));
    if !diags.is_empty() {
        return Ok(BuildOutcome::Failed(diags));
    }

    for loc in read_deletions(ws)? {
        match delete_statement(&program, &loc) {
            Ok(variant) => program = variant,
            Err(e) => {
                return Err(AdapterError::NotDeletable(loc.to_string(), e.to_string()));
            }
        }
    }
    Ok(BuildOutcome::Ok(Build { program, suite }))
}

fn built(ws: &Workspace) -> Result<Build, AdapterError> {
    match build(ws)? {
        BuildOutcome::Ok(b) => Ok(b),
        BuildOutcome::Failed(diags) => Err(AdapterError::Other(format!(
            "workspace does not compile: {}",
            diags
                .first()
                .map(|d| d.message.clone())
                .unwrap_or_default()
        ))),
    }
}

impl SubjectAdapter for MinilangAdapter {
    fn parse(&self, ws: &Workspace) -> Result<ParseReport, AdapterError> {
        let program_sources = collect_sources(&ws.root, "src", "mini")?;
        let test_sources = collect_sources(&ws.root, "tests", "minitest")?;
        let mut diagnostics = Vec::new();
        if let Err(d) = parse_program(&program_sources) {
            diagnostics.extend(d);
        }
        if let Err(d) = parse_suite(&test_sources) {
            diagnostics.extend(d);
        }
        Ok(ParseReport {
            ok: diagnostics.is_empty(),
            diagnostics,
        })
    }

    fn compile(&self, ws: &Workspace) -> Result<CompileResult, AdapterError> {
        match build(ws)? {
            BuildOutcome::Ok(_) => Ok(CompileResult {
                ok: true,
                diagnostics: Vec::new(),
            }),
            BuildOutcome::Failed(diags) => Ok(CompileResult {
                ok: false,
                diagnostics: diags,
            }),
        }
    }

    fn run_suite(&self, ws: &Workspace, limits: &ExecLimits) -> Result<SuiteResult, AdapterError> {
        let b = built(ws)?;
        let result = run_tests(&b.program, &b.suite, RunMode::WholeSuite, limits)
            .map_err(|e| AdapterError::Other(e.to_string()))?;
        Ok(result.suite)
    }

    fn run_single(
        &self,
        ws: &Workspace,
        test_id: &str,
        limits: &ExecLimits,
    ) -> Result<(TestOutcome, CoverageRecord), AdapterError> {
        let b = built(ws)?;
        let result = run_tests(
            &b.program,
            &b.suite,
            RunMode::SingleTest(test_id.to_string()),
            limits,
        )
        .map_err(|e| match e {
            super::MiniError::UnknownTest(t) => AdapterError::UnknownTest(t),
            other => AdapterError::Other(other.to_string()),
        })?;

        let outcome = result.suite.outcomes[test_id].clone();
        let program_table = b.program.statement_table();
        let covered = result
            .traces
            .get(test_id)
            .map(|trace| {
                trace
                    .iter()
                    .filter(|loc| program_table.contains_key(*loc))
                    .cloned()
                    .collect()
            })
            .unwrap_or_default();
        Ok((
            outcome.clone(),
            CoverageRecord {
                test_id: test_id.to_string(),
                covered,
                outcome,
            },
        ))
    }

    fn statements(&self, ws: &Workspace) -> Result<Vec<StatementLocation>, AdapterError> {
        Ok(built(ws)?.program.statement_locations())
    }

    fn delete_statement(
        &self,
        ws: &Workspace,
        loc: &StatementLocation,
    ) -> Result<(), AdapterError> {
        let b = built(ws)?;
        if !b.program.statement_table().contains_key(loc) {
            return Err(AdapterError::NotDeletable(
                loc.to_string(),
                "not a statement of the current program".into(),
            ));
        }
        let path = ws.root.join(DELETIONS_FILE);
        let mut text = if path.exists() {
            std::fs::read_to_string(&path)?
        } else {
            String::new()
        };
        text.push_str(&format!("{}:{}\n", loc.file.display(), loc.statement_index));
        std::fs::write(&path, text)?;
        Ok(())
    }
}
