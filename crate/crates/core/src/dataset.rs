//! Defect dataset model: manifests, entries, human patches.
//!
//! A dataset is described by a single TOML manifest. Each entry names a defect
//! id (`Project/Number`), a source tree, a test tree, the adapter that knows
//! how to build and test it, the set of tests documented to fail, and the
//! human-written patch in unified diff format. A `[defaults]` table can supply
//! per-entry values shared by the whole dataset.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("validation error in entry {entry}, field {field}: {message}")]
    Validation {
        entry: String,
        field: String,
        message: String,
    },
}

impl DatasetError {
    fn validation(entry: &str, field: &str, message: impl Into<String>) -> Self {
        DatasetError::Validation {
            entry: entry.to_string(),
            field: field.to_string(),
            message: message.into(),
        }
    }
}

/// One hunk of a unified diff: the file it touches plus the removed and added
/// lines. Context lines are dropped at parse time; only add/remove semantics
/// matter downstream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hunk {
    pub file: PathBuf,
    pub removed: Vec<String>,
    pub added: Vec<String>,
}

/// A human-written patch, as a list of hunks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Patch {
    pub hunks: Vec<Hunk>,
}

impl Patch {
    pub fn total_added(&self) -> usize {
        self.hunks.iter().map(|h| h.added.len()).sum()
    }

    pub fn total_removed(&self) -> usize {
        self.hunks.iter().map(|h| h.removed.len()).sum()
    }
}

/// True iff every hunk of the patch removes lines without adding any.
pub fn is_deletion_only(patch: &Patch) -> bool {
    patch.hunks.iter().all(|h| h.added.is_empty())
}

/// One benchmark defect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectEntry {
    /// Unique id, `Project/Number` style.
    pub id: String,
    pub project: String,
    pub source_root: PathBuf,
    pub test_root: PathBuf,
    /// Adapter id resolved through the [`crate::subject::AdapterRegistry`].
    pub adapter: String,
    /// Test ids documented to fail on the unmodified defect. Never empty.
    pub expected_failing: BTreeSet<String>,
    pub human_patch: Patch,
    pub notes: Option<String>,
}

impl DefectEntry {
    /// Splits an id of the form `Project/Number` into its parts.
    pub fn split_id(id: &str) -> Option<(&str, u64)> {
        let (project, number) = id.split_once('/')?;
        if project.is_empty() {
            return None;
        }
        let number = number.parse().ok()?;
        Some((project, number))
    }

    pub fn number(&self) -> Option<u64> {
        Self::split_id(&self.id).map(|(_, n)| n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub version: String,
    pub entries: Vec<DefectEntry>,
}

impl Dataset {
    pub fn entry(&self, id: &str) -> Option<&DefectEntry> {
        self.entries.iter().find(|e| e.id == id)
    }
}

impl fmt::Display for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} v{} ({} entries)", self.name, self.version, self.entries.len())
    }
}

// ---------------------------------------------------------------------------
// Manifest file format
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
struct RawManifest {
    name: String,
    version: String,
    #[serde(default)]
    defaults: RawDefaults,
    #[serde(default)]
    entries: Vec<RawEntry>,
    /// Optional external adapter definitions: id -> argv. Paths in the argv
    /// are taken verbatim; relative ones resolve against the working
    /// directory of the auditor.
    #[serde(default)]
    adapters: std::collections::BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Default, Deserialize)]
struct RawDefaults {
    source_root: Option<PathBuf>,
    test_root: Option<PathBuf>,
    adapter: Option<String>,
    expected_failing: Option<Vec<String>>,
    patch: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
struct RawEntry {
    id: String,
    project: Option<String>,
    source_root: Option<PathBuf>,
    test_root: Option<PathBuf>,
    adapter: Option<String>,
    expected_failing: Option<Vec<String>>,
    patch: Option<PathBuf>,
    notes: Option<String>,
}

/// External adapter commands declared by a manifest's `[adapters]` table.
#[derive(Debug, Clone, Default)]
pub struct ManifestAdapters {
    pub commands: std::collections::BTreeMap<String, Vec<String>>,
}

/// Loads and validates a dataset manifest. Relative paths inside the manifest
/// resolve against the manifest's directory.
pub fn load_manifest(path: &Path) -> Result<Dataset, DatasetError> {
    load_manifest_with_adapters(path).map(|(d, _)| d)
}

/// Same as [`load_manifest`] but also returns the manifest's `[adapters]`
/// table for external adapter registration.
pub fn load_manifest_with_adapters(
    path: &Path,
) -> Result<(Dataset, ManifestAdapters), DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let raw: RawManifest = toml::from_str(&text).map_err(|e| DatasetError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));

    if raw.entries.is_empty() {
        return Err(DatasetError::Parse {
            path: path.to_path_buf(),
            message: "manifest declares no entries".into(),
        });
    }

    let mut seen = BTreeSet::new();
    let mut entries = Vec::with_capacity(raw.entries.len());
    for raw_entry in &raw.entries {
        let entry = resolve_entry(raw_entry, &raw.defaults, base)?;
        if !seen.insert(entry.id.clone()) {
            return Err(DatasetError::validation(&entry.id, "id", "duplicate entry id"));
        }
        validate_entry(&entry)?;
        entries.push(entry);
    }

    Ok((
        Dataset {
            name: raw.name,
            version: raw.version,
            entries,
        },
        ManifestAdapters {
            commands: raw.adapters,
        },
    ))
}

fn resolve_path(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn resolve_entry(
    raw: &RawEntry,
    defaults: &RawDefaults,
    base: &Path,
) -> Result<DefectEntry, DatasetError> {
    let id = raw.id.clone();
    let field = |f: &str| -> DatasetError {
        DatasetError::validation(&id, f, "missing (no entry value and no default)")
    };

    let source_root = raw
        .source_root
        .as_ref()
        .or(defaults.source_root.as_ref())
        .ok_or_else(|| field("source_root"))?;
    let test_root = raw
        .test_root
        .as_ref()
        .or(defaults.test_root.as_ref())
        .ok_or_else(|| field("test_root"))?;
    let adapter = raw
        .adapter
        .clone()
        .or_else(|| defaults.adapter.clone())
        .ok_or_else(|| field("adapter"))?;
    let expected_failing: BTreeSet<String> = raw
        .expected_failing
        .clone()
        .or_else(|| defaults.expected_failing.clone())
        .ok_or_else(|| field("expected_failing"))?
        .into_iter()
        .collect();
    let patch_path = raw
        .patch
        .as_ref()
        .or(defaults.patch.as_ref())
        .ok_or_else(|| field("patch"))?;

    let project = match &raw.project {
        Some(p) => p.clone(),
        None => match DefectEntry::split_id(&id) {
            Some((p, _)) => p.to_string(),
            None => {
                return Err(DatasetError::validation(
                    &id,
                    "id",
                    "id is not Project/Number style and no project given",
                ))
            }
        },
    };

    let patch_file = resolve_path(base, patch_path);
    let patch_text = std::fs::read_to_string(&patch_file).map_err(|e| {
        DatasetError::validation(&id, "patch", format!("cannot read {}: {e}", patch_file.display()))
    })?;
    let human_patch = parse_unified_diff(&patch_text)
        .map_err(|e| DatasetError::validation(&id, "patch", e))?;

    Ok(DefectEntry {
        id,
        project,
        source_root: resolve_path(base, source_root),
        test_root: resolve_path(base, test_root),
        adapter,
        expected_failing,
        human_patch,
        notes: raw.notes.clone(),
    })
}

fn validate_entry(entry: &DefectEntry) -> Result<(), DatasetError> {
    if DefectEntry::split_id(&entry.id).is_none() {
        return Err(DatasetError::validation(
            &entry.id,
            "id",
            "id must be Project/Number style",
        ));
    }
    if entry.expected_failing.is_empty() {
        return Err(DatasetError::validation(
            &entry.id,
            "expected_failing",
            "a defect must be indicated by at least one failing test",
        ));
    }
    if !entry.source_root.is_dir() {
        return Err(DatasetError::validation(
            &entry.id,
            "source_root",
            format!("{} is not a directory", entry.source_root.display()),
        ));
    }
    if !entry.test_root.is_dir() {
        return Err(DatasetError::validation(
            &entry.id,
            "test_root",
            format!("{} is not a directory", entry.test_root.display()),
        ));
    }
    if trees_overlap(&entry.source_root, &entry.test_root) {
        return Err(DatasetError::validation(
            &entry.id,
            "test_root",
            "source_root and test_root must be disjoint directory trees",
        ));
    }
    if entry.human_patch.hunks.is_empty() {
        return Err(DatasetError::validation(
            &entry.id,
            "patch",
            "a patch with zero hunks is invalid",
        ));
    }
    for hunk in &entry.human_patch.hunks {
        let target = entry.source_root.join(&hunk.file);
        if !target.is_file() {
            return Err(DatasetError::validation(
                &entry.id,
                "patch",
                format!(
                    "hunk references {} which does not exist under source_root",
                    hunk.file.display()
                ),
            ));
        }
    }
    Ok(())
}

fn trees_overlap(a: &Path, b: &Path) -> bool {
    let ca = a.canonicalize().unwrap_or_else(|_| a.to_path_buf());
    let cb = b.canonicalize().unwrap_or_else(|_| b.to_path_buf());
    ca.starts_with(&cb) || cb.starts_with(&ca)
}

// ---------------------------------------------------------------------------
// Unified diff parsing
// ---------------------------------------------------------------------------

/// Strips the conventional `a/` / `b/` prefix from a diff header path.
fn strip_diff_prefix(p: &str) -> &str {
    p.strip_prefix("a/")
        .or_else(|| p.strip_prefix("b/"))
        .unwrap_or(p)
}

/// Parses a unified diff into hunks. Context lines are discarded. The hunk's
/// file is taken from the `---` header (the file being modified), with the
/// usual `a/` prefix stripped.
pub fn parse_unified_diff(text: &str) -> Result<Patch, String> {
    let mut hunks = Vec::new();
    let mut current_file: Option<PathBuf> = None;
    let mut current: Option<Hunk> = None;

    for (lineno, line) in text.lines().enumerate() {
        if let Some(rest) = line.strip_prefix("--- ") {
            if let Some(h) = current.take() {
                hunks.push(h);
            }
            let name = rest.split('\t').next().unwrap_or(rest).trim();
            current_file = Some(PathBuf::from(strip_diff_prefix(name)));
        } else if line.starts_with("+++ ") {
            // target header; the --- side names the file we track
        } else if line.starts_with("@@") {
            if let Some(h) = current.take() {
                hunks.push(h);
            }
            let file = current_file
                .clone()
                .ok_or_else(|| format!("line {}: hunk header before file header", lineno + 1))?;
            current = Some(Hunk {
                file,
                removed: Vec::new(),
                added: Vec::new(),
            });
        } else if let Some(h) = current.as_mut() {
            if let Some(rest) = line.strip_prefix('-') {
                h.removed.push(rest.to_string());
            } else if let Some(rest) = line.strip_prefix('+') {
                h.added.push(rest.to_string());
            }
            // ' ' context and '\ No newline' markers are ignored
        }
    }
    if let Some(h) = current.take() {
        hunks.push(h);
    }
    if hunks.is_empty() {
        return Err("diff contains no hunks".into());
    }
    Ok(Patch { hunks })
}
