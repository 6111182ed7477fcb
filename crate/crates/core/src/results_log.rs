//! Append-only results log: one JSON record per line.
//!
//! Round verdicts, audit errors, deletion trials, and adequacy verdicts all
//! land in the same file. The log is the source of truth: workability
//! verdicts are recomputed from round records on replay, which is what makes
//! interrupted audits resumable.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::OpenOptions;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adequacy::{AdequacyVerdict, DeletionTrial};
use crate::workability::{combine_rounds, RoundVerdict, WorkabilityVerdict};

#[derive(Debug, Error)]
pub enum LogError {
    #[error("cannot access log {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed record on line {line}: {message}")]
    Malformed { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Record {
    Round(RoundVerdict),
    AuditError { defect_id: String, message: String },
    Trial(DeletionTrial),
    Adequacy(AdequacyVerdict),
}

/// Serializing writer; every record is flushed as one line so an interrupted
/// run leaves a readable prefix.
pub struct LogWriter {
    path: PathBuf,
    out: BufWriter<std::fs::File>,
}

impl LogWriter {
    pub fn append(path: &Path) -> Result<Self, LogError> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent).map_err(|source| LogError::Io {
                    path: path.to_path_buf(),
                    source,
                })?;
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| LogError::Io {
                path: path.to_path_buf(),
                source,
            })?;
        Ok(LogWriter {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        })
    }

    pub fn write(&mut self, record: &Record) -> Result<(), LogError> {
        let mut line = serde_json::to_string(record).expect("record serializes");
        line.push('\n');
        self.out
            .write_all(line.as_bytes())
            .and_then(|()| self.out.flush())
            .map_err(|source| LogError::Io {
                path: self.path.clone(),
                source,
            })
    }
}

/// Reads every record of a log file. A missing file is an empty log.
pub fn read_log(path: &Path) -> Result<Vec<Record>, LogError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = std::fs::read_to_string(path).map_err(|source| LogError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(line).map_err(|e| LogError::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

/// Everything a log replay yields.
#[derive(Debug, Default, Clone)]
pub struct Replay {
    /// Recomputed workability verdicts, keyed by defect id. Defects whose
    /// audit aborted are absent here and listed in `audit_errors`.
    pub verdicts: BTreeMap<String, WorkabilityVerdict>,
    pub audit_errors: BTreeMap<String, String>,
    pub trials: Vec<DeletionTrial>,
    pub adequacy: Vec<AdequacyVerdict>,
}

impl Replay {
    /// (defect id, round index) pairs already present — the resume skip set.
    pub fn completed_rounds(&self) -> BTreeSet<(String, u32)> {
        self.verdicts
            .values()
            .flat_map(|v| {
                v.rounds
                    .iter()
                    .map(|r| (r.defect_id.clone(), r.round_index))
            })
            .collect()
    }
}

/// Recomputes verdicts from raw records. Duplicate (defect, round) records
/// keep the first occurrence; rounds are ordered by index regardless of
/// append order.
pub fn replay(records: &[Record]) -> Replay {
    let mut rounds: BTreeMap<String, BTreeMap<u32, RoundVerdict>> = BTreeMap::new();
    let mut out = Replay::default();
    for record in records {
        match record {
            Record::Round(r) => {
                rounds
                    .entry(r.defect_id.clone())
                    .or_default()
                    .entry(r.round_index)
                    .or_insert_with(|| r.clone());
            }
            Record::AuditError { defect_id, message } => {
                out.audit_errors
                    .insert(defect_id.clone(), message.clone());
            }
            Record::Trial(t) => out.trials.push(t.clone()),
            Record::Adequacy(a) => out.adequacy.push(a.clone()),
        }
    }
    for (defect_id, by_round) in rounds {
        if out.audit_errors.contains_key(&defect_id) {
            continue;
        }
        let rounds: Vec<RoundVerdict> = by_round.into_values().collect();
        out.verdicts
            .insert(defect_id.clone(), combine_rounds(&defect_id, rounds));
    }
    out
}

/// Replays a log file directly.
pub fn replay_file(path: &Path) -> Result<Replay, LogError> {
    Ok(replay(&read_log(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workability::{FinalOutcome, RoundEvidence, RoundOutcome};

    fn round(defect: &str, index: u32, outcome: RoundOutcome) -> RoundVerdict {
        RoundVerdict {
            defect_id: defect.into(),
            outcome,
            evidence: RoundEvidence::default(),
            round_index: index,
            parallelism_level: 1,
        }
    }

    #[test]
    fn write_read_replay_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        {
            let mut w = LogWriter::append(&path).unwrap();
            w.write(&Record::Round(round("A/1", 0, RoundOutcome::Workable)))
                .unwrap();
            w.write(&Record::Round(round("A/1", 1, RoundOutcome::Workable)))
                .unwrap();
            w.write(&Record::Round(round("B/1", 0, RoundOutcome::CompilationFails)))
                .unwrap();
        }
        let replayed = replay_file(&path).unwrap();
        assert_eq!(replayed.verdicts["A/1"].outcome, FinalOutcome::Workable);
        assert_eq!(replayed.verdicts["A/1"].rounds.len(), 2);
        assert_eq!(
            replayed.verdicts["B/1"].outcome,
            FinalOutcome::CompilationFails
        );
        assert_eq!(replayed.completed_rounds().len(), 3);
    }

    #[test]
    fn append_after_reopen_extends_the_log() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        {
            let mut w = LogWriter::append(&path).unwrap();
            w.write(&Record::Round(round("A/1", 0, RoundOutcome::Workable)))
                .unwrap();
        }
        {
            let mut w = LogWriter::append(&path).unwrap();
            w.write(&Record::Round(round("A/1", 1, RoundOutcome::ResultDiffers)))
                .unwrap();
        }
        let replayed = replay_file(&path).unwrap();
        // rounds disagree in category: flaky
        assert_eq!(replayed.verdicts["A/1"].outcome, FinalOutcome::Flaky);
    }

    #[test]
    fn duplicate_rounds_keep_the_first_record() {
        let records = vec![
            Record::Round(round("A/1", 0, RoundOutcome::Workable)),
            Record::Round(round("A/1", 0, RoundOutcome::ResultDiffers)),
        ];
        let replayed = replay(&records);
        assert_eq!(replayed.verdicts["A/1"].outcome, FinalOutcome::Workable);
        assert_eq!(replayed.verdicts["A/1"].rounds.len(), 1);
    }

    #[test]
    fn audit_errors_exclude_the_defect_from_verdicts() {
        let records = vec![
            Record::Round(round("A/1", 0, RoundOutcome::Workable)),
            Record::AuditError {
                defect_id: "A/1".into(),
                message: "adapter exploded".into(),
            },
        ];
        let replayed = replay(&records);
        assert!(replayed.verdicts.is_empty());
        assert_eq!(replayed.audit_errors.len(), 1);
    }

    #[test]
    fn missing_log_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let replayed = replay_file(&dir.path().join("absent.jsonl")).unwrap();
        assert!(replayed.verdicts.is_empty());
    }

    #[test]
    fn malformed_lines_are_reported_with_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        std::fs::write(&path, "{\"type\":\"round\"\n").unwrap();
        let err = read_log(&path).unwrap_err();
        assert!(matches!(err, LogError::Malformed { line: 1, .. }));
    }
}
