//! Command-line interface: `validate`, `audit`, `adequacy`, `report`.
//!
//! Exit codes: 0 success, 1 usage or validation error, 2 at least one
//! audit error (the adapter or harness broke on a defect; subject failures
//! are verdicts, not errors). Relative log paths resolve under
//! `$APR_AUDIT_LOG_DIR` when that variable is set.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{ArgGroup, Parser, Subcommand};

use crate::adequacy::SweepBudget;
use crate::dataset::load_manifest_with_adapters;
use crate::harness::{
    audit_dataset, register_manifest_adapters, run_adequacy, AdequacyConfig,
};
use crate::report::{emit, AuditSection, ReportDocument, ReportFormat};
use crate::results_log::replay_file;
use crate::subject::{AdapterRegistry, ExecLimits, WorkspaceFactory};
use crate::workability::{FinalOutcome, RoundConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_AUDIT_ERROR: i32 = 2;

/// Environment variable overriding the directory that relative results-log
/// paths resolve against.
pub const LOG_DIR_ENV: &str = "APR_AUDIT_LOG_DIR";

#[derive(Parser)]
#[command(
    name = "apr-audit",
    version,
    about = "Audits defect benchmarks for APR workability and test-suite adequacy"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a dataset manifest and check every invariant.
    Validate { manifest: PathBuf },

    /// Run multi-round workability audits over all entries, resumably.
    Audit {
        manifest: PathBuf,
        /// Setup-test rounds per defect.
        #[arg(long, default_value_t = 20)]
        rounds: u32,
        /// Parallelism levels the rounds cycle through.
        #[arg(
            long = "parallel-schedule",
            value_delimiter = ',',
            default_values_t = vec![1, 5, 10, 15, 20, 25]
        )]
        parallel_schedule: Vec<u32>,
        /// Results log to append to (and resume from).
        #[arg(long, default_value = "audit-log.jsonl")]
        out: PathBuf,
    },

    /// Run fault localization and deletion sweeps on audited-workable
    /// entries.
    Adequacy {
        manifest: PathBuf,
        /// Results log holding the audit verdicts; trials are appended.
        #[arg(long)]
        log: PathBuf,
        /// Minimum suspiciousness for deletion candidates.
        #[arg(long, default_value_t = crate::sbfl::DEFAULT_THRESHOLD)]
        threshold: f64,
        /// Maximum number of deletion candidates per defect.
        #[arg(long, default_value_t = crate::sbfl::DEFAULT_CAP)]
        cap: usize,
        /// Wall-clock sweep budget per defect (e.g. 60s, 3h, 500ms).
        #[arg(long, default_value = "60s")]
        budget: String,
    },

    /// Emit summaries from a results log and/or the bundled study data.
    #[command(group(
        ArgGroup::new("source").required(true).multiple(true).args(["log", "paper_data"])
    ))]
    Report {
        #[arg(long)]
        log: Option<PathBuf>,
        /// Directory with the bundled published-study files; reproduces
        /// their tables.
        #[arg(long = "paper-data")]
        paper_data: Option<PathBuf>,
        /// `text` (human-readable) or `json` (stable structured form).
        #[arg(long, default_value = "text")]
        format: String,
    },
}

/// Parses `60s`, `3h`, `250ms`, `2m`, or a bare number of seconds.
pub fn parse_duration(text: &str) -> Result<Duration, String> {
    let text = text.trim();
    let split = text
        .find(|c: char| !c.is_ascii_digit() && c != '.')
        .unwrap_or(text.len());
    let (number, unit) = text.split_at(split);
    let value: f64 = number
        .parse()
        .map_err(|_| format!("invalid duration `{text}`"))?;
    let seconds = match unit.trim() {
        "" | "s" => value,
        "ms" => value / 1000.0,
        "m" => value * 60.0,
        "h" => value * 3600.0,
        other => return Err(format!("unknown duration unit `{other}` in `{text}`")),
    };
    if !(0.0..=u64::MAX as f64).contains(&seconds) {
        return Err(format!("duration `{text}` out of range"));
    }
    Ok(Duration::from_secs_f64(seconds))
}

fn resolve_log_path(path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os(LOG_DIR_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir).join(path),
        _ => path.to_path_buf(),
    }
}

fn load_dataset_and_registry(
    manifest: &Path,
) -> Result<(crate::dataset::Dataset, AdapterRegistry), String> {
    let (dataset, adapters) =
        load_manifest_with_adapters(manifest).map_err(|e| e.to_string())?;
    let registry = AdapterRegistry::with_builtins();
    register_manifest_adapters(&registry, &adapters).map_err(|e| e.to_string())?;
    Ok((dataset, registry))
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            EXIT_USAGE
        }
    }
}

fn dispatch(command: Command) -> Result<i32, String> {
    match command {
        Command::Validate { manifest } => {
            let dataset = crate::dataset::load_manifest(&manifest).map_err(|e| e.to_string())?;
            println!("OK: {dataset}");
            Ok(EXIT_OK)
        }

        Command::Audit {
            manifest,
            rounds,
            parallel_schedule,
            out,
        } => {
            let (dataset, registry) = load_dataset_and_registry(&manifest)?;
            let cfg = RoundConfig {
                rounds,
                parallelism_schedule: parallel_schedule,
                limits: ExecLimits::default(),
            };
            let factory = WorkspaceFactory::ephemeral().map_err(|e| e.to_string())?;
            let log_path = resolve_log_path(&out);
            let outcome = audit_dataset(&dataset, &registry, &cfg, &factory, &log_path)
                .map_err(|e| e.to_string())?;

            for (id, verdict) in &outcome.verdicts {
                println!("{id}\t{}", verdict.outcome);
            }
            for (id, message) in &outcome.audit_errors {
                eprintln!("audit-error: {id}: {message}");
            }
            let mut summary = crate::workability::classify_dataset(
                outcome.verdicts.values().map(|v| &v.outcome),
            );
            summary.audit_errors = outcome.audit_errors.len();
            println!(
                "workable {}/{} ({:.1} %), excluded {}, audit errors {}; log: {}",
                summary.workable,
                summary.total,
                summary.workable_ratio * 100.0,
                summary.excluded(),
                summary.audit_errors,
                log_path.display()
            );
            if summary.audit_errors > 0 {
                Ok(EXIT_AUDIT_ERROR)
            } else {
                Ok(EXIT_OK)
            }
        }

        Command::Adequacy {
            manifest,
            log,
            threshold,
            cap,
            budget,
        } => {
            let (dataset, registry) = load_dataset_and_registry(&manifest)?;
            let log_path = resolve_log_path(&log);
            let audited = replay_file(&log_path).map_err(|e| e.to_string())?;
            let workable: BTreeSet<&String> = audited
                .verdicts
                .iter()
                .filter(|(_, v)| v.outcome == FinalOutcome::Workable)
                .map(|(id, _)| id)
                .collect();
            if workable.is_empty() {
                eprintln!("warning: the log has no workable verdicts; nothing to sweep");
            }
            let cfg = AdequacyConfig {
                threshold,
                cap,
                budget: SweepBudget {
                    wall_clock_limit: parse_duration(&budget)?,
                    ..SweepBudget::default()
                },
                limits: ExecLimits::default(),
            };
            let factory = WorkspaceFactory::ephemeral().map_err(|e| e.to_string())?;
            let outcome = run_adequacy(&dataset, &registry, &audited, &cfg, &factory, &log_path)
                .map_err(|e| e.to_string())?;

            for verdict in &outcome.verdicts {
                println!(
                    "{}\ttrivially-plausible={}\tunder-specified={}{}",
                    verdict.defect_id,
                    verdict.trivially_plausible,
                    verdict.under_specified,
                    if verdict.truncated { "\t(truncated)" } else { "" }
                );
            }
            for (id, message) in &outcome.errors {
                eprintln!("audit-error: {id}: {message}");
            }
            let s = &outcome.summary;
            println!(
                "swept {} defects: {} trivially plausible ({:.1} %), {} deletion-only patches, {} under-specified ({:.1} %)",
                s.total,
                s.trivially_plausible,
                s.trivially_plausible_rate_pct,
                s.deletion_only_patches,
                s.under_specified,
                s.under_specified_rate_pct
            );
            if s.truncated_sweeps > 0 {
                eprintln!(
                    "warning: {} sweep(s) hit the budget before evaluating every candidate; \
                     their unevaluated trials are excluded from the counts",
                    s.truncated_sweeps
                );
            }
            if outcome.errors.is_empty() {
                Ok(EXIT_OK)
            } else {
                Ok(EXIT_AUDIT_ERROR)
            }
        }

        Command::Report {
            log,
            paper_data,
            format,
        } => {
            let format = match format.as_str() {
                "text" => ReportFormat::Human,
                "json" => ReportFormat::Structured,
                other => return Err(format!("unknown format `{other}` (use text or json)")),
            };
            let mut doc = ReportDocument::default();
            if let Some(log) = log {
                let log_path = resolve_log_path(&log);
                let replayed = replay_file(&log_path).map_err(|e| e.to_string())?;
                let outcomes: Vec<(String, FinalOutcome)> = replayed
                    .verdicts
                    .iter()
                    .map(|(id, v)| (id.clone(), v.outcome))
                    .collect();
                let mut section = AuditSection::from_outcomes(
                    &log_path.display().to_string(),
                    &outcomes,
                );
                section.summary.audit_errors = replayed.audit_errors.len();
                doc.audit = Some(section);
                if !replayed.adequacy.is_empty() {
                    doc.adequacy = Some(crate::adequacy::dataset_adequacy_summary(
                        &replayed.adequacy,
                    ));
                }
            }
            if let Some(dir) = paper_data {
                let data = crate::paperdata::load_paper_data(&dir).map_err(|e| e.to_string())?;
                let reproduction =
                    crate::paperdata::reproduce(&data).map_err(|e| e.to_string())?;
                doc.paper = Some(reproduction);
            }
            print!("{}", emit(&doc, format));
            Ok(EXIT_OK)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn durations_parse() {
        assert_eq!(parse_duration("60s").unwrap(), Duration::from_secs(60));
        assert_eq!(parse_duration("0s").unwrap(), Duration::ZERO);
        assert_eq!(parse_duration("250ms").unwrap(), Duration::from_millis(250));
        assert_eq!(parse_duration("3h").unwrap(), Duration::from_secs(3 * 3600));
        assert_eq!(parse_duration("2m").unwrap(), Duration::from_secs(120));
        assert_eq!(parse_duration("45").unwrap(), Duration::from_secs(45));
        assert!(parse_duration("fast").is_err());
        assert!(parse_duration("10parsecs").is_err());
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["apr-audit", "no-such-command"]), EXIT_USAGE);
        assert_eq!(run(["apr-audit", "report"]), EXIT_USAGE, "report needs a source");
    }

    #[test]
    fn help_exits_zero() {
        assert_eq!(run(["apr-audit", "--help"]), EXIT_OK);
    }

    #[test]
    fn validate_missing_manifest_exits_one() {
        assert_eq!(
            run(["apr-audit", "validate", "/nonexistent/manifest.toml"]),
            EXIT_USAGE
        );
    }
}
