//! Bridge to out-of-process adapters speaking a line-delimited JSON protocol
//! over stdin/stdout.
//!
//! One request is in flight per adapter process at a time; to serve concurrent
//! workspaces the bridge keeps a pool of processes and spawns more on demand.
//! Requests are one JSON object per line; responses are `{"ok": true,
//! "result": ...}` or `{"ok": false, "error": "..."}`. Anything else is a
//! protocol error.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{
    AdapterError, CompileResult, CoverageRecord, ExecLimits, ParseReport, SubjectAdapter,
    SuiteResult, TestOutcome, Workspace,
};

#[derive(Serialize)]
struct Request<'a> {
    op: &'a str,
    workspace: &'a Workspace,
    #[serde(skip_serializing_if = "Option::is_none")]
    test_id: Option<&'a str>,
    limits: LimitsMs,
}

#[derive(Serialize, Deserialize)]
struct LimitsMs {
    suite_timeout_ms: u64,
    test_timeout_ms: u64,
    fuel: u64,
}

impl From<&ExecLimits> for LimitsMs {
    fn from(l: &ExecLimits) -> Self {
        LimitsMs {
            suite_timeout_ms: l.suite_timeout.as_millis() as u64,
            test_timeout_ms: l.test_timeout.as_millis() as u64,
            fuel: l.fuel,
        }
    }
}

#[derive(Deserialize)]
struct Response {
    ok: bool,
    #[serde(default)]
    result: Option<Value>,
    #[serde(default)]
    error: Option<String>,
}

#[derive(Deserialize)]
struct SingleResponse {
    outcome: TestOutcome,
    coverage: CoverageRecord,
}

struct Worker {
    child: Child,
    stdin: std::process::ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

impl Worker {
    fn spawn(argv: &[String]) -> Result<Self, AdapterError> {
        let (program, args) = argv
            .split_first()
            .ok_or_else(|| AdapterError::Protocol("empty adapter command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = std::sync::mpsc::channel();
        std::thread::spawn(move || {
            let reader = BufReader::new(stdout);
            for line in reader.lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Worker {
            child,
            stdin,
            lines: rx,
        })
    }

    fn request(&mut self, req: &Request<'_>, deadline: Duration) -> Result<Value, AdapterError> {
        let mut line = serde_json::to_string(req)
            .map_err(|e| AdapterError::Protocol(format!("encode: {e}")))?;
        line.push('\n');
        self.stdin
            .write_all(line.as_bytes())
            .and_then(|()| self.stdin.flush())
            .map_err(|e| AdapterError::SubjectCrash(format!("adapter stdin closed: {e}")))?;

        let reply = match self.lines.recv_timeout(deadline) {
            Ok(Ok(l)) => l,
            Ok(Err(e)) => return Err(AdapterError::SubjectCrash(format!("adapter read: {e}"))),
            Err(RecvTimeoutError::Timeout) => return Err(AdapterError::TimeoutExceeded(deadline)),
            Err(RecvTimeoutError::Disconnected) => {
                return Err(AdapterError::SubjectCrash("adapter closed stdout".into()))
            }
        };
        let resp: Response = serde_json::from_str(&reply)
            .map_err(|e| AdapterError::Protocol(format!("malformed response: {e}: {reply}")))?;
        if resp.ok {
            resp.result
                .ok_or_else(|| AdapterError::Protocol("ok response without result".into()))
        } else {
            Err(AdapterError::Other(
                resp.error.unwrap_or_else(|| "unspecified adapter error".into()),
            ))
        }
    }
}

impl Drop for Worker {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// A [`SubjectAdapter`] backed by one or more external processes.
pub struct ExternalAdapter {
    argv: Vec<String>,
    idle: Mutex<Vec<Worker>>,
}

impl ExternalAdapter {
    pub fn new(argv: Vec<String>) -> Self {
        ExternalAdapter {
            argv,
            idle: Mutex::new(Vec::new()),
        }
    }

    fn call(&self, req: Request<'_>, deadline: Duration) -> Result<Value, AdapterError> {
        let mut worker = match self.idle.lock().expect("pool poisoned").pop() {
            Some(w) => w,
            None => Worker::spawn(&self.argv)?,
        };
        match worker.request(&req, deadline) {
            Ok(v) => {
                self.idle.lock().expect("pool poisoned").push(worker);
                Ok(v)
            }
            // worker is dropped (and its process killed) on any failure
            Err(e) => Err(e),
        }
    }

    fn decode<T: for<'de> Deserialize<'de>>(value: Value) -> Result<T, AdapterError> {
        serde_json::from_value(value)
            .map_err(|e| AdapterError::Protocol(format!("unexpected result shape: {e}")))
    }
}

/// Grace added on top of the suite budget before the bridge gives up on a
/// response and kills the worker.
const PROTOCOL_GRACE: Duration = Duration::from_secs(5);

impl SubjectAdapter for ExternalAdapter {
    fn parse(&self, ws: &Workspace) -> Result<ParseReport, AdapterError> {
        let limits = ExecLimits::default();
        let v = self.call(
            Request {
                op: "parse",
                workspace: ws,
                test_id: None,
                limits: (&limits).into(),
            },
            limits.suite_timeout + PROTOCOL_GRACE,
        )?;
        Self::decode(v)
    }

    fn compile(&self, ws: &Workspace) -> Result<CompileResult, AdapterError> {
        let limits = ExecLimits::default();
        let v = self.call(
            Request {
                op: "compile",
                workspace: ws,
                test_id: None,
                limits: (&limits).into(),
            },
            limits.suite_timeout + PROTOCOL_GRACE,
        )?;
        Self::decode(v)
    }

    fn run_suite(&self, ws: &Workspace, limits: &ExecLimits) -> Result<SuiteResult, AdapterError> {
        let v = self.call(
            Request {
                op: "run_suite",
                workspace: ws,
                test_id: None,
                limits: limits.into(),
            },
            limits.suite_timeout + PROTOCOL_GRACE,
        )?;
        Self::decode(v)
    }

    fn run_single(
        &self,
        ws: &Workspace,
        test_id: &str,
        limits: &ExecLimits,
    ) -> Result<(TestOutcome, CoverageRecord), AdapterError> {
        let v = self.call(
            Request {
                op: "run_single",
                workspace: ws,
                test_id: Some(test_id),
                limits: limits.into(),
            },
            limits.test_timeout + PROTOCOL_GRACE,
        )?;
        let single: SingleResponse = Self::decode(v)?;
        Ok((single.outcome, single.coverage))
    }
}
