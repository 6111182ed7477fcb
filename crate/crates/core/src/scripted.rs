//! Scenario-replay adapter: deterministically simulates pathological
//! subjects (flakiness, order dependence, compile failures, dataset
//! mismatches) so the auditor's detectors can be tested without real
//! nondeterminism.
//!
//! Flakiness is seeded pseudo-randomness indexed by the scenario's
//! suite-execution counter, never wall clock or load, so replays are
//! bit-identical. The counter advances once per whole-suite run; single-test
//! runs observe the counter of the suite run they follow, which keeps each
//! round internally consistent while letting outcomes vary across rounds.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Mutex;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::subject::{
    AdapterError, CompileResult, CoverageRecord, Diagnostic, ExecLimits, ParseReport,
    SubjectAdapter, SuiteResult, TestOutcome, TestStatus, Workspace,
};

/// Per-test behavior of a scripted scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Behavior {
    AlwaysPass,
    AlwaysFail { message: String },
    /// Fails with probability `p` on each suite execution, drawn from a
    /// counter-indexed seeded stream.
    FlakyFail { p: f64 },
    FailOnlyInFullSuite,
    PassOnlyInFullSuite,
    /// Passes for suite executions `1..n`, fails on the nth and all later
    /// ones.
    FailAfterNthExecution { n: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTest {
    pub id: String,
    pub behavior: Behavior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub defect_id: String,
    pub compile_ok: bool,
    #[serde(default)]
    pub seed: u64,
    pub tests: Vec<ScenarioTest>,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), String> {
        let mut seen = BTreeSet::new();
        for t in &self.tests {
            if !seen.insert(&t.id) {
                return Err(format!("duplicate test id `{}`", t.id));
            }
            if let Behavior::FlakyFail { p } = t.behavior {
                if !(0.0..=1.0).contains(&p) {
                    return Err(format!("test `{}`: probability {p} outside [0, 1]", t.id));
                }
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Scenario, String> {
        let scenario: Scenario = toml::from_str(text).map_err(|e| e.to_string())?;
        scenario.validate()?;
        Ok(scenario)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScriptedMode {
    WholeSuite,
    SingleTest,
}

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn flaky_draw(seed: u64, test_id: &str, execution: u64) -> f64 {
    let mixed = seed
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(fnv1a(test_id))
        .wrapping_add(execution.wrapping_mul(0x2545_f491_4f6c_dd1d));
    let mut rng = ChaCha8Rng::seed_from_u64(mixed);
    rng.gen_range(0.0..1.0)
}

fn evaluate(scenario: &Scenario, test: &ScenarioTest, mode: ScriptedMode, execution: u64) -> TestOutcome {
    let fail = |message: &str| {
        TestOutcome::not_passing(&test.id, TestStatus::Fail, message, 0)
    };
    match &test.behavior {
        Behavior::AlwaysPass => TestOutcome::pass(&test.id, 0),
        Behavior::AlwaysFail { message } => fail(message),
        Behavior::FlakyFail { p } => {
            if flaky_draw(scenario.seed, &test.id, execution) < *p {
                fail(&format!("flaky failure (execution {execution})"))
            } else {
                TestOutcome::pass(&test.id, 0)
            }
        }
        Behavior::FailOnlyInFullSuite => match mode {
            ScriptedMode::WholeSuite => fail("fails when the whole suite runs"),
            ScriptedMode::SingleTest => TestOutcome::pass(&test.id, 0),
        },
        Behavior::PassOnlyInFullSuite => match mode {
            ScriptedMode::WholeSuite => TestOutcome::pass(&test.id, 0),
            ScriptedMode::SingleTest => fail("fails when run individually"),
        },
        Behavior::FailAfterNthExecution { n } => {
            if execution >= *n {
                fail(&format!("fails from execution {n} on (execution {execution})"))
            } else {
                TestOutcome::pass(&test.id, 0)
            }
        }
    }
}

/// Replays a whole scenario suite for the given suite-execution number.
pub fn scripted_suite(scenario: &Scenario, execution: u64) -> SuiteResult {
    let outcomes: BTreeMap<String, TestOutcome> = scenario
        .tests
        .iter()
        .map(|t| {
            (
                t.id.clone(),
                evaluate(scenario, t, ScriptedMode::WholeSuite, execution),
            )
        })
        .collect();
    SuiteResult {
        outcomes,
        wall_time_ms: 0,
    }
}

/// Replays one test for the given suite-execution number.
pub fn scripted_single(
    scenario: &Scenario,
    test_id: &str,
    execution: u64,
) -> Result<TestOutcome, AdapterError> {
    let test = scenario
        .tests
        .iter()
        .find(|t| t.id == test_id)
        .ok_or_else(|| AdapterError::UnknownTest(test_id.to_string()))?;
    Ok(evaluate(scenario, test, ScriptedMode::SingleTest, execution))
}

/// File name (under the workspace's `src/`) holding the scenario definition.
pub const SCENARIO_FILE: &str = "scenario.toml";

/// [`SubjectAdapter`] that replays [`Scenario`]s. Suite-execution counters
/// are per defect id and live for the adapter's lifetime, so repeated audit
/// rounds of one defect see a monotone execution number.
#[derive(Default)]
pub struct ScriptedAdapter {
    counters: Mutex<HashMap<String, u64>>,
    call_log: Mutex<Vec<(String, String)>>,
}

impl ScriptedAdapter {
    pub fn new() -> Self {
        Self::default()
    }

    fn log(&self, ws: &Workspace, op: &str) {
        self.call_log
            .lock()
            .expect("log poisoned")
            .push((ws.defect_id.clone(), op.to_string()));
    }

    /// Operations invoked so far for a defect, in order (test hook for
    /// shadowing assertions).
    pub fn calls(&self, defect_id: &str) -> Vec<String> {
        self.call_log
            .lock()
            .expect("log poisoned")
            .iter()
            .filter(|(id, _)| id == defect_id)
            .map(|(_, op)| op.clone())
            .collect()
    }

    fn scenario(&self, ws: &Workspace) -> Result<Scenario, AdapterError> {
        let path = ws.src_dir().join(SCENARIO_FILE);
        let text = std::fs::read_to_string(&path)?;
        Scenario::from_toml(&text)
            .map_err(|e| AdapterError::Other(format!("invalid scenario {}: {e}", path.display())))
    }

    fn bump_counter(&self, defect_id: &str) -> u64 {
        let mut counters = self.counters.lock().expect("counters poisoned");
        let c = counters.entry(defect_id.to_string()).or_insert(0);
        *c += 1;
        *c
    }

    fn current_counter(&self, defect_id: &str) -> u64 {
        *self
            .counters
            .lock()
            .expect("counters poisoned")
            .get(defect_id)
            .unwrap_or(&0)
    }
}

impl SubjectAdapter for ScriptedAdapter {
    fn parse(&self, ws: &Workspace) -> Result<ParseReport, AdapterError> {
        self.log(ws, "parse");
        match self.scenario(ws) {
            Ok(_) => Ok(ParseReport {
                ok: true,
                diagnostics: Vec::new(),
            }),
            Err(e) => Ok(ParseReport {
                ok: false,
                diagnostics: vec![Diagnostic::error(SCENARIO_FILE, 0, e.to_string())],
            }),
        }
    }

    fn compile(&self, ws: &Workspace) -> Result<CompileResult, AdapterError> {
        self.log(ws, "compile");
        let scenario = self.scenario(ws)?;
        if scenario.compile_ok {
            Ok(CompileResult {
                ok: true,
                diagnostics: Vec::new(),
            })
        } else {
            Ok(CompileResult {
                ok: false,
                diagnostics: vec![Diagnostic::error(
                    SCENARIO_FILE,
                    0,
                    "scripted compilation failure",
                )],
            })
        }
    }

    fn run_suite(&self, ws: &Workspace, _limits: &ExecLimits) -> Result<SuiteResult, AdapterError> {
        self.log(ws, "run_suite");
        let scenario = self.scenario(ws)?;
        let execution = self.bump_counter(&ws.defect_id);
        Ok(scripted_suite(&scenario, execution))
    }

    fn run_single(
        &self,
        ws: &Workspace,
        test_id: &str,
        _limits: &ExecLimits,
    ) -> Result<(TestOutcome, CoverageRecord), AdapterError> {
        self.log(ws, "run_single");
        let scenario = self.scenario(ws)?;
        let execution = self.current_counter(&ws.defect_id);
        let outcome = scripted_single(&scenario, test_id, execution)?;
        Ok((
            outcome.clone(),
            CoverageRecord {
                test_id: test_id.to_string(),
                covered: BTreeSet::new(),
                outcome,
            },
        ))
    }
}
