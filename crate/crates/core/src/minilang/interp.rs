//! Tree-walking interpreter with statement tracing and a fuel budget.
//!
//! Every executed statement (program or test body) lands in the per-test
//! trace. Fuel is charged per statement and per loop-condition check, so
//! `while true { }` runs out deterministically instead of hanging; exhaustion
//! is reported as a timeout. Values are integers, booleans, and the unit
//! value produced by functions that finish without returning.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use super::ast::*;
use crate::subject::StatementLocation;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Value {
    Int(i64),
    Bool(bool),
    Unit,
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(n) => write!(f, "{n}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Unit => write!(f, "unit"),
        }
    }
}

fn type_name(v: Value) -> &'static str {
    match v {
        Value::Int(_) => "int",
        Value::Bool(_) => "bool",
        Value::Unit => "unit",
    }
}

/// Why an execution stopped abnormally.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunError {
    /// `assert` evaluated to false. Carries the failing statement's location.
    AssertFailed(StatementLocation),
    /// Any other runtime fault (undefined name, type mismatch, div by zero).
    Runtime { message: String, line: u32 },
    /// The per-test step budget ran out.
    FuelExhausted,
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::AssertFailed(loc) => write!(f, "assertion failed at {loc}"),
            RunError::Runtime { message, line } => write!(f, "runtime error (line {line}): {message}"),
            RunError::FuelExhausted => write!(f, "step budget exhausted"),
        }
    }
}

enum Flow {
    Normal,
    Return(Value),
}

const MAX_CALL_DEPTH: u32 = 200;

/// One interpreter instance. Globals live for the lifetime of the instance;
/// whole-suite execution reuses one instance across tests, single-test
/// execution builds a fresh one.
pub struct Interpreter<'p> {
    program: &'p Program,
    pub globals: HashMap<String, Value>,
    fuel: u64,
    depth: u32,
    trace: BTreeSet<StatementLocation>,
}

impl<'p> Interpreter<'p> {
    /// Builds an instance and evaluates all global initializers (in file,
    /// then declaration order).
    pub fn new(program: &'p Program, init_fuel: u64) -> Result<Self, RunError> {
        let mut interp = Interpreter {
            program,
            globals: HashMap::new(),
            fuel: init_fuel,
            depth: 0,
            trace: BTreeSet::new(),
        };
        for file in &program.files {
            for g in &file.globals {
                let mut locals = HashMap::new();
                let v = interp.eval(&g.init, &mut locals)?;
                interp.globals.insert(g.name.clone(), v);
            }
        }
        Ok(interp)
    }

    /// Runs a statement list (a test body) with fresh locals and a fresh
    /// per-test fuel budget, collecting the execution trace.
    pub fn run_body(
        &mut self,
        body: &[Stmt],
        fuel: u64,
    ) -> (BTreeSet<StatementLocation>, Result<(), RunError>) {
        self.fuel = fuel;
        self.trace.clear();
        let mut locals = HashMap::new();
        let result = match self.exec_block(body, &mut locals) {
            Ok(_) => Ok(()),
            Err(e) => Err(e),
        };
        (std::mem::take(&mut self.trace), result)
    }

    /// Calls a program function directly (used by the public `interpret`
    /// entry point).
    pub fn call_function(
        &mut self,
        name: &str,
        args: &[Value],
        fuel: u64,
    ) -> (BTreeSet<StatementLocation>, Result<Value, RunError>) {
        self.fuel = fuel;
        self.trace.clear();
        let result = self.call(name, args.to_vec(), 0);
        (std::mem::take(&mut self.trace), result)
    }

    fn tick(&mut self) -> Result<(), RunError> {
        if self.fuel == 0 {
            return Err(RunError::FuelExhausted);
        }
        self.fuel -= 1;
        Ok(())
    }

    fn exec_block(
        &mut self,
        stmts: &[Stmt],
        locals: &mut HashMap<String, Value>,
    ) -> Result<Flow, RunError> {
        for s in stmts {
            match self.exec_stmt(s, locals)? {
                Flow::Normal => {}
                ret => return Ok(ret),
            }
        }
        Ok(Flow::Normal)
    }

    fn exec_stmt(
        &mut self,
        s: &Stmt,
        locals: &mut HashMap<String, Value>,
    ) -> Result<Flow, RunError> {
        self.tick()?;
        self.trace.insert(s.loc.clone());
        match &s.kind {
            StmtKind::Assign { name, value } => {
                let v = self.eval(value, locals)?;
                locals.insert(name.clone(), v);
                Ok(Flow::Normal)
            }
            StmtKind::GlobalAssign { name, value } => {
                let v = self.eval(value, locals)?;
                if !self.globals.contains_key(name) {
                    return Err(RunError::Runtime {
                        message: format!("assignment to undeclared global `{name}`"),
                        line: s.line,
                    });
                }
                self.globals.insert(name.clone(), v);
                Ok(Flow::Normal)
            }
            StmtKind::If {
                cond,
                then_body,
                else_body,
            } => {
                if self.eval_bool(cond, locals)? {
                    self.exec_block(then_body, locals)
                } else {
                    self.exec_block(else_body, locals)
                }
            }
            StmtKind::While { cond, body } => {
                loop {
                    self.tick()?;
                    if !self.eval_bool(cond, locals)? {
                        break;
                    }
                    match self.exec_block(body, locals)? {
                        Flow::Normal => {}
                        ret => return Ok(ret),
                    }
                }
                Ok(Flow::Normal)
            }
            StmtKind::Return(value) => {
                let v = match value {
                    Some(e) => self.eval(e, locals)?,
                    None => Value::Unit,
                };
                Ok(Flow::Return(v))
            }
            StmtKind::Assert(cond) => {
                if self.eval_bool(cond, locals)? {
                    Ok(Flow::Normal)
                } else {
                    Err(RunError::AssertFailed(s.loc.clone()))
                }
            }
            StmtKind::ExprStmt(e) => {
                self.eval(e, locals)?;
                Ok(Flow::Normal)
            }
        }
    }

    fn eval_bool(&mut self, e: &Expr, locals: &mut HashMap<String, Value>) -> Result<bool, RunError> {
        match self.eval(e, locals)? {
            Value::Bool(b) => Ok(b),
            other => Err(RunError::Runtime {
                message: format!("expected bool, got {}", type_name(other)),
                line: e.line,
            }),
        }
    }

    fn call(&mut self, name: &str, args: Vec<Value>, line: u32) -> Result<Value, RunError> {
        let func = self.program.function(name).ok_or_else(|| RunError::Runtime {
            message: format!("call to undefined function `{name}`"),
            line,
        })?;
        if func.params.len() != args.len() {
            return Err(RunError::Runtime {
                message: format!(
                    "`{name}` takes {} argument(s), {} given",
                    func.params.len(),
                    args.len()
                ),
                line,
            });
        }
        if self.depth >= MAX_CALL_DEPTH {
            return Err(RunError::Runtime {
                message: format!("call depth limit exceeded calling `{name}`"),
                line,
            });
        }
        self.tick()?;
        self.depth += 1;
        let mut locals: HashMap<String, Value> =
            func.params.iter().cloned().zip(args).collect();
        let flow = self.exec_block(&func.body, &mut locals);
        self.depth -= 1;
        match flow? {
            Flow::Return(v) => Ok(v),
            // a body that falls off the end (e.g. after a deletion removed
            // its return) yields the unit value
            Flow::Normal => Ok(Value::Unit),
        }
    }

    fn eval(&mut self, e: &Expr, locals: &mut HashMap<String, Value>) -> Result<Value, RunError> {
        match &e.kind {
            ExprKind::Int(n) => Ok(Value::Int(*n)),
            ExprKind::Bool(b) => Ok(Value::Bool(*b)),
            ExprKind::Var(name) => locals
                .get(name)
                .or_else(|| self.globals.get(name))
                .copied()
                .ok_or_else(|| RunError::Runtime {
                    message: format!("undefined variable `{name}`"),
                    line: e.line,
                }),
            ExprKind::Call { name, args } => {
                let mut values = Vec::with_capacity(args.len());
                for a in args {
                    values.push(self.eval(a, locals)?);
                }
                self.call(name, values, e.line)
            }
            ExprKind::Unary { op, operand } => {
                let v = self.eval(operand, locals)?;
                match (op, v) {
                    (UnaryOp::Neg, Value::Int(n)) => {
                        n.checked_neg().map(Value::Int).ok_or(RunError::Runtime {
                            message: "integer overflow".into(),
                            line: e.line,
                        })
                    }
                    (UnaryOp::Not, Value::Bool(b)) => Ok(Value::Bool(!b)),
                    (op, v) => Err(RunError::Runtime {
                        message: format!(
                            "operator `{}` not defined on {}",
                            match op {
                                UnaryOp::Neg => "-",
                                UnaryOp::Not => "!",
                            },
                            type_name(v)
                        ),
                        line: e.line,
                    }),
                }
            }
            ExprKind::Binary { op, lhs, rhs } => {
                // short-circuit boolean operators
                if matches!(op, BinaryOp::And | BinaryOp::Or) {
                    let l = self.eval_bool(lhs, locals)?;
                    return match (op, l) {
                        (BinaryOp::And, false) => Ok(Value::Bool(false)),
                        (BinaryOp::Or, true) => Ok(Value::Bool(true)),
                        _ => Ok(Value::Bool(self.eval_bool(rhs, locals)?)),
                    };
                }
                let l = self.eval(lhs, locals)?;
                let r = self.eval(rhs, locals)?;
                self.binary(*op, l, r, e.line)
            }
        }
    }

    fn binary(&self, op: BinaryOp, l: Value, r: Value, line: u32) -> Result<Value, RunError> {
        use BinaryOp::*;
        let type_err = || RunError::Runtime {
            message: format!(
                "operator `{}` not defined on {} and {}",
                op.symbol(),
                type_name(l),
                type_name(r)
            ),
            line,
        };
        match op {
            Eq => Ok(Value::Bool(match (l, r) {
                (Value::Int(a), Value::Int(b)) => a == b,
                (Value::Bool(a), Value::Bool(b)) => a == b,
                _ => return Err(type_err()),
            })),
            Ne => Ok(Value::Bool(match (l, r) {
                (Value::Int(a), Value::Int(b)) => a != b,
                (Value::Bool(a), Value::Bool(b)) => a != b,
                _ => return Err(type_err()),
            })),
            Add | Sub | Mul | Div | Rem => {
                let (Value::Int(a), Value::Int(b)) = (l, r) else {
                    return Err(type_err());
                };
                let out = match op {
                    Add => a.checked_add(b),
                    Sub => a.checked_sub(b),
                    Mul => a.checked_mul(b),
                    Div | Rem if b == 0 => {
                        return Err(RunError::Runtime {
                            message: "division by zero".into(),
                            line,
                        })
                    }
                    Div => a.checked_div(b),
                    Rem => a.checked_rem(b),
                    _ => unreachable!(),
                };
                out.map(Value::Int).ok_or(RunError::Runtime {
                    message: "integer overflow".into(),
                    line,
                })
            }
            Lt | Le | Gt | Ge => {
                let (Value::Int(a), Value::Int(b)) = (l, r) else {
                    return Err(type_err());
                };
                Ok(Value::Bool(match op {
                    Lt => a < b,
                    Le => a <= b,
                    Gt => a > b,
                    Ge => a >= b,
                    _ => unreachable!(),
                }))
            }
            And | Or => unreachable!("handled before operand evaluation"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minilang::parser::parse_program_file;
    use std::path::Path;

    fn program(src: &str) -> Program {
        Program {
            files: vec![parse_program_file(Path::new("src/p.mini"), src).unwrap()],
        }
    }

    fn call(src: &str, func: &str, args: &[Value]) -> Result<Value, RunError> {
        let p = program(src);
        let mut interp = Interpreter::new(&p, 1_000).unwrap();
        interp.call_function(func, args, 1_000_000).1
    }

    #[test]
    fn arithmetic_and_recursion() {
        let src = "fn fact(n) { if n <= 1 { return 1; } return n * fact(n - 1); }";
        assert_eq!(call(src, "fact", &[Value::Int(5)]), Ok(Value::Int(120)));
    }

    #[test]
    fn while_loop_accumulates() {
        let src = "
fn sum_to(n) {
  acc = 0;
  i = 1;
  while i <= n {
    acc = acc + i;
    i = i + 1;
  }
  return acc;
}";
        assert_eq!(call(src, "sum_to", &[Value::Int(10)]), Ok(Value::Int(55)));
    }

    #[test]
    fn missing_return_yields_unit() {
        let src = "fn nothing() { x = 1; }";
        assert_eq!(call(src, "nothing", &[]), Ok(Value::Unit));
    }

    #[test]
    fn undefined_variable_is_a_runtime_error() {
        let err = call("fn f() { return ghost; }", "f", &[]).unwrap_err();
        assert!(matches!(err, RunError::Runtime { .. }));
    }

    #[test]
    fn division_by_zero_is_reported() {
        let err = call("fn f(a) { return a / 0; }", "f", &[Value::Int(3)]).unwrap_err();
        assert!(matches!(err, RunError::Runtime { message, .. } if message.contains("zero")));
    }

    #[test]
    fn empty_infinite_loop_exhausts_fuel() {
        let err = call("fn spin() { while true { } }", "spin", &[]).unwrap_err();
        assert_eq!(err, RunError::FuelExhausted);
    }

    #[test]
    fn runaway_recursion_hits_the_depth_limit() {
        let err = call("fn f(n) { return f(n + 1); }", "f", &[Value::Int(0)]).unwrap_err();
        assert!(matches!(err, RunError::Runtime { message, .. } if message.contains("depth")));
    }

    #[test]
    fn trace_contains_executed_statements_only() {
        let src = "
fn pick(flag) {
  if flag {
    x = 1;        // 2
  } else {
    x = 2;        // 3
  }
  return x;       // 4
}";
        let p = program(src);
        let mut interp = Interpreter::new(&p, 1_000).unwrap();
        let (trace, result) = interp.call_function("pick", &[Value::Bool(true)], 1_000);
        assert_eq!(result, Ok(Value::Int(1)));
        let loc = |i| StatementLocation::new("src/p.mini", i);
        assert!(trace.contains(&loc(1)));
        assert!(trace.contains(&loc(2)));
        assert!(!trace.contains(&loc(3)), "untaken branch must not be traced");
        assert!(trace.contains(&loc(4)));
    }

    #[test]
    fn failing_assert_is_in_its_own_trace() {
        let src = "fn f() { assert 1 == 2; }";
        let p = program(src);
        let mut interp = Interpreter::new(&p, 1_000).unwrap();
        let (trace, result) = interp.call_function("f", &[], 1_000);
        let loc = StatementLocation::new("src/p.mini", 1);
        assert_eq!(result, Err(RunError::AssertFailed(loc.clone())));
        assert!(trace.contains(&loc));
    }

    #[test]
    fn short_circuit_skips_rhs() {
        let src = "fn f() { return false && boom(); }";
        // boom() is undefined; short-circuiting means it is never called
        assert_eq!(call(src, "f", &[]), Ok(Value::Bool(false)));
    }

    #[test]
    fn globals_persist_within_an_instance() {
        let src = "
global tally = 0;
fn bump() { global tally = tally + 1; return tally; }";
        let p = program(src);
        let mut interp = Interpreter::new(&p, 1_000).unwrap();
        assert_eq!(interp.call_function("bump", &[], 1_000).1, Ok(Value::Int(1)));
        assert_eq!(interp.call_function("bump", &[], 1_000).1, Ok(Value::Int(2)));
    }
}
