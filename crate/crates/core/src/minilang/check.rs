//! Static checks run at compile time: name uniqueness, call resolution,
//! arity, and global-assignment targets.
//!
//! The checks are chosen so that deleting any statement from a well-formed
//! program never introduces a new static error; deletion variants stay
//! compilable and their failures show up at run time instead.

use std::collections::BTreeMap;

use super::ast::*;
use crate::subject::Diagnostic;

struct Checker<'p> {
    functions: BTreeMap<&'p str, usize>,
    globals: Vec<&'p str>,
    diags: Vec<Diagnostic>,
}

impl<'p> Checker<'p> {
    fn check_expr(&mut self, file: &std::path::Path, e: &'p Expr) {
        match &e.kind {
            ExprKind::Int(_) | ExprKind::Bool(_) | ExprKind::Var(_) => {}
            ExprKind::Call { name, args } => {
                match self.functions.get(name.as_str()) {
                    None => self.diags.push(Diagnostic::error(
                        file,
                        e.line,
                        format!("call to undefined function `{name}`"),
                    )),
                    Some(&arity) if arity != args.len() => self.diags.push(Diagnostic::error(
                        file,
                        e.line,
                        format!(
                            "`{name}` takes {arity} argument(s), {} given",
                            args.len()
                        ),
                    )),
                    Some(_) => {}
                }
                for a in args {
                    self.check_expr(file, a);
                }
            }
            ExprKind::Unary { operand, .. } => self.check_expr(file, operand),
            ExprKind::Binary { lhs, rhs, .. } => {
                self.check_expr(file, lhs);
                self.check_expr(file, rhs);
            }
        }
    }

    fn check_stmts(&mut self, file: &std::path::Path, stmts: &'p [Stmt]) {
        for s in stmts {
            match &s.kind {
                StmtKind::Assign { value, .. } => self.check_expr(file, value),
                StmtKind::GlobalAssign { name, value } => {
                    if !self.globals.contains(&name.as_str()) {
                        self.diags.push(Diagnostic::error(
                            file,
                            s.line,
                            format!("assignment to undeclared global `{name}`"),
                        ));
                    }
                    self.check_expr(file, value);
                }
                StmtKind::If {
                    cond,
                    then_body,
                    else_body,
                } => {
                    self.check_expr(file, cond);
                    self.check_stmts(file, then_body);
                    self.check_stmts(file, else_body);
                }
                StmtKind::While { cond, body } => {
                    self.check_expr(file, cond);
                    self.check_stmts(file, body);
                }
                StmtKind::Return(Some(e)) | StmtKind::Assert(e) | StmtKind::ExprStmt(e) => {
                    self.check_expr(file, e)
                }
                StmtKind::Return(None) => {}
            }
        }
    }
}

/// Checks a whole program. Returns error diagnostics; empty means statically
/// valid.
pub fn check_program(program: &Program) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let mut functions: BTreeMap<&str, usize> = BTreeMap::new();
    let mut globals: Vec<&str> = Vec::new();

    for file in &program.files {
        for g in &file.globals {
            if globals.contains(&g.name.as_str()) {
                diags.push(Diagnostic::error(
                    &file.path,
                    g.line,
                    format!("duplicate global `{}`", g.name),
                ));
            } else {
                globals.push(&g.name);
            }
        }
        for f in &file.functions {
            if functions.insert(&f.name, f.params.len()).is_some() {
                diags.push(Diagnostic::error(
                    &file.path,
                    f.line,
                    format!("duplicate function `{}`", f.name),
                ));
            }
            let mut seen = Vec::new();
            for p in &f.params {
                if seen.contains(&p.as_str()) {
                    diags.push(Diagnostic::error(
                        &file.path,
                        f.line,
                        format!("duplicate parameter `{p}` in `{}`", f.name),
                    ));
                }
                seen.push(p);
            }
        }
    }

    let mut checker = Checker {
        functions,
        globals,
        diags,
    };
    for file in &program.files {
        for g in &file.globals {
            checker.check_expr(&file.path, &g.init);
        }
        for f in &file.functions {
            checker.check_stmts(&file.path, &f.body);
        }
    }
    checker.diags
}

/// Checks a suite against a program: only structural problems (duplicate test
/// ids) are compile-level; unknown names inside test bodies surface as
/// runtime errors of the individual test.
pub fn check_suite(suite: &TestSuiteDef) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let mut seen: Vec<&str> = Vec::new();
    for file in &suite.files {
        for t in &file.tests {
            if seen.contains(&t.id.as_str()) {
                diags.push(Diagnostic::error(
                    &file.path,
                    t.line,
                    format!("duplicate test id `{}`", t.id),
                ));
            } else {
                seen.push(&t.id);
            }
        }
    }
    diags
}
