//! Syntax tree for the mini language.
//!
//! Every statement carries the [`StatementLocation`] assigned by the
//! post-parse pre-order walk of its file. Mutation never reassigns locations;
//! a deleted statement's index simply disappears from the table while all
//! other indices keep referring to the same nodes.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::subject::StatementLocation;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Rem => "%",
            BinaryOp::Eq => "==",
            BinaryOp::Ne => "!=",
            BinaryOp::Lt => "<",
            BinaryOp::Le => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::Ge => ">=",
            BinaryOp::And => "&&",
            BinaryOp::Or => "||",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expr {
    pub line: u32,
    pub col: u32,
    pub kind: ExprKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExprKind {
    Int(i64),
    Bool(bool),
    Var(String),
    Call { name: String, args: Vec<Expr> },
    Unary { op: UnaryOp, operand: Box<Expr> },
    Binary { op: BinaryOp, lhs: Box<Expr>, rhs: Box<Expr> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stmt {
    pub loc: StatementLocation,
    pub line: u32,
    pub kind: StmtKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StmtKind {
    /// `name = expr;` — assigns a function-local (created on first write).
    Assign { name: String, value: Expr },
    /// `global name = expr;` — assigns a program global declared at top level.
    GlobalAssign { name: String, value: Expr },
    If {
        cond: Expr,
        then_body: Vec<Stmt>,
        else_body: Vec<Stmt>,
    },
    While { cond: Expr, body: Vec<Stmt> },
    Return(Option<Expr>),
    Assert(Expr),
    /// Bare expression in statement position, e.g. a call for its effects.
    ExprStmt(Expr),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlobalDecl {
    pub name: String,
    pub init: Expr,
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Function {
    pub name: String,
    pub params: Vec<String>,
    pub body: Vec<Stmt>,
    pub line: u32,
}

/// One parsed `.mini` file. `path` is relative to the workspace root
/// (e.g. `src/lib.mini`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceFile {
    pub path: PathBuf,
    pub globals: Vec<GlobalDecl>,
    pub functions: Vec<Function>,
}

/// A whole mini-language program (all `.mini` files of a workspace, in path
/// order).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Program {
    pub files: Vec<SourceFile>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestDef {
    /// `Class::name` style id.
    pub id: String,
    pub body: Vec<Stmt>,
    pub line: u32,
}

/// One parsed `.minitest` file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestFile {
    pub path: PathBuf,
    pub tests: Vec<TestDef>,
}

/// All test files of a workspace, in path order; suite execution order is
/// file order then declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TestSuiteDef {
    pub files: Vec<TestFile>,
}

fn walk<'a>(stmts: &'a [Stmt], out: &mut Vec<&'a Stmt>) {
    for s in stmts {
        out.push(s);
        match &s.kind {
            StmtKind::If {
                then_body,
                else_body,
                ..
            } => {
                walk(then_body, out);
                walk(else_body, out);
            }
            StmtKind::While { body, .. } => walk(body, out),
            _ => {}
        }
    }
}

impl Program {
    pub fn function(&self, name: &str) -> Option<&Function> {
        self.files
            .iter()
            .flat_map(|f| f.functions.iter())
            .find(|f| f.name == name)
    }

    pub fn global_names(&self) -> Vec<&str> {
        self.files
            .iter()
            .flat_map(|f| f.globals.iter())
            .map(|g| g.name.as_str())
            .collect()
    }

    /// All statements of the program in pre-order, keyed by location.
    pub fn statement_table(&self) -> BTreeMap<StatementLocation, &Stmt> {
        let mut out = Vec::new();
        for file in &self.files {
            for func in &file.functions {
                walk(&func.body, &mut out);
            }
        }
        out.into_iter().map(|s| (s.loc.clone(), s)).collect()
    }

    pub fn statement_locations(&self) -> Vec<StatementLocation> {
        self.statement_table().into_keys().collect()
    }
}

impl TestSuiteDef {
    /// Test ids in suite execution order.
    pub fn test_ids(&self) -> Vec<String> {
        self.files
            .iter()
            .flat_map(|f| f.tests.iter())
            .map(|t| t.id.clone())
            .collect()
    }

    pub fn test(&self, id: &str) -> Option<&TestDef> {
        self.files
            .iter()
            .flat_map(|f| f.tests.iter())
            .find(|t| t.id == id)
    }

    /// Statement locations of all test bodies (they are traced during
    /// execution but are never deletion candidates).
    pub fn statement_table(&self) -> BTreeMap<StatementLocation, &Stmt> {
        let mut out = Vec::new();
        for file in &self.files {
            for test in &file.tests {
                walk(&test.body, &mut out);
            }
        }
        out.into_iter().map(|s| (s.loc.clone(), s)).collect()
    }
}

/// Assigns 1-based pre-order indices to every statement of the given bodies,
/// continuing from `next`. Returns the next unused index.
pub(crate) fn assign_locations(
    stmts: &mut [Stmt],
    file: &std::path::Path,
    next: &mut u32,
) {
    for s in stmts {
        s.loc = StatementLocation::new(file, *next);
        *next += 1;
        match &mut s.kind {
            StmtKind::If {
                then_body,
                else_body,
                ..
            } => {
                assign_locations(then_body, file, next);
                assign_locations(else_body, file, next);
            }
            StmtKind::While { body, .. } => assign_locations(body, file, next),
            _ => {}
        }
    }
}
