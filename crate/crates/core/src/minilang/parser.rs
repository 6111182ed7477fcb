//! Lexer and recursive-descent parser for `.mini` programs and `.minitest`
//! suites.

use std::path::Path;

use super::ast::*;
use crate::subject::{Diagnostic, StatementLocation};

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(i64),
    // keywords
    Fn,
    Global,
    If,
    Else,
    While,
    Return,
    Assert,
    Test,
    True,
    False,
    // punctuation
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Semi,
    Assign,
    EqEq,
    NotEq,
    Lt,
    Le,
    Gt,
    Ge,
    Plus,
    Minus,
    Star,
    Slash,
    Percent,
    Bang,
    AndAnd,
    OrOr,
    ColonColon,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Int(n) => format!("integer `{n}`"),
            Tok::Eof => "end of file".into(),
            Tok::Fn => "`fn`".into(),
            Tok::Global => "`global`".into(),
            Tok::If => "`if`".into(),
            Tok::Else => "`else`".into(),
            Tok::While => "`while`".into(),
            Tok::Return => "`return`".into(),
            Tok::Assert => "`assert`".into(),
            Tok::Test => "`test`".into(),
            Tok::True => "`true`".into(),
            Tok::False => "`false`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Semi => "`;`".into(),
            Tok::Assign => "`=`".into(),
            Tok::EqEq => "`==`".into(),
            Tok::NotEq => "`!=`".into(),
            Tok::Lt => "`<`".into(),
            Tok::Le => "`<=`".into(),
            Tok::Gt => "`>`".into(),
            Tok::Ge => "`>=`".into(),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Percent => "`%`".into(),
            Tok::Bang => "`!`".into(),
            Tok::AndAnd => "`&&`".into(),
            Tok::OrOr => "`||`".into(),
            Tok::ColonColon => "`::`".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: u32,
    col: u32,
}

struct ParseFail {
    line: u32,
    col: u32,
    message: String,
}

fn lex(text: &str) -> Result<Vec<Spanned>, ParseFail> {
    let mut out = Vec::new();
    let mut line: u32 = 1;
    let mut col: u32 = 1;
    let mut chars = text.chars().peekable();

    macro_rules! push {
        ($tok:expr, $l:expr, $c:expr) => {
            out.push(Spanned { tok: $tok, line: $l, col: $c })
        };
    }

    while let Some(&c) = chars.peek() {
        let (l, co) = (line, col);
        match c {
            '\n' => {
                chars.next();
                line += 1;
                col = 1;
            }
            ' ' | '\t' | '\r' => {
                chars.next();
                col += 1;
            }
            '/' => {
                chars.next();
                col += 1;
                if chars.peek() == Some(&'/') {
                    for c in chars.by_ref() {
                        if c == '\n' {
                            line += 1;
                            col = 1;
                            break;
                        }
                    }
                } else {
                    push!(Tok::Slash, l, co);
                }
            }
            '0'..='9' => {
                let mut n: i64 = 0;
                while let Some(&d) = chars.peek() {
                    if let Some(v) = d.to_digit(10) {
                        n = n
                            .checked_mul(10)
                            .and_then(|n| n.checked_add(v as i64))
                            .ok_or(ParseFail {
                                line: l,
                                col: co,
                                message: "integer literal overflows".into(),
                            })?;
                        chars.next();
                        col += 1;
                    } else {
                        break;
                    }
                }
                push!(Tok::Int(n), l, co);
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut word = String::new();
                while let Some(&d) = chars.peek() {
                    if d.is_ascii_alphanumeric() || d == '_' {
                        word.push(d);
                        chars.next();
                        col += 1;
                    } else {
                        break;
                    }
                }
                let tok = match word.as_str() {
                    "fn" => Tok::Fn,
                    "global" => Tok::Global,
                    "if" => Tok::If,
                    "else" => Tok::Else,
                    "while" => Tok::While,
                    "return" => Tok::Return,
                    "assert" => Tok::Assert,
                    "test" => Tok::Test,
                    "true" => Tok::True,
                    "false" => Tok::False,
                    _ => Tok::Ident(word),
                };
                push!(tok, l, co);
            }
            _ => {
                chars.next();
                col += 1;
                let two = |chars: &mut std::iter::Peekable<std::str::Chars>,
                           col: &mut u32,
                           next: char|
                 -> bool {
                    if chars.peek() == Some(&next) {
                        chars.next();
                        *col += 1;
                        true
                    } else {
                        false
                    }
                };
                let tok = match c {
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    '{' => Tok::LBrace,
                    '}' => Tok::RBrace,
                    ',' => Tok::Comma,
                    ';' => Tok::Semi,
                    '+' => Tok::Plus,
                    '-' => Tok::Minus,
                    '*' => Tok::Star,
                    '%' => Tok::Percent,
                    '=' => {
                        if two(&mut chars, &mut col, '=') {
                            Tok::EqEq
                        } else {
                            Tok::Assign
                        }
                    }
                    '!' => {
                        if two(&mut chars, &mut col, '=') {
                            Tok::NotEq
                        } else {
                            Tok::Bang
                        }
                    }
                    '<' => {
                        if two(&mut chars, &mut col, '=') {
                            Tok::Le
                        } else {
                            Tok::Lt
                        }
                    }
                    '>' => {
                        if two(&mut chars, &mut col, '=') {
                            Tok::Ge
                        } else {
                            Tok::Gt
                        }
                    }
                    '&' => {
                        if two(&mut chars, &mut col, '&') {
                            Tok::AndAnd
                        } else {
                            return Err(ParseFail {
                                line: l,
                                col: co,
                                message: "expected `&&`".into(),
                            });
                        }
                    }
                    '|' => {
                        if two(&mut chars, &mut col, '|') {
                            Tok::OrOr
                        } else {
                            return Err(ParseFail {
                                line: l,
                                col: co,
                                message: "expected `||`".into(),
                            });
                        }
                    }
                    ':' => {
                        if two(&mut chars, &mut col, ':') {
                            Tok::ColonColon
                        } else {
                            return Err(ParseFail {
                                line: l,
                                col: co,
                                message: "expected `::`".into(),
                            });
                        }
                    }
                    other => {
                        return Err(ParseFail {
                            line: l,
                            col: co,
                            message: format!("unexpected character `{other}`"),
                        })
                    }
                };
                push!(tok, l, co);
            }
        }
    }
    push!(Tok::Eof, line, col);
    Ok(out)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Spanned {
        &self.toks[self.pos.min(self.toks.len() - 1)]
    }

    fn next(&mut self) -> Spanned {
        let t = self.toks[self.pos.min(self.toks.len() - 1)].clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, want: &Tok) -> Result<Spanned, ParseFail> {
        let t = self.peek().clone();
        if &t.tok == want {
            Ok(self.next())
        } else {
            Err(ParseFail {
                line: t.line,
                col: t.col,
                message: format!("expected {}, found {}", want.describe(), t.tok.describe()),
            })
        }
    }

    fn eat_ident(&mut self) -> Result<(String, u32, u32), ParseFail> {
        let t = self.peek().clone();
        match t.tok {
            Tok::Ident(name) => {
                self.next();
                Ok((name, t.line, t.col))
            }
            other => Err(ParseFail {
                line: t.line,
                col: t.col,
                message: format!("expected identifier, found {}", other.describe()),
            }),
        }
    }

    // expressions, lowest precedence first

    fn expr(&mut self) -> Result<Expr, ParseFail> {
        self.or_expr()
    }

    fn binary_level(
        &mut self,
        ops: &[(Tok, BinaryOp)],
        next: fn(&mut Self) -> Result<Expr, ParseFail>,
    ) -> Result<Expr, ParseFail> {
        let mut lhs = next(self)?;
        loop {
            let t = self.peek().clone();
            let Some((_, op)) = ops.iter().find(|(tok, _)| *tok == t.tok) else {
                return Ok(lhs);
            };
            self.next();
            let rhs = next(self)?;
            lhs = Expr {
                line: t.line,
                col: t.col,
                kind: ExprKind::Binary {
                    op: *op,
                    lhs: Box::new(lhs),
                    rhs: Box::new(rhs),
                },
            };
        }
    }

    fn or_expr(&mut self) -> Result<Expr, ParseFail> {
        self.binary_level(&[(Tok::OrOr, BinaryOp::Or)], Self::and_expr)
    }

    fn and_expr(&mut self) -> Result<Expr, ParseFail> {
        self.binary_level(&[(Tok::AndAnd, BinaryOp::And)], Self::equality)
    }

    fn equality(&mut self) -> Result<Expr, ParseFail> {
        self.binary_level(
            &[(Tok::EqEq, BinaryOp::Eq), (Tok::NotEq, BinaryOp::Ne)],
            Self::comparison,
        )
    }

    fn comparison(&mut self) -> Result<Expr, ParseFail> {
        self.binary_level(
            &[
                (Tok::Le, BinaryOp::Le),
                (Tok::Lt, BinaryOp::Lt),
                (Tok::Ge, BinaryOp::Ge),
                (Tok::Gt, BinaryOp::Gt),
            ],
            Self::additive,
        )
    }

    fn additive(&mut self) -> Result<Expr, ParseFail> {
        self.binary_level(
            &[(Tok::Plus, BinaryOp::Add), (Tok::Minus, BinaryOp::Sub)],
            Self::multiplicative,
        )
    }

    fn multiplicative(&mut self) -> Result<Expr, ParseFail> {
        self.binary_level(
            &[
                (Tok::Star, BinaryOp::Mul),
                (Tok::Slash, BinaryOp::Div),
                (Tok::Percent, BinaryOp::Rem),
            ],
            Self::unary,
        )
    }

    fn unary(&mut self) -> Result<Expr, ParseFail> {
        let t = self.peek().clone();
        let op = match t.tok {
            Tok::Minus => Some(UnaryOp::Neg),
            Tok::Bang => Some(UnaryOp::Not),
            _ => None,
        };
        if let Some(op) = op {
            self.next();
            let operand = self.unary()?;
            return Ok(Expr {
                line: t.line,
                col: t.col,
                kind: ExprKind::Unary {
                    op,
                    operand: Box::new(operand),
                },
            });
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, ParseFail> {
        let t = self.peek().clone();
        match t.tok {
            Tok::Int(n) => {
                self.next();
                Ok(Expr {
                    line: t.line,
                    col: t.col,
                    kind: ExprKind::Int(n),
                })
            }
            Tok::True | Tok::False => {
                let v = t.tok == Tok::True;
                self.next();
                Ok(Expr {
                    line: t.line,
                    col: t.col,
                    kind: ExprKind::Bool(v),
                })
            }
            Tok::LParen => {
                self.next();
                let e = self.expr()?;
                self.eat(&Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.next();
                if self.peek().tok == Tok::LParen {
                    self.next();
                    let mut args = Vec::new();
                    if self.peek().tok != Tok::RParen {
                        loop {
                            args.push(self.expr()?);
                            if self.peek().tok == Tok::Comma {
                                self.next();
                            } else {
                                break;
                            }
                        }
                    }
                    self.eat(&Tok::RParen)?;
                    Ok(Expr {
                        line: t.line,
                        col: t.col,
                        kind: ExprKind::Call { name, args },
                    })
                } else {
                    Ok(Expr {
                        line: t.line,
                        col: t.col,
                        kind: ExprKind::Var(name),
                    })
                }
            }
            other => Err(ParseFail {
                line: t.line,
                col: t.col,
                message: format!("expected expression, found {}", other.describe()),
            }),
        }
    }

    // statements

    fn block(&mut self) -> Result<Vec<Stmt>, ParseFail> {
        self.eat(&Tok::LBrace)?;
        let mut stmts = Vec::new();
        while self.peek().tok != Tok::RBrace {
            if self.peek().tok == Tok::Eof {
                let t = self.peek().clone();
                return Err(ParseFail {
                    line: t.line,
                    col: t.col,
                    message: "expected `}` before end of file".into(),
                });
            }
            stmts.push(self.stmt()?);
        }
        self.eat(&Tok::RBrace)?;
        Ok(stmts)
    }

    fn stmt(&mut self) -> Result<Stmt, ParseFail> {
        let t = self.peek().clone();
        let placeholder = StatementLocation::new("", 0);
        let kind = match t.tok {
            Tok::Global => {
                self.next();
                let (name, ..) = self.eat_ident()?;
                self.eat(&Tok::Assign)?;
                let value = self.expr()?;
                self.eat(&Tok::Semi)?;
                StmtKind::GlobalAssign { name, value }
            }
            Tok::If => {
                self.next();
                let cond = self.expr()?;
                let then_body = self.block()?;
                let else_body = if self.peek().tok == Tok::Else {
                    self.next();
                    self.block()?
                } else {
                    Vec::new()
                };
                StmtKind::If {
                    cond,
                    then_body,
                    else_body,
                }
            }
            Tok::While => {
                self.next();
                let cond = self.expr()?;
                let body = self.block()?;
                StmtKind::While { cond, body }
            }
            Tok::Return => {
                self.next();
                let value = if self.peek().tok == Tok::Semi {
                    None
                } else {
                    Some(self.expr()?)
                };
                self.eat(&Tok::Semi)?;
                StmtKind::Return(value)
            }
            Tok::Assert => {
                self.next();
                let cond = self.expr()?;
                self.eat(&Tok::Semi)?;
                StmtKind::Assert(cond)
            }
            Tok::Ident(_) if self.toks.get(self.pos + 1).map(|s| &s.tok) == Some(&Tok::Assign) => {
                let (name, ..) = self.eat_ident()?;
                self.eat(&Tok::Assign)?;
                let value = self.expr()?;
                self.eat(&Tok::Semi)?;
                StmtKind::Assign { name, value }
            }
            _ => {
                let e = self.expr()?;
                self.eat(&Tok::Semi)?;
                StmtKind::ExprStmt(e)
            }
        };
        Ok(Stmt {
            loc: placeholder,
            line: t.line,
            kind,
        })
    }

    fn program_file(&mut self, path: &Path) -> Result<SourceFile, ParseFail> {
        let mut globals = Vec::new();
        let mut functions = Vec::new();
        loop {
            let t = self.peek().clone();
            match t.tok {
                Tok::Eof => break,
                Tok::Global => {
                    self.next();
                    let (name, ..) = self.eat_ident()?;
                    self.eat(&Tok::Assign)?;
                    let init = self.expr()?;
                    self.eat(&Tok::Semi)?;
                    globals.push(GlobalDecl {
                        name,
                        init,
                        line: t.line,
                    });
                }
                Tok::Fn => {
                    self.next();
                    let (name, ..) = self.eat_ident()?;
                    self.eat(&Tok::LParen)?;
                    let mut params = Vec::new();
                    if self.peek().tok != Tok::RParen {
                        loop {
                            let (p, ..) = self.eat_ident()?;
                            params.push(p);
                            if self.peek().tok == Tok::Comma {
                                self.next();
                            } else {
                                break;
                            }
                        }
                    }
                    self.eat(&Tok::RParen)?;
                    let body = self.block()?;
                    functions.push(Function {
                        name,
                        params,
                        body,
                        line: t.line,
                    });
                }
                other => {
                    return Err(ParseFail {
                        line: t.line,
                        col: t.col,
                        message: format!(
                            "expected `fn` or `global` at top level, found {}",
                            other.describe()
                        ),
                    })
                }
            }
        }
        Ok(SourceFile {
            path: path.to_path_buf(),
            globals,
            functions,
        })
    }

    fn test_file(&mut self, path: &Path) -> Result<TestFile, ParseFail> {
        let mut tests = Vec::new();
        loop {
            let t = self.peek().clone();
            match t.tok {
                Tok::Eof => break,
                Tok::Test => {
                    self.next();
                    let (class, ..) = self.eat_ident()?;
                    self.eat(&Tok::ColonColon)?;
                    let (name, ..) = self.eat_ident()?;
                    let body = self.block()?;
                    tests.push(TestDef {
                        id: format!("{class}::{name}"),
                        body,
                        line: t.line,
                    });
                }
                other => {
                    return Err(ParseFail {
                        line: t.line,
                        col: t.col,
                        message: format!("expected `test` at top level, found {}", other.describe()),
                    })
                }
            }
        }
        Ok(TestFile {
            path: path.to_path_buf(),
            tests,
        })
    }
}

fn fail_to_diag(path: &Path, f: ParseFail) -> Diagnostic {
    Diagnostic::error(path, f.line, format!("{}:{} {}", f.line, f.col, f.message))
}

/// Parses one `.mini` file. `path` is the location key used for statement
/// numbering (relative to the workspace root).
pub fn parse_program_file(path: &Path, text: &str) -> Result<SourceFile, Diagnostic> {
    let toks = lex(text).map_err(|f| fail_to_diag(path, f))?;
    let mut parser = Parser { toks, pos: 0 };
    let mut file = parser
        .program_file(path)
        .map_err(|f| fail_to_diag(path, f))?;
    let mut next = 1;
    for func in &mut file.functions {
        assign_locations(&mut func.body, path, &mut next);
    }
    Ok(file)
}

/// Parses one `.minitest` file.
pub fn parse_test_file(path: &Path, text: &str) -> Result<TestFile, Diagnostic> {
    let toks = lex(text).map_err(|f| fail_to_diag(path, f))?;
    let mut parser = Parser { toks, pos: 0 };
    let mut file = parser.test_file(path).map_err(|f| fail_to_diag(path, f))?;
    let mut next = 1;
    for test in &mut file.tests {
        assign_locations(&mut test.body, path, &mut next);
    }
    Ok(file)
}
