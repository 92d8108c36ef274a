//! Lexer, recursive-descent parser, and name resolution.

use std::collections::BTreeSet;

use super::ast::*;
use super::LangError;
use crate::model::{BinOp, UnOp};

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(i64),
    Sym(&'static str),
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Int(i) => format!("`{i}`"),
            Tok::Sym(s) => format!("`{s}`"),
            Tok::Eof => "end of input".into(),
        }
    }
}

const SYMBOLS: &[&str] = &[
    "->", "==", "!=", "<=", ">=", "&&", "||", "{", "}", "(", ")", "[", "]", "=", "<", ">", "+",
    "-", "*", "!", ",", ":", ";",
];

const KEYWORDS: &[&str] = &[
    "global", "lock", "process", "local", "read", "write", "acquire", "release", "if", "else",
    "repeat", "assert", "cfg", "nodes", "root", "when", "fail", "true", "false",
];

fn lex(src: &str) -> Result<Vec<(Tok, Pos)>, LangError> {
    let mut out = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, col };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            let value = text.parse::<i64>().map_err(|_| LangError::Syntax {
                pos,
                msg: format!("integer literal `{text}` out of range"),
            })?;
            col += (i - start) as u32;
            out.push((Tok::Int(value), pos));
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            col += (i - start) as u32;
            out.push((Tok::Ident(chars[start..i].iter().collect()), pos));
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        match SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
            Some(s) => {
                i += s.len();
                col += s.len() as u32;
                out.push((Tok::Sym(s), pos));
            }
            None => {
                return Err(LangError::Syntax {
                    pos,
                    msg: format!("unexpected character `{c}`"),
                })
            }
        }
    }
    out.push((Tok::Eof, Pos { line, col }));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, Pos)>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn peek2(&self) -> &Tok {
        &self.toks[(self.at + 1).min(self.toks.len() - 1)].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> (Tok, Pos) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn fail<T>(&self, expected: &str) -> Result<T, LangError> {
        Err(LangError::Syntax {
            pos: self.pos(),
            msg: format!("expected {expected}, found {}", self.peek().describe()),
        })
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(t) if *t == s)
    }

    fn is_kw(&self, k: &str) -> bool {
        matches!(self.peek(), Tok::Ident(t) if t == k)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> Result<(), LangError> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.fail(&format!("`{s}`"))
        }
    }

    fn expect_kw(&mut self, k: &str) -> Result<(), LangError> {
        if self.is_kw(k) {
            self.bump();
            Ok(())
        } else {
            self.fail(&format!("`{k}`"))
        }
    }

    fn ident(&mut self) -> Result<(String, Pos), LangError> {
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                let pos = self.pos();
                self.bump();
                Ok((s, pos))
            }
            _ => self.fail("identifier"),
        }
    }

    fn uint(&mut self) -> Result<u32, LangError> {
        match *self.peek() {
            Tok::Int(v) if v <= u32::MAX as i64 => {
                self.bump();
                Ok(v as u32)
            }
            _ => self.fail("non-negative integer"),
        }
    }

    fn sint(&mut self) -> Result<i64, LangError> {
        let neg = self.eat_sym("-");
        match *self.peek() {
            Tok::Int(v) => {
                self.bump();
                Ok(if neg { v.wrapping_neg() } else { v })
            }
            _ => self.fail("integer"),
        }
    }

    fn program(&mut self) -> Result<Ast, LangError> {
        let mut ast = Ast {
            globals: Vec::new(),
            locks: Vec::new(),
            processes: Vec::new(),
        };
        loop {
            if *self.peek() == Tok::Eof {
                return Ok(ast);
            }
            if self.is_kw("global") {
                let pos = self.pos();
                self.bump();
                ast.globals.push(self.global(pos)?);
            } else if self.is_kw("lock") {
                let pos = self.pos();
                self.bump();
                let (name, _) = self.ident()?;
                ast.locks.push(LockDecl { name, pos });
            } else if self.is_kw("process") {
                let pos = self.pos();
                self.bump();
                ast.processes.push(self.process(pos)?);
            } else {
                return self.fail("`global`, `lock`, or `process`");
            }
            self.eat_sym(";");
        }
    }

    fn global(&mut self, pos: Pos) -> Result<GlobalDecl, LangError> {
        let (name, _) = self.ident()?;
        let size = if self.eat_sym("[") {
            let n = self.uint()?;
            self.expect_sym("]")?;
            if n == 0 {
                return Err(LangError::Syntax {
                    pos,
                    msg: format!("array `{name}` must have positive size"),
                });
            }
            Some(n)
        } else {
            None
        };
        let len = size.unwrap_or(1) as usize;
        let mut init = vec![0; len];
        if self.eat_sym("=") {
            if self.eat_sym("[") {
                let mut vals = vec![self.sint()?];
                while self.eat_sym(",") {
                    vals.push(self.sint()?);
                }
                self.expect_sym("]")?;
                if size.is_none() || vals.len() != len {
                    return Err(LangError::Syntax {
                        pos,
                        msg: format!("initializer of `{name}` must list {len} values"),
                    });
                }
                init = vals;
            } else {
                let v = self.sint()?;
                init = vec![v; len];
            }
        }
        Ok(GlobalDecl {
            name,
            size,
            init,
            pos,
        })
    }

    fn process(&mut self, pos: Pos) -> Result<ProcessAst, LangError> {
        let (name, _) = self.ident()?;
        let mut params = Vec::new();
        if self.eat_sym("(") {
            if !self.is_sym(")") {
                loop {
                    let (p, _) = self.ident()?;
                    self.expect_sym("=")?;
                    params.push((p, self.sint()?));
                    if !self.eat_sym(",") {
                        break;
                    }
                }
            }
            self.expect_sym(")")?;
        }
        let body = if self.is_kw("cfg") {
            self.bump();
            Body::Cfg(self.cfg()?)
        } else {
            Body::Block(self.block()?)
        };
        Ok(ProcessAst {
            name,
            params,
            body,
            pos,
        })
    }

    fn cfg(&mut self) -> Result<CfgAst, LangError> {
        self.expect_kw("nodes")?;
        let nodes = self.uint()?;
        self.expect_kw("root")?;
        let root = self.uint()?;
        self.expect_sym("{")?;
        let mut edges = Vec::new();
        while !self.eat_sym("}") {
            let pos = self.pos();
            let src = self.uint()?;
            self.expect_sym("->")?;
            let dst = self.uint()?;
            self.expect_sym(":")?;
            let label = if self.is_kw("write") {
                self.bump();
                let loc = self.loc()?;
                self.expect_sym("=")?;
                EdgeLabelAst::Write {
                    loc,
                    value: self.expr()?,
                }
            } else if self.is_kw("acquire") {
                self.bump();
                EdgeLabelAst::Acquire(self.ident()?.0)
            } else if self.is_kw("release") {
                self.bump();
                EdgeLabelAst::Release(self.ident()?.0)
            } else if self.is_kw("when") {
                self.bump();
                EdgeLabelAst::When(self.expr()?)
            } else if self.is_kw("fail") {
                self.bump();
                let id = self.uint()?;
                self.expect_kw("when")?;
                EdgeLabelAst::Fail(id, self.expr()?)
            } else {
                let (target, _) = self.ident()?;
                self.expect_sym("=")?;
                if self.is_kw("read") {
                    self.bump();
                    EdgeLabelAst::Read {
                        target,
                        loc: self.loc()?,
                    }
                } else {
                    EdgeLabelAst::Assign {
                        target,
                        value: self.expr()?,
                    }
                }
            };
            self.eat_sym(";");
            edges.push(CfgEdgeAst {
                src,
                dst,
                label,
                pos,
            });
        }
        Ok(CfgAst { nodes, root, edges })
    }

    fn block(&mut self) -> Result<Vec<Stmt>, LangError> {
        self.expect_sym("{")?;
        let mut out = Vec::new();
        while !self.eat_sym("}") {
            out.push(self.stmt()?);
            self.eat_sym(";");
        }
        Ok(out)
    }

    fn stmt(&mut self) -> Result<Stmt, LangError> {
        let pos = self.pos();
        if self.is_kw("local") {
            self.bump();
            let (target, _) = self.ident()?;
            self.expect_sym("=")?;
            return self.rhs(true, target, pos);
        }
        if self.is_kw("write") {
            self.bump();
            let loc = self.loc()?;
            self.expect_sym("=")?;
            let value = self.expr()?;
            return Ok(Stmt::Write { loc, value, pos });
        }
        if self.is_kw("acquire") {
            self.bump();
            return Ok(Stmt::Acquire(self.ident()?.0, pos));
        }
        if self.is_kw("release") {
            self.bump();
            return Ok(Stmt::Release(self.ident()?.0, pos));
        }
        if self.is_kw("if") {
            return self.if_stmt();
        }
        if self.is_kw("repeat") {
            self.bump();
            let count = self.uint()?;
            let body = self.block()?;
            return Ok(Stmt::Repeat { count, body, pos });
        }
        if self.is_kw("assert") {
            self.bump();
            return Ok(Stmt::Assert(self.expr()?, pos));
        }
        if matches!(self.peek(), Tok::Ident(_)) && matches!(self.peek2(), Tok::Sym("=")) {
            let (target, _) = self.ident()?;
            self.expect_sym("=")?;
            return self.rhs(false, target, pos);
        }
        self.fail("statement")
    }

    fn if_stmt(&mut self) -> Result<Stmt, LangError> {
        let pos = self.pos();
        self.expect_kw("if")?;
        let cond = self.expr()?;
        let then = self.block()?;
        let otherwise = if self.is_kw("else") {
            self.bump();
            if self.is_kw("if") {
                vec![self.if_stmt()?]
            } else {
                self.block()?
            }
        } else {
            Vec::new()
        };
        Ok(Stmt::If {
            cond,
            then,
            otherwise,
            pos,
        })
    }

    fn rhs(&mut self, declare: bool, target: String, pos: Pos) -> Result<Stmt, LangError> {
        if self.is_kw("read") {
            self.bump();
            let loc = self.loc()?;
            Ok(Stmt::Read {
                declare,
                target,
                loc,
                pos,
            })
        } else {
            let value = self.expr()?;
            Ok(Stmt::Assign {
                declare,
                target,
                value,
                pos,
            })
        }
    }

    fn loc(&mut self) -> Result<LocAst, LangError> {
        let (var, pos) = self.ident()?;
        let index = if self.eat_sym("[") {
            let e = self.expr()?;
            self.expect_sym("]")?;
            Some(e)
        } else {
            None
        };
        Ok(LocAst { var, index, pos })
    }

    fn expr(&mut self) -> Result<ExprAst, LangError> {
        self.binary(1)
    }

    fn binop(&self) -> Option<BinOp> {
        let Tok::Sym(s) = self.peek() else {
            return None;
        };
        Some(match *s {
            "||" => BinOp::Or,
            "&&" => BinOp::And,
            "==" => BinOp::Eq,
            "!=" => BinOp::Ne,
            "<" => BinOp::Lt,
            "<=" => BinOp::Le,
            ">" => BinOp::Gt,
            ">=" => BinOp::Ge,
            "+" => BinOp::Add,
            "-" => BinOp::Sub,
            "*" => BinOp::Mul,
            _ => return None,
        })
    }

    fn binary(&mut self, min: u8) -> Result<ExprAst, LangError> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.binop() {
            let p = op.precedence();
            if p < min {
                break;
            }
            self.bump();
            let rhs = self.binary(p + 1)?;
            lhs = ExprAst::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<ExprAst, LangError> {
        if self.eat_sym("!") {
            return Ok(ExprAst::Unary(UnOp::Not, Box::new(self.unary()?)));
        }
        if self.eat_sym("-") {
            if let Tok::Int(v) = *self.peek() {
                self.bump();
                return Ok(ExprAst::Int(v.wrapping_neg()));
            }
            return Ok(ExprAst::Unary(UnOp::Neg, Box::new(self.unary()?)));
        }
        if self.eat_sym("(") {
            let e = self.expr()?;
            self.expect_sym(")")?;
            return Ok(e);
        }
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(ExprAst::Int(v))
            }
            Tok::Ident(s) if s == "true" => {
                self.bump();
                Ok(ExprAst::Int(1))
            }
            Tok::Ident(s) if s == "false" => {
                self.bump();
                Ok(ExprAst::Int(0))
            }
            Tok::Ident(_) => {
                let (name, pos) = self.ident()?;
                Ok(ExprAst::Name(name, pos))
            }
            _ => self.fail("expression"),
        }
    }
}

/// Parses source text and checks declarations and name uses.
pub fn parse(src: &str) -> Result<Ast, LangError> {
    let toks = lex(src)?;
    let ast = Parser { toks, at: 0 }.program()?;
    resolve(&ast)?;
    Ok(ast)
}

struct Scope<'a> {
    ast: &'a Ast,
    locals: BTreeSet<String>,
}

impl Scope<'_> {
    fn use_local(&self, name: &str, pos: Pos) -> Result<(), LangError> {
        if self.locals.contains(name) {
            Ok(())
        } else {
            Err(LangError::Undeclared {
                pos,
                name: name.to_string(),
            })
        }
    }

    fn declare(&mut self, name: &str, pos: Pos) -> Result<(), LangError> {
        if self.locals.insert(name.to_string()) {
            Ok(())
        } else {
            Err(LangError::Duplicate {
                pos,
                name: name.to_string(),
            })
        }
    }

    fn expr(&self, e: &ExprAst) -> Result<(), LangError> {
        match e {
            ExprAst::Int(_) => Ok(()),
            ExprAst::Name(n, pos) => self.use_local(n, *pos),
            ExprAst::Unary(_, a) => self.expr(a),
            ExprAst::Binary(_, a, b) => {
                self.expr(a)?;
                self.expr(b)
            }
        }
    }

    fn loc(&self, l: &LocAst) -> Result<(), LangError> {
        if !self.ast.globals.iter().any(|g| g.name == l.var) {
            return Err(LangError::Undeclared {
                pos: l.pos,
                name: l.var.clone(),
            });
        }
        if let Some(i) = &l.index {
            self.expr(i)?;
        }
        Ok(())
    }

    fn lock(&self, name: &str, pos: Pos) -> Result<(), LangError> {
        if self.ast.locks.iter().any(|l| l.name == name) {
            Ok(())
        } else {
            Err(LangError::Undeclared {
                pos,
                name: name.to_string(),
            })
        }
    }

    fn stmts(&mut self, body: &[Stmt]) -> Result<(), LangError> {
        for s in body {
            match s {
                Stmt::Read {
                    declare,
                    target,
                    loc,
                    pos,
                } => {
                    self.loc(loc)?;
                    self.target(*declare, target, *pos)?;
                }
                Stmt::Assign {
                    declare,
                    target,
                    value,
                    pos,
                } => {
                    self.expr(value)?;
                    self.target(*declare, target, *pos)?;
                }
                Stmt::Write { loc, value, .. } => {
                    self.loc(loc)?;
                    self.expr(value)?;
                }
                Stmt::Acquire(l, pos) | Stmt::Release(l, pos) => self.lock(l, *pos)?,
                Stmt::If {
                    cond,
                    then,
                    otherwise,
                    ..
                } => {
                    self.expr(cond)?;
                    self.stmts(then)?;
                    self.stmts(otherwise)?;
                }
                Stmt::Repeat { body, .. } => self.stmts(body)?,
                Stmt::Assert(e, _) => self.expr(e)?,
            }
        }
        Ok(())
    }

    fn target(&mut self, declare: bool, name: &str, pos: Pos) -> Result<(), LangError> {
        if declare {
            self.declare(name, pos)
        } else {
            self.use_local(name, pos)
        }
    }
}

fn resolve(ast: &Ast) -> Result<(), LangError> {
    let mut shared = BTreeSet::new();
    let decls = ast
        .globals
        .iter()
        .map(|g| (&g.name, g.pos))
        .chain(ast.locks.iter().map(|l| (&l.name, l.pos)));
    for (name, pos) in decls {
        if !shared.insert(name.clone()) {
            return Err(LangError::Duplicate {
                pos,
                name: name.clone(),
            });
        }
    }
    let mut procs = BTreeSet::new();
    for p in &ast.processes {
        if !procs.insert(p.name.clone()) {
            return Err(LangError::Duplicate {
                pos: p.pos,
                name: p.name.clone(),
            });
        }
        let mut scope = Scope {
            ast,
            locals: BTreeSet::new(),
        };
        for (name, _) in &p.params {
            scope.declare(name, p.pos)?;
        }
        match &p.body {
            Body::Block(stmts) => scope.stmts(stmts)?,
            Body::Cfg(cfg) => {
                for e in &cfg.edges {
                    match &e.label {
                        EdgeLabelAst::Read { target, loc } => {
                            scope.loc(loc)?;
                            scope.use_local(target, e.pos)?;
                        }
                        EdgeLabelAst::Write { loc, value } => {
                            scope.loc(loc)?;
                            scope.expr(value)?;
                        }
                        EdgeLabelAst::Acquire(l) | EdgeLabelAst::Release(l) => {
                            scope.lock(l, e.pos)?
                        }
                        EdgeLabelAst::Assign { target, value } => {
                            scope.expr(value)?;
                            scope.use_local(target, e.pos)?;
                        }
                        EdgeLabelAst::When(g) | EdgeLabelAst::Fail(_, g) => scope.expr(g)?,
                    }
                }
            }
        }
    }
    Ok(())
}
