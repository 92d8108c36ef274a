//! Lowering of the syntax tree to a loop-free [`Program`].

use std::collections::BTreeMap;

use super::ast::*;
use super::LangError;
use crate::model::{
    EdgeSpec, EventLabel, Expr, Global, Local, LocalId, LocationExpr, Lock, LockId, NodeId,
    ProcessSpec, Program, VarId,
};

pub fn compile(ast: &Ast) -> Result<Program, LangError> {
    let globals: Vec<Global> = ast
        .globals
        .iter()
        .map(|g| Global {
            name: g.name.clone(),
            size: g.size,
            init: g.init.clone(),
        })
        .collect();
    let locks: Vec<Lock> = ast
        .locks
        .iter()
        .map(|l| Lock {
            name: l.name.clone(),
            guards: None,
        })
        .collect();
    let mut next_assert = 0u32;
    let mut specs = Vec::new();
    for p in &ast.processes {
        let mut cx = ProcCx::new(ast, p);
        let spec = match &p.body {
            Body::Block(stmts) => cx.structured(stmts, &mut next_assert)?,
            Body::Cfg(cfg) => cx.explicit(cfg)?,
        };
        specs.push(spec);
    }
    Ok(Program::build(globals, locks, specs)?)
}

struct ProcCx<'a> {
    ast: &'a Ast,
    name: String,
    locals: Vec<Local>,
    ids: BTreeMap<String, LocalId>,
}

impl<'a> ProcCx<'a> {
    fn new(ast: &'a Ast, p: &ProcessAst) -> Self {
        let mut cx = ProcCx {
            ast,
            name: p.name.clone(),
            locals: Vec::new(),
            ids: BTreeMap::new(),
        };
        for (n, v) in &p.params {
            cx.declare(n, *v);
        }
        if let Body::Block(stmts) = &p.body {
            cx.declare_in(stmts);
        }
        cx
    }

    fn declare(&mut self, name: &str, init: i64) {
        if !self.ids.contains_key(name) {
            self.ids
                .insert(name.to_string(), LocalId(self.locals.len() as u32));
            self.locals.push(Local {
                name: name.to_string(),
                init,
            });
        }
    }

    fn declare_in(&mut self, stmts: &[Stmt]) {
        for s in stmts {
            match s {
                Stmt::Read {
                    declare: true,
                    target,
                    ..
                }
                | Stmt::Assign {
                    declare: true,
                    target,
                    ..
                } => self.declare(target, 0),
                Stmt::If {
                    then, otherwise, ..
                } => {
                    self.declare_in(then);
                    self.declare_in(otherwise);
                }
                Stmt::Repeat { body, .. } => self.declare_in(body),
                _ => {}
            }
        }
    }

    fn local(&self, name: &str) -> LocalId {
        self.ids[name]
    }

    fn expr(&self, e: &ExprAst) -> Expr {
        match e {
            ExprAst::Int(v) => Expr::Const(*v),
            ExprAst::Name(n, _) => Expr::Local(self.local(n)),
            ExprAst::Unary(op, a) => Expr::Unary(*op, Box::new(self.expr(a))),
            ExprAst::Binary(op, a, b) => Expr::binary(*op, self.expr(a), self.expr(b)),
        }
    }

    fn var(&self, name: &str) -> VarId {
        VarId(
            self.ast
                .globals
                .iter()
                .position(|g| g.name == name)
                .unwrap() as u32,
        )
    }

    fn lock(&self, name: &str) -> LockId {
        LockId(self.ast.locks.iter().position(|l| l.name == name).unwrap() as u32)
    }

    fn loc(&self, l: &LocAst) -> Result<LocationExpr, LangError> {
        let var = self.var(&l.var);
        let g = &self.ast.globals[var.index()];
        let index = match (&l.index, g.size) {
            (None, None) => None,
            (Some(_), None) => {
                return Err(LangError::Index {
                    pos: l.pos,
                    msg: format!("`{}` is not an array", l.var),
                })
            }
            (None, Some(_)) => {
                return Err(LangError::Index {
                    pos: l.pos,
                    msg: format!("array `{}` needs an index", l.var),
                })
            }
            (Some(i), Some(n)) => {
                let e = self.expr(i);
                if let Some(c) = e.as_const() {
                    if c < 0 || c >= n as i64 {
                        return Err(LangError::Index {
                            pos: l.pos,
                            msg: format!("index {c} out of bounds for `{}[{n}]`", l.var),
                        });
                    }
                }
                Some(e)
            }
        };
        Ok(LocationExpr { var, index })
    }

    fn structured(
        &mut self,
        stmts: &[Stmt],
        next_assert: &mut u32,
    ) -> Result<ProcessSpec, LangError> {
        let mut b = Builder::default();
        let root = b.node();
        let mut held = Vec::new();
        self.block(&mut b, root, stmts, &mut held, next_assert)?;
        let (node_count, edges) = b.finish(root);
        Ok(ProcessSpec {
            name: self.name.clone(),
            locals: self.locals.clone(),
            node_count,
            root: NodeId(0),
            edges,
        })
    }

    fn block(
        &self,
        b: &mut Builder,
        mut cur: u32,
        stmts: &[Stmt],
        held: &mut Vec<LockId>,
        next_assert: &mut u32,
    ) -> Result<u32, LangError> {
        for s in stmts {
            cur = self.stmt(b, cur, s, held, next_assert)?;
        }
        Ok(cur)
    }

    fn stmt(
        &self,
        b: &mut Builder,
        cur: u32,
        s: &Stmt,
        held: &mut Vec<LockId>,
        next_assert: &mut u32,
    ) -> Result<u32, LangError> {
        let label = match s {
            Stmt::Read { target, loc, .. } => EventLabel::Read {
                target: self.local(target),
                loc: self.loc(loc)?,
            },
            Stmt::Assign { target, value, .. } => EventLabel::Assign {
                target: self.local(target),
                value: self.expr(value),
            },
            Stmt::Write { loc, value, .. } => EventLabel::Write {
                loc: self.loc(loc)?,
                value: self.expr(value),
            },
            Stmt::Acquire(l, _) => {
                let l = self.lock(l);
                held.push(l);
                EventLabel::Acquire(l)
            }
            Stmt::Release(l, _) => {
                let l = self.lock(l);
                if let Some(i) = held.iter().rposition(|h| *h == l) {
                    held.remove(i);
                }
                EventLabel::Release(l)
            }
            Stmt::If {
                cond,
                then,
                otherwise,
                ..
            } => {
                let c = self.expr(cond);
                let t = b.node();
                let e = b.node();
                b.edge(cur, t, EventLabel::Branch(c.clone()), None);
                b.edge(cur, e, EventLabel::Branch(Expr::negate(c)), None);
                let mut held_else = held.clone();
                let t_end = self.block(b, t, then, held, next_assert)?;
                let e_end = self.block(b, e, otherwise, &mut held_else, next_assert)?;
                return Ok(b.merge(t_end, e_end));
            }
            Stmt::Repeat { count, body, .. } => {
                let first = *next_assert;
                let mut end = cur;
                for _ in 0..*count {
                    *next_assert = first;
                    end = self.block(b, end, body, held, next_assert)?;
                }
                if *count == 0 {
                    let mut scratch = Builder::default();
                    let n = scratch.node();
                    self.block(&mut scratch, n, body, &mut held.clone(), next_assert)?;
                }
                return Ok(end);
            }
            Stmt::Assert(cond, _) => {
                let id = *next_assert;
                *next_assert += 1;
                let c = self.expr(cond);
                let ok = b.node();
                let fail = b.node();
                b.edge(cur, ok, EventLabel::Branch(c.clone()), None);
                b.edge(cur, fail, EventLabel::Branch(Expr::negate(c)), Some(id));
                let mut at = fail;
                for &l in held.iter().rev() {
                    let n = b.node();
                    b.edge(at, n, EventLabel::Release(l), None);
                    at = n;
                }
                return Ok(ok);
            }
        };
        let next = b.node();
        b.edge(cur, next, label, None);
        Ok(next)
    }

    fn explicit(&mut self, cfg: &CfgAst) -> Result<ProcessSpec, LangError> {
        let mut edges = Vec::new();
        for e in &cfg.edges {
            let (label, violation) = match &e.label {
                EdgeLabelAst::Read { target, loc } => (
                    EventLabel::Read {
                        target: self.local(target),
                        loc: self.loc(loc)?,
                    },
                    None,
                ),
                EdgeLabelAst::Write { loc, value } => (
                    EventLabel::Write {
                        loc: self.loc(loc)?,
                        value: self.expr(value),
                    },
                    None,
                ),
                EdgeLabelAst::Acquire(l) => (EventLabel::Acquire(self.lock(l)), None),
                EdgeLabelAst::Release(l) => (EventLabel::Release(self.lock(l)), None),
                EdgeLabelAst::Assign { target, value } => (
                    EventLabel::Assign {
                        target: self.local(target),
                        value: self.expr(value),
                    },
                    None,
                ),
                EdgeLabelAst::When(g) => (EventLabel::Branch(self.expr(g)), None),
                EdgeLabelAst::Fail(id, g) => (EventLabel::Branch(self.expr(g)), Some(*id)),
            };
            edges.push(EdgeSpec {
                src: NodeId(e.src),
                dst: NodeId(e.dst),
                label,
                violation,
            });
        }
        Ok(ProcessSpec {
            name: self.name.clone(),
            locals: self.locals.clone(),
            node_count: cfg.nodes,
            root: NodeId(cfg.root),
            edges,
        })
    }
}

/// Accumulates nodes and edges with union-find merging of join points.
#[derive(Default)]
struct Builder {
    parent: Vec<u32>,
    edges: Vec<(u32, u32, EventLabel, Option<u32>)>,
}

impl Builder {
    fn node(&mut self) -> u32 {
        self.parent.push(self.parent.len() as u32);
        self.parent.len() as u32 - 1
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }

    fn merge(&mut self, a: u32, b: u32) -> u32 {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[rb as usize] = ra;
        }
        ra
    }

    fn edge(&mut self, src: u32, dst: u32, label: EventLabel, violation: Option<u32>) {
        self.edges.push((src, dst, label, violation));
    }

    /// Resolves merges, contracts branch edges that enter branching nodes,
    /// drops unreachable nodes, and renumbers from the root.
    fn finish(mut self, root: u32) -> (u32, Vec<EdgeSpec>) {
        let mut edges: Vec<(u32, u32, EventLabel, Option<u32>)> = std::mem::take(&mut self.edges)
            .into_iter()
            .map(|(s, d, l, v)| (self.find(s), self.find(d), l, v))
            .collect();
        let root = self.find(root);
        loop {
            let branching = |n: u32, edges: &[(u32, u32, EventLabel, Option<u32>)]| {
                edges.iter().filter(|e| e.0 == n).count() >= 2
            };
            let Some(i) = edges
                .iter()
                .position(|e| matches!(e.2, EventLabel::Branch(_)) && branching(e.1, &edges))
            else {
                break;
            };
            let (src, mid, label, violation) = edges.remove(i);
            let EventLabel::Branch(outer) = label else {
                unreachable!()
            };
            let inner: Vec<_> = edges.iter().filter(|e| e.0 == mid).cloned().collect();
            for (k, (_, dst, l, v)) in inner.into_iter().enumerate() {
                let EventLabel::Branch(g) = l else {
                    unreachable!("branching nodes only have branch edges")
                };
                edges.insert(
                    i + k,
                    (
                        src,
                        dst,
                        EventLabel::Branch(Expr::and(outer.clone(), g)),
                        v.or(violation),
                    ),
                );
            }
        }
        // Keep nodes reachable from the root, numbered in discovery order.
        let mut number: BTreeMap<u32, u32> = BTreeMap::new();
        number.insert(root, 0);
        let mut stack = vec![root];
        let mut order = vec![root];
        while let Some(u) = stack.pop() {
            for e in edges.iter().filter(|e| e.0 == u) {
                if !number.contains_key(&e.1) {
                    number.insert(e.1, number.len() as u32);
                    order.push(e.1);
                    stack.push(e.1);
                }
            }
        }
        let specs = edges
            .into_iter()
            .filter(|e| number.contains_key(&e.0))
            .map(|(s, d, label, violation)| EdgeSpec {
                src: NodeId(number[&s]),
                dst: NodeId(number[&d]),
                label,
                violation,
            })
            .collect();
        (number.len() as u32, specs)
    }
}
