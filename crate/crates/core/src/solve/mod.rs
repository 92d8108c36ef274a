//! Realizing a positive annotation as a trace: constraint graph,
//! transitive closure, 2SAT encoding, and topological linearization,
//! with the modifications for acyclic reductions of cyclic architectures.

mod graph;
mod twosat;

use std::collections::BTreeMap;

use fixedbitset::FixedBitSet;
use thiserror::Error;

use crate::annot::{compute_basis, Basis, NotWellFormed, PositiveAnnotation};
use crate::exec::{replay, Trace};
use crate::model::graph::{build_communication_graph, edge, EdgeSet, Reduction};
use crate::model::{EventId, LockId, Program};

pub use graph::{transitive_closure, ConstraintGraph};
pub use twosat::{twosat_solve, Lit, TwoSatInstance};

/// Extra structure available when realizing on an acyclic reduction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CyclicSpec {
    pub x: EdgeSet,
    pub observable: Vec<LockId>,
    pub write_lock: BTreeMap<EventId, LockId>,
}

impl From<&Reduction> for CyclicSpec {
    fn from(r: &Reduction) -> Self {
        CyclicSpec {
            x: r.x.clone(),
            observable: r.observable.clone(),
            write_lock: r.write_lock.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub enum RealizeMode {
    #[default]
    Acyclic,
    Cyclic(CyclicSpec),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Unrealizable {
    #[error("not well-formed: {0}")]
    NotWellFormed(#[from] NotWellFormed),
    #[error("constraint graph has a cycle")]
    CycleInG,
    #[error("ordering constraints are unsatisfiable")]
    Unsat,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RealizeError {
    #[error("unrealizable: {0}")]
    Unrealizable(#[from] Unrealizable),
    #[error("internal error: {0}")]
    Internal(String),
}

/// 2SAT instance whose variables order pairs of constraint-graph nodes.
///
/// Variable `v` stands for "`pairs[v].0` precedes `pairs[v].1`" with the
/// smaller event id first; the reverse order is its negation, so the
/// antisymmetry clauses hold by construction.
#[derive(Clone, Debug, Default)]
pub struct OrderEncoding {
    pub instance: TwoSatInstance,
    pub pairs: Vec<(EventId, EventId)>,
    nodes: Vec<EventId>,
    /// Variable of node pair `(i, j)` with `i < j` at `i * n + j`.
    var_of: Vec<u32>,
    /// Set when two closure facts already contradict a clause.
    pub trivially_unsat: bool,
}

impl OrderEncoding {
    /// Literal for "`a` precedes `b`", if the pair is admitted.
    pub fn lit(&self, a: EventId, b: EventId) -> Option<Lit> {
        let i = self.nodes.binary_search(&a).ok()?;
        let j = self.nodes.binary_search(&b).ok()?;
        self.lit_idx(i, j)
    }

    fn lit_idx(&self, i: usize, j: usize) -> Option<Lit> {
        let n = self.nodes.len();
        let (v, neg) = if i < j {
            (self.var_of[i * n + j], false)
        } else {
            (self.var_of[j * n + i], true)
        };
        match (v, neg) {
            (u32::MAX, _) => None,
            (v, false) => Some(Lit::pos(v)),
            (v, true) => Some(Lit::neg(v)),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Val {
    True,
    False,
    Var(Lit),
    Free,
}

struct Encoder<'a> {
    closure: &'a ConstraintGraph,
    pred: Vec<FixedBitSet>,
    enc: OrderEncoding,
}

impl Encoder<'_> {
    fn val(&self, i: usize, j: usize) -> Val {
        if self.closure.has_edge_idx(i, j) {
            Val::True
        } else if self.closure.has_edge_idx(j, i) {
            Val::False
        } else {
            match self.enc.lit_idx(i, j) {
                Some(l) => Val::Var(l),
                None => Val::Free,
            }
        }
    }

    fn push(&mut self, a: Lit, b: Lit) {
        let key = if a <= b { (a, b) } else { (b, a) };
        self.enc.instance.or(key.0, key.1);
    }

    /// Emits `a ⇒ b`, folding sides fixed by closure facts.
    fn implies(&mut self, a: Val, b: Val) {
        match (a, b) {
            (Val::False, _) | (_, Val::True) | (Val::Free, _) | (_, Val::Free) => {}
            (Val::True, Val::False) => self.enc.trivially_unsat = true,
            (Val::True, Val::Var(l)) => self.push(l, l),
            (Val::Var(l), Val::False) => self.push(!l, !l),
            (Val::Var(x), Val::Var(y)) => self.push(!x, y),
        }
    }
}

/// Builds the clause set over the closure `closure` of the constraint
/// graph. `admissible` decides which process pairs get order variables;
/// `(r, w, w')` triples list every annotated pair with a conflicting basis
/// write `w'`.
fn encode(
    program: &Program,
    closure: &ConstraintGraph,
    admissible: &dyn Fn(EventId, EventId) -> bool,
    triples: &[(EventId, EventId, EventId)],
) -> OrderEncoding {
    let n = closure.len();
    let mut enc = OrderEncoding {
        nodes: closure.nodes.clone(),
        var_of: vec![u32::MAX; n * n],
        ..Default::default()
    };
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (closure.nodes[i], closure.nodes[j]);
            debug_assert!(a < b);
            if admissible(a, b) {
                enc.var_of[i * n + j] = enc.pairs.len() as u32;
                enc.pairs.push((a, b));
            }
        }
    }
    enc.instance.num_vars = enc.pairs.len();
    let mut pred = vec![FixedBitSet::with_capacity(n); n];
    for i in 0..n {
        for j in closure.succ_idx(i).ones() {
            pred[j].insert(i);
        }
    }
    let mut e = Encoder { closure, pred, enc };
    // Fact clauses.
    for i in 0..n {
        for j in closure.succ_idx(i).ones() {
            if i != j {
                if let Some(l) = e.enc.lit_idx(i, j) {
                    e.push(l, l);
                }
            }
        }
    }
    // Transitivity clauses for orders not fixed by facts.
    for i in 0..n {
        for j in 0..n {
            let x = e.val(i, j);
            if !matches!(x, Val::Var(_)) {
                continue;
            }
            let succ: Vec<usize> = closure.succ_idx(j).ones().collect();
            for k in succ {
                let y = e.val(i, k);
                e.implies(x, y);
            }
            let preds: Vec<usize> = e.pred[i].ones().collect();
            for k in preds {
                let y = e.val(k, j);
                e.implies(x, y);
            }
        }
    }
    // Annotation clauses.
    for &(r, w, w2) in triples {
        let (ir, iw2) = (closure.index_of(r).unwrap(), closure.index_of(w2).unwrap());
        let before_r = e.val(iw2, ir);
        let before_w = match closure.index_of(w) {
            Some(iw) => e.val(iw2, iw),
            None => Val::False,
        };
        debug_assert!(program.is_init(w) || closure.index_of(w).is_some());
        e.implies(before_r, before_w);
    }
    let clauses = &mut e.enc.instance.clauses;
    clauses.sort_unstable();
    clauses.dedup();
    e.enc
}

/// Realizes positive annotations on one program.
pub struct Realizer<'p> {
    program: &'p Program,
    mode: RealizeMode,
    adjacent: Vec<Vec<bool>>,
}

/// Intermediate products of a realization attempt, for inspection.
#[derive(Clone, Debug)]
pub struct Encoded {
    pub basis: Basis,
    pub graph: ConstraintGraph,
    pub closure: ConstraintGraph,
    pub encoding: OrderEncoding,
}

impl<'p> Realizer<'p> {
    pub fn new(program: &'p Program, mode: RealizeMode) -> Self {
        let g = build_communication_graph(program);
        let k = program.processes.len();
        let mut adjacent = vec![vec![false; k]; k];
        for &(a, b) in g.edges.keys() {
            let excluded = match &mode {
                RealizeMode::Cyclic(spec) => spec.x.contains(&edge(a, b)),
                RealizeMode::Acyclic => false,
            };
            if !excluded {
                adjacent[a.index()][b.index()] = true;
                adjacent[b.index()][a.index()] = true;
            }
        }
        for (p, row) in adjacent.iter_mut().enumerate() {
            row[p] = true;
        }
        Realizer {
            program,
            mode,
            adjacent,
        }
    }

    pub fn program(&self) -> &Program {
        self.program
    }

    fn admissible(&self, a: EventId, b: EventId) -> bool {
        match (self.program.proc_of(a), self.program.proc_of(b)) {
            (Some(p), Some(q)) => self.adjacent[p.index()][q.index()],
            _ => false,
        }
    }

    /// Triples `(r, w, w')`: annotated pairs and other basis writes
    /// conflicting with the read.
    fn triples(
        &self,
        pos: &PositiveAnnotation,
        basis: &Basis,
        v: &[EventId],
    ) -> Vec<(EventId, EventId, EventId)> {
        let p = self.program;
        let mut out = Vec::new();
        for (&r, &w) in pos {
            let lr = basis.entry(r).and_then(|x| x.loc).unwrap();
            for &w2 in v {
                if w2 == w || !p.event(w2).label.is_write() {
                    continue;
                }
                let l2 = basis.entry(w2).and_then(|x| x.loc).unwrap();
                if p.conflicting(r, w2, lr, l2).unwrap_or(false) {
                    out.push((r, w, w2));
                }
            }
        }
        out
    }

    /// Runs every step up to the 2SAT instance.
    pub fn encode(&self, pos: &PositiveAnnotation) -> Result<Encoded, Unrealizable> {
        let p = self.program;
        let basis = compute_basis(p, pos)?;
        let mut v: Vec<EventId> = basis
            .visible(p)
            .into_iter()
            .filter(|&e| !p.is_init(e))
            .collect();
        v.sort();
        let mut g = ConstraintGraph::new(v.clone());
        for (i, &a) in v.iter().enumerate() {
            for &b in &v[i + 1..] {
                if p.ps(a, b) {
                    g.add_edge(a, b);
                } else if p.ps(b, a) {
                    g.add_edge(b, a);
                }
            }
        }
        for (&r, &w) in pos {
            if !p.is_init(w) {
                g.add_edge(w, r);
            }
        }
        let triples = self.triples(pos, &basis, &v);
        if let RealizeMode::Cyclic(spec) = &self.mode {
            self.lock_order_edges(spec, &mut g, &triples);
        }
        if !g.is_acyclic() {
            return Err(Unrealizable::CycleInG);
        }
        let closure = transitive_closure(&g);
        let encoding = encode(p, &closure, &|a, b| self.admissible(a, b), &triples);
        Ok(Encoded {
            basis,
            graph: g,
            closure,
            encoding,
        })
    }

    /// Orders reads against writes protected by the reduction's locks, to
    /// a fixpoint over the closure.
    fn lock_order_edges(
        &self,
        spec: &CyclicSpec,
        g: &mut ConstraintGraph,
        triples: &[(EventId, EventId, EventId)],
    ) {
        let relevant: Vec<_> = triples
            .iter()
            .copied()
            .filter(|&(_, w, w2)| {
                spec.write_lock.contains_key(&w2)
                    && (self.program.is_init(w)
                        || spec.write_lock.get(&w) == spec.write_lock.get(&w2))
            })
            .collect();
        if relevant.is_empty() {
            return;
        }
        loop {
            if !g.is_acyclic() {
                return;
            }
            let closure = transitive_closure(g);
            let mut changed = false;
            for &(r, w, w2) in &relevant {
                if self.program.is_init(w) || closure.has_edge(w, w2) {
                    changed |= g.add_edge(r, w2);
                }
                if !self.program.is_init(w) && closure.has_edge(w2, r) {
                    changed |= g.add_edge(w2, w);
                }
            }
            if !changed {
                return;
            }
        }
    }

    /// A trace whose observation function equals `pos`, or why none exists.
    pub fn realize(&self, pos: &PositiveAnnotation) -> Result<Trace, RealizeError> {
        let enc = self.encode(pos)?;
        if enc.encoding.trivially_unsat {
            return Err(Unrealizable::Unsat.into());
        }
        let assignment = twosat_solve(&enc.encoding.instance)
            .ok_or(RealizeError::Unrealizable(Unrealizable::Unsat))?;
        let mut g2 = enc.graph.clone();
        for (v, &(a, b)) in enc.encoding.pairs.iter().enumerate() {
            if assignment[v] {
                g2.add_edge(a, b);
            } else {
                g2.add_edge(b, a);
            }
        }
        let order = g2.topological_sort().ok_or_else(|| {
            RealizeError::Internal("satisfying assignment induces a cycle".into())
        })?;
        let mut seq = self.program.init_events.clone();
        seq.extend(order);
        let trace = replay(self.program, &seq)
            .map_err(|e| RealizeError::Internal(format!("linearization does not replay: {e}")))?;
        if &trace.observation(self.program) != pos {
            return Err(RealizeError::Internal(
                "linearization does not realize the annotation".into(),
            ));
        }
        Ok(trace)
    }
}

/// One-shot [`Realizer::realize`].
pub fn realize(
    program: &Program,
    pos: &PositiveAnnotation,
    mode: RealizeMode,
) -> Result<Trace, RealizeError> {
    Realizer::new(program, mode).realize(pos)
}

/// The 2SAT instance for `pos` given its closure and basis.
pub fn encode_2sat(
    program: &Program,
    closure: &ConstraintGraph,
    pos: &PositiveAnnotation,
    basis: &Basis,
    mode: RealizeMode,
) -> OrderEncoding {
    let r = Realizer::new(program, mode);
    let triples = r.triples(pos, basis, &closure.nodes);
    encode(program, closure, &|a, b| r.admissible(a, b), &triples)
}

#[cfg(test)]
mod tests;
