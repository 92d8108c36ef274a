//! The static program model: processes as acyclic CFGs over typed events,
//! global and lock declarations, initialization writes, the program
//! structure order, and the communication graph.

mod expr;
pub mod graph;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use expr::{BinOp, Expr, UnOp};
pub use graph::{
    acyclic_reduction, all_but_two_cycle_set, build_communication_graph, is_acyclic,
    is_all_but_two_cycle_set, CommunicationGraph, EdgeSet, Reduction,
};

macro_rules! id_type {
    ($(#[$m:meta])* $name:ident, $prefix:literal) => {
        $(#[$m])*
        #[derive(
            Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl $name {
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }
    };
}

id_type!(
    /// A global variable or array.
    VarId,
    "g"
);
id_type!(
    /// A lock.
    LockId,
    "l"
);
id_type!(
    /// A process, by position in [`Program::processes`].
    ProcId,
    "p"
);
id_type!(
    /// A globally unique event.
    EventId,
    "e"
);
id_type!(
    /// A CFG node, local to one process.
    NodeId,
    "n"
);
id_type!(
    /// A process-local variable.
    LocalId,
    "v"
);

/// A shared location family: a global (scalar or array) or a lock.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Target {
    Var(VarId),
    Lock(LockId),
}

/// A location after index resolution. Array accesses resolve to a cell;
/// scalars, locks, and whole-array initialization writes carry no cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ResolvedLoc {
    pub target: Target,
    pub cell: Option<u32>,
}

impl ResolvedLoc {
    pub fn overlaps(&self, other: &ResolvedLoc) -> bool {
        self.target == other.target
            && match (self.cell, other.cell) {
                (Some(a), Some(b)) => a == b,
                _ => true,
            }
    }
}

/// A global location expression: a variable plus an optional index.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LocationExpr {
    pub var: VarId,
    pub index: Option<Expr>,
}

/// The label of a CFG edge.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum EventLabel {
    Read { target: LocalId, loc: LocationExpr },
    Write { loc: LocationExpr, value: Expr },
    Acquire(LockId),
    Release(LockId),
    Branch(Expr),
    Assign { target: LocalId, value: Expr },
    Init(Target),
}

/// How an event touches shared memory.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Access {
    Invisible,
    Read(Target),
    Write(Target),
}

impl EventLabel {
    pub fn access(&self) -> Access {
        match self {
            EventLabel::Read { loc, .. } => Access::Read(Target::Var(loc.var)),
            EventLabel::Acquire(l) => Access::Read(Target::Lock(*l)),
            EventLabel::Write { loc, .. } => Access::Write(Target::Var(loc.var)),
            EventLabel::Release(l) => Access::Write(Target::Lock(*l)),
            EventLabel::Init(t) => Access::Write(*t),
            EventLabel::Branch(_) | EventLabel::Assign { .. } => Access::Invisible,
        }
    }

    pub fn is_visible(&self) -> bool {
        self.access() != Access::Invisible
    }

    pub fn is_read(&self) -> bool {
        matches!(self.access(), Access::Read(_))
    }

    pub fn is_write(&self) -> bool {
        matches!(self.access(), Access::Write(_))
    }

    pub fn target(&self) -> Option<Target> {
        match self.access() {
            Access::Invisible => None,
            Access::Read(t) | Access::Write(t) => Some(t),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            EventLabel::Read { .. } => "read",
            EventLabel::Write { .. } => "write",
            EventLabel::Acquire(_) => "acquire",
            EventLabel::Release(_) => "release",
            EventLabel::Branch(_) => "branch",
            EventLabel::Assign { .. } => "assign",
            EventLabel::Init(_) => "init",
        }
    }
}

/// An event: a labeled CFG edge of one process, or an initialization write.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Event {
    pub id: EventId,
    /// `None` for initialization writes.
    pub proc: Option<ProcId>,
    pub edge: Option<(NodeId, NodeId)>,
    pub label: EventLabel,
    /// Set on the branch edge that enters an assertion-failure sink.
    pub violation: Option<u32>,
}

impl Event {
    pub fn is_init(&self) -> bool {
        self.proc.is_none()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Global {
    pub name: String,
    /// Array length, or `None` for a scalar.
    pub size: Option<u32>,
    /// Initial contents; one value for scalars.
    pub init: Vec<i64>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lock {
    pub name: String,
    /// For locks introduced by [`acyclic_reduction`]: the protected location.
    pub guards: Option<(VarId, Option<u32>)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Local {
    pub name: String,
    pub init: i64,
}

/// A loop-free control-flow graph. Edges are event ids whose
/// [`Event::edge`] records the endpoints.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cfg {
    pub node_count: u32,
    pub root: NodeId,
    pub out: Vec<Vec<EventId>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Process {
    pub name: String,
    pub locals: Vec<Local>,
    pub cfg: Cfg,
}

/// An edge of a process under construction.
#[derive(Clone, Debug)]
pub struct EdgeSpec {
    pub src: NodeId,
    pub dst: NodeId,
    pub label: EventLabel,
    pub violation: Option<u32>,
}

/// A process under construction, before event ids are assigned.
#[derive(Clone, Debug)]
pub struct ProcessSpec {
    pub name: String,
    pub locals: Vec<Local>,
    pub node_count: u32,
    pub root: NodeId,
    pub edges: Vec<EdgeSpec>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("unknown event {0}")]
    UnknownEvent(EventId),
    #[error("event {0} does not access shared memory")]
    Invisible(EventId),
    #[error("process {process}: {msg}")]
    InvalidCfg { process: String, msg: String },
    #[error("process {process}: {msg}")]
    Locking { process: String, msg: String },
}

/// A concurrent program with derived program-structure data.
#[derive(Clone, Debug)]
pub struct Program {
    pub globals: Vec<Global>,
    pub locks: Vec<Lock>,
    pub processes: Vec<Process>,
    pub events: Vec<Event>,
    pub init_events: Vec<EventId>,
    proc_events: Vec<Vec<EventId>>,
    ps_after: Vec<FixedBitSet>,
    cell_base: Vec<usize>,
    asserts: u32,
}

impl Program {
    /// Builds a program, assigning event ids: initialization writes first
    /// (globals, then locks), then each process in CFG topological order.
    pub fn build(
        globals: Vec<Global>,
        locks: Vec<Lock>,
        specs: Vec<ProcessSpec>,
    ) -> Result<Program, ModelError> {
        let mut events = Vec::new();
        let mut init_events = Vec::new();
        let targets = (0..globals.len())
            .map(|g| Target::Var(VarId(g as u32)))
            .chain((0..locks.len()).map(|l| Target::Lock(LockId(l as u32))));
        for t in targets {
            let id = EventId(events.len() as u32);
            init_events.push(id);
            events.push(Event {
                id,
                proc: None,
                edge: None,
                label: EventLabel::Init(t),
                violation: None,
            });
        }
        let mut processes = Vec::with_capacity(specs.len());
        for (p, spec) in specs.into_iter().enumerate() {
            let order = topo_nodes(&spec.name, spec.node_count, spec.root, &spec.edges)?;
            let mut rank = vec![0usize; spec.node_count as usize];
            for (i, n) in order.iter().enumerate() {
                rank[n.index()] = i;
            }
            let mut idx: Vec<usize> = (0..spec.edges.len()).collect();
            idx.sort_by_key(|&i| {
                (
                    rank[spec.edges[i].src.index()],
                    rank[spec.edges[i].dst.index()],
                    i,
                )
            });
            let mut out = vec![Vec::new(); spec.node_count as usize];
            for i in idx {
                let e = &spec.edges[i];
                let id = EventId(events.len() as u32);
                out[e.src.index()].push(id);
                events.push(Event {
                    id,
                    proc: Some(ProcId(p as u32)),
                    edge: Some((e.src, e.dst)),
                    label: e.label.clone(),
                    violation: e.violation,
                });
            }
            processes.push(Process {
                name: spec.name,
                locals: spec.locals,
                cfg: Cfg {
                    node_count: spec.node_count,
                    root: spec.root,
                    out,
                },
            });
        }
        Program::from_parts(globals, locks, processes, events, init_events)
    }

    /// Assembles a program from already-numbered parts and validates it.
    pub fn from_parts(
        globals: Vec<Global>,
        locks: Vec<Lock>,
        processes: Vec<Process>,
        events: Vec<Event>,
        init_events: Vec<EventId>,
    ) -> Result<Program, ModelError> {
        let n = events.len();
        let mut proc_events = Vec::with_capacity(processes.len());
        let mut ps_after = vec![FixedBitSet::with_capacity(n); n];
        let mut asserts = 0;
        for (p, proc) in processes.iter().enumerate() {
            let cfg = &proc.cfg;
            let edges: Vec<EdgeSpec> = cfg
                .out
                .iter()
                .flatten()
                .map(|&e| {
                    let ev = &events[e.index()];
                    let (src, dst) = ev.edge.expect("process event without edge");
                    EdgeSpec {
                        src,
                        dst,
                        label: ev.label.clone(),
                        violation: ev.violation,
                    }
                })
                .collect();
            let order = topo_nodes(&proc.name, cfg.node_count, cfg.root, &edges)?;
            validate_shape(proc, &events)?;
            check_locks(proc, &events, &order, locks.len())?;
            // Reachability from each node, in reverse topological order.
            let mut below = vec![FixedBitSet::with_capacity(n); cfg.node_count as usize];
            let mut ordered = Vec::new();
            for &node in order.iter().rev() {
                let mut acc = FixedBitSet::with_capacity(n);
                for &e in &cfg.out[node.index()] {
                    let (_, dst) = events[e.index()].edge.unwrap();
                    acc.insert(e.index());
                    acc.union_with(&below[dst.index()]);
                }
                below[node.index()] = acc;
            }
            for &node in &order {
                for &e in &cfg.out[node.index()] {
                    let ev = &events[e.index()];
                    if ev.proc != Some(ProcId(p as u32)) {
                        return Err(ModelError::InvalidCfg {
                            process: proc.name.clone(),
                            msg: format!("event {e} is attributed to another process"),
                        });
                    }
                    if let Some(a) = ev.violation {
                        asserts = asserts.max(a + 1);
                    }
                    let (_, dst) = ev.edge.unwrap();
                    ps_after[e.index()] = below[dst.index()].clone();
                    ordered.push(e);
                }
            }
            proc_events.push(ordered);
        }
        let mut cell_base = Vec::with_capacity(globals.len());
        let mut next = 0;
        for g in &globals {
            cell_base.push(next);
            next += g.init.len();
        }
        Ok(Program {
            cell_base,
            globals,
            locks,
            processes,
            events,
            init_events,
            proc_events,
            ps_after,
            asserts,
        })
    }

    pub fn event(&self, e: EventId) -> &Event {
        &self.events[e.index()]
    }

    pub fn event_count(&self) -> usize {
        self.events.len()
    }

    pub fn is_init(&self, e: EventId) -> bool {
        self.events[e.index()].proc.is_none()
    }

    pub fn proc_of(&self, e: EventId) -> Option<ProcId> {
        self.events[e.index()].proc
    }

    /// Events of a process in CFG topological order.
    pub fn process_events(&self, p: ProcId) -> &[EventId] {
        &self.proc_events[p.index()]
    }

    pub fn assert_count(&self) -> u32 {
        self.asserts
    }

    pub fn init_event_of(&self, t: Target) -> EventId {
        *self
            .init_events
            .iter()
            .find(|&&e| self.events[e.index()].label == EventLabel::Init(t))
            .expect("every target has an initialization write")
    }

    /// Strict program-structure order. Initialization writes precede every
    /// non-initialization event.
    pub fn ps(&self, e1: EventId, e2: EventId) -> bool {
        let (a, b) = (&self.events[e1.index()], &self.events[e2.index()]);
        match (a.proc, b.proc) {
            (None, Some(_)) => true,
            (None, None) | (Some(_), None) => false,
            (Some(p), Some(q)) => p == q && self.ps_after[e1.index()].contains(e2.index()),
        }
    }

    /// Checked variant of [`Program::ps`].
    pub fn program_structure_leq(&self, e1: EventId, e2: EventId) -> Result<bool, ModelError> {
        self.check_event(e1)?;
        self.check_event(e2)?;
        Ok(self.ps(e1, e2))
    }

    /// The events strictly after `e` in its process.
    pub fn ps_successors(&self, e: EventId) -> &FixedBitSet {
        &self.ps_after[e.index()]
    }

    fn check_event(&self, e: EventId) -> Result<(), ModelError> {
        if e.index() < self.events.len() {
            Ok(())
        } else {
            Err(ModelError::UnknownEvent(e))
        }
    }

    /// Whether two events conflict at the given resolved locations: both
    /// access overlapping locations and at least one writes.
    pub fn conflicting(
        &self,
        e1: EventId,
        e2: EventId,
        loc1: ResolvedLoc,
        loc2: ResolvedLoc,
    ) -> Result<bool, ModelError> {
        self.check_event(e1)?;
        self.check_event(e2)?;
        let a1 = self.events[e1.index()].label.access();
        let a2 = self.events[e2.index()].label.access();
        if a1 == Access::Invisible {
            return Err(ModelError::Invisible(e1));
        }
        if a2 == Access::Invisible {
            return Err(ModelError::Invisible(e2));
        }
        let writes = matches!(a1, Access::Write(_)) || matches!(a2, Access::Write(_));
        Ok(e1 != e2 && writes && loc1.overlaps(&loc2))
    }

    /// Initial value of a global cell.
    pub fn initial_value(&self, var: VarId, cell: Option<u32>) -> i64 {
        let g = &self.globals[var.index()];
        g.init[cell.unwrap_or(0) as usize]
    }

    /// Index of a global cell in a flattened memory.
    pub fn cell_index(&self, var: VarId, cell: Option<u32>) -> usize {
        self.cell_base[var.index()] + cell.unwrap_or(0) as usize
    }

    /// Total number of global memory cells.
    pub fn cell_count(&self) -> usize {
        self.globals.iter().map(|g| g.init.len()).sum()
    }

    pub fn target_name(&self, t: Target) -> &str {
        match t {
            Target::Var(v) => &self.globals[v.index()].name,
            Target::Lock(l) => &self.locks[l.index()].name,
        }
    }

    /// Short human-readable description of an event.
    pub fn describe(&self, e: EventId) -> String {
        let ev = self.event(e);
        let local = |p: Option<ProcId>| {
            let p = p.map(|p| p.index());
            move |v: LocalId| match p {
                Some(p) => self.processes[p].locals[v.index()].name.clone(),
                None => v.to_string(),
            }
        };
        let name = local(ev.proc);
        let loc = |l: &LocationExpr| match &l.index {
            Some(i) => format!("{}[{}]", self.globals[l.var.index()].name, i.render(&name)),
            None => self.globals[l.var.index()].name.clone(),
        };
        match &ev.label {
            EventLabel::Read { target, loc: l } => format!("{} = read {}", name(*target), loc(l)),
            EventLabel::Write { loc: l, value } => {
                format!("write {} = {}", loc(l), value.render(&name))
            }
            EventLabel::Acquire(l) => format!("acquire {}", self.locks[l.index()].name),
            EventLabel::Release(l) => format!("release {}", self.locks[l.index()].name),
            EventLabel::Branch(g) => format!("when {}", g.render(&name)),
            EventLabel::Assign { target, value } => {
                format!("{} = {}", name(*target), value.render(&name))
            }
            EventLabel::Init(t) => format!("init {}", self.target_name(*t)),
        }
    }
}

fn topo_nodes(
    process: &str,
    node_count: u32,
    root: NodeId,
    edges: &[EdgeSpec],
) -> Result<Vec<NodeId>, ModelError> {
    let err = |msg: String| ModelError::InvalidCfg {
        process: process.to_string(),
        msg,
    };
    let n = node_count as usize;
    if root.index() >= n {
        return Err(err(format!("root {root} out of range")));
    }
    let mut indeg = vec![0usize; n];
    let mut succ = vec![Vec::new(); n];
    for e in edges {
        if e.src.index() >= n || e.dst.index() >= n {
            return Err(err(format!("edge {} -> {} out of range", e.src, e.dst)));
        }
        indeg[e.dst.index()] += 1;
        succ[e.src.index()].push(e.dst);
    }
    if indeg[root.index()] != 0 {
        return Err(err("root has incoming edges".into()));
    }
    let mut queue: VecDeque<NodeId> = (0..n)
        .filter(|&i| indeg[i] == 0)
        .map(|i| NodeId(i as u32))
        .collect();
    let mut order = Vec::with_capacity(n);
    while let Some(u) = queue.pop_front() {
        order.push(u);
        for &v in &succ[u.index()] {
            indeg[v.index()] -= 1;
            if indeg[v.index()] == 0 {
                queue.push_back(v);
            }
        }
    }
    if order.len() != n {
        return Err(err("control-flow graph has a cycle".into()));
    }
    if let Some(&u) = order
        .iter()
        .find(|&&u| u != root && edges.iter().all(|e| e.dst != u))
    {
        return Err(err(format!("node {u} is unreachable from the root")));
    }
    Ok(order)
}

fn validate_shape(proc: &Process, events: &[Event]) -> Result<(), ModelError> {
    let err = |msg: String| ModelError::InvalidCfg {
        process: proc.name.clone(),
        msg,
    };
    let branching = |node: NodeId| {
        let out = &proc.cfg.out[node.index()];
        out.len() >= 2
    };
    for (node, out) in proc.cfg.out.iter().enumerate() {
        let is_branch = |e: &EventId| matches!(events[e.index()].label, EventLabel::Branch(_));
        match out.len() {
            0 => {}
            1 => {
                if is_branch(&out[0]) {
                    return Err(err(format!("node n{node} has a single branch edge")));
                }
            }
            _ => {
                if !out.iter().all(is_branch) {
                    return Err(err(format!(
                        "node n{node} mixes branch and non-branch edges"
                    )));
                }
                for e in out {
                    let (_, dst) = events[e.index()].edge.unwrap();
                    if branching(dst) {
                        return Err(err(format!("branch edge {e} enters a branching node")));
                    }
                }
            }
        }
        for e in out {
            if matches!(events[e.index()].label, EventLabel::Init(_)) {
                return Err(err("initialization write inside a process".into()));
            }
        }
    }
    Ok(())
}

/// Every path must release what it acquires, with no re-acquisition of a
/// held lock and identical held sets where paths join.
fn check_locks(
    proc: &Process,
    events: &[Event],
    order: &[NodeId],
    lock_count: usize,
) -> Result<(), ModelError> {
    let err = |msg: String| ModelError::Locking {
        process: proc.name.clone(),
        msg,
    };
    let mut held: Vec<Option<BTreeSet<LockId>>> = vec![None; proc.cfg.node_count as usize];
    held[proc.cfg.root.index()] = Some(BTreeSet::new());
    for &node in order {
        let here = held[node.index()].clone().unwrap_or_default();
        let out = &proc.cfg.out[node.index()];
        if out.is_empty() && !here.is_empty() {
            let names: Vec<String> = here.iter().map(|l| l.to_string()).collect();
            return Err(err(format!(
                "path ends at n{} holding {}",
                node.index(),
                names.join(", ")
            )));
        }
        for &e in out {
            let ev = &events[e.index()];
            let mut next = here.clone();
            match ev.label {
                EventLabel::Acquire(l) => {
                    if l.index() >= lock_count {
                        return Err(err(format!("unknown lock {l}")));
                    }
                    if !next.insert(l) {
                        return Err(err(format!("{e} re-acquires held lock {l}")));
                    }
                }
                EventLabel::Release(l) if !next.remove(&l) => {
                    return Err(err(format!("{e} releases {l} which is not held")));
                }
                _ => {}
            }
            let (_, dst) = ev.edge.unwrap();
            match &held[dst.index()] {
                None => held[dst.index()] = Some(next),
                Some(prev) if *prev != next => {
                    return Err(err(format!(
                        "paths join at n{} with different held locks",
                        dst.index()
                    )))
                }
                Some(_) => {}
            }
        }
    }
    Ok(())
}

/// Counts by event kind, for diagnostics.
pub fn event_summary(program: &Program) -> BTreeMap<&'static str, usize> {
    let mut out = BTreeMap::new();
    for ev in &program.events {
        *out.entry(ev.label.kind()).or_insert(0) += 1;
    }
    out
}
