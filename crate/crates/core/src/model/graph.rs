//! Communication graphs, all-but-two cycle sets, and the acyclic reduction.

use std::collections::{BTreeMap, BTreeSet};

use super::{
    Access, Cfg, Event, EventId, EventLabel, Lock, LockId, NodeId, ProcId, Program, Target, VarId,
};

/// An undirected edge `(min, max)` between processes.
pub type Edge = (ProcId, ProcId);

/// A set of communication-graph edges.
pub type EdgeSet = BTreeSet<Edge>;

/// Processes as nodes; an edge labels the targets both endpoints access.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommunicationGraph {
    pub procs: usize,
    pub edges: BTreeMap<Edge, BTreeSet<Target>>,
}

impl CommunicationGraph {
    pub fn adjacent(&self, a: ProcId, b: ProcId) -> bool {
        self.edges.contains_key(&edge(a, b))
    }

    pub fn label(&self, a: ProcId, b: ProcId) -> Option<&BTreeSet<Target>> {
        self.edges.get(&edge(a, b))
    }
}

pub fn edge(a: ProcId, b: ProcId) -> Edge {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

pub fn build_communication_graph(program: &Program) -> CommunicationGraph {
    let touched: Vec<BTreeSet<Target>> = program
        .processes
        .iter()
        .enumerate()
        .map(|(p, _)| {
            program
                .process_events(ProcId(p as u32))
                .iter()
                .filter_map(|&e| program.event(e).label.target())
                .collect()
        })
        .collect();
    let mut edges = BTreeMap::new();
    for i in 0..touched.len() {
        for j in i + 1..touched.len() {
            let common: BTreeSet<Target> = touched[i].intersection(&touched[j]).copied().collect();
            if !common.is_empty() {
                edges.insert((ProcId(i as u32), ProcId(j as u32)), common);
            }
        }
    }
    CommunicationGraph {
        procs: touched.len(),
        edges,
    }
}

pub fn is_acyclic(graph: &CommunicationGraph) -> bool {
    let mut parent: Vec<usize> = (0..graph.procs).collect();
    fn find(parent: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while parent[r] != r {
            r = parent[r];
        }
        let mut y = x;
        while parent[y] != r {
            let next = parent[y];
            parent[y] = r;
            y = next;
        }
        r
    }
    for &(a, b) in graph.edges.keys() {
        let (ra, rb) = (find(&mut parent, a.index()), find(&mut parent, b.index()));
        if ra == rb {
            return false;
        }
        parent[ra] = rb;
    }
    true
}

/// All edges except the two smallest in `(min, max)` order.
pub fn all_but_two_cycle_set(graph: &CommunicationGraph) -> EdgeSet {
    graph.edges.keys().skip(2).copied().collect()
}

/// Checks by simple-cycle enumeration that every cycle has at most two
/// edges outside `x`.
pub fn is_all_but_two_cycle_set(graph: &CommunicationGraph, x: &EdgeSet) -> bool {
    let n = graph.procs;
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in graph.edges.keys() {
        adj[a.index()].push(b.index());
        adj[b.index()].push(a.index());
    }
    let mut ok = true;
    for start in 0..n {
        let mut path = vec![start];
        let mut on_path = vec![false; n];
        on_path[start] = true;
        cycles_from(start, &adj, &mut path, &mut on_path, &mut |cycle| {
            let outside = (0..cycle.len())
                .filter(|&i| {
                    let a = ProcId(cycle[i] as u32);
                    let b = ProcId(cycle[(i + 1) % cycle.len()] as u32);
                    !x.contains(&edge(a, b))
                })
                .count();
            if outside > 2 {
                ok = false;
            }
        });
    }
    ok
}

fn cycles_from(
    start: usize,
    adj: &[Vec<usize>],
    path: &mut Vec<usize>,
    on_path: &mut [bool],
    visit: &mut dyn FnMut(&[usize]),
) {
    let last = *path.last().unwrap();
    for &next in &adj[last] {
        if next == start && path.len() >= 3 {
            visit(path);
        } else if next > start && !on_path[next] {
            on_path[next] = true;
            path.push(next);
            cycles_from(start, adj, path, on_path, visit);
            path.pop();
            on_path[next] = false;
        }
    }
}

/// The result of [`acyclic_reduction`].
#[derive(Clone, Debug)]
pub struct Reduction {
    pub program: Program,
    pub x: EdgeSet,
    /// The original communication graph.
    pub graph: CommunicationGraph,
    /// Locks introduced by the reduction.
    pub observable: Vec<LockId>,
    /// Protected write events and their lock.
    pub write_lock: BTreeMap<EventId, LockId>,
}

/// Wraps every write to a variable labeling an edge of `x` in a fresh lock.
///
/// Locks are never protected. An array whose writes all use constant
/// indices gets one lock per written cell; otherwise one lock for the
/// whole array. Original event ids are preserved.
pub fn acyclic_reduction(program: &Program, x: &EdgeSet) -> Reduction {
    let graph = build_communication_graph(program);
    let mut y: BTreeSet<VarId> = BTreeSet::new();
    for e in x {
        if let Some(label) = graph.edges.get(e) {
            for t in label {
                if let Target::Var(v) = t {
                    y.insert(*v);
                }
            }
        }
    }
    let writes_to = |v: VarId| {
        program.events.iter().filter(move |ev| {
            ev.proc.is_some() && ev.label.access() == Access::Write(Target::Var(v))
        })
    };
    let mut locks = program.locks.clone();
    let mut lock_of: BTreeMap<(VarId, Option<u32>), LockId> = BTreeMap::new();
    let taken: BTreeSet<String> = program
        .globals
        .iter()
        .map(|g| g.name.clone())
        .chain(program.locks.iter().map(|l| l.name.clone()))
        .collect();
    let fresh = |base: String, locks: &mut Vec<Lock>, guards: (VarId, Option<u32>)| {
        let mut name = base.clone();
        let mut k = 1;
        while taken.contains(&name) || locks.iter().any(|l| l.name == name) {
            name = format!("{base}_{k}");
            k += 1;
        }
        let id = LockId(locks.len() as u32);
        locks.push(Lock {
            name,
            guards: Some(guards),
        });
        id
    };
    for &v in &y {
        let g = &program.globals[v.index()];
        let cells: Option<BTreeSet<u32>> = if g.size.is_some() {
            writes_to(v)
                .map(|ev| match &ev.label {
                    EventLabel::Write { loc, .. } => loc
                        .index
                        .as_ref()
                        .and_then(|i| i.as_const())
                        .map(|c| c as u32),
                    _ => None,
                })
                .collect()
        } else {
            None
        };
        match cells {
            Some(cells) => {
                for c in cells {
                    let id = fresh(format!("l_{}_{}", g.name, c), &mut locks, (v, Some(c)));
                    lock_of.insert((v, Some(c)), id);
                }
            }
            None => {
                if writes_to(v).next().is_some() {
                    let id = fresh(format!("l_{}", g.name), &mut locks, (v, None));
                    lock_of.insert((v, None), id);
                }
            }
        }
    }
    let observable: Vec<LockId> = (program.locks.len()..locks.len())
        .map(|l| LockId(l as u32))
        .collect();

    let mut events: Vec<Event> = program.events.clone();
    let mut processes = program.processes.clone();
    let mut write_lock = BTreeMap::new();
    for (p, proc) in processes.iter_mut().enumerate() {
        let mut node_count = proc.cfg.node_count;
        let mut out = proc.cfg.out.clone();
        for &e in program.process_events(ProcId(p as u32)) {
            let ev = &program.events[e.index()];
            let EventLabel::Write { loc, .. } = &ev.label else {
                continue;
            };
            let cell = loc
                .index
                .as_ref()
                .and_then(|i| i.as_const())
                .map(|c| c as u32);
            let lock = match lock_of.get(&(loc.var, cell)) {
                Some(l) => *l,
                None => match lock_of.get(&(loc.var, None)) {
                    Some(l) => *l,
                    None => continue,
                },
            };
            let (u, v) = ev.edge.unwrap();
            let a = NodeId(node_count);
            let b = NodeId(node_count + 1);
            node_count += 2;
            out.push(Vec::new());
            out.push(Vec::new());
            let acq = EventId(events.len() as u32);
            let rel = EventId(events.len() as u32 + 1);
            events.push(Event {
                id: acq,
                proc: ev.proc,
                edge: Some((u, a)),
                label: EventLabel::Acquire(lock),
                violation: None,
            });
            events.push(Event {
                id: rel,
                proc: ev.proc,
                edge: Some((b, v)),
                label: EventLabel::Release(lock),
                violation: None,
            });
            events[e.index()].edge = Some((a, b));
            for slot in out[u.index()].iter_mut() {
                if *slot == e {
                    *slot = acq;
                }
            }
            out[a.index()].push(e);
            out[b.index()].push(rel);
            write_lock.insert(e, lock);
        }
        proc.cfg = Cfg {
            node_count,
            root: proc.cfg.root,
            out,
        };
    }
    let mut init_events = program.init_events.clone();
    for &l in &observable {
        let id = EventId(events.len() as u32);
        events.push(Event {
            id,
            proc: None,
            edge: None,
            label: EventLabel::Init(Target::Lock(l)),
            violation: None,
        });
        init_events.push(id);
    }
    let reduced = Program::from_parts(
        program.globals.clone(),
        locks,
        processes,
        events,
        init_events,
    )
    .expect("the acyclic reduction preserves well-formedness");
    Reduction {
        program: reduced,
        x: x.clone(),
        graph,
        observable,
        write_lock,
    }
}
