//! Positive and negative annotations, the annotation value function,
//! well-formedness, and basis computation.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{resolve, Entry, ExecError, Trace};
use crate::model::{EventId, EventLabel, ProcId, Program, ResolvedLoc, Target};

/// Intended observation function: read (or acquire) to write (or release
/// or initialization write).
pub type PositiveAnnotation = BTreeMap<EventId, EventId>;

/// Writes each read must not observe.
pub type NegativeAnnotation = BTreeMap<EventId, BTreeSet<EventId>>;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationPair {
    pub pos: PositiveAnnotation,
    pub neg: NegativeAnnotation,
}

#[derive(Serialize)]
struct AnnotationJson<'a> {
    pos: Vec<(EventId, EventId)>,
    neg: &'a NegativeAnnotation,
}

impl AnnotationPair {
    pub fn new() -> Self {
        Self::default()
    }

    /// Whether `w` is blacklisted for `r`.
    pub fn forbids(&self, r: EventId, w: EventId) -> bool {
        self.neg.get(&r).is_some_and(|s| s.contains(&w))
    }

    /// `{"pos": [[r,w],...], "neg": {r: [w,...]}}` with numeric event ids.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&AnnotationJson {
            pos: self.pos.iter().map(|(&r, &w)| (r, w)).collect(),
            neg: &self.neg,
        })
        .expect("annotations serialize")
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NotWellFormed {
    #[error("{r} -> {w}: not a conflicting read/write pair")]
    NotConflicting { r: EventId, w: EventId },
    #[error("{r} -> {w}: the read precedes the write in program structure")]
    ReadBeforeWrite { r: EventId, w: EventId },
    #[error("program structure and annotation order form a cycle")]
    Cyclic,
    #[error("release {0} is observed by more than one acquire")]
    SharedRelease(EventId),
    #[error("process p{0}: annotated events have no unique maximum")]
    NoUniqueMaximum(u32),
    #[error("process p{0}: local replay leaves the annotated events")]
    Diverged(u32),
    #[error("read {0} in the basis is not annotated")]
    UnannotatedRead(EventId),
    #[error("annotated event {0} is not in the basis")]
    Missing(EventId),
    #[error("process p{0}: lock acquired twice without release")]
    DoubleAcquire(u32),
    #[error("local replay is stuck waiting on unresolved values")]
    Stalled,
    #[error("local replay failed: {0}")]
    Exec(#[from] ExecError),
}

/// Whether program structure together with the write-before-read order of
/// the annotation is acyclic.
pub fn annotation_order_acyclic(program: &Program, pos: &PositiveAnnotation) -> bool {
    let nodes: Vec<EventId> = pos
        .iter()
        .flat_map(|(&r, &w)| [r, w])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index: HashMap<EventId, usize> = nodes.iter().enumerate().map(|(i, &e)| (e, i)).collect();
    let n = nodes.len();
    let mut succ = vec![Vec::new(); n];
    for (i, &a) in nodes.iter().enumerate() {
        for (j, &b) in nodes.iter().enumerate() {
            if program.ps(a, b) {
                succ[i].push(j);
            }
        }
    }
    for (&r, &w) in pos {
        succ[index[&w]].push(index[&r]);
    }
    is_dag(&succ)
}

/// Cycle detection by iterative three-colour DFS.
pub(crate) fn is_dag(succ: &[Vec<usize>]) -> bool {
    let n = succ.len();
    let mut colour = vec![0u8; n];
    for s in 0..n {
        if colour[s] != 0 {
            continue;
        }
        let mut stack = vec![(s, 0usize)];
        colour[s] = 1;
        while let Some(&mut (u, ref mut k)) = stack.last_mut() {
            if *k < succ[u].len() {
                let v = succ[u][*k];
                *k += 1;
                match colour[v] {
                    0 => {
                        colour[v] = 1;
                        stack.push((v, 0));
                    }
                    1 => return false,
                    _ => {}
                }
            } else {
                colour[u] = 2;
                stack.pop();
            }
        }
    }
    true
}

/// Per-process sequential traces realizing the local part of an annotation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Basis {
    /// One sequential trace per process, invisible events included.
    pub seqs: Vec<Vec<Entry>>,
    /// Values of every visible basis event (locks carry none).
    pub values: BTreeMap<EventId, i64>,
    entries: HashMap<EventId, Entry>,
}

impl Basis {
    pub fn entry(&self, e: EventId) -> Option<&Entry> {
        self.entries.get(&e)
    }

    pub fn contains(&self, e: EventId) -> bool {
        self.entries.contains_key(&e)
    }

    /// Visible basis events, process by process in local order.
    pub fn visible(&self, program: &Program) -> Vec<EventId> {
        self.seqs
            .iter()
            .flatten()
            .map(|x| x.event)
            .filter(|&e| program.event(e).label.is_visible())
            .collect()
    }

    /// All basis events, invisible included.
    pub fn events(&self) -> impl Iterator<Item = EventId> + '_ {
        self.seqs.iter().flatten().map(|x| x.event)
    }

    pub fn len(&self) -> usize {
        self.seqs.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn check_pairs(program: &Program, pos: &PositiveAnnotation) -> Result<(), NotWellFormed> {
    let mut observers: HashMap<EventId, usize> = HashMap::new();
    for (&r, &w) in pos {
        let (lr, lw) = (&program.event(r).label, &program.event(w).label);
        let same_target = lr.is_read() && lw.is_write() && lr.target() == lw.target();
        let kinds_match = matches!(
            (lr, lw),
            (EventLabel::Read { .. }, EventLabel::Write { .. })
                | (EventLabel::Read { .. }, EventLabel::Init(Target::Var(_)))
                | (EventLabel::Acquire(_), EventLabel::Release(_))
                | (EventLabel::Acquire(_), EventLabel::Init(Target::Lock(_)))
        );
        if !same_target || !kinds_match || program.is_init(r) {
            return Err(NotWellFormed::NotConflicting { r, w });
        }
        if program.ps(r, w) {
            return Err(NotWellFormed::ReadBeforeWrite { r, w });
        }
        if matches!(lr, EventLabel::Acquire(_)) {
            let c = observers.entry(w).or_default();
            *c += 1;
            if *c > 1 {
                return Err(NotWellFormed::SharedRelease(w));
            }
        }
    }
    Ok(())
}

/// Unique program-structure maximum of the annotated events of each process.
fn targets(
    program: &Program,
    pos: &PositiveAnnotation,
) -> Result<Vec<Option<EventId>>, NotWellFormed> {
    let mut per: Vec<Vec<EventId>> = vec![Vec::new(); program.processes.len()];
    for e in pos
        .iter()
        .flat_map(|(&r, &w)| [r, w])
        .collect::<BTreeSet<_>>()
    {
        if let Some(p) = program.proc_of(e) {
            per[p.index()].push(e);
        }
    }
    per.iter()
        .enumerate()
        .map(|(p, xs)| {
            let max = xs
                .iter()
                .copied()
                .find(|&m| xs.iter().all(|&x| x == m || program.ps(x, m)));
            match (xs.is_empty(), max) {
                (true, _) => Ok(None),
                (false, Some(m)) => Ok(Some(m)),
                (false, None) => Err(NotWellFormed::NoUniqueMaximum(p as u32)),
            }
        })
        .collect()
}

struct Local {
    p: ProcId,
    node: crate::model::NodeId,
    locals: Vec<i64>,
    seq: Vec<Entry>,
    done: bool,
}

/// Value written by `w` as seen by a read at `loc`, if already known.
fn write_value(
    program: &Program,
    w: EventId,
    loc: ResolvedLoc,
    values: &BTreeMap<EventId, i64>,
) -> Option<i64> {
    match program.event(w).label {
        EventLabel::Init(Target::Var(v)) => Some(program.initial_value(v, loc.cell)),
        _ => values.get(&w).copied(),
    }
}

/// Computes the basis of `pos` by interleaved local replay, or reports why
/// the annotation is not well-formed.
///
/// Each process runs from its root until it executes the program-structure
/// maximum of its annotated events. Annotated reads take the value of their
/// write and wait until that value is known.
pub fn compute_basis(program: &Program, pos: &PositiveAnnotation) -> Result<Basis, NotWellFormed> {
    check_pairs(program, pos)?;
    if !annotation_order_acyclic(program, pos) {
        return Err(NotWellFormed::Cyclic);
    }
    let targets = targets(program, pos)?;
    let mut procs: Vec<Local> = program
        .processes
        .iter()
        .enumerate()
        .map(|(p, proc)| Local {
            p: ProcId(p as u32),
            node: proc.cfg.root,
            locals: proc.locals.iter().map(|l| l.init).collect(),
            seq: Vec::new(),
            done: targets[p].is_none(),
        })
        .collect();
    let mut values: BTreeMap<EventId, i64> = BTreeMap::new();
    let mut locs: HashMap<EventId, ResolvedLoc> = HashMap::new();
    loop {
        let mut progress = false;
        let mut all_done = true;
        for lp in procs.iter_mut() {
            if lp.done {
                continue;
            }
            let target = targets[lp.p.index()].unwrap();
            while !lp.done {
                match advance(program, pos, lp, target, &mut values, &mut locs)? {
                    true => progress = true,
                    false => break,
                }
            }
            all_done &= lp.done;
        }
        if all_done {
            break;
        }
        if !progress {
            return Err(NotWellFormed::Stalled);
        }
    }

    let mut entries = HashMap::new();
    for lp in &procs {
        let mut held: BTreeSet<crate::model::LockId> = BTreeSet::new();
        for x in &lp.seq {
            entries.insert(x.event, *x);
            match program.event(x.event).label {
                EventLabel::Read { .. } if !pos.contains_key(&x.event) => {
                    return Err(NotWellFormed::UnannotatedRead(x.event))
                }
                EventLabel::Acquire(l) => {
                    if !pos.contains_key(&x.event) {
                        return Err(NotWellFormed::UnannotatedRead(x.event));
                    }
                    if !held.insert(l) {
                        return Err(NotWellFormed::DoubleAcquire(lp.p.0));
                    }
                }
                EventLabel::Release(l) => {
                    held.remove(&l);
                }
                _ => {}
            }
        }
    }
    for (&r, &w) in pos {
        if !entries.contains_key(&r) {
            return Err(NotWellFormed::Missing(r));
        }
        if !program.is_init(w) && !entries.contains_key(&w) {
            return Err(NotWellFormed::Missing(w));
        }
    }
    Ok(Basis {
        seqs: procs.into_iter().map(|lp| lp.seq).collect(),
        values,
        entries,
    })
}

/// Executes one local step; `false` when waiting on an unknown value.
fn advance(
    program: &Program,
    pos: &PositiveAnnotation,
    lp: &mut Local,
    target: EventId,
    values: &mut BTreeMap<EventId, i64>,
    locs: &mut HashMap<EventId, ResolvedLoc>,
) -> Result<bool, NotWellFormed> {
    let cfg = &program.processes[lp.p.index()].cfg;
    let out = &cfg.out[lp.node.index()];
    let diverged = NotWellFormed::Diverged(lp.p.0);
    let e = match out.as_slice() {
        [] => return Err(diverged),
        [e] if !matches!(program.event(*e).label, EventLabel::Branch(_)) => *e,
        _ => {
            let mut taken = out.iter().filter(|&&e| match &program.event(e).label {
                EventLabel::Branch(g) => g.holds(&lp.locals),
                _ => false,
            });
            match (taken.next(), taken.next()) {
                (Some(&e), None) => e,
                (None, _) => return Err(diverged),
                (Some(_), Some(_)) => {
                    return Err(ExecError::AmbiguousBranch(lp.p.0).into());
                }
            }
        }
    };
    if e != target && !program.ps(e, target) {
        return Err(diverged);
    }
    let ev = program.event(e);
    let loc = resolve(program, e, &lp.locals)?;
    let mut value = None;
    match &ev.label {
        EventLabel::Read { target: v, .. } => {
            let loc = loc.unwrap();
            let Some(&w) = pos.get(&e) else {
                return Err(NotWellFormed::UnannotatedRead(e));
            };
            if let Some(wl) = write_location(program, w, locs) {
                if !wl.overlaps(&loc) {
                    return Err(NotWellFormed::NotConflicting { r: e, w });
                }
            }
            match write_value(program, w, loc, values) {
                Some(val) => {
                    lp.locals[v.index()] = val;
                    value = Some(val);
                    values.insert(e, val);
                }
                None => return Ok(false),
            }
        }
        EventLabel::Write { value: f, .. } => {
            let val = f.eval(&lp.locals);
            value = Some(val);
            values.insert(e, val);
        }
        EventLabel::Assign {
            target: v,
            value: f,
        } => {
            let val = f.eval(&lp.locals);
            lp.locals[v.index()] = val;
            value = Some(val);
        }
        EventLabel::Acquire(_) if !pos.contains_key(&e) => {
            return Err(NotWellFormed::UnannotatedRead(e));
        }
        _ => {}
    }
    if let Some(l) = loc {
        locs.insert(e, l);
        if ev.label.is_write() {
            for (&r, &w) in pos {
                if w == e {
                    if let Some(rl) = locs.get(&r) {
                        if !rl.overlaps(&l) {
                            return Err(NotWellFormed::NotConflicting { r, w });
                        }
                    }
                }
            }
        }
    }
    lp.seq.push(Entry {
        event: e,
        loc,
        value,
    });
    lp.node = ev.edge.unwrap().1;
    if e == target {
        lp.done = true;
    }
    Ok(true)
}

fn write_location(
    program: &Program,
    w: EventId,
    locs: &HashMap<EventId, ResolvedLoc>,
) -> Option<ResolvedLoc> {
    match program.event(w).label {
        EventLabel::Init(t) => Some(ResolvedLoc {
            target: t,
            cell: None,
        }),
        _ => locs.get(&w).copied(),
    }
}

/// The annotation value function on `dom ∪ img`, taken from the basis
/// replay.
pub fn value_function(
    program: &Program,
    pos: &PositiveAnnotation,
) -> Result<BTreeMap<EventId, i64>, NotWellFormed> {
    let basis = compute_basis(program, pos)?;
    let mut out = BTreeMap::new();
    for (&r, &w) in pos {
        let rl = basis.entry(r).and_then(|x| x.loc);
        if let Some(v) = basis.values.get(&r) {
            out.insert(r, *v);
        }
        let wv = match (&program.event(w).label, rl) {
            (EventLabel::Init(Target::Var(v)), Some(l)) => Some(program.initial_value(*v, l.cell)),
            _ => basis.values.get(&w).copied(),
        };
        if let Some(v) = wv {
            out.insert(w, v);
        }
    }
    Ok(out)
}

/// Whether the visible non-initialization events of `trace` are exactly
/// the visible events of the basis.
pub fn star_membership(program: &Program, trace: &Trace, basis: &Basis) -> bool {
    let mut a: Vec<EventId> = trace
        .events()
        .filter(|&e| program.event(e).label.is_visible() && !program.is_init(e))
        .collect();
    let mut b = basis.visible(program);
    a.sort();
    b.sort();
    a == b
}

#[cfg(test)]
mod tests;
