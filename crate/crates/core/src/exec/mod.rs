//! Sequentially consistent interpreter: global states, enabled events,
//! traces, observation functions, and happens-before.
//!
//! Invisible events (branches and local assignments) run eagerly: right
//! after a visible event of their process, and for every process once the
//! initialization writes are done. Traces store them, but they never enter
//! observation functions, conflicts, or happens-before.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write;

use fixedbitset::FixedBitSet;
use thiserror::Error;

use crate::model::{
    EventId, EventLabel, LocationExpr, NodeId, ProcId, Program, ResolvedLoc, Target,
};

/// Maximum number of events in one trace.
pub const STEP_CAP: usize = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExecError {
    #[error("event {event} at position {index} is not enabled")]
    NotEnabled { index: usize, event: EventId },
    #[error("event {event}: index {index} out of bounds")]
    OutOfBounds { event: EventId, index: i64 },
    #[error("process p{0}: more than one branch guard holds")]
    AmbiguousBranch(u32),
    #[error("trace exceeds {STEP_CAP} events")]
    StepCap,
}

/// Valuation of globals, lock flags, and per-process control and locals.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GlobalState {
    pub mem: Vec<i64>,
    pub held: Vec<bool>,
    pub pc: Vec<NodeId>,
    pub locals: Vec<Vec<i64>>,
    /// Number of initialization writes already executed.
    pub init_done: usize,
}

pub fn initial_state(program: &Program) -> GlobalState {
    GlobalState {
        mem: program
            .globals
            .iter()
            .flat_map(|g| g.init.iter().copied())
            .collect(),
        held: vec![false; program.locks.len()],
        pc: program.processes.iter().map(|p| p.cfg.root).collect(),
        locals: program
            .processes
            .iter()
            .map(|p| p.locals.iter().map(|l| l.init).collect())
            .collect(),
        init_done: 0,
    }
}

/// One executed event with its resolved location and value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Entry {
    pub event: EventId,
    pub loc: Option<ResolvedLoc>,
    pub value: Option<i64>,
}

fn resolve_loc(
    program: &Program,
    event: EventId,
    loc: &LocationExpr,
    locals: &[i64],
) -> Result<ResolvedLoc, ExecError> {
    let cell = match &loc.index {
        None => None,
        Some(i) => {
            let idx = i.eval(locals);
            let size = program.globals[loc.var.index()].size.unwrap_or(1) as i64;
            if idx < 0 || idx >= size {
                return Err(ExecError::OutOfBounds { event, index: idx });
            }
            Some(idx as u32)
        }
    };
    Ok(ResolvedLoc {
        target: Target::Var(loc.var),
        cell,
    })
}

/// The location `e` accesses when executed from process-local valuation
/// `locals`.
pub fn resolve(
    program: &Program,
    e: EventId,
    locals: &[i64],
) -> Result<Option<ResolvedLoc>, ExecError> {
    Ok(match &program.event(e).label {
        EventLabel::Read { loc, .. } | EventLabel::Write { loc, .. } => {
            Some(resolve_loc(program, e, loc, locals)?)
        }
        EventLabel::Acquire(l) | EventLabel::Release(l) => Some(ResolvedLoc {
            target: Target::Lock(*l),
            cell: None,
        }),
        EventLabel::Init(t) => Some(ResolvedLoc {
            target: *t,
            cell: None,
        }),
        EventLabel::Branch(_) | EventLabel::Assign { .. } => None,
    })
}

impl GlobalState {
    /// The next event of `p` if it is a visible event that can execute now.
    pub fn next_visible(&self, program: &Program, p: ProcId) -> Option<EventId> {
        if self.init_done < program.init_events.len() {
            return None;
        }
        let out = &program.processes[p.index()].cfg.out[self.pc[p.index()].index()];
        if out.len() != 1 {
            return None;
        }
        let e = out[0];
        match program.event(e).label {
            EventLabel::Acquire(l) if self.held[l.index()] => None,
            EventLabel::Branch(_) | EventLabel::Assign { .. } => None,
            _ => Some(e),
        }
    }

    /// The next event of `p`, enabled or not, if it is visible.
    pub fn pending_visible(&self, program: &Program, p: ProcId) -> Option<EventId> {
        let out = &program.processes[p.index()].cfg.out[self.pc[p.index()].index()];
        match out.as_slice() {
            [e] if program.event(*e).label.is_visible() => Some(*e),
            _ => None,
        }
    }

    /// Enabled visible events; during initialization only the next
    /// initialization write.
    pub fn enabled(&self, program: &Program) -> Vec<EventId> {
        if self.init_done < program.init_events.len() {
            return vec![program.init_events[self.init_done]];
        }
        (0..program.processes.len())
            .filter_map(|p| self.next_visible(program, ProcId(p as u32)))
            .collect()
    }

    pub fn is_enabled(&self, program: &Program, e: EventId) -> bool {
        match program.proc_of(e) {
            None => {
                self.init_done < program.init_events.len()
                    && program.init_events[self.init_done] == e
            }
            Some(p) => self.next_visible(program, p) == Some(e),
        }
    }

    /// Executes one enabled visible event and then the invisible events it
    /// unlocks, appending everything executed to `out`.
    pub fn step(
        &mut self,
        program: &Program,
        e: EventId,
        out: &mut Vec<Entry>,
    ) -> Result<(), ExecError> {
        let entry = self.exec_visible(program, e)?;
        out.push(entry);
        match program.proc_of(e) {
            None => {
                self.init_done += 1;
                if self.init_done == program.init_events.len() {
                    for p in 0..program.processes.len() {
                        self.run_invisible(program, ProcId(p as u32), out)?;
                    }
                }
            }
            Some(p) => self.run_invisible(program, p, out)?,
        }
        Ok(())
    }

    fn exec_visible(&mut self, program: &Program, e: EventId) -> Result<Entry, ExecError> {
        let ev = program.event(e);
        let mut entry = Entry {
            event: e,
            loc: None,
            value: None,
        };
        if let EventLabel::Init(t) = &ev.label {
            entry.loc = Some(ResolvedLoc {
                target: *t,
                cell: None,
            });
            match t {
                Target::Var(v) => {
                    let g = &program.globals[v.index()];
                    let base = program.cell_index(*v, None);
                    self.mem[base..base + g.init.len()].copy_from_slice(&g.init);
                    entry.value = Some(g.init[0]);
                }
                Target::Lock(l) => self.held[l.index()] = false,
            }
            return Ok(entry);
        }
        let p = ev.proc.unwrap().index();
        match &ev.label {
            EventLabel::Read { target, loc } => {
                let r = resolve_loc(program, e, loc, &self.locals[p])?;
                let Target::Var(v) = r.target else {
                    unreachable!()
                };
                let val = self.mem[program.cell_index(v, r.cell)];
                self.locals[p][target.index()] = val;
                entry.loc = Some(r);
                entry.value = Some(val);
            }
            EventLabel::Write { loc, value } => {
                let r = resolve_loc(program, e, loc, &self.locals[p])?;
                let val = value.eval(&self.locals[p]);
                self.mem[program.cell_index(loc.var, r.cell)] = val;
                entry.loc = Some(r);
                entry.value = Some(val);
            }
            EventLabel::Acquire(l) => {
                debug_assert!(!self.held[l.index()]);
                self.held[l.index()] = true;
                entry.loc = Some(ResolvedLoc {
                    target: Target::Lock(*l),
                    cell: None,
                });
            }
            EventLabel::Release(l) => {
                self.held[l.index()] = false;
                entry.loc = Some(ResolvedLoc {
                    target: Target::Lock(*l),
                    cell: None,
                });
            }
            _ => unreachable!("invisible events run through run_invisible"),
        }
        self.pc[p] = ev.edge.unwrap().1;
        Ok(entry)
    }

    fn run_invisible(
        &mut self,
        program: &Program,
        p: ProcId,
        out: &mut Vec<Entry>,
    ) -> Result<(), ExecError> {
        let cfg = &program.processes[p.index()].cfg;
        loop {
            let edges = &cfg.out[self.pc[p.index()].index()];
            let Some(&first) = edges.first() else {
                return Ok(());
            };
            match &program.event(first).label {
                EventLabel::Assign { target, value } => {
                    let val = value.eval(&self.locals[p.index()]);
                    self.locals[p.index()][target.index()] = val;
                    self.pc[p.index()] = program.event(first).edge.unwrap().1;
                    out.push(Entry {
                        event: first,
                        loc: None,
                        value: Some(val),
                    });
                }
                EventLabel::Branch(_) => {
                    let locals = &self.locals[p.index()];
                    let mut taken = edges.iter().filter(|&&e| match &program.event(e).label {
                        EventLabel::Branch(g) => g.holds(locals),
                        _ => false,
                    });
                    let Some(&e) = taken.next() else {
                        return Ok(());
                    };
                    if taken.next().is_some() {
                        return Err(ExecError::AmbiguousBranch(p.0));
                    }
                    self.pc[p.index()] = program.event(e).edge.unwrap().1;
                    out.push(Entry {
                        event: e,
                        loc: None,
                        value: None,
                    });
                }
                _ => return Ok(()),
            }
        }
    }
}

/// A feasible execution from the initial state.
#[derive(Clone, Debug)]
pub struct Trace {
    entries: Vec<Entry>,
    pos: Vec<u32>,
    state: GlobalState,
}

const ABSENT: u32 = u32::MAX;

impl PartialEq for Trace {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl Eq for Trace {}

impl Trace {
    pub fn empty(program: &Program) -> Trace {
        Trace {
            entries: Vec::new(),
            pos: vec![ABSENT; program.event_count()],
            state: initial_state(program),
        }
    }

    /// Executes an enabled visible event.
    pub fn push(&mut self, program: &Program, e: EventId) -> Result<(), ExecError> {
        if !self.state.is_enabled(program, e) {
            return Err(ExecError::NotEnabled {
                index: self.entries.len(),
                event: e,
            });
        }
        if self.entries.len() >= STEP_CAP {
            return Err(ExecError::StepCap);
        }
        let start = self.entries.len();
        self.state.step(program, e, &mut self.entries)?;
        for i in start..self.entries.len() {
            self.pos[self.entries[i].event.index()] = i as u32;
        }
        Ok(())
    }

    /// Drops entries from position `len` on, restoring a saved state.
    pub fn truncate(&mut self, len: usize, state: GlobalState) {
        for entry in &self.entries[len..] {
            self.pos[entry.event.index()] = ABSENT;
        }
        self.entries.truncate(len);
        self.state = state;
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn state(&self) -> &GlobalState {
        &self.state
    }

    pub fn contains(&self, e: EventId) -> bool {
        self.pos[e.index()] != ABSENT
    }

    /// Position of `e` in the trace.
    pub fn position(&self, e: EventId) -> Option<usize> {
        match self.pos[e.index()] {
            ABSENT => None,
            p => Some(p as usize),
        }
    }

    pub fn entry(&self, e: EventId) -> Option<&Entry> {
        self.position(e).map(|p| &self.entries[p])
    }

    pub fn events(&self) -> impl Iterator<Item = EventId> + '_ {
        self.entries.iter().map(|x| x.event)
    }

    /// Visible events in order.
    pub fn global_projection<'a>(&'a self, program: &'a Program) -> Vec<EventId> {
        self.events()
            .filter(|&e| program.event(e).label.is_visible())
            .collect()
    }

    pub fn enabled(&self, program: &Program) -> Vec<EventId> {
        self.state.enabled(program)
    }

    pub fn is_maximal(&self, program: &Program) -> bool {
        self.state.enabled(program).is_empty()
    }

    pub fn is_lock_free(&self) -> bool {
        self.state.held.iter().all(|h| !h)
    }

    /// Assertion ids whose failure branch occurs in the trace.
    pub fn violations(&self, program: &Program) -> Vec<u32> {
        self.events()
            .filter_map(|e| program.event(e).violation)
            .collect()
    }

    /// Projection on a set of events, in trace order.
    pub fn project(&self, keep: &BTreeSet<EventId>) -> Vec<EventId> {
        self.events().filter(|e| keep.contains(e)).collect()
    }

    /// The observation function: each read (or acquire) maps to the last
    /// earlier write (or release, or initialization) to an overlapping
    /// location.
    pub fn observation(&self, program: &Program) -> BTreeMap<EventId, EventId> {
        let mut last: HashMap<(Target, Option<u32>), EventId> = HashMap::new();
        let mut out = BTreeMap::new();
        for entry in &self.entries {
            let label = &program.event(entry.event).label;
            let Some(loc) = entry.loc else { continue };
            if label.is_write() {
                last.insert((loc.target, loc.cell), entry.event);
            } else if label.is_read() {
                let w = last
                    .get(&(loc.target, loc.cell))
                    .or_else(|| last.get(&(loc.target, None)))
                    .expect("initialization writes precede every read");
                out.insert(entry.event, *w);
            }
        }
        out
    }

    /// Whether two events of the trace conflict at their resolved locations.
    pub fn conflicting(&self, program: &Program, a: EventId, b: EventId) -> bool {
        match (self.entry(a), self.entry(b)) {
            (Some(x), Some(y)) => match (x.loc, y.loc) {
                (Some(la), Some(lb)) => program.conflicting(a, b, la, lb).unwrap_or(false),
                _ => false,
            },
            _ => false,
        }
    }

    /// Key identifying the Mazurkiewicz class: the visible event set and the
    /// orientation of every cross-process conflicting pair.
    pub fn mazurkiewicz_key(&self, program: &Program) -> MazKey {
        let vis: Vec<&Entry> = self
            .entries
            .iter()
            .filter(|x| x.loc.is_some() && !program.is_init(x.event))
            .collect();
        let mut events: Vec<EventId> = vis.iter().map(|x| x.event).collect();
        let mut pairs = Vec::new();
        for (i, a) in vis.iter().enumerate() {
            for b in &vis[i + 1..] {
                if program.proc_of(a.event) != program.proc_of(b.event)
                    && program
                        .conflicting(a.event, b.event, a.loc.unwrap(), b.loc.unwrap())
                        .unwrap_or(false)
                {
                    pairs.push((a.event, b.event));
                }
            }
        }
        events.sort();
        pairs.sort();
        MazKey { events, pairs }
    }

    /// Key identifying the observation class: visible event set and
    /// observation function.
    pub fn observation_key(&self, program: &Program) -> ObsKey {
        let mut events: Vec<EventId> = self
            .entries
            .iter()
            .filter(|x| x.loc.is_some())
            .map(|x| x.event)
            .collect();
        events.sort();
        ObsKey {
            events,
            obs: self.observation(program).into_iter().collect(),
            order: Vec::new(),
        }
    }

    /// Observation key refined by an edge set: additionally records the
    /// order of every pair of same-location writes issued by the two
    /// endpoints of an edge in `x`, on variables in that edge's `labels`.
    pub fn refined_observation_key(
        &self,
        program: &Program,
        x: &BTreeSet<(ProcId, ProcId)>,
        labels: &BTreeMap<(ProcId, ProcId), BTreeSet<Target>>,
    ) -> ObsKey {
        let mut key = self.observation_key(program);
        let writes: Vec<&Entry> = self
            .entries
            .iter()
            .filter(|x| {
                !program.is_init(x.event)
                    && matches!(program.event(x.event).label, EventLabel::Write { .. })
            })
            .collect();
        let mut order = BTreeSet::new();
        for edge in x {
            let Some(label) = labels.get(edge) else {
                continue;
            };
            let ends = [Some(edge.0), Some(edge.1)];
            let mine: Vec<&&Entry> = writes
                .iter()
                .filter(|w| {
                    ends.contains(&program.proc_of(w.event))
                        && label.contains(&w.loc.unwrap().target)
                })
                .collect();
            for (i, a) in mine.iter().enumerate() {
                for b in &mine[i + 1..] {
                    if a.loc.unwrap().overlaps(&b.loc.unwrap()) {
                        order.insert((a.event, b.event));
                    }
                }
            }
        }
        key.order = order.into_iter().collect();
        key
    }

    /// The trace cut after its first `len` entries.
    pub fn prefix(&self, program: &Program, len: usize) -> Trace {
        let seq: Vec<EventId> = self.entries[..len].iter().map(|x| x.event).collect();
        replay(program, &seq).expect("a prefix of a trace is a trace")
    }

    /// One event per line: `idx proc event kind loc value`.
    pub fn dump(&self, program: &Program) -> String {
        let mut s = String::new();
        for (i, x) in self.entries.iter().enumerate() {
            let ev = program.event(x.event);
            let proc = ev
                .proc
                .map(|p| program.processes[p.index()].name.clone())
                .unwrap_or_else(|| "init".into());
            let loc = match x.loc {
                None => "-".to_string(),
                Some(l) => match l.cell {
                    Some(c) => format!("{}[{c}]", program.target_name(l.target)),
                    None => program.target_name(l.target).to_string(),
                },
            };
            let value = x.value.map(|v| v.to_string()).unwrap_or_else(|| "-".into());
            writeln!(
                s,
                "{i} {proc} {} {} {loc} {value}",
                x.event,
                ev.label.kind()
            )
            .unwrap();
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MazKey {
    pub events: Vec<EventId>,
    pub pairs: Vec<(EventId, EventId)>,
}

/// Observation-class key. `order` lists extra write-order pairs when the
/// equivalence is refined by an edge set.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ObsKey {
    pub events: Vec<EventId>,
    pub obs: Vec<(EventId, EventId)>,
    pub order: Vec<(EventId, EventId)>,
}

/// Replays a sequence of events. Invisible events in the sequence are
/// accepted if they already ran eagerly.
pub fn replay(program: &Program, seq: &[EventId]) -> Result<Trace, ExecError> {
    let mut t = Trace::empty(program);
    for (i, &e) in seq.iter().enumerate() {
        if !program.event(e).label.is_visible() {
            if t.contains(e) {
                continue;
            }
            return Err(ExecError::NotEnabled { index: i, event: e });
        }
        t.push(program, e).map_err(|err| match err {
            ExecError::NotEnabled { event, .. } => ExecError::NotEnabled { index: i, event },
            other => other,
        })?;
    }
    Ok(t)
}

/// Extends a trace until nothing is enabled, always running the enabled
/// event of the lowest process.
pub fn maximal_extension(program: &Program, trace: &Trace) -> Result<Trace, ExecError> {
    let mut t = trace.clone();
    while let Some(&e) = t.enabled(program).first() {
        t.push(program, e)?;
    }
    Ok(t)
}

/// Strict happens-before over the visible events of a trace.
#[derive(Clone, Debug)]
pub struct HappensBefore {
    pub order: Vec<EventId>,
    index: HashMap<EventId, usize>,
    before: Vec<FixedBitSet>,
}

impl HappensBefore {
    pub fn ordered(&self, a: EventId, b: EventId) -> bool {
        match (self.index.get(&a), self.index.get(&b)) {
            (Some(&i), Some(&j)) => self.before[j].contains(i),
            _ => false,
        }
    }

    /// All ordered pairs.
    pub fn pairs(&self) -> BTreeSet<(EventId, EventId)> {
        let mut out = BTreeSet::new();
        for (j, set) in self.before.iter().enumerate() {
            for i in set.ones() {
                out.insert((self.order[i], self.order[j]));
            }
        }
        out
    }
}

/// The smallest transitive relation ordering same-process pairs and
/// conflicting pairs as they occur. Initialization writes count as events
/// of the first process.
pub fn happens_before(program: &Program, trace: &Trace) -> HappensBefore {
    let vis: Vec<&Entry> = trace.entries().iter().filter(|x| x.loc.is_some()).collect();
    let n = vis.len();
    let proc = |e: EventId| program.proc_of(e).unwrap_or(ProcId(0));
    let mut before = vec![FixedBitSet::with_capacity(n); n];
    for j in 0..n {
        let mut acc = FixedBitSet::with_capacity(n);
        for i in 0..j {
            let (a, b) = (vis[i], vis[j]);
            let dependent = proc(a.event) == proc(b.event)
                || program
                    .conflicting(a.event, b.event, a.loc.unwrap(), b.loc.unwrap())
                    .unwrap_or(false);
            if dependent && !acc.contains(i) {
                acc.insert(i);
                acc.union_with(&before[i]);
            }
        }
        before[j] = acc;
    }
    let order: Vec<EventId> = vis.iter().map(|x| x.event).collect();
    let index = order.iter().enumerate().map(|(i, &e)| (e, i)).collect();
    HappensBefore {
        order,
        index,
        before,
    }
}
