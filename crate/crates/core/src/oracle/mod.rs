//! Reference explorers: exhaustive enumeration of maximal traces, class
//! partitions under the trace equivalences, and a sleep-set DPOR baseline.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::ControlFlow;
use std::time::{Duration, Instant};

use log::info;

use crate::annot::PositiveAnnotation;
use crate::exec::{resolve, ExecError, MazKey, ObsKey, Trace};
use crate::explore::ExplorationReport;
use crate::model::graph::EdgeSet;
use crate::model::{EventId, EventLabel, ProcId, Program, ResolvedLoc, Target};

/// Default bound on the number of maximal traces an oracle visits.
pub const DEFAULT_CAP: u64 = 2_000_000;

/// Bounds for the baseline explorers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Limits {
    /// Maximal traces to visit.
    pub traces: u64,
    pub time: Option<Duration>,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            traces: DEFAULT_CAP,
            time: None,
        }
    }
}

impl Limits {
    pub fn traces(traces: u64) -> Self {
        Limits { traces, time: None }
    }
}

/// Outcome of a bounded enumeration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Enumeration {
    pub traces: u64,
    /// False when the cap stopped the enumeration.
    pub complete: bool,
}

/// Visits every maximal trace extending `prefix`, depth first with the
/// lowest process first, stopping after `cap` traces.
pub fn for_each_maximal_trace<F: FnMut(&Trace)>(
    program: &Program,
    prefix: &Trace,
    cap: u64,
    mut visit: F,
) -> Result<Enumeration, ExecError> {
    try_for_each_maximal_trace(program, prefix, cap, |t| {
        visit(t);
        ControlFlow::Continue(())
    })
}

/// [`for_each_maximal_trace`] with a visitor that can stop the enumeration,
/// which then counts as incomplete.
pub fn try_for_each_maximal_trace<F: FnMut(&Trace) -> ControlFlow<()>>(
    program: &Program,
    prefix: &Trace,
    cap: u64,
    mut visit: F,
) -> Result<Enumeration, ExecError> {
    let mut out = Enumeration {
        traces: 0,
        complete: true,
    };
    let mut t = prefix.clone();
    dfs(program, &mut t, cap, &mut out, &mut visit)?;
    Ok(out)
}

fn dfs<F: FnMut(&Trace) -> ControlFlow<()>>(
    program: &Program,
    t: &mut Trace,
    cap: u64,
    out: &mut Enumeration,
    visit: &mut F,
) -> Result<(), ExecError> {
    let enabled = t.enabled(program);
    if enabled.is_empty() {
        out.traces += 1;
        if visit(t).is_break() {
            out.complete = false;
        }
        return Ok(());
    }
    for e in enabled {
        if out.traces >= cap || !out.complete {
            out.complete = false;
            return Ok(());
        }
        let (len, state) = (t.len(), t.state().clone());
        t.push(program, e)?;
        dfs(program, t, cap, out, visit)?;
        t.truncate(len, state);
    }
    Ok(())
}

/// All maximal traces of the program, or `None` past `cap`.
pub fn enumerate_maximal_traces(
    program: &Program,
    cap: u64,
) -> Result<Option<Vec<Trace>>, ExecError> {
    let mut all = Vec::new();
    let e = for_each_maximal_trace(program, &Trace::empty(program), cap, |t| {
        all.push(t.clone())
    })?;
    Ok(e.complete.then_some(all))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Equivalence {
    Mazurkiewicz,
    Observation,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClassKey {
    Maz(MazKey),
    Obs(ObsKey),
}

/// Members of one class together with its first trace.
#[derive(Clone, Debug)]
pub struct Class {
    pub members: u64,
    pub representative: Trace,
}

#[derive(Clone, Debug)]
pub struct Partition {
    pub traces: u64,
    pub complete: bool,
    pub classes: BTreeMap<ClassKey, Class>,
}

impl Partition {
    fn new() -> Self {
        Partition {
            traces: 0,
            complete: true,
            classes: BTreeMap::new(),
        }
    }

    fn add(&mut self, key: ClassKey, t: &Trace) {
        self.classes
            .entry(key)
            .and_modify(|c| c.members += 1)
            .or_insert_with(|| Class {
                members: 1,
                representative: t.clone(),
            });
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }
}

pub fn class_key(program: &Program, t: &Trace, eq: Equivalence) -> ClassKey {
    match eq {
        Equivalence::Mazurkiewicz => ClassKey::Maz(t.mazurkiewicz_key(program)),
        Equivalence::Observation => ClassKey::Obs(t.observation_key(program)),
    }
}

/// Partitions all maximal traces by an equivalence.
pub fn partition(program: &Program, eq: Equivalence, cap: u64) -> Result<Partition, ExecError> {
    let mut part = Partition::new();
    let e = for_each_maximal_trace(program, &Trace::empty(program), cap, |t| {
        part.add(class_key(program, t, eq), t)
    })?;
    part.traces = e.traces;
    part.complete = e.complete;
    Ok(part)
}

/// Partitions the maximal traces of a reduced program by the observation
/// equivalence refined by the edge set `x` with edge labels `labels`.
pub fn partition_refined(
    program: &Program,
    x: &EdgeSet,
    labels: &BTreeMap<(ProcId, ProcId), BTreeSet<Target>>,
    cap: u64,
) -> Result<Partition, ExecError> {
    let mut part = Partition::new();
    let e = for_each_maximal_trace(program, &Trace::empty(program), cap, |t| {
        part.add(
            ClassKey::Obs(t.refined_observation_key(program, x, labels)),
            t,
        )
    })?;
    part.traces = e.traces;
    part.complete = e.complete;
    Ok(part)
}

/// Like [`partition_refined`], but over one representative per
/// Mazurkiewicz class from [`sleep_set_dpor_with`]. Exact, since every
/// Mazurkiewicz class lies inside one refined observation class; `traces`
/// counts representatives.
pub fn partition_refined_by_representatives(
    program: &Program,
    x: &EdgeSet,
    labels: &BTreeMap<(ProcId, ProcId), BTreeSet<Target>>,
    cap: u64,
) -> Result<Partition, ExecError> {
    let mut part = Partition::new();
    let report = sleep_set_dpor_with(program, Limits::traces(cap), |t| {
        part.add(
            ClassKey::Obs(t.refined_observation_key(program, x, labels)),
            t,
        )
    })?;
    part.traces = report.traces;
    part.complete = report.complete;
    Ok(part)
}

/// Static access of one event: target, constant cell if known, and
/// whether it counts as a write (acquires do, since they exclude each other).
#[derive(Clone, Copy, Debug)]
struct Footprint {
    target: Target,
    cell: Cell,
    write: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Cell {
    Whole,
    Const(i64),
    Unknown,
}

fn footprint(program: &Program, e: EventId) -> Option<Footprint> {
    let label = &program.event(e).label;
    let (target, cell) = match label {
        EventLabel::Read { loc, .. } | EventLabel::Write { loc, .. } => (
            Target::Var(loc.var),
            match &loc.index {
                None => Cell::Whole,
                Some(crate::model::Expr::Const(c)) => Cell::Const(*c),
                Some(_) => Cell::Unknown,
            },
        ),
        EventLabel::Acquire(l) | EventLabel::Release(l) => (Target::Lock(*l), Cell::Whole),
        _ => return None,
    };
    let write = label.is_write() || matches!(label, EventLabel::Acquire(_));
    Some(Footprint {
        target,
        cell,
        write,
    })
}

fn may_depend(a: &ResolvedLoc, a_write: bool, b: &Footprint) -> bool {
    if a.target != b.target || !(a_write || b.write) {
        return false;
    }
    match (a.cell, b.cell) {
        (Some(x), Cell::Const(y)) => x as i64 == y,
        _ => true,
    }
}

fn dependent(
    program: &Program,
    a: (EventId, Option<ResolvedLoc>),
    b: (EventId, Option<ResolvedLoc>),
) -> bool {
    if program.proc_of(a.0) == program.proc_of(b.0) {
        return true;
    }
    let (Some(la), Some(lb)) = (a.1, b.1) else {
        return false;
    };
    let both_acquire = matches!(program.event(a.0).label, EventLabel::Acquire(_))
        && matches!(program.event(b.0).label, EventLabel::Acquire(_));
    la.overlaps(&lb) && (both_acquire || program.conflicting(a.0, b.0, la, lb).unwrap_or(true))
}

struct SleepSearch<'a, F> {
    program: &'a Program,
    footprints: Vec<Option<Footprint>>,
    report: ExplorationReport,
    limits: Limits,
    start: Instant,
    classes: BTreeSet<MazKey>,
    visit: F,
}

impl<F: FnMut(&Trace)> SleepSearch<'_, F> {
    fn located(&self, t: &Trace, e: EventId) -> Result<(EventId, Option<ResolvedLoc>), ExecError> {
        let loc = match self.program.proc_of(e) {
            Some(p) => resolve(self.program, e, &t.state().locals[p.index()])?,
            None => resolve(self.program, e, &[])?,
        };
        Ok((e, loc))
    }

    /// Whether the pending event of `p` may depend on some future event of
    /// a process outside `set`.
    fn pulls(&self, t: &Trace, p: ProcId, set: &[bool]) -> Result<Vec<usize>, ExecError> {
        let Some(e) = t.state().pending_visible(self.program, p) else {
            return Ok(Vec::new());
        };
        let (_, Some(loc)) = self.located(t, e)? else {
            return Ok(Vec::new());
        };
        let label = &self.program.event(e).label;
        let write = label.is_write() || matches!(label, EventLabel::Acquire(_));
        let mut out = Vec::new();
        for (q, &inside) in set.iter().enumerate() {
            if inside {
                continue;
            }
            let hit = self
                .program
                .process_events(ProcId(q as u32))
                .iter()
                .filter(|&&f| !t.contains(f))
                .filter_map(|&f| self.footprints[f.index()].as_ref())
                .any(|fp| may_depend(&loc, write, fp));
            if hit {
                out.push(q);
            }
        }
        Ok(out)
    }

    /// Smallest persistent set among the closures of the enabled processes.
    fn persistent(&self, t: &Trace, enabled: &[EventId]) -> Result<Vec<EventId>, ExecError> {
        if enabled.len() <= 1 || enabled.iter().any(|&e| self.program.is_init(e)) {
            return Ok(enabled.to_vec());
        }
        let k = self.program.processes.len();
        let mut best: Option<Vec<EventId>> = None;
        for &start in enabled {
            let mut set = vec![false; k];
            let p0 = self.program.proc_of(start).unwrap().index();
            set[p0] = true;
            let mut work = vec![p0];
            while let Some(p) = work.pop() {
                for q in self.pulls(t, ProcId(p as u32), &set)? {
                    set[q] = true;
                    work.push(q);
                }
            }
            let chosen: Vec<EventId> = enabled
                .iter()
                .copied()
                .filter(|&e| set[self.program.proc_of(e).unwrap().index()])
                .collect();
            if best.as_ref().is_none_or(|b| chosen.len() < b.len()) {
                best = Some(chosen);
            }
        }
        Ok(best.unwrap())
    }

    fn search(
        &mut self,
        t: &mut Trace,
        sleep: Vec<(EventId, Option<ResolvedLoc>)>,
    ) -> Result<(), ExecError> {
        self.report.calls += 1;
        let enabled = t.enabled(self.program);
        if enabled.is_empty() {
            self.report.traces += 1;
            self.classes.insert(t.mazurkiewicz_key(self.program));
            self.report
                .record_violations(self.program, t, self.program.event_count());
            (self.visit)(t);
            return Ok(());
        }
        let mut sleep = sleep;
        for e in self.persistent(t, &enabled)? {
            if sleep.iter().any(|s| s.0 == e) {
                continue;
            }
            let late = self.limits.time.is_some_and(|d| self.start.elapsed() >= d);
            if self.report.traces >= self.limits.traces || late {
                self.report.complete = false;
                return Ok(());
            }
            let here = self.located(t, e)?;
            let child: Vec<_> = sleep
                .iter()
                .copied()
                .filter(|&s| !dependent(self.program, s, here))
                .collect();
            let (len, state) = (t.len(), t.state().clone());
            t.push(self.program, e)?;
            self.search(t, child)?;
            t.truncate(len, state);
            sleep.push(here);
        }
        Ok(())
    }
}

/// Sleep-set DPOR with static persistent sets. Explores at most one
/// maximal trace per Mazurkiewicz class; `visit` sees each of them.
pub fn sleep_set_dpor_with<F: FnMut(&Trace)>(
    program: &Program,
    limits: Limits,
    visit: F,
) -> Result<ExplorationReport, ExecError> {
    let start = Instant::now();
    let mut s = SleepSearch {
        program,
        footprints: (0..program.event_count())
            .map(|i| footprint(program, EventId(i as u32)))
            .collect(),
        report: ExplorationReport::new("sleep"),
        limits,
        start,
        classes: BTreeSet::new(),
        visit,
    };
    s.search(&mut Trace::empty(program), Vec::new())?;
    let mut report = s.report;
    report.classes = s.classes.len() as u64;
    report.time_ms = start.elapsed().as_millis();
    info!(
        "sleep: {} traces, {} states, {} ms",
        report.traces, report.calls, report.time_ms
    );
    Ok(report)
}

pub fn sleep_set_dpor(program: &Program, limits: Limits) -> Result<ExplorationReport, ExecError> {
    sleep_set_dpor_with(program, limits, |_| {})
}

/// Brute-force exploration summarized like the other explorers: every
/// maximal trace, classes under the observation equivalence.
pub fn brute_force(program: &Program, limits: Limits) -> Result<ExplorationReport, ExecError> {
    let start = Instant::now();
    let mut report = ExplorationReport::new("brute");
    let mut keys = BTreeSet::new();
    let e = try_for_each_maximal_trace(program, &Trace::empty(program), limits.traces, |t| {
        keys.insert(t.observation_key(program));
        report.record_violations(program, t, program.event_count());
        match limits.time {
            Some(d) if start.elapsed() >= d => ControlFlow::Break(()),
            _ => ControlFlow::Continue(()),
        }
    })?;
    report.traces = e.traces;
    report.calls = e.traces;
    report.complete = e.complete;
    report.classes = keys.len() as u64;
    report.class_keys = keys;
    report.time_ms = start.elapsed().as_millis();
    Ok(report)
}

/// Realizable positive annotations drawn from a trace: the observation
/// function of prefixes cut at `cuts` evenly spaced points and of the full
/// trace, without duplicates.
pub fn harvest_annotations(
    program: &Program,
    trace: &Trace,
    cuts: usize,
) -> Vec<PositiveAnnotation> {
    let n = trace.len();
    let mut lens: BTreeSet<usize> = (1..=cuts).map(|i| i * n / (cuts + 1)).collect();
    lens.insert(n);
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for len in lens {
        let ann = trace.prefix(program, len).observation(program);
        if seen.insert(ann.clone()) {
            out.push(ann);
        }
    }
    out
}
