//! Causal past cones and the data-centric DPOR search, for acyclic
//! architectures directly and for cyclic ones through an acyclic reduction.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::time::{Duration, Instant};

use log::{debug, info};
use serde::Serialize;
use thiserror::Error;

use crate::annot::{AnnotationPair, PositiveAnnotation};
use crate::exec::{maximal_extension, ExecError, ObsKey, Trace};
use crate::model::graph::{
    acyclic_reduction, all_but_two_cycle_set, build_communication_graph, is_acyclic, Reduction,
};
use crate::model::{EventId, EventLabel, Program};
use crate::solve::{RealizeError, RealizeMode, Realizer, Unrealizable};

/// The events whose execution can influence `e` in `t`: program-structure
/// predecessors of `e` present in `t`, closed under program structure and
/// under the observed write of every read in the set.
pub fn causal_past_cone(program: &Program, trace: &Trace, e: EventId) -> BTreeSet<EventId> {
    let obs = trace.observation(program);
    cone(program, trace, &obs, &[e])
}

fn cone(
    program: &Program,
    trace: &Trace,
    obs: &BTreeMap<EventId, EventId>,
    seeds: &[EventId],
) -> BTreeSet<EventId> {
    let k = program.processes.len();
    let mut by_proc: Vec<Vec<EventId>> = vec![Vec::new(); k];
    for x in trace.events() {
        if let Some(p) = program.proc_of(x) {
            by_proc[p.index()].push(x);
        }
    }
    // `cut[p]`: number of leading events of process p already in the cone.
    let mut cut = vec![0usize; k];
    let mut out: BTreeSet<EventId> = program.init_events.iter().copied().collect();
    let mut work: Vec<(usize, usize)> = Vec::new();
    let raise = |p: usize, upto: usize, work: &mut Vec<(usize, usize)>, cut: &mut Vec<usize>| {
        if upto > cut[p] {
            work.push((p, cut[p]));
            cut[p] = upto;
        }
    };
    for &s in seeds {
        if let Some(p) = program.proc_of(s) {
            let i = by_proc[p.index()].iter().position(|&x| x == s).unwrap_or(0);
            raise(p.index(), i, &mut work, &mut cut);
        }
    }
    while let Some((p, from)) = work.pop() {
        let upto = cut[p];
        for i in from..upto {
            let x = by_proc[p][i];
            out.insert(x);
            if let Some(&w) = obs.get(&x) {
                if let Some(q) = program.proc_of(w) {
                    let j = by_proc[q.index()].iter().position(|&y| y == w).unwrap();
                    raise(q.index(), j + 1, &mut work, &mut cut);
                }
            }
        }
    }
    out
}

/// `pos ∪ {(r, w)}` together with the observed write of every read in the
/// causal past cones of `r` and `w`. `None` if a cone read of the trace
/// would have to observe something other than what `pos` or `(r, w)` say.
pub fn burst_annotation(
    program: &Program,
    trace: &Trace,
    pos: &PositiveAnnotation,
    r: EventId,
    w: EventId,
) -> Option<PositiveAnnotation> {
    let obs = trace.observation(program);
    burst(program, trace, &obs, pos, r, w)
}

fn burst(
    program: &Program,
    trace: &Trace,
    obs: &BTreeMap<EventId, EventId>,
    pos: &PositiveAnnotation,
    r: EventId,
    w: EventId,
) -> Option<PositiveAnnotation> {
    let mut out = pos.clone();
    out.insert(r, w);
    for x in cone(program, trace, obs, &[r, w]) {
        if let Some(&o) = obs.get(&x) {
            match out.get(&x) {
                Some(&prev) if prev != o => return None,
                Some(_) => {}
                None => {
                    out.insert(x, o);
                }
            }
        }
    }
    Some(out)
}

/// Mutation candidates `(r, w)`: unannotated reads in trace order, each
/// with its conflicting writes in trace order that the negative annotation
/// allows and that do not follow the read in program structure.
pub fn candidate_mutations(
    program: &Program,
    trace: &Trace,
    annotation: &AnnotationPair,
    skip_current_observation: bool,
) -> Vec<(EventId, EventId)> {
    let obs = trace.observation(program);
    let entries = trace.entries();
    let mut out = Vec::new();
    for x in entries {
        let r = x.event;
        if !program.event(r).label.is_read() || annotation.pos.contains_key(&r) {
            continue;
        }
        for y in entries {
            let w = y.event;
            if program.event(w).label.is_write()
                && trace.conflicting(program, r, w)
                && !annotation.forbids(r, w)
                && !program.ps(r, w)
                && !(skip_current_observation && obs.get(&r) == Some(&w))
            {
                out.push((r, w));
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Acyclic,
    Cyclic,
}

#[derive(Clone, Debug, Default)]
pub struct ExploreConfig {
    pub mode: Mode,
    /// Skip mutating a read to the write it already observes.
    pub skip_current_observation: bool,
    pub max_calls: Option<u64>,
    pub time_limit: Option<Duration>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub assert_id: u32,
    /// Visible events of a trace reaching the failure branch.
    pub witness: Vec<EventId>,
}

/// Counters and results of one exploration.
#[derive(Clone, Debug, Default, Serialize)]
pub struct ExplorationReport {
    pub algo: String,
    /// Maximal traces produced.
    pub traces: u64,
    /// Distinct classes among them.
    pub classes: u64,
    /// Recursive calls (for baselines: explored states).
    pub calls: u64,
    pub realize_attempts: u64,
    pub unrealizable: u64,
    pub not_well_formed: u64,
    pub cycle_precheck: u64,
    pub unsat: u64,
    /// Candidates dropped because the burst disagreed with the annotation.
    pub burst_rejected: u64,
    /// Positive annotations seen twice; zero by compactness.
    pub duplicate_annotations: u64,
    pub violations: Vec<Violation>,
    pub time_ms: u128,
    pub complete: bool,
    #[serde(skip)]
    pub class_keys: BTreeSet<ObsKey>,
}

impl ExplorationReport {
    pub fn new(algo: &str) -> Self {
        ExplorationReport {
            algo: algo.into(),
            complete: true,
            ..Default::default()
        }
    }

    /// Records the assertion failures of a maximal trace, keeping the first
    /// witness per assertion.
    pub fn record_violations(&mut self, program: &Program, trace: &Trace, original_events: usize) {
        for id in trace.violations(program) {
            if self.violations.iter().any(|v| v.assert_id == id) {
                continue;
            }
            let witness = trace
                .global_projection(program)
                .into_iter()
                .filter(|e| e.index() < original_events)
                .collect();
            self.violations.push(Violation {
                assert_id: id,
                witness,
            });
            self.violations.sort_by_key(|v| v.assert_id);
        }
    }
}

/// Violations found during an exploration.
pub fn check_assertions(report: &ExplorationReport) -> &[Violation] {
    &report.violations
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExploreError {
    #[error("the communication graph is cyclic; use the cyclic mode")]
    CyclicArchitecture,
    #[error("interpreter error: {0}")]
    Exec(#[from] ExecError),
    #[error("{0}")]
    Realize(RealizeError),
}

enum Keyer<'a> {
    Plain,
    Refined(&'a Reduction),
}

struct Search<'a> {
    program: &'a Program,
    realizer: Realizer<'a>,
    keyer: Keyer<'a>,
    config: &'a ExploreConfig,
    report: ExplorationReport,
    seen: HashSet<PositiveAnnotation>,
    start: Instant,
    original_events: usize,
}

impl Search<'_> {
    fn out_of_budget(&mut self) -> bool {
        let calls = self
            .config
            .max_calls
            .is_some_and(|m| self.report.calls >= m);
        let time = self
            .config
            .time_limit
            .is_some_and(|t| self.start.elapsed() >= t);
        if calls || time {
            self.report.complete = false;
        }
        !self.report.complete
    }

    fn record(&mut self, trace: &Trace) {
        self.report.traces += 1;
        let key = match self.keyer {
            Keyer::Plain => trace.observation_key(self.program),
            Keyer::Refined(red) => {
                trace.refined_observation_key(self.program, &red.x, &red.graph.edges)
            }
        };
        self.report.class_keys.insert(key);
        self.report
            .record_violations(self.program, trace, self.original_events);
    }

    /// `blocked` holds the multi-pair bursts of earlier siblings (of this
    /// call or of an ancestor): every class containing one of them is
    /// covered by that sibling's subtree.
    fn call(
        &mut self,
        trace: Trace,
        mut ann: AnnotationPair,
        mut blocked: Vec<Vec<(EventId, EventId)>>,
    ) -> Result<(), ExploreError> {
        self.report.calls += 1;
        if !self.seen.insert(ann.pos.clone()) {
            self.report.duplicate_annotations += 1;
        }
        self.record(&trace);
        debug!(
            "call {}: |pos| = {}, trace length {}",
            self.report.calls,
            ann.pos.len(),
            trace.len()
        );
        let obs = trace.observation(self.program);
        let reads: Vec<EventId> = trace
            .events()
            .filter(|&r| self.program.event(r).label.is_read() && !ann.pos.contains_key(&r))
            .collect();
        for r in reads {
            let writes: Vec<EventId> = trace
                .events()
                .filter(|&w| {
                    self.program.event(w).label.is_write()
                        && trace.conflicting(self.program, r, w)
                        && !self.program.ps(r, w)
                        && !(self.config.skip_current_observation && obs.get(&r) == Some(&w))
                })
                .collect();
            for w in writes {
                if ann.forbids(r, w) {
                    continue;
                }
                if self.out_of_budget() {
                    return Ok(());
                }
                let Some(pos) = burst(self.program, &trace, &obs, &ann.pos, r, w) else {
                    self.report.burst_rejected += 1;
                    continue;
                };
                // The burst must avoid what earlier siblings covered, or the
                // subtrees would overlap.
                let covered = pos
                    .iter()
                    .any(|(&x, &y)| !ann.pos.contains_key(&x) && ann.forbids(x, y))
                    || blocked
                        .iter()
                        .any(|b| b.iter().all(|(x, y)| pos.get(x) == Some(y)));
                if covered {
                    self.report.burst_rejected += 1;
                    continue;
                }
                self.report.realize_attempts += 1;
                match self.realizer.realize(&pos) {
                    Ok(t) => {
                        let t2 = maximal_extension(self.program, &t)?;
                        let delta: Vec<(EventId, EventId)> = pos
                            .iter()
                            .filter(|(x, _)| !ann.pos.contains_key(x))
                            .map(|(&x, &y)| (x, y))
                            .collect();
                        // A burst that pinned other reads only covers the
                        // classes agreeing with all of it.
                        let inherited = blocked.clone();
                        if delta.len() == 1 {
                            ann.neg.entry(r).or_default().insert(w);
                        } else {
                            blocked.push(delta);
                        }
                        let child = AnnotationPair {
                            pos,
                            neg: ann.neg.clone(),
                        };
                        self.call(t2, child, inherited)?;
                    }
                    Err(RealizeError::Unrealizable(why)) => {
                        self.report.unrealizable += 1;
                        match why {
                            Unrealizable::NotWellFormed(_) => self.report.not_well_formed += 1,
                            Unrealizable::CycleInG => self.report.cycle_precheck += 1,
                            Unrealizable::Unsat => self.report.unsat += 1,
                        }
                    }
                    Err(e @ RealizeError::Internal(_)) => return Err(ExploreError::Realize(e)),
                }
            }
        }
        Ok(())
    }
}

fn run(
    program: &Program,
    realizer: Realizer<'_>,
    keyer: Keyer<'_>,
    config: &ExploreConfig,
    algo: &str,
    original_events: usize,
) -> Result<ExplorationReport, ExploreError> {
    let start = Instant::now();
    let mut search = Search {
        program,
        realizer,
        keyer,
        config,
        report: ExplorationReport::new(algo),
        seen: HashSet::new(),
        start,
        original_events,
    };
    let first = maximal_extension(program, &Trace::empty(program))?;
    search.call(first, AnnotationPair::new(), Vec::new())?;
    let mut report = search.report;
    report.classes = report.class_keys.len() as u64;
    report.time_ms = start.elapsed().as_millis();
    info!(
        "{algo}: {} calls, {} classes, {} realize attempts ({} unrealizable), {} ms",
        report.calls, report.classes, report.realize_attempts, report.unrealizable, report.time_ms
    );
    Ok(report)
}

/// Data-centric DPOR. In acyclic mode the program's communication graph
/// must be acyclic; cyclic mode explores the acyclic reduction over the
/// deterministic all-but-two cycle set.
pub fn explore(
    program: &Program,
    config: &ExploreConfig,
) -> Result<ExplorationReport, ExploreError> {
    match config.mode {
        Mode::Acyclic => {
            if !is_acyclic(&build_communication_graph(program)) {
                return Err(ExploreError::CyclicArchitecture);
            }
            let realizer = Realizer::new(program, RealizeMode::Acyclic);
            run(
                program,
                realizer,
                Keyer::Plain,
                config,
                "dc",
                program.event_count(),
            )
        }
        Mode::Cyclic => {
            let red = reduce(program);
            explore_reduction(&red, config, program.event_count())
        }
    }
}

/// The acyclic reduction over the deterministic all-but-two cycle set.
pub fn reduce(program: &Program) -> Reduction {
    let x = all_but_two_cycle_set(&build_communication_graph(program));
    acyclic_reduction(program, &x)
}

/// Cyclic-mode exploration of an already computed reduction. Witnesses
/// keep only events with ids below `original_events`.
pub fn explore_reduction(
    red: &Reduction,
    config: &ExploreConfig,
    original_events: usize,
) -> Result<ExplorationReport, ExploreError> {
    let realizer = Realizer::new(&red.program, RealizeMode::Cyclic(red.into()));
    run(
        &red.program,
        realizer,
        Keyer::Refined(red),
        config,
        "dc-cyclic",
        original_events,
    )
}

/// Whether an event is a read that the search mutates.
pub fn is_mutable_read(program: &Program, e: EventId) -> bool {
    matches!(
        program.event(e).label,
        EventLabel::Read { .. } | EventLabel::Acquire(_)
    )
}
