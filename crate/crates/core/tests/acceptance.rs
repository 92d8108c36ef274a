//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails. Thresholds are pinned below.

use std::collections::{BTreeMap, BTreeSet};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use obsmc_core::exec::{happens_before, Trace};
use obsmc_core::explore::{self, causal_past_cone, ExploreConfig, Mode};
use obsmc_core::lang::{self, bench};
use obsmc_core::model::graph::{all_but_two_cycle_set, build_communication_graph, is_acyclic};
use obsmc_core::model::{EventId, EventLabel, Program};
use obsmc_core::oracle::{self, Equivalence, Limits};
use obsmc_core::solve::{self, twosat_solve, Lit, RealizeMode, TwoSatInstance};

const SEED: u64 = 0x0b5e_2024;

// Criterion 1: optimality corpus.
const CORPUS_MIN_PROGRAMS: usize = 15;
const CORPUS_MAX_PROCS: usize = 3;
const CORPUS_MAX_GLOBAL_EVENTS: usize = 8;
const CORPUS_MAX_TRACES: u64 = 100_000;
const BUDGET_1: Duration = Duration::from_secs(60);

// Criterion 2: realize.
const MIN_HARVESTED: usize = 500;
const CROSSING_COUNT: usize = 20;
const BUDGET_2: Duration = Duration::from_secs(30);

const BUDGET_3: Duration = Duration::from_secs(60);

// Criterion 4: `(k!)^2 / GRID_MAZ_SLACK` lower-bounds the grid's
// Mazurkiewicz classes.
const GRID_MAZ_SLACK: u64 = 1;
const BUDGET_4: Duration = Duration::from_secs(120);

// Criterion 5: successive class-count ratios of the data-centric explorer
// must stay below `DC_MAX_RATIO`; baseline trace counts must grow by at
// least `SLEEP_MIN_RATIO` per step.
const DC_MAX_RATIO: f64 = 2.0;
const SLEEP_MIN_RATIO: f64 = 2.0;
const LASTZERO_SIZES: std::ops::RangeInclusive<u32> = 2..=5;
const OPT_LOCK_SIZES: std::ops::RangeInclusive<u32> = 4..=10;
const BUDGET_5: Duration = Duration::from_secs(600);

const BUDGET_6: Duration = Duration::from_secs(120);

const SAT_INSTANCES: usize = 1000;
const SAT_MAX_VARS: u32 = 12;
const BUDGET_7: Duration = Duration::from_secs(10);

const LEMMA_PAIRS: usize = 1000;
const INEVITABILITY_PAIRS: usize = 100;
const BUDGET_8: Duration = Duration::from_secs(60);

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome {
            pass,
            detail: detail.into(),
        }
    }
}

type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("1 optimality on the acyclic corpus", BUDGET_1, optimality),
        ("2 realize soundness and completeness", BUDGET_2, realize),
        ("3 refinement chain", BUDGET_3, refinement_chain),
        ("4 succinctness trends", BUDGET_4, succinctness),
        ("5 exponential gap", BUDGET_5, exponential_gap),
        ("6 cyclic optimality", BUDGET_6, cyclic_optimality),
        ("7 2SAT differential", BUDGET_7, twosat_differential),
        ("8 interpreter properties", BUDGET_8, interpreter_properties),
    ];
    let mut failed = 0;
    for (name, budget, check) in criteria {
        let start = Instant::now();
        let mut out = check();
        let took = start.elapsed();
        if took > budget {
            out.pass = false;
            out.detail.push_str(&format!("; over budget {budget:?}"));
        }
        if !out.pass {
            failed += 1;
        }
        println!(
            "{} criterion {name} ({:.1}s): {}",
            if out.pass { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            out.detail
        );
    }
    println!("acceptance: {} of 8 criteria pass", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn load(src: &str) -> Program {
    lang::load(src).expect("corpus program compiles")
}

fn global_events(p: &Program) -> usize {
    p.events
        .iter()
        .filter(|e| e.proc.is_some() && e.label.is_visible())
        .count()
}

/// Acyclic corpus programs within the size limits, with their traces.
fn small_corpus() -> Vec<(String, Program, Vec<Trace>)> {
    bench::acyclic_corpus()
        .into_iter()
        .filter_map(|(name, src)| {
            let p = load(&src);
            if p.processes.len() > CORPUS_MAX_PROCS || global_events(&p) > CORPUS_MAX_GLOBAL_EVENTS
            {
                return None;
            }
            let traces = oracle::enumerate_maximal_traces(&p, CORPUS_MAX_TRACES).unwrap()?;
            Some((name, p, traces))
        })
        .collect()
}

fn optimality() -> Outcome {
    let corpus = small_corpus();
    let mut bad = Vec::new();
    let mut total_classes = 0;
    for (name, p, _) in &corpus {
        let part = oracle::partition(p, Equivalence::Observation, CORPUS_MAX_TRACES).unwrap();
        let report = explore::explore(p, &ExploreConfig::default()).unwrap();
        let oracle_keys: BTreeSet<_> = part
            .classes
            .keys()
            .map(|k| match k {
                oracle::ClassKey::Obs(k) => k.clone(),
                oracle::ClassKey::Maz(_) => unreachable!(),
            })
            .collect();
        total_classes += report.classes;
        if report.classes as usize != part.class_count()
            || report.class_keys != oracle_keys
            || report.duplicate_annotations != 0
            || !report.complete
        {
            bad.push(format!(
                "{name}: dc {} vs oracle {}, {} duplicates",
                report.classes,
                part.class_count(),
                report.duplicate_annotations
            ));
        }
    }
    let enough = corpus.len() >= CORPUS_MIN_PROGRAMS;
    Outcome::new(
        enough && bad.is_empty(),
        if bad.is_empty() {
            format!(
                "{} programs, {total_classes} classes, all exact, 0 duplicate annotations",
                corpus.len()
            )
        } else {
            format!("{} programs; mismatches: {}", corpus.len(), bad.join(", "))
        },
    )
}

/// First write and first read of each process, in process order.
fn write_read_pairs(p: &Program) -> Vec<(EventId, EventId)> {
    (0..p.processes.len())
        .map(|i| {
            let evs = p.process_events(obsmc_core::model::ProcId(i as u32));
            let w = *evs.iter().find(|&&e| p.event(e).label.is_write()).unwrap();
            let r = *evs.iter().find(|&&e| p.event(e).label.is_read()).unwrap();
            (w, r)
        })
        .collect()
}

/// Annotations on write-then-read grids that no trace realizes: every
/// crossing pair of processes, and every directed triangle.
fn crossing_annotations() -> Vec<(Program, BTreeMap<EventId, EventId>)> {
    let mut out = Vec::new();
    for k in 2..=5 {
        let p = load(&bench::wr_grid(k));
        let wr = write_read_pairs(&p);
        for i in 0..wr.len() {
            for j in i + 1..wr.len() {
                let ann = BTreeMap::from([(wr[i].1, wr[j].0), (wr[j].1, wr[i].0)]);
                out.push((p.clone(), ann));
            }
        }
        if k == 3 {
            let ann = BTreeMap::from([(wr[0].1, wr[1].0), (wr[1].1, wr[2].0), (wr[2].1, wr[0].0)]);
            out.push((p.clone(), ann));
        }
    }
    out
}

/// Acyclic programs to harvest annotations from: the whole acyclic corpus
/// and a few larger generated instances.
fn harvest_programs() -> Vec<Program> {
    let mut srcs: Vec<String> = bench::acyclic_corpus().into_iter().map(|c| c.1).collect();
    srcs.extend([bench::wr_chain(4), bench::opt_lock(3), bench::opt_lock(4)]);
    srcs.iter().map(|s| load(s)).collect()
}

fn realize() -> Outcome {
    let mut harvested = 0;
    let mut wrong = 0;
    for p in harvest_programs() {
        let traces = oracle::enumerate_maximal_traces(&p, CORPUS_MAX_TRACES)
            .unwrap()
            .unwrap();
        let mut seen = BTreeSet::new();
        for t in &traces {
            // One cut per entry yields every prefix.
            for ann in oracle::harvest_annotations(&p, t, t.len()) {
                if !seen.insert(ann.clone()) {
                    continue;
                }
                harvested += 1;
                match solve::realize(&p, &ann, RealizeMode::Acyclic) {
                    Ok(t) if t.observation(&p) == ann => {}
                    _ => wrong += 1,
                }
            }
        }
    }
    let crossing = crossing_annotations();
    let realized: usize = crossing
        .iter()
        .filter(|(p, ann)| solve::realize(p, ann, RealizeMode::Acyclic).is_ok())
        .count();
    Outcome::new(
        harvested >= MIN_HARVESTED && wrong == 0 && crossing.len() >= CROSSING_COUNT && realized == 0,
        format!(
            "{harvested} harvested, {wrong} not realized exactly; {} crossing or cyclic, {realized} wrongly realized",
            crossing.len()
        ),
    )
}

fn refinement_chain() -> Outcome {
    let mut bad = Vec::new();
    let mut checked = 0;
    let programs = bench::acyclic_corpus()
        .into_iter()
        .chain(bench::cyclic_corpus());
    for (name, src) in programs {
        let p = load(&src);
        let graph = build_communication_graph(&p);
        let x = all_but_two_cycle_set(&graph);
        let Some(traces) = oracle::enumerate_maximal_traces(&p, CORPUS_MAX_TRACES).unwrap() else {
            bad.push(format!("{name}: too many traces"));
            continue;
        };
        let mut obs = BTreeSet::new();
        let mut refined = BTreeSet::new();
        let mut maz: BTreeMap<_, BTreeSet<_>> = BTreeMap::new();
        for t in &traces {
            let o = t.observation_key(&p);
            obs.insert(o.clone());
            refined.insert(t.refined_observation_key(&p, &x, &graph.edges));
            maz.entry(t.mazurkiewicz_key(&p)).or_default().insert(o);
        }
        let nested = maz.values().all(|s| s.len() == 1);
        if !(obs.len() <= refined.len() && refined.len() <= maz.len() && nested) {
            bad.push(format!(
                "{name}: {} / {} / {}",
                obs.len(),
                refined.len(),
                maz.len()
            ));
        }
        checked += 1;
    }
    Outcome::new(
        bad.is_empty(),
        if bad.is_empty() {
            format!("{checked} programs satisfy obs <= refined <= maz with nesting")
        } else {
            bad.join(", ")
        },
    )
}

fn binomial(n: u64, k: u64) -> u64 {
    (1..=k).fold(1, |acc, i| acc * (n + 1 - i) / i)
}

fn counts(src: &str) -> (usize, usize) {
    let p = load(src);
    let o = oracle::partition(&p, Equivalence::Observation, CORPUS_MAX_TRACES).unwrap();
    let m = oracle::partition(&p, Equivalence::Mazurkiewicz, CORPUS_MAX_TRACES).unwrap();
    assert!(o.complete && m.complete);
    (o.class_count(), m.class_count())
}

fn succinctness() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for n in 2..=4u64 {
        let (o, m) = counts(&bench::wr_chain(n as u32));
        ok &= m as u64 >= binomial(2 * n, n) && o as u64 <= 2 * (n + 1);
        notes.push(format!("wr_chain({n}) obs {o} maz {m}"));
    }
    for k in 2..=3u64 {
        let (o, m) = counts(&bench::wr_grid(k as u32));
        let fact: u64 = (1..=k).product();
        ok &= o as u64 <= k.pow(k as u32) && m as u64 >= fact * fact / GRID_MAZ_SLACK;
        notes.push(format!("wr_grid({k}) obs {o} maz {m}"));
    }
    Outcome::new(ok, notes.join(", "))
}

struct SweepRow {
    dc_classes: u64,
    dc_time: Duration,
    sleep_traces: u64,
    sleep_time: Duration,
}

fn sweep(
    gen: fn(u32) -> String,
    sizes: std::ops::RangeInclusive<u32>,
    mode: Mode,
) -> Vec<SweepRow> {
    sizes
        .map(|n| {
            let p = load(&gen(n));
            let config = ExploreConfig {
                mode,
                ..ExploreConfig::default()
            };
            let start = Instant::now();
            let dc = explore::explore(&p, &config).unwrap();
            let dc_time = start.elapsed();
            let start = Instant::now();
            let sleep = oracle::sleep_set_dpor(&p, Limits::default()).unwrap();
            let sleep_time = start.elapsed();
            assert!(dc.complete && sleep.complete);
            SweepRow {
                dc_classes: dc.classes,
                dc_time,
                sleep_traces: sleep.traces,
                sleep_time,
            }
        })
        .collect()
}

/// Whether a sweep shows the gap, with a one-line summary.
fn judge(name: &str, rows: &[SweepRow]) -> (bool, String) {
    let ratios = |f: fn(&SweepRow) -> u64| -> Vec<f64> {
        rows.windows(2)
            .map(|w| f(&w[1]) as f64 / f(&w[0]) as f64)
            .collect()
    };
    let dc = ratios(|r| r.dc_classes);
    let sleep = ratios(|r| r.sleep_traces);
    let dc_max = dc.iter().cloned().fold(0.0, f64::max);
    let sleep_min = sleep.iter().cloned().fold(f64::INFINITY, f64::min);
    let last = rows.last().unwrap();
    let ok =
        dc_max < DC_MAX_RATIO && sleep_min >= SLEEP_MIN_RATIO && last.dc_time < last.sleep_time;
    let classes: Vec<String> = rows.iter().map(|r| r.dc_classes.to_string()).collect();
    let traces: Vec<String> = rows.iter().map(|r| r.sleep_traces.to_string()).collect();
    (
        ok,
        format!(
            "{name} dc [{}] max ratio {dc_max:.2}, sleep [{}] min ratio {sleep_min:.2}, largest {:.2}s vs {:.2}s",
            classes.join(" "),
            traces.join(" "),
            last.dc_time.as_secs_f64(),
            last.sleep_time.as_secs_f64()
        ),
    )
}

fn exponential_gap() -> Outcome {
    let (a, da) = judge(
        "lastzero",
        &sweep(bench::lastzero, LASTZERO_SIZES, Mode::Cyclic),
    );
    let (b, db) = judge(
        "opt_lock",
        &sweep(bench::opt_lock, OPT_LOCK_SIZES, Mode::Acyclic),
    );
    Outcome::new(a && b, format!("{da}; {db}"))
}

fn cyclic_optimality() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for n in 1..=2 {
        let p = load(&bench::cyclic3(n));
        assert!(!is_acyclic(&build_communication_graph(&p)));
        let red = explore::reduce(&p);
        let part = oracle::partition_refined_by_representatives(
            &red.program,
            &red.x,
            &red.graph.edges,
            oracle::DEFAULT_CAP,
        )
        .unwrap();
        let config = ExploreConfig {
            mode: Mode::Cyclic,
            ..ExploreConfig::default()
        };
        let report = explore::explore(&p, &config).unwrap();
        ok &= part.complete
            && report.complete
            && report.classes as usize == part.class_count()
            && report.duplicate_annotations == 0;
        notes.push(format!(
            "cyclic3({n}) dc {} oracle {}",
            report.classes,
            part.class_count()
        ));
    }
    Outcome::new(ok, notes.join(", "))
}

fn twosat_differential() -> Outcome {
    let mut rng = StdRng::seed_from_u64(SEED);
    let mut disagree = 0;
    let mut sat = 0;
    for _ in 0..SAT_INSTANCES {
        let n = rng.gen_range(1..=SAT_MAX_VARS);
        let mut inst = TwoSatInstance::new(n as usize);
        let lit = |rng: &mut StdRng| {
            let v = rng.gen_range(0..n);
            if rng.gen() {
                Lit::pos(v)
            } else {
                Lit::neg(v)
            }
        };
        for _ in 0..rng.gen_range(0..=3 * n) {
            let (a, b) = (lit(&mut rng), lit(&mut rng));
            inst.or(a, b);
        }
        let exists = (0u32..1 << n).any(|bits| {
            let asg: Vec<bool> = (0..n).map(|i| bits >> i & 1 == 1).collect();
            inst.satisfied_by(&asg)
        });
        let agrees = match twosat_solve(&inst) {
            Some(model) => exists && model.len() == n as usize && inst.satisfied_by(&model),
            None => !exists,
        };
        sat += exists as usize;
        disagree += !agrees as usize;
    }
    Outcome::new(
        disagree == 0,
        format!("{SAT_INSTANCES} instances ({sat} satisfiable), {disagree} disagreements"),
    )
}

fn is_global(p: &Program, e: EventId) -> bool {
    !p.is_init(e) && p.event(e).label.is_visible()
}

fn is_data(p: &Program, e: EventId) -> bool {
    matches!(
        p.event(e).label,
        EventLabel::Read { .. } | EventLabel::Write { .. }
    )
}

fn contains_map(small: &BTreeMap<EventId, EventId>, big: &BTreeMap<EventId, EventId>) -> bool {
    small.iter().all(|(r, w)| big.get(r) == Some(w))
}

fn random_prefix(p: &Program, t: &Trace, rng: &mut StdRng) -> Trace {
    t.prefix(p, rng.gen_range(0..=t.len()))
}

/// Value, subset and cone checks on a pair whose observation functions
/// nest. Returns the first broken property.
fn pair_holds(p: &Program, t1: &Trace, t2: &Trace) -> Result<(), &'static str> {
    for e1 in t1.entries() {
        if !is_data(p, e1.event) {
            continue;
        }
        if let Some(e2) = t2.entry(e1.event) {
            if e1.value != e2.value {
                return Err("values differ");
            }
        } else if p.event(e1.event).label.is_read() {
            return Err("read missing from the larger trace");
        }
    }
    if !t1.events().all(|e| t2.contains(e)) {
        return Err("events not contained in the maximal trace");
    }
    let hb = happens_before(p, t2);
    for e in t2.events().filter(|&e| is_global(p, e)) {
        let past = causal_past_cone(p, t2, e);
        for &e2 in &past {
            if is_global(p, e2) && !hb.ordered(e2, e) {
                return Err("cone member does not happen before");
            }
            if !causal_past_cone(p, t2, e2).is_subset(&past) {
                return Err("cone not monotone");
            }
        }
    }
    Ok(())
}

fn interpreter_properties() -> Outcome {
    let mut rng = StdRng::seed_from_u64(SEED);
    let corpus: Vec<_> = small_corpus()
        .into_iter()
        .filter(|c| c.2.len() > 1)
        .collect();
    let mut broken = BTreeMap::new();
    for _ in 0..LEMMA_PAIRS {
        let (_, p, traces) = &corpus[rng.gen_range(0..corpus.len())];
        let t1 = random_prefix(p, &traces[rng.gen_range(0..traces.len())], &mut rng);
        let o1 = t1.observation(p);
        let hosts: Vec<&Trace> = traces
            .iter()
            .filter(|t| contains_map(&o1, &t.observation(p)))
            .collect();
        let t2 = hosts[rng.gen_range(0..hosts.len())];
        if let Err(why) = pair_holds(p, &t1, t2) {
            *broken.entry(why).or_insert(0) += 1;
        }
    }
    let mut inevitable = 0;
    let mut attempts = 0;
    while inevitable < INEVITABILITY_PAIRS && attempts < 1_000_000 {
        attempts += 1;
        let (_, p, traces) = &corpus[rng.gen_range(0..corpus.len())];
        let t1 = random_prefix(p, &traces[rng.gen_range(0..traces.len())], &mut rng);
        let t2 = random_prefix(p, &traces[rng.gen_range(0..traces.len())], &mut rng);
        let candidates: Vec<EventId> = t1
            .events()
            .filter(|&e| is_global(p, e) && !t2.contains(e))
            .collect();
        if candidates.is_empty() {
            continue;
        }
        let e = candidates[rng.gen_range(0..candidates.len())];
        let (o1, o2) = (t1.observation(p), t2.observation(p));
        let hypothesis = causal_past_cone(p, &t1, e)
            .iter()
            .filter(|r| o1.contains_key(r))
            .all(|r| o2.get(r) == o1.get(r));
        if !hypothesis {
            continue;
        }
        inevitable += 1;
        let mut missed = false;
        oracle::for_each_maximal_trace(p, &t2, CORPUS_MAX_TRACES, |t| {
            missed |= !t.contains(e) || !t.is_lock_free();
        })
        .unwrap();
        if missed {
            *broken.entry("event not inevitable").or_insert(0) += 1;
        }
    }
    let ok = broken.is_empty() && inevitable == INEVITABILITY_PAIRS;
    Outcome::new(
        ok,
        format!(
            "{LEMMA_PAIRS} nested pairs, {inevitable} inevitability pairs; {}",
            if broken.is_empty() {
                "no violations".to_string()
            } else {
                format!("{broken:?}")
            }
        ),
    )
}
