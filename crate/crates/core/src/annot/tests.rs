use super::*;
use crate::exec::{maximal_extension, replay};
use crate::lang::{bench, load};

fn e(i: u32) -> EventId {
    EventId(i)
}

fn ann(pairs: &[(u32, u32)]) -> PositiveAnnotation {
    pairs.iter().map(|&(r, w)| (e(r), e(w))).collect()
}

/// init x = e0; p1: e1 write x = 1, e2 read x; p2: e3 write x = 2, e4 read x.
fn p2wr() -> Program {
    load(&bench::wr_grid(2)).unwrap()
}

#[test]
fn empty_annotation_has_empty_basis() {
    let p = p2wr();
    let b = compute_basis(&p, &PositiveAnnotation::new()).unwrap();
    assert!(b.is_empty());
    assert!(b.seqs.iter().all(Vec::is_empty));
    assert!(annotation_order_acyclic(&p, &PositiveAnnotation::new()));
}

#[test]
fn cross_process_pair_is_acyclic() {
    let p = p2wr();
    assert!(annotation_order_acyclic(&p, &ann(&[(2, 3)])));
}

#[test]
fn crossing_pair_is_acyclic_but_cycle_detected_with_ps() {
    // w1 -> r2 and w2 -> r1 with PS(w1, r1), PS(w2, r2) has no cycle.
    let p = p2wr();
    assert!(annotation_order_acyclic(&p, &ann(&[(2, 3), (4, 1)])));
    // r1 reads a write PS-after a read that itself feeds it.
    let q = load(
        "global x = 0\nglobal y = 0\n\
         process p1(v = 0) { v = read x\n write y = 1 }\n\
         process p2(v = 0) { v = read y\n write x = 1 }",
    )
    .unwrap();
    // e0, e1 inits; p1: e2 read x, e3 write y; p2: e4 read y, e5 write x.
    assert!(!annotation_order_acyclic(&q, &ann(&[(2, 5), (4, 3)])));
    assert_eq!(
        compute_basis(&q, &ann(&[(2, 5), (4, 3)])),
        Err(NotWellFormed::Cyclic)
    );
}

#[test]
fn constants_fix_values() {
    let p = p2wr();
    let vals = value_function(&p, &ann(&[(2, 3)])).unwrap();
    assert_eq!(vals[&e(3)], 2);
    assert_eq!(vals[&e(2)], 2);
}

#[test]
fn arithmetic_propagates_through_reads() {
    let p = load(
        "global x = 0\nglobal y = 0\n\
         process a { write x = 5 }\n\
         process b(v = 0) { v = read x\n write y = v + 1 }\n\
         process c(u = 0) { u = read y }",
    )
    .unwrap();
    // e0, e1 inits; a: e2; b: e3 read, e4 write; c: e5 read.
    let vals = value_function(&p, &ann(&[(3, 2), (5, 4)])).unwrap();
    assert_eq!(vals[&e(2)], 5);
    assert_eq!(vals[&e(4)], 6);
    assert_eq!(vals[&e(5)], 6);
}

#[test]
fn init_values_are_per_cell() {
    let p = load("global a[3] = [4, 5, 6]\nprocess p(v = 0) { v = read a[2] }").unwrap();
    let vals = value_function(&p, &ann(&[(1, 0)])).unwrap();
    assert_eq!(vals[&e(1)], 6);
}

#[test]
fn basis_stops_at_maximum() {
    let p = p2wr();
    let b = compute_basis(&p, &ann(&[(2, 3)])).unwrap();
    let seq0: Vec<EventId> = b.seqs[0].iter().map(|x| x.event).collect();
    let seq1: Vec<EventId> = b.seqs[1].iter().map(|x| x.event).collect();
    assert_eq!(seq0, vec![e(1), e(2)]);
    assert_eq!(seq1, vec![e(3)]);
}

#[test]
fn unannotated_read_in_basis_is_rejected() {
    let q = load(
        "global x = 0\nglobal y = 0\n\
         process p1(v = 0) { v = read x\n write y = 1 }\n\
         process p2(v = 0) { v = read y }",
    )
    .unwrap();
    assert_eq!(
        compute_basis(&q, &ann(&[(4, 3)])),
        Err(NotWellFormed::UnannotatedRead(e(2)))
    );
}

#[test]
fn branch_away_from_annotated_read() {
    let p = load(
        "global x = 0\nglobal y = 0\n\
         process p1(v = 0, u = 0) { v = read x\n if v == 1 { u = read y } }\n\
         process p2 { write x = 1 }",
    )
    .unwrap();
    let reads: Vec<EventId> = p
        .process_events(ProcId(0))
        .iter()
        .copied()
        .filter(|&x| matches!(p.event(x).label, EventLabel::Read { .. }))
        .collect();
    let wx = p.process_events(ProcId(1))[0];
    let init_x = p.init_events[0];
    let init_y = p.init_events[1];
    let (rx, ry) = (reads[0], reads[1]);
    assert!(compute_basis(&p, &[(rx, wx), (ry, init_y)].into_iter().collect()).is_ok());
    assert_eq!(
        compute_basis(&p, &[(rx, init_x), (ry, init_y)].into_iter().collect()),
        Err(NotWellFormed::Diverged(0))
    );
}

#[test]
fn incomparable_annotated_events_rejected() {
    let p = load(
        "global x = 0\n\
         process p1(v = 0) { if v == 0 { write x = 1 } else { write x = 2 } }\n\
         process p2(u = 0) { u = read x }\n\
         process p3(u = 0) { u = read x }",
    )
    .unwrap();
    let writes: Vec<EventId> = p
        .process_events(ProcId(0))
        .iter()
        .copied()
        .filter(|&x| p.event(x).label.is_write())
        .collect();
    let r2 = p.process_events(ProcId(1))[0];
    let r3 = p.process_events(ProcId(2))[0];
    let pos = [(r2, writes[0]), (r3, writes[1])].into_iter().collect();
    assert_eq!(
        compute_basis(&p, &pos),
        Err(NotWellFormed::NoUniqueMaximum(0))
    );
}

#[test]
fn release_observed_twice_rejected() {
    let p = load(&bench::withdraw()).unwrap();
    let acq: Vec<EventId> = (0..2).map(|q| p.process_events(ProcId(q))[0]).collect();
    let init_l = p.init_event_of(Target::Lock(crate::model::LockId(0)));
    let pos = [(acq[0], init_l), (acq[1], init_l)].into_iter().collect();
    assert_eq!(
        compute_basis(&p, &pos),
        Err(NotWellFormed::SharedRelease(init_l))
    );
}

#[test]
fn mismatched_pairs_rejected() {
    let p = p2wr();
    assert!(matches!(
        compute_basis(&p, &ann(&[(2, 4)])),
        Err(NotWellFormed::NotConflicting { .. })
    ));
    assert!(compute_basis(&p, &ann(&[(2, 1), (4, 1)])).is_ok());
}

#[test]
fn distinct_array_cells_do_not_match() {
    let p = load(
        "global a[2] = 0\n\
         process w { write a[0] = 1 }\n\
         process r(v = 0) { v = read a[1] }",
    )
    .unwrap();
    assert!(matches!(
        compute_basis(&p, &ann(&[(2, 1)])),
        Err(NotWellFormed::NotConflicting { .. })
    ));
}

#[test]
fn observation_of_maximal_trace_is_well_formed() {
    for (name, src) in bench::acyclic_corpus() {
        let p = load(&src).unwrap();
        let t = maximal_extension(&p, &Trace::empty(&p)).unwrap();
        let pos = t.observation(&p);
        let b = compute_basis(&p, &pos).unwrap_or_else(|err| panic!("{name}: {err}"));
        let keep: BTreeSet<EventId> = b.events().chain(p.init_events.iter().copied()).collect();
        let projected = replay(&p, &t.project(&keep)).unwrap();
        assert!(star_membership(&p, &projected, &b), "{name}");
        for (k, v) in value_function(&p, &pos).unwrap() {
            if p.is_init(k) {
                continue;
            }
            assert_eq!(t.entry(k).unwrap().value, Some(v), "{name}: {k}");
        }
    }
}

#[test]
fn membership_requires_all_events() {
    let p = p2wr();
    let b = compute_basis(&p, &ann(&[(2, 3)])).unwrap();
    let t = replay(&p, &[e(0), e(1), e(3), e(2)]).unwrap();
    assert!(star_membership(&p, &t, &b));
    let t = replay(&p, &[e(0), e(1), e(3)]).unwrap();
    assert!(!star_membership(&p, &t, &b));
}

#[test]
fn json_dump() {
    let mut a = AnnotationPair::new();
    a.pos.insert(e(2), e(3));
    a.neg.entry(e(2)).or_default().insert(e(1));
    assert_eq!(a.to_json(), r#"{"pos":[[2,3]],"neg":{"2":[1]}}"#);
    assert!(a.forbids(e(2), e(1)));
    assert!(!a.forbids(e(2), e(3)));
}

#[test]
fn basis_is_deterministic() {
    let p = load(&bench::opt_lock(2)).unwrap();
    let t = maximal_extension(&p, &Trace::empty(&p)).unwrap();
    let pos = t.observation(&p);
    assert_eq!(compute_basis(&p, &pos), compute_basis(&p, &pos));
}
