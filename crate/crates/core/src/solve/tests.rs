use super::*;
use crate::exec::maximal_extension;
use crate::lang::{bench, load};
use crate::model::graph::{acyclic_reduction, all_but_two_cycle_set};
use proptest::prelude::*;

fn e(i: u32) -> EventId {
    EventId(i)
}

fn ann(pairs: &[(u32, u32)]) -> PositiveAnnotation {
    pairs.iter().map(|&(r, w)| (e(r), e(w))).collect()
}

fn brute(inst: &TwoSatInstance) -> Option<Vec<bool>> {
    (0u32..1 << inst.num_vars)
        .map(|m| {
            (0..inst.num_vars)
                .map(|i| m >> i & 1 == 1)
                .collect::<Vec<_>>()
        })
        .find(|a| inst.satisfied_by(a))
}

#[test]
fn twosat_trivial_cases() {
    let empty = TwoSatInstance::new(1);
    assert!(twosat_solve(&empty).is_some());
    let mut contra = TwoSatInstance::new(1);
    contra.unit(Lit::pos(0));
    contra.unit(Lit::neg(0));
    assert!(twosat_solve(&contra).is_none());
    let mut chain = TwoSatInstance::new(3);
    chain.unit(Lit::pos(0));
    chain.implies(Lit::pos(0), Lit::pos(1));
    chain.implies(Lit::pos(1), Lit::neg(2));
    assert_eq!(twosat_solve(&chain), Some(vec![true, true, false]));
}

#[test]
fn dimacs_format() {
    let mut i = TwoSatInstance::new(2);
    i.unit(Lit::neg(1));
    i.implies(Lit::pos(0), Lit::pos(1));
    assert_eq!(i.dimacs(), "p cnf 2 2\n-2 0\n-1 2 0\n");
}

proptest! {
    #[test]
    fn twosat_agrees_with_brute_force(
        n in 1usize..=8,
        raw in prop::collection::vec((0u32..16, 0u32..16), 0..24),
    ) {
        let mut inst = TwoSatInstance::new(n);
        for (a, b) in raw {
            inst.or(Lit(a % (2 * n as u32)), Lit(b % (2 * n as u32)));
        }
        let got = twosat_solve(&inst);
        prop_assert_eq!(got.is_some(), brute(&inst).is_some());
        if let Some(a) = got {
            prop_assert!(inst.satisfied_by(&a));
        }
    }

    #[test]
    fn closure_matches_repeated_squaring(
        n in 1usize..=12,
        raw in prop::collection::vec((0u32..12, 0u32..12), 0..30),
    ) {
        let nodes: Vec<EventId> = (0..n as u32).map(EventId).collect();
        let mut g = ConstraintGraph::new(nodes.clone());
        let mut m = vec![vec![false; n]; n];
        for (a, b) in raw {
            let (a, b) = (a as usize % n, b as usize % n);
            g.add_edge(nodes[a], nodes[b]);
            m[a][b] = true;
        }
        for _ in 0..5 {
            let prev = m.clone();
            for i in 0..n {
                for j in 0..n {
                    m[i][j] = prev[i][j] || (0..n).any(|k| prev[i][k] && prev[k][j]);
                }
            }
        }
        let c = transitive_closure(&g);
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(c.has_edge(nodes[i], nodes[j]), m[i][j]);
            }
        }
        prop_assert_eq!(g.is_acyclic(), (0..n).all(|i| !m[i][i]));
    }
}

#[test]
fn closure_of_chain() {
    let mut g = ConstraintGraph::new(vec![e(0), e(1), e(2)]);
    g.add_edge(e(0), e(1));
    g.add_edge(e(1), e(2));
    let c = transitive_closure(&g);
    assert!(c.has_edge(e(0), e(2)));
    assert!(!c.has_edge(e(2), e(0)));
    assert_eq!(c.topological_sort(), Some(vec![e(0), e(1), e(2)]));
    g.add_edge(e(2), e(0));
    assert!(transitive_closure(&g).has_edge(e(1), e(1)));
    assert_eq!(g.topological_sort(), None);
}

#[test]
fn topological_sort_prefers_small_ids() {
    let mut g = ConstraintGraph::new(vec![e(3), e(1), e(2)]);
    g.add_edge(e(3), e(2));
    assert_eq!(g.topological_sort(), Some(vec![e(1), e(3), e(2)]));
}

#[test]
fn empty_annotation_gives_init_trace() {
    let p = load(&bench::wr_grid(2)).unwrap();
    let t = realize(&p, &PositiveAnnotation::new(), RealizeMode::Acyclic).unwrap();
    assert_eq!(t.events().collect::<Vec<_>>(), p.init_events);
    let enc = Realizer::new(&p, RealizeMode::Acyclic)
        .encode(&PositiveAnnotation::new())
        .unwrap();
    assert_eq!(enc.encoding.instance.num_vars, 0);
    assert!(twosat_solve(&enc.encoding.instance).is_some());
}

#[test]
fn crossing_annotation_unrealizable() {
    // p1: e1 write x = 1, e2 read x; p2: e3 write x = 2, e4 read x.
    let p = load(&bench::wr_grid(2)).unwrap();
    assert_eq!(
        realize(&p, &ann(&[(2, 3), (4, 1)]), RealizeMode::Acyclic),
        Err(RealizeError::Unrealizable(Unrealizable::Unsat))
    );
    let t = realize(&p, &ann(&[(2, 3), (4, 3)]), RealizeMode::Acyclic).unwrap();
    assert_eq!(t.observation(&p), ann(&[(2, 3), (4, 3)]));
}

#[test]
fn clause_groups_present() {
    let p = load(&bench::wr_grid(2)).unwrap();
    let pos = ann(&[(2, 1), (4, 3)]);
    let enc = Realizer::new(&p, RealizeMode::Acyclic)
        .encode(&pos)
        .unwrap();
    let en = &enc.encoding;
    // Annotation clause: w' = e3 before r = e2 forces e3 before e1.
    let x32 = en.lit(e(3), e(2)).unwrap();
    let x31 = en.lit(e(3), e(1)).unwrap();
    assert!(en.instance.has_implication(x32, x31));
    // Fact clause for the program-structure pair.
    assert!(en.instance.has_unit(en.lit(e(1), e(2)).unwrap()));
    assert_eq!(en.lit(e(2), e(1)), en.lit(e(1), e(2)).map(|l| !l));
}

#[test]
fn cycle_precheck() {
    let q = load(
        "global x = 0\nglobal y = 0\n\
         process p1(v = 0) { v = read x\n write y = 1 }\n\
         process p2(v = 0) { v = read y\n write x = v }",
    )
    .unwrap();
    assert!(matches!(
        realize(&q, &ann(&[(2, 5), (4, 3)]), RealizeMode::Acyclic),
        Err(RealizeError::Unrealizable(Unrealizable::NotWellFormed(_)))
    ));
}

#[test]
fn realize_first_traces_of_corpus() {
    for (name, src) in bench::acyclic_corpus() {
        let p = load(&src).unwrap();
        let t = maximal_extension(&p, &Trace::empty(&p)).unwrap();
        let pos = t.observation(&p);
        let r =
            realize(&p, &pos, RealizeMode::Acyclic).unwrap_or_else(|err| panic!("{name}: {err}"));
        assert_eq!(r.observation(&p), pos, "{name}");
    }
}

#[test]
fn cyclic_mode_realizes_reduced_traces() {
    let p = load(&bench::cyclic3(1)).unwrap();
    let g = build_communication_graph(&p);
    let red = acyclic_reduction(&p, &all_but_two_cycle_set(&g));
    let t = maximal_extension(&red.program, &Trace::empty(&red.program)).unwrap();
    let pos = t.observation(&red.program);
    let r = realize(&red.program, &pos, RealizeMode::Cyclic((&red).into())).unwrap();
    assert_eq!(r.observation(&red.program), pos);
}

#[test]
fn realize_is_deterministic() {
    let p = load(&bench::opt_lock(2)).unwrap();
    let t = maximal_extension(&p, &Trace::empty(&p)).unwrap();
    let pos = t.observation(&p);
    let a = realize(&p, &pos, RealizeMode::Acyclic).unwrap();
    let b = realize(&p, &pos, RealizeMode::Acyclic).unwrap();
    assert_eq!(a, b);
}
