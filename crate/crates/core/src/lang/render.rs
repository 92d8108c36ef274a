//! Rendering programs back to `.cmp` text, and a structural isomorphism
//! check used to validate round trips.

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::model::{EventLabel, LocalId, LocationExpr, NodeId, ProcId, Program};

/// Renders every process as an explicit `cfg` body, so the output parses
/// back to the same graph whatever shape the CFG has.
pub fn render(program: &Program) -> String {
    let mut out = String::new();
    for g in &program.globals {
        match g.size {
            None => writeln!(out, "global {} = {}", g.name, g.init[0]).unwrap(),
            Some(n) if g.init.iter().all(|v| *v == g.init[0]) => {
                writeln!(out, "global {}[{n}] = {}", g.name, g.init[0]).unwrap()
            }
            Some(n) => {
                let vals: Vec<String> = g.init.iter().map(|v| v.to_string()).collect();
                writeln!(out, "global {}[{n}] = [{}]", g.name, vals.join(", ")).unwrap()
            }
        }
    }
    for l in &program.locks {
        writeln!(out, "lock {}", l.name).unwrap();
    }
    for (p, proc) in program.processes.iter().enumerate() {
        let params: Vec<String> = proc
            .locals
            .iter()
            .map(|l| format!("{} = {}", l.name, l.init))
            .collect();
        writeln!(
            out,
            "\nprocess {}({}) cfg nodes {} root {} {{",
            proc.name,
            params.join(", "),
            proc.cfg.node_count,
            proc.cfg.root.0
        )
        .unwrap();
        let name = |v: LocalId| proc.locals[v.index()].name.clone();
        let loc = |l: &LocationExpr| {
            let g = &program.globals[l.var.index()].name;
            match &l.index {
                Some(i) => format!("{g}[{}]", i.render(&name)),
                None => g.clone(),
            }
        };
        for &e in program.process_events(ProcId(p as u32)) {
            let ev = program.event(e);
            let (src, dst) = ev.edge.unwrap();
            let label = match &ev.label {
                EventLabel::Read { target, loc: l } => {
                    format!("{} = read {}", name(*target), loc(l))
                }
                EventLabel::Write { loc: l, value } => {
                    format!("write {} = {}", loc(l), value.render(&name))
                }
                EventLabel::Acquire(l) => format!("acquire {}", program.locks[l.index()].name),
                EventLabel::Release(l) => format!("release {}", program.locks[l.index()].name),
                EventLabel::Assign { target, value } => {
                    format!("{} = {}", name(*target), value.render(&name))
                }
                EventLabel::Branch(g) => match ev.violation {
                    Some(a) => format!("fail {a} when {}", g.render(&name)),
                    None => format!("when {}", g.render(&name)),
                },
                EventLabel::Init(_) => unreachable!("initialization writes belong to no process"),
            };
            writeln!(out, "  {} -> {}: {label}", src.0, dst.0).unwrap();
        }
        out.push_str("}\n");
    }
    out
}

/// Whether two programs are equal up to event-id and node renaming.
pub fn isomorphic(a: &Program, b: &Program) -> bool {
    let decls = a.globals == b.globals
        && a.locks.len() == b.locks.len()
        && a.locks.iter().zip(&b.locks).all(|(x, y)| x.name == y.name)
        && a.processes.len() == b.processes.len();
    if !decls {
        return false;
    }
    a.processes
        .iter()
        .zip(&b.processes)
        .enumerate()
        .all(|(p, (pa, pb))| {
            pa.name == pb.name && pa.locals == pb.locals && {
                let pid = ProcId(p as u32);
                cfg_isomorphic(a, b, pid, pa.cfg.root, pb.cfg.root)
            }
        })
}

fn cfg_isomorphic(a: &Program, b: &Program, p: ProcId, ra: NodeId, rb: NodeId) -> bool {
    let pa = &a.processes[p.index()].cfg;
    let pb = &b.processes[p.index()].cfg;
    if pa.node_count != pb.node_count || a.process_events(p).len() != b.process_events(p).len() {
        return false;
    }
    let mut map: BTreeMap<NodeId, NodeId> = BTreeMap::new();
    map.insert(ra, rb);
    let mut stack = vec![(ra, rb)];
    let key = |prog: &Program, e| {
        let ev = prog.event(e);
        (format!("{:?}", ev.label), ev.violation)
    };
    while let Some((u, v)) = stack.pop() {
        let mut ea: Vec<_> = pa.out[u.index()].iter().map(|&e| (key(a, e), e)).collect();
        let mut eb: Vec<_> = pb.out[v.index()].iter().map(|&e| (key(b, e), e)).collect();
        if ea.len() != eb.len() {
            return false;
        }
        ea.sort();
        eb.sort();
        for ((ka, xa), (kb, xb)) in ea.into_iter().zip(eb) {
            if ka != kb {
                return false;
            }
            let da = a.event(xa).edge.unwrap().1;
            let db = b.event(xb).edge.unwrap().1;
            match map.get(&da) {
                Some(&m) if m != db => return false,
                Some(_) => {}
                None => {
                    map.insert(da, db);
                    stack.push((da, db));
                }
            }
        }
    }
    let mut targets: Vec<_> = map.values().collect();
    targets.sort();
    targets.dedup();
    targets.len() == map.len()
}
