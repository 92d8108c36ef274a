//! 2SAT instances in clause form and an implication-graph SCC solver.

use std::fmt::Write;

/// A literal: variable `v` positive is `2v`, negated is `2v + 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Lit(pub u32);

impl std::ops::Not for Lit {
    type Output = Lit;

    fn not(self) -> Lit {
        Lit(self.0 ^ 1)
    }
}

impl Lit {
    pub fn pos(var: u32) -> Lit {
        Lit(2 * var)
    }

    pub fn neg(var: u32) -> Lit {
        Lit(2 * var + 1)
    }

    pub fn var(self) -> u32 {
        self.0 / 2
    }

    pub fn is_neg(self) -> bool {
        self.0 & 1 == 1
    }

    /// Truth value under an assignment.
    pub fn eval(self, assignment: &[bool]) -> bool {
        assignment[self.var() as usize] != self.is_neg()
    }

    fn dimacs(self) -> i64 {
        let v = self.var() as i64 + 1;
        if self.is_neg() {
            -v
        } else {
            v
        }
    }
}

/// Conjunction of two-literal disjunctions; a unit clause repeats its literal.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TwoSatInstance {
    pub num_vars: usize,
    pub clauses: Vec<(Lit, Lit)>,
}

impl TwoSatInstance {
    pub fn new(num_vars: usize) -> Self {
        TwoSatInstance {
            num_vars,
            clauses: Vec::new(),
        }
    }

    /// Adds `a ∨ b`.
    pub fn or(&mut self, a: Lit, b: Lit) {
        self.clauses.push((a, b));
    }

    /// Adds `a ⇒ b`.
    pub fn implies(&mut self, a: Lit, b: Lit) {
        self.clauses.push((!a, b));
    }

    pub fn unit(&mut self, a: Lit) {
        self.clauses.push((a, a));
    }

    /// Whether `a ⇒ b` occurs as a clause.
    pub fn has_implication(&self, a: Lit, b: Lit) -> bool {
        let c = (!a, b);
        self.clauses
            .iter()
            .any(|&(x, y)| (x, y) == c || (y, x) == c)
    }

    pub fn has_unit(&self, a: Lit) -> bool {
        self.clauses.contains(&(a, a))
    }

    pub fn satisfied_by(&self, assignment: &[bool]) -> bool {
        self.clauses
            .iter()
            .all(|&(a, b)| a.eval(assignment) || b.eval(assignment))
    }

    /// DIMACS CNF text.
    pub fn dimacs(&self) -> String {
        let mut s = format!("p cnf {} {}\n", self.num_vars, self.clauses.len());
        for &(a, b) in &self.clauses {
            if a == b {
                writeln!(s, "{} 0", a.dimacs()).unwrap();
            } else {
                writeln!(s, "{} {} 0", a.dimacs(), b.dimacs()).unwrap();
            }
        }
        s
    }
}

/// Solves by strongly connected components of the implication graph.
/// Returns a satisfying assignment, or `None` when unsatisfiable.
pub fn twosat_solve(instance: &TwoSatInstance) -> Option<Vec<bool>> {
    let n = 2 * instance.num_vars;
    let mut head = vec![usize::MAX; n];
    let mut next = Vec::with_capacity(2 * instance.clauses.len());
    let mut to = Vec::with_capacity(2 * instance.clauses.len());
    let mut add = |u: Lit, v: Lit, head: &mut Vec<usize>| {
        to.push(v.0 as usize);
        next.push(head[u.0 as usize]);
        head[u.0 as usize] = to.len() - 1;
    };
    for &(a, b) in &instance.clauses {
        add(!a, b, &mut head);
        if a != b {
            add(!b, a, &mut head);
        }
    }
    let comp = tarjan(n, &head, &next, &to);
    let mut assignment = vec![false; instance.num_vars];
    for v in 0..instance.num_vars {
        let (p, q) = (comp[2 * v], comp[2 * v + 1]);
        if p == q {
            return None;
        }
        assignment[v] = p < q;
    }
    Some(assignment)
}

/// Iterative Tarjan; components are numbered in reverse topological order.
fn tarjan(n: usize, head: &[usize], next: &[usize], to: &[usize]) -> Vec<usize> {
    const NONE: usize = usize::MAX;
    let mut index = vec![NONE; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut comp = vec![NONE; n];
    let mut stack = Vec::new();
    let mut call: Vec<(usize, usize)> = Vec::new();
    let mut counter = 0;
    let mut comps = 0;
    for s in 0..n {
        if index[s] != NONE {
            continue;
        }
        call.push((s, head[s]));
        index[s] = counter;
        low[s] = counter;
        counter += 1;
        stack.push(s);
        on_stack[s] = true;
        while let Some(&mut (u, ref mut edge)) = call.last_mut() {
            if *edge != NONE {
                let v = to[*edge];
                *edge = next[*edge];
                if index[v] == NONE {
                    index[v] = counter;
                    low[v] = counter;
                    counter += 1;
                    stack.push(v);
                    on_stack[v] = true;
                    call.push((v, head[v]));
                } else if on_stack[v] {
                    low[u] = low[u].min(index[v]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[u]);
                }
                if low[u] == index[u] {
                    loop {
                        let w = stack.pop().unwrap();
                        on_stack[w] = false;
                        comp[w] = comps;
                        if w == u {
                            break;
                        }
                    }
                    comps += 1;
                }
            }
        }
    }
    comp
}
