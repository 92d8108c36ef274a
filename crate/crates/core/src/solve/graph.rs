//! Directed constraint graphs over events: closure, cycle checks, and
//! deterministic topological sorting.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use fixedbitset::FixedBitSet;

use crate::model::EventId;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConstraintGraph {
    pub nodes: Vec<EventId>,
    /// Node index by event id; `usize::MAX` when absent.
    index: Vec<usize>,
    succ: Vec<FixedBitSet>,
}

impl ConstraintGraph {
    /// A graph without edges over `nodes` (kept in the given order).
    pub fn new(nodes: Vec<EventId>) -> Self {
        let n = nodes.len();
        let size = nodes.iter().map(|e| e.index() + 1).max().unwrap_or(0);
        let mut index = vec![usize::MAX; size];
        for (i, e) in nodes.iter().enumerate() {
            index[e.index()] = i;
        }
        ConstraintGraph {
            nodes,
            index,
            succ: vec![FixedBitSet::with_capacity(n); n],
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn index_of(&self, e: EventId) -> Option<usize> {
        self.index
            .get(e.index())
            .copied()
            .filter(|&i| i != usize::MAX)
    }

    /// Adds `a -> b`; returns whether the edge is new.
    pub fn add_edge(&mut self, a: EventId, b: EventId) -> bool {
        let (i, j) = (self.index_of(a).unwrap(), self.index_of(b).unwrap());
        !self.succ[i].put(j)
    }

    pub fn has_edge(&self, a: EventId, b: EventId) -> bool {
        match (self.index_of(a), self.index_of(b)) {
            (Some(i), Some(j)) => self.succ[i].contains(j),
            _ => false,
        }
    }

    pub(crate) fn has_edge_idx(&self, i: usize, j: usize) -> bool {
        self.succ[i].contains(j)
    }

    pub(crate) fn succ_idx(&self, i: usize) -> &FixedBitSet {
        &self.succ[i]
    }

    pub fn edges(&self) -> impl Iterator<Item = (EventId, EventId)> + '_ {
        self.succ
            .iter()
            .enumerate()
            .flat_map(move |(i, s)| s.ones().map(move |j| (self.nodes[i], self.nodes[j])))
    }

    pub fn edge_count(&self) -> usize {
        self.succ.iter().map(|s| s.count_ones(..)).sum()
    }

    pub fn is_acyclic(&self) -> bool {
        let succ: Vec<Vec<usize>> = self.succ.iter().map(|s| s.ones().collect()).collect();
        crate::annot::is_dag(&succ)
    }

    /// Topological order, smallest event id first among ready nodes, or
    /// `None` on a cycle.
    pub fn topological_sort(&self) -> Option<Vec<EventId>> {
        let n = self.len();
        let mut indeg = vec![0usize; n];
        for s in &self.succ {
            for j in s.ones() {
                indeg[j] += 1;
            }
        }
        let mut ready: BinaryHeap<Reverse<(EventId, usize)>> = (0..n)
            .filter(|&i| indeg[i] == 0)
            .map(|i| Reverse((self.nodes[i], i)))
            .collect();
        let mut out = Vec::with_capacity(n);
        while let Some(Reverse((e, i))) = ready.pop() {
            out.push(e);
            for j in self.succ[i].ones() {
                indeg[j] -= 1;
                if indeg[j] == 0 {
                    ready.push(Reverse((self.nodes[j], j)));
                }
            }
        }
        (out.len() == n).then_some(out)
    }
}

/// Transitive closure by a depth-first search from every node. A node on a
/// cycle reaches itself.
pub fn transitive_closure(graph: &ConstraintGraph) -> ConstraintGraph {
    let n = graph.len();
    let mut out = graph.clone();
    let mut stack = Vec::new();
    for s in 0..n {
        let mut seen = FixedBitSet::with_capacity(n);
        stack.extend(graph.succ[s].ones());
        while let Some(u) = stack.pop() {
            if seen.put(u) {
                continue;
            }
            stack.extend(graph.succ[u].ones().filter(|&v| !seen.contains(v)));
        }
        out.succ[s] = seen;
    }
    out
}
