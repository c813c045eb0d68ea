//! Q-graphs: deterministic automata that quantize output histories into a
//! finite set of contexts.

use serde::{Deserialize, Serialize};

use crate::digraph::Digraph;
use crate::error::{Error, Result};

/// Serialized Q-graph (the JSON file format). `g` is indexed `[q][y]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QGraphSpec {
    pub nq: usize,
    pub ny: usize,
    pub g: Vec<Vec<usize>>,
    #[serde(default)]
    pub name: String,
}

/// A finite context automaton with one outgoing edge per output symbol.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QGraph {
    nq: usize,
    ny: usize,
    g: Vec<usize>,
    name: String,
}

impl QGraph {
    /// Builds a graph from a `[q][y]` transition table.
    pub fn new(ny: usize, g: Vec<Vec<usize>>, name: impl Into<String>) -> Result<Self> {
        Self::from_spec(&QGraphSpec {
            nq: g.len(),
            ny,
            g,
            name: name.into(),
        })
    }

    pub fn from_spec(spec: &QGraphSpec) -> Result<Self> {
        if spec.nq == 0 || spec.ny == 0 {
            return Err(Error::InvalidQGraph(format!(
                "sizes must be positive (nq={}, ny={})",
                spec.nq, spec.ny
            )));
        }
        if spec.g.len() != spec.nq {
            return Err(Error::InvalidQGraph(format!(
                "g has {} rows, expected nq={}",
                spec.g.len(),
                spec.nq
            )));
        }
        let mut g = Vec::with_capacity(spec.nq * spec.ny);
        for (q, row) in spec.g.iter().enumerate() {
            if row.len() != spec.ny {
                return Err(Error::InvalidQGraph(format!(
                    "node {q} has {} outgoing edges, expected {}",
                    row.len(),
                    spec.ny
                )));
            }
            for (y, &t) in row.iter().enumerate() {
                if t >= spec.nq {
                    return Err(Error::InvalidQGraph(format!("g({q},{y}) = {t} out of range")));
                }
                g.push(t);
            }
        }
        Ok(Self {
            nq: spec.nq,
            ny: spec.ny,
            g,
            name: spec.name.clone(),
        })
    }

    pub fn to_spec(&self) -> QGraphSpec {
        QGraphSpec {
            nq: self.nq,
            ny: self.ny,
            g: (0..self.nq).map(|q| self.row(q).to_vec()).collect(),
            name: self.name.clone(),
        }
    }

    pub fn nq(&self) -> usize {
        self.nq
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// `g(q, y)`.
    #[inline]
    pub fn next(&self, q: usize, y: usize) -> usize {
        self.g[q * self.ny + y]
    }

    pub fn row(&self, q: usize) -> &[usize] {
        &self.g[q * self.ny..(q + 1) * self.ny]
    }

    /// Unlabeled successor structure.
    pub fn digraph(&self) -> Digraph {
        Digraph::from_edges(
            self.nq,
            (0..self.nq).flat_map(|q| self.row(q).iter().map(move |&t| (q, t))),
        )
    }

    pub fn is_irreducible(&self) -> bool {
        self.digraph().is_strongly_connected()
    }

    /// Context reached from `q0` after reading `outputs`.
    pub fn run(&self, q0: usize, outputs: &[usize]) -> Result<usize> {
        if q0 >= self.nq {
            return Err(Error::InvalidQGraph(format!("start node {q0} out of range")));
        }
        outputs.iter().try_fold(q0, |q, &y| {
            if y >= self.ny {
                Err(Error::SymbolOutOfRange {
                    symbol: y,
                    size: self.ny,
                })
            } else {
                Ok(self.next(q, y))
            }
        })
    }

    /// Graph with node `q` renamed to `perm[q]`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.nq];
        if perm.len() != self.nq || perm.iter().any(|&p| p >= self.nq || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::InvalidQGraph("relabeling is not a permutation".into()));
        }
        let mut g = vec![vec![0; self.ny]; self.nq];
        for q in 0..self.nq {
            for y in 0..self.ny {
                g[perm[q]][y] = perm[self.next(q, y)];
            }
        }
        Self::new(self.ny, g, self.name.clone())
    }

    /// A node bijection `phi` with `phi(g(q,y)) = g'(phi(q),y)`, if one
    /// exists. Output labels are kept fixed.
    pub fn isomorphism(&self, other: &QGraph) -> Option<Vec<usize>> {
        if self.nq != other.nq || self.ny != other.ny {
            return None;
        }
        let mut map = vec![usize::MAX; self.nq];
        let mut used = vec![false; self.nq];
        self.extend_iso(other, &mut map, &mut used).then_some(map)
    }

    pub fn is_isomorphic(&self, other: &QGraph) -> bool {
        self.isomorphism(other).is_some()
    }

    // Backtracking over the first unmapped node; every choice is closed
    // under the transition constraints before recursing.
    fn extend_iso(&self, other: &QGraph, map: &mut Vec<usize>, used: &mut Vec<bool>) -> bool {
        let Some(free) = map.iter().position(|&m| m == usize::MAX) else {
            return true;
        };
        for cand in 0..other.nq {
            if used[cand] {
                continue;
            }
            let (saved_map, saved_used) = (map.clone(), used.clone());
            if self.propagate(other, free, cand, map, used) && self.extend_iso(other, map, used) {
                return true;
            }
            *map = saved_map;
            *used = saved_used;
        }
        false
    }

    fn propagate(
        &self,
        other: &QGraph,
        a: usize,
        b: usize,
        map: &mut [usize],
        used: &mut [bool],
    ) -> bool {
        let mut stack = vec![(a, b)];
        while let Some((q, t)) = stack.pop() {
            if map[q] != usize::MAX {
                if map[q] != t {
                    return false;
                }
                continue;
            }
            if used[t] {
                return false;
            }
            map[q] = t;
            used[t] = true;
            for y in 0..self.ny {
                stack.push((self.next(q, y), other.next(t, y)));
            }
        }
        true
    }

    /// Two-node graph for the constrained erasure channel, outputs `[0, 1, ?]`:
    /// node 0 stays on `0` and `?` and moves to node 1 on `1`; node 1
    /// returns to node 0 on every output.
    pub fn bec2() -> Self {
        Self::new(3, vec![vec![0, 1, 0], vec![0, 0, 0]], "bec2").expect("valid builtin")
    }

    /// Three-node graph for the constrained erasure channel: `1` leads to
    /// node 0, `0` leads to node 1, and `?` moves 0 -> 1 -> 2 -> 2.
    pub fn bec3() -> Self {
        Self::new(3, vec![vec![1, 0, 1], vec![1, 0, 2], vec![1, 0, 2]], "bec3").expect("valid builtin")
    }

    /// Three-node graph for the dicode erasure channel, outputs
    /// `[-1, 0, 1, ?]`: `-1`, `1` and `?` lead to nodes 0, 1 and 2, while `0`
    /// keeps the current node.
    pub fn dec3() -> Self {
        Self::new(
            4,
            vec![vec![0, 0, 1, 2], vec![0, 1, 1, 2], vec![0, 2, 1, 2]],
            "dec3",
        )
        .expect("valid builtin")
    }

    /// Single node with self-loops on all `ny` outputs.
    pub fn trivial(ny: usize) -> Self {
        Self::new(ny, vec![vec![0; ny]], "trivial").expect("valid trivial graph")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{bec, dec};

    #[test]
    fn builtins_irreducible() {
        for g in [QGraph::bec2(), QGraph::bec3(), QGraph::dec3(), QGraph::trivial(3)] {
            assert!(g.is_irreducible(), "{}", g.name());
            for q in 0..g.nq() {
                assert_eq!(g.row(q).len(), g.ny());
            }
        }
    }

    #[test]
    fn unreachable_node_is_reducible() {
        let g = QGraph::new(2, vec![vec![0, 0], vec![0, 0]], "t").unwrap();
        assert!(!g.is_irreducible());
    }

    #[test]
    fn bec2_edges() {
        let g = QGraph::bec2();
        assert_eq!(g.next(0, bec::ZERO), 0);
        assert_eq!(g.next(0, bec::ERASURE), 0);
        assert_eq!(g.next(0, bec::ONE), 1);
        assert!((0..3).all(|y| g.next(1, y) == 0));
    }

    #[test]
    fn bec3_edges() {
        let g = QGraph::bec3();
        assert!((0..3).all(|q| g.next(q, bec::ONE) == 0));
        assert!((0..3).all(|q| g.next(q, bec::ZERO) == 1));
        assert_eq!(g.next(2, bec::ERASURE), 2);
    }

    #[test]
    fn dec3_edges() {
        let g = QGraph::dec3();
        assert_eq!(g.next(2, dec::PLUS), 1);
        assert_eq!(g.next(0, dec::ZERO), 0);
        assert!((0..3).all(|q| g.next(q, dec::ERASURE) == 2));
    }

    #[test]
    fn run_examples() {
        let g = QGraph::bec2();
        assert_eq!(g.run(0, &[bec::ZERO, bec::ERASURE, bec::ONE]).unwrap(), 1);
        assert_eq!(g.run(1, &[]).unwrap(), 1);
        let d = QGraph::dec3();
        assert_eq!(d.run(2, &[dec::ZERO, dec::MINUS]).unwrap(), 0);
        assert!(matches!(
            d.run(0, &[7]),
            Err(Error::SymbolOutOfRange { symbol: 7, size: 4 })
        ));
    }

    #[test]
    fn malformed_specs_rejected() {
        assert!(QGraph::new(2, vec![vec![0]], "short").is_err());
        assert!(QGraph::new(2, vec![vec![0, 3]], "range").is_err());
        assert!(QGraph::new(2, vec![], "empty").is_err());
    }

    #[test]
    fn relabel_is_isomorphic() {
        let g = QGraph::dec3();
        let h = g.relabel(&[2, 0, 1]).unwrap();
        assert_ne!(g, h);
        let phi = g.isomorphism(&h).unwrap();
        assert_eq!(phi, vec![2, 0, 1]);
        assert!(!QGraph::bec2().is_isomorphic(&QGraph::trivial(3)));
        assert!(!QGraph::bec3().is_isomorphic(&QGraph::bec3().with_edge(0, 2, 0)));
    }

    #[test]
    fn spec_round_trip() {
        let g = QGraph::bec3();
        let json = serde_json::to_string(&g.to_spec()).unwrap();
        let back: QGraphSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(QGraph::from_spec(&back).unwrap(), g);
    }

    impl QGraph {
        fn with_edge(mut self, q: usize, y: usize, t: usize) -> Self {
            self.g[q * self.ny + y] = t;
            self
        }
    }
}
