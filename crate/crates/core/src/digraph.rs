//! Plain directed-graph utilities shared by the channel, Q-graph and coupled-graph modules.

use std::collections::VecDeque;

/// Adjacency-list digraph on nodes `0..n`.
#[derive(Debug, Clone)]
pub struct Digraph {
    adj: Vec<Vec<usize>>,
}

impl Digraph {
    pub fn new(n: usize) -> Self {
        Self { adj: vec![Vec::new(); n] }
    }

    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut g = Self::new(n);
        for (a, b) in edges {
            g.add_edge(a, b);
        }
        g
    }

    pub fn add_edge(&mut self, a: usize, b: usize) {
        if !self.adj[a].contains(&b) {
            self.adj[a].push(b);
        }
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    pub fn successors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    /// Nodes reachable from `start` (including `start`).
    pub fn reachable(&self, start: usize) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(v) = stack.pop() {
            for &w in &self.adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen
    }

    pub fn is_strongly_connected(&self) -> bool {
        if self.is_empty() {
            return true;
        }
        self.strongly_connected_components().len() == 1
    }

    /// Tarjan's algorithm, iterative. Components are returned with sorted
    /// members, ordered by their smallest node.
    pub fn strongly_connected_components(&self) -> Vec<Vec<usize>> {
        let n = self.len();
        let mut index = vec![usize::MAX; n];
        let mut low = vec![0usize; n];
        let mut on_stack = vec![false; n];
        let mut stack = Vec::new();
        let mut comps = Vec::new();
        let mut counter = 0;

        for root in 0..n {
            if index[root] != usize::MAX {
                continue;
            }
            // (node, next child position)
            let mut call: Vec<(usize, usize)> = vec![(root, 0)];
            index[root] = counter;
            low[root] = counter;
            counter += 1;
            stack.push(root);
            on_stack[root] = true;

            while let Some(&mut (v, ref mut pos)) = call.last_mut() {
                if *pos < self.adj[v].len() {
                    let w = self.adj[v][*pos];
                    *pos += 1;
                    if index[w] == usize::MAX {
                        index[w] = counter;
                        low[w] = counter;
                        counter += 1;
                        stack.push(w);
                        on_stack[w] = true;
                        call.push((w, 0));
                    } else if on_stack[w] {
                        low[v] = low[v].min(index[w]);
                    }
                } else {
                    call.pop();
                    if let Some(&(parent, _)) = call.last() {
                        low[parent] = low[parent].min(low[v]);
                    }
                    if low[v] == index[v] {
                        let mut comp = Vec::new();
                        loop {
                            let w = stack.pop().expect("tarjan stack");
                            on_stack[w] = false;
                            comp.push(w);
                            if w == v {
                                break;
                            }
                        }
                        comp.sort_unstable();
                        comps.push(comp);
                    }
                }
            }
        }
        comps.sort_by_key(|c| c[0]);
        comps
    }

    /// Strongly connected components with no edge leaving them.
    pub fn closed_classes(&self) -> Vec<Vec<usize>> {
        let comps = self.strongly_connected_components();
        let mut comp_of = vec![0; self.len()];
        for (i, c) in comps.iter().enumerate() {
            for &v in c {
                comp_of[v] = i;
            }
        }
        comps
            .iter()
            .enumerate()
            .filter(|(i, c)| {
                c.iter()
                    .all(|&v| self.adj[v].iter().all(|&w| comp_of[w] == *i))
            })
            .map(|(_, c)| c.clone())
            .collect()
    }

    /// Period of a strongly connected node set and its cyclic partition.
    ///
    /// BFS levels from the smallest member; the period is the gcd of
    /// `level[u] + 1 - level[v]` over internal edges. Returns `None` if the
    /// set is not strongly connected.
    pub fn period_and_partition(&self, class: &[usize]) -> Option<(usize, Vec<Vec<usize>>)> {
        if class.is_empty() {
            return None;
        }
        let mut member = vec![false; self.len()];
        for &v in class {
            member[v] = true;
        }
        let mut level = vec![usize::MAX; self.len()];
        let root = class[0];
        level[root] = 0;
        let mut queue = VecDeque::from([root]);
        while let Some(v) = queue.pop_front() {
            for &w in &self.adj[v] {
                if member[w] && level[w] == usize::MAX {
                    level[w] = level[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        if class.iter().any(|&v| level[v] == usize::MAX) {
            return None;
        }
        // every member must also reach the root for strong connectivity
        let mut rev = Digraph::new(self.len());
        for &v in class {
            for &w in &self.adj[v] {
                if member[w] {
                    rev.add_edge(w, v);
                }
            }
        }
        let back = rev.reachable(root);
        if class.iter().any(|&v| !back[v]) {
            return None;
        }

        let mut d = 0usize;
        for &v in class {
            for &w in &self.adj[v] {
                if member[w] {
                    let diff = (level[v] + 1) as i64 - level[w] as i64;
                    d = gcd(d, diff.unsigned_abs() as usize);
                }
            }
        }
        let d = d.max(1);
        let mut parts = vec![Vec::new(); d];
        for &v in class {
            parts[level[v] % d].push(v);
        }
        for p in &mut parts {
            p.sort_unstable();
        }
        Some((d, parts))
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_cycle_period() {
        let g = Digraph::from_edges(3, [(0, 1), (1, 2), (2, 0)]);
        let (d, parts) = g.period_and_partition(&[0, 1, 2]).unwrap();
        assert_eq!(d, 3);
        assert_eq!(parts, vec![vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn self_loop_is_aperiodic() {
        let g = Digraph::from_edges(2, [(0, 1), (1, 0), (0, 0)]);
        assert_eq!(g.period_and_partition(&[0, 1]).unwrap().0, 1);
    }

    #[test]
    fn two_self_loops_two_classes() {
        let g = Digraph::from_edges(2, [(0, 0), (1, 1)]);
        assert_eq!(g.closed_classes(), vec![vec![0], vec![1]]);
        assert!(!g.is_strongly_connected());
    }

    #[test]
    fn transient_node_excluded() {
        // 0 -> 1 <-> 2
        let g = Digraph::from_edges(3, [(0, 1), (1, 2), (2, 1)]);
        assert_eq!(g.closed_classes(), vec![vec![1, 2]]);
        let (d, parts) = g.period_and_partition(&[1, 2]).unwrap();
        assert_eq!(d, 2);
        assert_eq!(parts, vec![vec![1], vec![2]]);
    }

    #[test]
    fn not_strongly_connected_set_rejected() {
        let g = Digraph::from_edges(2, [(0, 1), (1, 1)]);
        assert!(g.period_and_partition(&[0, 1]).is_none());
    }
}
