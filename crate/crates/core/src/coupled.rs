//! The (S,Q)-coupled graph, input policies, class analysis and stationary
//! distributions.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::channel::UnifilarChannel;
use crate::digraph::Digraph;
use crate::error::{Error, Result};
use crate::qgraph::QGraph;

/// Policy entries at or below this value are structural zeros for class
/// analysis.
pub const PRUNE_TOL: f64 = 1e-9;

/// Largest accepted `||pi T - pi||_inf` of a stationary solve.
pub const RESIDUAL_TOL: f64 = 1e-10;

const ROW_TOL: f64 = 1e-12;

/// Serialized policy: `u[x][s][q] = p(x | s, q)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub u: Vec<Vec<Vec<f64>>>,
}

/// Conditional input distribution `p(x | s, q)`.
///
/// Rows are stored per coupled node `s * nq + q`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputPolicy {
    nx: usize,
    ns: usize,
    nq: usize,
    u: Vec<f64>,
}

impl InputPolicy {
    /// Builds a policy from rows indexed by coupled node `s * nq + q`.
    pub fn from_rows(channel: &UnifilarChannel, nq: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let (nx, ns) = (channel.nx(), channel.ns());
        if rows.len() != ns * nq {
            return Err(Error::InvalidPolicy(format!(
                "expected {} rows, got {}",
                ns * nq,
                rows.len()
            )));
        }
        let mut u = Vec::with_capacity(ns * nq * nx);
        for (node, row) in rows.iter().enumerate() {
            let (s, q) = (node / nq, node % nq);
            if row.len() != nx {
                return Err(Error::InvalidPolicy(format!("row (s={s},q={q}) has {} entries", row.len())));
            }
            for (x, &v) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidPolicy(format!("u(x={x}|s={s},q={q}) = {v} outside [0,1]")));
                }
                if v > 0.0 && !channel.allowed(x, s) {
                    return Err(Error::InvalidPolicy(format!(
                        "input x={x} is masked in state s={s} but has probability {v}"
                    )));
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_TOL {
                return Err(Error::InvalidPolicy(format!("row (s={s},q={q}) sums to {sum}")));
            }
            u.extend_from_slice(row);
        }
        Ok(Self { nx, ns, nq, u })
    }

    /// Rows produced by the optimizer's own parameterization, which already
    /// satisfy the invariants.
    pub(crate) fn from_rows_unchecked(channel: &UnifilarChannel, nq: usize, rows: Vec<Vec<f64>>) -> Self {
        Self {
            nx: channel.nx(),
            ns: channel.ns(),
            nq,
            u: rows.into_iter().flatten().collect(),
        }
    }

    /// Builds a policy from a closure `(x, s, q) -> p(x|s,q)`.
    pub fn from_fn(
        channel: &UnifilarChannel,
        nq: usize,
        f: impl Fn(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let rows: Vec<Vec<f64>> = (0..channel.ns() * nq)
            .map(|node| (0..channel.nx()).map(|x| f(x, node / nq, node % nq)).collect())
            .collect();
        Self::from_rows(channel, nq, &rows)
    }

    /// Uniform distribution over the permitted inputs of each state.
    pub fn uniform(channel: &UnifilarChannel, nq: usize) -> Self {
        Self::from_fn(channel, nq, |x, s, _| {
            if channel.allowed(x, s) {
                1.0 / channel.permitted_inputs(s).len() as f64
            } else {
                0.0
            }
        })
        .expect("uniform policy is valid")
    }

    pub fn from_spec(channel: &UnifilarChannel, nq: usize, spec: &PolicySpec) -> Result<Self> {
        let (nx, ns) = (channel.nx(), channel.ns());
        if spec.u.len() != nx || spec.u.iter().any(|r| r.len() != ns || r.iter().any(|c| c.len() != nq)) {
            return Err(Error::InvalidPolicy(format!("u must have shape [{nx}][{ns}][{nq}]")));
        }
        Self::from_fn(channel, nq, |x, s, q| spec.u[x][s][q])
    }

    pub fn to_spec(&self) -> PolicySpec {
        PolicySpec {
            u: (0..self.nx)
                .map(|x| (0..self.ns).map(|s| (0..self.nq).map(|q| self.prob(x, s, q)).collect()).collect())
                .collect(),
        }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ns(&self) -> usize {
        self.ns
    }

    pub fn nq(&self) -> usize {
        self.nq
    }

    #[inline]
    pub fn prob(&self, x: usize, s: usize, q: usize) -> f64 {
        self.u[(s * self.nq + q) * self.nx + x]
    }

    /// Row `p(. | s, q)`.
    pub fn row(&self, s: usize, q: usize) -> &[f64] {
        let i = (s * self.nq + q) * self.nx;
        &self.u[i..i + self.nx]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.u.chunks(self.nx).map(<[f64]>::to_vec).collect()
    }
}

/// A labeled edge `(s,q) -> (s',q')` of the coupled graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoupledEdge {
    pub from: usize,
    pub to: usize,
    pub x: usize,
    pub y: usize,
}

/// The (S,Q)-coupled graph. Node `(s, q)` has index `s * nq + q`.
#[derive(Debug, Clone)]
pub struct CoupledGraph {
    ns: usize,
    nq: usize,
    edges: Vec<CoupledEdge>,
}

impl CoupledGraph {
    /// Edge `(s,q) -> (f(x,y,s), g(q,y))` with label `(x,y)` for every
    /// permitted `x` and every `y` with `W(y|x,s) > 0`.
    pub fn build(channel: &UnifilarChannel, qg: &QGraph) -> Result<Self> {
        if channel.ny() != qg.ny() {
            return Err(Error::AlphabetMismatch {
                channel: channel.ny(),
                qgraph: qg.ny(),
            });
        }
        let (ns, nq) = (channel.ns(), qg.nq());
        let mut edges = Vec::new();
        for s in 0..ns {
            for q in 0..nq {
                for x in channel.permitted_inputs(s) {
                    for y in 0..channel.ny() {
                        if channel.prob(y, x, s) > 0.0 {
                            edges.push(CoupledEdge {
                                from: s * nq + q,
                                to: channel.next_state(x, y, s) * nq + qg.next(q, y),
                                x,
                                y,
                            });
                        }
                    }
                }
            }
        }
        Ok(Self { ns, nq, edges })
    }

    pub fn ns(&self) -> usize {
        self.ns
    }

    pub fn nq(&self) -> usize {
        self.nq
    }

    pub fn len(&self) -> usize {
        self.ns * self.nq
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn node(&self, s: usize, q: usize) -> usize {
        s * self.nq + q
    }

    /// `(s, q)` of a node index.
    pub fn pair(&self, node: usize) -> (usize, usize) {
        (node / self.nq, node % self.nq)
    }

    pub fn edges(&self) -> &[CoupledEdge] {
        &self.edges
    }

    pub fn digraph(&self) -> Digraph {
        Digraph::from_edges(self.len(), self.edges.iter().map(|e| (e.from, e.to)))
    }

    pub fn closed_classes(&self) -> Vec<Vec<usize>> {
        self.digraph().closed_classes()
    }

    /// Every closed class touches every channel state and every context.
    pub fn lemma1_check(&self) -> bool {
        let classes = self.closed_classes();
        !classes.is_empty()
            && classes.iter().all(|class| {
                let mut s_seen = vec![false; self.ns];
                let mut q_seen = vec![false; self.nq];
                for &v in class {
                    let (s, q) = self.pair(v);
                    s_seen[s] = true;
                    q_seen[q] = true;
                }
                s_seen.iter().all(|&b| b) && q_seen.iter().all(|&b| b)
            })
    }

    /// Removes edges whose input has policy probability at most `tol`.
    pub fn prune(&self, policy: &InputPolicy, tol: f64) -> Self {
        let edges = self
            .edges
            .iter()
            .filter(|e| {
                let (s, q) = self.pair(e.from);
                policy.prob(e.x, s, q) > tol
            })
            .copied()
            .collect();
        Self {
            ns: self.ns,
            nq: self.nq,
            edges,
        }
    }

    /// Period and cyclic partition `A_0, ..., A_{D-1}` of a closed class.
    pub fn period(&self, class: &[usize]) -> Result<(usize, Vec<Vec<usize>>)> {
        let g = self.digraph();
        let mut member = vec![false; self.len()];
        for &v in class {
            member[v] = true;
        }
        let closed = class
            .iter()
            .all(|&v| g.successors(v).iter().all(|&w| member[w]));
        if !closed {
            return Err(Error::NotClosedClass);
        }
        g.period_and_partition(class).ok_or(Error::NotClosedClass)
    }
}

/// Closed class reached from `start`, or the first class in node order.
///
/// When `start` lies inside a closed class that class is returned; when it is
/// transient the first closed class reachable from it is used.
pub fn select_class(cg: &CoupledGraph, classes: &[Vec<usize>], start: Option<usize>) -> Option<usize> {
    match start {
        None => (!classes.is_empty()).then_some(0),
        Some(v) => {
            let seen = cg.digraph().reachable(v);
            classes.iter().position(|c| seen[c[0]])
        }
    }
}

/// Whether the pruned coupled graph has exactly one closed class.
pub fn in_p_pi(channel: &UnifilarChannel, qg: &QGraph, policy: &InputPolicy, tol: f64) -> Result<bool> {
    let cg = CoupledGraph::build(channel, qg)?;
    check_shape(&cg, policy)?;
    Ok(cg.prune(policy, tol).closed_classes().len() == 1)
}

fn check_shape(cg: &CoupledGraph, policy: &InputPolicy) -> Result<()> {
    if policy.ns() != cg.ns() || policy.nq() != cg.nq() {
        return Err(Error::InvalidPolicy(format!(
            "policy shape (ns={}, nq={}) does not match coupled graph (ns={}, nq={})",
            policy.ns(),
            policy.nq(),
            cg.ns(),
            cg.nq()
        )));
    }
    Ok(())
}

/// Transition matrix `T[(s,q) -> (s',q')] = sum_{x,y} W(y|x,s) u(x|s,q)`.
pub fn transfer_matrix(channel: &UnifilarChannel, qg: &QGraph, policy: &InputPolicy) -> DMatrix<f64> {
    let (ns, nq) = (channel.ns(), qg.nq());
    let n = ns * nq;
    let mut t = DMatrix::zeros(n, n);
    for s in 0..ns {
        for q in 0..nq {
            for x in 0..channel.nx() {
                let ux = policy.prob(x, s, q);
                if ux == 0.0 {
                    continue;
                }
                for y in 0..channel.ny() {
                    let w = channel.prob(y, x, s);
                    if w > 0.0 {
                        t[(s * nq + q, channel.next_state(x, y, s) * nq + qg.next(q, y))] += w * ux;
                    }
                }
            }
        }
    }
    t
}

/// Stationary distribution over coupled nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Stationary {
    ns: usize,
    nq: usize,
    /// `pi[s * nq + q]`; zero outside the class.
    pub pi: Vec<f64>,
    /// The closed class supporting `pi`.
    pub class: Vec<usize>,
    /// `||pi T - pi||_inf` on the class chain.
    pub residual: f64,
}

impl Stationary {
    pub fn get(&self, s: usize, q: usize) -> f64 {
        self.pi[s * self.nq + q]
    }

    /// Marginal `pi(q)`.
    pub fn q_marginal(&self, q: usize) -> f64 {
        (0..self.ns).map(|s| self.get(s, q)).sum()
    }

    /// `pi(s | q)`, or `None` when `pi(q) = 0`.
    pub fn conditional(&self, q: usize) -> Option<Vec<f64>> {
        let m = self.q_marginal(q);
        (m > 0.0).then(|| (0..self.ns).map(|s| self.get(s, q) / m).collect())
    }
}

/// Unique stationary distribution of a policy in `P_pi`.
pub fn stationary(channel: &UnifilarChannel, qg: &QGraph, policy: &InputPolicy) -> Result<Stationary> {
    let cg = CoupledGraph::build(channel, qg)?;
    check_shape(&cg, policy)?;
    let classes = cg.prune(policy, PRUNE_TOL).closed_classes();
    if classes.len() != 1 {
        return Err(Error::NotInPPi(classes.len()));
    }
    stationary_on_class(channel, qg, policy, &classes[0])
}

/// Stationary distribution of the chain restricted to one closed class of the
/// pruned coupled graph.
///
/// Rows are renormalized on the class, so pruned mass (at most `PRUNE_TOL`
/// per entry) is treated as a structural zero. The balance equations are
/// solved densely with the last one replaced by the normalization row.
pub fn stationary_on_class(
    channel: &UnifilarChannel,
    qg: &QGraph,
    policy: &InputPolicy,
    class: &[usize],
) -> Result<Stationary> {
    let t = transfer_matrix(channel, qg, policy);
    let k = class.len();
    if k == 0 {
        return Err(Error::NotClosedClass);
    }
    let mut tc = DMatrix::zeros(k, k);
    for (i, &a) in class.iter().enumerate() {
        for (j, &b) in class.iter().enumerate() {
            tc[(i, j)] = t[(a, b)];
        }
        let row_sum: f64 = tc.row(i).sum();
        if row_sum <= 0.0 {
            return Err(Error::NotClosedClass);
        }
        tc.row_mut(i).unscale_mut(row_sum);
    }

    let mut a = tc.transpose() - DMatrix::identity(k, k);
    a.row_mut(k - 1).fill(1.0);
    let mut b = DVector::zeros(k);
    b[k - 1] = 1.0;
    let x = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::SingularSystem("balance equations are singular".into()))?;

    let mut pc: Vec<f64> = x.iter().map(|&v| v.max(0.0)).collect();
    let total: f64 = pc.iter().sum();
    if !total.is_finite() || total <= 0.0 {
        return Err(Error::SingularSystem("solution is not a distribution".into()));
    }
    pc.iter_mut().for_each(|v| *v /= total);

    let pv = DVector::from_vec(pc.clone());
    let residual = (tc.transpose() * &pv - &pv).amax();
    if residual > RESIDUAL_TOL {
        return Err(Error::SingularSystem(format!("residual {residual:.3e} exceeds {RESIDUAL_TOL:.0e}")));
    }

    let mut pi = vec![0.0; t.nrows()];
    for (i, &v) in class.iter().enumerate() {
        pi[v] = pc[i];
    }
    let mut class = class.to_vec();
    class.sort_unstable();
    Ok(Stationary {
        ns: channel.ns(),
        nq: qg.nq(),
        pi,
        class,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bec2_policy(c: &UnifilarChannel, p: f64) -> InputPolicy {
        // p(x=1|s=0,q1) = p; every other permitted row puts mass on x=0
        InputPolicy::from_fn(c, 2, |x, s, q| match (s, q) {
            (0, 0) => [1.0 - p, p][x],
            _ => [1.0, 0.0][x],
        })
        .unwrap()
    }

    fn power_iteration(t: &DMatrix<f64>, iters: usize) -> Vec<f64> {
        let n = t.nrows();
        let mut v = DVector::from_element(n, 1.0 / n as f64);
        for _ in 0..iters {
            v = t.transpose() * v;
        }
        v.iter().copied().collect()
    }

    #[test]
    fn policy_validation() {
        let c = UnifilarChannel::bec_no11(0.5).unwrap();
        let bad = InputPolicy::from_fn(&c, 1, |_, _, _| 0.5);
        assert!(matches!(bad, Err(Error::InvalidPolicy(m)) if m.contains("masked")));
        let short = InputPolicy::from_fn(&c, 1, |x, _, _| [0.4, 0.0][x]);
        assert!(short.is_err());
        let u = InputPolicy::uniform(&c, 2);
        assert_eq!(u.row(1, 1), &[1.0, 0.0]);
        assert_eq!(u.row(0, 1), &[0.5, 0.5]);
    }

    #[test]
    fn policy_spec_round_trip() {
        let c = UnifilarChannel::bec_no11(0.5).unwrap();
        let u = bec2_policy(&c, 0.3);
        let back = InputPolicy::from_spec(&c, 2, &u.to_spec()).unwrap();
        assert_eq!(back, u);
    }

    #[test]
    fn bec2_coupled_class() {
        let c = UnifilarChannel::bec_no11(0.4).unwrap();
        let cg = CoupledGraph::build(&c, &QGraph::bec2()).unwrap();
        let classes = cg.closed_classes();
        // nodes s*2+q: (s0,q1)=0, (s1,q1)=2, (s1,q2)=3; (s0,q2)=1 is transient
        assert_eq!(classes, vec![vec![0, 2, 3]]);
        assert!(cg.lemma1_check());
        let (d, _) = cg.period(&classes[0]).unwrap();
        assert_eq!(d, 1);
    }

    #[test]
    fn dec3_coupled_class() {
        let c = UnifilarChannel::dec(0.3).unwrap();
        let cg = CoupledGraph::build(&c, &QGraph::dec3()).unwrap();
        let classes = cg.closed_classes();
        // (s1,q1)=3 and (s0,q2)=1 are outside
        assert_eq!(classes, vec![vec![0, 2, 4, 5]]);
        assert!(cg.lemma1_check());
        assert_eq!(cg.period(&classes[0]).unwrap().0, 1);
    }

    #[test]
    fn trivial_graph_mirrors_state_graph() {
        let c = UnifilarChannel::trapdoor(0.5).unwrap();
        let cg = CoupledGraph::build(&c, &QGraph::trivial(2)).unwrap();
        let mut pairs: Vec<_> = cg.edges().iter().map(|e| (e.from, e.to)).collect();
        pairs.sort_unstable();
        pairs.dedup();
        let sg = c.state_graph();
        let mut expected: Vec<_> = (0..2).flat_map(|s| sg.successors(s).iter().map(move |&t| (s, t))).collect();
        expected.sort_unstable();
        assert_eq!(pairs, expected);
    }

    #[test]
    fn alphabet_mismatch() {
        let c = UnifilarChannel::dec(0.3).unwrap();
        assert!(matches!(
            CoupledGraph::build(&c, &QGraph::bec2()),
            Err(Error::AlphabetMismatch { channel: 4, qgraph: 3 })
        ));
    }

    #[test]
    fn prune_removes_zero_inputs() {
        let c = UnifilarChannel::bec_no11(0.4).unwrap();
        let cg = CoupledGraph::build(&c, &QGraph::bec2()).unwrap();
        let pruned = cg.prune(&bec2_policy(&c, 0.0), PRUNE_TOL);
        assert!(!pruned.edges().iter().any(|e| e.from == 0 && e.x == 1));
        let kept = cg.prune(&InputPolicy::uniform(&c, 2), PRUNE_TOL);
        assert_eq!(kept.edges(), cg.edges());
    }

    #[test]
    fn two_absorbing_halves_not_in_p_pi() {
        // trapdoor with p=0 and x=s: output equals state, state never flips
        let c = UnifilarChannel::trapdoor(0.0).unwrap();
        let frozen = InputPolicy::from_fn(&c, 1, |x, s, _| if x == s { 1.0 } else { 0.0 }).unwrap();
        assert!(!in_p_pi(&c, &QGraph::trivial(2), &frozen, PRUNE_TOL).unwrap());
        assert!(matches!(
            stationary(&c, &QGraph::trivial(2), &frozen),
            Err(Error::NotInPPi(2))
        ));
    }

    #[test]
    fn uniform_policies_in_p_pi() {
        let pairs = [
            (UnifilarChannel::bec_no11(0.3).unwrap(), QGraph::bec2()),
            (UnifilarChannel::bec_no11(0.3).unwrap(), QGraph::bec3()),
            (UnifilarChannel::dec(0.3).unwrap(), QGraph::dec3()),
        ];
        for (c, g) in pairs {
            assert!(in_p_pi(&c, &g, &InputPolicy::uniform(&c, g.nq()), PRUNE_TOL).unwrap());
        }
    }

    #[test]
    fn bec2_stationary_closed_form() {
        for eps in [0.25, 0.5, 0.75] {
            for p in [0.25, 0.5, 0.75] {
                let c = UnifilarChannel::bec_no11(eps).unwrap();
                let st = stationary(&c, &QGraph::bec2(), &bec2_policy(&c, p)).unwrap();
                let want = [1.0 / (1.0 + p), eps * p / (1.0 + p), (1.0 - eps) * p / (1.0 + p)];
                let got = [st.get(0, 0), st.get(1, 0), st.get(1, 1)];
                for (a, b) in got.iter().zip(want) {
                    assert!((a - b).abs() < 1e-12, "{got:?} vs {want:?}");
                }
                assert_eq!(st.get(0, 1), 0.0);
                assert!(st.residual <= RESIDUAL_TOL);
            }
        }
    }

    #[test]
    fn linear_solve_matches_power_iteration() {
        let c = UnifilarChannel::dec(0.4).unwrap();
        let g = QGraph::dec3();
        let u = InputPolicy::from_fn(&c, 3, |x, s, q| {
            let v = 0.2 + 0.1 * (s + 2 * q) as f64;
            [v, 1.0 - v][x]
        })
        .unwrap();
        let st = stationary(&c, &g, &u).unwrap();
        let pw = power_iteration(&transfer_matrix(&c, &g, &u), 5000);
        for (a, b) in st.pi.iter().zip(&pw) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn two_cycle_period() {
        // trapdoor(1) has next state x, so x = s ^ 1 flips the state every
        // step and a 1-node graph gives a 2-cycle
        let c = UnifilarChannel::trapdoor(1.0).unwrap();
        let flip = InputPolicy::from_fn(&c, 1, |x, s, _| if x != s { 1.0 } else { 0.0 }).unwrap();
        let cg = CoupledGraph::build(&c, &QGraph::trivial(2)).unwrap().prune(&flip, PRUNE_TOL);
        let classes = cg.closed_classes();
        assert_eq!(classes.len(), 1);
        let (d, parts) = cg.period(&classes[0]).unwrap();
        assert_eq!(d, 2);
        assert_eq!(parts, vec![vec![0], vec![1]]);
        // the Cesaro stationary vector still exists
        let st = stationary(&c, &QGraph::trivial(2), &flip).unwrap();
        assert!((st.pi[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn non_closed_class_rejected() {
        let c = UnifilarChannel::bec_no11(0.4).unwrap();
        let cg = CoupledGraph::build(&c, &QGraph::bec2()).unwrap();
        assert!(matches!(cg.period(&[1]), Err(Error::NotClosedClass)));
    }

    #[test]
    fn class_selection_follows_start() {
        let c = UnifilarChannel::trapdoor(0.0).unwrap();
        let frozen = InputPolicy::from_fn(&c, 1, |x, s, _| if x == s { 1.0 } else { 0.0 }).unwrap();
        let cg = CoupledGraph::build(&c, &QGraph::trivial(2)).unwrap().prune(&frozen, PRUNE_TOL);
        let classes = cg.closed_classes();
        assert_eq!(select_class(&cg, &classes, None), Some(0));
        assert_eq!(select_class(&cg, &classes, Some(1)), Some(1));
    }
}
