//! Forward (BCJR) belief recursion, the invariance test on a Q-graph and the
//! certified lower bound built on it.

use serde::Serialize;

use crate::bound::objective_at;
use crate::channel::UnifilarChannel;
use crate::coupled::{self, CoupledGraph, InputPolicy, Stationary};
use crate::error::{Error, Result};
use crate::qgraph::QGraph;

const SIMPLEX_TOL: f64 = 1e-12;

/// A probability vector over channel states.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct Belief(Vec<f64>);

impl Belief {
    pub fn new(z: Vec<f64>) -> Result<Self> {
        if z.is_empty() {
            return Err(Error::InvalidBelief("empty belief".into()));
        }
        if z.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidBelief(format!("negative or non-finite entry in {z:?}")));
        }
        let sum: f64 = z.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidBelief(format!("entries sum to {sum}")));
        }
        Ok(Self(z))
    }

    /// Point mass on state `s`.
    pub fn point(ns: usize, s: usize) -> Self {
        let mut z = vec![0.0; ns];
        z[s] = 1.0;
        Self(z)
    }

    pub fn uniform(ns: usize) -> Self {
        Self(vec![1.0 / ns as f64; ns])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Sup-norm distance.
    pub fn dist(&self, other: &Belief) -> f64 {
        linf(&self.0, &other.0)
    }
}

pub(crate) fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// A state-dependent input distribution `u(x | s)`, stored as `u[s * nx + x]`.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct StateAction {
    nx: usize,
    u: Vec<f64>,
}

impl StateAction {
    /// Validates rows `u[s][x]` against the channel mask.
    pub fn new(channel: &UnifilarChannel, rows: &[Vec<f64>]) -> Result<Self> {
        if rows.len() != channel.ns() || rows.iter().any(|r| r.len() != channel.nx()) {
            return Err(Error::InvalidPolicy(format!(
                "action must have shape [{}][{}]",
                channel.ns(),
                channel.nx()
            )));
        }
        for (s, row) in rows.iter().enumerate() {
            for (x, &v) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidPolicy(format!("u(x={x}|s={s}) = {v} outside [0,1]")));
                }
                if v > 0.0 && !channel.allowed(x, s) {
                    return Err(Error::InvalidPolicy(format!("input x={x} is masked in state s={s}")));
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > SIMPLEX_TOL {
                return Err(Error::InvalidPolicy(format!("action row s={s} sums to {sum}")));
            }
        }
        Ok(Self {
            nx: channel.nx(),
            u: rows.concat(),
        })
    }

    pub(crate) fn from_flat(nx: usize, u: Vec<f64>) -> Self {
        Self { nx, u }
    }

    /// Row `(s, q)` of a policy.
    pub fn from_policy(policy: &InputPolicy, q: usize) -> Self {
        Self {
            nx: policy.nx(),
            u: (0..policy.ns()).flat_map(|s| policy.row(s, q).to_vec()).collect(),
        }
    }

    #[inline]
    pub fn prob(&self, x: usize, s: usize) -> f64 {
        self.u[s * self.nx + x]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.u
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.u.chunks(self.nx).map(<[f64]>::to_vec).collect()
    }
}

/// `p(y)` for every output under belief `z` and action `u`.
pub fn output_distribution(channel: &UnifilarChannel, z: &[f64], u: &StateAction) -> Vec<f64> {
    let mut py = vec![0.0; channel.ny()];
    for (s, &zs) in z.iter().enumerate() {
        if zs == 0.0 {
            continue;
        }
        for x in 0..channel.nx() {
            let m = zs * u.prob(x, s);
            if m == 0.0 {
                continue;
            }
            for (y, p) in py.iter_mut().enumerate() {
                *p += m * channel.prob(y, x, s);
            }
        }
    }
    py
}

/// Unnormalized update: writes `sum_{x,s} 1[s'=f(x,y,s)] W(y|x,s) u(x|s) z(s)`
/// into `out` and returns its total `p(y)`.
pub(crate) fn update_unnormalized(
    channel: &UnifilarChannel,
    z: &[f64],
    u: &StateAction,
    y: usize,
    out: &mut [f64],
) -> f64 {
    out.iter_mut().for_each(|v| *v = 0.0);
    for (s, &zs) in z.iter().enumerate() {
        if zs == 0.0 {
            continue;
        }
        for x in 0..channel.nx() {
            let m = zs * u.prob(x, s) * channel.prob(y, x, s);
            if m > 0.0 {
                out[channel.next_state(x, y, s)] += m;
            }
        }
    }
    out.iter().sum()
}

/// The belief map `B(z, u, y)`. Fails when `p(y) = 0`.
pub fn bcjr_update(channel: &UnifilarChannel, z: &Belief, u: &StateAction, y: usize) -> Result<Belief> {
    if y >= channel.ny() {
        return Err(Error::SymbolOutOfRange {
            symbol: y,
            size: channel.ny(),
        });
    }
    let mut out = vec![0.0; channel.ns()];
    let py = update_unnormalized(channel, z.as_slice(), u, y, &mut out);
    if py <= 0.0 {
        return Err(Error::ZeroProbabilityOutput { y });
    }
    out.iter_mut().for_each(|v| *v /= py);
    Ok(Belief(out))
}

/// State distribution after an output that has zero probability under the
/// current belief and action: `z'(s') ∝ sum over permitted (x,s) of
/// 1[s'=f(x,y,s)] W(y|x,s)`. `None` if the channel can never emit `y`.
pub fn structural_update(channel: &UnifilarChannel, y: usize) -> Option<Belief> {
    let mut out = vec![0.0; channel.ns()];
    for s in 0..channel.ns() {
        for x in channel.permitted_inputs(s) {
            out[channel.next_state(x, y, s)] += channel.prob(y, x, s);
        }
    }
    let total: f64 = out.iter().sum();
    (total > 0.0).then(|| Belief(out.into_iter().map(|v| v / total).collect()))
}

/// Tolerances of the invariance test.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct InvarianceOptions {
    /// Policy entries at or below this are pruned from the coupled graph.
    pub prune_tol: f64,
    /// Outputs with `p(y|q)` at or below this are exempt.
    pub output_tol: f64,
    /// Largest accepted sup-norm gap between `B(pi_{S|q}, y)` and `pi_{S|g(q,y)}`.
    pub gap_tol: f64,
}

impl Default for InvarianceOptions {
    fn default() -> Self {
        Self {
            prune_tol: coupled::PRUNE_TOL,
            output_tol: 1e-9,
            gap_tol: 1e-8,
        }
    }
}

/// The closed class of the pruned coupled graph and its stationary law,
/// failing unless the policy is in `P_pi`.
fn single_class(
    channel: &UnifilarChannel,
    qg: &QGraph,
    policy: &InputPolicy,
    tol: f64,
) -> Result<(CoupledGraph, Vec<usize>)> {
    let pruned = CoupledGraph::build(channel, qg)?.prune(policy, tol);
    let mut classes = pruned.closed_classes();
    if classes.len() != 1 {
        return Err(Error::NotInPPi(classes.len()));
    }
    Ok((pruned, classes.remove(0)))
}

/// Whether the pruned coupled graph's closed class has period one.
pub fn is_aperiodic_input(channel: &UnifilarChannel, qg: &QGraph, policy: &InputPolicy, tol: f64) -> Result<bool> {
    let (pruned, class) = single_class(channel, qg, policy, tol)?;
    Ok(pruned.period(&class)?.0 == 1)
}

/// First `(q, y)` where the invariance test fails.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Witness {
    pub q: usize,
    pub y: usize,
    pub gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct InvarianceReport {
    pub invariant: bool,
    pub witness: Option<Witness>,
    /// `pi(s | q)` per node; `None` where `pi(q) = 0`.
    pub conditionals: Vec<Option<Vec<f64>>>,
    /// Nodes outside the closed class, skipped by the test.
    pub skipped: Vec<usize>,
    pub max_gap: f64,
    #[serde(skip)]
    pub stationary: Option<Stationary>,
}

/// Checks `B(pi_{S|Q=q}, y) = pi_{S|Q=g(q,y)}` for every node in the closed
/// class and every output with `p(y|q) > output_tol`.
pub fn is_bcjr_invariant(
    channel: &UnifilarChannel,
    qg: &QGraph,
    policy: &InputPolicy,
    opts: &InvarianceOptions,
) -> Result<InvarianceReport> {
    let (pruned, class) = single_class(channel, qg, policy, opts.prune_tol)?;
    let d = pruned.period(&class)?.0;
    if d != 1 {
        return Err(Error::PeriodicInput(d));
    }
    let st = coupled::stationary_on_class(channel, qg, policy, &class)?;
    let conditionals: Vec<Option<Vec<f64>>> = (0..qg.nq()).map(|q| st.conditional(q)).collect();
    let mut report = InvarianceReport {
        invariant: true,
        witness: None,
        conditionals,
        skipped: Vec::new(),
        max_gap: 0.0,
        stationary: None,
    };
    let mut next = vec![0.0; channel.ns()];
    for q in 0..qg.nq() {
        let Some(z) = report.conditionals[q].clone() else {
            report.skipped.push(q);
            continue;
        };
        let u = StateAction::from_policy(policy, q);
        for y in 0..channel.ny() {
            let py = update_unnormalized(channel, &z, &u, y, &mut next);
            if py <= opts.output_tol {
                continue;
            }
            next.iter_mut().for_each(|v| *v /= py);
            let gap = match &report.conditionals[qg.next(q, y)] {
                Some(target) => linf(&next, target),
                None => f64::INFINITY,
            };
            report.max_gap = report.max_gap.max(gap);
            if gap > opts.gap_tol && report.witness.is_none() {
                report.invariant = false;
                report.witness = Some(Witness { q, y, gap });
            }
        }
    }
    report.stationary = Some(st);
    Ok(report)
}

/// A certified achievable rate.
#[derive(Debug, Clone)]
pub struct LowerBound {
    pub rate: f64,
    pub report: InvarianceReport,
}

/// `I(X,S;Y|Q)` for an aperiodic BCJR-invariant policy. Refuses with the
/// failing `(q, y)` when the policy is not invariant.
pub fn lower_bound(
    channel: &UnifilarChannel,
    qg: &QGraph,
    policy: &InputPolicy,
    opts: &InvarianceOptions,
) -> Result<LowerBound> {
    let report = is_bcjr_invariant(channel, qg, policy, opts)?;
    if let Some(w) = report.witness {
        return Err(Error::NotInvariant {
            q: w.q,
            y: w.y,
            gap: w.gap,
        });
    }
    let st = report.stationary.as_ref().expect("stationary is set");
    let rate = objective_at(channel, qg, policy, st);
    Ok(LowerBound { rate, report })
}

/// The input distribution used with the 3-node BEC Q-graph on the no-11
/// channel: `p(x=1|s=0)` is `p` in node 1 and `p/(1-p)` in node 2, and `x=1`
/// is never sent from `s=1`. Node 0 is entered only in state 1, so its `s=0`
/// row is arbitrary (uniform).
pub fn bec3_policy(eps: f64, p: f64) -> Result<InputPolicy> {
    if !(0.0..=0.5).contains(&p) {
        return Err(Error::ParameterOutOfRange {
            name: "p",
            value: p,
            range: "[0,0.5]",
        });
    }
    let channel = UnifilarChannel::bec_no11(eps)?;
    InputPolicy::from_fn(&channel, 3, |x, s, q| {
        let one = match (s, q) {
            (0, 0) => 0.5,
            (0, 1) => p,
            (0, 2) => p / (1.0 - p),
            _ => 0.0,
        };
        [1.0 - one, one][x]
    })
}

/// The input distribution used with the 4-node trapdoor Q-graph:
/// with `a = zp / (1 - (1-p) z)`, `p(x=0|s=0,q)` is `[1, 1, a, a]` and
/// `p(x=1|s=1,q)` is `[a, a, 1, 1]` over the four nodes.
pub fn trapdoor_lower_policy(qg: &QGraph, z: f64, p: f64) -> Result<InputPolicy> {
    if qg.nq() != 4 || qg.ny() != 2 {
        return Err(Error::InvalidQGraph(format!(
            "expected a 4-node binary-output graph, got nq={} ny={}",
            qg.nq(),
            qg.ny()
        )));
    }
    for (name, v) in [("z", z), ("p", p)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::ParameterOutOfRange {
                name,
                value: v,
                range: "[0,1]",
            });
        }
    }
    let a = trapdoor_alpha(z, p);
    let channel = UnifilarChannel::trapdoor(p)?;
    InputPolicy::from_fn(&channel, 4, |x, s, q| {
        let keep = if s == 0 { [1.0, 1.0, a, a][q] } else { [a, a, 1.0, 1.0][q] };
        if x == s {
            keep
        } else {
            1.0 - keep
        }
    })
}

/// `alpha = zp / (1 - (1-p) z)`. The denominator vanishes only at
/// `z = 1, p = 0`, where the numerator does too; that point maps to zero.
pub fn trapdoor_alpha(z: f64, p: f64) -> f64 {
    let den = 1.0 - (1.0 - p) * z;
    if den > 0.0 {
        (z * p / den).clamp(0.0, 1.0)
    } else {
        0.0
    }
}
