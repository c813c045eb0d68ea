//! Average-reward value iteration on the belief simplex, closed-loop
//! rollouts of the greedy policy, and extraction of a Q-graph from the
//! visited beliefs.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bcjr::{self, linf, Belief, StateAction};
use crate::channel::{ChannelSpec, UnifilarChannel};
use crate::entropy::{entropy, weighted_entropy};
use crate::coupled::InputPolicy;
use crate::error::{Error, Result};
use crate::optim::{nelder_mead_max, NmOptions};
use crate::qgraph::QGraph;

/// Outputs whose probability is at or below this are not followed.
const OUTPUT_TOL: f64 = 1e-12;

/// Regular lattice on the belief simplex: all points whose coordinates are
/// multiples of `1 / resolution`.
#[derive(Debug, Clone)]
pub struct SimplexGrid {
    ns: usize,
    resolution: u32,
    points: Vec<Vec<u32>>,
    index: HashMap<Vec<u32>, usize>,
}

impl SimplexGrid {
    pub fn new(ns: usize, resolution: u32) -> Result<Self> {
        if ns == 0 || resolution == 0 {
            return Err(Error::InvalidBelief(format!(
                "grid needs ns > 0 and resolution > 0 (ns={ns}, resolution={resolution})"
            )));
        }
        let points = compositions(resolution, ns);
        let index = points.iter().enumerate().map(|(i, p)| (p.clone(), i)).collect();
        Ok(Self {
            ns,
            resolution,
            points,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn ns(&self) -> usize {
        self.ns
    }

    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    /// Integer coordinates of node `i` (summing to the resolution).
    pub fn counts(&self, i: usize) -> &[u32] {
        &self.points[i]
    }

    pub fn belief(&self, i: usize) -> Vec<f64> {
        let n = self.resolution as f64;
        self.points[i].iter().map(|&c| c as f64 / n).collect()
    }

    pub fn index_of(&self, counts: &[u32]) -> Option<usize> {
        self.index.get(counts).copied()
    }

    /// Vertices and weights of the Freudenthal simplex containing `z`.
    ///
    /// In cumulative coordinates `v_j = N sum_{i >= j} z_i` the containing
    /// cell is found by flooring and sorting the fractional parts; the
    /// weights are the successive differences of the sorted parts.
    pub fn interpolate(&self, z: &[f64]) -> Vec<(usize, f64)> {
        let m = self.ns - 1;
        let n = self.resolution as f64;
        let mut cum = vec![0.0; m];
        let mut acc = 0.0;
        for j in (1..self.ns).rev() {
            acc += z[j];
            cum[j - 1] = (n * acc).clamp(0.0, n);
        }
        let mut base: Vec<u32> = cum.iter().map(|&v| (v.floor() as u32).min(self.resolution)).collect();
        let mut frac: Vec<f64> = cum.iter().zip(&base).map(|(v, &b)| v - b as f64).collect();
        // a coordinate sitting exactly on the top face stays there
        for j in 0..m {
            if base[j] == self.resolution {
                frac[j] = 0.0;
            }
        }
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| frac[b].total_cmp(&frac[a]).then(a.cmp(&b)));

        let mut out = Vec::with_capacity(self.ns);
        let mut prev = 1.0;
        let push = |base: &[u32], w: f64, out: &mut Vec<(usize, f64)>| {
            if w > 0.0 {
                let idx = self.index_of(&to_counts(base, self.resolution)).expect("lattice vertex");
                out.push((idx, w));
            }
        };
        for &k in &order {
            push(&base, prev - frac[k], &mut out);
            prev = frac[k];
            base[k] += 1;
        }
        push(&base, prev, &mut out);
        out
    }

    /// Grid node closest to `z` in the cumulative coordinates.
    pub fn nearest(&self, z: &[f64]) -> usize {
        self.interpolate(z)
            .into_iter()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
            .expect("nonempty interpolation")
    }
}

/// Cumulative coordinates back to per-state counts.
fn to_counts(cum: &[u32], n: u32) -> Vec<u32> {
    let mut counts = Vec::with_capacity(cum.len() + 1);
    let mut prev = n;
    for &c in cum {
        counts.push(prev - c);
        prev = c;
    }
    counts.push(prev);
    counts
}

/// All vectors of `parts` nonnegative integers summing to `total`.
fn compositions(total: u32, parts: usize) -> Vec<Vec<u32>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    (0..=total)
        .rev()
        .flat_map(|first| {
            compositions(total - first, parts - 1).into_iter().map(move |mut rest| {
                rest.insert(0, first);
                rest
            })
        })
        .collect()
}

/// How off-grid beliefs are mapped onto the lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Interpolation {
    Barycentric,
    Nearest,
}

/// `I(X,S;Y)` in bits under the joint `z(s) u(x|s) W(y|x,s)`.
pub fn dp_reward(channel: &UnifilarChannel, z: &Belief, u: &StateAction) -> Result<f64> {
    if z.as_slice().len() != channel.ns() {
        return Err(Error::InvalidBelief(format!("belief has {} entries, channel has {} states", z.as_slice().len(), channel.ns())));
    }
    StateAction::new(channel, &u.rows())?;
    Ok(reward(channel, z.as_slice(), u))
}

fn reward(channel: &UnifilarChannel, z: &[f64], u: &StateAction) -> f64 {
    let ny = channel.ny();
    let mut py = vec![0.0; ny];
    let mut wy = vec![0.0; ny];
    let mut h_cond = 0.0;
    for (s, &zs) in z.iter().enumerate() {
        for x in 0..channel.nx() {
            let m = zs * u.prob(x, s);
            if m <= 0.0 {
                continue;
            }
            for y in 0..ny {
                wy[y] = m * channel.prob(y, x, s);
                py[y] += wy[y];
            }
            h_cond += weighted_entropy(&wy);
        }
    }
    (entropy(&py) - h_cond).max(0.0)
}

/// Settings for [`value_iteration`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ViOptions {
    /// Lattice points per simplex edge.
    pub resolution: u32,
    /// Each action row is a lattice point with this many steps per edge.
    pub action_steps: u32,
    /// Upper limit on the action lattice size; `action_steps` is lowered to fit.
    pub max_actions: usize,
    pub max_iters: usize,
    /// Stop when the span bracket is narrower than this.
    pub span_tol: f64,
    /// Weight of the new iterate, in `(0, 1]`; values below one mix in the
    /// old iterate, which removes periodic oscillation.
    pub damping: f64,
    pub interpolation: Interpolation,
}

impl Default for ViOptions {
    fn default() -> Self {
        Self {
            resolution: 100,
            action_steps: 50,
            max_actions: 20_000,
            max_iters: 20_000,
            span_tol: 1e-9,
            damping: 1.0,
            interpolation: Interpolation::Barycentric,
        }
    }
}

/// Result of relative value iteration.
#[derive(Debug, Clone)]
pub struct ValueIteration {
    channel: UnifilarChannel,
    grid: SimplexGrid,
    interpolation: Interpolation,
    /// Relative values, zero at node 0.
    pub values: Vec<f64>,
    /// The action lattice.
    pub actions: Vec<StateAction>,
    /// Greedy action index per grid node.
    pub greedy: Vec<usize>,
    /// Midpoint of the final span bracket.
    pub rate: f64,
    pub lower: f64,
    pub upper: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Lattice of actions: per state, the distributions over permitted inputs
/// with denominator `steps`; the lattice is their product over states.
fn action_lattice(channel: &UnifilarChannel, steps: u32, max_actions: usize) -> Vec<StateAction> {
    let (nx, ns) = (channel.nx(), channel.ns());
    let mut steps = steps.max(1);
    let per_state = |steps: u32| -> Vec<Vec<Vec<f64>>> {
        (0..ns)
            .map(|s| {
                let inputs = channel.permitted_inputs(s);
                compositions(steps, inputs.len())
                    .into_iter()
                    .map(|c| {
                        let mut row = vec![0.0; nx];
                        for (k, &x) in inputs.iter().enumerate() {
                            row[x] = c[k] as f64 / steps as f64;
                        }
                        row
                    })
                    .collect()
            })
            .collect()
    };
    let mut rows = per_state(steps);
    while steps > 1 && rows.iter().map(Vec::len).product::<usize>() > max_actions {
        steps -= 1;
        rows = per_state(steps);
    }
    let mut out: Vec<Vec<f64>> = vec![Vec::new()];
    for state_rows in &rows {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                state_rows.iter().map(move |r| {
                    let mut v = prefix.clone();
                    v.extend_from_slice(r);
                    v
                })
            })
            .collect();
    }
    out.into_iter().map(|u| StateAction::from_flat(nx, u)).collect()
}

/// Bellman data of one (node, action) pair: reward and the interpolated
/// successor distribution.
struct Transition {
    reward: f64,
    next: Vec<(u32, f64)>,
}

fn successors(
    channel: &UnifilarChannel,
    grid: &SimplexGrid,
    interp: Interpolation,
    z: &[f64],
    u: &StateAction,
) -> Vec<(u32, f64)> {
    let mut next = vec![0.0; channel.ns()];
    let mut out: Vec<(u32, f64)> = Vec::new();
    for y in 0..channel.ny() {
        let py = bcjr::update_unnormalized(channel, z, u, y, &mut next);
        if py <= OUTPUT_TOL {
            continue;
        }
        next.iter_mut().for_each(|v| *v /= py);
        match interp {
            Interpolation::Barycentric => {
                for (i, w) in grid.interpolate(&next) {
                    out.push((i as u32, py * w));
                }
            }
            Interpolation::Nearest => out.push((grid.nearest(&next) as u32, py)),
        }
    }
    // renormalize away the dropped output mass so the operator stays
    // translation invariant
    let total: f64 = out.iter().map(|(_, c)| c).sum();
    out.iter_mut().for_each(|(_, c)| *c /= total);
    out.sort_by_key(|(i, _)| *i);
    out.dedup_by(|b, a| {
        if a.0 == b.0 {
            a.1 += b.1;
            true
        } else {
            false
        }
    });
    out
}

/// Relative value iteration
/// `V'(z) = max_u [ r(z,u) + sum_y p(y|z,u) V(B(z,u,y)) ] - V'(z_0)` over a
/// fixed action lattice. The Bellman operator is monotone and commutes with
/// constant shifts, so `[min(TV - V), max(TV - V)]` is a nested bracket
/// around the optimal average reward of the discretized problem.
pub fn value_iteration(channel: &UnifilarChannel, opts: &ViOptions) -> Result<ValueIteration> {
    if !channel.is_strongly_connected() {
        return Err(Error::NotStronglyConnected);
    }
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::ParameterOutOfRange {
            name: "damping",
            value: opts.damping,
            range: "(0,1]",
        });
    }
    let grid = SimplexGrid::new(channel.ns(), opts.resolution)?;
    let actions = action_lattice(channel, opts.action_steps, opts.max_actions);
    let table: Vec<Vec<Transition>> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let z = grid.belief(i);
            actions
                .iter()
                .map(|u| Transition {
                    reward: reward(channel, &z, u),
                    next: successors(channel, &grid, opts.interpolation, &z, u),
                })
                .collect()
        })
        .collect();

    let n = grid.len();
    let theta = opts.damping;
    let mut values = vec![0.0; n];
    let mut greedy = vec![0usize; n];
    let (mut lower, mut upper) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iters {
        iterations += 1;
        let backed: Vec<(f64, usize)> = table
            .par_iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(a, t)| {
                        let cont: f64 = t.next.iter().map(|&(j, c)| c * values[j as usize]).sum();
                        (t.reward + cont, a)
                    })
                    .fold((f64::NEG_INFINITY, 0), |best, cand| if cand.0 > best.0 { cand } else { best })
            })
            .collect();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (i, &(v, a)) in backed.iter().enumerate() {
            let diff = v - values[i];
            lo = lo.min(diff);
            hi = hi.max(diff);
            greedy[i] = a;
        }
        // nested bracket; tolerance covers summation rounding
        let slack = 1e-9 * (1.0 + values.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        assert!(
            theta * lo >= lower - slack && theta * hi <= upper + slack,
            "span bracket widened at iteration {iterations}"
        );
        lower = lower.max(theta * lo);
        upper = upper.min(theta * hi);
        let offset = (1.0 - theta) * values[0] + theta * backed[0].0;
        for (i, &(v, _)) in backed.iter().enumerate() {
            values[i] = (1.0 - theta) * values[i] + theta * v - offset;
        }
        if (hi - lo) * theta <= opts.span_tol {
            converged = true;
            break;
        }
    }
    Ok(ValueIteration {
        channel: channel.clone(),
        grid,
        interpolation: opts.interpolation,
        values,
        actions,
        greedy,
        rate: 0.5 * (lower + upper) / theta,
        lower: lower / theta,
        upper: upper / theta,
        iterations,
        converged,
    })
}

impl ValueIteration {
    pub fn channel(&self) -> &UnifilarChannel {
        &self.channel
    }

    pub fn grid(&self) -> &SimplexGrid {
        &self.grid
    }

    /// Interpolated relative value at an arbitrary belief.
    pub fn value_at(&self, z: &[f64]) -> f64 {
        match self.interpolation {
            Interpolation::Barycentric => self.grid.interpolate(z).iter().map(|&(i, w)| w * self.values[i]).sum(),
            Interpolation::Nearest => self.values[self.grid.nearest(z)],
        }
    }

    /// Relative value from a local weighted quadratic fit of the node values
    /// around `z` (moving least squares, radius 2.5 grid steps). Unlike the
    /// piecewise-linear interpolant it has no kinks at the nodes, so a
    /// lookahead built on it does not favour landing between nodes. Falls back
    /// to [`Self::value_at`] when the local fit is degenerate.
    pub fn value_smooth(&self, z: &[f64]) -> f64 {
        let d = self.grid.ns() - 1;
        if d == 0 {
            return self.values[0];
        }
        let n = self.grid.resolution() as f64;
        let radius = 2.5;
        let reach = 3i64;
        let base: Vec<i64> = z[..d].iter().map(|v| (v * n).round() as i64).collect();
        let p = (d + 1) * (d + 2) / 2;
        let mut rows: Vec<(Vec<f64>, f64, f64)> = Vec::new();
        let span = (2 * reach + 1) as usize;
        let mut counts = vec![0u32; d + 1];
        'offsets: for k in 0..span.pow(d as u32) {
            let mut rem = k;
            let mut used = 0i64;
            for i in 0..d {
                let c = base[i] + (rem % span) as i64 - reach;
                rem /= span;
                if c < 0 {
                    continue 'offsets;
                }
                counts[i] = c as u32;
                used += c;
            }
            if used > self.grid.resolution() as i64 {
                continue;
            }
            counts[d] = self.grid.resolution() - used as u32;
            let t: Vec<f64> = (0..d).map(|i| counts[i] as f64 - n * z[i]).collect();
            let r = t.iter().map(|v| v * v).sum::<f64>().sqrt();
            if r >= radius {
                continue;
            }
            let w = (1.0 - (r / radius).powi(2)).powi(2);
            let idx = self.grid.index_of(&counts).expect("lattice node");
            let mut basis = Vec::with_capacity(p);
            basis.push(1.0);
            basis.extend_from_slice(&t);
            for i in 0..d {
                for j in i..d {
                    basis.push(t[i] * t[j]);
                }
            }
            rows.push((basis, w.sqrt(), self.values[idx]));
        }
        if rows.len() < p {
            return self.value_at(z);
        }
        let a = DMatrix::from_fn(rows.len(), p, |r, c| rows[r].0[c] * rows[r].1);
        let b = DVector::from_fn(rows.len(), |r, _| rows[r].2 * rows[r].1);
        let svd = a.svd(true, true);
        let smax = svd.singular_values.max();
        if svd.singular_values.min() <= 1e-10 * smax {
            return self.value_at(z);
        }
        match svd.solve(&b, 0.0) {
            Ok(coef) => coef[0],
            Err(_) => self.value_at(z),
        }
    }

    /// One-step lookahead value `r(z,u) + sum_y p(y) V(B(z,u,y))` with the
    /// interpolated value function.
    pub fn q_value(&self, z: &[f64], u: &StateAction) -> f64 {
        self.lookahead(z, u, |b| self.value_at(b))
    }

    /// Same lookahead with [`Self::value_smooth`].
    pub fn q_value_smooth(&self, z: &[f64], u: &StateAction) -> f64 {
        self.lookahead(z, u, |b| self.value_smooth(b))
    }

    fn lookahead(&self, z: &[f64], u: &StateAction, value: impl Fn(&[f64]) -> f64) -> f64 {
        let mut next = vec![0.0; self.channel.ns()];
        let mut total = reward(&self.channel, z, u);
        for y in 0..self.channel.ny() {
            let py = bcjr::update_unnormalized(&self.channel, z, u, y, &mut next);
            if py <= OUTPUT_TOL {
                continue;
            }
            next.iter_mut().for_each(|v| *v /= py);
            total += py * value(&next);
        }
        total
    }

    /// Greedy action at an arbitrary belief: the best lattice action among
    /// those chosen at the surrounding grid nodes, refined by Nelder-Mead
    /// over the continuous action simplex on the smooth lookahead.
    pub fn greedy_action(&self, z: &[f64]) -> StateAction {
        let mut cands: Vec<usize> = self.grid.interpolate(z).iter().map(|&(i, _)| self.greedy[i]).collect();
        cands.sort_unstable();
        cands.dedup();
        let start = cands
            .into_iter()
            .map(|a| (self.q_value_smooth(z, &self.actions[a]), a))
            .fold((f64::NEG_INFINITY, 0), |best, c| if c.0 > best.0 { c } else { best })
            .1;

        let param = ActionParam::new(&self.channel);
        if param.dim == 0 {
            return self.actions[start].clone();
        }
        let t0 = param.encode(&self.actions[start]);
        let opts = NmOptions {
            max_evals: 2000,
            ftol: 1e-14,
            xtol: 1e-10,
            step: 0.05,
        };
        let r = nelder_mead_max(|t| self.q_value_smooth(z, &param.decode(t)), &t0, opts);
        let refined = param.decode(&r.x);
        if self.q_value_smooth(z, &refined) >= self.q_value_smooth(z, &self.actions[start]) {
            refined
        } else {
            self.actions[start].clone()
        }
    }
}

/// Stick-breaking coordinates for a state-dependent action.
struct ActionParam {
    nx: usize,
    inputs: Vec<Vec<usize>>,
    dim: usize,
}

impl ActionParam {
    fn new(channel: &UnifilarChannel) -> Self {
        let inputs: Vec<Vec<usize>> = (0..channel.ns()).map(|s| channel.permitted_inputs(s)).collect();
        let dim = inputs.iter().map(|i| i.len() - 1).sum();
        Self {
            nx: channel.nx(),
            inputs,
            dim,
        }
    }

    fn decode(&self, t: &[f64]) -> StateAction {
        let mut u = vec![0.0; self.inputs.len() * self.nx];
        let mut k = 0;
        for (s, inputs) in self.inputs.iter().enumerate() {
            let mut rest = 1.0;
            for (i, &x) in inputs.iter().enumerate() {
                let stick = if i + 1 == inputs.len() {
                    rest
                } else {
                    let v = rest * t[k];
                    k += 1;
                    v
                };
                rest -= stick;
                u[s * self.nx + x] = stick;
            }
        }
        StateAction::from_flat(self.nx, u)
    }

    fn encode(&self, a: &StateAction) -> Vec<f64> {
        let mut t = Vec::with_capacity(self.dim);
        for (s, inputs) in self.inputs.iter().enumerate() {
            let mut rest = 1.0;
            for &x in &inputs[..inputs.len() - 1] {
                let v = a.prob(x, s);
                t.push(if rest > 0.0 { (v / rest).clamp(0.0, 1.0) } else { 0.0 });
                rest -= v;
            }
        }
        t
    }
}

/// Settings for [`rollout`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RolloutOptions {
    pub steps: usize,
    pub burn_in: usize,
    pub seed: u64,
    /// Side of the sup-norm cells that visited beliefs are counted in.
    pub cluster_tol: f64,
    /// Starting belief; uniform when absent.
    pub start: Option<Vec<f64>>,
}

impl Default for RolloutOptions {
    fn default() -> Self {
        Self {
            steps: 200_000,
            burn_in: 1000,
            seed: 0,
            cluster_tol: 1e-3,
            start: None,
        }
    }
}

/// An occupied cell: mean of the beliefs that fell in it, visit count and
/// the action taken at its first visit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistCell {
    pub belief: Vec<f64>,
    pub count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub from: usize,
    pub y: usize,
    pub to: usize,
    pub count: u64,
}

/// Visited beliefs of a closed-loop run and the observed cell transitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisitHistogram {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<ChannelSpec>,
    #[serde(default)]
    pub cluster_tol: f64,
    pub cells: Vec<HistCell>,
    pub transitions: Vec<TransitionRecord>,
}

impl VisitHistogram {
    pub fn total_visits(&self) -> u64 {
        self.cells.iter().map(|c| c.count).sum()
    }
}

/// Simulates the belief process under the greedy policy of `vi`: sample `y`
/// from `p(y|z,u)`, move to `B(z,u,y)`. Counting starts after the burn-in.
pub fn rollout(vi: &ValueIteration, opts: &RolloutOptions) -> Result<VisitHistogram> {
    let channel = vi.channel();
    let ns = channel.ns();
    if !(opts.cluster_tol > 0.0) {
        return Err(Error::ParameterOutOfRange {
            name: "cluster_tol",
            value: opts.cluster_tol,
            range: "(0,inf)",
        });
    }
    let mut z = match &opts.start {
        Some(s) => Belief::new(s.clone())?.into_inner(),
        None => Belief::uniform(ns).into_inner(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut cell_of: HashMap<Vec<i64>, usize> = HashMap::new();
    let mut cells: Vec<HistCell> = Vec::new();
    let mut sums: Vec<Vec<f64>> = Vec::new();
    let mut trans: BTreeMap<(usize, usize, usize), u64> = BTreeMap::new();
    let mut next = vec![0.0; ns];
    let mut prev_cell: Option<(usize, usize)> = None;

    // the policy is constant on each counting cell, fixed at its first visit
    let mut actions: HashMap<Vec<i64>, StateAction> = HashMap::new();
    for step in 0..opts.burn_in + opts.steps {
        let key: Vec<i64> = z.iter().map(|v| (v / opts.cluster_tol).round() as i64).collect();
        let u = actions.entry(key.clone()).or_insert_with(|| vi.greedy_action(&z)).clone();
        if step >= opts.burn_in {
            let c = *cell_of.entry(key).or_insert_with(|| {
                cells.push(HistCell {
                    belief: Vec::new(),
                    count: 0,
                    action: Some(u.rows()),
                });
                sums.push(vec![0.0; ns]);
                cells.len() - 1
            });
            cells[c].count += 1;
            sums[c].iter_mut().zip(&z).for_each(|(a, b)| *a += b);
            if let Some((from, y)) = prev_cell {
                *trans.entry((from, y, c)).or_insert(0) += 1;
            }
            prev_cell = Some((c, usize::MAX));
        }

        let py = bcjr::output_distribution(channel, &z, &u);
        let draw: f64 = rng.gen::<f64>() * py.iter().sum::<f64>();
        let mut acc = 0.0;
        let mut y = py.iter().rposition(|&p| p > 0.0).unwrap_or(0);
        for (k, &p) in py.iter().enumerate() {
            acc += p;
            if draw < acc && p > 0.0 {
                y = k;
                break;
            }
        }
        let total = bcjr::update_unnormalized(channel, &z, &u, y, &mut next);
        z.iter_mut().zip(&next).for_each(|(a, b)| *a = b / total);
        if let Some((_, ref mut yy)) = prev_cell {
            *yy = y;
        }
    }

    for (cell, sum) in cells.iter_mut().zip(&sums) {
        cell.belief = sum.iter().map(|v| v / cell.count as f64).collect();
    }
    Ok(VisitHistogram {
        channel: Some(channel.to_spec()),
        cluster_tol: opts.cluster_tol,
        cells,
        transitions: trans
            .into_iter()
            .map(|((from, y, to), count)| TransitionRecord { from, y, to, count })
            .collect(),
    })
}

/// A Q-graph read off a histogram, with the belief attached to each node.
#[derive(Debug, Clone)]
pub struct Extraction {
    pub qgraph: QGraph,
    pub beliefs: Vec<Vec<f64>>,
    /// Node of every histogram cell.
    pub node_of_cell: Vec<usize>,
    /// `(q, y)` pairs not observed in the histogram and filled in by the
    /// belief update.
    pub completed: Vec<(usize, usize)>,
    /// Rollout action of each node (that of its most visited cell), rows `[s][x]`.
    pub actions: Vec<Option<Vec<Vec<f64>>>>,
}

impl Extraction {
    /// The rollout actions as a policy on the extracted graph.
    pub fn policy(&self, channel: &UnifilarChannel) -> Result<InputPolicy> {
        let nq = self.qgraph.nq();
        let mut rows = vec![Vec::new(); channel.ns() * nq];
        for q in 0..nq {
            let a = self.actions[q]
                .as_ref()
                .ok_or_else(|| Error::Extraction(format!("node {q} has no recorded action")))?;
            let a = StateAction::new(channel, a)?;
            for s in 0..channel.ns() {
                rows[s * nq + q] = (0..channel.nx()).map(|x| a.prob(x, s)).collect();
            }
        }
        InputPolicy::from_rows(channel, nq, &rows)
    }
}

/// Builds a Q-graph whose nodes are the occupied cells, merged when their
/// centroids are within `cluster_tol`, and whose edges are the observed
/// transitions. Unobserved `(q, y)` pairs are completed by applying the
/// belief update to the node's belief and snapping to the nearest node.
pub fn extract_qgraph(hist: &VisitHistogram, cluster_tol: f64) -> Result<Extraction> {
    if hist.cells.is_empty() {
        return Err(Error::Extraction("histogram has no cells".into()));
    }
    let channel = hist
        .channel
        .as_ref()
        .map(UnifilarChannel::from_spec)
        .transpose()?;

    // centroid linkage: merge the closest pair of clusters while it is
    // within the tolerance
    let mut clusters: Vec<(Vec<f64>, u64, Vec<usize>)> = hist
        .cells
        .iter()
        .enumerate()
        .map(|(i, c)| (c.belief.clone(), c.count, vec![i]))
        .collect();
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..clusters.len() {
            for j in i + 1..clusters.len() {
                let d = linf(&clusters[i].0, &clusters[j].0);
                if d <= cluster_tol && best.is_none_or(|b| d < b.0) {
                    best = Some((d, i, j));
                }
            }
        }
        let Some((_, i, j)) = best else { break };
        let (bj, cj, mj) = clusters.remove(j);
        let (bi, ci, mi) = &mut clusters[i];
        let total = (*ci + cj) as f64;
        for (a, b) in bi.iter_mut().zip(&bj) {
            *a = (*a * *ci as f64 + b * cj as f64) / total;
        }
        *ci += cj;
        mi.extend(mj);
    }
    // nodes in order of decreasing visit count
    clusters.sort_by(|a, b| b.1.cmp(&a.1).then(a.2[0].cmp(&b.2[0])));
    let nq = clusters.len();
    let mut node_of_cell = vec![0; hist.cells.len()];
    for (q, (_, _, members)) in clusters.iter().enumerate() {
        for &c in members {
            node_of_cell[c] = q;
        }
    }

    let ny = match (&channel, hist.transitions.iter().map(|t| t.y).max()) {
        (Some(c), _) => c.ny(),
        (None, Some(m)) => m + 1,
        (None, None) => return Err(Error::Extraction("histogram has no transitions and no channel".into())),
    };
    let mut votes: HashMap<(usize, usize), HashMap<usize, u64>> = HashMap::new();
    for t in &hist.transitions {
        if t.from >= hist.cells.len() || t.to >= hist.cells.len() || t.y >= ny {
            return Err(Error::Extraction(format!("transition {t:?} refers to a missing cell or symbol")));
        }
        *votes
            .entry((node_of_cell[t.from], t.y))
            .or_default()
            .entry(node_of_cell[t.to])
            .or_insert(0) += t.count;
    }

    let beliefs: Vec<Vec<f64>> = clusters.iter().map(|c| c.0.clone()).collect();
    let mut g = vec![vec![usize::MAX; ny]; nq];
    let mut completed = Vec::new();
    for q in 0..nq {
        for y in 0..ny {
            if let Some(targets) = votes.get(&(q, y)) {
                let (&to, _) = targets
                    .iter()
                    .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                    .expect("nonempty votes");
                g[q][y] = to;
                continue;
            }
            let channel = channel.as_ref().ok_or_else(|| {
                Error::Extraction(format!("(q={q}, y={y}) is unobserved and the histogram carries no channel"))
            })?;
            let image = completion_image(channel, hist, &clusters[q], y)?;
            let (to, d) = beliefs
                .iter()
                .enumerate()
                .map(|(k, b)| (k, linf(b, &image)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("nonempty nodes");
            if d > cluster_tol {
                return Err(Error::Extraction(format!(
                    "image of (q={q}, y={y}) at {image:?} is {d:.3e} from the nearest node"
                )));
            }
            g[q][y] = to;
            completed.push((q, y));
        }
    }
    let qgraph = QGraph::new(ny, g, "extracted")?;
    let actions = clusters
        .iter()
        .map(|c| {
            c.2.iter()
                .filter(|&&i| hist.cells[i].action.is_some())
                .max_by_key(|&&i| hist.cells[i].count)
                .and_then(|&i| hist.cells[i].action.clone())
        })
        .collect();
    Ok(Extraction {
        qgraph,
        beliefs,
        node_of_cell,
        completed,
        actions,
    })
}

/// Belief reached from a node's centroid on output `y`: the belief update
/// under the stored action when `y` has positive probability, otherwise the
/// channel's structural update.
fn completion_image(
    channel: &UnifilarChannel,
    hist: &VisitHistogram,
    cluster: &(Vec<f64>, u64, Vec<usize>),
    y: usize,
) -> Result<Vec<f64>> {
    let action = cluster
        .2
        .iter()
        .filter_map(|&c| hist.cells[c].action.as_ref())
        .next()
        .map(|rows| StateAction::new(channel, rows))
        .transpose()?;
    if let Some(u) = action {
        let mut next = vec![0.0; channel.ns()];
        let py = bcjr::update_unnormalized(channel, &cluster.0, &u, y, &mut next);
        if py > OUTPUT_TOL {
            return Ok(next.into_iter().map(|v| v / py).collect());
        }
    }
    bcjr::structural_update(channel, y)
        .map(Belief::into_inner)
        .ok_or_else(|| Error::Extraction(format!("output {y} is never produced by the channel")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bound::oracle_dec;

    #[test]
    fn grid_sizes() {
        assert_eq!(SimplexGrid::new(2, 100).unwrap().len(), 101);
        assert_eq!(SimplexGrid::new(3, 4).unwrap().len(), 15);
        assert_eq!(SimplexGrid::new(1, 7).unwrap().len(), 1);
        let g = SimplexGrid::new(3, 5).unwrap();
        assert!((0..g.len()).all(|i| g.counts(i).iter().sum::<u32>() == 5));
    }

    #[test]
    fn interpolation_exact_on_nodes() {
        let g = SimplexGrid::new(3, 6).unwrap();
        for i in 0..g.len() {
            let w = g.interpolate(&g.belief(i));
            assert_eq!(w.len(), 1, "{:?}", g.counts(i));
            assert_eq!(w[0].0, i);
        }
    }

    #[test]
    fn interpolation_reproduces_linear_functions() {
        let g = SimplexGrid::new(3, 7).unwrap();
        let z = [0.21, 0.5, 0.29];
        let w = g.interpolate(&z);
        let total: f64 = w.iter().map(|p| p.1).sum();
        assert!((total - 1.0).abs() < 1e-12);
        for k in 0..3 {
            let back: f64 = w.iter().map(|&(i, c)| c * g.belief(i)[k]).sum();
            assert!((back - z[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn reward_examples() {
        let c = UnifilarChannel::dec(0.0).unwrap();
        let u = StateAction::new(&c, &[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        assert!((dp_reward(&c, &Belief::point(2, 0), &u).unwrap() - 1.0).abs() < 1e-12);
        let c = UnifilarChannel::dec(0.3).unwrap();
        assert!((dp_reward(&c, &Belief::point(2, 0), &u).unwrap() - 0.7).abs() < 1e-12);
        let bad = StateAction::from_flat(2, vec![0.5, 0.5, 0.5, 0.5]);
        let b = UnifilarChannel::bec_no11(0.3).unwrap();
        assert!(dp_reward(&b, &Belief::point(2, 0), &bad).is_err());
    }

    #[test]
    fn action_lattice_respects_mask() {
        let b = UnifilarChannel::bec_no11(0.3).unwrap();
        let a = action_lattice(&b, 10, 1000);
        assert_eq!(a.len(), 11);
        assert!(a.iter().all(|u| u.prob(1, 1) == 0.0));
        let t = UnifilarChannel::trapdoor(0.5).unwrap();
        assert_eq!(action_lattice(&t, 50, 20_000).len(), 51 * 51);
        assert!(action_lattice(&t, 50, 100).len() <= 100);
    }

    #[test]
    fn action_param_round_trip() {
        let t = UnifilarChannel::bec_no11(0.2).unwrap();
        let p = ActionParam::new(&t);
        assert_eq!(p.dim, 1);
        let a = p.decode(&[0.3]);
        assert_eq!(a.rows(), vec![vec![0.3, 0.7], vec![1.0, 0.0]]);
        assert!((p.encode(&a)[0] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn memoryless_single_point() {
        // one state: dec kernel restricted to s = 0 is a ternary erasure channel
        let spec = ChannelSpec {
            nx: 2,
            ny: 3,
            ns: 1,
            kernel: vec![vec![vec![0.8], vec![0.0]], vec![vec![0.0], vec![0.8]], vec![vec![0.2], vec![0.2]]],
            next_state: vec![vec![vec![0]; 3]; 2],
            input_mask: None,
            name: "bec".into(),
            y_labels: None,
        };
        let c = UnifilarChannel::from_spec(&spec).unwrap();
        let vi = value_iteration(&c, &ViOptions::default()).unwrap();
        assert_eq!(vi.grid().len(), 1);
        assert!((vi.rate - 0.8).abs() < 1e-9);
    }

    #[test]
    fn dec_coarse_value_iteration() {
        let c = UnifilarChannel::dec(0.5).unwrap();
        let opts = ViOptions {
            resolution: 20,
            action_steps: 20,
            ..ViOptions::default()
        };
        let vi = value_iteration(&c, &opts).unwrap();
        assert!(vi.lower <= vi.upper);
        assert!((vi.rate - oracle_dec(0.5).unwrap()).abs() < 3e-2, "{}", vi.rate);
    }

    #[test]
    fn single_cell_extraction() {
        let hist = VisitHistogram {
            channel: None,
            cluster_tol: 1e-3,
            cells: vec![HistCell {
                belief: vec![1.0],
                count: 10,
                action: None,
            }],
            transitions: vec![
                TransitionRecord { from: 0, y: 0, to: 0, count: 5 },
                TransitionRecord { from: 0, y: 1, to: 0, count: 4 },
            ],
        };
        let e = extract_qgraph(&hist, 1e-3).unwrap();
        assert_eq!(e.qgraph.nq(), 1);
        assert!(e.completed.is_empty());
    }

    #[test]
    fn empty_rollout() {
        let c = UnifilarChannel::dec(0.5).unwrap();
        let vi = value_iteration(
            &c,
            &ViOptions {
                resolution: 10,
                action_steps: 10,
                ..ViOptions::default()
            },
        )
        .unwrap();
        let h = rollout(
            &vi,
            &RolloutOptions {
                steps: 0,
                burn_in: 10,
                ..RolloutOptions::default()
            },
        )
        .unwrap();
        assert!(h.cells.is_empty() && h.transitions.is_empty());
    }
}
