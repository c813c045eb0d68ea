//! The single-letter upper bound `sup I(X,S;Y|Q)` over policies with a
//! unique stationary distribution, its optimizer, and closed-form reference
//! values for the erasure, dicode and trapdoor examples.

use std::sync::atomic::{AtomicUsize, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::channel::UnifilarChannel;
use crate::coupled::{self, CoupledGraph, InputPolicy, Stationary, PRUNE_TOL};
use crate::entropy::{h2, weighted_entropy};
use crate::error::{Error, Result};
use crate::optim::{box_grid, golden_max, nelder_mead_restarts, newton_polish, NmOptions};
use crate::qgraph::QGraph;

/// `I(X,S;Y|Q) = H(Y|Q) - H(Y|X,S,Q)` in bits for a policy in `P_pi`.
pub fn objective(channel: &UnifilarChannel, qg: &QGraph, policy: &InputPolicy) -> Result<f64> {
    let st = coupled::stationary(channel, qg, policy)?;
    Ok(objective_at(channel, qg, policy, &st))
}

/// `I(X,S;Y|Q)` under the joint `W(y|x,s) u(x|s,q) pi(s,q)`.
pub fn objective_at(channel: &UnifilarChannel, qg: &QGraph, policy: &InputPolicy, st: &Stationary) -> f64 {
    let (nx, ny, ns, nq) = (channel.nx(), channel.ny(), channel.ns(), qg.nq());
    let mut h_y_q = 0.0;
    let mut h_y_xsq = 0.0;
    let mut py = vec![0.0; ny];
    let mut wy = vec![0.0; ny];
    for q in 0..nq {
        py.iter_mut().for_each(|v| *v = 0.0);
        for s in 0..ns {
            let pi = st.get(s, q);
            if pi <= 0.0 {
                continue;
            }
            for x in 0..nx {
                let m = pi * policy.prob(x, s, q);
                if m <= 0.0 {
                    continue;
                }
                for y in 0..ny {
                    wy[y] = m * channel.prob(y, x, s);
                    py[y] += wy[y];
                }
                h_y_xsq += weighted_entropy(&wy);
            }
        }
        h_y_q += weighted_entropy(&py);
    }
    (h_y_q - h_y_xsq).max(0.0)
}

/// Ties row `(s, q)` to a permuted copy of row `source`:
/// `u(perm[x] | row) = u(x | source)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct RowTie {
    pub row: (usize, usize),
    pub source: (usize, usize),
    pub perm: Vec<usize>,
}

/// Output-negation symmetry of the dicode erasure channel on the 3-node
/// Q-graph: swapping the states, the inputs and the signs of the outputs
/// exchanges nodes 0 and 1 and fixes node 2. Tying the `s=1` rows to the
/// mirrored `s=0` rows leaves three free parameters.
pub fn dec3_symmetry_ties() -> Vec<RowTie> {
    [((1, 1), (0, 0)), ((1, 2), (0, 2)), ((1, 0), (0, 1))]
        .into_iter()
        .map(|(row, source)| RowTie {
            row,
            source,
            perm: vec![1, 0],
        })
        .collect()
}

/// Settings for [`optimize_upper`].
#[derive(Debug, Clone)]
pub struct UpperOptions {
    /// Random starting points for the multistart pass.
    pub restarts: usize,
    /// Nelder-Mead restarts from each local optimum.
    pub polish_rounds: usize,
    /// Every policy entry is at least this (permitted inputs only).
    pub floor: f64,
    /// Grid spacing of the exhaustive pass.
    pub grid_step: f64,
    /// The grid pass runs when the number of free parameters is at most this.
    pub grid_max_params: usize,
    /// Grid points refined by local search after the grid pass.
    pub grid_top: usize,
    pub nm: NmOptions,
    pub seed: u64,
    /// Coupled node `(s0, q0)` selecting the closed class.
    pub start: Option<(usize, usize)>,
    pub ties: Vec<RowTie>,
    /// Entries at or below this are set to zero in the boundary probe.
    pub boundary_snap: f64,
}

impl Default for UpperOptions {
    fn default() -> Self {
        Self {
            restarts: 8,
            polish_rounds: 4,
            floor: 1e-7,
            grid_step: 1e-2,
            grid_max_params: 3,
            grid_top: 4,
            nm: NmOptions::default(),
            seed: 0,
            start: None,
            ties: Vec::new(),
            boundary_snap: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct BoundaryProbe {
    /// Closed classes of the snapped policy.
    pub classes: usize,
    /// Objective of each class of the snapped policy.
    pub class_values: Vec<f64>,
    /// Whether the snapped policy replaced the interior optimum.
    pub accepted: bool,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Diagnostics {
    pub free_params: usize,
    pub grid_points: usize,
    pub starts: usize,
    pub evaluations: usize,
    /// Best value reached from each start (grid refinements first).
    pub best_of: Vec<f64>,
    /// Evaluations rejected because no stationary solution was accepted.
    pub p_pi_violations: usize,
    pub closed_classes: usize,
    pub class: Vec<usize>,
    pub period: usize,
    pub boundary: BoundaryProbe,
    pub warnings: Vec<String>,
}

/// Best value found for `sup I(X,S;Y|Q)`.
#[derive(Debug, Clone)]
pub struct BoundResult {
    pub value: f64,
    pub policy: InputPolicy,
    pub stationary: Stationary,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone)]
enum RowParam {
    Fixed(usize),
    Free { inputs: Vec<usize>, offset: usize },
    Tied { source: usize, perm: Vec<usize> },
}

/// Box parameterization of the policy rows: each free row with `k`
/// permitted inputs uses `k - 1` stick-breaking coordinates in `[0,1]`.
#[derive(Debug, Clone)]
struct Parameterization {
    nx: usize,
    rows: Vec<RowParam>,
    dim: usize,
    floor: f64,
}

impl Parameterization {
    fn new(channel: &UnifilarChannel, nq: usize, ties: &[RowTie], floor: f64) -> Result<Self> {
        let (nx, ns) = (channel.nx(), channel.ns());
        let node = |(s, q): (usize, usize)| -> Result<usize> {
            if s >= ns || q >= nq {
                return Err(Error::InvalidPolicy(format!("tie refers to missing row (s={s},q={q})")));
            }
            Ok(s * nq + q)
        };
        let mut tied: Vec<Option<(usize, Vec<usize>)>> = vec![None; ns * nq];
        for tie in ties {
            let (r, src) = (node(tie.row)?, node(tie.source)?);
            let mut seen = vec![false; nx];
            if tie.perm.len() != nx || tie.perm.iter().any(|&p| p >= nx || std::mem::replace(&mut seen[p], true)) {
                return Err(Error::InvalidPolicy("tie permutation is not a permutation of inputs".into()));
            }
            if (0..nx).any(|x| channel.allowed(x, tie.source.0) != channel.allowed(tie.perm[x], tie.row.0)) {
                return Err(Error::InvalidPolicy(format!(
                    "tie (s={},q={}) <- (s={},q={}) does not respect the input mask",
                    tie.row.0, tie.row.1, tie.source.0, tie.source.1
                )));
            }
            if r == src || tied[r].is_some() {
                return Err(Error::InvalidPolicy(format!("row (s={},q={}) tied twice or to itself", tie.row.0, tie.row.1)));
            }
            tied[r] = Some((src, tie.perm.clone()));
        }
        if tied.iter().flatten().any(|(src, _)| tied[*src].is_some()) {
            return Err(Error::InvalidPolicy("tie sources must be untied rows".into()));
        }

        let mut rows = Vec::with_capacity(ns * nq);
        let mut dim = 0;
        for (n, tie) in tied.into_iter().enumerate() {
            let s = n / nq;
            rows.push(match tie {
                Some((source, perm)) => RowParam::Tied { source, perm },
                None => {
                    let inputs = channel.permitted_inputs(s);
                    if inputs.len() == 1 {
                        RowParam::Fixed(inputs[0])
                    } else {
                        let offset = dim;
                        dim += inputs.len() - 1;
                        RowParam::Free { inputs, offset }
                    }
                }
            });
        }
        Ok(Self { nx, rows, dim, floor })
    }

    fn decode_with_floor(&self, t: &[f64], floor: f64) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.nx]; self.rows.len()];
        for (n, param) in self.rows.iter().enumerate() {
            match param {
                RowParam::Fixed(x) => out[n][*x] = 1.0,
                RowParam::Free { inputs, offset } => {
                    let k = inputs.len();
                    let scale = 1.0 - k as f64 * floor;
                    let mut rest = 1.0;
                    for (i, &x) in inputs.iter().enumerate() {
                        let stick = if i + 1 == k { rest } else { rest * t[offset + i] };
                        rest -= stick;
                        out[n][x] = floor + scale * stick;
                    }
                }
                RowParam::Tied { .. } => {}
            }
        }
        for (n, param) in self.rows.iter().enumerate() {
            if let RowParam::Tied { source, perm } = param {
                let src = out[*source].clone();
                for x in 0..self.nx {
                    out[n][perm[x]] = src[x];
                }
            }
        }
        out
    }

    fn decode(&self, t: &[f64]) -> Vec<Vec<f64>> {
        self.decode_with_floor(t, self.floor)
    }
}

/// Maximizes `I(X,S;Y|Q)` over input policies.
///
/// Runs an exhaustive grid pass when the parameter count is small, then a
/// seeded multistart Nelder-Mead search, a Newton polish of the best point,
/// and finally a boundary probe that snaps near-zero entries to zero. The
/// value is the best one found.
pub fn optimize_upper(channel: &UnifilarChannel, qg: &QGraph, opts: &UpperOptions) -> Result<BoundResult> {
    let cg = CoupledGraph::build(channel, qg)?;
    if !channel.is_strongly_connected() {
        return Err(Error::NotStronglyConnected);
    }
    if !qg.is_irreducible() {
        return Err(Error::NotIrreducible);
    }
    let nq = qg.nq();
    let param = Parameterization::new(channel, nq, &opts.ties, opts.floor)?;
    let mut diag = Diagnostics {
        free_params: param.dim,
        ..Diagnostics::default()
    };

    let classes = cg.closed_classes();
    diag.closed_classes = classes.len();
    let start = match opts.start {
        Some((s, q)) if s < channel.ns() && q < nq => Some(cg.node(s, q)),
        Some((s, q)) => return Err(Error::InvalidPolicy(format!("start node (s={s},q={q}) out of range"))),
        None => None,
    };
    let ci = coupled::select_class(&cg, &classes, start).ok_or(Error::NoAperiodicClass)?;
    let class = classes[ci].clone();
    let periods: Vec<usize> = classes
        .iter()
        .map(|c| cg.period(c).map(|(d, _)| d))
        .collect::<Result<_>>()?;
    if periods.iter().all(|&d| d > 1) {
        return Err(Error::NoAperiodicClass);
    }
    diag.period = periods[ci];
    if diag.period > 1 {
        diag.warnings.push(format!("selected closed class has period {}", diag.period));
    }
    if classes.len() > 1 {
        diag.warnings.push(format!("coupled graph has {} closed classes; using class {ci}", classes.len()));
    }

    let evals = AtomicUsize::new(0);
    let violations = AtomicUsize::new(0);
    let f = |t: &[f64]| -> f64 {
        evals.fetch_add(1, Ordering::Relaxed);
        let policy = InputPolicy::from_rows_unchecked(channel, nq, param.decode(t));
        match coupled::stationary_on_class(channel, qg, &policy, &class) {
            Ok(st) => objective_at(channel, qg, &policy, &st),
            Err(_) => {
                violations.fetch_add(1, Ordering::Relaxed);
                f64::NEG_INFINITY
            }
        }
    };

    let mut starts: Vec<Vec<f64>> = Vec::new();
    if param.dim <= opts.grid_max_params && opts.grid_step > 0.0 {
        let n = (1.0 / opts.grid_step).round().max(1.0) as usize;
        let grid = box_grid(param.dim, n);
        diag.grid_points = grid.len();
        let mut scored: Vec<(f64, Vec<f64>)> = grid.into_par_iter().map(|t| (f(&t), t)).collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0));
        starts.extend(scored.into_iter().take(opts.grid_top.max(1)).map(|(_, t)| t));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    starts.push(vec![0.5; param.dim]);
    for _ in 0..opts.restarts {
        starts.push((0..param.dim).map(|_| rng.gen::<f64>()).collect());
    }
    diag.starts = starts.len();

    let results: Vec<_> = starts
        .par_iter()
        .map(|t0| nelder_mead_restarts(f, t0, opts.nm, opts.polish_rounds))
        .collect();
    diag.best_of = results.iter().map(|r| r.value).collect();
    let best = results
        .into_iter()
        .filter(|r| r.value.is_finite())
        .max_by(|a, b| a.value.total_cmp(&b.value))
        .ok_or(Error::NoFeasibleStart)?;

    let (x, _) = newton_polish(f, &best.x, 1e-5, 20);
    let mut policy = InputPolicy::from_rows_unchecked(channel, nq, param.decode(&x));
    let mut st = coupled::stationary_on_class(channel, qg, &policy, &class)?;
    let mut value = objective_at(channel, qg, &policy, &st);

    // boundary probe
    let snapped: Vec<Vec<f64>> = policy
        .rows()
        .into_iter()
        .map(|row| {
            let mut r: Vec<f64> = row.iter().map(|&v| if v <= opts.boundary_snap { 0.0 } else { v }).collect();
            let sum: f64 = r.iter().sum();
            r.iter_mut().for_each(|v| *v /= sum);
            r
        })
        .collect();
    if let Ok(sp) = InputPolicy::from_rows(channel, nq, &snapped) {
        let sclasses = cg.prune(&sp, PRUNE_TOL).closed_classes();
        diag.boundary.classes = sclasses.len();
        let mut evaluated = Vec::new();
        for c in &sclasses {
            match coupled::stationary_on_class(channel, qg, &sp, c) {
                Ok(sst) => evaluated.push((objective_at(channel, qg, &sp, &sst), sst)),
                Err(_) => evaluated.push((f64::NAN, st.clone())),
            }
        }
        diag.boundary.class_values = evaluated.iter().map(|(v, _)| *v).collect();
        if sclasses.len() == 1 {
            let (v, sst) = evaluated.pop().expect("one class");
            let aperiodic = cg.prune(&sp, PRUNE_TOL).period(&sclasses[0]).map(|(d, _)| d == 1).unwrap_or(false);
            if v > value && (aperiodic || diag.period > 1) {
                value = v;
                policy = sp;
                st = sst;
                diag.boundary.accepted = true;
            }
        }
    }

    diag.evaluations = evals.into_inner();
    diag.p_pi_violations = violations.into_inner();
    diag.class = st.class.clone();
    Ok(BoundResult {
        value,
        policy,
        stationary: st,
        diagnostics: diag,
    })
}

/// Closed-form capacity of the binary erasure channel with no consecutive
/// ones: `max_{0 <= p <= 1/2} H2(p) / (1/(1-eps) + p)`.
pub fn oracle_bec(eps: f64) -> Result<f64> {
    check_unit("eps", eps)?;
    if eps >= 1.0 {
        return Ok(0.0);
    }
    let c = 1.0 / (1.0 - eps);
    Ok(golden_max(|p| h2(p) / (c + p), 0.0, 0.5, 1e-10).1)
}

/// Closed-form capacity of the dicode erasure channel:
/// `max_{0 <= p <= 1} (1-eps) (p + eps H2(p)) / (eps + (1-eps) p)`.
pub fn oracle_dec(eps: f64) -> Result<f64> {
    check_unit("eps", eps)?;
    if eps == 0.0 {
        return Ok(1.0);
    }
    if eps >= 1.0 {
        return Ok(0.0);
    }
    let f = |p: f64| (1.0 - eps) * (p + eps * h2(p)) / (eps + (1.0 - eps) * p);
    Ok(golden_max(f, 0.0, 1.0, 1e-10).1)
}

/// Trapdoor coefficients `(delta, kappa1, kappa2, kappa3)`; `None` if
/// `delta <= 0`.
fn trapdoor_kappas(a: [f64; 3], p: f64) -> Option<(f64, f64, f64, f64)> {
    let [a1, a2, a3] = a;
    let q = 1.0 - p;
    let delta = 2.0 * q * (a1 - a2 + a1 * a3 - a1 * a2 + a2 * a3) + 4.0 * a1 * p - 2.0 * a3 + 2.0;
    if delta <= 0.0 {
        return None;
    }
    let k1 = (1.0 - a3) * (1.0 - a2 * q) / delta;
    let k2 = a1 * (p + a3 * q) / delta;
    let k3 = a1 * (1.0 - a2 * q) / delta;
    Some((delta, k1, k2, k3))
}

/// Trapdoor upper-bound expression at `alpha = (a1, a2, a3)`:
/// `2(k1+k2) H2(b) - 2 H2(p)(k1 a1 + k2 a2 + a3/2) + 2 k3` with
/// `b = (k1 (1 - a1 (1-p)) + k2 (1-p) a2) / (k1 + k2)`.
pub fn trapdoor_upper_objective(alpha: [f64; 3], p: f64) -> Option<f64> {
    let [a1, a2, a3] = alpha;
    let (_, k1, k2, k3) = trapdoor_kappas(alpha, p)?;
    let q = 1.0 - p;
    let ks = k1 + k2;
    let first = if ks > 0.0 {
        2.0 * ks * h2(((k1 * (1.0 - a1 * q) + k2 * q * a2) / ks).clamp(0.0, 1.0))
    } else {
        0.0
    };
    Some(first - 2.0 * h2(p) * (k1 * a1 + k2 * a2 + 0.5 * a3) + 2.0 * k3)
}

/// `lambda2 = 2 (k3 - k1 a1 - k2 a2 - a3/2)`, which is never positive.
pub fn trapdoor_lambda2(alpha: [f64; 3], p: f64) -> Option<f64> {
    let [a1, a2, a3] = alpha;
    let (_, k1, k2, k3) = trapdoor_kappas(alpha, p)?;
    Some(2.0 * (k3 - k1 * a1 - k2 * a2 - 0.5 * a3))
}

#[derive(Debug, Clone, Serialize)]
pub struct TrapdoorOracle {
    pub value: f64,
    pub alpha: [f64; 3],
    /// Grid points skipped because `delta <= 0`.
    pub skipped: usize,
}

/// Maximum of [`trapdoor_upper_objective`] over `[0,1]^3`: a grid pass with
/// spacing `1e-2` followed by local refinement of the best grid points.
pub fn oracle_trapdoor_upper(p: f64) -> Result<TrapdoorOracle> {
    check_unit("p", p)?;
    let grid = box_grid(3, 100);
    let scored: Vec<(f64, Vec<f64>)> = grid
        .into_par_iter()
        .map(|t| (trapdoor_upper_objective([t[0], t[1], t[2]], p).unwrap_or(f64::NAN), t))
        .collect();
    let skipped = scored.iter().filter(|(v, _)| v.is_nan()).count();
    let mut ok: Vec<_> = scored.into_iter().filter(|(v, _)| !v.is_nan()).collect();
    ok.sort_by(|a, b| b.0.total_cmp(&a.0));
    let f = |t: &[f64]| trapdoor_upper_objective([t[0], t[1], t[2]], p).unwrap_or(f64::NEG_INFINITY);
    let nm = NmOptions {
        ftol: 1e-9,
        xtol: 1e-9,
        step: 0.01,
        ..NmOptions::default()
    };
    let best = ok
        .iter()
        .take(4)
        .map(|(_, t)| nelder_mead_restarts(f, t, nm, 4))
        .max_by(|a, b| a.value.total_cmp(&b.value))
        .ok_or(Error::NoFeasibleStart)?;
    Ok(TrapdoorOracle {
        value: best.value,
        alpha: [best.x[0], best.x[1], best.x[2]],
        skipped,
    })
}

/// `max_alpha H2(alpha) / (2 - alpha)`, the certified trapdoor rate; returns
/// `(value, alpha)`.
pub fn oracle_trapdoor_lower() -> (f64, f64) {
    let (a, v) = golden_max(|a| h2(a) / (2.0 - a), 0.0, 1.0, 1e-12);
    (v, a)
}

fn check_unit(name: &'static str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::ParameterOutOfRange {
            name,
            value: v,
            range: "[0,1]",
        })
    }
}

/// Parametric channel families for sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelFamily {
    Trapdoor,
    Dec,
    BecNo11,
}

impl std::str::FromStr for ChannelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trapdoor" => Ok(Self::Trapdoor),
            "dec" => Ok(Self::Dec),
            "bec_no11" | "bec" => Ok(Self::BecNo11),
            other => Err(Error::Io(format!("unknown channel family {other:?} (trapdoor, dec, bec_no11)"))),
        }
    }
}

impl ChannelFamily {
    pub fn name(self) -> &'static str {
        match self {
            Self::Trapdoor => "trapdoor",
            Self::Dec => "dec",
            Self::BecNo11 => "bec_no11",
        }
    }

    pub fn channel(self, param: f64) -> Result<UnifilarChannel> {
        match self {
            Self::Trapdoor => UnifilarChannel::trapdoor(param),
            Self::Dec => UnifilarChannel::dec(param),
            Self::BecNo11 => UnifilarChannel::bec_no11(param),
        }
    }

    /// Closed-form reference value at `param`.
    pub fn oracle(self, param: f64) -> Result<f64> {
        match self {
            Self::Trapdoor => oracle_trapdoor_upper(param).map(|o| o.value),
            Self::Dec => oracle_dec(param),
            Self::BecNo11 => oracle_bec(param),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub param: f64,
    pub upper_bound: Option<f64>,
    pub oracle: Option<f64>,
    pub error: Option<String>,
}

impl SweepRow {
    pub fn gap(&self) -> Option<f64> {
        Some(self.upper_bound? - self.oracle?)
    }
}

/// `optimize_upper` over a parameter grid, rows in grid order.
pub fn sweep(family: ChannelFamily, qg: &QGraph, params: &[f64], opts: &UpperOptions) -> Vec<SweepRow> {
    params
        .par_iter()
        .map(|&param| {
            let upper = family
                .channel(param)
                .and_then(|c| optimize_upper(&c, qg, opts))
                .map(|r| r.value);
            let oracle = family.oracle(param).ok();
            match upper {
                Ok(v) => SweepRow {
                    param,
                    upper_bound: Some(v),
                    oracle,
                    error: None,
                },
                Err(e) => SweepRow {
                    param,
                    upper_bound: None,
                    oracle,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}

/// CSV with header `param,upper_bound,oracle,gap`; failed rows carry
/// `failed` in the bound column.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.10}")).unwrap_or_default();
    let mut out = String::from("param,upper_bound,oracle,gap\n");
    for r in rows {
        let ub = match r.upper_bound {
            Some(v) => format!("{v:.10}"),
            None => "failed".into(),
        };
        let gap = r.gap().map(|g| format!("{g:.2e}")).unwrap_or_default();
        out.push_str(&format!("{},{},{},{}\n", r.param, ub, fmt(r.oracle), gap));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const PHI_RATE: f64 = 0.694_241_913_630_617_3;

    fn bec2_closed_form(eps: f64, p: f64) -> f64 {
        (1.0 + eps * p) / (1.0 + p) * (1.0 - eps) * h2(p / (1.0 + eps * p))
    }

    fn dec_closed_form(eps: f64, a: f64, p: f64) -> f64 {
        (1.0 - eps) * ((1.0 - eps) * p * h2(a) + eps * (p + h2(p))) / (eps + (1.0 - eps) * p)
    }

    fn dec_policy(c: &UnifilarChannel, a: f64, p: f64) -> InputPolicy {
        // p(x=0|s0,q1) = p(x=1|s1,q2) = a; p(x=1|s0,q3) = p(x=0|s1,q3) = p
        InputPolicy::from_fn(c, 3, |x, s, q| {
            let p_same = match (s, q) {
                (0, 0) | (1, 1) => a,
                (_, 2) => 1.0 - p,
                _ => 0.5,
            };
            if x == s {
                p_same
            } else {
                1.0 - p_same
            }
        })
        .unwrap()
    }

    #[test]
    fn bec2_objective_closed_form() {
        for eps in [0.0, 0.3, 0.7] {
            for p in [0.1, 0.4, 0.5] {
                let c = UnifilarChannel::bec_no11(eps).unwrap();
                let u = InputPolicy::from_fn(&c, 2, |x, s, q| match (s, q) {
                    (0, 0) => [1.0 - p, p][x],
                    _ => [1.0, 0.0][x],
                })
                .unwrap();
                let v = objective(&c, &QGraph::bec2(), &u).unwrap();
                assert!((v - bec2_closed_form(eps, p)).abs() < 1e-12, "{eps} {p}");
            }
        }
    }

    #[test]
    fn dec_objective_closed_form() {
        for eps in [0.25, 0.5, 0.75] {
            for (a, p) in [(0.5, 0.3), (0.3, 0.6), (0.8, 0.9)] {
                let c = UnifilarChannel::dec(eps).unwrap();
                let v = objective(&c, &QGraph::dec3(), &dec_policy(&c, a, p)).unwrap();
                assert!((v - dec_closed_form(eps, a, p)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn deterministic_kernel_gives_output_entropy() {
        let c = UnifilarChannel::dec(0.0).unwrap();
        let g = QGraph::trivial(4);
        let u = InputPolicy::uniform(&c, 1);
        let st = coupled::stationary(&c, &g, &u).unwrap();
        // H(Y) with p(y) = [1/4, 1/2, 1/4, 0]
        assert!((objective_at(&c, &g, &u, &st) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn oracle_values() {
        assert!((oracle_bec(0.0).unwrap() - PHI_RATE).abs() < 1e-9);
        assert!((oracle_bec(0.5).unwrap() - 0.4057).abs() < 1e-4);
        assert_eq!(oracle_bec(1.0).unwrap(), 0.0);
        assert!(oracle_bec(0.999).unwrap() < 1e-2);
        assert_eq!(oracle_dec(0.0).unwrap(), 1.0);
        assert_eq!(oracle_dec(1.0).unwrap(), 0.0);
        assert!((oracle_dec(0.5).unwrap() - 0.6785).abs() < 1e-4);
        assert!(oracle_dec(1.5).is_err());
    }

    #[test]
    fn oracles_non_increasing() {
        let grid: Vec<f64> = (0..=20).map(|i| i as f64 * 0.05).collect();
        for w in grid.windows(2) {
            assert!(oracle_bec(w[1]).unwrap() <= oracle_bec(w[0]).unwrap() + 1e-12);
            assert!(oracle_dec(w[1]).unwrap() <= oracle_dec(w[0]).unwrap() + 1e-12);
        }
    }

    #[test]
    fn trapdoor_lower_oracle() {
        let (v, _) = oracle_trapdoor_lower();
        assert!((v - PHI_RATE).abs() < 1e-9);
        assert!((h2(0.5) / 1.5 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn trapdoor_upper_at_half() {
        let o = oracle_trapdoor_upper(0.5).unwrap();
        assert!((o.value - PHI_RATE).abs() < 1e-4, "{o:?}");
    }

    #[test]
    fn trapdoor_objective_at_origin() {
        assert_eq!(trapdoor_upper_objective([0.0; 3], 0.3), Some(0.0));
        assert_eq!(trapdoor_lambda2([0.0; 3], 0.3), Some(0.0));
    }

    #[test]
    fn bec_upper_small() {
        let c = UnifilarChannel::bec_no11(0.3).unwrap();
        let r = optimize_upper(&c, &QGraph::bec2(), &UpperOptions::default()).unwrap();
        assert_eq!(r.diagnostics.free_params, 2);
        assert!((r.value - oracle_bec(0.3).unwrap()).abs() < 1e-4, "{}", r.value);
    }

    #[test]
    fn dec_upper_with_ties() {
        let c = UnifilarChannel::dec(0.4).unwrap();
        let ties = dec3_symmetry_ties();
        let opts = UpperOptions {
            ties,
            ..UpperOptions::default()
        };
        let r = optimize_upper(&c, &QGraph::dec3(), &opts).unwrap();
        assert_eq!(r.diagnostics.free_params, 3);
        assert!((r.value - oracle_dec(0.4).unwrap()).abs() < 1e-4, "{}", r.value);
    }

    #[test]
    fn bad_ties_rejected() {
        let c = UnifilarChannel::bec_no11(0.3).unwrap();
        let tie = RowTie {
            row: (1, 0),
            source: (0, 0),
            perm: vec![0, 1],
        };
        let opts = UpperOptions {
            ties: vec![tie],
            ..UpperOptions::default()
        };
        assert!(matches!(
            optimize_upper(&c, &QGraph::bec2(), &opts),
            Err(Error::InvalidPolicy(_))
        ));
    }

    #[test]
    fn sweep_rows_and_csv() {
        let rows = sweep(ChannelFamily::Dec, &QGraph::bec2(), &[0.1], &UpperOptions::default());
        assert!(rows[0].upper_bound.is_none());
        let csv = sweep_csv(&rows);
        assert!(csv.starts_with("param,upper_bound,oracle,gap\n0.1,failed,"));
        assert!(sweep(ChannelFamily::Dec, &QGraph::dec3(), &[], &UpperOptions::default()).is_empty());
    }
}
