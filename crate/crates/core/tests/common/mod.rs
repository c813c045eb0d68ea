#![allow(dead_code)]

use qbound::coupled::InputPolicy;
use qbound::{ChannelSpec, QGraph, UnifilarChannel};
use rand::Rng;

/// Random probability vector of length `n` with roughly `zero_frac` of the
/// entries zero (at least one entry is positive).
pub fn random_dist(rng: &mut impl Rng, n: usize, zero_frac: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n)
            .map(|_| if rng.gen::<f64>() < zero_frac { 0.0 } else { rng.gen::<f64>() + 1e-3 })
            .collect();
        let sum: f64 = v.iter().sum();
        if sum > 0.0 {
            return v.into_iter().map(|x| x / sum).collect();
        }
    }
}

/// Random channel spec, not necessarily strongly connected.
pub fn random_spec(rng: &mut impl Rng, max_alphabet: usize) -> ChannelSpec {
    let nx = rng.gen_range(1..=max_alphabet);
    let ny = rng.gen_range(1..=max_alphabet);
    let ns = rng.gen_range(1..=max_alphabet);
    let mut kernel = vec![vec![vec![0.0; ns]; nx]; ny];
    for x in 0..nx {
        for s in 0..ns {
            let d = random_dist(rng, ny, 0.3);
            for y in 0..ny {
                kernel[y][x][s] = d[y];
            }
        }
    }
    let next_state = (0..nx)
        .map(|_| (0..ny).map(|_| (0..ns).map(|_| rng.gen_range(0..ns)).collect()).collect())
        .collect();
    let input_mask = if rng.gen_bool(0.3) {
        let mut mask = vec![vec![true; ns]; nx];
        for s in 0..ns {
            let keep = rng.gen_range(0..nx);
            for (x, row) in mask.iter_mut().enumerate() {
                row[s] = x == keep || rng.gen_bool(0.6);
            }
        }
        Some(mask)
    } else {
        None
    };
    ChannelSpec {
        nx,
        ny,
        ns,
        kernel,
        next_state,
        input_mask,
        name: "random".into(),
        y_labels: None,
    }
}

/// Random strongly connected channel.
pub fn random_channel(rng: &mut impl Rng, max_alphabet: usize) -> UnifilarChannel {
    loop {
        let c = UnifilarChannel::from_spec(&random_spec(rng, max_alphabet)).expect("valid random spec");
        if c.is_strongly_connected() {
            return c;
        }
    }
}

/// Random irreducible Q-graph with `ny` outputs and up to `max_nodes` nodes.
pub fn random_qgraph(rng: &mut impl Rng, ny: usize, max_nodes: usize) -> QGraph {
    loop {
        let nq = rng.gen_range(1..=max_nodes);
        let g = (0..nq).map(|_| (0..ny).map(|_| rng.gen_range(0..nq)).collect()).collect();
        let qg = QGraph::new(ny, g, "random").expect("valid random graph");
        if qg.is_irreducible() {
            return qg;
        }
    }
}

/// Random policy with full support on the permitted inputs.
pub fn random_policy(rng: &mut impl Rng, channel: &UnifilarChannel, nq: usize) -> InputPolicy {
    let mut rows = Vec::new();
    for s in 0..channel.ns() {
        for _ in 0..nq {
            let allowed = channel.permitted_inputs(s);
            let d = random_dist(rng, allowed.len(), 0.0);
            let mut row = vec![0.0; channel.nx()];
            for (k, &x) in allowed.iter().enumerate() {
                row[x] = d[k];
            }
            rows.push(row);
        }
    }
    InputPolicy::from_rows(channel, nq, &rows).expect("valid random policy")
}

/// Every output has positive probability from every state under some
/// permitted input.
pub fn outputs_reachable_everywhere(c: &UnifilarChannel) -> bool {
    (0..c.ny()).all(|y| (0..c.ns()).all(|s| c.permitted_inputs(s).into_iter().any(|x| c.prob(y, x, s) > 0.0)))
}

/// Joint enumeration of `p(s' | y)` and `p(y)` from `z(s) u(x|s) W(y|x,s)`.
pub fn bayes_oracle(c: &UnifilarChannel, z: &[f64], u: &[Vec<f64>], y: usize) -> (Vec<f64>, f64) {
    let mut joint = vec![0.0; c.ns()];
    for s in 0..c.ns() {
        for x in 0..c.nx() {
            joint[c.next_state(x, y, s)] += z[s] * u[s][x] * c.prob(y, x, s);
        }
    }
    let py: f64 = joint.iter().sum();
    (joint.iter().map(|v| v / py).collect(), py)
}

/// Random rows `u[s][x]` supported on permitted inputs, some entries zero.
pub fn random_action(rng: &mut impl Rng, c: &UnifilarChannel) -> Vec<Vec<f64>> {
    (0..c.ns())
        .map(|s| {
            let allowed = c.permitted_inputs(s);
            let d = random_dist(rng, allowed.len(), 0.3);
            let mut row = vec![0.0; c.nx()];
            for (k, &x) in allowed.iter().enumerate() {
                row[x] = d[k];
            }
            row
        })
        .collect()
}
