//! A channel whose state is the previous output, described from scratch.
//! With the state graph itself as the Q-graph the coupled graph analysis,
//! stationary law and both bounds run unchanged, and the bounds coincide.
//!
//! ```text
//! cargo run --example state_is_output
//! ```

use qbound::bcjr::{lower_bound, InvarianceOptions};
use qbound::bound::{optimize_upper, UpperOptions};
use qbound::coupled::{stationary, CoupledGraph};
use qbound::{ChannelSpec, QGraph, UnifilarChannel};

fn main() -> qbound::Result<()> {
    // binary symmetric channel whose crossover is 0.05 after a 0 and 0.3 after a 1
    let cross = [0.05, 0.3];
    let mut kernel = vec![vec![vec![0.0; 2]; 2]; 2];
    for y in 0..2 {
        for x in 0..2 {
            for s in 0..2 {
                kernel[y][x][s] = if x == y { 1.0 - cross[s] } else { cross[s] };
            }
        }
    }
    let spec = ChannelSpec {
        nx: 2,
        ny: 2,
        ns: 2,
        kernel,
        next_state: vec![vec![vec![0, 0], vec![1, 1]]; 2],
        input_mask: None,
        name: "previous-output BSC".into(),
        y_labels: None,
    };
    let channel = UnifilarChannel::from_spec(&spec)?;
    let qg = QGraph::new(2, vec![vec![0, 1], vec![0, 1]], "state graph")?;

    let cg = CoupledGraph::build(&channel, &qg)?;
    for class in cg.closed_classes() {
        let pairs: Vec<_> = class.iter().map(|&v| cg.pair(v)).collect();
        println!("closed class {pairs:?}, period {}", cg.period(&class)?.0);
    }

    let upper = optimize_upper(&channel, &qg, &UpperOptions::default())?;
    let st = stationary(&channel, &qg, &upper.policy)?;
    println!("upper bound {:.8}", upper.value);
    for q in 0..qg.nq() {
        println!(
            "  q{q}: pi(q) = {:.6}, p(x=0|q) = {:.6}",
            st.q_marginal(q),
            upper.policy.prob(0, q, q)
        );
    }
    let lb = lower_bound(&channel, &qg, &upper.policy, &InvarianceOptions::default())?;
    println!("certified   {:.8}", lb.rate);
    Ok(())
}
