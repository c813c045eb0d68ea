//! From the belief-space DP to a certified bound: value iteration, a rollout
//! of the greedy policy, a Q-graph read off the visited beliefs, and the
//! upper and lower bounds on that graph.
//!
//! ```text
//! cargo run --release --example dp_extract -- dec 0.5
//! cargo run --release --example dp_extract -- bec 0.5
//! ```

use qbound::bcjr::{lower_bound, InvarianceOptions};
use qbound::bound::{optimize_upper, ChannelFamily, UpperOptions};
use qbound::dp::{extract_qgraph, rollout, value_iteration, RolloutOptions, ViOptions};
use qbound::QGraph;

fn main() -> qbound::Result<()> {
    let mut args = std::env::args().skip(1);
    let family: ChannelFamily = args.next().as_deref().unwrap_or("dec").parse()?;
    let param: f64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(0.5);
    let channel = family.channel(param)?;

    let vi = value_iteration(&channel, &ViOptions::default())?;
    println!(
        "DP rate {:.6} in [{:.8}, {:.8}], {} iterations",
        vi.rate, vi.lower, vi.upper, vi.iterations
    );

    let hist = rollout(&vi, &RolloutOptions::default())?;
    println!("{} occupied cells", hist.cells.len());
    for c in &hist.cells {
        println!("  {:.6?} x{}", c.belief, c.count);
    }

    let e = extract_qgraph(&hist, 1e-3)?;
    println!("extracted {}-node Q-graph", e.qgraph.nq());
    for q in 0..e.qgraph.nq() {
        println!("  q{q} {:.6?} -> {:?}", e.beliefs[q], e.qgraph.row(q));
    }
    for (name, builtin) in [("bec3", QGraph::bec3()), ("dec3", QGraph::dec3())] {
        if e.qgraph.is_isomorphic(&builtin) {
            println!("  isomorphic to {name}");
        }
    }

    let upper = optimize_upper(&channel, &e.qgraph, &UpperOptions::default())?;
    println!("upper bound      {:.8}", upper.value);

    // the DP's own actions, read as a policy on the extracted graph; they are
    // optimal only up to the value-function discretization
    let loose = InvarianceOptions {
        gap_tol: 1e-6,
        ..InvarianceOptions::default()
    };
    match lower_bound(&channel, &e.qgraph, &e.policy(&channel)?, &loose) {
        Ok(lb) => println!("certified lower  {:.8}  (rollout actions, gap {:.1e})", lb.rate, lb.report.max_gap),
        Err(err) => println!("rollout actions not certified: {err}"),
    }
    if let Ok(oracle) = family.oracle(param) {
        println!("closed form      {oracle:.8}");
    }
    Ok(())
}
