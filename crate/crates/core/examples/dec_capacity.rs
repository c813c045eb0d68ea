//! Dicode erasure channel: the upper bound on the 3-node Q-graph meets the
//! closed form, and the maximizing symmetric policy is BCJR-invariant, so
//! the bound is the feedback capacity. The search is restricted to policies
//! invariant under negating the outputs; without that restriction it may
//! return an asymmetric maximizer of the same value that is not invariant.
//!
//! ```text
//! cargo run --example dec_capacity
//! ```

use qbound::bcjr::{lower_bound, InvarianceOptions};
use qbound::bound::{dec3_symmetry_ties, optimize_upper, oracle_dec, UpperOptions};
use qbound::{QGraph, UnifilarChannel};

fn main() -> qbound::Result<()> {
    let qg = QGraph::dec3();
    let opts = UpperOptions {
        ties: dec3_symmetry_ties(),
        ..UpperOptions::default()
    };
    println!("{:>5} {:>11} {:>11} {:>11}  pi(s=0|q)", "eps", "upper", "certified", "oracle");
    for k in 0..=10 {
        let eps = k as f64 / 10.0;
        let channel = UnifilarChannel::dec(eps)?;
        let upper = optimize_upper(&channel, &qg, &opts)?;
        let (certified, cond) = match lower_bound(&channel, &qg, &upper.policy, &InvarianceOptions::default()) {
            Ok(lb) => {
                let cond: Vec<String> = lb
                    .report
                    .conditionals
                    .iter()
                    .map(|c| c.as_ref().map_or("-".into(), |c| format!("{:.4}", c[0])))
                    .collect();
                (format!("{:>11.8}", lb.rate), cond.join(" "))
            }
            Err(e) => (format!("{:>11}", "no"), e.to_string()),
        };
        println!("{eps:>5.1} {:>11.8} {certified} {:>11.8}  {cond}", upper.value, oracle_dec(eps)?);
    }
    Ok(())
}
