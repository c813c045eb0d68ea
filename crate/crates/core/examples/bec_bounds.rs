//! Input-constrained BEC (no two consecutive ones): upper bound on the
//! 2-node Q-graph, certified lower bound on the 3-node Q-graph, and the
//! closed form.
//!
//! ```text
//! cargo run --example bec_bounds
//! ```

use qbound::bcjr::{bec3_policy, lower_bound, InvarianceOptions};
use qbound::bound::{optimize_upper, oracle_bec, UpperOptions};
use qbound::{QGraph, UnifilarChannel};

fn main() -> qbound::Result<()> {
    println!("{:>5} {:>11} {:>11} {:>11} {:>7}", "eps", "upper", "lower", "oracle", "p*");
    for k in 0..10 {
        let eps = k as f64 / 10.0;
        let channel = UnifilarChannel::bec_no11(eps)?;
        let upper = optimize_upper(&channel, &QGraph::bec2(), &UpperOptions::default())?;

        // the lower bound is certified for each p; keep the best on a fine grid
        let mut best = (f64::NEG_INFINITY, 0.0);
        for i in 0..=500 {
            let p = i as f64 / 1000.0;
            let policy = bec3_policy(eps, p)?;
            if let Ok(lb) = lower_bound(&channel, &QGraph::bec3(), &policy, &InvarianceOptions::default()) {
                if lb.rate > best.0 {
                    best = (lb.rate, p);
                }
            }
        }
        println!(
            "{eps:>5.1} {:>11.8} {:>11.8} {:>11.8} {:>7.3}",
            upper.value,
            best.0,
            oracle_bec(eps)?,
            best.1
        );
    }
    Ok(())
}
