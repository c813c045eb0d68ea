//! Trapdoor channel: closed-form upper and lower values, upper bounds on two
//! user-supplied Q-graphs, and the certified lower bound of the 4-node graph
//! as a function of the free parameter `z`.
//!
//! ```text
//! cargo run --example trapdoor_bounds -- 0.5
//! ```

use qbound::bcjr::{lower_bound, trapdoor_alpha, trapdoor_lower_policy, InvarianceOptions};
use qbound::bound::{optimize_upper, oracle_trapdoor_lower, oracle_trapdoor_upper, UpperOptions};
use qbound::optim::golden_max;
use qbound::{io, UnifilarChannel};

fn main() -> qbound::Result<()> {
    let p: f64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(0.5);
    let channel = UnifilarChannel::trapdoor(p)?;
    let data = concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data");
    let q3 = io::load_qgraph(&format!("{data}/trapdoor_q3.json"))?;
    let q4 = io::load_qgraph(&format!("{data}/trapdoor_q4.json"))?;

    let oracle = oracle_trapdoor_upper(p)?;
    let (lower, alpha) = oracle_trapdoor_lower();
    println!("p = {p}");
    println!("closed-form upper   {:.8}  (alpha = {:.6?})", oracle.value, oracle.alpha);
    println!("closed-form lower   {lower:.8}  (alpha = {alpha:.6})");
    for qg in [&q3, &q4] {
        let r = optimize_upper(&channel, qg, &UpperOptions::default())?;
        println!("upper on {:<11} {:.8}", qg.name(), r.value);
    }

    let rate = |z: f64| {
        trapdoor_lower_policy(&q4, z, p)
            .and_then(|u| lower_bound(&channel, &q4, &u, &InvarianceOptions::default()))
            .map_or(f64::NEG_INFINITY, |lb| lb.rate)
    };
    let (z, best) = golden_max(rate, 0.0, 1.0, 1e-10);
    println!(
        "certified on {:<7} {best:.8}  (z = {z:.6}, alpha = {:.6})",
        q4.name(),
        trapdoor_alpha(z, p)
    );
    Ok(())
}
