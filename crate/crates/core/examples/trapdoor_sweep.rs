//! Sweep of the trapdoor upper bound on a Q-graph file against the closed
//! form, written as CSV (`param,upper_bound,oracle,gap`).
//!
//! ```text
//! cargo run --example trapdoor_sweep -- examples/data/trapdoor_q4.json > sweep.csv
//! ```

use qbound::bound::{sweep, sweep_csv, ChannelFamily, UpperOptions};
use qbound::io;

fn main() -> qbound::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data/trapdoor_q3.json").into());
    let qg = io::load_qgraph(&path)?;
    let params: Vec<f64> = (1..20).map(|k| k as f64 * 0.05).collect();
    let rows = sweep(ChannelFamily::Trapdoor, &qg, &params, &UpperOptions::default());
    print!("{}", sweep_csv(&rows));
    Ok(())
}
