use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use qbound::bcjr::{self, InvarianceOptions};
use qbound::bound::{self, ChannelFamily, RowTie, UpperOptions};
use qbound::coupled::{self, CoupledGraph, InputPolicy, PolicySpec};
use qbound::dp::{self, RolloutOptions, ViOptions, VisitHistogram};
use qbound::io::{self, InputDigest, Kind, RunReport};
use qbound::{Error, UnifilarChannel};

#[derive(Parser)]
#[command(name = "qbound", version, about = "Feedback-capacity bounds for unifilar finite-state channels via Q-graphs")]
struct Cli {
    /// Print the run report as JSON.
    #[arg(long, global = true)]
    json: bool,
    /// Seed for every stochastic step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Command-specific tolerance: invariance gap (bound-lower), pruning
    /// threshold (graph-info), clustering radius (extract-qgraph).
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Maximize I(X,S;Y|Q) over input policies.
    BoundUpper(BoundUpperArgs),
    /// Certify a policy as BCJR-invariant and report its rate.
    BoundLower(BoundLowerArgs),
    /// Classes, periods and stationary law of the coupled graph.
    GraphInfo(GraphInfoArgs),
    /// Value iteration plus a rollout histogram of visited beliefs.
    DpSimulate(DpSimulateArgs),
    /// Read a Q-graph off a rollout histogram.
    ExtractQgraph(ExtractArgs),
    /// Upper bound and closed form over a parameter range.
    Sweep(SweepArgs),
    /// Closed-form reference values.
    Oracles(OracleArgs),
}

#[derive(Args)]
struct Inputs {
    /// Channel JSON file or builtin name such as builtin:dec:0.5.
    #[arg(long)]
    channel: String,
    /// Q-graph JSON file or builtin name such as builtin:dec3.
    #[arg(long)]
    qgraph: String,
}

#[derive(Args)]
struct BoundUpperArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long, default_value_t = 8)]
    restarts: usize,
    #[arg(long, default_value_t = 1e-2)]
    grid_step: f64,
    /// Row ties: a JSON file [{"row":[s,q],"source":[s,q],"perm":[...]}], or
    /// builtin:dec3 for the dicode output-negation symmetry.
    #[arg(long)]
    ties: Option<String>,
    /// Write the maximizing policy here.
    #[arg(long)]
    policy_out: Option<String>,
}

#[derive(Args)]
struct BoundLowerArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// Policy JSON {"u": [x][s][q]}.
    #[arg(long)]
    policy: String,
}

#[derive(Args)]
struct GraphInfoArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// Policy JSON; adds the pruned graph and its stationary law.
    #[arg(long)]
    policy: Option<String>,
}

#[derive(Args)]
struct DpSimulateArgs {
    /// Channel JSON file or builtin name.
    #[arg(long)]
    channel: String,
    #[arg(long, default_value_t = 100)]
    resolution: u32,
    #[arg(long, default_value_t = 50)]
    action_steps: u32,
    #[arg(long, default_value_t = 20_000)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-9)]
    span_tol: f64,
    #[arg(long, default_value_t = 200_000)]
    steps: usize,
    #[arg(long, default_value_t = 1000)]
    burn_in: usize,
    #[arg(long, default_value_t = 1e-3)]
    cluster_tol: f64,
    /// Histogram output file.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct ExtractArgs {
    /// Histogram written by dp-simulate.
    #[arg(long)]
    hist: String,
    /// Q-graph output file.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct SweepArgs {
    /// Channel family: trapdoor, dec or bec_no11.
    #[arg(long)]
    family: String,
    /// Q-graph JSON file or builtin name.
    #[arg(long)]
    qgraph: String,
    /// Name of the swept parameter, used in the report only.
    #[arg(long, default_value = "eps")]
    param: String,
    #[arg(long, default_value_t = 0.0)]
    from: f64,
    #[arg(long, default_value_t = 0.9)]
    to: f64,
    #[arg(long, default_value_t = 0.1)]
    step: f64,
    #[arg(long, default_value_t = 8)]
    restarts: usize,
    /// CSV output file; stdout when absent.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct OracleArgs {
    /// trapdoor, dec or bec_no11.
    #[arg(long)]
    channel_family: String,
    /// Channel parameter (erasure probability, or p for the trapdoor).
    #[arg(long, alias = "p")]
    eps: f64,
}

/// A failed command: exit code and a JSON body for stderr.
struct Failure {
    code: u8,
    body: serde_json::Value,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: 2,
            body: json!({ "error": e.to_string() }),
        }
    }
}

type CmdResult = Result<(RunReport, String), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    let outcome = match &cli.command {
        Command::BoundUpper(a) => bound_upper(&cli, a),
        Command::BoundLower(a) => bound_lower(&cli, a),
        Command::GraphInfo(a) => graph_info(&cli, a),
        Command::DpSimulate(a) => dp_simulate(&cli, a),
        Command::ExtractQgraph(a) => extract_qgraph(&cli, a),
        Command::Sweep(a) => sweep(&cli, a),
        Command::Oracles(a) => oracles(a),
    };
    match outcome {
        Ok((report, human)) => {
            let report = report.finish(start.elapsed());
            if cli.json {
                println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            } else {
                print!("{human}");
            }
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("{}", f.body);
            ExitCode::from(f.code)
        }
    }
}

fn load_inputs(inputs: &Inputs) -> Result<(UnifilarChannel, qbound::QGraph), Error> {
    let channel = io::load_channel(&inputs.channel)?;
    let qg = io::load_qgraph(&inputs.qgraph)?;
    if channel.ny() != qg.ny() {
        return Err(Error::AlphabetMismatch {
            channel: channel.ny(),
            qgraph: qg.ny(),
        });
    }
    Ok((channel, qg))
}

fn load_policy(path: &str, channel: &UnifilarChannel, nq: usize) -> Result<InputPolicy, Error> {
    InputPolicy::from_spec(channel, nq, &io::read_json::<PolicySpec>(path)?)
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

fn bound_upper(cli: &Cli, a: &BoundUpperArgs) -> CmdResult {
    let (channel, qg) = load_inputs(&a.inputs)?;
    let ties: Vec<RowTie> = match &a.ties {
        Some(p) if p == "builtin:dec3" => bound::dec3_symmetry_ties(),
        Some(p) => io::read_json(p)?,
        None => Vec::new(),
    };
    let opts = UpperOptions {
        restarts: a.restarts,
        grid_step: a.grid_step,
        seed: cli.seed,
        ties: ties.clone(),
        ..UpperOptions::default()
    };
    let r = bound::optimize_upper(&channel, &qg, &opts)?;
    if let Some(p) = &a.policy_out {
        io::write_json(p, &r.policy.to_spec())?;
    }
    let digest = InputDigest::new()
        .add("channel", &channel.to_spec())
        .add("qgraph", &qg.to_spec())
        .add("ties", &ties)
        .add("seed", &cli.seed)
        .hex();
    let conditionals: Vec<Option<Vec<f64>>> = (0..qg.nq()).map(|q| r.stationary.conditional(q)).collect();
    let mut report = RunReport::new("bound-upper", digest);
    report.push("I(X,S;Y|Q)", Kind::UpperBound, r.value);
    report.details = json!({
        "policy": r.policy.to_spec(),
        "stationary": r.stationary.pi,
        "conditionals": conditionals,
        "diagnostics": r.diagnostics,
    });
    let mut human = format!(
        "{} x {}: upper bound {:.8} bits/use\n",
        channel.name(),
        qg.name(),
        r.value
    );
    human += &format!(
        "free parameters {}, grid points {}, starts {}, evaluations {}\n",
        r.diagnostics.free_params, r.diagnostics.grid_points, r.diagnostics.starts, r.diagnostics.evaluations
    );
    human += &format!("closed class {:?}, period {}\n", r.diagnostics.class, r.diagnostics.period);
    for (q, c) in conditionals.iter().enumerate() {
        if let Some(c) = c {
            human += &format!("  pi(s|q={q}) = {}\n", fmt_vec(c));
        }
    }
    for w in &r.diagnostics.warnings {
        human += &format!("warning: {w}\n");
    }
    Ok((report, human))
}

fn bound_lower(cli: &Cli, a: &BoundLowerArgs) -> CmdResult {
    let (channel, qg) = load_inputs(&a.inputs)?;
    let policy = load_policy(&a.policy, &channel, qg.nq())?;
    let mut opts = InvarianceOptions::default();
    if let Some(t) = cli.tol {
        opts.gap_tol = t;
    }
    let report_inv = bcjr::is_bcjr_invariant(&channel, &qg, &policy, &opts)?;
    if let Some(w) = report_inv.witness {
        return Err(Failure {
            code: 3,
            body: json!({
                "certified": false,
                "witness": w,
                "max_gap": report_inv.max_gap,
                "conditionals": report_inv.conditionals,
            }),
        });
    }
    let lb = bcjr::lower_bound(&channel, &qg, &policy, &opts)?;
    let digest = InputDigest::new()
        .add("channel", &channel.to_spec())
        .add("qgraph", &qg.to_spec())
        .add("policy", &policy.to_spec())
        .hex();
    let mut report = RunReport::new("bound-lower", digest);
    report.push("I(X,S;Y|Q)", Kind::CertifiedLower, lb.rate);
    report.details = json!({
        "certified": true,
        "rate": lb.rate,
        "max_gap": lb.report.max_gap,
        "conditionals": lb.report.conditionals,
        "skipped": lb.report.skipped,
    });
    let mut human = format!("certified lower bound {:.8} bits/use (max gap {:.2e})\n", lb.rate, lb.report.max_gap);
    for (q, c) in lb.report.conditionals.iter().enumerate() {
        if let Some(c) = c {
            human += &format!("  pi(s|q={q}) = {}\n", fmt_vec(c));
        }
    }
    Ok((report, human))
}

fn graph_info(cli: &Cli, a: &GraphInfoArgs) -> CmdResult {
    let (channel, qg) = load_inputs(&a.inputs)?;
    let cg = CoupledGraph::build(&channel, &qg)?;
    let mut human = format!(
        "Q-graph {}: {} nodes, {} outputs, irreducible: {}\n",
        qg.name(),
        qg.nq(),
        qg.ny(),
        qg.is_irreducible()
    );
    for q in 0..qg.nq() {
        human += &format!("  q={q} -> {:?}\n", qg.row(q));
    }
    let describe = |g: &CoupledGraph, human: &mut String| -> Result<Vec<serde_json::Value>, Error> {
        let mut out = Vec::new();
        for class in g.closed_classes() {
            let (period, parts) = g.period(&class)?;
            let pairs: Vec<(usize, usize)> = class.iter().map(|&v| g.pair(v)).collect();
            *human += &format!("  closed class (s,q) {pairs:?}, period {period}\n");
            if period > 1 {
                *human += &format!("    cyclic partition {parts:?}\n");
            }
            out.push(json!({ "class": class, "pairs": pairs, "period": period, "partition": parts }));
        }
        Ok(out)
    };
    human += &format!("coupled graph: {} nodes, {} edges\n", cg.len(), cg.edges().len());
    let classes = describe(&cg, &mut human)?;
    let covers = cg.lemma1_check();
    human += &format!("every closed class covers all s and q: {covers}\n");
    let mut details = json!({
        "qgraph": qg.to_spec(),
        "irreducible": qg.is_irreducible(),
        "coupled_nodes": cg.len(),
        "coupled_edges": cg.edges().len(),
        "closed_classes": classes,
        "covers_all": covers,
    });
    let mut digest = InputDigest::new().add("channel", &channel.to_spec()).add("qgraph", &qg.to_spec());
    let mut report_q = Vec::new();
    if let Some(path) = &a.policy {
        let policy = load_policy(path, &channel, qg.nq())?;
        digest = digest.add("policy", &policy.to_spec());
        let tol = cli.tol.unwrap_or(coupled::PRUNE_TOL);
        let pruned = cg.prune(&policy, tol);
        human += &format!("pruned at {tol:e}: {} edges\n", pruned.edges().len());
        let pclasses = describe(&pruned, &mut human)?;
        let in_p = coupled::in_p_pi(&channel, &qg, &policy, tol)?;
        human += &format!("single closed class (policy in P_pi): {in_p}\n");
        details["pruned_classes"] = json!(pclasses);
        details["in_p_pi"] = json!(in_p);
        match coupled::stationary(&channel, &qg, &policy) {
            Ok(st) => {
                human += "stationary pi(s,q):\n";
                human += &format!("{:>6}", "");
                for q in 0..qg.nq() {
                    human += &format!("{:>12}", format!("q={q}"));
                }
                human += "\n";
                for s in 0..channel.ns() {
                    human += &format!("{:>6}", format!("s={s}"));
                    for q in 0..qg.nq() {
                        human += &format!("{:>12.8}", st.get(s, q));
                    }
                    human += "\n";
                }
                human += &format!("residual {:.2e}\n", st.residual);
                let value = bound::objective_at(&channel, &qg, &policy, &st);
                human += &format!("I(X,S;Y|Q) under this policy {value:.8}\n");
                report_q.push(value);
                details["stationary"] = json!(st.pi);
                details["residual"] = json!(st.residual);
                details["conditionals"] =
                    json!((0..qg.nq()).map(|q| st.conditional(q)).collect::<Vec<_>>());
            }
            Err(e) => {
                human += &format!("no stationary distribution: {e}\n");
                details["stationary_error"] = json!(e.to_string());
            }
        }
    }
    let mut report = RunReport::new("graph-info", digest.hex());
    for v in report_q {
        // the objective at a given policy is a value of the upper-bound functional
        report.push("I(X,S;Y|Q) at policy", Kind::UpperBound, v);
    }
    report.details = details;
    Ok((report, human))
}

fn dp_simulate(cli: &Cli, a: &DpSimulateArgs) -> CmdResult {
    let channel = io::load_channel(&a.channel)?;
    let vopts = ViOptions {
        resolution: a.resolution,
        action_steps: a.action_steps,
        max_iters: a.max_iters,
        span_tol: a.span_tol,
        ..ViOptions::default()
    };
    let vi = dp::value_iteration(&channel, &vopts)?;
    let ropts = RolloutOptions {
        steps: a.steps,
        burn_in: a.burn_in,
        seed: cli.seed,
        cluster_tol: a.cluster_tol,
        start: None,
    };
    let hist = dp::rollout(&vi, &ropts)?;
    if let Some(p) = &a.out {
        io::write_json(p, &hist)?;
    }
    let digest = InputDigest::new()
        .add("channel", &channel.to_spec())
        .add("vi", &vopts)
        .add("rollout", &ropts)
        .hex();
    let mut report = RunReport::new("dp-simulate", digest);
    report.push("rate", Kind::DpEstimate, vi.rate);
    report.push("rate lower", Kind::DpEstimate, vi.lower);
    report.push("rate upper", Kind::DpEstimate, vi.upper);
    report.details = json!({
        "iterations": vi.iterations,
        "converged": vi.converged,
        "grid_nodes": vi.grid().len(),
        "actions": vi.actions.len(),
        "cells": hist.cells.len(),
        "transitions": hist.transitions.len(),
    });
    let mut human = format!(
        "value iteration: rate {:.6} in [{:.8}, {:.8}] after {} iterations{}\n",
        vi.rate,
        vi.lower,
        vi.upper,
        vi.iterations,
        if vi.converged { "" } else { " (not converged)" }
    );
    human += &format!("rollout: {} cells, {} transitions\n", hist.cells.len(), hist.transitions.len());
    let mut cells: Vec<_> = hist.cells.iter().collect();
    cells.sort_by_key(|c| std::cmp::Reverse(c.count));
    for c in cells.iter().take(12) {
        human += &format!("  {} x{}\n", fmt_vec(&c.belief), c.count);
    }
    if cells.len() > 12 {
        human += &format!("  ... {} more\n", cells.len() - 12);
    }
    Ok((report, human))
}

fn extract_qgraph(cli: &Cli, a: &ExtractArgs) -> CmdResult {
    let hist: VisitHistogram = io::read_json(&a.hist)?;
    let tol = cli.tol.unwrap_or(1e-3);
    let e = dp::extract_qgraph(&hist, tol)?;
    let spec = e.qgraph.to_spec();
    if let Some(p) = &a.out {
        io::write_json(p, &spec)?;
    }
    let digest = InputDigest::new().add("hist", &hist).add("tol", &tol).hex();
    let mut report = RunReport::new("extract-qgraph", digest);
    report.details = json!({
        "qgraph": spec,
        "beliefs": e.beliefs,
        "completed": e.completed,
        "irreducible": e.qgraph.is_irreducible(),
    });
    let mut human = format!(
        "extracted Q-graph: {} nodes, irreducible: {}\n",
        e.qgraph.nq(),
        e.qgraph.is_irreducible()
    );
    for q in 0..e.qgraph.nq() {
        human += &format!("  q={q} belief {} -> {:?}\n", fmt_vec(&e.beliefs[q]), e.qgraph.row(q));
    }
    if !e.completed.is_empty() {
        human += &format!("edges completed by the belief update: {:?}\n", e.completed);
    }
    Ok((report, human))
}

fn sweep(cli: &Cli, a: &SweepArgs) -> CmdResult {
    let family: ChannelFamily = a.family.parse()?;
    let qg = io::load_qgraph(&a.qgraph)?;
    if !(a.step > 0.0) || a.to < a.from {
        return Err(Error::Io(format!("empty sweep range {}..{} step {}", a.from, a.to, a.step)).into());
    }
    let n = ((a.to - a.from) / a.step + 1e-9).floor() as usize;
    // rounded so 0.1 steps print as 0.3, not 0.30000000000000004
    let params: Vec<f64> = (0..=n).map(|k| ((a.from + k as f64 * a.step) * 1e12).round() / 1e12).collect();
    let opts = UpperOptions {
        restarts: a.restarts,
        seed: cli.seed,
        ..UpperOptions::default()
    };
    let rows = bound::sweep(family, &qg, &params, &opts);
    let csv = bound::sweep_csv(&rows);
    let mut human = String::new();
    match &a.out {
        Some(p) => {
            std::fs::write(p, &csv).map_err(|e| Error::Io(format!("{p}: {e}")))?;
            human += &format!("wrote {} rows to {p}\n", rows.len());
        }
        None => human += &csv,
    }
    let digest = InputDigest::new()
        .add("family", &family.name())
        .add("qgraph", &qg.to_spec())
        .add("params", &params)
        .add("seed", &cli.seed)
        .hex();
    let mut report = RunReport::new("sweep", digest);
    for r in &rows {
        if let Some(v) = r.upper_bound {
            report.push(format!("upper {}={}", a.param, r.param), Kind::UpperBound, v);
        }
        if let Some(v) = r.oracle {
            report.push(format!("oracle {}={}", a.param, r.param), Kind::Oracle, v);
        }
    }
    report.details = json!({ "rows": rows });
    Ok((report, human))
}

fn oracles(a: &OracleArgs) -> CmdResult {
    let family: ChannelFamily = a.channel_family.parse()?;
    let digest = InputDigest::new().add("family", &family.name()).add("param", &a.eps).hex();
    let mut report = RunReport::new("oracles", digest);
    let mut human = String::new();
    match family {
        ChannelFamily::Trapdoor => {
            let up = bound::oracle_trapdoor_upper(a.eps)?;
            let (low, alpha) = bound::oracle_trapdoor_lower();
            report.push("trapdoor upper", Kind::Oracle, up.value);
            report.push("trapdoor lower", Kind::Oracle, low);
            report.details = json!({ "upper_alpha": up.alpha, "lower_alpha": alpha });
            human += &format!("trapdoor p={}: upper {:.8} at alpha {:?}\n", a.eps, up.value, up.alpha);
            human += &format!("trapdoor lower {low:.8} at alpha {alpha:.8}\n");
        }
        _ => {
            let v = family.oracle(a.eps)?;
            report.push(family.name(), Kind::Oracle, v);
            human += &format!("{} eps={}: {v:.8}\n", family.name(), a.eps);
        }
    }
    Ok((report, human))
}
