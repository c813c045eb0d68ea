use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn qbound(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qbound")).args(args).output().expect("binary runs")
}

fn json_stdout(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn result(report: &Value, kind: &str) -> f64 {
    report["results"]
        .as_array()
        .unwrap()
        .iter()
        .find(|q| q["kind"] == kind)
        .unwrap_or_else(|| panic!("no {kind} in {report}"))["value"]
        .as_f64()
        .unwrap()
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

#[test]
fn oracles_dec() {
    let r = json_stdout(&qbound(&["--json", "oracles", "--channel-family", "dec", "--eps", "0.5"]));
    assert!((result(&r, "oracle") - 0.678_509).abs() < 1e-5, "{r}");
}

#[test]
fn bound_upper_reports_kind() {
    let r = json_stdout(&qbound(&[
        "--json",
        "bound-upper",
        "--channel",
        "builtin:bec:0.5",
        "--qgraph",
        "builtin:bec2",
    ]));
    assert_eq!(r["command"], "bound-upper");
    assert!((result(&r, "upper-bound") - 0.405_685).abs() < 1e-5);
    assert_eq!(r["inputs_digest"].as_str().unwrap().len(), 64);
}

#[test]
fn bound_lower_refusal_has_witness() {
    let dir = tempfile::tempdir().unwrap();
    let policy = path(dir.path(), "policy.json");
    let up = qbound(&[
        "bound-upper",
        "--channel",
        "builtin:bec:0.5",
        "--qgraph",
        "builtin:bec2",
        "--policy-out",
        &policy,
    ]);
    assert!(up.status.success());
    let out = qbound(&[
        "bound-lower",
        "--channel",
        "builtin:bec:0.5",
        "--qgraph",
        "builtin:bec2",
        "--policy",
        &policy,
    ]);
    assert_eq!(out.status.code(), Some(3));
    let err: Value = serde_json::from_slice(&out.stderr).expect("stderr is JSON");
    assert_eq!(err["certified"], false);
    assert!(err["witness"]["gap"].as_f64().unwrap() > 1e-8);
}

#[test]
fn builtin_and_file_agree() {
    let dir = tempfile::tempdir().unwrap();
    let channel = path(dir.path(), "dec.json");
    let qgraph = path(dir.path(), "dec3.json");
    let spec = qbound::UnifilarChannel::dec(0.3).unwrap().to_spec();
    qbound::io::write_json(&channel, &spec).unwrap();
    qbound::io::write_json(&qgraph, &qbound::QGraph::dec3().to_spec()).unwrap();
    let args = |c: &str, q: &str| {
        json_stdout(&qbound(&[
            "--json",
            "bound-upper",
            "--channel",
            c,
            "--qgraph",
            q,
            "--ties",
            "builtin:dec3",
            "--restarts",
            "2",
        ]))
    };
    let a = args("builtin:dec:0.3", "builtin:dec3");
    let b = args(&channel, &qgraph);
    assert_eq!(a["inputs_digest"], b["inputs_digest"]);
    assert_eq!(result(&a, "upper-bound"), result(&b, "upper-bound"));
}

#[test]
fn dp_simulate_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed: &str, name: &str| {
        let out = path(dir.path(), name);
        let o = qbound(&[
            "--seed",
            seed,
            "dp-simulate",
            "--channel",
            "builtin:dec:0.5",
            "--resolution",
            "30",
            "--steps",
            "5000",
            "--out",
            &out,
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read_to_string(out).unwrap()
    };
    let a = run("7", "a.json");
    let b = run("7", "b.json");
    assert_eq!(a, b);
    let hist: Value = serde_json::from_str(&a).unwrap();
    let visits: u64 = hist["cells"].as_array().unwrap().iter().map(|c| c["count"].as_u64().unwrap()).sum();
    assert_eq!(visits, 5000);
}

#[test]
fn bad_inputs_fail_cleanly() {
    let missing = qbound(&["bound-upper", "--channel", "/nonexistent.json", "--qgraph", "builtin:bec2"]);
    assert_eq!(missing.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&missing.stderr).unwrap();
    assert!(err["error"].is_string());
    // dicode has four outputs, the BEC graph expects three
    let mismatch = qbound(&["bound-upper", "--channel", "builtin:dec:0.5", "--qgraph", "builtin:bec2"]);
    assert_eq!(mismatch.status.code(), Some(2));
    let unknown = qbound(&["oracles", "--channel-family", "nope", "--eps", "0.5"]);
    assert!(!unknown.status.success());
}
