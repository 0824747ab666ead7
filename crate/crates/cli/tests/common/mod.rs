#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

pub fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

pub fn run<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(env!("CARGO_BIN_EXE_photonstat")).args(args).output().expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[track_caller]
pub fn ok(o: Output) -> Output {
    assert!(o.status.success(), "exit {:?}\nstdout:\n{}\nstderr:\n{}", o.status.code(), stdout(&o), stderr(&o));
    o
}

#[track_caller]
pub fn exit_code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

pub fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).expect("readable")).expect("valid JSON")
}

fn named<'a>(report: &'a Value, list: &str, name: &str) -> &'a Value {
    report[list]
        .as_array()
        .expect("list")
        .iter()
        .find(|p| p["name"] == name)
        .unwrap_or_else(|| panic!("{list} has no {name}"))
}

pub fn parameter(report: &Value, name: &str) -> f64 {
    named(report, "parameters", name)["value"].as_f64().expect("number")
}

pub fn derived(report: &Value, name: &str) -> f64 {
    named(report, "derived", name)["value"].as_f64().expect("number")
}

/// Writes a pipeline config into `dir` with outputs next to it.
pub fn write_config(dir: &Path, emitter: &str, duration_s: f64, seed: u64, with_analysis: bool) -> PathBuf {
    let analysis = if with_analysis {
        r#""correlation": { "bin_width": 0.1, "tau_max": 50.0, "snr": 6.0 },
  "fit_g2": { "power": 0.39, "psat": 1.17 },"#
    } else {
        ""
    };
    let outputs = if with_analysis {
        r#"{ "channel_a": "a.pstm", "channel_b": "b.pstm", "histogram": "g2.csv", "report": "fit.json", "manifest": "run.manifest.json" }"#
    } else {
        r#"{ "channel_a": "a.pstm", "channel_b": "b.pstm", "manifest": "run.manifest.json" }"#
    };
    let text = format!(
        r#"{{
  "schema_version": 1,
  "emitter": {emitter},
  "detector": {{ "eta": 0.5, "jitter_w": 0.354, "snr": 6.0 }},
  "duration_s": {duration_s},
  "seed": {seed},
  {analysis}
  "outputs": {outputs}
}}
"#
    );
    let path = dir.join("config.json");
    std::fs::write(&path, text).expect("writable");
    path
}

pub const REFERENCE_EMITTER: &str =
    r#"{ "coefficients": { "tau1": 0.83, "tau2": 42.2, "a": 0.16 }, "pump_rate": 0.3 }"#;
