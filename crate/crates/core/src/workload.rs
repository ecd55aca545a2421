//! Pod arrival streams: synthetic homogeneous batches, CSV / JSON-lines
//! traces, and Poisson revocation streams for preemptible nodes.
//!
//! Trace schema (CSV header, or JSON-lines object keys):
//!
//! ```text
//! id,submit_s,cpu_m,mem_mib,duration_s,app_class,movability,fault_tolerant,deadline_s
//! ```
//!
//! `deadline_s` may be empty (CSV) or absent/null (JSON-lines).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cluster::{AppClass, Movability, NodeId, PodId, PodSpec, ResourceVector};
use crate::error::{Error, Result};
use crate::kernel::{SimRng, SimTime};

pub const TRACE_HEADER: [&str; 9] = [
    "id",
    "submit_s",
    "cpu_m",
    "mem_mib",
    "duration_s",
    "app_class",
    "movability",
    "fault_tolerant",
    "deadline_s",
];

/// `n` identical fault-tolerant, stateless batch pods submitted every
/// `interarrival` seconds from t=0, with ids `first_id..first_id+n`.
pub fn homogeneous_batch(
    n: usize,
    interarrival: u64,
    request: ResourceVector,
    duration: u64,
    first_id: u64,
) -> Result<Vec<PodSpec>> {
    if n == 0 {
        return Err(Error::validation("count", "must be at least 1"));
    }
    Ok((0..n as u64)
        .map(|i| PodSpec {
            id: PodId(first_id + i),
            submit_time: i * interarrival,
            request,
            duration_s: duration,
            app_class: AppClass::BatchAnalytics,
            movability: Movability::MovableStateless,
            fault_tolerant: true,
            deadline: None,
            usage: vec![],
        })
        .collect())
}

fn trace_err(line: u64, field: &str, message: impl Into<String>) -> Error {
    Error::Trace {
        line,
        field: field.to_string(),
        message: message.into(),
    }
}

fn parse_u64(line: u64, field: &str, raw: &str) -> Result<u64> {
    let v: i64 = raw
        .trim()
        .parse()
        .map_err(|_| trace_err(line, field, format!("expected an integer, got `{raw}`")))?;
    if v < 0 {
        return Err(trace_err(line, field, format!("must be non-negative, got {v}")));
    }
    Ok(v as u64)
}

fn parse_enum<T: for<'de> Deserialize<'de>>(line: u64, field: &str, raw: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(raw.trim().to_string()))
        .map_err(|_| trace_err(line, field, format!("unknown value `{raw}`")))
}

fn parse_bool(line: u64, field: &str, raw: &str) -> Result<bool> {
    match raw.trim() {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        other => Err(trace_err(line, field, format!("expected true/false, got `{other}`"))),
    }
}

fn record_from_fields(line: u64, get: impl Fn(&str) -> Option<String>) -> Result<PodSpec> {
    let field = |name: &str| get(name).ok_or_else(|| trace_err(line, name, "missing"));
    let deadline = match get("deadline_s") {
        Some(s) if !s.trim().is_empty() => Some(parse_u64(line, "deadline_s", &s)?),
        _ => None,
    };
    let spec = PodSpec {
        id: PodId(parse_u64(line, "id", &field("id")?)?),
        submit_time: parse_u64(line, "submit_s", &field("submit_s")?)?,
        request: ResourceVector::new(
            parse_u64(line, "cpu_m", &field("cpu_m")?)?,
            parse_u64(line, "mem_mib", &field("mem_mib")?)?,
        ),
        duration_s: parse_u64(line, "duration_s", &field("duration_s")?)?,
        app_class: parse_enum(line, "app_class", &field("app_class")?)?,
        movability: parse_enum(line, "movability", &field("movability")?)?,
        fault_tolerant: parse_bool(line, "fault_tolerant", &field("fault_tolerant")?)?,
        deadline,
        usage: vec![],
    };
    if spec.deadline.is_some_and(|d| d < spec.submit_time) {
        return Err(trace_err(line, "deadline_s", "precedes submit_s"));
    }
    Ok(spec)
}

pub fn parse_trace_csv(text: &str) -> Result<Vec<PodSpec>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| trace_err(1, "header", e.to_string()))?
        .clone();
    for name in TRACE_HEADER {
        if !headers.iter().any(|h| h == name) {
            return Err(trace_err(1, name, "missing column"));
        }
    }
    let mut pods = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            trace_err(line, "row", e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let get = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .and_then(|i| row.get(i))
                .map(str::to_string)
        };
        pods.push(record_from_fields(line, get)?);
    }
    Ok(pods)
}

pub fn parse_trace_jsonl(text: &str) -> Result<Vec<PodSpec>> {
    let mut pods = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i as u64 + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let obj: serde_json::Map<String, serde_json::Value> =
            serde_json::from_str(raw).map_err(|e| trace_err(line, "record", e.to_string()))?;
        let get = |name: &str| match obj.get(name) {
            None | Some(serde_json::Value::Null) => None,
            Some(serde_json::Value::String(s)) => Some(s.clone()),
            Some(v) => Some(v.to_string()),
        };
        pods.push(record_from_fields(line, get)?);
    }
    Ok(pods)
}

/// Loads a trace, picking the format from the extension (`.jsonl`/`.ndjson`
/// for JSON-lines, anything else CSV).
pub fn load_trace(path: &Path) -> Result<Vec<PodSpec>> {
    let text = std::fs::read_to_string(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl" | "ndjson") => parse_trace_jsonl(&text),
        _ => parse_trace_csv(&text),
    }
}

fn enum_str<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        _ => unreachable!("unit enum variants serialize to strings"),
    }
}

fn row_fields(p: &PodSpec) -> [String; 9] {
    [
        p.id.0.to_string(),
        p.submit_time.to_string(),
        p.request.cpu_m.to_string(),
        p.request.mem_mib.to_string(),
        p.duration_s.to_string(),
        enum_str(&p.app_class),
        enum_str(&p.movability),
        p.fault_tolerant.to_string(),
        p.deadline.map(|d| d.to_string()).unwrap_or_default(),
    ]
}

/// Canonical CSV form of a pod list.
pub fn write_trace_csv(pods: &[PodSpec]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRACE_HEADER).expect("in-memory write");
    for p in pods {
        w.write_record(row_fields(p)).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

#[derive(Serialize)]
struct JsonRecord {
    id: u64,
    submit_s: u64,
    cpu_m: u64,
    mem_mib: u64,
    duration_s: u64,
    app_class: AppClass,
    movability: Movability,
    fault_tolerant: bool,
    deadline_s: Option<u64>,
}

pub fn write_trace_jsonl(pods: &[PodSpec]) -> String {
    let mut out = String::new();
    for p in pods {
        let rec = JsonRecord {
            id: p.id.0,
            submit_s: p.submit_time,
            cpu_m: p.request.cpu_m,
            mem_mib: p.request.mem_mib,
            duration_s: p.duration_s,
            app_class: p.app_class,
            movability: p.movability,
            fault_tolerant: p.fault_tolerant,
            deadline_s: p.deadline,
        };
        out.push_str(&serde_json::to_string(&rec).expect("plain record"));
        out.push('\n');
    }
    out
}

/// Revocation times for a set of preemptible nodes.
///
/// Each node's revocations form a Poisson process with `rate_per_hour`,
/// starting at the node's given start time and truncated at `horizon`.
/// Every node draws from its own ChaCha stream (keyed by node id) so adding
/// nodes never perturbs the others. Output is sorted by (time, node).
pub fn preemption_events(seed: u64, rate_per_hour: f64, horizon: SimTime, nodes: &[(NodeId, SimTime)]) -> Vec<(SimTime, NodeId)> {
    if !(rate_per_hour > 0.0) {
        return Vec::new();
    }
    let rate_per_s = rate_per_hour / 3600.0;
    let mut out = Vec::new();
    for &(node, start) in nodes {
        let mut rng = SimRng::stream(seed, node.0 + 1);
        let mut t = start as f64;
        loop {
            t += rng.exponential(rate_per_s);
            let at = t.ceil();
            if at > horizon as f64 {
                break;
            }
            out.push((at as SimTime, node));
        }
    }
    out.sort();
    out
}
