use std::path::PathBuf;

use orchestra_core::cluster::{AppClass, Movability, PodId, PodSpec, ResourceVector};
use orchestra_core::scenario::{Scenario, TraceSpec, WorkloadSource};
use orchestra_core::sim::run_scenario;
use orchestra_core::workload::{write_trace_csv, write_trace_jsonl};
use orchestra_core::Error;

fn shipped(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(format!("../../scenarios/{name}.json"))
}

fn without_dir(mut s: Scenario) -> Scenario {
    s.base_dir = None;
    s
}

#[test]
fn shipped_files_match_the_reference_constructors() {
    for (name, want) in [
        ("void10", Scenario::reference_void(10)),
        ("void16", Scenario::reference_void(16)),
        ("void22", Scenario::reference_void(22)),
        ("simple", Scenario::reference_simple()),
    ] {
        let got = without_dir(Scenario::load(&shipped(name)).unwrap());
        assert_eq!(got, want, "{name}");
    }
}

fn validation_path(text: &str) -> String {
    match Scenario::from_json_str(text, None) {
        Err(Error::Validation { path, .. }) => path,
        other => panic!("expected a validation error, got {other:?}"),
    }
}

fn reference_doc() -> serde_json::Value {
    serde_json::from_str(&Scenario::reference_void(10).to_json_pretty()).unwrap()
}

#[test]
fn errors_name_the_offending_field() {
    let mut v = reference_doc();
    v["templates"][0]["cpu_m"] = (-5).into();
    assert_eq!(validation_path(&v.to_string()), "templates[0].cpu_m");

    let mut v = reference_doc();
    v["initial_nodes"][0]["template"] = "nope".into();
    assert_eq!(validation_path(&v.to_string()), "initial_nodes[0].template");

    let mut v = reference_doc();
    v["scheduler"]["cycle_s"] = 0.into();
    assert_eq!(validation_path(&v.to_string()), "scheduler.cycle_s");

    let mut v = reference_doc();
    v["workload"][0]["duration_s"] = "long".into();
    assert_eq!(validation_path(&v.to_string()), "workload[0].duration_s");

    let mut v = reference_doc();
    v["surprise"] = true.into();
    assert_eq!(validation_path(&v.to_string()), "surprise");
}

fn trace_pods() -> Vec<PodSpec> {
    (0..6)
        .map(|i| PodSpec {
            id: PodId(100 + i),
            submit_time: i * 30,
            request: ResourceVector::new(250 + 50 * (i % 2), 128),
            duration_s: 200 + 10 * i,
            app_class: if i % 3 == 0 { AppClass::CronJob } else { AppClass::BatchAnalytics },
            movability: Movability::MovableStateless,
            fault_tolerant: i % 2 == 0,
            deadline: (i == 4).then_some(5000),
            usage: vec![],
        })
        .collect()
}

#[test]
fn trace_workloads_resolve_relative_to_the_scenario() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("pods.csv"), write_trace_csv(&trace_pods())).unwrap();
    std::fs::write(dir.path().join("pods.jsonl"), write_trace_jsonl(&trace_pods())).unwrap();

    let mut reports = Vec::new();
    for file in ["pods.csv", "pods.jsonl"] {
        let mut s = Scenario::reference_void(2);
        s.workload = vec![WorkloadSource::Trace(TraceSpec { path: file.into() })];
        let path = dir.path().join(format!("{file}.scenario.json"));
        std::fs::write(&path, s.to_json_pretty()).unwrap();
        let loaded = Scenario::load(&path).unwrap();
        assert_eq!(loaded.pods().unwrap(), trace_pods());
        reports.push(run_scenario(&loaded).unwrap().report);
    }
    assert_eq!(reports[0], reports[1]);
    assert_eq!(reports[0].pods_bound, 6);
}

#[test]
fn bad_trace_reports_line_and_field() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = write_trace_csv(&trace_pods());
    text = text.replacen(",128,", ",lots,", 1);
    std::fs::write(dir.path().join("bad.csv"), text).unwrap();
    let mut s = Scenario::reference_void(2);
    s.workload = vec![WorkloadSource::Trace(TraceSpec { path: "bad.csv".into() })];
    s.base_dir = Some(dir.path().to_path_buf());
    match s.pods() {
        Err(Error::Trace { line, field, .. }) => assert_eq!((line, field.as_str()), (2, "mem_mib")),
        other => panic!("expected a trace error, got {other:?}"),
    }
}
