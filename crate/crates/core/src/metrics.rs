//! Run summaries: scheduling delay, scheduling duration, throughput and
//! cost, plus the pending-pod and worker-count time series.
//!
//! Scheduling duration runs from the first submission to the last binding
//! (not the last completion). Delays are averaged over every bound pod,
//! including those bound on arrival.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::accounting::{self, BillingRecord, BillingWindow};
use crate::cluster::{NodeState, PodState, Transition};
use crate::error::Result;
use crate::kernel::{EventKind, SimTime};
use crate::sim::RunRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub t_s: SimTime,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub pod_count: usize,
    pub pods_bound: usize,
    pub avg_scheduling_delay_min: f64,
    pub total_scheduling_duration_min: f64,
    /// `None` when the scheduling duration is zero.
    pub throughput_pods_per_min: Option<f64>,
    pub first_submit_s: SimTime,
    pub last_binding_s: SimTime,
    pub billing_window: BillingWindow,
    pub billing_window_end_s: SimTime,
    pub cost_micro_usd: i64,
    pub cost: String,
    pub billing: Vec<BillingRecord>,
    pub nodes_launched: usize,
    pub launches_s: Vec<SimTime>,
    pub evictions: usize,
    pub failed: usize,
    pub qos_violations: usize,
    pub peak_pending: u64,
    pub pending_series: Vec<SeriesPoint>,
    pub worker_series: Vec<SeriesPoint>,
    pub event_counts: BTreeMap<EventKind, u64>,
    pub end_time_s: SimTime,
    pub warnings: Vec<String>,
}

impl RunReport {
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Pending pods and live workers after every transition at or before `t`.
pub fn sample(t: SimTime, record: &RunRecord) -> (u64, u64) {
    counts_at(record.transitions(), &[t])[0]
}

/// `(pending, workers)` at the end of each instant in `times` (ascending).
fn counts_at(transitions: &[Transition], times: &[SimTime]) -> Vec<(u64, u64)> {
    let mut out = Vec::with_capacity(times.len());
    let (mut pending, mut workers) = (0i64, 0i64);
    let mut i = 0;
    for &t in times {
        while i < transitions.len() && transitions[i].time() <= t {
            match &transitions[i] {
                Transition::Pod { from, to, .. } => {
                    if *to == PodState::Pending {
                        pending += 1;
                    }
                    if *from == Some(PodState::Pending) {
                        pending -= 1;
                    }
                }
                Transition::Node { from, to, .. } => {
                    if from.is_none() {
                        workers += 1;
                    }
                    if *to == NodeState::Terminated {
                        workers -= 1;
                    }
                }
            }
            i += 1;
        }
        out.push((pending.max(0) as u64, workers.max(0) as u64));
    }
    out
}

pub fn pending_series(record: &RunRecord) -> Vec<SeriesPoint> {
    series(record, |(p, _)| p)
}

pub fn worker_series(record: &RunRecord) -> Vec<SeriesPoint> {
    series(record, |(_, w)| w)
}

fn series(record: &RunRecord, pick: impl Fn((u64, u64)) -> u64) -> Vec<SeriesPoint> {
    counts_at(record.transitions(), &record.ticks)
        .into_iter()
        .zip(&record.ticks)
        .map(|(c, &t_s)| SeriesPoint { t_s, count: pick(c) })
        .collect()
}

/// `t_s,count` CSV for one series.
pub fn series_csv(points: &[SeriesPoint]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for p in points {
        w.serialize(p).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

fn minutes(s: u64) -> f64 {
    s as f64 / 60.0
}

pub fn summary(record: &RunRecord) -> Result<RunReport> {
    let mut warnings = Vec::new();
    let pods: Vec<_> = record.pods().collect();
    let first_submit = pods.iter().map(|p| p.spec.submit_time).min().unwrap_or(0);
    let delays: Vec<u64> = pods
        .iter()
        .filter_map(|p| p.first_bind_time.map(|b| b - p.spec.submit_time))
        .collect();
    let last_binding = record
        .transitions()
        .iter()
        .filter_map(|tr| match tr {
            Transition::Pod { t, to: PodState::Bound, .. } => Some(*t),
            _ => None,
        })
        .max();

    let avg_delay = if delays.is_empty() {
        0.0
    } else {
        minutes(delays.iter().sum::<u64>()) / delays.len() as f64
    };
    let (last_binding_s, duration_s) = match last_binding {
        Some(t) => (t, t - first_submit),
        None => {
            warnings.push("no pod was ever bound; duration reported as the horizon".to_string());
            (record.horizon, record.horizon.saturating_sub(first_submit))
        }
    };
    let duration_min = minutes(duration_s);
    let throughput = if duration_s == 0 {
        if !delays.is_empty() {
            warnings.push("scheduling duration is zero; throughput is undefined".to_string());
        }
        None
    } else {
        Some(delays.len() as f64 / duration_min)
    };

    let window_end = match record.billing_window {
        BillingWindow::UntilLastBinding => last_binding_s,
        BillingWindow::Lifetime => record.end_time,
    };
    let cost = accounting::total_cost(&record.cluster, window_end)?;

    let pending = pending_series(record);
    let workers = worker_series(record);
    Ok(RunReport {
        scenario: record.scenario.clone(),
        seed: record.seed,
        pod_count: pods.len(),
        pods_bound: delays.len(),
        avg_scheduling_delay_min: avg_delay,
        total_scheduling_duration_min: duration_min,
        throughput_pods_per_min: throughput,
        first_submit_s: first_submit,
        last_binding_s,
        billing_window: record.billing_window,
        billing_window_end_s: window_end,
        cost_micro_usd: cost.total.micro_usd(),
        cost: cost.total.to_string(),
        billing: cost.records,
        nodes_launched: record.launches.len(),
        launches_s: record.launches.clone(),
        evictions: record.evictions.len(),
        failed: pods.iter().filter(|p| p.state == PodState::Failed).count(),
        qos_violations: record.qos_violations.len(),
        peak_pending: pending.iter().map(|p| p.count).max().unwrap_or(0),
        pending_series: pending,
        worker_series: workers,
        event_counts: record.stats.per_kind.clone(),
        end_time_s: record.end_time,
        warnings,
    })
}
