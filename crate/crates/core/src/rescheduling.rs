//! Stop-and-resume migration: checkpoint (when the pod supports it), kill on
//! the original node, requeue for placement elsewhere. No live migration.

use serde::{Deserialize, Serialize};

use crate::cluster::{Cluster, Movability, NodeId, NodeState, Pod, PodId, PodState, ReleaseReason};
use crate::elasticity::QosChecker;
use crate::error::{Error, Result};
use crate::kernel::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResumeMode {
    RestartFromZero,
    ResumeRemaining,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PodDisposition {
    pub pod: PodId,
    pub checkpoint: bool,
    pub downtime_s: u64,
    pub resume_mode: ResumeMode,
}

impl PodDisposition {
    pub fn requeue_at(&self, evicted_at: SimTime) -> SimTime {
        evicted_at + self.downtime_s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvictionPlan {
    pub node: NodeId,
    pub dispositions: Vec<PodDisposition>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DrainOutcome {
    Plan(EvictionPlan),
    Refused { pinned: Vec<PodId> },
}

/// Checkpoint cost model: downtime = memory footprint / checkpoint rate,
/// rounded up to whole seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MigrationModel {
    pub checkpoint_rate_mib_s: u64,
    /// Worst-case delay between requeue and the resumed run: waiting for
    /// the next scheduling cycle plus start and runtime overheads.
    #[serde(default)]
    pub restart_overhead_s: u64,
}

impl Default for MigrationModel {
    fn default() -> Self {
        Self {
            checkpoint_rate_mib_s: 256,
            restart_overhead_s: 0,
        }
    }
}

pub fn movability(pod: &Pod) -> Movability {
    pod.spec.movability
}

impl MigrationModel {
    pub fn disposition(&self, pod: &Pod) -> Result<PodDisposition> {
        match movability(pod) {
            Movability::Pinned => Err(Error::PinnedEviction(pod.id())),
            Movability::MovableStateless => Ok(PodDisposition {
                pod: pod.id(),
                checkpoint: false,
                downtime_s: 0,
                resume_mode: ResumeMode::RestartFromZero,
            }),
            Movability::MovableCheckpointable => Ok(PodDisposition {
                pod: pod.id(),
                checkpoint: true,
                downtime_s: pod.request().mem_mib.div_ceil(self.checkpoint_rate_mib_s.max(1)),
                resume_mode: ResumeMode::ResumeRemaining,
            }),
        }
    }

    /// Run time the pod would still owe if evicted at `t`.
    pub fn remaining_after_eviction(&self, pod: &Pod, t: SimTime, mode: ResumeMode) -> u64 {
        match mode {
            ResumeMode::RestartFromZero => pod.spec.duration_s,
            ResumeMode::ResumeRemaining => pod.remaining_s - pod.executed_in_placement(t),
        }
    }
}

impl QosChecker for MigrationModel {
    /// slack = deadline − (t + downtime + restart overhead + remaining) must
    /// be non-negative.
    fn certify(&self, pod: &Pod, t: SimTime) -> bool {
        let Some(deadline) = pod.spec.deadline else {
            return true;
        };
        let Ok(d) = self.disposition(pod) else {
            return false;
        };
        let finish = t + d.downtime_s + self.restart_overhead_s + self.remaining_after_eviction(pod, t, d.resume_mode);
        finish <= deadline
    }
}

/// Evicts every pod from a Ready node and marks it Draining.
///
/// Refuses (leaving the node untouched) if any bound pod is pinned. The
/// caller terminates the node at its billing boundary and requeues each pod
/// at `disposition.requeue_at(t)`.
pub fn drain(cluster: &mut Cluster, node: NodeId, t: SimTime, model: &MigrationModel) -> Result<DrainOutcome> {
    let n = cluster.node(node)?;
    match n.state {
        NodeState::Terminated => return Err(Error::NodeTerminated(node)),
        NodeState::Ready => {}
        _ => return Err(Error::NodeNotReady(node)),
    }
    let bound: Vec<PodId> = n.bound.iter().copied().collect();
    let pinned: Vec<PodId> = bound
        .iter()
        .copied()
        .filter(|p| cluster.pod(*p).is_ok_and(|p| movability(p) == Movability::Pinned))
        .collect();
    if !pinned.is_empty() {
        return Ok(DrainOutcome::Refused { pinned });
    }
    let mut dispositions = Vec::with_capacity(bound.len());
    for id in &bound {
        let pod = cluster.pod(*id)?;
        let d = model.disposition(pod)?;
        let remaining = model.remaining_after_eviction(pod, t, d.resume_mode);
        cluster.release_pod(*id, t, ReleaseReason::Evicted)?;
        cluster.pod_mut(*id)?.remaining_s = remaining;
        dispositions.push(d);
    }
    cluster.begin_drain(node, t)?;
    Ok(DrainOutcome::Plan(EvictionPlan { node, dispositions }))
}

/// Kills every pod on a revoked preemptible node and terminates it.
/// Fault-tolerant pods become Evicted (restart from zero), the rest Failed.
pub fn revoke_node(cluster: &mut Cluster, node: NodeId, t: SimTime) -> Result<Vec<(PodId, PodState)>> {
    let bound: Vec<PodId> = cluster.node(node)?.bound.iter().copied().collect();
    let mut out = Vec::with_capacity(bound.len());
    for id in bound {
        let state = cluster.release_pod(id, t, ReleaseReason::Revoked)?;
        if state == PodState::Evicted {
            let p = cluster.pod_mut(id)?;
            p.remaining_s = p.spec.duration_s;
        }
        out.push((id, state));
    }
    cluster.terminate_node(node, t)?;
    Ok(out)
}

/// Returns an evicted pod to the pending queue at `t`. Its original submit
/// time is kept, so it re-enters the FCFS order where it was. The result is
/// true if the pod's deadline has already passed.
pub fn resume_evicted(cluster: &mut Cluster, pod: PodId, t: SimTime) -> Result<bool> {
    cluster.requeue(pod, t)?;
    Ok(cluster.pod(pod)?.spec.deadline.is_some_and(|d| d < t))
}
