//! Filter-then-select scheduler run once per scheduling cycle over the
//! pending queue.
//!
//! Selection policies:
//!
//! * `Random`: uniform draw among feasible nodes.
//! * `Spread`: least-loaded node (sum of bound CPU requests).
//! * `BinPack`: most-loaded node that still fits the pod.
//! * `CostAware`: pricing preference for the pod's class, then a penalty
//!   for mixing movable and pinned pods on one node, then bin-packing.
//!
//! Ties are broken by the lowest node id.

use std::cmp::Reverse;

use serde::{Deserialize, Serialize};

use crate::cluster::{AppClass, Binding, Cluster, Node, NodeId, Pod, PodId, PricingKind, Reservations};
use crate::error::Result;
use crate::kernel::{Kernel, SimRng, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerKind {
    Random,
    Spread,
    BinPack,
    CostAware,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapacityMode {
    #[default]
    Requested,
    Opportunistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchedulerPolicy {
    pub kind: SchedulerKind,
    #[serde(default)]
    pub capacity_mode: CapacityMode,
    /// Cost per bound pod of the other movability kind (CostAware only).
    #[serde(default = "default_mixing_penalty")]
    pub mixing_penalty: u64,
    /// Added to the pricing rank when a service pod would land on an
    /// on-demand node (CostAware only). At 2 or more, on-demand falls behind
    /// preemptible capacity for internal services.
    #[serde(default = "default_on_demand_penalty")]
    pub on_demand_penalty: u64,
}

fn default_mixing_penalty() -> u64 {
    1
}

fn default_on_demand_penalty() -> u64 {
    0
}

impl SchedulerPolicy {
    pub fn new(kind: SchedulerKind) -> Self {
        Self {
            kind,
            capacity_mode: CapacityMode::Requested,
            mixing_penalty: default_mixing_penalty(),
            on_demand_penalty: default_on_demand_penalty(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CycleOutcome {
    pub bindings: Vec<Binding>,
    pub unschedulable: Vec<PodId>,
}

impl CycleOutcome {
    pub fn needs_scale_out(&self) -> bool {
        !self.unschedulable.is_empty()
    }
}

/// Rank of a pricing model for a pod (lower is preferred).
///
/// Services favour reserved capacity and avoid on-demand; fault-tolerant
/// batch work favours preemptible capacity; everything else avoids
/// preemptible nodes.
pub fn pricing_rank(pod: &Pod, pricing: PricingKind) -> u64 {
    use PricingKind::*;
    let order: [PricingKind; 3] = if pod.spec.app_class.is_service() {
        [Reserved, OnDemand, Preemptible]
    } else if pod.spec.fault_tolerant {
        [Preemptible, OnDemand, Reserved]
    } else {
        [Reserved, OnDemand, Preemptible]
    };
    order.iter().position(|&k| k == pricing).unwrap_or(order.len()) as u64
}

/// Ready nodes with room for the pod under the given reservations. For
/// CostAware, customer-facing pods never see preemptible nodes.
pub fn filter(pod: &Pod, cluster: &Cluster, policy: &SchedulerPolicy, reservations: &dyn Reservations) -> Vec<NodeId> {
    cluster
        .ready_nodes()
        .filter(|node| {
            if policy.kind == SchedulerKind::CostAware
                && pod.spec.app_class == AppClass::CustomerFacingService
                && cluster.node_template(node).pricing.kind == PricingKind::Preemptible
            {
                return false;
            }
            cluster
                .free_capacity(node.id, reservations)
                .is_ok_and(|free| pod.request().fits_in(&free))
        })
        .map(|n| n.id)
        .collect()
}

fn load(node: &Node) -> u64 {
    node.requested.cpu_m
}

fn mixing_cost(pod: &Pod, node: &Node, cluster: &Cluster, penalty: u64) -> u64 {
    let movable = pod.spec.movability.is_movable();
    let mismatched = node
        .bound
        .iter()
        .filter_map(|p| cluster.pod(*p).ok())
        .filter(|other| other.spec.movability.is_movable() != movable)
        .count() as u64;
    mismatched * penalty
}

/// The CostAware score of placing `pod` on `node`; lexicographically
/// smaller is better.
pub fn cost_aware_score(pod: &Pod, node: &Node, cluster: &Cluster, policy: &SchedulerPolicy) -> (u64, u64, Reverse<u64>, NodeId) {
    let pricing = cluster.node_template(node).pricing.kind;
    let mut pricing_cost = pricing_rank(pod, pricing);
    if pod.spec.app_class.is_service() && pricing == PricingKind::OnDemand {
        pricing_cost += policy.on_demand_penalty;
    }
    (
        pricing_cost,
        mixing_cost(pod, node, cluster, policy.mixing_penalty),
        Reverse(load(node)),
        node.id,
    )
}

pub fn select(pod: &Pod, candidates: &[NodeId], cluster: &Cluster, policy: &SchedulerPolicy, rng: &mut SimRng) -> Option<NodeId> {
    if candidates.is_empty() {
        return None;
    }
    let nodes = candidates.iter().filter_map(|&id| cluster.node(id).ok());
    match policy.kind {
        SchedulerKind::Random => Some(candidates[rng.index(candidates.len())]),
        SchedulerKind::Spread => nodes.min_by_key(|n| (load(n), n.id)).map(|n| n.id),
        SchedulerKind::BinPack => nodes.min_by_key(|n| (Reverse(load(n)), n.id)).map(|n| n.id),
        SchedulerKind::CostAware => nodes
            .min_by_key(|n| cost_aware_score(pod, n, cluster, policy))
            .map(|n| n.id),
    }
}

/// Processes the pending queue in FCFS order, binding what fits. Pods that
/// fit nowhere stay Pending and are reported as unschedulable.
pub fn run_cycle(
    t: SimTime,
    cluster: &mut Cluster,
    kernel: &mut Kernel,
    policy: &SchedulerPolicy,
    rng: &mut SimRng,
    reservations: &dyn Reservations,
    start_overhead: u64,
) -> Result<CycleOutcome> {
    let mut outcome = CycleOutcome::default();
    for id in cluster.pending_queue() {
        let pod = cluster.pod(id)?;
        let candidates = filter(pod, cluster, policy, reservations);
        match select(pod, &candidates, cluster, policy, rng) {
            Some(node) => {
                let b = cluster.bind_pod(kernel, id, node, t, reservations, start_overhead)?;
                outcome.bindings.push(b);
            }
            None => outcome.unschedulable.push(id),
        }
    }
    Ok(outcome)
}
