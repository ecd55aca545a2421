//! Cluster elasticity: scale-out policies, the end-of-billing-period
//! scale-in review and the threshold-based horizontal service autoscaler.

use serde::{Deserialize, Serialize};

use crate::cluster::{Cluster, NodeId, NodeState, Pod, PodId, ResourceVector, TemplateId};
use crate::error::{Error, Result};
use crate::kernel::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AutoscalerPolicy {
    /// Ignores every request: a static cluster.
    Void,
    /// Launches one node of `template` per request, at most once every
    /// `provisioning_interval` seconds.
    Simple {
        template: TemplateId,
        provisioning_interval: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleDecision {
    None,
    Launch { template: TemplateId, count: u32 },
}

#[derive(Debug, Clone)]
pub struct Autoscaler {
    policy: AutoscalerPolicy,
    last_launch: Option<SimTime>,
    launches: Vec<SimTime>,
}

impl Autoscaler {
    pub fn new(policy: AutoscalerPolicy) -> Self {
        Self {
            policy,
            last_launch: None,
            launches: Vec::new(),
        }
    }

    pub fn policy(&self) -> AutoscalerPolicy {
        self.policy
    }

    pub fn last_launch(&self) -> Option<SimTime> {
        self.last_launch
    }

    pub fn launches(&self) -> &[SimTime] {
        &self.launches
    }

    /// Earliest time the next launch may happen, if one is currently held
    /// back by the provisioning interval.
    pub fn next_permitted(&self, t: SimTime) -> Option<SimTime> {
        match (self.policy, self.last_launch) {
            (AutoscalerPolicy::Simple { provisioning_interval, .. }, Some(last)) => {
                let at = last + provisioning_interval;
                (at > t).then_some(at)
            }
            _ => None,
        }
    }

    /// Handles one scale-out request, made at most once per scheduling
    /// cycle on behalf of all of that cycle's unschedulable pods.
    pub fn scale_out_request(&mut self, t: SimTime, unschedulable: &[PodId]) -> ScaleDecision {
        if unschedulable.is_empty() {
            return ScaleDecision::None;
        }
        match self.policy {
            AutoscalerPolicy::Void => ScaleDecision::None,
            AutoscalerPolicy::Simple {
                template,
                provisioning_interval,
            } => {
                let allowed = self
                    .last_launch
                    .is_none_or(|last| t - last >= provisioning_interval);
                if !allowed {
                    return ScaleDecision::None;
                }
                self.last_launch = Some(t);
                self.launches.push(t);
                ScaleDecision::Launch { template, count: 1 }
            }
        }
    }
}

/// Certifies that evicting a pod now and requeueing it keeps its QoS.
pub trait QosChecker {
    fn certify(&self, pod: &Pod, t: SimTime) -> bool;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeepReason {
    PinnedPod,
    QosAtRisk,
    ClusterUtilized,
    NoRoomElsewhere,
    NotReady,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Review {
    Keep(KeepReason),
    Drain,
}

/// Aggregate requested CPU over aggregate capacity of Ready nodes.
pub fn cluster_utilization(cluster: &Cluster) -> f64 {
    let (used, cap) = cluster
        .ready_nodes()
        .fold((0u64, 0u64), |(u, c), n| {
            (u + n.requested.cpu_m, c + cluster.node_template(n).capacity.cpu_m)
        });
    if cap == 0 {
        0.0
    } else {
        used as f64 / cap as f64
    }
}

/// Whether `pods` can all be packed (first-fit, largest first) into the
/// free requested-mode capacity of the Ready nodes other than `exclude`.
fn fits_elsewhere(cluster: &Cluster, exclude: NodeId, pods: &[&Pod]) -> bool {
    let mut free: Vec<ResourceVector> = cluster
        .ready_nodes()
        .filter(|n| n.id != exclude)
        .map(|n| cluster.node_template(n).capacity.saturating_sub(&n.requested))
        .collect();
    let mut requests: Vec<ResourceVector> = pods.iter().map(|p| p.request()).collect();
    requests.sort_by(|a, b| b.cmp(a));
    requests.iter().all(|r| {
        free.iter_mut()
            .find(|f| r.fits_in(f))
            .map(|f| *f = f.saturating_sub(r))
            .is_some()
    })
}

/// Decides, at one of the node's billing boundaries, whether to drain it.
///
/// Drains only when every bound pod is movable, the checker certifies each
/// pod's QoS survives eviction and requeue, cluster utilization is below
/// `threshold`, and the pods fit on the remaining Ready nodes.
pub fn billing_boundary_review(
    t: SimTime,
    node: NodeId,
    cluster: &Cluster,
    qos: &dyn QosChecker,
    threshold: f64,
) -> Result<Review> {
    let n = cluster.node(node)?;
    let period = cluster.node_template(n).billing_period_s;
    if !n.is_billing_boundary(t, period) {
        return Err(Error::OffBoundary { node, t });
    }
    if n.state != NodeState::Ready {
        return Ok(Review::Keep(KeepReason::NotReady));
    }
    let pods: Vec<&Pod> = n.bound.iter().map(|p| cluster.pod(*p)).collect::<Result<_>>()?;
    if pods.iter().any(|p| !p.spec.movability.is_movable()) {
        return Ok(Review::Keep(KeepReason::PinnedPod));
    }
    if pods.iter().any(|p| !qos.certify(p, t)) {
        return Ok(Review::Keep(KeepReason::QosAtRisk));
    }
    if cluster_utilization(cluster) >= threshold {
        return Ok(Review::Keep(KeepReason::ClusterUtilized));
    }
    if !fits_elsewhere(cluster, node, &pods) {
        return Ok(Review::Keep(KeepReason::NoRoomElsewhere));
    }
    Ok(Review::Drain)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HpaConfig {
    /// Scale up when mean utilization is strictly above this.
    pub upper: f64,
    /// Scale down when mean utilization is strictly below this.
    #[serde(default)]
    pub lower: Option<f64>,
    #[serde(default = "one")]
    pub min_replicas: usize,
    #[serde(default = "unbounded")]
    pub max_replicas: usize,
}

fn one() -> usize {
    1
}

fn unbounded() -> usize {
    usize::MAX
}

/// Replica delta for a service group given its mean utilization.
pub fn hpa_evaluate(utilization: f64, replicas: usize, config: &HpaConfig) -> i32 {
    if utilization > config.upper && replicas < config.max_replicas {
        return 1;
    }
    if let Some(lower) = config.lower {
        if utilization < lower && replicas > config.min_replicas {
            return -1;
        }
    }
    0
}

/// Step-function load signal in replica-equivalents: `[(t, load), ...]`.
/// Mean utilization is `load / replicas`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LoadSignal(pub Vec<(SimTime, f64)>);

impl LoadSignal {
    pub fn at(&self, t: SimTime) -> f64 {
        self.0
            .iter()
            .take_while(|(at, _)| *at <= t)
            .last()
            .map_or(0.0, |&(_, v)| v)
    }

    pub fn utilization(&self, t: SimTime, replicas: usize) -> f64 {
        if replicas == 0 {
            return f64::INFINITY;
        }
        self.at(t) / replicas as f64
    }
}
