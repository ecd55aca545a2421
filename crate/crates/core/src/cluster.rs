//! Ground-truth cluster state: pods, nodes, bindings and capacity
//! bookkeeping, with the lifecycle state machines of both.
//!
//! Every state change is appended to a transition log, which is what the
//! metrics module reads back. Illegal edges are rejected with
//! [`Error::IllegalTransition`] rather than silently applied.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{EventKind, Kernel, Payload, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PodId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TemplateId(pub usize);

impl fmt::Display for PodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "pod-{}", self.0)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "node-{}", self.0)
    }
}

/// CPU in millicores, memory in MiB.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ResourceVector {
    pub cpu_m: u64,
    pub mem_mib: u64,
}

impl ResourceVector {
    pub const ZERO: ResourceVector = ResourceVector { cpu_m: 0, mem_mib: 0 };

    pub const fn new(cpu_m: u64, mem_mib: u64) -> Self {
        Self { cpu_m, mem_mib }
    }

    /// Builds a vector from signed input, rejecting negative components.
    pub fn try_new(cpu_m: i64, mem_mib: i64) -> Result<Self> {
        if cpu_m < 0 || mem_mib < 0 {
            return Err(Error::NegativeResource {
                cpu: cpu_m,
                mem: mem_mib,
            });
        }
        Ok(Self::new(cpu_m as u64, mem_mib as u64))
    }

    /// Component-wise `self <= other`.
    pub fn fits_in(&self, other: &ResourceVector) -> bool {
        self.cpu_m <= other.cpu_m && self.mem_mib <= other.mem_mib
    }

    pub fn saturating_sub(&self, other: &ResourceVector) -> ResourceVector {
        ResourceVector::new(
            self.cpu_m.saturating_sub(other.cpu_m),
            self.mem_mib.saturating_sub(other.mem_mib),
        )
    }

    pub fn componentwise_min(&self, other: &ResourceVector) -> ResourceVector {
        ResourceVector::new(self.cpu_m.min(other.cpu_m), self.mem_mib.min(other.mem_mib))
    }
}

impl std::ops::Add for ResourceVector {
    type Output = ResourceVector;
    fn add(self, rhs: Self) -> Self {
        ResourceVector::new(self.cpu_m + rhs.cpu_m, self.mem_mib + rhs.mem_mib)
    }
}

impl std::ops::AddAssign for ResourceVector {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl std::iter::Sum for ResourceVector {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(ResourceVector::ZERO, |a, b| a + b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AppClass {
    CustomerFacingService,
    InternalService,
    BatchAnalytics,
    PreprocessingTask,
    CronJob,
}

impl AppClass {
    pub fn is_service(self) -> bool {
        matches!(self, AppClass::CustomerFacingService | AppClass::InternalService)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Movability {
    MovableStateless,
    MovableCheckpointable,
    Pinned,
}

impl Movability {
    pub fn is_movable(self) -> bool {
        !matches!(self, Movability::Pinned)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PodState {
    Pending,
    Bound,
    Starting,
    Running,
    Succeeded,
    Evicted,
    Failed,
}

impl PodState {
    pub fn is_terminal(self) -> bool {
        matches!(self, PodState::Succeeded | PodState::Failed)
    }

    pub fn is_placed(self) -> bool {
        matches!(self, PodState::Bound | PodState::Starting | PodState::Running)
    }

    fn can_become(self, to: PodState) -> bool {
        use PodState::*;
        matches!(
            (self, to),
            (Pending, Bound)
                | (Bound, Starting)
                | (Starting, Running)
                | (Running, Succeeded)
                | (Bound | Starting | Running, Evicted | Failed)
                | (Evicted, Pending)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeState {
    Provisioning,
    Ready,
    Draining,
    Terminated,
}

impl NodeState {
    pub fn is_alive(self) -> bool {
        !matches!(self, NodeState::Terminated)
    }

    fn can_become(self, to: NodeState) -> bool {
        use NodeState::*;
        matches!(
            (self, to),
            (Provisioning, Ready) | (Ready, Draining) | (Ready | Draining, Terminated)
        )
    }
}

/// A step in a pod's actual resource usage, `offset_s` seconds after start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsagePoint {
    pub offset_s: u64,
    pub cpu_m: u64,
    pub mem_mib: u64,
}

/// Workload-level description of a pod, before it enters the cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PodSpec {
    pub id: PodId,
    pub submit_time: SimTime,
    pub request: ResourceVector,
    pub duration_s: u64,
    pub app_class: AppClass,
    pub movability: Movability,
    pub fault_tolerant: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deadline: Option<SimTime>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub usage: Vec<UsagePoint>,
}

impl PodSpec {
    /// Actual usage `elapsed` seconds into a run, if a profile is declared.
    pub fn usage_at(&self, elapsed: u64) -> Option<ResourceVector> {
        self.usage
            .iter()
            .take_while(|p| p.offset_s <= elapsed)
            .last()
            .map(|p| ResourceVector::new(p.cpu_m, p.mem_mib))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pod {
    pub spec: PodSpec,
    pub state: PodState,
    pub node: Option<NodeId>,
    /// Incremented on every binding; events for older placements are stale.
    pub epoch: u32,
    /// Run time still owed when the pod next starts.
    pub remaining_s: u64,
    /// Seconds of useful work accumulated across placements.
    pub executed_s: u64,
    pub bind_time: Option<SimTime>,
    pub first_bind_time: Option<SimTime>,
    pub start_time: Option<SimTime>,
    pub finish_time: Option<SimTime>,
    pub evictions: u32,
    pub service_group: Option<usize>,
}

impl Pod {
    pub fn new(spec: PodSpec) -> Self {
        Self {
            remaining_s: spec.duration_s,
            spec,
            state: PodState::Pending,
            node: None,
            epoch: 0,
            executed_s: 0,
            bind_time: None,
            first_bind_time: None,
            start_time: None,
            finish_time: None,
            evictions: 0,
            service_group: None,
        }
    }

    pub fn id(&self) -> PodId {
        self.spec.id
    }

    pub fn request(&self) -> ResourceVector {
        self.spec.request
    }

    /// Seconds of work done in the current placement at time `t`.
    pub fn executed_in_placement(&self, t: SimTime) -> u64 {
        match (self.state, self.start_time) {
            (PodState::Running, Some(start)) => t.saturating_sub(start).min(self.remaining_s),
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PricingKind {
    Reserved,
    OnDemand,
    Preemptible,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PricingModel {
    pub kind: PricingKind,
    /// Fraction of the list rate actually charged. 1 unless preemptible.
    #[serde(default = "one")]
    pub discount_factor: f64,
    /// Reserved only: number of billing periods prepaid up front.
    #[serde(default)]
    pub term_periods: u64,
}

fn one() -> f64 {
    1.0
}

impl PricingModel {
    pub fn on_demand() -> Self {
        Self {
            kind: PricingKind::OnDemand,
            discount_factor: 1.0,
            term_periods: 0,
        }
    }

    pub fn preemptible(discount_factor: f64) -> Self {
        Self {
            kind: PricingKind::Preemptible,
            discount_factor,
            term_periods: 0,
        }
    }

    pub fn reserved(term_periods: u64) -> Self {
        Self {
            kind: PricingKind::Reserved,
            discount_factor: 1.0,
            term_periods,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeTemplate {
    pub name: String,
    /// Allocatable capacity, after system reservations.
    pub capacity: ResourceVector,
    pub pricing: PricingModel,
    /// Micro-dollars per billing period.
    pub rate_micro_usd: u64,
    pub billing_period_s: u64,
    pub boot_delay_s: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub template: TemplateId,
    pub state: NodeState,
    pub launch_time: SimTime,
    pub ready_time: Option<SimTime>,
    pub terminate_time: Option<SimTime>,
    pub bound: BTreeSet<PodId>,
    /// Sum of the requests of `bound`.
    pub requested: ResourceVector,
}

impl Node {
    /// True when `t` falls on the end of one of this node's billing periods.
    pub fn is_billing_boundary(&self, t: SimTime, billing_period_s: u64) -> bool {
        t > self.launch_time && (t - self.launch_time) % billing_period_s == 0
    }

    /// First billing boundary strictly after `t`.
    pub fn next_billing_boundary(&self, t: SimTime, billing_period_s: u64) -> SimTime {
        let elapsed = t.saturating_sub(self.launch_time);
        self.launch_time + (elapsed / billing_period_s + 1) * billing_period_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReleaseReason {
    Completed,
    Evicted,
    Failed,
    Revoked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "entity", rename_all = "snake_case")]
pub enum Transition {
    Pod {
        t: SimTime,
        id: PodId,
        from: Option<PodState>,
        to: PodState,
        #[serde(skip_serializing_if = "Option::is_none")]
        node: Option<NodeId>,
        #[serde(skip_serializing_if = "Option::is_none")]
        reason: Option<ReleaseReason>,
    },
    Node {
        t: SimTime,
        id: NodeId,
        from: Option<NodeState>,
        to: NodeState,
        template: TemplateId,
    },
}

impl Transition {
    pub fn time(&self) -> SimTime {
        match self {
            Transition::Pod { t, .. } | Transition::Node { t, .. } => *t,
        }
    }
}

/// How much of a node each bound pod is considered to hold.
pub trait Reservations {
    fn reservation(&self, pod: &Pod) -> ResourceVector;
}

/// Reservations equal to requests: the non-oversubscribed view.
#[derive(Debug, Clone, Copy, Default)]
pub struct ByRequest;

impl Reservations for ByRequest {
    fn reservation(&self, pod: &Pod) -> ResourceVector {
        pod.request()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Binding {
    pub pod: PodId,
    pub node: NodeId,
    pub t: SimTime,
}

#[derive(Debug, Clone, Default)]
pub struct Cluster {
    templates: Vec<NodeTemplate>,
    nodes: Vec<Node>,
    pods: BTreeMap<PodId, Pod>,
    queue: BTreeSet<(SimTime, PodId)>,
    transitions: Vec<Transition>,
}

impl Cluster {
    pub fn new(templates: Vec<NodeTemplate>) -> Self {
        Self {
            templates,
            ..Self::default()
        }
    }

    pub fn templates(&self) -> &[NodeTemplate] {
        &self.templates
    }

    pub fn template(&self, id: TemplateId) -> &NodeTemplate {
        &self.templates[id.0]
    }

    pub fn template_id(&self, name: &str) -> Result<TemplateId> {
        self.templates
            .iter()
            .position(|t| t.name == name)
            .map(TemplateId)
            .ok_or_else(|| Error::UnknownTemplate(name.to_string()))
    }

    pub fn node_template(&self, node: &Node) -> &NodeTemplate {
        self.template(node.template)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Result<&Node> {
        self.nodes.get(id.0 as usize).ok_or(Error::UnknownNode(id))
    }

    fn node_mut(&mut self, id: NodeId) -> Result<&mut Node> {
        self.nodes.get_mut(id.0 as usize).ok_or(Error::UnknownNode(id))
    }

    pub fn ready_nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(|n| n.state == NodeState::Ready)
    }

    pub fn pods(&self) -> impl Iterator<Item = &Pod> {
        self.pods.values()
    }

    pub fn pod(&self, id: PodId) -> Result<&Pod> {
        self.pods.get(&id).ok_or(Error::UnknownPod(id))
    }

    pub(crate) fn pod_mut(&mut self, id: PodId) -> Result<&mut Pod> {
        self.pods.get_mut(&id).ok_or(Error::UnknownPod(id))
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    /// Pending pods in FCFS order: by submit time, then id.
    pub fn pending_queue(&self) -> Vec<PodId> {
        self.queue.iter().map(|&(_, id)| id).collect()
    }

    pub fn pending_count(&self) -> usize {
        self.queue.len()
    }

    pub fn submitted(&self) -> usize {
        self.pods.len()
    }

    pub fn state_counts(&self) -> BTreeMap<PodState, usize> {
        let mut counts = BTreeMap::new();
        for p in self.pods.values() {
            *counts.entry(p.state).or_default() += 1;
        }
        counts
    }

    fn set_pod_state(
        &mut self,
        id: PodId,
        to: PodState,
        t: SimTime,
        reason: Option<ReleaseReason>,
    ) -> Result<()> {
        let pod = self.pods.get_mut(&id).ok_or(Error::UnknownPod(id))?;
        let from = pod.state;
        if !from.can_become(to) {
            return Err(Error::IllegalTransition {
                entity: id.to_string(),
                from: format!("{from:?}"),
                to: format!("{to:?}"),
            });
        }
        pod.state = to;
        let node = pod.node;
        let submit = pod.spec.submit_time;
        if from == PodState::Pending {
            self.queue.remove(&(submit, id));
        }
        if to == PodState::Pending {
            self.queue.insert((submit, id));
        }
        self.transitions.push(Transition::Pod {
            t,
            id,
            from: Some(from),
            to,
            node,
            reason,
        });
        Ok(())
    }

    fn set_node_state(&mut self, id: NodeId, to: NodeState, t: SimTime) -> Result<()> {
        let node = self.node_mut(id)?;
        let from = node.state;
        if !from.can_become(to) {
            return Err(Error::IllegalTransition {
                entity: id.to_string(),
                from: format!("{from:?}"),
                to: format!("{to:?}"),
            });
        }
        node.state = to;
        let template = node.template;
        self.transitions.push(Transition::Node {
            t,
            id,
            from: Some(from),
            to,
            template,
        });
        Ok(())
    }

    /// Admits a pod into the pending queue at `t`.
    pub fn submit(&mut self, spec: PodSpec, t: SimTime) -> Result<PodId> {
        let id = spec.id;
        if self.pods.contains_key(&id) {
            return Err(Error::validation(format!("pods[{}]", id.0), "duplicate pod id"));
        }
        let submit = spec.submit_time;
        self.pods.insert(id, Pod::new(spec));
        self.queue.insert((submit, id));
        self.transitions.push(Transition::Pod {
            t,
            id,
            from: None,
            to: PodState::Pending,
            node: None,
            reason: None,
        });
        Ok(id)
    }

    pub(crate) fn set_service_group(&mut self, id: PodId, group: usize) -> Result<()> {
        self.pod_mut(id)?.service_group = Some(group);
        Ok(())
    }

    /// Leases a node. It is billed from `t` and a `NodeReady` event is queued
    /// at `t + boot_delay`.
    pub fn provision_node(&mut self, kernel: &mut Kernel, template: TemplateId, t: SimTime) -> Result<NodeId> {
        let boot = self
            .templates
            .get(template.0)
            .ok_or_else(|| Error::UnknownTemplate(format!("#{}", template.0)))?
            .boot_delay_s;
        let id = NodeId(self.nodes.len() as u64);
        self.nodes.push(Node {
            id,
            template,
            state: NodeState::Provisioning,
            launch_time: t,
            ready_time: None,
            terminate_time: None,
            bound: BTreeSet::new(),
            requested: ResourceVector::ZERO,
        });
        self.transitions.push(Transition::Node {
            t,
            id,
            from: None,
            to: NodeState::Provisioning,
            template,
        });
        kernel.push(t + boot, EventKind::NodeReady, Payload::Node { id })?;
        Ok(id)
    }

    /// Adds a node that is already Ready at `t` (initial cluster members).
    pub fn add_ready_node(&mut self, template: TemplateId, t: SimTime) -> Result<NodeId> {
        let id = NodeId(self.nodes.len() as u64);
        self.nodes.push(Node {
            id,
            template,
            state: NodeState::Provisioning,
            launch_time: t,
            ready_time: None,
            terminate_time: None,
            bound: BTreeSet::new(),
            requested: ResourceVector::ZERO,
        });
        self.transitions.push(Transition::Node {
            t,
            id,
            from: None,
            to: NodeState::Provisioning,
            template,
        });
        self.mark_ready(id, t)?;
        Ok(id)
    }

    pub fn mark_ready(&mut self, id: NodeId, t: SimTime) -> Result<()> {
        self.set_node_state(id, NodeState::Ready, t)?;
        self.node_mut(id)?.ready_time = Some(t);
        Ok(())
    }

    pub fn begin_drain(&mut self, id: NodeId, t: SimTime) -> Result<()> {
        self.set_node_state(id, NodeState::Draining, t)
    }

    /// Terminates a node. Any pods still bound must have been released.
    pub fn terminate_node(&mut self, id: NodeId, t: SimTime) -> Result<()> {
        if !self.node(id)?.bound.is_empty() {
            return Err(Error::IllegalTransition {
                entity: id.to_string(),
                from: "occupied".into(),
                to: "Terminated".into(),
            });
        }
        self.set_node_state(id, NodeState::Terminated, t)?;
        self.node_mut(id)?.terminate_time = Some(t);
        Ok(())
    }

    /// Capacity left on a Ready node once every bound pod's reservation is
    /// subtracted. With [`ByRequest`] this is the requested-mode capacity.
    pub fn free_capacity(&self, id: NodeId, reservations: &dyn Reservations) -> Result<ResourceVector> {
        let node = self.node(id)?;
        if node.state != NodeState::Ready {
            return Err(Error::NodeNotReady(id));
        }
        let held: ResourceVector = node
            .bound
            .iter()
            .map(|p| reservations.reservation(&self.pods[p]))
            .sum();
        Ok(self.node_template(node).capacity.saturating_sub(&held))
    }

    /// Binds a pending pod to a Ready node and queues `PodStarted` at
    /// `t + start_overhead`.
    pub fn bind_pod(
        &mut self,
        kernel: &mut Kernel,
        pod: PodId,
        node: NodeId,
        t: SimTime,
        reservations: &dyn Reservations,
        start_overhead: u64,
    ) -> Result<Binding> {
        let p = self.pod(pod)?;
        if p.state != PodState::Pending {
            return Err(Error::BindRejected {
                pod,
                node,
                reason: format!("pod is {:?}", p.state),
            });
        }
        let request = p.request();
        let n = self.node(node)?;
        if n.state != NodeState::Ready {
            return Err(Error::BindRejected {
                pod,
                node,
                reason: format!("node is {:?}", n.state),
            });
        }
        let free = self.free_capacity(node, reservations)?;
        if !request.fits_in(&free) {
            return Err(Error::BindRejected {
                pod,
                node,
                reason: format!(
                    "needs {}m/{}MiB, {}m/{}MiB free",
                    request.cpu_m, request.mem_mib, free.cpu_m, free.mem_mib
                ),
            });
        }
        {
            let n = self.node_mut(node)?;
            n.bound.insert(pod);
            n.requested += request;
        }
        let epoch = {
            let p = self.pod_mut(pod)?;
            p.node = Some(node);
            p.epoch += 1;
            p.bind_time = Some(t);
            p.first_bind_time.get_or_insert(t);
            p.start_time = None;
            p.epoch
        };
        self.set_pod_state(pod, PodState::Bound, t, None)?;
        kernel.push(t + start_overhead, EventKind::PodStarted, Payload::Pod { id: pod, epoch })?;
        Ok(Binding { pod, node, t })
    }

    /// Starts a bound pod and queues its completion after the remaining run
    /// time plus `runtime_overhead`.
    pub fn start_pod(&mut self, kernel: &mut Kernel, pod: PodId, t: SimTime, runtime_overhead: u64) -> Result<SimTime> {
        self.set_pod_state(pod, PodState::Starting, t, None)?;
        self.set_pod_state(pod, PodState::Running, t, None)?;
        let p = self.pod_mut(pod)?;
        p.start_time = Some(t);
        let done = t + p.remaining_s + runtime_overhead;
        let epoch = p.epoch;
        kernel.push(done, EventKind::PodCompleted, Payload::Pod { id: pod, epoch })?;
        Ok(done)
    }

    /// Unbinds a pod, crediting its node's capacity, and moves it to the
    /// state implied by `reason`:
    ///
    /// * `Completed` → Succeeded (pod must be Running)
    /// * `Evicted` → Evicted (migration; Pinned pods are refused)
    /// * `Failed` → Failed
    /// * `Revoked` → Evicted if the pod is fault tolerant, else Failed
    pub fn release_pod(&mut self, pod: PodId, t: SimTime, reason: ReleaseReason) -> Result<PodState> {
        let p = self.pod(pod)?;
        if !p.state.is_placed() {
            return Err(Error::NotBound(pod));
        }
        let to = match reason {
            ReleaseReason::Completed => PodState::Succeeded,
            ReleaseReason::Evicted => {
                if p.spec.movability == Movability::Pinned {
                    return Err(Error::PinnedEviction(pod));
                }
                PodState::Evicted
            }
            ReleaseReason::Failed => PodState::Failed,
            ReleaseReason::Revoked => {
                if p.spec.fault_tolerant {
                    PodState::Evicted
                } else {
                    PodState::Failed
                }
            }
        };
        if to == PodState::Succeeded && p.state != PodState::Running {
            return Err(Error::IllegalTransition {
                entity: pod.to_string(),
                from: format!("{:?}", p.state),
                to: "Succeeded".into(),
            });
        }
        let node = p.node.ok_or(Error::NotBound(pod))?;
        let request = p.request();
        let worked = if to == PodState::Succeeded {
            p.remaining_s
        } else {
            p.executed_in_placement(t)
        };

        self.set_pod_state(pod, to, t, Some(reason))?;
        {
            let p = self.pod_mut(pod)?;
            p.executed_s += worked;
            p.remaining_s -= worked.min(p.remaining_s);
            p.node = None;
            if to.is_terminal() {
                p.finish_time = Some(t);
            }
            if to == PodState::Evicted {
                p.evictions += 1;
            }
        }
        let n = self.node_mut(node)?;
        n.bound.remove(&pod);
        n.requested = n.requested.saturating_sub(&request);
        Ok(to)
    }

    /// Evicted → Pending. Remaining run time is left as set by the caller.
    pub(crate) fn requeue(&mut self, pod: PodId, t: SimTime) -> Result<()> {
        if self.pod(pod)?.state != PodState::Evicted {
            return Err(Error::NotEvicted(pod));
        }
        self.set_pod_state(pod, PodState::Pending, t, None)
    }

    /// Checks the capacity and conservation invariants. `oversubscribed`
    /// disables the Σ requests ≤ capacity check.
    pub fn check_invariants(&self, oversubscribed: bool) -> std::result::Result<(), String> {
        for node in &self.nodes {
            let sum: ResourceVector = node.bound.iter().map(|p| self.pods[p].request()).sum();
            if sum != node.requested {
                return Err(format!("{}: request ledger drift", node.id));
            }
            if !node.bound.is_empty() && !matches!(node.state, NodeState::Ready | NodeState::Draining) {
                return Err(format!("{} holds pods while {:?}", node.id, node.state));
            }
            if !oversubscribed && !sum.fits_in(&self.node_template(node).capacity) {
                return Err(format!("{} over capacity: {:?}", node.id, sum));
            }
            for p in &node.bound {
                let pod = &self.pods[p];
                if pod.node != Some(node.id) || !pod.state.is_placed() {
                    return Err(format!("{p} bookkeeping mismatch on {}", node.id));
                }
            }
        }
        let counted: usize = self.state_counts().values().sum();
        if counted != self.pods.len() {
            return Err("pod state conservation violated".into());
        }
        let pending = self.pods.values().filter(|p| p.state == PodState::Pending).count();
        if pending != self.queue.len() {
            return Err("pending queue out of sync".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Event;

    pub(crate) fn small_template(boot: u64) -> NodeTemplate {
        NodeTemplate {
            name: "m2.small".into(),
            capacity: ResourceVector::new(750, 3788),
            pricing: PricingModel::on_demand(),
            rate_micro_usd: 792,
            billing_period_s: 60,
            boot_delay_s: boot,
        }
    }

    pub(crate) fn batch_pod(id: u64, submit: SimTime) -> PodSpec {
        PodSpec {
            id: PodId(id),
            submit_time: submit,
            request: ResourceVector::new(250, 64),
            duration_s: 1000,
            app_class: AppClass::BatchAnalytics,
            movability: Movability::MovableStateless,
            fault_tolerant: true,
            deadline: None,
            usage: vec![],
        }
    }

    fn drain_queue(kernel: &mut Kernel) -> Vec<Event> {
        struct Collect(Vec<Event>);
        impl crate::kernel::Handler for Collect {
            fn handle(&mut self, e: &Event, _: &mut Kernel) -> Result<()> {
                self.0.push(*e);
                Ok(())
            }
        }
        let mut c = Collect(vec![]);
        kernel.run_until(u64::MAX, &mut c).unwrap();
        c.0
    }

    #[test]
    fn provision_queues_ready_after_boot_delay() {
        let mut k = Kernel::new();
        let mut c = Cluster::new(vec![small_template(90)]);
        let id = c.provision_node(&mut k, TemplateId(0), 300).unwrap();
        let node = c.node(id).unwrap();
        assert_eq!(node.state, NodeState::Provisioning);
        assert_eq!(node.launch_time, 300);
        let events = drain_queue(&mut k);
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].time, 390);
        assert_eq!(events[0].kind, EventKind::NodeReady);
    }

    #[test]
    fn zero_boot_delay_is_ready_at_same_instant() {
        let mut k = Kernel::new();
        let mut c = Cluster::new(vec![small_template(0)]);
        c.provision_node(&mut k, TemplateId(0), 40).unwrap();
        assert_eq!(drain_queue(&mut k)[0].time, 40);
    }

    #[test]
    fn three_slots_per_worker_then_rejection() {
        let mut k = Kernel::new();
        let mut c = Cluster::new(vec![small_template(0)]);
        let n = c.add_ready_node(TemplateId(0), 0).unwrap();
        for i in 0..4 {
            c.submit(batch_pod(i, 0), 0).unwrap();
        }
        for i in 0..3 {
            c.bind_pod(&mut k, PodId(i), n, 0, &ByRequest, 0).unwrap();
        }
        let err = c.bind_pod(&mut k, PodId(3), n, 0, &ByRequest, 0).unwrap_err();
        assert!(matches!(err, Error::BindRejected { .. }));
        assert_eq!(c.free_capacity(n, &ByRequest).unwrap(), ResourceVector::new(0, 3788 - 192));
    }

    #[test]
    fn scheduling_delay_is_bind_minus_submit() {
        let mut k = Kernel::new();
        let mut c = Cluster::new(vec![small_template(0)]);
        let n = c.add_ready_node(TemplateId(0), 0).unwrap();
        c.submit(batch_pod(0, 20), 20).unwrap();
        c.bind_pod(&mut k, PodId(0), n, 95, &ByRequest, 0).unwrap();
        let p = c.pod(PodId(0)).unwrap();
        assert_eq!(p.bind_time.unwrap() - p.spec.submit_time, 75);
    }

    #[test]
    fn binding_to_draining_or_provisioning_node_is_rejected() {
        let mut k = Kernel::new();
        let mut c = Cluster::new(vec![small_template(90)]);
        let ready = c.add_ready_node(TemplateId(0), 0).unwrap();
        let booting = c.provision_node(&mut k, TemplateId(0), 0).unwrap();
        c.begin_drain(ready, 10).unwrap();
        c.submit(batch_pod(0, 0), 0).unwrap();
        for n in [ready, booting] {
            assert!(matches!(
                c.bind_pod(&mut k, PodId(0), n, 10, &ByRequest, 0),
                Err(Error::BindRejected { .. })
            ));
        }
    }

    #[test]
    fn free_capacity_arithmetic() {
        let mut k = Kernel::new();
        let mut c = Cluster::new(vec![small_template(0)]);
        let n = c.add_ready_node(TemplateId(0), 0).unwrap();
        assert_eq!(c.free_capacity(n, &ByRequest).unwrap(), ResourceVector::new(750, 3788));
        for i in 0..2 {
            c.submit(batch_pod(i, 0), 0).unwrap();
            c.bind_pod(&mut k, PodId(i), n, 0, &ByRequest, 0).unwrap();
        }
        assert_eq!(c.free_capacity(n, &ByRequest).unwrap(), ResourceVector::new(250, 3660));
    }

    #[test]
    fn completion_lands_after_duration_plus_overhead() {
        let mut k = Kernel::new();
        let mut c = Cluster::new(vec![small_template(0)]);
        let n = c.add_ready_node(TemplateId(0), 0).unwrap();
        c.submit(batch_pod(0, 0), 0).unwrap();
        c.bind_pod(&mut k, PodId(0), n, 0, &ByRequest, 0).unwrap();
        let done = c.start_pod(&mut k, PodId(0), 0, 25).unwrap();
        assert_eq!(done, 1025);
        assert_eq!(c.release_pod(PodId(0), done, ReleaseReason::Completed).unwrap(), PodState::Succeeded);
        let p = c.pod(PodId(0)).unwrap();
        assert_eq!(p.finish_time, Some(1025));
        assert_eq!(p.executed_s, 1000);
        assert_eq!(c.free_capacity(n, &ByRequest).unwrap(), ResourceVector::new(750, 3788));
    }

    #[test]
    fn revocation_requeues_fault_tolerant_and_fails_the_rest() {
        let mut k = Kernel::new();
        let mut c = Cluster::new(vec![small_template(0)]);
        let n = c.add_ready_node(TemplateId(0), 0).unwrap();
        let mut fragile = batch_pod(1, 0);
        fragile.fault_tolerant = false;
        c.submit(batch_pod(0, 0), 0).unwrap();
        c.submit(fragile, 0).unwrap();
        for i in 0..2 {
            c.bind_pod(&mut k, PodId(i), n, 0, &ByRequest, 0).unwrap();
        }
        assert_eq!(c.release_pod(PodId(0), 5, ReleaseReason::Revoked).unwrap(), PodState::Evicted);
        assert_eq!(c.release_pod(PodId(1), 5, ReleaseReason::Revoked).unwrap(), PodState::Failed);
    }

    #[test]
    fn pinned_pods_cannot_be_evicted_by_migration() {
        let mut k = Kernel::new();
        let mut c = Cluster::new(vec![small_template(0)]);
        let n = c.add_ready_node(TemplateId(0), 0).unwrap();
        let mut pinned = batch_pod(0, 0);
        pinned.movability = Movability::Pinned;
        c.submit(pinned, 0).unwrap();
        c.bind_pod(&mut k, PodId(0), n, 0, &ByRequest, 0).unwrap();
        assert!(matches!(
            c.release_pod(PodId(0), 3, ReleaseReason::Evicted),
            Err(Error::PinnedEviction(_))
        ));
    }

    #[test]
    fn releasing_an_unbound_pod_is_an_error() {
        let mut c = Cluster::new(vec![small_template(0)]);
        c.submit(batch_pod(0, 0), 0).unwrap();
        assert!(matches!(
            c.release_pod(PodId(0), 0, ReleaseReason::Completed),
            Err(Error::NotBound(_))
        ));
    }

    #[test]
    fn node_lifecycle_rejects_backward_edges() {
        let mut c = Cluster::new(vec![small_template(0)]);
        let n = c.add_ready_node(TemplateId(0), 0).unwrap();
        c.terminate_node(n, 60).unwrap();
        assert!(c.mark_ready(n, 61).is_err());
        assert!(c.begin_drain(n, 61).is_err());
    }

    #[test]
    fn billing_boundaries() {
        let mut k = Kernel::new();
        let mut c = Cluster::new(vec![small_template(0)]);
        let n = c.provision_node(&mut k, TemplateId(0), 30).unwrap();
        let node = c.node(n).unwrap();
        assert!(!node.is_billing_boundary(30, 60));
        assert!(node.is_billing_boundary(90, 60));
        assert!(!node.is_billing_boundary(91, 60));
        assert_eq!(node.next_billing_boundary(30, 60), 90);
        assert_eq!(node.next_billing_boundary(90, 60), 150);
    }

    #[test]
    fn usage_profile_is_a_step_function() {
        let mut spec = batch_pod(0, 0);
        spec.usage = vec![
            UsagePoint { offset_s: 0, cpu_m: 10, mem_mib: 1 },
            UsagePoint { offset_s: 100, cpu_m: 200, mem_mib: 2 },
        ];
        assert_eq!(spec.usage_at(50), Some(ResourceVector::new(10, 1)));
        assert_eq!(spec.usage_at(100), Some(ResourceVector::new(200, 2)));
        assert_eq!(batch_pod(1, 0).usage_at(5), None);
    }

    #[test]
    fn negative_resources_rejected() {
        assert!(ResourceVector::try_new(-1, 0).is_err());
        assert_eq!(ResourceVector::try_new(1, 2).unwrap(), ResourceVector::new(1, 2));
    }
}
