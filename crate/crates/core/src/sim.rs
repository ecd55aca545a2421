//! Wires the kernel to the cluster state and the policies, and runs a
//! scenario to completion.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::accounting::BillingWindow;
use crate::cluster::{
    ByRequest, Cluster, Node, NodeId, NodeState, Pod, PodId, PodSpec, PodState, PricingKind, ReleaseReason,
    Reservations, TemplateId, Transition,
};
use crate::elasticity::{self, Autoscaler, AutoscalerPolicy, Review, ScaleDecision};
use crate::error::{Error, Result};
use crate::estimator::Estimator;
use crate::kernel::{Event, EventKind, Handler, Kernel, Payload, RunStats, SimRng, SimTime};
use crate::metrics::{self, RunReport};
use crate::rescheduling::{self, DrainOutcome, MigrationModel};
use crate::scenario::{AutoscalerConfig, Overheads, Scenario, ServiceGroupConfig};
use crate::scheduling::{self, CapacityMode, SchedulerPolicy};
use crate::workload;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Keep a JSON-lines trace of dispatched events and state transitions.
    pub trace: bool,
    /// Check cluster invariants after every event; a violation aborts the run.
    pub audit: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EvictionRecord {
    pub t: SimTime,
    pub pod: PodId,
    pub node: NodeId,
    pub requeue_at: SimTime,
}

/// Everything a finished run leaves behind. Reports are computed from this.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub scenario: String,
    pub seed: u64,
    pub cluster: Cluster,
    pub events: Vec<Event>,
    pub stats: RunStats,
    /// Monitoring instants, in order.
    pub ticks: Vec<SimTime>,
    pub launches: Vec<SimTime>,
    pub evictions: Vec<EvictionRecord>,
    pub qos_violations: BTreeSet<PodId>,
    /// When the last pod reached a terminal state, or the time of the last
    /// dispatched event if some never did.
    pub end_time: SimTime,
    pub horizon: SimTime,
    pub billing_window: BillingWindow,
    pub trace: Vec<String>,
}

impl RunRecord {
    pub fn pods(&self) -> impl Iterator<Item = &Pod> {
        self.cluster.pods()
    }

    pub fn nodes(&self) -> &[Node] {
        self.cluster.nodes()
    }

    pub fn transitions(&self) -> &[Transition] {
        self.cluster.transitions()
    }

    /// `(pod, first bind time)` for every pod that was ever bound, by pod id.
    pub fn bind_times(&self) -> Vec<(PodId, SimTime)> {
        self.pods()
            .filter_map(|p| p.first_bind_time.map(|t| (p.id(), t)))
            .collect()
    }

    pub fn trace_jsonl(&self) -> String {
        let mut out = String::new();
        for line in &self.trace {
            out.push_str(line);
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub record: RunRecord,
    pub report: RunReport,
}

struct ServiceState {
    config: ServiceGroupConfig,
    replicas: Vec<PodId>,
}

struct World {
    cluster: Cluster,
    policy: SchedulerPolicy,
    cycle_s: u64,
    tick_s: u64,
    overheads: Overheads,
    rng: SimRng,
    seed: u64,
    autoscaler: Autoscaler,
    estimator: Estimator,
    migration: MigrationModel,
    consolidation: Option<f64>,
    preemption_rate: Option<f64>,
    horizon: SimTime,
    services: Vec<ServiceState>,
    next_pod_id: u64,
    future: BTreeMap<PodId, PodSpec>,
    ticks: Vec<SimTime>,
    permit_pending: bool,
    qos_violations: BTreeSet<PodId>,
    evictions: Vec<EvictionRecord>,
    options: RunOptions,
    trace: Vec<String>,
    traced_transitions: usize,
    finished_at: Option<SimTime>,
}

impl World {
    fn done(&self) -> bool {
        self.future.is_empty() && self.cluster.pods().all(|p| p.state.is_terminal())
    }

    fn cycle(&mut self, t: SimTime, kernel: &mut Kernel) -> Result<()> {
        let outcome = match self.policy.capacity_mode {
            CapacityMode::Requested => scheduling::run_cycle(
                t,
                &mut self.cluster,
                kernel,
                &self.policy,
                &mut self.rng,
                &ByRequest,
                self.overheads.pod_start_s,
            )?,
            CapacityMode::Opportunistic => scheduling::run_cycle(
                t,
                &mut self.cluster,
                kernel,
                &self.policy,
                &mut self.rng,
                &self.estimator,
                self.overheads.pod_start_s,
            )?,
        };
        if outcome.needs_scale_out() {
            self.request_scale_out(t, &outcome.unschedulable, kernel)?;
        }
        Ok(())
    }

    fn request_scale_out(&mut self, t: SimTime, pods: &[PodId], kernel: &mut Kernel) -> Result<()> {
        match self.autoscaler.scale_out_request(t, pods) {
            ScaleDecision::Launch { template, count } => {
                for _ in 0..count {
                    self.cluster.provision_node(kernel, template, t)?;
                }
            }
            ScaleDecision::None => {
                if let Some(at) = self.autoscaler.next_permitted(t) {
                    if !self.permit_pending {
                        self.permit_pending = true;
                        kernel.push(at, EventKind::ScaleOutPermitted, Payload::None)?;
                    }
                }
            }
        }
        Ok(())
    }

    /// Pending pods that no Ready node can take right now.
    fn unplaceable(&self) -> Vec<PodId> {
        let reservations: &dyn Reservations = match self.policy.capacity_mode {
            CapacityMode::Requested => &ByRequest,
            CapacityMode::Opportunistic => &self.estimator,
        };
        self.cluster
            .pending_queue()
            .into_iter()
            .filter(|id| {
                self.cluster
                    .pod(*id)
                    .is_ok_and(|p| scheduling::filter(p, &self.cluster, &self.policy, reservations).is_empty())
            })
            .collect()
    }

    fn node_came_up(&mut self, id: NodeId, kernel: &mut Kernel) -> Result<()> {
        let node = self.cluster.node(id)?;
        let template = self.cluster.node_template(node);
        let ready = node.ready_time.unwrap_or(node.launch_time);
        if self.consolidation.is_some() && template.pricing.kind != PricingKind::Reserved {
            let at = node.next_billing_boundary(ready, template.billing_period_s);
            kernel.push(at, EventKind::BillingBoundary, Payload::Node { id })?;
        }
        if let Some(rate) = self.preemption_rate {
            if template.pricing.kind == PricingKind::Preemptible {
                for (at, node) in workload::preemption_events(self.seed, rate, self.horizon, &[(id, ready)]) {
                    kernel.push(at, EventKind::PreemptionRevocation, Payload::Node { id: node })?;
                }
            }
        }
        Ok(())
    }

    fn billing_boundary(&mut self, t: SimTime, id: NodeId, kernel: &mut Kernel) -> Result<()> {
        let node = self.cluster.node(id)?;
        match node.state {
            NodeState::Terminated | NodeState::Provisioning => return Ok(()),
            NodeState::Draining => {
                if node.bound.is_empty() {
                    return self.cluster.terminate_node(id, t);
                }
            }
            NodeState::Ready => {
                let threshold = self.consolidation.unwrap_or(0.0);
                let review = elasticity::billing_boundary_review(t, id, &self.cluster, &self.migration, threshold)?;
                if review == Review::Drain {
                    if let DrainOutcome::Plan(plan) = rescheduling::drain(&mut self.cluster, id, t, &self.migration)? {
                        for d in &plan.dispositions {
                            let at = d.requeue_at(t);
                            let epoch = self.cluster.pod(d.pod)?.epoch;
                            kernel.push(at, EventKind::PodArrival, Payload::Pod { id: d.pod, epoch })?;
                            self.evictions.push(EvictionRecord {
                                t,
                                pod: d.pod,
                                node: id,
                                requeue_at: at,
                            });
                        }
                        return self.cluster.terminate_node(id, t);
                    }
                }
            }
        }
        if !self.done() {
            let node = self.cluster.node(id)?;
            let at = node.next_billing_boundary(t, self.cluster.node_template(node).billing_period_s);
            kernel.push(at, EventKind::BillingBoundary, Payload::Node { id })?;
        }
        Ok(())
    }

    fn revoke(&mut self, t: SimTime, id: NodeId, kernel: &mut Kernel) -> Result<()> {
        if !matches!(self.cluster.node(id)?.state, NodeState::Ready | NodeState::Draining) {
            return Ok(());
        }
        for (pod, state) in rescheduling::revoke_node(&mut self.cluster, id, t)? {
            if state == PodState::Evicted {
                let epoch = self.cluster.pod(pod)?.epoch;
                kernel.push(t, EventKind::PodArrival, Payload::Pod { id: pod, epoch })?;
                self.evictions.push(EvictionRecord {
                    t,
                    pod,
                    node: id,
                    requeue_at: t,
                });
            } else if self.cluster.pod(pod)?.spec.deadline.is_some() {
                self.qos_violations.insert(pod);
            }
        }
        Ok(())
    }

    fn arrival(&mut self, t: SimTime, id: PodId) -> Result<()> {
        if let Some(spec) = self.future.remove(&id) {
            self.cluster.submit(spec, t)?;
        } else if self.cluster.pod(id)?.state == PodState::Evicted && rescheduling::resume_evicted(&mut self.cluster, id, t)? {
            self.qos_violations.insert(id);
        }
        Ok(())
    }

    fn completed(&mut self, t: SimTime, id: PodId, epoch: u32) -> Result<()> {
        let pod = self.cluster.pod(id)?;
        if pod.epoch != epoch || pod.state != PodState::Running {
            return Ok(());
        }
        if pod.spec.deadline.is_some_and(|d| t > d) {
            self.qos_violations.insert(id);
        }
        self.cluster.release_pod(id, t, ReleaseReason::Completed)?;
        Ok(())
    }

    fn monitor(&mut self, t: SimTime) -> Result<()> {
        self.ticks.push(t);
        let samples: Vec<(PodId, crate::cluster::ResourceVector)> = self
            .cluster
            .pods()
            .filter(|p| p.state == PodState::Running)
            .filter_map(|p| {
                let elapsed = t - p.start_time?;
                p.spec.usage_at(elapsed).map(|u| (p.id(), u))
            })
            .collect();
        for (id, usage) in samples {
            let pod = self.cluster.pod(id)?;
            self.estimator.record_pod(pod, t, usage);
        }
        for g in 0..self.services.len() {
            self.scale_service(t, g)?;
        }
        Ok(())
    }

    fn submit_replica(&mut self, t: SimTime, group: usize) -> Result<()> {
        let r = &self.services[group].config.replica;
        let spec = PodSpec {
            id: PodId(self.next_pod_id),
            submit_time: t,
            request: crate::cluster::ResourceVector::new(r.cpu_m, r.mem_mib),
            duration_s: self.horizon,
            app_class: r.app_class,
            movability: r.movability,
            fault_tolerant: r.fault_tolerant,
            deadline: None,
            usage: r.usage.clone(),
        };
        self.next_pod_id += 1;
        let id = self.cluster.submit(spec, t)?;
        self.cluster.set_service_group(id, group)?;
        self.services[group].replicas.push(id);
        Ok(())
    }

    fn scale_service(&mut self, t: SimTime, group: usize) -> Result<()> {
        let live: Vec<PodId> = self.services[group]
            .replicas
            .iter()
            .copied()
            .filter(|id| self.cluster.pod(*id).is_ok_and(|p| !p.state.is_terminal()))
            .collect();
        let cfg = &self.services[group].config;
        let util = cfg.load.utilization(t, live.len());
        match elasticity::hpa_evaluate(util, live.len(), &cfg.hpa) {
            1 => self.submit_replica(t, group)?,
            -1 => {
                let newest = live
                    .iter()
                    .rev()
                    .find(|id| self.cluster.pod(**id).is_ok_and(|p| p.state == PodState::Running));
                if let Some(&id) = newest {
                    self.cluster.release_pod(id, t, ReleaseReason::Completed)?;
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn record_trace(&mut self, event: &Event) {
        if !self.options.trace {
            return;
        }
        self.trace.push(serde_json::json!({ "event": event }).to_string());
        let all = self.cluster.transitions();
        for tr in &all[self.traced_transitions..] {
            self.trace.push(serde_json::json!({ "transition": tr }).to_string());
        }
        self.traced_transitions = all.len();
    }
}

impl Handler for World {
    fn handle(&mut self, event: &Event, kernel: &mut Kernel) -> Result<()> {
        let t = event.time;
        match (event.kind, event.payload) {
            (EventKind::PodArrival, Payload::Pod { id, .. }) => self.arrival(t, id)?,
            (EventKind::PodStarted, Payload::Pod { id, epoch }) => {
                let pod = self.cluster.pod(id)?;
                if pod.epoch == epoch && pod.state == PodState::Bound {
                    self.cluster.start_pod(kernel, id, t, self.overheads.runtime_s)?;
                }
            }
            (EventKind::PodCompleted, Payload::Pod { id, epoch }) => self.completed(t, id, epoch)?,
            (EventKind::SchedulingCycle, _) => {
                self.cycle(t, kernel)?;
                if !self.done() {
                    kernel.push(t + self.cycle_s, EventKind::SchedulingCycle, Payload::None)?;
                }
            }
            (EventKind::MonitoringTick, _) => {
                self.monitor(t)?;
                if !self.done() {
                    kernel.push(t + self.tick_s, EventKind::MonitoringTick, Payload::None)?;
                }
            }
            (EventKind::NodeReady, Payload::Node { id }) => {
                self.cluster.mark_ready(id, t)?;
                self.node_came_up(id, kernel)?;
            }
            (EventKind::BillingBoundary, Payload::Node { id }) => self.billing_boundary(t, id, kernel)?,
            (EventKind::PreemptionRevocation, Payload::Node { id }) => self.revoke(t, id, kernel)?,
            (EventKind::ScaleOutPermitted, _) => {
                self.permit_pending = false;
                let stuck = self.unplaceable();
                if !stuck.is_empty() {
                    self.request_scale_out(t, &stuck, kernel)?;
                }
            }
            (kind, payload) => {
                return Err(Error::validation(
                    "event",
                    format!("{kind:?} cannot carry {payload:?}"),
                ))
            }
        }
        if self.options.audit {
            let oversubscribed = self.policy.capacity_mode == CapacityMode::Opportunistic;
            self.cluster
                .check_invariants(oversubscribed)
                .map_err(|m| Error::validation(format!("invariant at t={t}"), m))?;
        }
        self.record_trace(event);
        if self.finished_at.is_none() && self.done() {
            self.finished_at = Some(t);
        }
        Ok(())
    }
}

/// A scenario set up and ready to run.
pub struct Simulation {
    kernel: Kernel,
    world: World,
    name: String,
    billing_window: BillingWindow,
}

impl Simulation {
    pub fn new(scenario: &Scenario, options: RunOptions) -> Result<Self> {
        scenario.validate()?;
        let pods = scenario.pods()?;
        let cluster = Cluster::new(scenario.node_templates());
        let mut kernel = Kernel::new();

        let autoscaler = match &scenario.autoscaler {
            AutoscalerConfig::Void => AutoscalerPolicy::Void,
            AutoscalerConfig::Simple { template, .. } => AutoscalerPolicy::Simple {
                template: cluster.template_id(template)?,
                provisioning_interval: scenario.provisioning_interval().unwrap_or(0),
            },
        };

        let mut world = World {
            policy: scenario.scheduler.policy(),
            cycle_s: scenario.scheduler.cycle_s,
            tick_s: scenario.monitoring_timestep_s,
            overheads: scenario.overheads,
            rng: SimRng::new(scenario.seed),
            seed: scenario.seed,
            autoscaler: Autoscaler::new(autoscaler),
            estimator: Estimator::new(scenario.estimator)?,
            migration: MigrationModel {
                checkpoint_rate_mib_s: scenario.rescheduler.checkpoint_rate_mib_s,
                restart_overhead_s: scenario.scheduler.cycle_s + scenario.overheads.pod_start_s + scenario.overheads.runtime_s,
            },
            consolidation: scenario
                .rescheduler
                .consolidation
                .then_some(scenario.rescheduler.underutilization_threshold),
            preemption_rate: scenario.preemption.map(|p| p.rate_per_node_hour),
            horizon: scenario.horizon_s,
            services: scenario
                .services
                .iter()
                .map(|c| ServiceState {
                    config: c.clone(),
                    replicas: Vec::new(),
                })
                .collect(),
            next_pod_id: Scenario::next_pod_id(&pods),
            future: BTreeMap::new(),
            ticks: Vec::new(),
            permit_pending: false,
            qos_violations: BTreeSet::new(),
            evictions: Vec::new(),
            options,
            trace: Vec::new(),
            traced_transitions: 0,
            finished_at: None,
            cluster,
        };

        for group in &scenario.initial_nodes {
            let template: TemplateId = world.cluster.template_id(&group.template)?;
            for _ in 0..group.count {
                let id = world.cluster.add_ready_node(template, 0)?;
                world.node_came_up(id, &mut kernel)?;
            }
        }

        for spec in pods {
            kernel.push(spec.submit_time, EventKind::PodArrival, Payload::Pod { id: spec.id, epoch: 0 })?;
            world.future.insert(spec.id, spec);
        }
        for g in 0..world.services.len() {
            for _ in 0..world.services[g].config.initial_replicas {
                world.submit_replica(0, g)?;
            }
        }
        kernel.push(0, EventKind::SchedulingCycle, Payload::None)?;
        kernel.push(0, EventKind::MonitoringTick, Payload::None)?;

        Ok(Self {
            kernel,
            world,
            name: scenario.name.clone(),
            billing_window: scenario.accounting.window,
        })
    }

    pub fn run(mut self) -> Result<RunRecord> {
        let horizon = self.world.horizon;
        self.kernel.run_until(horizon, &mut self.world)?;
        let w = self.world;
        Ok(RunRecord {
            scenario: self.name,
            seed: w.seed,
            end_time: w.finished_at.unwrap_or(self.kernel.now()),
            events: self.kernel.log().to_vec(),
            stats: self.kernel.stats().clone(),
            launches: w.autoscaler.launches().to_vec(),
            cluster: w.cluster,
            ticks: w.ticks,
            evictions: w.evictions,
            qos_violations: w.qos_violations,
            horizon,
            billing_window: self.billing_window,
            trace: w.trace,
        })
    }
}

pub fn run_scenario_with(scenario: &Scenario, options: RunOptions) -> Result<RunOutcome> {
    let record = Simulation::new(scenario, options)?.run()?;
    let report = metrics::summary(&record)?;
    Ok(RunOutcome { record, report })
}

pub fn run_scenario(scenario: &Scenario) -> Result<RunOutcome> {
    run_scenario_with(scenario, RunOptions::default())
}
