//! Scenario files: one JSON document describing the cluster, policies,
//! workload and run parameters. Parsing reports the JSON path of the
//! offending field; [`Scenario::validate`] adds the semantic checks serde
//! cannot express.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::accounting::{BillingWindow, FITTED_RATE_MICRO_USD_PER_MIN, LIST_RATE_MICRO_USD_PER_MIN};
use crate::cluster::{AppClass, Movability, NodeTemplate, PodId, PodSpec, PricingKind, PricingModel, ResourceVector, UsagePoint};
use crate::elasticity::{HpaConfig, LoadSignal};
use crate::error::{Error, Result};
use crate::estimator::EstimatorConfig;
use crate::kernel::SimTime;
use crate::scheduling::{CapacityMode, SchedulerKind, SchedulerPolicy};
use crate::workload;

/// Billing rate: a number of micro-dollars per period, or a named preset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RateSpec {
    MicroUsd(u64),
    Preset(RatePreset),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatePreset {
    /// 792 µ$/min, fitted to the reference cost table.
    Fitted,
    /// $0.011/min list price.
    List,
}

impl RateSpec {
    pub fn micro_usd(self) -> u64 {
        match self {
            RateSpec::MicroUsd(v) => v,
            RateSpec::Preset(RatePreset::Fitted) => FITTED_RATE_MICRO_USD_PER_MIN,
            RateSpec::Preset(RatePreset::List) => LIST_RATE_MICRO_USD_PER_MIN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateConfig {
    pub name: String,
    pub cpu_m: u64,
    pub mem_mib: u64,
    #[serde(default = "PricingModel::on_demand")]
    pub pricing: PricingModel,
    pub rate: RateSpec,
    #[serde(default = "default_billing_period")]
    pub billing_period_s: u64,
    #[serde(default = "default_boot_delay")]
    pub boot_delay_s: u64,
}

fn default_billing_period() -> u64 {
    60
}

fn default_boot_delay() -> u64 {
    120
}

impl TemplateConfig {
    pub fn to_template(&self) -> NodeTemplate {
        NodeTemplate {
            name: self.name.clone(),
            capacity: ResourceVector::new(self.cpu_m, self.mem_mib),
            pricing: self.pricing,
            rate_micro_usd: self.rate.micro_usd(),
            billing_period_s: self.billing_period_s,
            boot_delay_s: self.boot_delay_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeGroup {
    pub template: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedulerConfig {
    pub kind: SchedulerKind,
    #[serde(default)]
    pub capacity_mode: CapacityMode,
    #[serde(default = "default_cycle")]
    pub cycle_s: u64,
    #[serde(default = "default_one")]
    pub mixing_penalty: u64,
    #[serde(default)]
    pub on_demand_penalty: u64,
}

fn default_cycle() -> u64 {
    5
}

fn default_one() -> u64 {
    1
}

impl SchedulerConfig {
    pub fn new(kind: SchedulerKind) -> Self {
        Self {
            kind,
            capacity_mode: CapacityMode::Requested,
            cycle_s: default_cycle(),
            mixing_penalty: 1,
            on_demand_penalty: 0,
        }
    }

    pub fn policy(&self) -> SchedulerPolicy {
        SchedulerPolicy {
            kind: self.kind,
            capacity_mode: self.capacity_mode,
            mixing_penalty: self.mixing_penalty,
            on_demand_penalty: self.on_demand_penalty,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AutoscalerConfig {
    Void,
    Simple {
        template: String,
        /// Defaults to the template's boot delay plus 30 s.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        provisioning_interval_s: Option<u64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReschedulerConfig {
    /// Review every node at each of its billing boundaries.
    #[serde(default)]
    pub consolidation: bool,
    #[serde(default = "default_threshold")]
    pub underutilization_threshold: f64,
    #[serde(default = "default_checkpoint_rate")]
    pub checkpoint_rate_mib_s: u64,
}

fn default_threshold() -> f64 {
    0.7
}

fn default_checkpoint_rate() -> u64 {
    256
}

impl Default for ReschedulerConfig {
    fn default() -> Self {
        Self {
            consolidation: false,
            underutilization_threshold: default_threshold(),
            checkpoint_rate_mib_s: default_checkpoint_rate(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overheads {
    /// Bind to container start.
    #[serde(default)]
    pub pod_start_s: u64,
    /// Added to every run: container start-up plus completion detection.
    #[serde(default = "default_runtime_overhead")]
    pub runtime_s: u64,
}

fn default_runtime_overhead() -> u64 {
    25
}

impl Default for Overheads {
    fn default() -> Self {
        Self {
            pod_start_s: 0,
            runtime_s: default_runtime_overhead(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccountingConfig {
    #[serde(default)]
    pub window: BillingWindow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WorkloadSource {
    HomogeneousBatch(BatchSpec),
    /// CSV or JSON-lines trace; relative paths resolve against the
    /// scenario file's directory.
    Trace(TraceSpec),
    Pods(InlinePods),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchSpec {
    pub count: usize,
    pub interarrival_s: u64,
    pub cpu_m: u64,
    pub mem_mib: u64,
    pub duration_s: u64,
    #[serde(default)]
    pub first_id: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSpec {
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlinePods {
    pub pods: Vec<PodSpec>,
}

/// Internally tagged enums are buffered before their payload is parsed, so
/// a failure inside one is reported at the enum itself. Re-parse a workload
/// entry's payload on its own to recover the inner path.
fn refine_workload_error(text: &str, path: &str) -> Option<Error> {
    let index: usize = path.strip_prefix("workload[")?.strip_suffix(']')?.parse().ok()?;
    let doc: serde_json::Value = serde_json::from_str(text).ok()?;
    let mut entry = doc.get("workload")?.get(index)?.as_object()?.clone();
    let kind = entry.remove("kind")?;
    let payload = serde_json::Value::Object(entry);
    let inner = match kind.as_str()? {
        "homogeneous_batch" => serde_path_to_error::deserialize::<_, BatchSpec>(payload).err()?.path().to_string(),
        "trace" => serde_path_to_error::deserialize::<_, TraceSpec>(payload).err()?.path().to_string(),
        "pods" => serde_path_to_error::deserialize::<_, InlinePods>(payload).err()?.path().to_string(),
        _ => return None,
    };
    Some(Error::validation(format!("{path}.{inner}"), "invalid value"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplicaSpec {
    pub cpu_m: u64,
    pub mem_mib: u64,
    #[serde(default = "default_service_class")]
    pub app_class: AppClass,
    #[serde(default = "default_service_movability")]
    pub movability: Movability,
    #[serde(default)]
    pub fault_tolerant: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub usage: Vec<UsagePoint>,
}

fn default_service_class() -> AppClass {
    AppClass::CustomerFacingService
}

fn default_service_movability() -> Movability {
    Movability::MovableStateless
}

/// A horizontally autoscaled service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceGroupConfig {
    pub name: String,
    pub replica: ReplicaSpec,
    #[serde(default = "default_one_usize")]
    pub initial_replicas: usize,
    /// Offered load in replica-equivalents, as `[[t_s, load], ...]`.
    pub load: LoadSignal,
    pub hpa: HpaConfig,
}

fn default_one_usize() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreemptionConfig {
    pub rate_per_node_hour: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_horizon")]
    pub horizon_s: SimTime,
    pub templates: Vec<TemplateConfig>,
    pub initial_nodes: Vec<NodeGroup>,
    pub scheduler: SchedulerConfig,
    pub autoscaler: AutoscalerConfig,
    #[serde(default)]
    pub rescheduler: ReschedulerConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub overheads: Overheads,
    #[serde(default = "default_timestep")]
    pub monitoring_timestep_s: u64,
    #[serde(default)]
    pub accounting: AccountingConfig,
    pub workload: Vec<WorkloadSource>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub services: Vec<ServiceGroupConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preemption: Option<PreemptionConfig>,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn default_horizon() -> SimTime {
    86_400
}

fn default_timestep() -> u64 {
    20
}

fn check(ok: bool, path: impl Into<String>, message: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::validation(path, message))
    }
}

impl Scenario {
    /// Parses and validates a scenario document.
    pub fn from_json_str(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let message = e.into_inner().to_string();
            match refine_workload_error(text, &path) {
                Some(Error::Validation { path, .. }) => Error::Validation { path, message },
                _ => Error::validation(if path.is_empty() { "$".into() } else { path }, message),
            }
        })?;
        scenario.base_dir = base_dir.map(Path::to_path_buf);
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text, path.parent())
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn template_index(&self, name: &str) -> Option<usize> {
        self.templates.iter().position(|t| t.name == name)
    }

    pub fn node_templates(&self) -> Vec<NodeTemplate> {
        self.templates.iter().map(TemplateConfig::to_template).collect()
    }

    /// Provisioning interval of the simple autoscaler, defaulted if unset.
    pub fn provisioning_interval(&self) -> Option<u64> {
        match &self.autoscaler {
            AutoscalerConfig::Void => None,
            AutoscalerConfig::Simple {
                template,
                provisioning_interval_s,
            } => provisioning_interval_s.or_else(|| {
                self.template_index(template)
                    .map(|i| self.templates[i].boot_delay_s + 30)
            }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        check(!self.name.trim().is_empty(), "name", "must not be empty")?;
        check(!self.templates.is_empty(), "templates", "at least one template is required")?;
        let mut names = BTreeSet::new();
        for (i, t) in self.templates.iter().enumerate() {
            let p = format!("templates[{i}]");
            check(names.insert(t.name.as_str()), format!("{p}.name"), "duplicate template name")?;
            check(t.billing_period_s > 0, format!("{p}.billing_period_s"), "must be positive")?;
            let d = t.pricing.discount_factor;
            check(d > 0.0 && d <= 1.0, format!("{p}.pricing.discount_factor"), "must be in (0, 1]")?;
            check(
                t.pricing.kind == PricingKind::Preemptible || d == 1.0,
                format!("{p}.pricing.discount_factor"),
                "must be 1 for non-preemptible pricing",
            )?;
        }
        for (i, g) in self.initial_nodes.iter().enumerate() {
            check(
                self.template_index(&g.template).is_some(),
                format!("initial_nodes[{i}].template"),
                "unknown template",
            )?;
        }
        if let AutoscalerConfig::Simple {
            template,
            provisioning_interval_s,
        } = &self.autoscaler
        {
            check(self.template_index(template).is_some(), "autoscaler.template", "unknown template")?;
            check(
                provisioning_interval_s.is_none_or(|v| v > 0),
                "autoscaler.provisioning_interval_s",
                "must be positive",
            )?;
        }
        check(self.scheduler.cycle_s > 0, "scheduler.cycle_s", "must be positive")?;
        check(self.monitoring_timestep_s > 0, "monitoring_timestep_s", "must be positive")?;
        let th = self.rescheduler.underutilization_threshold;
        check(th > 0.0 && th <= 1.0, "rescheduler.underutilization_threshold", "must be in (0, 1]")?;
        check(self.rescheduler.checkpoint_rate_mib_s > 0, "rescheduler.checkpoint_rate_mib_s", "must be positive")?;
        check(self.estimator.window >= 1, "estimator.window", "must be at least 1")?;
        check(self.estimator.safety_margin >= 1.0, "estimator.safety_margin", "must be >= 1")?;
        if let Some(p) = &self.preemption {
            check(
                p.rate_per_node_hour.is_finite() && p.rate_per_node_hour >= 0.0,
                "preemption.rate_per_node_hour",
                "must be a non-negative number",
            )?;
        }
        for (i, s) in self.services.iter().enumerate() {
            let p = format!("services[{i}]");
            check(s.initial_replicas >= 1, format!("{p}.initial_replicas"), "must be at least 1")?;
            check(s.hpa.upper > 0.0, format!("{p}.hpa.upper"), "must be positive")?;
            check(
                s.hpa.lower.is_none_or(|l| l >= 0.0 && l < s.hpa.upper),
                format!("{p}.hpa.lower"),
                "must be in [0, upper)",
            )?;
            check(s.hpa.min_replicas <= s.hpa.max_replicas, format!("{p}.hpa.min_replicas"), "exceeds max_replicas")?;
        }
        for (i, w) in self.workload.iter().enumerate() {
            if let WorkloadSource::HomogeneousBatch(b) = w {
                check(b.count >= 1, format!("workload[{i}].count"), "must be at least 1")?;
            }
        }
        // Inline and batch sources can be checked without touching the
        // filesystem; traces are checked when loaded.
        if !self.workload.iter().any(|w| matches!(w, WorkloadSource::Trace(_))) {
            self.pods()?;
        }
        Ok(())
    }

    /// Materializes the workload, sorted by (submit time, id).
    pub fn pods(&self) -> Result<Vec<PodSpec>> {
        let mut pods = Vec::new();
        for (i, w) in self.workload.iter().enumerate() {
            match w {
                WorkloadSource::HomogeneousBatch(b) => pods.extend(
                    workload::homogeneous_batch(
                        b.count,
                        b.interarrival_s,
                        ResourceVector::new(b.cpu_m, b.mem_mib),
                        b.duration_s,
                        b.first_id,
                    )
                    .map_err(|_| Error::validation(format!("workload[{i}].count"), "must be at least 1"))?,
                ),
                WorkloadSource::Trace(TraceSpec { path }) => {
                    let full = match &self.base_dir {
                        Some(dir) if path.is_relative() => dir.join(path),
                        _ => path.clone(),
                    };
                    pods.extend(workload::load_trace(&full)?);
                }
                WorkloadSource::Pods(InlinePods { pods: inline }) => pods.extend(inline.iter().cloned()),
            }
        }
        let mut seen = BTreeSet::new();
        for p in &pods {
            check(seen.insert(p.id), format!("workload.pods[{}]", p.id.0), "duplicate pod id")?;
            check(p.submit_time <= self.horizon_s, "horizon_s", "precedes the last arrival")?;
        }
        pods.sort_by_key(|p| (p.submit_time, p.id));
        Ok(pods)
    }

    /// First id free for pods created during the run (service replicas).
    pub fn next_pod_id(pods: &[PodSpec]) -> u64 {
        pods.iter().map(|p| p.id.0 + 1).max().unwrap_or(0)
    }

    /// The reference worker: 1 vCPU / 4 GB less system reservations.
    pub fn reference_template() -> TemplateConfig {
        TemplateConfig {
            name: "m2.small".into(),
            cpu_m: 750,
            mem_mib: 3788,
            pricing: PricingModel::on_demand(),
            rate: RateSpec::Preset(RatePreset::Fitted),
            billing_period_s: 60,
            boot_delay_s: 120,
        }
    }

    /// 100 batch pods, one every 10 s, each 250 m / 64 MiB for 1000 s.
    pub fn reference_workload() -> WorkloadSource {
        WorkloadSource::HomogeneousBatch(BatchSpec {
            count: 100,
            interarrival_s: 10,
            cpu_m: 250,
            mem_mib: 64,
            duration_s: 1000,
            first_id: 0,
        })
    }

    fn reference(name: String, workers: usize, autoscaler: AutoscalerConfig) -> Self {
        Scenario {
            name,
            seed: 42,
            horizon_s: default_horizon(),
            templates: vec![Self::reference_template()],
            initial_nodes: vec![NodeGroup {
                template: "m2.small".into(),
                count: workers,
            }],
            scheduler: SchedulerConfig::new(SchedulerKind::Random),
            autoscaler,
            rescheduler: ReschedulerConfig::default(),
            estimator: EstimatorConfig::default(),
            overheads: Overheads::default(),
            monitoring_timestep_s: default_timestep(),
            accounting: AccountingConfig::default(),
            workload: vec![Self::reference_workload()],
            services: vec![],
            preemption: None,
            base_dir: None,
        }
    }

    /// Random scheduler, void autoscaler, a static cluster of `workers`.
    pub fn reference_void(workers: usize) -> Self {
        Self::reference(format!("void{workers}"), workers, AutoscalerConfig::Void)
    }

    /// Random scheduler, simple autoscaler, 10 initial workers.
    pub fn reference_simple() -> Self {
        Self::reference(
            "simple".into(),
            10,
            AutoscalerConfig::Simple {
                template: "m2.small".into(),
                provisioning_interval_s: Some(150),
            },
        )
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Finds a pod in a spec list.
pub fn find_pod(pods: &[PodSpec], id: PodId) -> Option<&PodSpec> {
    pods.iter().find(|p| p.id == id)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc() -> serde_json::Value {
        serde_json::from_str(&Scenario::reference_void(10).to_json_pretty()).unwrap()
    }

    fn parse(v: &serde_json::Value) -> Result<Scenario> {
        Scenario::from_json_str(&v.to_string(), None)
    }

    fn path_of(err: Error) -> String {
        match err {
            Error::Validation { path, .. } => path,
            e => panic!("not a validation error: {e}"),
        }
    }

    #[test]
    fn reference_round_trips() {
        for s in [Scenario::reference_void(10), Scenario::reference_simple()] {
            assert_eq!(Scenario::from_json_str(&s.to_json_pretty(), None).unwrap(), s);
        }
    }

    #[test]
    fn negative_cpu_names_the_field() {
        let mut v = doc();
        v["workload"][0]["cpu_m"] = (-5).into();
        assert_eq!(path_of(parse(&v).unwrap_err()), "workload[0].cpu_m");
    }

    #[test]
    fn unknown_policy_names_the_field() {
        let mut v = doc();
        v["scheduler"]["kind"] = "fastest".into();
        assert_eq!(path_of(parse(&v).unwrap_err()), "scheduler.kind");
        let mut v = doc();
        v["autoscaler"]["kind"] = "magic".into();
        assert!(path_of(parse(&v).unwrap_err()).starts_with("autoscaler"));
    }

    #[test]
    fn missing_template_is_reported() {
        let mut v = doc();
        v["initial_nodes"][0]["template"] = "m9.huge".into();
        assert_eq!(path_of(parse(&v).unwrap_err()), "initial_nodes[0].template");
        let mut v = doc();
        v["autoscaler"] = serde_json::json!({"kind": "simple", "template": "nope"});
        assert_eq!(path_of(parse(&v).unwrap_err()), "autoscaler.template");
    }

    #[test]
    fn semantic_checks() {
        let mut v = doc();
        v["templates"][0]["billing_period_s"] = 0.into();
        assert_eq!(path_of(parse(&v).unwrap_err()), "templates[0].billing_period_s");
        let mut v = doc();
        v["horizon_s"] = 500.into();
        assert_eq!(path_of(parse(&v).unwrap_err()), "horizon_s");
        let mut v = doc();
        v["templates"][0]["pricing"] = serde_json::json!({"kind": "on_demand", "discount_factor": 0.5});
        assert_eq!(path_of(parse(&v).unwrap_err()), "templates[0].pricing.discount_factor");
        let mut v = doc();
        v["unexpected"] = 1.into();
        assert!(parse(&v).is_err());
    }

    #[test]
    fn rate_presets() {
        let mut v = doc();
        v["templates"][0]["rate"] = "list".into();
        assert_eq!(parse(&v).unwrap().node_templates()[0].rate_micro_usd, 11_000);
        v["templates"][0]["rate"] = 1234.into();
        assert_eq!(parse(&v).unwrap().node_templates()[0].rate_micro_usd, 1234);
    }

    #[test]
    fn provisioning_interval_defaults_to_boot_plus_contingency() {
        let mut s = Scenario::reference_simple();
        s.autoscaler = AutoscalerConfig::Simple {
            template: "m2.small".into(),
            provisioning_interval_s: None,
        };
        assert_eq!(s.provisioning_interval(), Some(150));
        assert_eq!(Scenario::reference_void(10).provisioning_interval(), None);
    }

    #[test]
    fn reference_workload_materializes() {
        let pods = Scenario::reference_void(16).pods().unwrap();
        assert_eq!(pods.len(), 100);
        assert_eq!(Scenario::next_pod_id(&pods), 100);
        assert!(find_pod(&pods, PodId(99)).is_some_and(|p| p.submit_time == 990));
    }
}
