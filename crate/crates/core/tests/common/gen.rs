//! Small random scenarios for property checks.

use orchestra_core::cluster::{AppClass, Movability, PodId, PodSpec, PricingModel, ResourceVector};
use orchestra_core::kernel::SimRng;
use orchestra_core::scenario::{
    AutoscalerConfig, InlinePods, NodeGroup, PreemptionConfig, RateSpec, Scenario, SchedulerConfig, TemplateConfig,
    WorkloadSource,
};
use orchestra_core::scheduling::SchedulerKind;

const CLASSES: [AppClass; 5] = [
    AppClass::CustomerFacingService,
    AppClass::InternalService,
    AppClass::BatchAnalytics,
    AppClass::PreprocessingTask,
    AppClass::CronJob,
];
const MOVABILITY: [Movability; 3] = [Movability::MovableStateless, Movability::MovableCheckpointable, Movability::Pinned];
const KINDS: [SchedulerKind; 4] = [SchedulerKind::Random, SchedulerKind::Spread, SchedulerKind::BinPack, SchedulerKind::CostAware];

#[derive(Debug, Clone, Copy, Default)]
pub struct Knobs {
    pub scheduler: Option<SchedulerKind>,
    pub consolidation: Option<bool>,
    pub preemption: Option<bool>,
    pub autoscale: Option<bool>,
}

fn range(rng: &mut SimRng, lo: u64, hi: u64) -> u64 {
    lo + rng.index((hi - lo + 1) as usize) as u64
}

fn pick<T: Copy>(rng: &mut SimRng, xs: &[T]) -> T {
    xs[rng.index(xs.len())]
}

fn coin(rng: &mut SimRng) -> bool {
    rng.index(2) == 1
}

pub fn random_scenario(case: u64, knobs: Knobs) -> Scenario {
    let mut rng = SimRng::stream(0x5eed, case);
    let n_templates = range(&mut rng, 1, 3) as usize;
    let templates: Vec<TemplateConfig> = (0..n_templates)
        .map(|i| {
            let pricing = match rng.index(3) {
                0 => PricingModel::on_demand(),
                1 => PricingModel::preemptible(pick(&mut rng, &[0.2, 0.3, 0.5])),
                _ => PricingModel::reserved(range(&mut rng, 1, 50)),
            };
            TemplateConfig {
                name: format!("t{i}"),
                cpu_m: range(&mut rng, 5, 20) * 100,
                mem_mib: range(&mut rng, 1, 8) * 512,
                pricing,
                rate: RateSpec::MicroUsd(range(&mut rng, 100, 2000)),
                billing_period_s: pick(&mut rng, &[30, 60, 300]),
                boot_delay_s: range(&mut rng, 0, 120),
            }
        })
        .collect();
    let min_cpu = templates.iter().map(|t| t.cpu_m).min().unwrap();
    let min_mem = templates.iter().map(|t| t.mem_mib).min().unwrap();

    let initial_nodes = templates
        .iter()
        .map(|t| NodeGroup {
            template: t.name.clone(),
            count: range(&mut rng, 0, 2) as usize,
        })
        .filter(|g| g.count > 0)
        .collect::<Vec<_>>();

    let n_pods = range(&mut rng, 1, 14);
    let pods: Vec<PodSpec> = (0..n_pods)
        .map(|i| {
            let submit = range(&mut rng, 0, 300);
            let duration = range(&mut rng, 10, 600);
            let deadline = coin(&mut rng).then(|| submit + duration + range(&mut rng, 0, 2000));
            PodSpec {
                id: PodId(i),
                submit_time: submit,
                request: ResourceVector::new(range(&mut rng, 1, min_cpu / 50) * 50, range(&mut rng, 1, min_mem / 64) * 64),
                duration_s: duration,
                app_class: pick(&mut rng, &CLASSES),
                movability: pick(&mut rng, &MOVABILITY),
                fault_tolerant: coin(&mut rng),
                deadline,
                usage: vec![],
            }
        })
        .collect();

    let mut scheduler = SchedulerConfig::new(knobs.scheduler.unwrap_or_else(|| pick(&mut rng, &KINDS)));
    scheduler.cycle_s = pick(&mut rng, &[1, 5, 10]);
    let autoscale = knobs.autoscale.unwrap_or_else(|| coin(&mut rng));
    let autoscaler = if autoscale || initial_nodes.is_empty() {
        AutoscalerConfig::Simple {
            template: templates[rng.index(templates.len())].name.clone(),
            provisioning_interval_s: Some(range(&mut rng, 10, 300)),
        }
    } else {
        AutoscalerConfig::Void
    };

    let mut s = Scenario::reference_void(0);
    s.name = format!("random-{case}");
    s.seed = case;
    s.horizon_s = 6000;
    s.templates = templates;
    s.initial_nodes = initial_nodes;
    s.scheduler = scheduler;
    s.autoscaler = autoscaler;
    s.rescheduler.consolidation = knobs.consolidation.unwrap_or_else(|| coin(&mut rng));
    s.overheads.pod_start_s = range(&mut rng, 0, 5);
    s.overheads.runtime_s = range(&mut rng, 0, 30);
    s.preemption = knobs
        .preemption
        .unwrap_or_else(|| coin(&mut rng))
        .then(|| PreemptionConfig {
            rate_per_node_hour: pick(&mut rng, &[0.5, 2.0, 6.0]),
        });
    s.workload = vec![WorkloadSource::Pods(InlinePods { pods })];
    s
}
