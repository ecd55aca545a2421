//! Windowed median/mean estimation of observed resource usage, and the
//! opportunistic reservations derived from it.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::cluster::{AppClass, Pod, PodId, Reservations, ResourceVector};
use crate::error::{Error, Result};
use crate::kernel::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Median,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    pub statistic: Statistic,
    pub window: usize,
    pub safety_margin: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            statistic: Statistic::Median,
            window: 10,
            safety_margin: 1.2,
        }
    }
}

impl EstimatorConfig {
    /// Margin in thousandths, so scaling stays in integer arithmetic.
    fn margin_permille(&self) -> u64 {
        (self.safety_margin * 1000.0).round() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKey {
    Pod(PodId),
    Class(AppClass),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UsageSample {
    pub key: EstimatorKey,
    pub time: SimTime,
    pub usage: ResourceVector,
}

impl UsageSample {
    pub fn new(key: EstimatorKey, time: SimTime, cpu_m: i64, mem_mib: i64) -> Result<Self> {
        Ok(Self {
            key,
            time,
            usage: ResourceVector::try_new(cpu_m, mem_mib)?,
        })
    }
}

fn lower_median(values: &mut [u64]) -> u64 {
    values.sort_unstable();
    values[(values.len() - 1) / 2]
}

fn floor_mean(values: &[u64]) -> u64 {
    values.iter().sum::<u64>() / values.len() as u64
}

/// Applies the statistic per component, scales by the safety margin
/// (rounding up) and caps the result at `cap`. `None` for an empty window.
pub fn estimate_from(samples: &[ResourceVector], config: &EstimatorConfig, cap: ResourceVector) -> Option<ResourceVector> {
    if samples.is_empty() {
        return None;
    }
    let mut cpu: Vec<u64> = samples.iter().map(|s| s.cpu_m).collect();
    let mut mem: Vec<u64> = samples.iter().map(|s| s.mem_mib).collect();
    let (c, m) = match config.statistic {
        Statistic::Median => (lower_median(&mut cpu), lower_median(&mut mem)),
        Statistic::Mean => (floor_mean(&cpu), floor_mean(&mem)),
    };
    let permille = config.margin_permille();
    let scale = |v: u64| (v * permille).div_ceil(1000);
    Some(ResourceVector::new(scale(c), scale(m)).componentwise_min(&cap))
}

#[derive(Debug, Clone, Default)]
pub struct Estimator {
    config: EstimatorConfig,
    samples: BTreeMap<EstimatorKey, VecDeque<(SimTime, ResourceVector)>>,
}

impl Estimator {
    pub fn new(config: EstimatorConfig) -> Result<Self> {
        if config.window == 0 {
            return Err(Error::validation("estimator.window", "must be at least 1"));
        }
        if !(config.safety_margin >= 1.0) {
            return Err(Error::validation("estimator.safety_margin", "must be >= 1"));
        }
        Ok(Self {
            config,
            samples: BTreeMap::new(),
        })
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.config
    }

    pub fn record(&mut self, sample: UsageSample) {
        let window = self.config.window;
        let buf = self.samples.entry(sample.key).or_default();
        buf.push_back((sample.time, sample.usage));
        while buf.len() > window {
            buf.pop_front();
        }
    }

    /// Records an observation under both the pod's own key and its class.
    pub fn record_pod(&mut self, pod: &Pod, time: SimTime, usage: ResourceVector) {
        self.record(UsageSample {
            key: EstimatorKey::Pod(pod.id()),
            time,
            usage,
        });
        self.record(UsageSample {
            key: EstimatorKey::Class(pod.spec.app_class),
            time,
            usage,
        });
    }

    pub fn samples(&self, key: EstimatorKey) -> Vec<ResourceVector> {
        self.samples
            .get(&key)
            .map(|b| b.iter().map(|&(_, u)| u).collect())
            .unwrap_or_default()
    }

    pub fn estimate(&self, key: EstimatorKey, cap: ResourceVector) -> Option<ResourceVector> {
        estimate_from(&self.samples(key), &self.config, cap)
    }
}

/// Pod's own estimate once its window is full, otherwise its class's
/// aggregate, otherwise the request.
impl Reservations for Estimator {
    fn reservation(&self, pod: &Pod) -> ResourceVector {
        let request = pod.request();
        let own = EstimatorKey::Pod(pod.id());
        let own_count = self.samples.get(&own).map_or(0, |b| b.len());
        if own_count >= self.config.window {
            if let Some(e) = self.estimate(own, request) {
                return e;
            }
        }
        self.estimate(EstimatorKey::Class(pod.spec.app_class), request)
            .unwrap_or(request)
    }
}
