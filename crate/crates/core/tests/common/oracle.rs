//! Closed-form slot model of a static cluster: every worker has `slots`
//! identical slots, pods are served FCFS, and the scheduler only binds at
//! multiples of `cycle_s`. Written without any of the simulator's types.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

#[derive(Debug, Clone, Copy)]
pub struct SlotModel {
    pub workers: u64,
    pub slots_per_worker: u64,
    pub pods: u64,
    pub interarrival_s: u64,
    /// Service time per pod including any runtime overhead.
    pub service_s: u64,
    pub cycle_s: u64,
}

impl SlotModel {
    pub fn reference(workers: u64, runtime_overhead_s: u64, cycle_s: u64) -> Self {
        Self {
            workers,
            slots_per_worker: 750 / 250,
            pods: 100,
            interarrival_s: 10,
            service_s: 1000 + runtime_overhead_s,
            cycle_s,
        }
    }

    pub fn arrival(&self, i: u64) -> u64 {
        i * self.interarrival_s
    }

    /// Bind time of every pod, in submission order.
    pub fn bind_times(&self) -> Vec<u64> {
        let mut free: BinaryHeap<Reverse<u64>> = (0..self.workers * self.slots_per_worker).map(|_| Reverse(0)).collect();
        let mut out = Vec::with_capacity(self.pods as usize);
        let mut last = 0;
        for i in 0..self.pods {
            let Reverse(slot) = free.pop().expect("at least one slot");
            let ready = self.arrival(i).max(slot).max(last);
            let t = ready.div_ceil(self.cycle_s) * self.cycle_s;
            out.push(t);
            free.push(Reverse(t + self.service_s));
            last = t;
        }
        out
    }

    pub fn mean_delay_s(&self) -> f64 {
        let b = self.bind_times();
        let total: u64 = b.iter().enumerate().map(|(i, t)| t - self.arrival(i as u64)).sum();
        total as f64 / b.len() as f64
    }

    pub fn duration_s(&self) -> u64 {
        *self.bind_times().last().expect("pods") - self.arrival(0)
    }

    /// Pods submitted but not yet bound at the end of instant `t`.
    pub fn backlog_at(&self, t: u64) -> u64 {
        let b = self.bind_times();
        (0..self.pods)
            .filter(|&i| self.arrival(i) <= t && b[i as usize] > t)
            .count() as u64
    }

    /// Largest backlog over sampling instants `0, step, 2*step, ...` up to
    /// the last binding.
    pub fn peak_backlog(&self, step: u64) -> u64 {
        let end = *self.bind_times().last().expect("pods");
        (0..=end / step + 1).map(|k| self.backlog_at(k * step)).max().unwrap_or(0)
    }

    /// Pods whose run has finished by the end of instant `t`.
    pub fn completed_by(&self, t: u64) -> u64 {
        self.bind_times().iter().filter(|&&b| b + self.service_s <= t).count() as u64
    }
}
