#![allow(dead_code)]

pub mod gen;
pub mod oracle;

use orchestra_core::scenario::Scenario;

pub fn zero_overhead(mut s: Scenario) -> Scenario {
    s.overheads.runtime_s = 0;
    s.overheads.pod_start_s = 0;
    s
}

/// Relative error of `got` against `want`.
pub fn rel(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs()
}
