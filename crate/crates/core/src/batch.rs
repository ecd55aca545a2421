//! Many independent runs at once: comparison matrices and seed sweeps.
//!
//! Each run owns its kernel and RNG, so results do not depend on how runs
//! are spread over threads. With the `parallel` feature off, `run_many`
//! falls back to the sequential loop.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::Result;
use crate::scenario::Scenario;
use crate::sim::{run_scenario_with, RunOptions, RunOutcome};

pub fn run_many_sequential(scenarios: &[Scenario], options: RunOptions) -> Vec<Result<RunOutcome>> {
    scenarios.iter().map(|s| run_scenario_with(s, options)).collect()
}

#[cfg(feature = "parallel")]
pub fn run_many(scenarios: &[Scenario], options: RunOptions) -> Vec<Result<RunOutcome>> {
    scenarios.par_iter().map(|s| run_scenario_with(s, options)).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn run_many(scenarios: &[Scenario], options: RunOptions) -> Vec<Result<RunOutcome>> {
    run_many_sequential(scenarios, options)
}

/// Runs `f` over `0..n`, in parallel when available, keeping index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// The same scenario under each seed.
pub fn seed_sweep(scenario: &Scenario, seeds: &[u64]) -> Vec<Scenario> {
    seeds.iter().map(|&s| scenario.clone().with_seed(s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree() {
        let scenarios = seed_sweep(&Scenario::reference_void(16), &[1, 2, 3]);
        let a = run_many(&scenarios, RunOptions::default());
        let b = run_many_sequential(&scenarios, RunOptions::default());
        for (x, y) in a.into_iter().zip(b) {
            assert_eq!(x.unwrap().report, y.unwrap().report);
        }
    }

    #[test]
    fn map_indexed_keeps_order() {
        assert_eq!(map_indexed(5, |i| i * 2), vec![0, 2, 4, 6, 8]);
    }
}
