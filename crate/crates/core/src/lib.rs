//! Deterministic discrete-event simulator of container orchestration on
//! elastic cloud clusters.
//!
//! A run is driven by [`sim::Simulation`]: a [`kernel::Kernel`] dispatches
//! timestamped events to the world state in [`cluster`], consulting the
//! pluggable scheduling ([`scheduling`]), autoscaling ([`elasticity`]),
//! consolidation ([`rescheduling`]) and usage-estimation ([`estimator`])
//! policies. [`metrics`] and [`accounting`] turn the resulting log into a
//! [`metrics::RunReport`].
//!
//! ```
//! use orchestra_core::scenario::Scenario;
//! use orchestra_core::sim::run_scenario;
//!
//! let scenario = Scenario::reference_void(22);
//! let outcome = run_scenario(&scenario).unwrap();
//! assert_eq!(outcome.report.pod_count, 100);
//! ```

pub mod accounting;
pub mod batch;
pub mod cluster;
pub mod elasticity;
pub mod error;
pub mod estimator;
pub mod kernel;
pub mod metrics;
pub mod rescheduling;
pub mod scenario;
pub mod scheduling;
pub mod sim;
pub mod workload;

pub use error::{Error, Result};
pub use kernel::SimTime;
