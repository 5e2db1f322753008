//! Deadline- and battery-aware task offloading in a UAV + edge network.
//!
//! A fleet of battery-powered UAVs receives jobs from field sensors and can
//! process each job locally, delegate it to a peer UAV, or push it to a
//! grid-powered edge server. This crate provides:
//!
//! * [`model`] — configuration schema, domain types, validation;
//! * [`energy`] — hover power, battery accounting, battery standings;
//! * [`sim`] — a deterministic event-driven simulator with seeded
//!   exponential workloads;
//! * [`policies`] — the decision interface plus round-robin and
//!   energy/queue-aware heuristics;
//! * [`qlearn`] — independent tabular Q-learning agents per UAV, with
//!   training, greedy evaluation, and table persistence;
//! * [`exact`] — an interval-indexed exact formulation with a
//!   branch-and-bound solver, feasibility validator, and LP export;
//! * [`experiments`] — seed sweeps, KPI aggregation, and comparison tables.
//!
//! All numeric code is generic over [`scalar::Scalar`] (`f32` or `f64`);
//! the aliases below pin the double-precision instantiation the CLI uses.
//!
//! ```
//! use offloadsim::model::reference_config;
//! use offloadsim::policies::QhefPolicy;
//! use offloadsim::sim::{generate_workload, run};
//!
//! let mut cfg = reference_config::<f64>();
//! cfg.horizon = 0.5;
//! let workload = generate_workload(&cfg, 42);
//! let mut policy = QhefPolicy::new(cfg.n_uavs, cfg.energy.battery_capacity);
//! let metrics = run(&cfg, &workload, &mut policy);
//! assert_eq!(metrics.total_tasks, workload.len());
//! assert!(metrics.min_remaining_pct() <= 100.0);
//! ```

pub mod energy;
pub mod exact;
pub mod experiments;
pub mod model;
pub mod policies;
pub mod qlearn;
pub mod scalar;
pub mod sim;

pub use scalar::Scalar;

/// Double-precision configuration, as parsed from JSON config files.
pub type SimConfig64 = model::SimConfig<f64>;
/// Double-precision run metrics.
pub type RunMetrics64 = sim::RunMetrics<f64>;
/// Double-precision Q-table.
pub type QTable64 = qlearn::QTable<f64>;
/// Double-precision optimization instance.
pub type IlpInstance64 = exact::IlpInstance<f64>;
