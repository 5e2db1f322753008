//! Multi-seed experiment orchestration: paired batches per policy, KPI
//! aggregation with ordering checks, the exact-vs-learned comparison table,
//! and plot-ready CSV emitters.

use std::fmt::Write as _;
use std::time::Duration;

use serde::Serialize;
use thiserror::Error;

use crate::exact::{build_instance, discretize_workload, solution_dump, solve, ExactError};
use crate::model::SimConfig;
use crate::policies::{HefPolicy, LocalOnly, Policy, QhefPolicy, RoundRobinPolicy};
use crate::qlearn::{GreedyTablePolicy, QTable};
use crate::scalar::Scalar;
use crate::sim::{generate_workload, mix_seed, run, RunMetrics};

/// Salt separating policy randomness from workload randomness.
const POLICY_SEED_SALT: u64 = 0x706f_6c69_6379;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("comparison needs at least one non-empty policy batch")]
    Empty,
    #[error("policy batches must share one seed set ({0})")]
    SeedMismatch(String),
}

/// Which policy a batch should run.
#[derive(Clone, Copy)]
pub enum PolicySpec<'a, T> {
    RoundRobin,
    Hef,
    Qhef,
    LocalOnly,
    /// Greedy evaluation of trained tables, one per UAV.
    Greedy(&'a [QTable<T>]),
}

impl<T: Scalar> PolicySpec<'_, T> {
    pub fn label(&self) -> &'static str {
        match self {
            PolicySpec::RoundRobin => "rr",
            PolicySpec::Hef => "hef",
            PolicySpec::Qhef => "qhef",
            PolicySpec::LocalOnly => "local",
            PolicySpec::Greedy(_) => "qlearn",
        }
    }
}

fn make_policy<'a, T: Scalar>(
    cfg: &'a SimConfig<T>,
    spec: PolicySpec<'a, T>,
    seed: u64,
) -> Box<dyn Policy<T> + 'a> {
    match spec {
        PolicySpec::RoundRobin => Box::new(RoundRobinPolicy::new(cfg.n_uavs, cfg.n_mec)),
        PolicySpec::Hef => Box::new(HefPolicy::new(
            cfg.n_uavs,
            cfg.n_mec,
            cfg.energy.battery_capacity,
            seed,
        )),
        PolicySpec::Qhef => Box::new(QhefPolicy::new(cfg.n_uavs, cfg.energy.battery_capacity)),
        PolicySpec::LocalOnly => Box::new(LocalOnly),
        PolicySpec::Greedy(tables) => Box::new(GreedyTablePolicy::new(cfg, tables)),
    }
}

/// One simulation run per seed, each with its independently generated
/// workload. For a fixed seed every policy sees the identical arrival
/// sequence, so batches across policies are paired.
pub fn run_batch<T: Scalar>(
    cfg: &SimConfig<T>,
    spec: PolicySpec<'_, T>,
    seeds: &[u64],
) -> Vec<RunMetrics<T>> {
    seeds
        .iter()
        .map(|&seed| {
            let workload = generate_workload(cfg, seed);
            let mut policy = make_policy(cfg, spec, mix_seed(seed, POLICY_SEED_SALT));
            let mut metrics = run(cfg, &workload, policy.as_mut());
            metrics.seed = seed;
            metrics
        })
        .collect()
}

/// Per-policy aggregate of the two KPIs over the seed set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicySummary<T> {
    pub policy: String,
    pub mean_min_remaining_pct: T,
    pub stddev_min_remaining_pct: T,
    pub mean_violation_pct: T,
    pub stddev_violation_pct: T,
    pub mean_violations: T,
    pub mean_remaining_pct_per_uav: Vec<T>,
}

/// One evaluated cross-policy ordering claim.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderingCheck {
    pub name: String,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport<T> {
    pub seeds: Vec<u64>,
    pub policies: Vec<PolicySummary<T>>,
    /// Soft assertions; the orderings that apply to the policies present.
    pub orderings: Vec<OrderingCheck>,
}

fn mean<T: Scalar>(values: &[T]) -> T {
    if values.is_empty() {
        T::zero()
    } else {
        values.iter().copied().sum::<T>() / T::from_count(values.len())
    }
}

fn sample_stddev<T: Scalar>(values: &[T]) -> T {
    if values.len() < 2 {
        return T::zero();
    }
    let m = mean(values);
    let ss: T = values.iter().map(|&v| (v - m) * (v - m)).sum();
    (ss / T::from_count(values.len() - 1)).sqrt()
}

fn summarize<T: Scalar>(batch: &[RunMetrics<T>]) -> PolicySummary<T> {
    let min_rem: Vec<T> = batch.iter().map(|m| m.min_remaining_pct()).collect();
    let viol_pct: Vec<T> = batch.iter().map(|m| m.violation_pct()).collect();
    let violations: Vec<T> = batch
        .iter()
        .map(|m| T::from_count(m.violations_total))
        .collect();
    let n_uavs = batch[0].remaining_pct_per_uav.len();
    let mean_remaining_pct_per_uav = (0..n_uavs)
        .map(|u| {
            mean(
                &batch
                    .iter()
                    .map(|m| m.remaining_pct_per_uav[u])
                    .collect::<Vec<_>>(),
            )
        })
        .collect();
    PolicySummary {
        policy: batch[0].policy.clone(),
        mean_min_remaining_pct: mean(&min_rem),
        stddev_min_remaining_pct: sample_stddev(&min_rem),
        mean_violation_pct: mean(&viol_pct),
        stddev_violation_pct: sample_stddev(&viol_pct),
        mean_violations: mean(&violations),
        mean_remaining_pct_per_uav,
    }
}

/// Aggregates paired batches and evaluates the cross-policy orderings that
/// apply. All batches must cover the same seeds in the same order.
pub fn compare<T: Scalar>(
    batches: &[Vec<RunMetrics<T>>],
) -> Result<ComparisonReport<T>, ExperimentError> {
    if batches.is_empty() || batches.iter().any(Vec::is_empty) {
        return Err(ExperimentError::Empty);
    }
    let seeds: Vec<u64> = batches[0].iter().map(|m| m.seed).collect();
    for batch in batches {
        let these: Vec<u64> = batch.iter().map(|m| m.seed).collect();
        if these != seeds {
            return Err(ExperimentError::SeedMismatch(format!(
                "{} ran {:?}, expected {:?}",
                batch[0].policy, these, seeds
            )));
        }
    }
    let policies: Vec<PolicySummary<T>> = batches.iter().map(|b| summarize(b)).collect();
    let find = |name: &str| policies.iter().find(|p| p.policy == name);

    let mut orderings = Vec::new();
    if let Some(q) = find("qlearn") {
        let baselines: Vec<&PolicySummary<T>> =
            policies.iter().filter(|p| p.policy != "qlearn").collect();
        if !baselines.is_empty() {
            orderings.push(OrderingCheck {
                name: "qlearn_min_energy_ge_baselines".to_string(),
                holds: baselines
                    .iter()
                    .all(|b| q.mean_min_remaining_pct >= b.mean_min_remaining_pct),
            });
            orderings.push(OrderingCheck {
                name: "qlearn_violations_le_baselines".to_string(),
                holds: baselines
                    .iter()
                    .all(|b| q.mean_violation_pct <= b.mean_violation_pct),
            });
        }
    }
    if let (Some(qhef), Some(rr), Some(hef)) = (find("qhef"), find("rr"), find("hef")) {
        orderings.push(OrderingCheck {
            name: "qhef_violations_le_rr_hef".to_string(),
            holds: qhef.mean_violation_pct <= rr.mean_violation_pct
                && qhef.mean_violation_pct <= hef.mean_violation_pct,
        });
    }
    Ok(ComparisonReport {
        seeds,
        policies,
        orderings,
    })
}

/// One row of the exact-vs-learned table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IlpComparisonRow<T> {
    pub label: String,
    pub remaining_pct_per_uav: Vec<T>,
    pub min_remaining_pct: T,
    pub violations: usize,
    /// `Some(false)` marks a solver row cut off by the time budget; the
    /// learned row carries `None`.
    pub proven_optimal: Option<bool>,
}

/// Solves the configured scenario exactly for each weight and evaluates the
/// trained tables greedily on the same discretized workload trace. Meant
/// for desk-scale configurations (short horizons).
pub fn ilp_comparison<T: Scalar>(
    cfg: &SimConfig<T>,
    tables: &[QTable<T>],
    weights: &[T],
    time_budget: Option<Duration>,
) -> Result<Vec<IlpComparisonRow<T>>, ExactError> {
    let workload = discretize_workload(cfg, &generate_workload(cfg, cfg.seed))?;
    let mut rows = Vec::new();
    for &w in weights {
        let mut weighted = cfg.clone();
        weighted.weight = w;
        let instance = build_instance(&weighted, &workload)?;
        let outcome = solve(&instance, time_budget)?;
        let dump = solution_dump(&instance, &outcome);
        rows.push(IlpComparisonRow {
            label: format!("exact(weight={w})"),
            min_remaining_pct: dump
                .remaining_pct_per_uav
                .iter()
                .copied()
                .fold(T::infinity(), T::min),
            remaining_pct_per_uav: dump.remaining_pct_per_uav,
            violations: dump.violations_total,
            proven_optimal: Some(outcome.proven_optimal),
        });
    }
    let mut greedy = GreedyTablePolicy::new(cfg, tables);
    let metrics = run(cfg, &workload, &mut greedy);
    rows.push(IlpComparisonRow {
        label: "qlearn".to_string(),
        min_remaining_pct: metrics.min_remaining_pct(),
        remaining_pct_per_uav: metrics.remaining_pct_per_uav.clone(),
        violations: metrics.violations_total,
        proven_optimal: None,
    });
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Plot-ready emitters
// ---------------------------------------------------------------------------

/// One row per (policy, seed, UAV).
pub fn energy_csv<T: Scalar>(batches: &[Vec<RunMetrics<T>>]) -> String {
    let mut out = String::from("policy,seed,uav,remaining_pct\n");
    for batch in batches {
        for m in batch {
            for (u, pct) in m.remaining_pct_per_uav.iter().enumerate() {
                writeln!(out, "{},{},{},{}", m.policy, m.seed, u, pct).unwrap();
            }
        }
    }
    out
}

/// One row per (policy, seed).
pub fn violations_csv<T: Scalar>(batches: &[Vec<RunMetrics<T>>]) -> String {
    let mut out = String::from("policy,seed,violations,total_tasks,violation_pct\n");
    for batch in batches {
        for m in batch {
            writeln!(
                out,
                "{},{},{},{},{}",
                m.policy,
                m.seed,
                m.violations_total,
                m.total_tasks,
                m.violation_pct()
            )
            .unwrap();
        }
    }
    out
}

/// One row per (episode, agent): the cumulative reward traces from
/// training, ready for convergence plots.
pub fn reward_trace_csv<T: Scalar>(traces: &[Vec<T>]) -> String {
    let mut out = String::from("episode,agent,cumulative_reward\n");
    if let Some(first) = traces.first() {
        for episode in 0..first.len() {
            for (agent, trace) in traces.iter().enumerate() {
                writeln!(out, "{},{},{}", episode, agent, trace[episode]).unwrap();
            }
        }
    }
    out
}

/// Pretty JSON mirror of a report structure.
pub fn to_json_pretty<S: Serialize>(value: &S) -> String {
    serde_json::to_string_pretty(value).expect("report serializes")
}
