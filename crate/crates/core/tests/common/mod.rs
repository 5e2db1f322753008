//! Shared test fixtures: an exhaustive enumeration oracle for the exact
//! model (independent of the solver's search and bound arithmetic) and a
//! random desk-scale instance generator.

// Each test binary compiles this module separately and uses a subset.
#![allow(dead_code)]

use offloadsim::exact::{IlpInstance, IlpTask};
use offloadsim::model::{reference_config, EnergyParams, SimConfig};
use rand::RngExt;
use rand_chacha::ChaCha8Rng;

/// Best objective over every feasible placement, found by brute force.
/// Recomputes the objective from the raw energy parameters rather than
/// through the instance helpers, so it cross-checks that arithmetic too.
pub fn exhaustive_best(inst: &IlpInstance<f64>) -> Option<f64> {
    let n_cpus = inst.n_uavs + inst.n_mec;
    let mut occupancy = vec![vec![false; inst.n_intervals]; n_cpus];
    let mut busy = vec![0usize; n_cpus];
    let mut best = None;
    enumerate(inst, 0, &mut occupancy, &mut busy, 0, &mut best);
    best
}

fn leaf_objective(inst: &IlpInstance<f64>, busy: &[usize], violations: usize) -> f64 {
    let e: &EnergyParams<f64> = &inst.energy;
    let idle_per_interval =
        (e.hover_power + e.antenna_power + e.cpu_idle_power) * inst.interval_len;
    let extra_per_interval = (e.cpu_active_power - e.cpu_idle_power) * inst.interval_len;
    let min_remaining = (0..inst.n_uavs)
        .map(|u| {
            e.battery_capacity
                - idle_per_interval * inst.n_intervals as f64
                - extra_per_interval * busy[u] as f64
        })
        .fold(f64::INFINITY, f64::min);
    inst.weight * min_remaining - (1.0 - inst.weight) / inst.theta * violations as f64
}

fn enumerate(
    inst: &IlpInstance<f64>,
    depth: usize,
    occupancy: &mut [Vec<bool>],
    busy: &mut [usize],
    violations: usize,
    best: &mut Option<f64>,
) {
    if depth == inst.tasks.len() {
        let obj = leaf_objective(inst, busy, violations);
        if best.is_none_or(|b| obj > b) {
            *best = Some(obj);
        }
        return;
    }
    let task = &inst.tasks[depth];
    let n_cpus = inst.n_uavs + inst.n_mec;
    for cpu in 0..n_cpus {
        let len = if cpu >= inst.n_uavs {
            task.proc_mec
        } else {
            task.proc_uav
        };
        if task.arrival + len > inst.n_intervals {
            continue;
        }
        for start in task.arrival..=(inst.n_intervals - len) {
            if occupancy[cpu][start..start + len].iter().any(|&o| o) {
                continue;
            }
            for slot in &mut occupancy[cpu][start..start + len] {
                *slot = true;
            }
            busy[cpu] += len;
            let violates = (start - task.arrival + len > task.deadline) as usize;
            enumerate(
                inst,
                depth + 1,
                occupancy,
                busy,
                violations + violates,
                best,
            );
            busy[cpu] -= len;
            for slot in &mut occupancy[cpu][start..start + len] {
                *slot = false;
            }
        }
    }
}

/// Random desk-scale instance: up to 5 tasks, 2-3 CPUs, up to 12 intervals,
/// feasible by construction (every task fits alone on some CPU) and with at
/// most one arrival per (UAV, interval).
pub fn random_instance(rng: &mut ChaCha8Rng, weight: f64) -> IlpInstance<f64> {
    let n_uavs = rng.random_range(1..=2);
    let n_mec = 1;
    let n_intervals = rng.random_range(6..=12);
    let n_tasks = rng.random_range(1..=5);
    let mut tasks = Vec::new();
    let mut used: Vec<(usize, usize)> = Vec::new();
    let mut max_proc = 1usize;
    for id in 0..n_tasks {
        let proc_uav = rng.random_range(1..=3usize);
        let proc_mec = rng.random_range(1..=proc_uav);
        // Leave room for the shortest class.
        let source = rng.random_range(0..n_uavs);
        let latest = n_intervals - proc_mec;
        let mut arrival = rng.random_range(0..=latest.min(n_intervals - 1));
        let mut guard = 0;
        while used.contains(&(source, arrival)) {
            arrival = rng.random_range(0..=latest.min(n_intervals - 1));
            guard += 1;
            if guard > 200 {
                break;
            }
        }
        if used.contains(&(source, arrival)) {
            continue; // give up on this slot; fewer tasks is fine
        }
        used.push((source, arrival));
        max_proc = max_proc.max(proc_uav);
        tasks.push(IlpTask {
            id,
            source,
            arrival,
            proc_uav,
            proc_mec,
            deadline: rng.random_range(1..=n_intervals),
        });
    }
    let energy = reference_config::<f64>().energy;
    IlpInstance {
        n_uavs,
        n_mec,
        n_intervals,
        interval_len: 0.05,
        tasks,
        weight,
        theta: 0.1 + rng.random::<f64>() * 5.0,
        energy,
        big_m: n_intervals + max_proc + 1,
    }
}

/// Desk-scale scenario used by several suites: two UAVs, one edge server,
/// a 0.8 s horizon on a 0.05 s grid, and tighter deadlines.
pub fn pinned_tiny_config() -> SimConfig<f64> {
    use offloadsim::model::{TaskKind, TaskType};
    let mut cfg = reference_config::<f64>();
    cfg.n_uavs = 2;
    cfg.n_mec = 1;
    cfg.horizon = 0.8;
    cfg.task_catalog = vec![
        TaskType::new(TaskKind::FD, 0.125, 0.2, 0.1, 0.05),
        TaskType::new(TaskKind::PD, 0.125, 0.6, 0.5, 0.25),
    ];
    cfg
}
