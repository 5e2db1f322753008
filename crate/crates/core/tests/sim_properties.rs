//! Property tests for the event-driven simulator and the energy arithmetic.

use offloadsim::energy::{remaining_energy, EnergyLedger};
use offloadsim::model::{config_from_json, config_to_json, reference_config, CpuId, SimConfig};
use offloadsim::policies::{HefPolicy, LocalOnly, Policy, QhefPolicy, RoundRobinPolicy};
use offloadsim::sim::{generate_workload, run, RunMetrics};
use proptest::prelude::*;

fn scenario(n_uavs: usize, horizon: f64, latency: f64) -> SimConfig<f64> {
    let mut cfg = reference_config::<f64>();
    cfg.n_uavs = n_uavs;
    cfg.horizon = horizon;
    cfg.offload_latency = latency;
    cfg
}

fn run_policy(cfg: &SimConfig<f64>, seed: u64, which: u8) -> RunMetrics<f64> {
    let workload = generate_workload(cfg, seed);
    let mut policy: Box<dyn Policy<f64>> = match which % 4 {
        0 => Box::new(LocalOnly),
        1 => Box::new(RoundRobinPolicy::new(cfg.n_uavs, cfg.n_mec)),
        2 => Box::new(HefPolicy::new(
            cfg.n_uavs,
            cfg.n_mec,
            cfg.energy.battery_capacity,
            seed ^ 0xbeef,
        )),
        _ => Box::new(QhefPolicy::new(cfg.n_uavs, cfg.energy.battery_capacity)),
    };
    run(cfg, &workload, policy.as_mut())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn identical_inputs_give_bit_identical_metrics(
        seed in any::<u64>(),
        n_uavs in 1usize..=4,
        horizon in 0.1f64..1.0,
        which in 0u8..4,
    ) {
        let cfg = scenario(n_uavs, horizon, 0.0);
        let a = run_policy(&cfg, seed, which);
        let b = run_policy(&cfg, seed, which);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn every_task_completes_on_exactly_one_cpu(
        seed in any::<u64>(),
        n_uavs in 1usize..=4,
        horizon in 0.1f64..1.0,
        which in 0u8..4,
        latency in prop::sample::select(vec![0.0f64, 0.05]),
    ) {
        let cfg = scenario(n_uavs, horizon, latency);
        let workload = generate_workload(&cfg, seed);
        let metrics = run_policy(&cfg, seed, which);
        // Conservation: one outcome per workload task.
        prop_assert_eq!(metrics.outcomes.len(), workload.len());
        let mut seen: Vec<usize> = metrics.outcomes.iter().map(|o| o.task_id).collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..workload.len()).collect::<Vec<_>>());
        for outcome in &metrics.outcomes {
            prop_assert!(outcome.assigned_cpu.index() < cfg.cpu_count());
        }
    }

    #[test]
    fn service_is_causal_contiguous_and_non_overlapping(
        seed in any::<u64>(),
        n_uavs in 1usize..=4,
        horizon in 0.1f64..1.0,
        which in 0u8..4,
        latency in prop::sample::select(vec![0.0f64, 0.05]),
    ) {
        let cfg = scenario(n_uavs, horizon, latency);
        let workload = generate_workload(&cfg, seed);
        let metrics = run_policy(&cfg, seed, which);
        for outcome in &metrics.outcomes {
            let task = &workload[outcome.task_id];
            // Causality; delegated tasks also pay the hop first.
            prop_assert!(outcome.start_time >= task.arrival_time - 1e-12);
            // One contiguous service block of the class processing time.
            let proc = cfg.proc_time(task.kind, outcome.assigned_cpu);
            prop_assert!((outcome.completion_time - outcome.start_time - proc).abs() < 1e-9);
            // Violation flag is exactly "delay strictly above deadline".
            let deadline = cfg.task_type(task.kind).deadline;
            prop_assert_eq!(outcome.violated, outcome.total_delay > deadline);
            prop_assert!((outcome.total_delay - (outcome.completion_time - task.arrival_time)).abs() < 1e-12);
        }
        // Per-CPU service intervals are disjoint.
        for cpu in 0..cfg.cpu_count() {
            let mut spans: Vec<(f64, f64)> = metrics
                .outcomes
                .iter()
                .filter(|o| o.assigned_cpu == CpuId(cpu))
                .map(|o| (o.start_time, o.completion_time))
                .collect();
            spans.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for pair in spans.windows(2) {
                prop_assert!(
                    pair[1].0 >= pair[0].1 - 1e-9,
                    "cpu {} overlaps: {:?}",
                    cpu,
                    pair
                );
            }
        }
    }

    #[test]
    fn remaining_energy_never_increases_with_time_or_load(
        elapsed in 0.0f64..10.0,
        busy_frac in 0.0f64..1.0,
        d_elapsed in 0.0f64..5.0,
        d_busy in 0.0f64..1.0,
    ) {
        let params = reference_config::<f64>().energy;
        let busy = busy_frac * elapsed;
        let base = EnergyLedger { cpu_id: CpuId(0), busy_seconds: busy, elapsed_seconds: elapsed };
        let later = EnergyLedger { cpu_id: CpuId(0), busy_seconds: busy, elapsed_seconds: elapsed + d_elapsed };
        let busier = EnergyLedger {
            cpu_id: CpuId(0),
            busy_seconds: (busy + d_busy).min(elapsed),
            elapsed_seconds: elapsed,
        };
        let r0 = remaining_energy(&params, &base);
        prop_assert!(remaining_energy(&params, &later) <= r0 + 1e-9);
        prop_assert!(remaining_energy(&params, &busier) <= r0 + 1e-9);
    }

    #[test]
    fn config_json_round_trips(
        n_uavs in 1usize..=6,
        n_mec in 0usize..=2,
        horizon in 0.0f64..100.0,
        weight in 0.0f64..=1.0,
        seed in any::<u64>(),
    ) {
        let mut cfg = reference_config::<f64>();
        cfg.n_uavs = n_uavs;
        cfg.n_mec = n_mec;
        cfg.horizon = horizon;
        cfg.weight = weight;
        cfg.seed = seed;
        let json = config_to_json(&cfg);
        let back: SimConfig<f64> = config_from_json(&json).unwrap();
        prop_assert_eq!(cfg, back);
    }
}
