//! Offloading policies: the decision interface the simulator calls at every
//! task arrival, plus the three heuristic baselines (round robin, highest
//! energy first, and queue-aware highest energy first).

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{CpuId, Task};
use crate::scalar::Scalar;

/// Fraction of decisions the HEF baseline diverts to the edge server.
pub const HEF_MEC_PROBABILITY: f64 = 0.2;
/// Energy margin, as a fraction of battery capacity, a peer must lead by
/// before HEF/QHEF offload to it.
pub const ENERGY_MARGIN_FRACTION: f64 = 0.01;
/// Backlog lead, in seconds, a CPU must have before QHEF considers it.
pub const QHEF_QUEUE_THRESHOLD_SECS: f64 = 0.5;

/// Read-only view of the network a policy sees at a decision point.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSnapshot<T> {
    /// Decision time, seconds.
    pub now: T,
    /// UAV that received the task and must place it.
    pub receiver: CpuId,
    /// Pending work per CPU, in seconds, including the remaining service
    /// time of any task currently being processed.
    pub backlogs: Vec<T>,
    /// Remaining battery energy per UAV at `now`, energy units.
    pub uav_remaining: Vec<T>,
}

/// A task-placement policy. The simulator calls `decide` exactly once per
/// task, at its arrival on the receiving UAV.
pub trait Policy<T: Scalar> {
    fn name(&self) -> &str;
    fn decide(&mut self, task: &Task<T>, snapshot: &NetworkSnapshot<T>) -> CpuId;
}

/// Processes every task on the UAV that received it. Useful as a floor
/// baseline and in tests.
#[derive(Debug, Default, Clone)]
pub struct LocalOnly;

impl<T: Scalar> Policy<T> for LocalOnly {
    fn name(&self) -> &str {
        "local"
    }

    fn decide(&mut self, task: &Task<T>, _snapshot: &NetworkSnapshot<T>) -> CpuId {
        task.source_uav
    }
}

/// Rotates each UAV's offload target through the other UAVs (ascending
/// index) and then the edge servers. Local processing is not in the cycle;
/// every task is delegated somewhere.
#[derive(Debug, Clone)]
pub struct RoundRobinPolicy {
    n_uavs: usize,
    n_mec: usize,
    cursors: Vec<usize>,
}

impl RoundRobinPolicy {
    pub fn new(n_uavs: usize, n_mec: usize) -> Self {
        RoundRobinPolicy {
            n_uavs,
            n_mec,
            cursors: vec![0; n_uavs],
        }
    }

    fn cycle(&self, receiver: usize) -> Vec<CpuId> {
        (0..self.n_uavs)
            .filter(|&u| u != receiver)
            .chain(self.n_uavs..self.n_uavs + self.n_mec)
            .map(CpuId)
            .collect()
    }
}

impl<T: Scalar> Policy<T> for RoundRobinPolicy {
    fn name(&self) -> &str {
        "rr"
    }

    fn decide(&mut self, task: &Task<T>, _snapshot: &NetworkSnapshot<T>) -> CpuId {
        let receiver = task.source_uav.index();
        let cycle = self.cycle(receiver);
        if cycle.is_empty() {
            return task.source_uav; // nothing to delegate to
        }
        let choice = cycle[self.cursors[receiver] % cycle.len()];
        self.cursors[receiver] = (self.cursors[receiver] + 1) % cycle.len();
        choice
    }
}

/// Highest energy first: with a fixed probability the task goes straight to
/// the first edge server; otherwise it goes to the UAV holding the most
/// battery, provided that UAV leads the receiver by more than the energy
/// margin, and stays local if not.
#[derive(Debug, Clone)]
pub struct HefPolicy<T> {
    n_uavs: usize,
    n_mec: usize,
    energy_margin: T,
    mec_probability: f64,
    rng: ChaCha8Rng,
}

impl<T: Scalar> HefPolicy<T> {
    pub fn new(n_uavs: usize, n_mec: usize, battery_capacity: T, seed: u64) -> Self {
        HefPolicy {
            n_uavs,
            n_mec,
            energy_margin: T::lit(ENERGY_MARGIN_FRACTION) * battery_capacity,
            mec_probability: HEF_MEC_PROBABILITY,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Overrides the edge-server probability (0 disables the gate).
    pub fn with_mec_probability(mut self, p: f64) -> Self {
        self.mec_probability = p;
        self
    }
}

impl<T: Scalar> Policy<T> for HefPolicy<T> {
    fn name(&self) -> &str {
        "hef"
    }

    fn decide(&mut self, task: &Task<T>, snapshot: &NetworkSnapshot<T>) -> CpuId {
        if self.n_mec > 0 && self.rng.random::<f64>() < self.mec_probability {
            return CpuId(self.n_uavs);
        }
        let receiver = task.source_uav.index();
        let mut best = 0usize;
        for u in 1..self.n_uavs {
            if snapshot.uav_remaining[u] > snapshot.uav_remaining[best] {
                best = u;
            }
        }
        if snapshot.uav_remaining[best] - snapshot.uav_remaining[receiver] > self.energy_margin {
            CpuId(best)
        } else {
            task.source_uav
        }
    }
}

/// Queue-aware highest energy first: among CPUs whose backlog trails the
/// receiver's by more than the queue threshold, take the least-loaded one
/// that also leads on energy by more than the margin (edge servers pass the
/// energy test unconditionally); stay local if none qualifies.
#[derive(Debug, Clone)]
pub struct QhefPolicy<T> {
    n_uavs: usize,
    energy_margin: T,
    queue_threshold: T,
}

impl<T: Scalar> QhefPolicy<T> {
    pub fn new(n_uavs: usize, battery_capacity: T) -> Self {
        QhefPolicy {
            n_uavs,
            energy_margin: T::lit(ENERGY_MARGIN_FRACTION) * battery_capacity,
            queue_threshold: T::lit(QHEF_QUEUE_THRESHOLD_SECS),
        }
    }
}

impl<T: Scalar> Policy<T> for QhefPolicy<T> {
    fn name(&self) -> &str {
        "qhef"
    }

    fn decide(&mut self, task: &Task<T>, snapshot: &NetworkSnapshot<T>) -> CpuId {
        let receiver = task.source_uav.index();
        let receiver_backlog = snapshot.backlogs[receiver];
        let mut candidates: Vec<usize> = (0..snapshot.backlogs.len())
            .filter(|&c| c != receiver)
            .filter(|&c| receiver_backlog - snapshot.backlogs[c] > self.queue_threshold)
            .collect();
        candidates.sort_by(|&a, &b| {
            snapshot.backlogs[a]
                .partial_cmp(&snapshot.backlogs[b])
                .expect("backlogs are finite")
                .then(a.cmp(&b))
        });
        for c in candidates {
            let is_mec = c >= self.n_uavs;
            if is_mec
                || snapshot.uav_remaining[c] - snapshot.uav_remaining[receiver] > self.energy_margin
            {
                return CpuId(c);
            }
        }
        task.source_uav
    }
}
