//! Multi-agent tabular Q-learning: one independent agent per UAV, a
//! discretized network state, a shaped placement reward, the epsilon-greedy
//! training loop, and table persistence.

use std::io::{Read, Write};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::energy::level_from_gap;
use crate::model::{CpuId, SimConfig, Task};
use crate::policies::{NetworkSnapshot, Policy};
use crate::scalar::Scalar;
use crate::sim::{self, expected_violation, mix_seed, predicted_delay, RunMetrics};

#[derive(Debug, Error)]
pub enum QLearnError {
    #[error(
        "violation reward level is only defined when the chosen action is expected to violate"
    )]
    ActionNotViolating,
}

#[derive(Debug, Error)]
pub enum QTableIoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("not a Q-table file (bad magic)")]
    BadMagic,
    #[error("unsupported Q-table file version {0}")]
    BadVersion(u32),
    #[error("Q-table was trained under a different configuration (file hash {found:#018x}, expected {expected:#018x})")]
    ConfigHashMismatch { expected: u64, found: u64 },
    #[error("corrupt Q-table file: {0}")]
    Corrupt(String),
}

// ---------------------------------------------------------------------------
// State encoding
// ---------------------------------------------------------------------------

/// Discretized view an agent conditions on: the task kind, a three-way
/// delay bin per CPU, and a three-way battery standing per UAV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentState {
    /// Position of the task kind in the catalog.
    pub kind_index: usize,
    /// Per CPU: 0 = meets the deadline with at least half the deadline to
    /// spare, 1 = meets it with less slack, 2 = expected violation.
    pub delay_bins: Vec<u8>,
    /// Per UAV: battery standing relative to the fleet's best expectation.
    pub battery_levels: Vec<u8>,
}

impl AgentState {
    /// Mixed-radix index into the Q-table; unique per state.
    pub fn index(&self) -> usize {
        let mut idx = self.kind_index;
        for &b in &self.delay_bins {
            idx = idx * 3 + b as usize;
        }
        for &l in &self.battery_levels {
            idx = idx * 3 + l as usize;
        }
        idx
    }
}

/// Number of distinct encoded states: `kinds * 3^(cpus) * 3^(uavs)`.
pub fn state_count(kind_count: usize, n_cpus: usize, n_uavs: usize) -> usize {
    3usize
        .checked_pow((n_cpus + n_uavs) as u32)
        .and_then(|p| p.checked_mul(kind_count))
        .expect("state space fits in usize")
}

/// Inverse of [`AgentState::index`].
pub fn decode_state(index: usize, kind_count: usize, n_cpus: usize, n_uavs: usize) -> AgentState {
    debug_assert!(index < state_count(kind_count, n_cpus, n_uavs));
    let mut rest = index;
    let mut battery_levels = vec![0u8; n_uavs];
    for slot in battery_levels.iter_mut().rev() {
        *slot = (rest % 3) as u8;
        rest /= 3;
    }
    let mut delay_bins = vec![0u8; n_cpus];
    for slot in delay_bins.iter_mut().rev() {
        *slot = (rest % 3) as u8;
        rest /= 3;
    }
    AgentState {
        kind_index: rest,
        delay_bins,
        battery_levels,
    }
}

/// Delay bin of one candidate CPU for the task under decision.
pub fn delay_bin<T: Scalar>(
    cfg: &SimConfig<T>,
    snapshot: &NetworkSnapshot<T>,
    task: &Task<T>,
    candidate: CpuId,
) -> u8 {
    let deadline = cfg.task_type(task.kind).deadline;
    let delay = predicted_delay(cfg, snapshot, task, candidate);
    if delay > deadline {
        2
    } else if deadline - delay >= deadline * T::lit(0.5) {
        0
    } else {
        1
    }
}

/// Battery standing of `candidate` under the hysteresis bands, evaluated on
/// the fleet's expected remaining energies at the instant the candidate's
/// backlog would drain. Edge CPUs always stand at the top level.
pub fn battery_level<T: Scalar>(
    cfg: &SimConfig<T>,
    snapshot: &NetworkSnapshot<T>,
    candidate: CpuId,
) -> u8 {
    if cfg.is_mec(candidate) {
        return 2;
    }
    let params = &cfg.energy;
    let db = snapshot.backlogs[candidate.index()];
    let mut fleet_max = T::neg_infinity();
    let mut selected = T::zero();
    for u in 0..cfg.n_uavs {
        let expected = snapshot.uav_remaining[u]
            - params.idle_drain() * db
            - params.active_extra() * snapshot.backlogs[u].min(db);
        if u == candidate.index() {
            selected = expected;
        }
        fleet_max = fleet_max.max(expected);
    }
    level_from_gap(selected - fleet_max, cfg.epsilon_batt)
}

/// Encodes the decision-time state for the task's receiving agent.
pub fn encode_state<T: Scalar>(
    cfg: &SimConfig<T>,
    snapshot: &NetworkSnapshot<T>,
    task: &Task<T>,
) -> AgentState {
    AgentState {
        kind_index: cfg.kind_index(task.kind),
        delay_bins: (0..cfg.cpu_count())
            .map(|c| delay_bin(cfg, snapshot, task, CpuId(c)))
            .collect(),
        battery_levels: (0..cfg.n_uavs)
            .map(|u| battery_level(cfg, snapshot, CpuId(u)))
            .collect(),
    }
}

/// Allocation-free equivalent of `encode_state(..).index()`.
pub fn state_index<T: Scalar>(
    cfg: &SimConfig<T>,
    snapshot: &NetworkSnapshot<T>,
    task: &Task<T>,
) -> usize {
    let mut idx = cfg.kind_index(task.kind);
    for c in 0..cfg.cpu_count() {
        idx = idx * 3 + delay_bin(cfg, snapshot, task, CpuId(c)) as usize;
    }
    for u in 0..cfg.n_uavs {
        idx = idx * 3 + battery_level(cfg, snapshot, CpuId(u)) as usize;
    }
    idx
}

// ---------------------------------------------------------------------------
// Reward
// ---------------------------------------------------------------------------

/// Graded penalties applied when the chosen placement is expected to blow
/// the deadline, depending on which better option existed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ViolationLevels {
    /// An edge server would have met the deadline.
    pub mec_free: i32,
    /// Keeping the task local would have met it.
    pub receiver_free: i32,
    /// Some other UAV would have met it.
    pub peer_free: i32,
    /// No placement could have met it.
    pub none_free: i32,
}

impl Default for ViolationLevels {
    fn default() -> Self {
        ViolationLevels {
            mec_free: -40,
            receiver_free: -20,
            peer_free: -10,
            none_free: -1,
        }
    }
}

/// Picks the penalty tier for an expected violation: worst when the edge
/// server was free, then the receiver itself, then any other UAV, and a
/// token penalty when every placement would have violated. Rejected when
/// the action is not expected to violate.
pub fn violation_reward_level<T: Scalar>(
    cfg: &SimConfig<T>,
    snapshot: &NetworkSnapshot<T>,
    task: &Task<T>,
    action: CpuId,
    levels: &ViolationLevels,
) -> Result<i32, QLearnError> {
    if !expected_violation(cfg, snapshot, task, action) {
        return Err(QLearnError::ActionNotViolating);
    }
    if cfg
        .mec_ids()
        .any(|m| !expected_violation(cfg, snapshot, task, m))
    {
        return Ok(levels.mec_free);
    }
    if !expected_violation(cfg, snapshot, task, task.source_uav) {
        return Ok(levels.receiver_free);
    }
    let peer_free = cfg
        .uav_ids()
        .filter(|&u| u != task.source_uav && u != action)
        .any(|u| !expected_violation(cfg, snapshot, task, u));
    if peer_free {
        Ok(levels.peer_free)
    } else {
        Ok(levels.none_free)
    }
}

/// Placement reward: `(battery_level - 1) + (1 - E[v]) + V * E[v]`, where
/// `E[v]` is the expected-violation indicator and `V` the violation tier.
/// Ranges from -41 (worst battery pick that also violates while the edge
/// server was free) to +2.
pub fn reward<T: Scalar>(
    cfg: &SimConfig<T>,
    snapshot: &NetworkSnapshot<T>,
    task: &Task<T>,
    action: CpuId,
    levels: &ViolationLevels,
) -> T {
    let battery_term =
        T::from_i32(battery_level(cfg, snapshot, action) as i32 - 1).expect("small integer");
    if expected_violation(cfg, snapshot, task, action) {
        let tier =
            violation_reward_level(cfg, snapshot, task, action, levels).expect("action violates");
        battery_term + T::from_i32(tier).expect("small integer")
    } else {
        battery_term + T::one()
    }
}

// ---------------------------------------------------------------------------
// Table and update rule
// ---------------------------------------------------------------------------

/// Dense action-value table for one agent, with per-pair visit counts.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable<T> {
    n_states: usize,
    n_actions: usize,
    values: Vec<T>,
    visits: Vec<u32>,
}

impl<T: Scalar> QTable<T> {
    pub fn zeroed(n_states: usize, n_actions: usize) -> Self {
        QTable {
            n_states,
            n_actions,
            values: vec![T::zero(); n_states * n_actions],
            visits: vec![0; n_states * n_actions],
        }
    }

    #[inline]
    fn slot(&self, state: usize, action: usize) -> usize {
        debug_assert!(state < self.n_states && action < self.n_actions);
        state * self.n_actions + action
    }

    #[inline]
    pub fn q(&self, state: usize, action: usize) -> T {
        self.values[self.slot(state, action)]
    }

    pub fn visit_count(&self, state: usize, action: usize) -> u32 {
        self.visits[self.slot(state, action)]
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// Greedy action; ties break toward the lowest CPU index.
    pub fn best_action(&self, state: usize) -> usize {
        let row = &self.values[state * self.n_actions..(state + 1) * self.n_actions];
        let mut best = 0;
        for (a, &v) in row.iter().enumerate().skip(1) {
            if v > row[best] {
                best = a;
            }
        }
        best
    }

    pub fn max_q(&self, state: usize) -> T {
        let row = &self.values[state * self.n_actions..(state + 1) * self.n_actions];
        row.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn visits(&self) -> &[u32] {
        &self.visits
    }

    /// Overwrites one action value; meant for tools and tests.
    pub fn set_q(&mut self, state: usize, action: usize, value: T) {
        let slot = self.slot(state, action);
        self.values[slot] = value;
    }
}

/// Training hyperparameters and exploration schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSchedule<T> {
    pub episodes: usize,
    pub learning_rate: T,
    pub discount: T,
    pub epsilon_start: T,
    pub epsilon_end: T,
    /// Fraction of the episodes over which epsilon decays linearly from
    /// start to end; it stays at `epsilon_end` afterwards.
    pub decay_fraction: T,
    pub violation_levels: ViolationLevels,
}

impl<T: Scalar> TrainSchedule<T> {
    pub fn new(episodes: usize) -> Self {
        TrainSchedule {
            episodes,
            learning_rate: T::lit(0.05),
            discount: T::lit(0.85),
            epsilon_start: T::one(),
            epsilon_end: T::lit(0.05),
            decay_fraction: T::lit(0.5),
            violation_levels: ViolationLevels::default(),
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.learning_rate > T::zero() && self.learning_rate <= T::one()) {
            v.push(format!(
                "learning_rate: must be in (0, 1], got {}",
                self.learning_rate
            ));
        }
        if !(self.discount >= T::zero() && self.discount < T::one()) {
            v.push(format!(
                "discount: must be in [0, 1), got {}",
                self.discount
            ));
        }
        for (name, e) in [
            ("epsilon_start", self.epsilon_start),
            ("epsilon_end", self.epsilon_end),
        ] {
            if !(e >= T::zero() && e <= T::one()) {
                v.push(format!("{name}: must be in [0, 1], got {e}"));
            }
        }
        if self.epsilon_end > self.epsilon_start {
            v.push("epsilon_end: must not exceed epsilon_start".to_string());
        }
        if !(self.decay_fraction > T::zero() && self.decay_fraction <= T::one()) {
            v.push(format!(
                "decay_fraction: must be in (0, 1], got {}",
                self.decay_fraction
            ));
        }
        v
    }

    pub fn epsilon_at(&self, episode: usize) -> T {
        let cutoff = self.decay_fraction * T::from_count(self.episodes);
        let e = T::from_count(episode);
        if e < cutoff && cutoff > T::zero() {
            self.epsilon_start + (self.epsilon_end - self.epsilon_start) * e / cutoff
        } else {
            self.epsilon_end
        }
    }
}

/// One-step Q-learning update. A `None` next state is terminal (end of the
/// episode): no bootstrap term.
pub fn update<T: Scalar>(
    table: &mut QTable<T>,
    state: usize,
    action: usize,
    reward: T,
    next_state: Option<usize>,
    schedule: &TrainSchedule<T>,
) {
    let target = match next_state {
        Some(next) => reward + schedule.discount * table.max_q(next),
        None => reward,
    };
    let slot = table.slot(state, action);
    let q = table.values[slot];
    table.values[slot] = q + schedule.learning_rate * (target - q);
    table.visits[slot] += 1;
}

#[inline]
fn epsilon_greedy_action<T: Scalar>(
    rng: &mut ChaCha8Rng,
    table: &QTable<T>,
    state: usize,
    epsilon: f64,
) -> usize {
    if rng.random::<f64>() < epsilon {
        rng.random_range(0..table.n_actions)
    } else {
        table.best_action(state)
    }
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

/// Policy wrapper that learns while it places tasks. Each agent observes its
/// next state at its own next decision; the gap between decisions carries no
/// explicit time discount beyond `discount` per transition.
struct LearningPolicy<'a, T: Scalar> {
    cfg: &'a SimConfig<T>,
    tables: &'a mut [QTable<T>],
    schedule: &'a TrainSchedule<T>,
    epsilon: f64,
    rng: ChaCha8Rng,
    pending: Vec<Option<(usize, usize, T)>>,
    episode_reward: Vec<T>,
}

impl<'a, T: Scalar> LearningPolicy<'a, T> {
    fn new(
        cfg: &'a SimConfig<T>,
        tables: &'a mut [QTable<T>],
        schedule: &'a TrainSchedule<T>,
        epsilon: T,
        seed: u64,
    ) -> Self {
        let n = cfg.n_uavs;
        LearningPolicy {
            cfg,
            tables,
            schedule,
            epsilon: epsilon.to_f64().expect("epsilon finite"),
            rng: ChaCha8Rng::seed_from_u64(seed),
            pending: vec![None; n],
            episode_reward: vec![T::zero(); n],
        }
    }

    /// Flushes the terminal updates and reports per-agent episode rewards.
    fn finish_episode(mut self) -> Vec<T> {
        for agent in 0..self.pending.len() {
            if let Some((s, a, r)) = self.pending[agent].take() {
                update(&mut self.tables[agent], s, a, r, None, self.schedule);
            }
        }
        self.episode_reward
    }
}

impl<T: Scalar> Policy<T> for LearningPolicy<'_, T> {
    fn name(&self) -> &str {
        "qlearn-train"
    }

    fn decide(&mut self, task: &Task<T>, snapshot: &NetworkSnapshot<T>) -> CpuId {
        let agent = task.source_uav.index();
        let state = state_index(self.cfg, snapshot, task);
        let action = epsilon_greedy_action(&mut self.rng, &self.tables[agent], state, self.epsilon);
        let r = reward(
            self.cfg,
            snapshot,
            task,
            CpuId(action),
            &self.schedule.violation_levels,
        );
        if let Some((ps, pa, pr)) = self.pending[agent].take() {
            update(
                &mut self.tables[agent],
                ps,
                pa,
                pr,
                Some(state),
                self.schedule,
            );
        }
        self.pending[agent] = Some((state, action, r));
        self.episode_reward[agent] += r;
        CpuId(action)
    }
}

/// Outcome of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult<T> {
    /// One table per UAV agent.
    pub tables: Vec<QTable<T>>,
    /// `reward_traces[agent][episode]`: cumulative reward the agent
    /// collected in that episode.
    pub reward_traces: Vec<Vec<T>>,
    /// Episodes during which at least one battery hit zero.
    pub exhausted_episodes: Vec<usize>,
}

/// Trains the per-UAV agents over independently sampled episodes, each one
/// full simulated horizon. Deterministic for a given seed.
pub fn train<T: Scalar>(
    cfg: &SimConfig<T>,
    schedule: &TrainSchedule<T>,
    seed: u64,
) -> TrainResult<T> {
    let schedule_issues = schedule.validate();
    assert!(
        schedule_issues.is_empty(),
        "invalid schedule: {schedule_issues:?}"
    );
    let n_states = state_count(cfg.task_catalog.len(), cfg.cpu_count(), cfg.n_uavs);
    let n_actions = cfg.cpu_count();
    let mut tables = vec![QTable::zeroed(n_states, n_actions); cfg.n_uavs];
    let mut traces: Vec<Vec<T>> = vec![Vec::with_capacity(schedule.episodes); cfg.n_uavs];
    let mut exhausted_episodes = Vec::new();

    for episode in 0..schedule.episodes {
        let epsilon = schedule.epsilon_at(episode);
        let workload = sim::generate_workload(cfg, mix_seed(seed, 2 * episode as u64));
        let mut learner = LearningPolicy::new(
            cfg,
            &mut tables,
            schedule,
            epsilon,
            mix_seed(seed, 2 * episode as u64 + 1),
        );
        let metrics: RunMetrics<T> = sim::run(cfg, &workload, &mut learner);
        let sums = learner.finish_episode();
        for (agent, total) in sums.into_iter().enumerate() {
            traces[agent].push(total);
        }
        if metrics.battery_exhausted_at.iter().any(Option::is_some) {
            exhausted_episodes.push(episode);
        }
    }

    TrainResult {
        tables,
        reward_traces: traces,
        exhausted_episodes,
    }
}

/// Greedy evaluation policy over trained tables (epsilon = 0).
pub struct GreedyTablePolicy<'a, T> {
    cfg: &'a SimConfig<T>,
    tables: &'a [QTable<T>],
}

impl<'a, T: Scalar> GreedyTablePolicy<'a, T> {
    pub fn new(cfg: &'a SimConfig<T>, tables: &'a [QTable<T>]) -> Self {
        assert_eq!(tables.len(), cfg.n_uavs, "one table per UAV agent");
        let expected = state_count(cfg.task_catalog.len(), cfg.cpu_count(), cfg.n_uavs);
        for table in tables {
            assert_eq!(
                (table.n_states(), table.n_actions()),
                (expected, cfg.cpu_count()),
                "table dimensions must match the configuration"
            );
        }
        GreedyTablePolicy { cfg, tables }
    }
}

impl<T: Scalar> Policy<T> for GreedyTablePolicy<'_, T> {
    fn name(&self) -> &str {
        "qlearn"
    }

    fn decide(&mut self, task: &Task<T>, snapshot: &NetworkSnapshot<T>) -> CpuId {
        let agent = task.source_uav.index();
        let state = state_index(self.cfg, snapshot, task);
        CpuId(self.tables[agent].best_action(state))
    }
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

const TABLE_MAGIC: &[u8; 4] = b"OSQT";
const TABLE_VERSION: u32 = 1;

/// Writes the agents' tables with the owning configuration's hash embedded.
pub fn save_tables<T: Scalar>(
    out: &mut impl Write,
    config_hash: u64,
    tables: &[QTable<T>],
) -> std::io::Result<()> {
    out.write_all(TABLE_MAGIC)?;
    out.write_all(&TABLE_VERSION.to_le_bytes())?;
    out.write_all(&config_hash.to_le_bytes())?;
    out.write_all(&(tables.len() as u32).to_le_bytes())?;
    let (n_states, n_actions) = tables
        .first()
        .map(|t| (t.n_states, t.n_actions))
        .unwrap_or((0, 0));
    out.write_all(&(n_states as u64).to_le_bytes())?;
    out.write_all(&(n_actions as u32).to_le_bytes())?;
    for table in tables {
        assert_eq!((table.n_states, table.n_actions), (n_states, n_actions));
        for v in &table.values {
            out.write_all(&v.to_f64().expect("finite Q-value").to_le_bytes())?;
        }
        for c in &table.visits {
            out.write_all(&c.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads tables persisted by [`save_tables`], rejecting files written under
/// a different configuration.
pub fn load_tables<T: Scalar>(
    input: &mut impl Read,
    expected_hash: u64,
) -> Result<Vec<QTable<T>>, QTableIoError> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != TABLE_MAGIC {
        return Err(QTableIoError::BadMagic);
    }
    let version = read_u32(input)?;
    if version != TABLE_VERSION {
        return Err(QTableIoError::BadVersion(version));
    }
    let found = read_u64(input)?;
    if found != expected_hash {
        return Err(QTableIoError::ConfigHashMismatch {
            expected: expected_hash,
            found,
        });
    }
    let n_agents = read_u32(input)? as usize;
    let n_states = read_u64(input)? as usize;
    let n_actions = read_u32(input)? as usize;
    let slots = n_states
        .checked_mul(n_actions)
        .filter(|&s| s <= 1 << 30)
        .ok_or_else(|| QTableIoError::Corrupt("table dimensions overflow".to_string()))?;
    let mut tables = Vec::with_capacity(n_agents);
    for _ in 0..n_agents {
        let mut values = Vec::with_capacity(slots);
        let mut buf = [0u8; 8];
        for _ in 0..slots {
            input.read_exact(&mut buf)?;
            let v = f64::from_le_bytes(buf);
            values.push(
                T::from_f64(v).ok_or_else(|| {
                    QTableIoError::Corrupt(format!("Q-value {v} not representable"))
                })?,
            );
        }
        let mut visits = Vec::with_capacity(slots);
        let mut buf4 = [0u8; 4];
        for _ in 0..slots {
            input.read_exact(&mut buf4)?;
            visits.push(u32::from_le_bytes(buf4));
        }
        tables.push(QTable {
            n_states,
            n_actions,
            values,
            visits,
        });
    }
    Ok(tables)
}

fn read_u32(input: &mut impl Read) -> std::io::Result<u32> {
    let mut buf = [0u8; 4];
    input.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(input: &mut impl Read) -> std::io::Result<u64> {
    let mut buf = [0u8; 8];
    input.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}
