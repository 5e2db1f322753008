//! Event-driven network simulator: seeded workload generation, per-CPU FIFO
//! queues, delay and violation accounting, and battery tracking.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::energy::{remaining_energy, remaining_percentage, EnergyLedger};
use crate::model::{CpuId, SimConfig, Task, TaskKind};
use crate::policies::{NetworkSnapshot, Policy};
use crate::scalar::Scalar;

/// Derives an independent 64-bit seed from a base seed and a salt
/// (splitmix64 finalizer). Used to give workload streams, policies, and
/// training episodes decoupled randomness.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace header must be `task_id,type,source_uav,arrival_time`, got `{0}`")]
    BadHeader(String),
    #[error("trace line {line}: {message}")]
    BadLine { line: usize, message: String },
    #[error("trace task {task}: kind {kind} is not in the configured catalog")]
    UnknownKind { task: usize, kind: TaskKind },
    #[error("trace task {task}: source {source_uav} is not a UAV (n_uavs = {n_uavs})")]
    BadSource {
        task: usize,
        source_uav: usize,
        n_uavs: usize,
    },
    #[error("trace task {task}: arrival {arrival} is negative")]
    NegativeArrival { task: usize, arrival: f64 },
    #[error("trace is not sorted by arrival time at task {task}")]
    Unsorted { task: usize },
}

// ---------------------------------------------------------------------------
// Events
// ---------------------------------------------------------------------------

/// What happens at an event. The discriminant order is the dispatch rank for
/// simultaneous events: completions land first so backlog snapshots taken at
/// decision time are well-defined, then deliveries, decisions, and starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    /// A CPU finishes a task.
    Completion { task: usize, cpu: CpuId },
    /// A task becomes present at a CPU: its initial arrival at the source
    /// UAV, or its delivery after an offload hop.
    Arrival { task: usize, cpu: CpuId },
    /// The receiving UAV must place the task.
    DecisionRequired { task: usize, uav: CpuId },
    /// A CPU pulls the head of its queue into service.
    StartProcessing { task: usize, cpu: CpuId },
}

impl EventKind {
    fn rank(&self) -> u8 {
        match self {
            EventKind::Completion { .. } => 0,
            EventKind::Arrival { .. } => 1,
            EventKind::DecisionRequired { .. } => 2,
            EventKind::StartProcessing { .. } => 3,
        }
    }

    fn task(&self) -> usize {
        match *self {
            EventKind::Completion { task, .. }
            | EventKind::Arrival { task, .. }
            | EventKind::DecisionRequired { task, .. }
            | EventKind::StartProcessing { task, .. } => task,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Event<T> {
    time: T,
    kind: EventKind,
}

impl<T: Scalar> Event<T> {
    fn key(&self) -> (T, u8, usize) {
        (self.time, self.kind.rank(), self.kind.task())
    }
}

impl<T: Scalar> PartialEq for Event<T> {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}
impl<T: Scalar> Eq for Event<T> {}

impl<T: Scalar> PartialOrd for Event<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Scalar> Ord for Event<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        let (ta, ra, ia) = self.key();
        let (tb, rb, ib) = other.key();
        ta.partial_cmp(&tb)
            .expect("event times are finite")
            .then(ra.cmp(&rb))
            .then(ia.cmp(&ib))
    }
}

// ---------------------------------------------------------------------------
// Per-CPU queue state
// ---------------------------------------------------------------------------

/// FIFO queue and service state of one CPU. A CPU serves one task at a time;
/// tasks start in the order they joined the queue.
#[derive(Debug, Clone)]
struct CpuQueue<T> {
    pending: VecDeque<usize>,
    /// Sum of the processing times of the queued (not yet started) tasks.
    pending_work: T,
    /// `(task, start_time, busy_until)` while serving.
    serving: Option<(usize, T, T)>,
    start_scheduled: bool,
    busy_completed: T,
}

impl<T: Scalar> CpuQueue<T> {
    fn new() -> Self {
        CpuQueue {
            pending: VecDeque::new(),
            pending_work: T::zero(),
            serving: None,
            start_scheduled: false,
            busy_completed: T::zero(),
        }
    }

    /// Seconds of work ahead of a newly queued task: residual service time
    /// of the in-flight task plus the queued processing times.
    fn backlog(&self, now: T) -> T {
        let residual = match self.serving {
            Some((_, _, busy_until)) => (busy_until - now).max(T::zero()),
            None => T::zero(),
        };
        self.pending_work + residual
    }

    /// Busy seconds accumulated up to `now`, counting the in-flight task's
    /// elapsed portion.
    fn busy_at(&self, now: T) -> T {
        match self.serving {
            Some((_, start, _)) => self.busy_completed + (now - start),
            None => self.busy_completed,
        }
    }

    fn is_actively_serving(&self) -> bool {
        self.serving.is_some()
    }
}

// ---------------------------------------------------------------------------
// Outcomes and metrics
// ---------------------------------------------------------------------------

/// Final record of one task's journey through the network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TaskOutcome<T> {
    pub task_id: usize,
    pub assigned_cpu: CpuId,
    pub start_time: T,
    pub completion_time: T,
    /// Completion minus arrival: queueing plus processing (plus any offload
    /// hop).
    pub total_delay: T,
    /// True iff the delay strictly exceeds the deadline; hitting the
    /// deadline exactly is not a violation.
    pub violated: bool,
}

/// Per-run key performance indicators.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics<T> {
    pub policy: String,
    /// Seed that generated the workload; recorded by the harness.
    pub seed: u64,
    pub total_tasks: usize,
    pub violations_total: usize,
    pub violations_per_cpu: Vec<usize>,
    /// Remaining battery percentage per UAV at the end of the run. Not
    /// clamped; negative means the battery ran out.
    pub remaining_pct_per_uav: Vec<T>,
    /// When the run ended: the horizon, or later if queues drained past it.
    pub run_end: T,
    /// First instant each UAV's battery hit zero, if it did.
    pub battery_exhausted_at: Vec<Option<T>>,
    pub outcomes: Vec<TaskOutcome<T>>,
}

impl<T: Scalar> RunMetrics<T> {
    pub fn violation_pct(&self) -> T {
        if self.total_tasks == 0 {
            T::zero()
        } else {
            T::lit(100.0) * T::from_count(self.violations_total) / T::from_count(self.total_tasks)
        }
    }

    pub fn min_remaining_pct(&self) -> T {
        self.remaining_pct_per_uav
            .iter()
            .copied()
            .fold(T::infinity(), T::min)
    }
}

// ---------------------------------------------------------------------------
// Workload generation
// ---------------------------------------------------------------------------

/// Draws the full arrival sequence for one run: per UAV and task kind, an
/// independent exponential inter-arrival stream with the catalog mean,
/// truncated at the horizon. Deterministic for a given seed; streams are
/// decoupled so changing the fleet size does not reshuffle everything.
pub fn generate_workload<T: Scalar>(cfg: &SimConfig<T>, seed: u64) -> Vec<Task<T>> {
    let k_count = cfg.task_catalog.len();
    let mut arrivals: Vec<(T, usize, usize)> = Vec::new();
    for uav in 0..cfg.n_uavs {
        for (ki, tt) in cfg.task_catalog.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream((uav * k_count + ki) as u64);
            let mut t = T::zero();
            loop {
                let u: f64 = rng.random();
                t += tt.mean_interarrival * T::lit(-(1.0 - u).ln());
                // Negated so a NaN draw terminates the stream.
                #[allow(clippy::neg_cmp_op_on_partial_ord)]
                if !(t < cfg.horizon) {
                    break;
                }
                arrivals.push((t, uav, ki));
            }
        }
    }
    arrivals.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .expect("arrival times are finite")
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    arrivals
        .into_iter()
        .enumerate()
        .map(|(id, (t, uav, ki))| Task {
            id,
            kind: cfg.task_catalog[ki].kind,
            source_uav: CpuId(uav),
            arrival_time: t,
            offloaded: false,
        })
        .collect()
}

/// Validates a workload against a configuration: kinds in the catalog,
/// sources are UAVs, arrivals nonnegative and sorted.
pub fn check_workload<T: Scalar>(
    cfg: &SimConfig<T>,
    workload: &[Task<T>],
) -> Result<(), TraceError> {
    let mut prev = T::zero();
    for task in workload {
        if !cfg.task_catalog.iter().any(|tt| tt.kind == task.kind) {
            return Err(TraceError::UnknownKind {
                task: task.id,
                kind: task.kind,
            });
        }
        if task.source_uav.index() >= cfg.n_uavs {
            return Err(TraceError::BadSource {
                task: task.id,
                source_uav: task.source_uav.index(),
                n_uavs: cfg.n_uavs,
            });
        }
        if task.arrival_time < T::zero() {
            return Err(TraceError::NegativeArrival {
                task: task.id,
                arrival: task.arrival_time.to_f64().unwrap_or(f64::NAN),
            });
        }
        if task.arrival_time < prev {
            return Err(TraceError::Unsorted { task: task.id });
        }
        prev = task.arrival_time;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Prediction helpers
// ---------------------------------------------------------------------------

/// Delay the task would see if placed on `candidate` right now: the
/// candidate's current backlog, the offload hop if the candidate is not the
/// receiving UAV, and the processing time of the candidate's CPU class.
pub fn predicted_delay<T: Scalar>(
    cfg: &SimConfig<T>,
    snapshot: &NetworkSnapshot<T>,
    task: &Task<T>,
    candidate: CpuId,
) -> T {
    let hop = if candidate == task.source_uav {
        T::zero()
    } else {
        cfg.offload_latency
    };
    snapshot.backlogs[candidate.index()] + hop + cfg.proc_time(task.kind, candidate)
}

/// Pure prediction: would placing the task on `candidate` blow its deadline?
/// Exactly meeting the deadline is not a violation.
pub fn expected_violation<T: Scalar>(
    cfg: &SimConfig<T>,
    snapshot: &NetworkSnapshot<T>,
    task: &Task<T>,
    candidate: CpuId,
) -> bool {
    predicted_delay(cfg, snapshot, task, candidate) > cfg.task_type(task.kind).deadline
}

// ---------------------------------------------------------------------------
// The engine
// ---------------------------------------------------------------------------

struct Engine<'a, T: Scalar> {
    cfg: &'a SimConfig<T>,
    tasks: Vec<Task<T>>,
    queues: Vec<CpuQueue<T>>,
    heap: BinaryHeap<std::cmp::Reverse<Event<T>>>,
    outcomes: Vec<Option<TaskOutcome<T>>>,
    exhausted_at: Vec<Option<T>>,
    now: T,
}

impl<'a, T: Scalar> Engine<'a, T> {
    fn schedule(&mut self, time: T, kind: EventKind) {
        self.heap.push(std::cmp::Reverse(Event { time, kind }));
    }

    fn snapshot(&self, receiver: CpuId) -> NetworkSnapshot<T> {
        let now = self.now;
        let backlogs = self.queues.iter().map(|q| q.backlog(now)).collect();
        let uav_remaining = (0..self.cfg.n_uavs)
            .map(|u| {
                let ledger = EnergyLedger {
                    cpu_id: CpuId(u),
                    busy_seconds: self.queues[u].busy_at(now),
                    elapsed_seconds: now,
                };
                remaining_energy(&self.cfg.energy, &ledger)
            })
            .collect();
        NetworkSnapshot {
            now,
            receiver,
            backlogs,
            uav_remaining,
        }
    }

    /// Moves the clock to `next`, recording the exact instant any UAV's
    /// battery crosses zero. Service states are constant between events, so
    /// each battery drains linearly over the segment.
    fn advance_clock(&mut self, next: T) {
        if next <= self.now {
            self.now = self.now.max(next);
            return;
        }
        let params = &self.cfg.energy;
        for u in 0..self.cfg.n_uavs {
            if self.exhausted_at[u].is_some() {
                continue;
            }
            let ledger = EnergyLedger {
                cpu_id: CpuId(u),
                busy_seconds: self.queues[u].busy_at(self.now),
                elapsed_seconds: self.now,
            };
            let at_now = remaining_energy(params, &ledger);
            let rate = if self.queues[u].is_actively_serving() {
                params.idle_drain() + params.active_extra()
            } else {
                params.idle_drain()
            };
            if rate <= T::zero() {
                continue;
            }
            let at_next = at_now - rate * (next - self.now);
            if at_now > T::zero() && at_next <= T::zero() {
                self.exhausted_at[u] = Some(self.now + at_now / rate);
            } else if at_now <= T::zero() {
                // Drained before the first event of the segment.
                self.exhausted_at[u] = Some(self.now);
            }
        }
        self.now = next;
    }

    fn enqueue(&mut self, task: usize, cpu: CpuId) {
        let proc = self.cfg.proc_time(self.tasks[task].kind, cpu);
        let q = &mut self.queues[cpu.index()];
        q.pending.push_back(task);
        q.pending_work += proc;
        if q.serving.is_none() && !q.start_scheduled {
            q.start_scheduled = true;
            let head = *q.pending.front().expect("just pushed");
            self.schedule(self.now, EventKind::StartProcessing { task: head, cpu });
        }
    }

    fn handle(&mut self, kind: EventKind, policy: &mut (impl Policy<T> + ?Sized)) {
        match kind {
            EventKind::Completion { task, cpu } => {
                let q = &mut self.queues[cpu.index()];
                let (serving, start, busy_until) =
                    q.serving.take().expect("completion while serving");
                debug_assert_eq!(serving, task);
                q.busy_completed += busy_until - start;
                let record = &self.tasks[task];
                let deadline = self.cfg.task_type(record.kind).deadline;
                let delay = self.now - record.arrival_time;
                self.outcomes[task] = Some(TaskOutcome {
                    task_id: record.id,
                    assigned_cpu: cpu,
                    start_time: start,
                    completion_time: self.now,
                    total_delay: delay,
                    violated: delay > deadline,
                });
                let q = &mut self.queues[cpu.index()];
                if !q.pending.is_empty() && !q.start_scheduled {
                    q.start_scheduled = true;
                    let head = *q.pending.front().expect("pending non-empty");
                    self.schedule(self.now, EventKind::StartProcessing { task: head, cpu });
                }
            }
            EventKind::Arrival { task, cpu } => {
                if !self.tasks[task].offloaded && cpu == self.tasks[task].source_uav {
                    self.schedule(self.now, EventKind::DecisionRequired { task, uav: cpu });
                } else {
                    self.enqueue(task, cpu);
                }
            }
            EventKind::DecisionRequired { task, uav } => {
                let snapshot = self.snapshot(uav);
                let choice = policy.decide(&self.tasks[task], &snapshot);
                assert!(
                    choice.index() < self.cfg.cpu_count(),
                    "policy {} returned invalid cpu {choice}",
                    policy.name()
                );
                if choice == uav {
                    self.enqueue(task, uav);
                } else {
                    self.tasks[task].offloaded = true;
                    self.schedule(
                        self.now + self.cfg.offload_latency,
                        EventKind::Arrival { task, cpu: choice },
                    );
                }
            }
            EventKind::StartProcessing { task, cpu } => {
                let proc = {
                    let q = &mut self.queues[cpu.index()];
                    q.start_scheduled = false;
                    debug_assert!(q.serving.is_none());
                    let head = q.pending.pop_front().expect("start with pending task");
                    debug_assert_eq!(head, task);
                    self.cfg.proc_time(self.tasks[head].kind, cpu)
                };
                let q = &mut self.queues[cpu.index()];
                q.pending_work -= proc;
                let busy_until = self.now + proc;
                q.serving = Some((task, self.now, busy_until));
                self.schedule(busy_until, EventKind::Completion { task, cpu });
            }
        }
    }
}

/// Runs the workload to completion under `policy` and returns the KPIs.
///
/// Each task triggers exactly one placement decision, at its arrival on the
/// source UAV. Delegated tasks reach the chosen CPU after the configured
/// offload latency and are processed where they land. CPUs serve one task at
/// a time, FIFO. Violated tasks still run to completion. The run extends
/// past the horizon until every queue drains; all ledgers share that end
/// time. Battery exhaustion is reported in the metrics, never a panic.
pub fn run<T: Scalar>(
    cfg: &SimConfig<T>,
    workload: &[Task<T>],
    policy: &mut (impl Policy<T> + ?Sized),
) -> RunMetrics<T> {
    debug_assert!(
        workload
            .windows(2)
            .all(|w| w[0].arrival_time <= w[1].arrival_time),
        "workload must be time-ordered"
    );
    let n_tasks = workload.len();
    let mut engine = Engine {
        cfg,
        tasks: workload.to_vec(),
        queues: (0..cfg.cpu_count()).map(|_| CpuQueue::new()).collect(),
        heap: BinaryHeap::new(),
        outcomes: vec![None; n_tasks],
        exhausted_at: vec![None; cfg.n_uavs],
        now: T::zero(),
    };
    // Events identify tasks by position; outcomes report the caller's ids.
    for pos in 0..n_tasks {
        let (time, cpu) = (engine.tasks[pos].arrival_time, engine.tasks[pos].source_uav);
        engine.heap.push(std::cmp::Reverse(Event {
            time,
            kind: EventKind::Arrival { task: pos, cpu },
        }));
    }

    while let Some(std::cmp::Reverse(event)) = engine.heap.pop() {
        engine.advance_clock(event.time);
        engine.handle(event.kind, policy);
    }

    let run_end = engine.now.max(cfg.horizon);
    engine.advance_clock(run_end);

    let outcomes: Vec<TaskOutcome<T>> = engine
        .outcomes
        .into_iter()
        .map(|o| o.expect("every task completes"))
        .collect();
    let mut violations_per_cpu = vec![0usize; cfg.cpu_count()];
    for o in &outcomes {
        if o.violated {
            violations_per_cpu[o.assigned_cpu.index()] += 1;
        }
    }
    let remaining_pct_per_uav = (0..cfg.n_uavs)
        .map(|u| {
            let ledger = EnergyLedger {
                cpu_id: CpuId(u),
                busy_seconds: engine.queues[u].busy_completed,
                elapsed_seconds: run_end,
            };
            remaining_percentage(&cfg.energy, &ledger)
        })
        .collect();

    RunMetrics {
        policy: policy.name().to_string(),
        seed: 0,
        total_tasks: n_tasks,
        violations_total: violations_per_cpu.iter().sum(),
        violations_per_cpu,
        remaining_pct_per_uav,
        run_end,
        battery_exhausted_at: engine.exhausted_at,
        outcomes,
    }
}

// ---------------------------------------------------------------------------
// Workload trace interchange
// ---------------------------------------------------------------------------

pub const TRACE_HEADER: &str = "task_id,type,source_uav,arrival_time";

/// Serializes a workload as line-delimited records.
pub fn write_trace<T: Scalar>(workload: &[Task<T>]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for task in workload {
        out.push_str(&format!(
            "{},{},{},{}\n",
            task.id,
            task.kind,
            task.source_uav.index(),
            task.arrival_time
        ));
    }
    out
}

/// Parses a workload trace produced by [`write_trace`].
pub fn parse_trace<T: Scalar>(text: &str) -> Result<Vec<Task<T>>, TraceError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == TRACE_HEADER => {}
        Some((_, header)) => return Err(TraceError::BadHeader(header.to_string())),
        None => return Err(TraceError::BadHeader(String::new())),
    }
    let mut tasks = Vec::new();
    for (lineno, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let bad = |message: String| TraceError::BadLine {
            line: lineno + 1,
            message,
        };
        if fields.len() != 4 {
            return Err(bad(format!("expected 4 fields, got {}", fields.len())));
        }
        let id: usize = fields[0]
            .parse()
            .map_err(|e| bad(format!("task_id: {e}")))?;
        let kind = TaskKind::parse(fields[1])
            .ok_or_else(|| bad(format!("unknown task type `{}`", fields[1])))?;
        let source: usize = fields[2]
            .parse()
            .map_err(|e| bad(format!("source_uav: {e}")))?;
        let arrival: f64 = fields[3]
            .parse()
            .map_err(|e| bad(format!("arrival_time: {e}")))?;
        tasks.push(Task {
            id,
            kind,
            source_uav: CpuId(source),
            arrival_time: T::lit(arrival),
            offloaded: false,
        });
    }
    Ok(tasks)
}
