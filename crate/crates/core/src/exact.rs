//! Interval-indexed exact optimization: instance construction from a
//! workload trace, a declarative feasibility validator, a depth-first
//! branch-and-bound solver, and LP-format export for external solvers.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use crate::model::{validate_config_for_exact, EnergyParams, SimConfig, Task};
use crate::scalar::Scalar;
use crate::sim::TaskOutcome;

#[derive(Debug, Error)]
pub enum ExactError {
    #[error("configuration unusable for the interval model: {0}")]
    BadConfig(String),
    #[error("tasks {first} and {second} both arrive at (uav {uav}, interval {interval}); the interval model admits one arrival per UAV per interval")]
    ArrivalCollision {
        first: usize,
        second: usize,
        uav: usize,
        interval: usize,
    },
    #[error("task {task}: {quantity} {value} is not aligned to the interval grid")]
    Misaligned {
        task: usize,
        quantity: &'static str,
        value: f64,
    },
    #[error("task {task} cannot finish before the horizon on any CPU")]
    TaskCannotFit { task: usize },
    #[error("placement of task {task} on cpu {cpu} at interval {start} is out of range")]
    BadPlacement {
        task: usize,
        cpu: usize,
        start: usize,
    },
    #[error("no feasible schedule exists for this instance")]
    Infeasible,
    #[error("time budget exhausted before any feasible schedule was found")]
    BudgetExhausted,
    #[error("schedule is infeasible: {0:?}")]
    InfeasibleSchedule(Vec<String>),
}

// ---------------------------------------------------------------------------
// Instance
// ---------------------------------------------------------------------------

/// One task in interval units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct IlpTask {
    pub id: usize,
    /// Receiving UAV index.
    pub source: usize,
    /// Arrival interval (floored onto the grid).
    pub arrival: usize,
    /// Processing length in intervals on a UAV CPU.
    pub proc_uav: usize,
    /// Processing length in intervals on an edge CPU.
    pub proc_mec: usize,
    /// Deadline in intervals; a delay strictly above it is a violation.
    pub deadline: usize,
}

/// The optimization instance: discretized tasks plus the objective data.
#[derive(Debug, Clone, PartialEq)]
pub struct IlpInstance<T> {
    pub n_uavs: usize,
    pub n_mec: usize,
    pub n_intervals: usize,
    pub interval_len: T,
    pub tasks: Vec<IlpTask>,
    /// Objective weight between energy (1) and violations (0).
    pub weight: T,
    /// Violation-count normalizer.
    pub theta: T,
    pub energy: EnergyParams<T>,
    /// Big-M constant for the deadline linearization; exceeds any
    /// achievable delay.
    pub big_m: usize,
}

impl<T: Scalar> IlpInstance<T> {
    #[inline]
    pub fn n_cpus(&self) -> usize {
        self.n_uavs + self.n_mec
    }

    #[inline]
    pub fn is_mec(&self, cpu: usize) -> bool {
        cpu >= self.n_uavs
    }

    /// Processing length of a task on a CPU, in intervals.
    #[inline]
    pub fn proc_len(&self, task: usize, cpu: usize) -> usize {
        if self.is_mec(cpu) {
            self.tasks[task].proc_mec
        } else {
            self.tasks[task].proc_uav
        }
    }

    /// Always-on battery drain per interval.
    #[inline]
    pub fn idle_per_interval(&self) -> T {
        self.energy.idle_drain() * self.interval_len
    }

    /// Extra battery drain per busy interval.
    #[inline]
    pub fn extra_per_interval(&self) -> T {
        self.energy.active_extra() * self.interval_len
    }

    /// Remaining energy of a UAV that spent `busy_intervals` processing.
    pub fn uav_remaining(&self, busy_intervals: usize) -> T {
        self.energy.battery_capacity
            - self.idle_per_interval() * T::from_count(self.n_intervals)
            - self.extra_per_interval() * T::from_count(busy_intervals)
    }

    /// Objective: `W * min_uav_remaining - (1 - W) / theta * violations`.
    pub fn objective_value(&self, min_uav_remaining: T, violations: usize) -> T {
        self.weight * min_uav_remaining
            - (T::one() - self.weight) / self.theta * T::from_count(violations)
    }
}

/// Nearest integer multiple when `value` sits on the grid, within relative
/// round-off tolerance.
fn grid_intervals<T: Scalar>(value: T, step: T) -> Option<usize> {
    let ratio = (value / step).to_f64()?;
    let nearest = ratio.round();
    if nearest >= 0.0 && (ratio - nearest).abs() <= 1e-9 * (1.0 + nearest.abs()) {
        Some(nearest as usize)
    } else {
        None
    }
}

fn floor_intervals<T: Scalar>(value: T, step: T) -> usize {
    grid_intervals(value, step).unwrap_or_else(|| {
        (value / step)
            .to_f64()
            .expect("finite ratio")
            .floor()
            .max(0.0) as usize
    })
}

fn ceil_intervals<T: Scalar>(value: T, step: T) -> usize {
    grid_intervals(value, step).unwrap_or_else(|| {
        (value / step)
            .to_f64()
            .expect("finite ratio")
            .ceil()
            .max(0.0) as usize
    })
}

/// Floors every arrival in a workload onto the interval grid so that a
/// simulation run of it stays grid-aligned. Rejects colliding arrivals.
pub fn discretize_workload<T: Scalar>(
    cfg: &SimConfig<T>,
    workload: &[Task<T>],
) -> Result<Vec<Task<T>>, ExactError> {
    let step = cfg.interval_len;
    let mut seen: HashMap<(usize, usize), usize> = HashMap::new();
    let mut out = Vec::with_capacity(workload.len());
    for task in workload {
        let interval = floor_intervals(task.arrival_time, step);
        if let Some(&first) = seen.get(&(task.source_uav.index(), interval)) {
            return Err(ExactError::ArrivalCollision {
                first,
                second: task.id,
                uav: task.source_uav.index(),
                interval,
            });
        }
        seen.insert((task.source_uav.index(), interval), task.id);
        out.push(Task {
            arrival_time: T::from_count(interval) * step,
            ..*task
        });
    }
    Ok(out)
}

fn build_instance_inner<T: Scalar>(
    cfg: &SimConfig<T>,
    workload: &[Task<T>],
    n_intervals: usize,
) -> Result<IlpInstance<T>, ExactError> {
    let issues = validate_config_for_exact(cfg);
    if !issues.is_empty() {
        return Err(ExactError::BadConfig(issues.join("; ")));
    }
    let step = cfg.interval_len;
    let mut tasks = Vec::with_capacity(workload.len());
    let mut seen: HashMap<(usize, usize), usize> = HashMap::new();
    let mut max_proc = 0usize;
    let mut max_deadline = 0usize;
    for task in workload {
        let tt = cfg.task_type(task.kind);
        let arrival = floor_intervals(task.arrival_time, step);
        if let Some(&first) = seen.get(&(task.source_uav.index(), arrival)) {
            return Err(ExactError::ArrivalCollision {
                first,
                second: task.id,
                uav: task.source_uav.index(),
                interval: arrival,
            });
        }
        seen.insert((task.source_uav.index(), arrival), task.id);
        let proc_uav = grid_intervals(tt.proc_time_uav, step).ok_or(ExactError::Misaligned {
            task: task.id,
            quantity: "proc_time_uav",
            value: tt.proc_time_uav.to_f64().unwrap_or(f64::NAN),
        })?;
        let proc_mec = grid_intervals(tt.proc_time_mec, step).ok_or(ExactError::Misaligned {
            task: task.id,
            quantity: "proc_time_mec",
            value: tt.proc_time_mec.to_f64().unwrap_or(f64::NAN),
        })?;
        if proc_uav == 0 || proc_mec == 0 {
            return Err(ExactError::BadConfig(format!(
                "task {} has a processing time below one interval",
                task.id
            )));
        }
        max_proc = max_proc.max(proc_uav).max(proc_mec);
        let deadline = floor_intervals(tt.deadline, step);
        max_deadline = max_deadline.max(deadline);
        tasks.push(IlpTask {
            id: task.id,
            source: task.source_uav.index(),
            arrival,
            proc_uav,
            proc_mec,
            deadline,
        });
    }
    let theta = cfg.theta.unwrap_or_else(|| {
        if tasks.is_empty() {
            T::one()
        } else {
            // One violation weighs like a 1% battery swing at W = 0.5.
            T::from_count(tasks.len()) / (T::lit(0.01) * cfg.energy.battery_capacity)
        }
    });
    Ok(IlpInstance {
        n_uavs: cfg.n_uavs,
        n_mec: cfg.n_mec,
        n_intervals,
        interval_len: step,
        tasks,
        weight: cfg.weight,
        theta,
        energy: cfg.energy,
        // Must dominate any achievable delay AND any deadline, or the
        // linearized constraint pair pins the wrong flag on tasks whose
        // deadline stretches past the horizon.
        big_m: (n_intervals + max_proc + 1).max(max_deadline + 1),
    })
}

/// Discretizes a workload trace into an optimization instance over
/// `ceil(horizon / interval_len)` intervals. Arrival times are floored onto
/// the grid; two arrivals landing on the same (UAV, interval) slot are
/// rejected rather than merged.
pub fn build_instance<T: Scalar>(
    cfg: &SimConfig<T>,
    workload: &[Task<T>],
) -> Result<IlpInstance<T>, ExactError> {
    build_instance_inner(cfg, workload, ceil_intervals(cfg.horizon, cfg.interval_len))
}

// ---------------------------------------------------------------------------
// Schedule
// ---------------------------------------------------------------------------

/// A complete variable assignment: offload choices, interval allocations
/// with start/end markers, and violation flags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    pub n_tasks: usize,
    pub n_cpus: usize,
    pub n_intervals: usize,
    x: Vec<bool>,
    p: Vec<bool>,
    p_start: Vec<bool>,
    p_end: Vec<bool>,
    v: Vec<bool>,
}

impl Schedule {
    pub fn zeroed(n_tasks: usize, n_cpus: usize, n_intervals: usize) -> Self {
        Schedule {
            n_tasks,
            n_cpus,
            n_intervals,
            x: vec![false; n_tasks * n_cpus],
            p: vec![false; n_tasks * n_cpus * n_intervals],
            p_start: vec![false; n_tasks * n_cpus * n_intervals],
            p_end: vec![false; n_tasks * n_cpus * n_intervals],
            v: vec![false; n_tasks],
        }
    }

    #[inline]
    fn xi(&self, task: usize, cpu: usize) -> usize {
        task * self.n_cpus + cpu
    }

    #[inline]
    fn pi(&self, task: usize, cpu: usize, interval: usize) -> usize {
        (task * self.n_cpus + cpu) * self.n_intervals + interval
    }

    pub fn x(&self, task: usize, cpu: usize) -> bool {
        self.x[self.xi(task, cpu)]
    }

    pub fn set_x(&mut self, task: usize, cpu: usize, value: bool) {
        let i = self.xi(task, cpu);
        self.x[i] = value;
    }

    pub fn p(&self, task: usize, cpu: usize, interval: usize) -> bool {
        self.p[self.pi(task, cpu, interval)]
    }

    pub fn set_p(&mut self, task: usize, cpu: usize, interval: usize, value: bool) {
        let i = self.pi(task, cpu, interval);
        self.p[i] = value;
    }

    pub fn p_start(&self, task: usize, cpu: usize, interval: usize) -> bool {
        self.p_start[self.pi(task, cpu, interval)]
    }

    pub fn set_p_start(&mut self, task: usize, cpu: usize, interval: usize, value: bool) {
        let i = self.pi(task, cpu, interval);
        self.p_start[i] = value;
    }

    pub fn p_end(&self, task: usize, cpu: usize, interval: usize) -> bool {
        self.p_end[self.pi(task, cpu, interval)]
    }

    pub fn set_p_end(&mut self, task: usize, cpu: usize, interval: usize, value: bool) {
        let i = self.pi(task, cpu, interval);
        self.p_end[i] = value;
    }

    pub fn violated(&self, task: usize) -> bool {
        self.v[task]
    }

    pub fn set_violated(&mut self, task: usize, value: bool) {
        self.v[task] = value;
    }

    pub fn total_violations(&self) -> usize {
        self.v.iter().filter(|&&v| v).count()
    }

    /// Allocated intervals per CPU, counting every `p` entry.
    pub fn busy_per_cpu(&self) -> Vec<usize> {
        let mut busy = vec![0usize; self.n_cpus];
        for task in 0..self.n_tasks {
            for (cpu, slot) in busy.iter_mut().enumerate() {
                for interval in 0..self.n_intervals {
                    if self.p(task, cpu, interval) {
                        *slot += 1;
                    }
                }
            }
        }
        busy
    }

    /// `(cpu, start)` per task, derived from the start markers. `None` for
    /// unassigned tasks.
    pub fn assignments(&self) -> Vec<Option<(usize, usize)>> {
        (0..self.n_tasks)
            .map(|task| {
                (0..self.n_cpus).find_map(|cpu| {
                    (0..self.n_intervals)
                        .find(|&i| self.p_start(task, cpu, i))
                        .map(|start| (cpu, start))
                })
            })
            .collect()
    }

    /// Builds the full variable assignment implied by one contiguous block
    /// per task: the allocation run, its start/end markers, the offload
    /// choice, and the violation flag from the interval delay.
    pub fn from_assignments<T: Scalar>(
        instance: &IlpInstance<T>,
        placements: &[(usize, usize)],
    ) -> Result<Schedule, ExactError> {
        assert_eq!(placements.len(), instance.tasks.len());
        let mut schedule = Schedule::zeroed(
            instance.tasks.len(),
            instance.n_cpus(),
            instance.n_intervals,
        );
        for (task, &(cpu, start)) in placements.iter().enumerate() {
            let len = instance.proc_len(task, cpu);
            let arrival = instance.tasks[task].arrival;
            if cpu >= instance.n_cpus() || start < arrival || start + len > instance.n_intervals {
                return Err(ExactError::BadPlacement { task, cpu, start });
            }
            schedule.set_x(task, cpu, true);
            for interval in start..start + len {
                schedule.set_p(task, cpu, interval, true);
            }
            schedule.set_p_start(task, cpu, start, true);
            if start + len < instance.n_intervals {
                schedule.set_p_end(task, cpu, start + len, true);
            }
            let delay = start - arrival + len;
            schedule.set_violated(task, delay > instance.tasks[task].deadline);
        }
        Ok(schedule)
    }
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

/// Checks every constraint family and returns the violated ones as
/// human-readable identifiers; an empty list means the schedule is feasible.
pub fn validate<T: Scalar>(instance: &IlpInstance<T>, schedule: &Schedule) -> Vec<String> {
    let mut out = Vec::new();
    let (n_tasks, n_cpus, n_int) = (
        instance.tasks.len(),
        instance.n_cpus(),
        instance.n_intervals,
    );
    if (schedule.n_tasks, schedule.n_cpus, schedule.n_intervals) != (n_tasks, n_cpus, n_int) {
        out.push(format!(
            "dimensions: schedule is {}x{}x{}, instance needs {}x{}x{}",
            schedule.n_tasks, schedule.n_cpus, schedule.n_intervals, n_tasks, n_cpus, n_int
        ));
        return out;
    }

    for (ti, task) in instance.tasks.iter().enumerate() {
        let chosen: Vec<usize> = (0..n_cpus).filter(|&c| schedule.x(ti, c)).collect();
        // Offload limit: the whole task runs on a single CPU.
        if chosen.len() > 1 {
            out.push(format!(
                "offload-limit(task {ti}): {} CPUs chosen",
                chosen.len()
            ));
        }
        // Allocation: the chosen CPU carries exactly the processing length,
        // all of it at or after the arrival.
        let mut allocated = 0usize;
        let mut early = 0usize;
        for &c in &chosen {
            for interval in 0..n_int {
                if schedule.p(ti, c, interval) {
                    if interval >= task.arrival {
                        allocated += 1;
                    } else {
                        early += 1;
                    }
                }
            }
        }
        let required = chosen.first().map(|&c| instance.proc_len(ti, c));
        match required {
            None => out.push(format!("allocation(task {ti}): no CPU chosen")),
            Some(req) if allocated != req => out.push(format!(
                "allocation(task {ti}): {allocated} intervals allocated, needs {req}"
            )),
            _ => {}
        }
        if early > 0 {
            out.push(format!(
                "pre-arrival(task {ti}): {early} intervals allocated before interval {}",
                task.arrival
            ));
        }
        // Any allocation on an unchosen CPU breaks the x/p coupling.
        for c in 0..n_cpus {
            if chosen.contains(&c) {
                continue;
            }
            if (0..n_int).any(|i| schedule.p(ti, c, i)) {
                out.push(format!(
                    "coupling(task {ti}): allocation on unchosen cpu {c}"
                ));
            }
        }
    }

    // Per-CPU capacity: one task per interval, one start, one end.
    for cpu in 0..n_cpus {
        for interval in 0..n_int {
            let served = (0..n_tasks)
                .filter(|&t| schedule.p(t, cpu, interval))
                .count();
            if served > 1 {
                out.push(format!(
                    "cpu-capacity(cpu {cpu}, interval {interval}): {served} tasks"
                ));
            }
            let starts = (0..n_tasks)
                .filter(|&t| schedule.p_start(t, cpu, interval))
                .count();
            if starts > 1 {
                out.push(format!(
                    "cpu-capacity-start(cpu {cpu}, interval {interval}): {starts} starts"
                ));
            }
            let ends = (0..n_tasks)
                .filter(|&t| schedule.p_end(t, cpu, interval))
                .count();
            if ends > 1 {
                out.push(format!(
                    "cpu-capacity-end(cpu {cpu}, interval {interval}): {ends} ends"
                ));
            }
        }
    }

    // Per-task single-CPU occupancy in any one interval.
    for task in 0..n_tasks {
        for interval in 0..n_int {
            let on = (0..n_cpus)
                .filter(|&c| schedule.p(task, c, interval))
                .count();
            if on > 1 {
                out.push(format!(
                    "single-cpu(task {task}, interval {interval}): {on} CPUs"
                ));
            }
        }
    }

    // Contiguity chain with start/end markers.
    for task in 0..n_tasks {
        for cpu in 0..n_cpus {
            if schedule.p(task, cpu, 0) != schedule.p_start(task, cpu, 0) {
                out.push(format!("contiguity-first(task {task}, cpu {cpu})"));
            }
            for interval in 1..n_int {
                let lhs = schedule.p(task, cpu, interval) as i32;
                let rhs = schedule.p(task, cpu, interval - 1) as i32
                    + schedule.p_start(task, cpu, interval) as i32
                    - schedule.p_end(task, cpu, interval) as i32;
                if lhs != rhs {
                    out.push(format!(
                        "contiguity-chain(task {task}, cpu {cpu}, interval {interval})"
                    ));
                }
                if schedule.p_start(task, cpu, interval) && schedule.p_end(task, cpu, interval) {
                    out.push(format!(
                        "contiguity-pingpong(task {task}, cpu {cpu}, interval {interval})"
                    ));
                }
            }
            let starts = (0..n_int)
                .filter(|&i| schedule.p_start(task, cpu, i))
                .count();
            if starts > 1 {
                out.push(format!(
                    "start-limit(task {task}, cpu {cpu}): {starts} starts"
                ));
            }
            let ends = (0..n_int).filter(|&i| schedule.p_end(task, cpu, i)).count();
            if ends > 1 {
                out.push(format!("end-limit(task {task}, cpu {cpu}): {ends} ends"));
            }
        }
    }

    // Delay and deadline-violation linkage under the big-M pair.
    for (ti, task) in instance.tasks.iter().enumerate() {
        let start = (0..n_cpus).find_map(|c| {
            (0..n_int)
                .find(|&i| schedule.p_start(ti, c, i))
                .map(|i| (c, i))
        });
        let Some((cpu, start)) = start else { continue };
        let delay = start as i64 - task.arrival as i64 + instance.proc_len(ti, cpu) as i64;
        let deadline = task.deadline as i64;
        let big_m = instance.big_m as i64;
        let v = schedule.violated(ti) as i64;
        if deadline < delay - big_m * v {
            out.push(format!(
                "deadline-bigm(task {ti}): delay {delay} > deadline {deadline} but flag is {v}"
            ));
        }
        if deadline > delay + big_m * (1 - v) {
            out.push(format!(
                "deadline-bigm(task {ti}): delay {delay} <= deadline {deadline} but flag is {v}"
            ));
        }
    }

    out
}

/// Objective of a feasible schedule; infeasible schedules are rejected with
/// the violated constraint identifiers.
pub fn objective<T: Scalar>(
    instance: &IlpInstance<T>,
    schedule: &Schedule,
) -> Result<T, ExactError> {
    let issues = validate(instance, schedule);
    if !issues.is_empty() {
        return Err(ExactError::InfeasibleSchedule(issues));
    }
    let busy = schedule.busy_per_cpu();
    let min_remaining = (0..instance.n_uavs)
        .map(|u| instance.uav_remaining(busy[u]))
        .fold(T::infinity(), T::min);
    Ok(instance.objective_value(min_remaining, schedule.total_violations()))
}

// ---------------------------------------------------------------------------
// Branch-and-bound solver
// ---------------------------------------------------------------------------

/// Result of a solver call.
#[derive(Debug, Clone)]
pub struct SolveOutcome<T> {
    pub schedule: Schedule,
    pub objective: T,
    /// True when the search ran to completion inside the budget, proving
    /// optimality; false for best-effort results cut off by the budget.
    pub proven_optimal: bool,
    pub nodes_explored: u64,
}

struct Search<'a, T: Scalar> {
    inst: &'a IlpInstance<T>,
    occupancy: Vec<Vec<bool>>,
    busy_uav: Vec<usize>,
    violations: usize,
    placements: Vec<(usize, usize)>,
    best: Option<(T, Vec<(usize, usize)>)>,
    started: Instant,
    budget: Option<Duration>,
    timed_out: bool,
    nodes: u64,
}

impl<T: Scalar> Search<'_, T> {
    fn min_uav_remaining(&self) -> T {
        (0..self.inst.n_uavs)
            .map(|u| self.inst.uav_remaining(self.busy_uav[u]))
            .fold(T::infinity(), T::min)
    }

    /// Upper bound on any completion of the current partial assignment:
    /// remaining tasks can neither raise the fleet minimum nor undo the
    /// violations already forced.
    fn bound(&self) -> T {
        self.inst
            .objective_value(self.min_uav_remaining(), self.violations)
    }

    fn block_free(&self, cpu: usize, start: usize, len: usize) -> bool {
        self.occupancy[cpu][start..start + len].iter().all(|&o| !o)
    }

    fn dfs(&mut self, depth: usize) {
        self.nodes += 1;
        if self.nodes.is_multiple_of(1024) {
            if let Some(budget) = self.budget {
                if self.started.elapsed() > budget {
                    self.timed_out = true;
                }
            }
        }
        if self.timed_out {
            return;
        }
        if depth == self.inst.tasks.len() {
            let objective = self.bound();
            let improved = match &self.best {
                None => true,
                Some((incumbent, _)) => objective > *incumbent,
            };
            if improved {
                self.best = Some((objective, self.placements.clone()));
            }
            return;
        }
        if let Some((incumbent, _)) = &self.best {
            if self.bound() <= *incumbent {
                return;
            }
        }

        let task = &self.inst.tasks[depth];
        let n_int = self.inst.n_intervals;
        // Candidate moves: each CPU, each feasible contiguous start.
        let mut moves: Vec<(bool, bool, usize, usize)> = Vec::new();
        for cpu in 0..self.inst.n_cpus() {
            let len = self.inst.proc_len(depth, cpu);
            if task.arrival + len > n_int {
                continue;
            }
            for start in task.arrival..=(n_int - len) {
                if self.block_free(cpu, start, len) {
                    let violates = start - task.arrival + len > task.deadline;
                    moves.push((violates, !self.inst.is_mec(cpu), start, cpu));
                }
            }
        }
        // Promising moves first: meet the deadline, spare the batteries,
        // start early.
        moves.sort();

        for (violates, _, start, cpu) in moves {
            let len = self.inst.proc_len(depth, cpu);
            for i in start..start + len {
                self.occupancy[cpu][i] = true;
            }
            if !self.inst.is_mec(cpu) {
                self.busy_uav[cpu] += len;
            }
            self.violations += violates as usize;
            self.placements.push((cpu, start));

            self.dfs(depth + 1);

            self.placements.pop();
            self.violations -= violates as usize;
            if !self.inst.is_mec(cpu) {
                self.busy_uav[cpu] -= len;
            }
            for i in start..start + len {
                self.occupancy[cpu][i] = false;
            }
            if self.timed_out {
                return;
            }
        }
    }
}

/// Depth-first branch-and-bound over per-task (CPU, start interval) choices
/// with contiguous allocation by construction. Returns a proven optimum
/// when the search completes within the budget, otherwise the best schedule
/// found with the flag lowered. Instances where some task cannot fit on any
/// CPU are reported explicitly.
pub fn solve<T: Scalar>(
    instance: &IlpInstance<T>,
    time_budget: Option<Duration>,
) -> Result<SolveOutcome<T>, ExactError> {
    for (ti, task) in instance.tasks.iter().enumerate() {
        let fits = (0..instance.n_cpus())
            .any(|c| task.arrival + instance.proc_len(ti, c) <= instance.n_intervals);
        if !fits {
            return Err(ExactError::TaskCannotFit { task: task.id });
        }
    }
    let mut search = Search {
        inst: instance,
        occupancy: vec![vec![false; instance.n_intervals]; instance.n_cpus()],
        busy_uav: vec![0; instance.n_uavs],
        violations: 0,
        placements: Vec::with_capacity(instance.tasks.len()),
        best: None,
        started: Instant::now(),
        budget: time_budget,
        timed_out: false,
        nodes: 0,
    };
    search.dfs(0);
    let timed_out = search.timed_out;
    let nodes = search.nodes;
    match search.best {
        Some((obj, placements)) => {
            let schedule = Schedule::from_assignments(instance, &placements)?;
            debug_assert!(validate(instance, &schedule).is_empty());
            Ok(SolveOutcome {
                schedule,
                objective: obj,
                proven_optimal: !timed_out,
                nodes_explored: nodes,
            })
        }
        None if timed_out => Err(ExactError::BudgetExhausted),
        None => Err(ExactError::Infeasible),
    }
}

// ---------------------------------------------------------------------------
// Simulation trace conversion
// ---------------------------------------------------------------------------

/// Reinterprets a simulated execution as an interval schedule so it can be
/// checked against the declarative constraints. The workload must be
/// grid-aligned (see [`discretize_workload`]); interval count grows past the
/// horizon if the simulation drained its queues late.
pub fn sim_trace_to_schedule<T: Scalar>(
    cfg: &SimConfig<T>,
    workload: &[Task<T>],
    outcomes: &[TaskOutcome<T>],
) -> Result<(IlpInstance<T>, Schedule), ExactError> {
    let step = cfg.interval_len;
    let mut last = ceil_intervals(cfg.horizon, step);
    let mut by_id: HashMap<usize, &TaskOutcome<T>> = HashMap::new();
    for outcome in outcomes {
        by_id.insert(outcome.task_id, outcome);
        last = last.max(ceil_intervals(outcome.completion_time, step));
    }
    for task in workload {
        if grid_intervals(task.arrival_time, step).is_none() {
            return Err(ExactError::Misaligned {
                task: task.id,
                quantity: "arrival_time",
                value: task.arrival_time.to_f64().unwrap_or(f64::NAN),
            });
        }
    }
    let instance = build_instance_inner(cfg, workload, last)?;
    let mut placements = Vec::with_capacity(workload.len());
    for task in workload {
        let outcome = by_id
            .get(&task.id)
            .unwrap_or_else(|| panic!("outcome missing for task {}", task.id));
        let start = grid_intervals(outcome.start_time, step).ok_or(ExactError::Misaligned {
            task: task.id,
            quantity: "start_time",
            value: outcome.start_time.to_f64().unwrap_or(f64::NAN),
        })?;
        placements.push((outcome.assigned_cpu.index(), start));
    }
    let schedule = Schedule::from_assignments(&instance, &placements)?;
    Ok((instance, schedule))
}

// ---------------------------------------------------------------------------
// Solution dump
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct AssignmentRow {
    pub task: usize,
    pub source_uav: usize,
    pub arrival_interval: usize,
    pub cpu: usize,
    pub is_mec: bool,
    pub start_interval: usize,
    pub delay_intervals: usize,
    pub violated: bool,
}

/// Structured-text form of a solved schedule.
#[derive(Debug, Clone, Serialize)]
pub struct SolutionDump<T> {
    pub objective: T,
    pub proven_optimal: bool,
    pub violations_total: usize,
    pub remaining_pct_per_uav: Vec<T>,
    pub assignments: Vec<AssignmentRow>,
}

/// Flattens a solver outcome into the exportable solution listing.
pub fn solution_dump<T: Scalar>(
    instance: &IlpInstance<T>,
    outcome: &SolveOutcome<T>,
) -> SolutionDump<T> {
    let busy = outcome.schedule.busy_per_cpu();
    let remaining_pct_per_uav = (0..instance.n_uavs)
        .map(|u| T::lit(100.0) * instance.uav_remaining(busy[u]) / instance.energy.battery_capacity)
        .collect();
    let assignments = outcome
        .schedule
        .assignments()
        .iter()
        .enumerate()
        .map(|(ti, placement)| {
            let (cpu, start) = placement.expect("solved schedules assign every task");
            let task = &instance.tasks[ti];
            AssignmentRow {
                task: task.id,
                source_uav: task.source,
                arrival_interval: task.arrival,
                cpu,
                is_mec: instance.is_mec(cpu),
                start_interval: start,
                delay_intervals: start - task.arrival + instance.proc_len(ti, cpu),
                violated: outcome.schedule.violated(ti),
            }
        })
        .collect();
    SolutionDump {
        objective: outcome.objective,
        proven_optimal: outcome.proven_optimal,
        violations_total: outcome.schedule.total_violations(),
        remaining_pct_per_uav,
        assignments,
    }
}

// ---------------------------------------------------------------------------
// LP export
// ---------------------------------------------------------------------------

fn var_x(task: &IlpTask, cpu: usize) -> String {
    format!("x_j{}_t{}_c{}", task.source, task.arrival, cpu)
}
fn var_p(task: &IlpTask, cpu: usize, interval: usize) -> String {
    format!(
        "p_j{}_t{}_c{}_i{}",
        task.source, task.arrival, cpu, interval
    )
}
fn var_ps(task: &IlpTask, cpu: usize, interval: usize) -> String {
    format!(
        "ps_j{}_t{}_c{}_i{}",
        task.source, task.arrival, cpu, interval
    )
}
fn var_pe(task: &IlpTask, cpu: usize, interval: usize) -> String {
    format!(
        "pe_j{}_t{}_c{}_i{}",
        task.source, task.arrival, cpu, interval
    )
}
fn var_y(task: &IlpTask, cpu: usize, interval: usize) -> String {
    format!(
        "y_j{}_t{}_c{}_i{}",
        task.source, task.arrival, cpu, interval
    )
}
fn var_v(task: &IlpTask) -> String {
    format!("v_j{}_t{}", task.source, task.arrival)
}

/// Emits the full model in LP text interchange format: binaries for the
/// offload, allocation, marker and violation variables, auxiliary product
/// variables for the bilinear allocation terms, and a free variable for the
/// fleet-minimum energy. The header comment documents the dimensions needed
/// to reimport solutions.
pub fn export_lp<T: Scalar>(instance: &IlpInstance<T>) -> String {
    let mut lp = String::new();
    let n_int = instance.n_intervals;
    let w = instance.weight.to_f64().expect("finite weight");
    let viol_cost = ((T::one() - instance.weight) / instance.theta)
        .to_f64()
        .expect("finite cost");
    let idle_pi = instance.idle_per_interval().to_f64().expect("finite");
    let extra_pi = instance.extra_per_interval().to_f64().expect("finite");
    let cap = instance.energy.battery_capacity.to_f64().expect("finite");

    writeln!(lp, "\\ Task offload schedule model").unwrap();
    writeln!(
        lp,
        "\\ tasks: {}, cpus: {} (uavs: {}, mec: {}), intervals: {}",
        instance.tasks.len(),
        instance.n_cpus(),
        instance.n_uavs,
        instance.n_mec,
        n_int
    )
    .unwrap();
    writeln!(
        lp,
        "\\ interval_len: {}, weight: {}, theta: {}, big_m: {}",
        instance.interval_len, instance.weight, instance.theta, instance.big_m
    )
    .unwrap();
    writeln!(
        lp,
        "\\ tasks are keyed (source uav j, arrival interval t); y = p * x products"
    )
    .unwrap();
    writeln!(
        lp,
        "\\ rmin tracks the minimum remaining UAV battery energy"
    )
    .unwrap();

    // Objective.
    writeln!(lp, "Maximize").unwrap();
    let mut obj = format!(" obj: {w} rmin");
    for task in &instance.tasks {
        write!(obj, " - {viol_cost} {}", var_v(task)).unwrap();
    }
    writeln!(lp, "{obj}").unwrap();

    writeln!(lp, "Subject To").unwrap();

    // Fleet-minimum energy: rmin <= capacity - idle*T - extra*busy(cpu).
    for cpu in 0..instance.n_uavs {
        let mut row = format!(" rmin_c{cpu}: rmin");
        for task in &instance.tasks {
            for interval in 0..n_int {
                write!(row, " + {extra_pi} {}", var_p(task, cpu, interval)).unwrap();
            }
        }
        writeln!(lp, "{row} <= {}", cap - idle_pi * n_int as f64).unwrap();
    }

    for task in &instance.tasks {
        let t = task.arrival;
        // Every generated task is placed on exactly one CPU.
        let mut row = format!(" assign_j{}_t{}:", task.source, t);
        for cpu in 0..instance.n_cpus() {
            write!(row, " + {}", var_x(task, cpu)).unwrap();
        }
        writeln!(lp, "{row} = 1").unwrap();

        // Allocation on the chosen CPU covers its processing length.
        let mut row = format!(" alloc_j{}_t{}:", task.source, t);
        for cpu in 0..instance.n_cpus() {
            for interval in t..n_int {
                write!(row, " + {}", var_y(task, cpu, interval)).unwrap();
            }
        }
        for cpu in 0..instance.n_cpus() {
            let len = if instance.is_mec(cpu) {
                task.proc_mec
            } else {
                task.proc_uav
            };
            write!(row, " - {len} {}", var_x(task, cpu)).unwrap();
        }
        writeln!(lp, "{row} = 0").unwrap();

        // No allocation before the arrival interval.
        if t > 0 {
            let mut row = format!(" prearr_j{}_t{}:", task.source, t);
            for cpu in 0..instance.n_cpus() {
                for interval in 0..t {
                    write!(row, " + {}", var_y(task, cpu, interval)).unwrap();
                }
            }
            writeln!(lp, "{row} = 0").unwrap();
        }

        // Deadline big-M pair over the start-marker delay expression.
        let delay_terms = |row: &mut String| {
            for cpu in 0..instance.n_cpus() {
                for interval in 0..n_int {
                    write!(row, " + {interval} {}", var_ps(task, cpu, interval)).unwrap();
                }
                let len = if instance.is_mec(cpu) {
                    task.proc_mec
                } else {
                    task.proc_uav
                };
                write!(row, " + {len} {}", var_x(task, cpu)).unwrap();
            }
        };
        let mut row = format!(" ddl_lo_j{}_t{}:", task.source, t);
        delay_terms(&mut row);
        write!(row, " - {} {}", instance.big_m, var_v(task)).unwrap();
        writeln!(lp, "{row} <= {}", task.deadline as i64 + t as i64).unwrap();
        let mut row = format!(" ddl_hi_j{}_t{}:", task.source, t);
        delay_terms(&mut row);
        write!(row, " - {} {}", instance.big_m, var_v(task)).unwrap();
        writeln!(
            lp,
            "{row} >= {}",
            task.deadline as i64 + t as i64 - instance.big_m as i64
        )
        .unwrap();
    }

    // Product linearization y = p * x.
    for task in &instance.tasks {
        for cpu in 0..instance.n_cpus() {
            for interval in 0..n_int {
                let (y, p, x) = (
                    var_y(task, cpu, interval),
                    var_p(task, cpu, interval),
                    var_x(task, cpu),
                );
                let key = format!("j{}_t{}_c{cpu}_i{interval}", task.source, task.arrival);
                writeln!(lp, " lin1_{key}: {y} - {p} <= 0").unwrap();
                writeln!(lp, " lin2_{key}: {y} - {x} <= 0").unwrap();
                writeln!(lp, " lin3_{key}: {y} - {p} - {x} >= -1").unwrap();
            }
        }
    }

    type VarFn = fn(&IlpTask, usize, usize) -> String;
    let marker_families: [(&str, VarFn); 3] = [("p", var_p), ("ps", var_ps), ("pe", var_pe)];

    // CPU capacity: per (cpu, interval), at most one allocation, start, end.
    for cpu in 0..instance.n_cpus() {
        for interval in 0..n_int {
            for (tag, var) in marker_families {
                let mut row = format!(" cap{tag}_c{cpu}_i{interval}:");
                for task in &instance.tasks {
                    write!(row, " + {}", var(task, cpu, interval)).unwrap();
                }
                writeln!(lp, "{row} <= 1").unwrap();
            }
        }
    }

    // Per-task single-CPU occupancy per interval.
    for task in &instance.tasks {
        for interval in 0..n_int {
            for (tag, var) in marker_families {
                let mut row = format!(" one{tag}_j{}_t{}_i{interval}:", task.source, task.arrival);
                for cpu in 0..instance.n_cpus() {
                    write!(row, " + {}", var(task, cpu, interval)).unwrap();
                }
                writeln!(lp, "{row} <= 1").unwrap();
            }
        }
    }

    // Contiguity.
    for task in &instance.tasks {
        for cpu in 0..instance.n_cpus() {
            let key = |i: usize| format!("j{}_t{}_c{cpu}_i{i}", task.source, task.arrival);
            writeln!(
                lp,
                " cont0_{}: {} - {} = 0",
                key(0),
                var_p(task, cpu, 0),
                var_ps(task, cpu, 0)
            )
            .unwrap();
            for interval in 1..n_int {
                writeln!(
                    lp,
                    " chain_{}: {} - {} - {} + {} = 0",
                    key(interval),
                    var_p(task, cpu, interval),
                    var_p(task, cpu, interval - 1),
                    var_ps(task, cpu, interval),
                    var_pe(task, cpu, interval)
                )
                .unwrap();
                writeln!(
                    lp,
                    " pingpong_{}: {} + {} <= 1",
                    key(interval),
                    var_ps(task, cpu, interval),
                    var_pe(task, cpu, interval)
                )
                .unwrap();
            }
            let mut row = format!(" startlim_{}:", key(0));
            for interval in 0..n_int {
                write!(row, " + {}", var_ps(task, cpu, interval)).unwrap();
            }
            writeln!(lp, "{row} <= 1").unwrap();
            let mut row = format!(" endlim_{}:", key(0));
            for interval in 0..n_int {
                write!(row, " + {}", var_pe(task, cpu, interval)).unwrap();
            }
            writeln!(lp, "{row} <= 1").unwrap();
        }
    }

    writeln!(lp, "Bounds").unwrap();
    writeln!(lp, " rmin free").unwrap();

    writeln!(lp, "Binaries").unwrap();
    for task in &instance.tasks {
        writeln!(lp, " {}", var_v(task)).unwrap();
        for cpu in 0..instance.n_cpus() {
            writeln!(lp, " {}", var_x(task, cpu)).unwrap();
            for interval in 0..n_int {
                writeln!(lp, " {}", var_p(task, cpu, interval)).unwrap();
                writeln!(lp, " {}", var_ps(task, cpu, interval)).unwrap();
                writeln!(lp, " {}", var_pe(task, cpu, interval)).unwrap();
                writeln!(lp, " {}", var_y(task, cpu, interval)).unwrap();
            }
        }
    }
    writeln!(lp, "End").unwrap();
    lp
}
