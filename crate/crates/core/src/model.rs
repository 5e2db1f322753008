//! Domain types, configuration schema, and validation shared by the
//! simulator, the learning agents, and the exact solver.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Kind of job an IoT device can request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskKind {
    /// Fire detection.
    FD,
    /// Pesticide detection.
    PD,
    /// Growth monitoring.
    GM,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [TaskKind::FD, TaskKind::PD, TaskKind::GM];

    pub fn as_str(&self) -> &'static str {
        match self {
            TaskKind::FD => "FD",
            TaskKind::PD => "PD",
            TaskKind::GM => "GM",
        }
    }

    pub fn parse(s: &str) -> Option<TaskKind> {
        match s {
            "FD" => Some(TaskKind::FD),
            "PD" => Some(TaskKind::PD),
            "GM" => Some(TaskKind::GM),
            _ => None,
        }
    }
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-kind workload parameters: arrival rate, deadline, and processing
/// times on the two CPU classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskType<T> {
    pub kind: TaskKind,
    /// Mean of the exponential inter-arrival gap, seconds.
    pub mean_interarrival: T,
    /// Maximum tolerated scheduling-plus-processing delay, seconds.
    pub deadline: T,
    /// Processing time on a UAV CPU, seconds.
    pub proc_time_uav: T,
    /// Processing time on an edge (MEC) CPU, seconds.
    pub proc_time_mec: T,
}

impl<T: Scalar> TaskType<T> {
    pub fn new(kind: TaskKind, mean_interarrival: f64, deadline: f64, uav: f64, mec: f64) -> Self {
        TaskType {
            kind,
            mean_interarrival: T::lit(mean_interarrival),
            deadline: T::lit(deadline),
            proc_time_uav: T::lit(uav),
            proc_time_mec: T::lit(mec),
        }
    }
}

/// Identifier of a schedulable processor. Indices `[0, n_uavs)` are UAV
/// CPUs, `[n_uavs, n_uavs + n_mec)` are edge servers.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct CpuId(pub usize);

impl CpuId {
    #[inline]
    pub fn index(&self) -> usize {
        self.0
    }
}

impl std::fmt::Display for CpuId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "cpu{}", self.0)
    }
}

/// One offloadable job instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Task<T> {
    pub id: usize,
    pub kind: TaskKind,
    /// UAV that received the job from an IoT device. Never an edge server.
    pub source_uav: CpuId,
    pub arrival_time: T,
    /// Set once when the source delegates the task elsewhere; a delegated
    /// task is processed where it lands, never forwarded again.
    pub offloaded: bool,
}

/// Battery capacity and the per-second power draws of one UAV.
///
/// Units are abstract: powers are consumed per second of simulated time and
/// the capacity is expressed in the same power-seconds scale. Every reported
/// KPI is a percentage of capacity, so any consistent scaling works.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyParams<T> {
    pub battery_capacity: T,
    pub hover_power: T,
    pub antenna_power: T,
    pub cpu_idle_power: T,
    pub cpu_active_power: T,
}

impl<T: Scalar> EnergyParams<T> {
    /// Power drawn continuously while airborne, independent of CPU load.
    #[inline]
    pub fn idle_drain(&self) -> T {
        self.hover_power + self.antenna_power + self.cpu_idle_power
    }

    /// Extra power drawn while the CPU processes a task.
    #[inline]
    pub fn active_extra(&self) -> T {
        self.cpu_active_power - self.cpu_idle_power
    }
}

/// Physical rotorcraft parameters from which the hover power is derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HoverModelParams<T> {
    /// Airframe mass, kg.
    pub frame_mass: T,
    /// Battery plus payload mass, kg.
    pub payload_mass: T,
    /// Gravitational acceleration, m/s^2.
    pub gravity: T,
    /// Air density, kg/m^3.
    pub fluid_density: T,
    /// Area swept by one rotor, m^2.
    pub rotor_disc_area: T,
    pub rotor_count: u32,
}

/// Complete description of one scenario: fleet size, workload catalog,
/// energy model, objective weights, and the RNG seed.
///
/// Immutable after validation; safe to share read-only across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig<T> {
    /// Number of UAVs (each carries one CPU).
    pub n_uavs: usize,
    /// Number of edge servers.
    pub n_mec: usize,
    /// Simulated horizon in seconds. Tasks arrive within the horizon; runs
    /// extend past it until every accepted task completes.
    pub horizon: T,
    /// Discretization step for the interval-indexed exact model, seconds.
    pub interval_len: T,
    /// One-way delay added when a task is delegated to another CPU, seconds.
    pub offload_latency: T,
    pub energy: EnergyParams<T>,
    #[serde(default = "Option::default")]
    pub hover_model: Option<HoverModelParams<T>>,
    pub task_catalog: Vec<TaskType<T>>,
    /// Objective weight between energy (1) and deadline violations (0).
    pub weight: T,
    /// Scale normalizing the violation count against energy units. When
    /// absent, the exact model derives it from the instance size.
    #[serde(default = "Option::default")]
    pub theta: Option<T>,
    /// Hysteresis band for the battery standing levels, energy units.
    pub epsilon_batt: T,
    pub seed: u64,
}

impl<T: Scalar> SimConfig<T> {
    #[inline]
    pub fn cpu_count(&self) -> usize {
        self.n_uavs + self.n_mec
    }

    #[inline]
    pub fn is_uav(&self, cpu: CpuId) -> bool {
        cpu.0 < self.n_uavs
    }

    #[inline]
    pub fn is_mec(&self, cpu: CpuId) -> bool {
        cpu.0 >= self.n_uavs && cpu.0 < self.cpu_count()
    }

    pub fn uav_ids(&self) -> impl Iterator<Item = CpuId> {
        (0..self.n_uavs).map(CpuId)
    }

    pub fn mec_ids(&self) -> impl Iterator<Item = CpuId> + '_ {
        (self.n_uavs..self.cpu_count()).map(CpuId)
    }

    pub fn cpu_label(&self, cpu: CpuId) -> String {
        if self.is_uav(cpu) {
            format!("uav{}", cpu.0)
        } else {
            format!("mec{}", cpu.0 - self.n_uavs)
        }
    }

    /// Catalog entry for a task kind. Panics if the kind is absent, which
    /// validation rules out.
    pub fn task_type(&self, kind: TaskKind) -> &TaskType<T> {
        self.task_catalog
            .iter()
            .find(|t| t.kind == kind)
            .expect("task kind present in catalog")
    }

    /// Position of a kind within the catalog, used by the state encoding.
    pub fn kind_index(&self, kind: TaskKind) -> usize {
        self.task_catalog
            .iter()
            .position(|t| t.kind == kind)
            .expect("task kind present in catalog")
    }

    /// Processing time of `kind` on the CPU class of `cpu`.
    #[inline]
    pub fn proc_time(&self, kind: TaskKind, cpu: CpuId) -> T {
        let tt = self.task_type(kind);
        if self.is_mec(cpu) {
            tt.proc_time_mec
        } else {
            tt.proc_time_uav
        }
    }
}

/// Reference scenario: four UAVs, one edge server, the stock energy
/// parameters, and the three-entry task catalog.
pub fn reference_config<T: Scalar>() -> SimConfig<T> {
    SimConfig {
        n_uavs: 4,
        n_mec: 1,
        horizon: T::lit(2.0),
        interval_len: T::lit(0.05),
        offload_latency: T::zero(),
        energy: EnergyParams {
            battery_capacity: T::lit(570.0),
            hover_power: T::lit(211.0),
            antenna_power: T::lit(17.0),
            cpu_idle_power: T::lit(4320.0),
            cpu_active_power: T::lit(12960.0),
        },
        hover_model: Some(HoverModelParams {
            frame_mass: T::lit(1.5),
            payload_mass: T::lit(3.0),
            gravity: T::lit(9.81),
            fluid_density: T::lit(1.204),
            rotor_disc_area: T::lit(0.2),
            rotor_count: 4,
        }),
        task_catalog: vec![
            TaskType::new(TaskKind::FD, 0.25, 0.3, 0.1, 0.05),
            TaskType::new(TaskKind::PD, 0.25, 0.8, 0.5, 0.25),
            TaskType::new(TaskKind::GM, 0.5, 5.0, 0.1, 0.05),
        ],
        weight: T::lit(0.5),
        theta: None,
        // 1% of battery capacity, mirroring the heuristics' energy margin.
        epsilon_batt: T::lit(5.7),
        seed: 1,
    }
}

/// Reports every broken invariant as a human-readable item. An empty list
/// means the configuration is valid. Never aborts.
// The negated comparisons are load-bearing: `!(v > 0)` flags NaN, `v <= 0`
// would wave it through.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn validate_config<T: Scalar>(cfg: &SimConfig<T>) -> Vec<String> {
    let mut violations = Vec::new();
    if cfg.n_uavs == 0 {
        violations.push("n_uavs: must be at least 1".to_string());
    }
    if !(cfg.horizon >= T::zero()) {
        violations.push(format!("horizon: must be >= 0, got {}", cfg.horizon));
    }
    if !(cfg.interval_len > T::zero()) {
        violations.push(format!(
            "interval_len: must be > 0, got {}",
            cfg.interval_len
        ));
    }
    if !(cfg.offload_latency >= T::zero()) {
        violations.push(format!(
            "offload_latency: must be >= 0, got {}",
            cfg.offload_latency
        ));
    }
    if !(cfg.weight >= T::zero() && cfg.weight <= T::one()) {
        violations.push(format!("weight: must lie in [0, 1], got {}", cfg.weight));
    }
    if let Some(theta) = cfg.theta {
        if !(theta > T::zero()) {
            violations.push(format!("theta: must be > 0 when set, got {}", theta));
        }
    }
    if !(cfg.epsilon_batt > T::zero()) {
        violations.push(format!(
            "epsilon_batt: must be > 0, got {}",
            cfg.epsilon_batt
        ));
    }

    let e = &cfg.energy;
    if !(e.battery_capacity > T::zero()) {
        violations.push(format!(
            "energy.battery_capacity: must be > 0, got {}",
            e.battery_capacity
        ));
    }
    for (name, v) in [
        ("energy.hover_power", e.hover_power),
        ("energy.antenna_power", e.antenna_power),
        ("energy.cpu_idle_power", e.cpu_idle_power),
        ("energy.cpu_active_power", e.cpu_active_power),
    ] {
        if !(v >= T::zero()) {
            violations.push(format!("{name}: must be >= 0, got {v}"));
        }
    }
    if e.cpu_active_power < e.cpu_idle_power {
        violations.push(format!(
            "energy.cpu_active_power: must be >= cpu_idle_power ({} < {})",
            e.cpu_active_power, e.cpu_idle_power
        ));
    }

    if let Some(h) = &cfg.hover_model {
        for (name, v) in [
            ("hover_model.frame_mass", h.frame_mass),
            ("hover_model.payload_mass", h.payload_mass),
            ("hover_model.gravity", h.gravity),
            ("hover_model.fluid_density", h.fluid_density),
            ("hover_model.rotor_disc_area", h.rotor_disc_area),
        ] {
            if !(v > T::zero()) {
                violations.push(format!("{name}: must be > 0, got {v}"));
            }
        }
        if h.rotor_count < 1 {
            violations.push("hover_model.rotor_count: must be >= 1".to_string());
        }
    }

    if cfg.task_catalog.is_empty() {
        violations.push("task_catalog: must not be empty".to_string());
    }
    for (i, tt) in cfg.task_catalog.iter().enumerate() {
        if cfg
            .task_catalog
            .iter()
            .take(i)
            .any(|other| other.kind == tt.kind)
        {
            violations.push(format!("task_catalog[{i}]: duplicate kind {}", tt.kind));
        }
        if !(tt.mean_interarrival > T::zero()) {
            violations.push(format!(
                "task_catalog[{i}].mean_interarrival: must be > 0, got {}",
                tt.mean_interarrival
            ));
        }
        if !(tt.deadline > T::zero()) {
            violations.push(format!(
                "task_catalog[{i}].deadline: must be > 0, got {}",
                tt.deadline
            ));
        }
        if !(tt.proc_time_mec >= T::zero()) {
            violations.push(format!(
                "task_catalog[{i}].proc_time_mec: must be >= 0, got {}",
                tt.proc_time_mec
            ));
        }
        if tt.proc_time_mec > tt.proc_time_uav {
            violations.push(format!(
                "task_catalog[{i}]: proc_time_mec must be <= proc_time_uav ({} > {})",
                tt.proc_time_mec, tt.proc_time_uav
            ));
        }
    }
    violations
}

/// Like [`validate_config`], plus the divisibility requirements the
/// interval-indexed exact model adds: every processing time and the offload
/// latency must be integer multiples of `interval_len`.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn validate_config_for_exact<T: Scalar>(cfg: &SimConfig<T>) -> Vec<String> {
    let mut violations = validate_config(cfg);
    if !(cfg.interval_len > T::zero()) {
        return violations; // divisibility is meaningless without a step
    }
    for (i, tt) in cfg.task_catalog.iter().enumerate() {
        for (name, v) in [
            ("proc_time_uav", tt.proc_time_uav),
            ("proc_time_mec", tt.proc_time_mec),
        ] {
            if !is_multiple_of(v, cfg.interval_len) {
                violations.push(format!(
                    "task_catalog[{i}].{name}: {} is not an integer multiple of interval_len {}",
                    v, cfg.interval_len
                ));
            }
        }
    }
    if !is_multiple_of(cfg.offload_latency, cfg.interval_len) {
        violations.push(format!(
            "offload_latency: {} is not an integer multiple of interval_len {}",
            cfg.offload_latency, cfg.interval_len
        ));
    }
    violations
}

/// True when `value` is a nonnegative integer multiple of `step`, up to
/// float round-off.
pub(crate) fn is_multiple_of<T: Scalar>(value: T, step: T) -> bool {
    let ratio = value / step;
    let nearest = ratio.round();
    nearest >= T::zero() && (ratio - nearest).abs() <= T::lit(1e-9) * (T::one() + nearest.abs())
}

/// Parses a configuration from its JSON form. Unknown keys are an error.
pub fn config_from_json<T: Scalar + serde::de::DeserializeOwned>(
    json: &str,
) -> Result<SimConfig<T>, serde_json::Error> {
    serde_json::from_str(json)
}

/// Serializes a configuration to pretty JSON mirroring the field names.
pub fn config_to_json<T: Scalar + Serialize>(cfg: &SimConfig<T>) -> String {
    serde_json::to_string_pretty(cfg).expect("config serializes")
}

/// Stable 64-bit fingerprint of a configuration, embedded in persisted
/// artifacts so stale files are rejected on load.
pub fn config_hash<T: Scalar + Serialize>(cfg: &SimConfig<T>) -> u64 {
    let bytes = serde_json::to_vec(cfg).expect("config serializes");
    fnv1a64(&bytes)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        let cfg = reference_config::<f64>();
        assert_eq!(cfg.n_uavs, 4);
        assert_eq!(cfg.n_mec, 1);
        assert_eq!(cfg.energy.battery_capacity, 570.0);
        assert_eq!(cfg.energy.hover_power, 211.0);
        assert_eq!(cfg.energy.antenna_power, 17.0);
        assert_eq!(cfg.energy.cpu_idle_power, 4320.0);
        assert_eq!(cfg.energy.cpu_active_power, 12960.0);
        let fd = cfg.task_type(TaskKind::FD);
        assert_eq!(
            (
                fd.mean_interarrival,
                fd.deadline,
                fd.proc_time_uav,
                fd.proc_time_mec
            ),
            (0.25, 0.3, 0.1, 0.05)
        );
        let pd = cfg.task_type(TaskKind::PD);
        assert_eq!(
            (
                pd.mean_interarrival,
                pd.deadline,
                pd.proc_time_uav,
                pd.proc_time_mec
            ),
            (0.25, 0.8, 0.5, 0.25)
        );
        let gm = cfg.task_type(TaskKind::GM);
        assert_eq!(
            (
                gm.mean_interarrival,
                gm.deadline,
                gm.proc_time_uav,
                gm.proc_time_mec
            ),
            (0.5, 5.0, 0.1, 0.05)
        );
        assert!(validate_config(&cfg).is_empty());
        assert!(validate_config_for_exact(&cfg).is_empty());
    }

    #[test]
    fn out_of_range_weight_is_named() {
        let mut cfg = reference_config::<f64>();
        cfg.weight = 1.5;
        let violations = validate_config(&cfg);
        assert_eq!(violations.len(), 1);
        assert!(violations[0].contains("weight"), "{}", violations[0]);
    }

    #[test]
    fn divisibility_violation_is_named_for_exact() {
        let mut cfg = reference_config::<f64>();
        cfg.interval_len = 0.03;
        assert!(validate_config(&cfg).is_empty());
        let violations = validate_config_for_exact(&cfg);
        assert!(!violations.is_empty());
        assert!(
            violations
                .iter()
                .any(|v| v.contains("multiple of interval_len")),
            "{violations:?}"
        );
        // 0.1 / 0.03 is the first offender.
        assert!(violations[0].contains("proc_time_uav"), "{}", violations[0]);
    }

    #[test]
    fn json_round_trip_preserves_config() {
        let cfg = reference_config::<f64>();
        let json = config_to_json(&cfg);
        let back: SimConfig<f64> = config_from_json(&json).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(config_hash(&cfg), config_hash(&back));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut json: serde_json::Value =
            serde_json::from_str(&config_to_json(&reference_config::<f64>())).unwrap();
        json.as_object_mut()
            .unwrap()
            .insert("mystery".to_string(), serde_json::json!(1));
        let err = config_from_json::<f64>(&json.to_string()).unwrap_err();
        assert!(err.to_string().contains("mystery"), "{err}");
    }

    #[test]
    fn cpu_classes_split_at_n_uavs() {
        let cfg = reference_config::<f64>();
        assert!(cfg.is_uav(CpuId(0)) && cfg.is_uav(CpuId(3)));
        assert!(cfg.is_mec(CpuId(4)));
        assert!(!cfg.is_mec(CpuId(3)));
        assert_eq!(cfg.cpu_count(), 5);
        assert_eq!(cfg.cpu_label(CpuId(4)), "mec0");
    }
}
