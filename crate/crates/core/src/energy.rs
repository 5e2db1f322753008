//! Energy arithmetic: hover power from rotorcraft physics, remaining-energy
//! accounting, and the discretized battery standing used by the agents.

use thiserror::Error;

use crate::model::{CpuId, EnergyParams, HoverModelParams};
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EnergyError {
    #[error("hover power denominator must be positive (fluid_density, rotor_disc_area and rotor_count all > 0)")]
    NonPositiveDenominator,
}

/// Busy/elapsed time bookkeeping for one CPU over a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyLedger<T> {
    pub cpu_id: CpuId,
    /// Seconds spent actively processing tasks.
    pub busy_seconds: T,
    /// Total simulated seconds covered by this ledger.
    pub elapsed_seconds: T,
}

impl<T: Scalar> EnergyLedger<T> {
    pub fn new(cpu_id: CpuId) -> Self {
        EnergyLedger {
            cpu_id,
            busy_seconds: T::zero(),
            elapsed_seconds: T::zero(),
        }
    }
}

/// Steady-state power needed to keep the airframe hovering:
/// `(M + m)^(3/2) * sqrt(g^3 / (2 * rho * area * rotors))`.
pub fn hover_power<T: Scalar>(p: &HoverModelParams<T>) -> Result<T, EnergyError> {
    let denom =
        T::lit(2.0) * p.fluid_density * p.rotor_disc_area * T::from_count(p.rotor_count as usize);
    // Negated so a NaN denominator is rejected too.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(denom > T::zero()) {
        return Err(EnergyError::NonPositiveDenominator);
    }
    let total_mass = p.frame_mass + p.payload_mass;
    Ok(total_mass.powf(T::lit(1.5)) * (p.gravity.powi(3) / denom).sqrt())
}

/// Energy left in the battery after the ledger's elapsed and busy time:
/// capacity minus the always-on drain (hover + antenna + CPU idle) minus the
/// active-CPU surcharge. May go negative once the battery is exhausted;
/// callers decide how to treat that.
pub fn remaining_energy<T: Scalar>(params: &EnergyParams<T>, ledger: &EnergyLedger<T>) -> T {
    params.battery_capacity
        - params.idle_drain() * ledger.elapsed_seconds
        - params.active_extra() * ledger.busy_seconds
}

/// Remaining energy as a percentage of capacity. Not clamped; display code
/// clamps if it wants to.
pub fn remaining_percentage<T: Scalar>(params: &EnergyParams<T>, ledger: &EnergyLedger<T>) -> T {
    T::lit(100.0) * remaining_energy(params, ledger) / params.battery_capacity
}

/// Discretized standing of the selected CPU's battery relative to the best
/// expected battery in the fleet, with hysteresis band `epsilon_batt`:
///
/// * 2 when the selected battery is within `epsilon` of the fleet maximum,
/// * 0 when it trails by `2 * epsilon` or more,
/// * 1 in between.
///
/// Grid-powered edge CPUs have no battery to deplete, so selecting one
/// always earns the top level.
pub fn battery_reward_level<T: Scalar>(
    expected_remaining_selected: T,
    expected_remaining_all_uavs: &[T],
    epsilon_batt: T,
    selected_is_mec: bool,
) -> u8 {
    if selected_is_mec {
        return 2;
    }
    debug_assert!(!expected_remaining_all_uavs.is_empty());
    debug_assert!(epsilon_batt > T::zero());
    let fleet_max = expected_remaining_all_uavs
        .iter()
        .copied()
        .fold(T::neg_infinity(), T::max);
    level_from_gap(expected_remaining_selected - fleet_max, epsilon_batt)
}

/// Levels the gap `d = selected - fleet_max` into `{0, 1, 2}` with the
/// hysteresis band: 2 for `d >= -eps`, 0 for `d <= -2 eps`, 1 in between.
#[inline]
pub(crate) fn level_from_gap<T: Scalar>(d: T, epsilon: T) -> u8 {
    if d >= -epsilon {
        2
    } else if d <= -(T::lit(2.0) * epsilon) {
        0
    } else {
        1
    }
}

/// Expected remaining energy of every UAV at the instant the candidate CPU
/// would start processing a newly delegated task, i.e. after the candidate's
/// current backlog drains. Each UAV keeps paying its idle drain for that
/// long and works off as much of its own backlog as fits; the new task's own
/// processing cost is not charged.
pub fn expected_remaining_at_start<T: Scalar>(
    params: &EnergyParams<T>,
    uav_remaining_now: &[T],
    uav_backlogs: &[T],
    candidate_backlog: T,
) -> Vec<T> {
    debug_assert_eq!(uav_remaining_now.len(), uav_backlogs.len());
    uav_remaining_now
        .iter()
        .zip(uav_backlogs)
        .map(|(&now, &backlog)| {
            now - params.idle_drain() * candidate_backlog
                - params.active_extra() * backlog.min(candidate_backlog)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::reference_config;

    fn paper_energy() -> EnergyParams<f64> {
        reference_config::<f64>().energy
    }

    fn ledger(elapsed: f64, busy: f64) -> EnergyLedger<f64> {
        EnergyLedger {
            cpu_id: CpuId(0),
            busy_seconds: busy,
            elapsed_seconds: elapsed,
        }
    }

    #[test]
    fn hover_power_matches_reference_drone() {
        let p = reference_config::<f64>().hover_model.unwrap();
        let power = hover_power(&p).unwrap();
        assert!(
            (power - 211.0).abs() / 211.0 < 0.01,
            "expected within 1% of 211, got {power}"
        );
    }

    #[test]
    fn hover_power_zero_mass_is_zero() {
        let mut p = reference_config::<f64>().hover_model.unwrap();
        p.frame_mass = 0.0;
        p.payload_mass = 0.0;
        assert_eq!(hover_power(&p).unwrap(), 0.0);
    }

    #[test]
    fn hover_power_quadrupling_rotors_halves_output() {
        let mut p = reference_config::<f64>().hover_model.unwrap();
        let base = hover_power(&p).unwrap();
        p.rotor_count *= 4;
        let quad = hover_power(&p).unwrap();
        assert!((quad - base / 2.0).abs() < 1e-12 * base);
    }

    #[test]
    fn hover_power_square_matches_closed_form() {
        // power^2 == (M+m)^3 * g^3 / (2 rho A n), checked over a parameter grid.
        let grid: [(f64, f64, f64, f64, f64, u32); 3] = [
            (1.5, 3.0, 9.81, 1.204, 0.2, 4),
            (0.8, 1.2, 9.81, 1.1, 0.15, 6),
            (2.5, 4.0, 3.71, 0.02, 0.4, 8),
        ];
        for (frame, payload, gravity, density, area, rotors) in grid {
            let p = HoverModelParams {
                frame_mass: frame,
                payload_mass: payload,
                gravity,
                fluid_density: density,
                rotor_disc_area: area,
                rotor_count: rotors,
            };
            let power = hover_power(&p).unwrap();
            let closed = (frame + payload).powi(3) * gravity.powi(3)
                / (2.0 * density * area * rotors as f64);
            assert!(
                (power * power - closed).abs() <= 1e-12 * closed,
                "power^2 {} vs closed form {closed}",
                power * power
            );
        }
    }

    #[test]
    fn hover_power_rejects_nonpositive_denominator() {
        let mut p = reference_config::<f64>().hover_model.unwrap();
        p.fluid_density = 0.0;
        assert_eq!(hover_power(&p), Err(EnergyError::NonPositiveDenominator));
    }

    #[test]
    fn remaining_energy_full_at_start() {
        assert_eq!(remaining_energy(&paper_energy(), &ledger(0.0, 0.0)), 570.0);
    }

    #[test]
    fn remaining_energy_idle_second() {
        // One idle second burns hover + antenna + CPU idle.
        let expected = 570.0 - (211.0 + 17.0 + 4320.0);
        assert_eq!(
            remaining_energy(&paper_energy(), &ledger(1.0, 0.0)),
            expected
        );
    }

    #[test]
    fn remaining_energy_busy_second() {
        // One busy second additionally burns the active-idle difference.
        let idle_only = 570.0 - (211.0 + 17.0 + 4320.0);
        let expected = idle_only - (12960.0 - 4320.0);
        assert_eq!(
            remaining_energy(&paper_energy(), &ledger(1.0, 1.0)),
            expected
        );
    }

    #[test]
    fn percentage_basics() {
        let params = paper_energy();
        assert_eq!(remaining_percentage(&params, &ledger(0.0, 0.0)), 100.0);
        // Construct a ledger whose remaining energy is exactly half capacity.
        let elapsed = 285.0 / params.idle_drain();
        let halfway = ledger(elapsed, 0.0);
        assert!((remaining_percentage(&params, &halfway) - 50.0).abs() < 1e-9);
    }

    #[test]
    fn percentage_pinned_toy_ledger() {
        // 570 - 4548*0.05 - 8640*0.02 = 169.8 => 29.789473...%
        let l = ledger(0.05, 0.02);
        let expected = 100.0 * (570.0 - 4548.0 * 0.05 - 8640.0 * 0.02) / 570.0;
        assert!((remaining_percentage(&paper_energy(), &l) - expected).abs() < 1e-12);
        assert!((expected - 29.789_473_684_210_527).abs() < 1e-12);
    }

    #[test]
    fn battery_level_branches() {
        let eps = 5.7;
        // The fleet maximum ranges over every UAV, the selected one included,
        // so the gap is never positive.
        let all = [100.0, 90.0, 80.0];
        // Selected at the fleet maximum: d = 0.
        assert_eq!(battery_reward_level(100.0, &all, eps, false), 2);
        // d = -3 eps.
        assert_eq!(battery_reward_level(100.0 - 3.0 * eps, &all, eps, false), 0);
        // d = -1.5 eps.
        assert_eq!(battery_reward_level(100.0 - 1.5 * eps, &all, eps, false), 1);
        // Edge CPUs always earn the top level.
        assert_eq!(battery_reward_level(-1e9, &all, eps, true), 2);
    }

    #[test]
    fn battery_level_sweep_is_monotone_with_two_breakpoints() {
        let eps = 2.0;
        let max = 50.0;
        let all = [max];
        let mut prev = 0u8;
        let mut changes = 0;
        let steps = 3000;
        for i in 0..=steps {
            // d sweeps -3 eps .. 0.
            let d = -3.0 * eps + 3.0 * eps * (i as f64) / (steps as f64);
            let level = battery_reward_level(max + d, &all, eps, false);
            if i == 0 {
                assert_eq!(level, 0);
                prev = level;
                continue;
            }
            assert!(level >= prev, "levels must be non-decreasing in d");
            if level != prev {
                changes += 1;
            }
            prev = level;
        }
        assert_eq!(prev, 2);
        assert_eq!(changes, 2, "exactly two breakpoints at -eps and -2 eps");
    }

    #[test]
    fn expected_remaining_charges_idle_and_overlapping_busy() {
        let params = paper_energy();
        let now = [500.0, 400.0];
        let backlogs = [0.3, 0.1];
        // Candidate backlog 0.2: UAV 0 can only work 0.2 of its 0.3 backlog
        // before the candidate frees up; UAV 1 finishes its 0.1.
        let exp = expected_remaining_at_start(&params, &now, &backlogs, 0.2);
        let idle = params.idle_drain();
        let extra = params.active_extra();
        assert!((exp[0] - (500.0 - idle * 0.2 - extra * 0.2)).abs() < 1e-9);
        assert!((exp[1] - (400.0 - idle * 0.2 - extra * 0.1)).abs() < 1e-9);
    }
}
