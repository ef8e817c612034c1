//! Discrete-time corridor charging-scheduling problem.
//!
//! A vehicle traverses an ordered corridor of charging stations. Each
//! station carries an availability forecast sampled on a common time grid:
//! per-slot wait `v[i][k]` and per-vehicle power `P[i][k]`. The problem
//! picks where to charge (`x_i`), when to arrive (slot selector `phi`), and
//! how long/how much to charge (`theta` slots, energy `E_i`), minimizing
//! downtime: arrival time at the last station minus free-flow travel time.
//!
//! [`solve`] finds a provably optimal plan by branch and bound;
//! [`validate_plan`] re-checks every constraint independently of the solver;
//! [`export_lp`] emits a big-M linearization in LP text format for
//! cross-checking against external MIP solvers.

mod lp;
mod solve;
mod validate;

pub use lp::export_lp;
pub use solve::{solve, SolveOptions};
pub use validate::{validate_plan, ValidationReport, Violation};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fluid::AvailabilityForecast;
use crate::grid::TimeGrid;

/// Tolerance for slot-boundary comparisons: times within this of a grid
/// node snap onto it, breaking half-open interval ties deterministically.
pub const SLOT_EPS: f64 = 1e-9;

/// One road segment between consecutive stations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub length_km: f64,
    pub speed_kmh: f64,
}

impl Segment {
    pub fn drive_time(&self) -> f64 {
        self.length_km / self.speed_kmh
    }
}

/// A corridor station: fixed overhead for pulling in, plus its forecast.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorridorStation {
    pub overhead_h: f64,
    pub forecast: AvailabilityForecast,
}

/// Ordered stations and the segments between them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Corridor {
    pub stations: Vec<CorridorStation>,
    pub segments: Vec<Segment>,
}

impl Corridor {
    pub fn validate(&self) -> Result<()> {
        if self.stations.len() < 2 {
            return Err(Error::invalid("corridor needs at least two stations".to_string()));
        }
        if self.segments.len() != self.stations.len() - 1 {
            return Err(Error::invalid(format!(
                "{} stations need {} segments, got {}",
                self.stations.len(),
                self.stations.len() - 1,
                self.segments.len()
            )));
        }
        for (j, s) in self.segments.iter().enumerate() {
            if !(s.length_km > 0.0) || !(s.speed_kmh > 0.0) {
                return Err(Error::invalid(format!(
                    "segment {j} needs positive length and speed"
                )));
            }
        }
        for (i, st) in self.stations.iter().enumerate() {
            if st.overhead_h < 0.0 {
                return Err(Error::invalid(format!("station {i} has negative overhead")));
            }
        }
        Ok(())
    }
}

/// The planning vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleSpec {
    /// Battery capacity C (kWh).
    pub capacity_kwh: f64,
    /// Consumption p (kWh/km).
    pub consumption_kwh_per_km: f64,
    /// State-of-charge floor eta, fraction of capacity in [0, 1).
    pub soc_floor: f64,
    /// Energy on board at the first station (kWh).
    pub initial_kwh: f64,
}

impl VehicleSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.capacity_kwh > 0.0) {
            return Err(Error::invalid("battery capacity must be > 0".to_string()));
        }
        if !(self.consumption_kwh_per_km > 0.0) {
            return Err(Error::invalid("consumption must be > 0".to_string()));
        }
        if !(0.0..1.0).contains(&self.soc_floor) {
            return Err(Error::invalid(format!(
                "soc floor must be in [0, 1), got {}",
                self.soc_floor
            )));
        }
        if !(self.initial_kwh > 0.0) || self.initial_kwh > self.capacity_kwh + 1e-9 {
            return Err(Error::invalid(format!(
                "initial energy must be in (0, capacity], got {}",
                self.initial_kwh
            )));
        }
        if self.initial_kwh < self.floor_kwh() - 1e-9 {
            return Err(Error::invalid(
                "initial energy below the state-of-charge floor".to_string(),
            ));
        }
        Ok(())
    }

    pub fn floor_kwh(&self) -> f64 {
        self.soc_floor * self.capacity_kwh
    }
}

/// The discretized scheduling instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvspProblem {
    /// Slot grid shared by all stations, starting at t = 0.
    pub grid: TimeGrid,
    /// Wait forecast v[i][k] (h) at each grid node.
    pub wait: Vec<Vec<f64>>,
    /// Power forecast P[i][k] (kW) at each grid node.
    pub power: Vec<Vec<f64>>,
    /// Station overheads rho_i (h).
    pub overhead: Vec<f64>,
    /// Segment drive times (h), one per consecutive station pair.
    pub drive_time: Vec<f64>,
    /// Segment drive energies (kWh).
    pub drive_energy: Vec<f64>,
    pub vehicle: VehicleSpec,
    /// Per-station prefix sums of power for O(1) charge-window bounds.
    power_prefix: Vec<Vec<f64>>,
}

impl EvspProblem {
    pub fn num_stations(&self) -> usize {
        self.overhead.len()
    }

    pub fn free_flow_time(&self) -> f64 {
        self.drive_time.iter().sum()
    }

    /// Slot index whose half-open interval `[t_k, t_{k+1})` contains `t`,
    /// or `None` past the end of the grid.
    pub fn slot_of(&self, t: f64) -> Option<usize> {
        if t < self.grid.t0 - SLOT_EPS {
            return None;
        }
        let k = (((t - self.grid.t0) / self.grid.dt) + SLOT_EPS).floor() as usize;
        if k + 1 >= self.grid.len {
            None
        } else {
            Some(k)
        }
    }

    /// First grid node at or after `t`, or `None` past the end.
    pub fn node_at_or_after(&self, t: f64) -> Option<usize> {
        let k = (((t - self.grid.t0) / self.grid.dt) - SLOT_EPS).ceil().max(0.0) as usize;
        if k >= self.grid.len {
            None
        } else {
            Some(k)
        }
    }

    /// Maximum energy a charging interval covering grid nodes
    /// `[k0, k0 + m)` at station `i` can deliver (kWh).
    pub fn window_energy(&self, i: usize, k0: usize, m: usize) -> f64 {
        debug_assert!(k0 + m <= self.grid.len);
        self.grid.dt * (self.power_prefix[i][k0 + m] - self.power_prefix[i][k0])
    }

    /// Largest power entry across all stations and slots (kW).
    pub fn max_power(&self) -> f64 {
        self.power
            .iter()
            .flat_map(|row| row.iter().copied())
            .fold(0.0, f64::max)
    }
}

/// Per-station rows of a charging plan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationPlan {
    /// Charging indicator x_i.
    pub visited: bool,
    /// Energy charged E_i (kWh).
    pub energy_kwh: f64,
    /// Arrival time (h).
    pub arrival: f64,
    /// Waiting time before charging (h).
    pub wait: f64,
    /// Start-of-charging time (h).
    pub charge_start: f64,
    /// Departure time (h).
    pub departure: f64,
    /// Selected arrival slot (phi), when visited.
    pub arrival_slot: Option<usize>,
    /// Charging grid nodes `[start, end)` (theta); empty when not visited.
    pub charge_slots: (usize, usize),
}

impl StationPlan {
    pub fn pass_through(arrival: f64) -> Self {
        StationPlan {
            visited: false,
            energy_kwh: 0.0,
            arrival,
            wait: 0.0,
            charge_start: arrival,
            departure: arrival,
            arrival_slot: None,
            charge_slots: (0, 0),
        }
    }

    pub fn charge_slot_count(&self) -> usize {
        self.charge_slots.1 - self.charge_slots.0
    }
}

/// A complete solution to an [`EvspProblem`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChargingPlan {
    pub stations: Vec<StationPlan>,
    /// Downtime: arrival at the last station minus free-flow travel (h).
    pub objective_tau: f64,
}

impl ChargingPlan {
    /// Battery energy upon arrival at each station, from the recursion
    /// `e_{i+1} = e_i - d*p + E_i`.
    pub fn energy_chain(&self, problem: &EvspProblem) -> Vec<f64> {
        let mut e = vec![problem.vehicle.initial_kwh];
        for i in 0..problem.num_stations() - 1 {
            let last = *e.last().unwrap();
            e.push(last + self.stations[i].energy_kwh - problem.drive_energy[i]);
        }
        e
    }

    pub fn write_summary_csv(&self, mut w: impl std::io::Write) -> Result<()> {
        writeln!(w, "station,x,energy_kwh,arrive_h,wait_h,start_h,depart_h")?;
        for (i, s) in self.stations.iter().enumerate() {
            writeln!(
                w,
                "{i},{},{:.6},{:.6},{:.6},{:.6},{:.6}",
                u8::from(s.visited),
                s.energy_kwh,
                s.arrival,
                s.wait,
                s.charge_start,
                s.departure
            )?;
        }
        Ok(())
    }
}

/// Discretizes a corridor into a scheduling instance on a grid of step `dt`
/// covering `[0, horizon]`.
///
/// Fails when any single segment exceeds the usable battery window or when
/// the horizon cannot cover a worst-case traversal (free flow plus maximal
/// forecast waits, overheads, and the slowest conceivable recharge of the
/// total route demand).
pub fn build_problem(
    corridor: &Corridor,
    vehicle: &VehicleSpec,
    dt: f64,
    horizon: f64,
) -> Result<EvspProblem> {
    corridor.validate()?;
    vehicle.validate()?;
    let grid = TimeGrid::over(0.0, horizon, dt)?;

    let n = corridor.stations.len();
    let mut wait = Vec::with_capacity(n);
    let mut power = Vec::with_capacity(n);
    let mut power_prefix = Vec::with_capacity(n);
    for st in &corridor.stations {
        let w_row: Vec<f64> = grid.times().map(|t| st.forecast.wait_at(t).max(0.0)).collect();
        let p_row: Vec<f64> = grid.times().map(|t| st.forecast.power_at(t).max(0.0)).collect();
        let mut prefix = Vec::with_capacity(grid.len + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for &p in &p_row {
            acc += p;
            prefix.push(acc);
        }
        wait.push(w_row);
        power.push(p_row);
        power_prefix.push(prefix);
    }

    let drive_time: Vec<f64> = corridor.segments.iter().map(Segment::drive_time).collect();
    let drive_energy: Vec<f64> = corridor
        .segments
        .iter()
        .map(|s| s.length_km * vehicle.consumption_kwh_per_km)
        .collect();

    let usable = vehicle.capacity_kwh - vehicle.floor_kwh();
    for (j, &de) in drive_energy.iter().enumerate() {
        if de > usable + 1e-9 {
            return Err(Error::Infeasible(format!(
                "segment {j} needs {de:.3} kWh but the usable battery window is {usable:.3} kWh"
            )));
        }
    }

    let problem = EvspProblem {
        grid,
        wait,
        power,
        overhead: corridor.stations.iter().map(|s| s.overhead_h).collect(),
        drive_time,
        drive_energy,
        vehicle: *vehicle,
        power_prefix,
    };

    // Worst-case traversal guard: free flow plus every overhead plus
    // refilling the whole route demand at the slowest positive table power.
    // Forecast waits are part of the optimization; a horizon the waits
    // exhaust surfaces as solver infeasibility instead.
    let overheads: f64 = problem.overhead.iter().sum();
    let route_demand: f64 = problem.drive_energy.iter().sum();
    let min_pos_power = problem
        .power
        .iter()
        .flat_map(|row| row.iter().copied())
        .filter(|&p| p > 0.0)
        .fold(f64::INFINITY, f64::min);
    let recharge = if min_pos_power.is_finite() { route_demand / min_pos_power } else { 0.0 };
    let worst = problem.free_flow_time() + overheads + recharge;
    if worst > grid.end() + 1e-9 {
        return Err(Error::Config(format!(
            "horizon {horizon} h too short for a worst-case traversal of {worst:.2} h"
        )));
    }

    Ok(problem)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn flat_forecast(horizon: f64, wait: f64, power: f64) -> AvailabilityForecast {
        let grid = TimeGrid::over(0.0, horizon, 0.1).unwrap();
        AvailabilityForecast {
            grid,
            wait: vec![wait; grid.len],
            power: vec![power; grid.len],
        }
    }

    fn vehicle(capacity: f64, initial: f64) -> VehicleSpec {
        VehicleSpec {
            capacity_kwh: capacity,
            consumption_kwh_per_km: 0.2,
            soc_floor: 0.1,
            initial_kwh: initial,
        }
    }

    /// Three stations 100 km apart; overheads and waits per argument.
    fn corridor3(waits: [f64; 3], overheads: [f64; 3]) -> Corridor {
        Corridor {
            stations: (0..3)
                .map(|i| CorridorStation {
                    overhead_h: overheads[i],
                    forecast: flat_forecast(12.0, waits[i], 150.0),
                })
                .collect(),
            segments: vec![
                Segment { length_km: 100.0, speed_kmh: 100.0 },
                Segment { length_km: 100.0, speed_kmh: 100.0 },
            ],
        }
    }

    #[test]
    fn window_energy_integrates_power() {
        let corridor = corridor3([0.0; 3], [0.0; 3]);
        let p = build_problem(&corridor, &vehicle(80.0, 60.0), 0.1, 12.0).unwrap();
        // two slots at 150 kW and 0.1 h cap the energy at 30 kWh
        assert_abs_diff_eq!(p.window_energy(0, 5, 2), 30.0, epsilon = 1e-12);
    }

    #[test]
    fn sufficient_initial_energy_skips_everything() {
        let corridor = corridor3([0.2; 3], [0.1; 3]);
        // 40 kWh route demand, floor 8, so 49 kWh on board suffices
        let plan = solve(
            &build_problem(&corridor, &vehicle(80.0, 49.0), 0.1, 12.0).unwrap(),
            &SolveOptions::default(),
        )
        .unwrap();
        assert!(plan.stations.iter().all(|s| !s.visited));
        assert_abs_diff_eq!(plan.objective_tau, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn solver_avoids_the_congested_station() {
        // both chargeable stations identical except for the wait forecast
        let corridor = corridor3([0.5, 0.0, 0.0], [0.0; 3]);
        let p = build_problem(&corridor, &vehicle(50.0, 40.0), 0.1, 12.0).unwrap();
        let plan = solve(&p, &SolveOptions::default()).unwrap();
        assert!(!plan.stations[0].visited);
        assert!(plan.stations[1].visited);
        // one 0.1 h slot at 150 kW covers the 5 kWh deficit
        assert_abs_diff_eq!(plan.objective_tau, 0.1, epsilon = 1e-12);
        let report = validate_plan(&plan, &p);
        assert!(report.is_ok(), "violations: {:?}", report.violations);
    }

    #[test]
    fn naive_tables_minimize_overhead_only() {
        let corridor = corridor3([0.0; 3], [0.3, 0.05, 0.0]);
        let p = build_problem(&corridor, &vehicle(50.0, 40.0), 0.1, 12.0).unwrap();
        let plan = solve(&p, &SolveOptions::default()).unwrap();
        assert!(plan.stations[1].visited, "cheapest-overhead station expected");
        assert!(!plan.stations[0].visited);
        assert_abs_diff_eq!(plan.objective_tau, 0.05 + 0.1, epsilon = 1e-12);
    }

    #[test]
    fn charge_timing_respects_wait_and_overhead() {
        let corridor = corridor3([0.2, 0.2, 0.2], [0.1; 3]);
        let p = build_problem(&corridor, &vehicle(50.0, 40.0), 0.1, 12.0).unwrap();
        let plan = solve(&p, &SolveOptions::default()).unwrap();
        let visited: Vec<&StationPlan> =
            plan.stations.iter().filter(|s| s.visited).collect();
        assert!(!visited.is_empty());
        for row in visited {
            assert!(row.charge_start >= row.arrival + row.wait + 0.1 - 1e-12);
        }
        let report = validate_plan(&plan, &p);
        assert!(report.is_ok(), "violations: {:?}", report.violations);
    }

    #[test]
    fn validator_flags_corrupted_plans() {
        let corridor = corridor3([0.0; 3], [0.0; 3]);
        let p = build_problem(&corridor, &vehicle(50.0, 40.0), 0.1, 12.0).unwrap();
        let mut plan = solve(&p, &SolveOptions::default()).unwrap();
        let i = plan.stations.iter().position(|s| s.visited).unwrap();
        // blow past the headroom
        plan.stations[i].energy_kwh = 500.0;
        let report = validate_plan(&plan, &p);
        assert!(report.violations.iter().any(|v| v.constraint == "11e"));
        assert!(report.violations.iter().any(|v| v.constraint == "11d"));
    }

    #[test]
    fn larger_waits_never_reduce_downtime() {
        let base = corridor3([0.1, 0.2, 0.0], [0.05; 3]);
        let p1 = build_problem(&base, &vehicle(50.0, 40.0), 0.1, 12.0).unwrap();
        let tau1 = solve(&p1, &SolveOptions::default()).unwrap().objective_tau;
        let worse = corridor3([0.4, 0.5, 0.3], [0.05; 3]);
        let p2 = build_problem(&worse, &vehicle(50.0, 40.0), 0.1, 12.0).unwrap();
        let tau2 = solve(&p2, &SolveOptions::default()).unwrap().objective_tau;
        assert!(tau2 >= tau1 - 1e-12, "tau went down: {tau1} -> {tau2}");
    }

    #[test]
    fn infeasible_corridor_names_the_binding_segment() {
        let corridor = Corridor {
            stations: (0..3)
                .map(|_| CorridorStation {
                    overhead_h: 0.0,
                    forecast: flat_forecast(12.0, 0.0, 150.0),
                })
                .collect(),
            segments: vec![
                Segment { length_km: 100.0, speed_kmh: 100.0 },
                Segment { length_km: 500.0, speed_kmh: 100.0 },
            ],
        };
        // 500 km * 0.2 = 100 kWh > usable window of 72 kWh
        let err = build_problem(&corridor, &vehicle(80.0, 60.0), 0.1, 12.0).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)), "got {err}");
        assert!(err.to_string().contains("segment 1"), "got {err}");
    }

    #[test]
    fn horizon_guard_rejects_short_grids() {
        let corridor = corridor3([0.0; 3], [0.1; 3]);
        let err = build_problem(&corridor, &vehicle(80.0, 60.0), 0.1, 1.5).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "got {err}");
    }

    #[test]
    fn lp_export_has_one_indicator_block_per_station_and_node() {
        let corridor = corridor3([0.1; 3], [0.05; 3]);
        let p = build_problem(&corridor, &vehicle(50.0, 40.0), 0.5, 6.0).unwrap();
        let lp = export_lp(&p);
        let nodes = p.grid.len;
        for i in 0..3 {
            for k in 0..nodes {
                assert_eq!(
                    lp.matches(&format!(" c13e_t_{i}_{k}:")).count(),
                    1,
                    "tightening row for ({i},{k})"
                );
                assert_eq!(lp.matches(&format!(" c13a_on1_{i}_{k}:")).count(), 1);
            }
        }
        assert!(lp.starts_with("\\"));
        assert!(lp.trim_end().ends_with("End"));
    }
}
