//! Independent feasibility check of a charging plan.
//!
//! Re-derives every constraint of the discrete-time formulation from the
//! plan's raw numbers, recomputes the objective from first principles, and
//! lists violations with constraint identifiers. Shares no code with the
//! solver beyond the problem tables.

use super::{ChargingPlan, EvspProblem, SLOT_EPS};

const TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct Violation {
    /// Constraint identifier, e.g. "11c" or "13a".
    pub constraint: &'static str,
    pub station: usize,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub recomputed_tau: f64,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_plan(plan: &ChargingPlan, problem: &EvspProblem) -> ValidationReport {
    let mut violations = Vec::new();
    let n = problem.num_stations();
    let v = &problem.vehicle;
    let capacity = v.capacity_kwh;
    let floor = v.floor_kwh();
    let grid = &problem.grid;

    let mut push = |constraint: &'static str, station: usize, detail: String| {
        violations.push(Violation { constraint, station, detail });
    };

    if plan.stations.len() != n {
        push("14", 0, format!("plan has {} rows for {} stations", plan.stations.len(), n));
        return ValidationReport { violations, recomputed_tau: f64::NAN };
    }

    let energies = plan.energy_chain(problem);

    for i in 0..n {
        let row = &plan.stations[i];
        let e_i = energies[i];
        let x = row.visited;

        // 11b: charging only when visiting
        if row.energy_kwh > (if x { capacity } else { 0.0 }) + TOL {
            push("11b", i, format!("E = {} with x = {}", row.energy_kwh, u8::from(x)));
        }
        // 11c: state-of-charge window upon arrival
        if e_i < floor - TOL || e_i > capacity + TOL {
            push("11c", i, format!("arrival energy {e_i} outside [{floor}, {capacity}]"));
        }
        // 11d: charged energy within the window's integrated power
        let (k0, k1) = row.charge_slots;
        let window: f64 = if k1 > k0 {
            grid.dt * problem.power[i][k0..k1].iter().sum::<f64>()
        } else {
            0.0
        };
        if row.energy_kwh > window + TOL {
            push("11d", i, format!("E = {} exceeds window energy {window}", row.energy_kwh));
        }
        // 11e: headroom
        if row.energy_kwh < -TOL || row.energy_kwh > capacity - e_i + TOL {
            push("11e", i, format!("E = {} outside [0, {}]", row.energy_kwh, capacity - e_i));
        }
        // 12a: start after arrival, wait, and overhead
        let gate = row.arrival + row.wait + if x { problem.overhead[i] } else { 0.0 };
        if row.charge_start < gate - TOL {
            push("12a", i, format!("t* = {} before {gate}", row.charge_start));
        }
        // 12b: departure covers the aggregated charging interval
        let theta_len = grid.dt * row.charge_slot_count() as f64;
        if row.departure < row.charge_start + theta_len - TOL {
            push("12b", i, format!("depart {} before t* + {theta_len}", row.departure));
        }
        // 13a: theta nodes are exactly the grid nodes in [t*, depart);
        // nodes within the slot tolerance of either boundary are ambiguous
        // under floating point and are not flagged either way
        for k in 0..grid.len {
            let tk = grid.time(k);
            if (tk - row.charge_start).abs() <= SLOT_EPS
                || (tk - row.departure).abs() <= SLOT_EPS
            {
                continue;
            }
            let inside = tk > row.charge_start && tk < row.departure;
            let selected = k >= k0 && k < k1;
            if inside != selected {
                push(
                    "13a",
                    i,
                    format!("node {k} at t = {tk}: in-window {inside}, selected {selected}"),
                );
                break;
            }
        }
        // 13b: the arrival slot actually contains the arrival time
        if let Some(s) = row.arrival_slot {
            if s + 1 >= grid.len {
                push("13b", i, format!("arrival slot {s} beyond the grid"));
            } else {
                let (lo, hi) = (grid.time(s), grid.time(s + 1));
                if row.arrival < lo - SLOT_EPS || row.arrival > hi + SLOT_EPS {
                    push("13b", i, format!("arrival {} outside slot [{lo}, {hi})", row.arrival));
                }
            }
        }
        // 13c: wait equals the forecast of the selected slot
        let expected_wait = row.arrival_slot.map(|s| problem.wait[i][s]).unwrap_or(0.0);
        if (row.wait - expected_wait).abs() > TOL {
            push("13c", i, format!("wait {} but slot forecast {expected_wait}", row.wait));
        }
        // 13d: exactly one arrival slot iff visited
        if x != row.arrival_slot.is_some() {
            push("13d", i, format!("x = {} with arrival slot {:?}", u8::from(x), row.arrival_slot));
        }
        // 13e: selectors imply the visit flag
        if !x && (row.arrival_slot.is_some() || k1 > k0) {
            push("13e", i, "selectors set on an unvisited station".to_string());
        }
        // 14: domains
        if row.energy_kwh < -TOL
            || row.arrival < -TOL
            || row.wait < -TOL
            || row.charge_start < -TOL
            || row.departure < -TOL
        {
            push("14", i, "negative decision variable".to_string());
        }

        // 12c: drive time to the next station
        if i + 1 < n {
            let next_arrival = plan.stations[i + 1].arrival;
            if next_arrival < row.departure + problem.drive_time[i] - TOL {
                push(
                    "12c",
                    i,
                    format!(
                        "next arrival {next_arrival} before departure {} + drive {}",
                        row.departure, problem.drive_time[i]
                    ),
                );
            }
        }
    }

    // objective from first principles
    let recomputed_tau = plan.stations[n - 1].arrival - problem.free_flow_time();
    if (recomputed_tau - plan.objective_tau).abs() > TOL {
        push(
            "15",
            n - 1,
            format!("tau {} but recomputed {recomputed_tau}", plan.objective_tau),
        );
    }

    ValidationReport { violations, recomputed_tau }
}
