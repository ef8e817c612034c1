//! Exact branch-and-bound for the corridor scheduling problem.
//!
//! The search branches per station, in corridor order, over: skipping the
//! station, or charging with a chosen arrival slot and a chosen number of
//! charging grid nodes. Timing is a deterministic forward pass given those
//! discrete choices, so a leaf fixes the objective exactly; concrete charge
//! energies only gate feasibility, which is monotone in the battery level
//! and therefore checked with a running greedy-maximum energy.
//!
//! Starting to charge later than the earliest reachable grid node never
//! shortens a charging window (power is nonnegative), so charge windows are
//! always anchored at the first node after `t*`; deliberate delays are
//! covered by branching over later arrival slots.

use super::{ChargingPlan, EvspProblem, StationPlan};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Absolute-ish optimality gap: subtrees within `gap * max(1, |best|)`
    /// of the incumbent are pruned. Zero proves optimality.
    pub gap: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { gap: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Choice {
    Skip,
    Charge { slot: usize, start_node: usize, nodes: usize },
}

struct Search<'a> {
    p: &'a EvspProblem,
    /// Suffix sums of drive time/energy from station i to the end.
    rest_time: Vec<f64>,
    rest_energy: Vec<f64>,
    p_max: f64,
    floor: f64,
    best_arrival: f64,
    best_choices: Option<Vec<Choice>>,
    choices: Vec<Choice>,
}

impl<'a> Search<'a> {
    fn new(p: &'a EvspProblem) -> Self {
        let n = p.num_stations();
        let mut rest_time = vec![0.0; n];
        let mut rest_energy = vec![0.0; n];
        for i in (0..n - 1).rev() {
            rest_time[i] = rest_time[i + 1] + p.drive_time[i];
            rest_energy[i] = rest_energy[i + 1] + p.drive_energy[i];
        }
        Search {
            p,
            rest_time,
            rest_energy,
            p_max: p.max_power(),
            floor: p.vehicle.floor_kwh(),
            best_arrival: f64::INFINITY,
            best_choices: None,
            choices: Vec::with_capacity(n),
        }
    }

    /// Lower bound on the final arrival time from station `i`: remaining
    /// free-flow time plus the unavoidable charge time for the energy the
    /// route still requires beyond the best achievable current level.
    fn lower_bound(&self, i: usize, t: f64, e_max: f64) -> f64 {
        let needed = self.floor + self.rest_energy[i] - e_max;
        let charge_time = if needed > 0.0 { needed / self.p_max } else { 0.0 };
        t + self.rest_time[i] + charge_time
    }

    fn gap_cut(&self, options: &SolveOptions) -> f64 {
        if self.best_arrival.is_finite() {
            self.best_arrival - options.gap * self.best_arrival.abs().max(1.0)
        } else {
            f64::INFINITY
        }
    }

    fn record_candidate(&mut self, arrival: f64) {
        let better = arrival < self.best_arrival
            || (arrival == self.best_arrival
                && self
                    .best_choices
                    .as_ref()
                    .map(|b| lex_smaller(&self.choices, b))
                    .unwrap_or(true));
        if better {
            self.best_arrival = arrival;
            self.best_choices = Some(self.choices.clone());
        }
    }

    fn dfs(&mut self, i: usize, t: f64, e_max: f64, options: &SolveOptions) {
        if e_max < self.floor - 1e-9 {
            return;
        }
        let n = self.p.num_stations();
        if i == n - 1 {
            self.record_candidate(t);
            return;
        }
        if self.lower_bound(i, t, e_max) > self.gap_cut(options) {
            return;
        }

        // skip first: keeps the leaf order lexicographic in x
        self.choices.push(Choice::Skip);
        self.dfs(
            i + 1,
            t + self.p.drive_time[i],
            e_max - self.p.drive_energy[i],
            options,
        );
        self.choices.pop();

        let Some(earliest_slot) = self.p.slot_of(t) else {
            return;
        };
        let capacity = self.p.vehicle.capacity_kwh;
        let needed_here = self.floor + self.rest_energy[i] - e_max;
        let base_charge_lb = if needed_here > 0.0 { needed_here / self.p_max } else { 0.0 };

        for slot in earliest_slot..self.p.grid.len - 1 {
            let arrival = if slot == earliest_slot { t } else { self.p.grid.time(slot) };
            if arrival + self.rest_time[i] + base_charge_lb > self.gap_cut(options) {
                break;
            }
            let wait = self.p.wait[i][slot];
            let charge_start = arrival + wait + self.p.overhead[i];
            let Some(start_node) = self.p.node_at_or_after(charge_start) else {
                break;
            };

            let mut prev_window = 0.0;
            for nodes in 1.. {
                if start_node + nodes > self.p.grid.len {
                    break;
                }
                let depart = charge_start + nodes as f64 * self.p.grid.dt;
                if depart + self.rest_time[i] > self.gap_cut(options) {
                    break;
                }
                let window = self.p.window_energy(i, start_node, nodes);
                if window <= prev_window + 1e-12 {
                    prev_window = window;
                    continue; // no marginal energy in the added node
                }
                self.choices.push(Choice::Charge { slot, start_node, nodes });
                self.dfs(
                    i + 1,
                    depart + self.p.drive_time[i],
                    (e_max + window).min(capacity) - self.p.drive_energy[i],
                    options,
                );
                self.choices.pop();
                if e_max + window >= capacity - 1e-12 {
                    break; // headroom saturated; longer windows only add time
                }
                prev_window = window;
            }
        }
    }
}

fn lex_smaller(a: &[Choice], b: &[Choice]) -> bool {
    // x-vector lexicographic order, Skip < Charge
    for (ca, cb) in a.iter().zip(b.iter()) {
        let xa = !matches!(ca, Choice::Skip);
        let xb = !matches!(cb, Choice::Skip);
        if xa != xb {
            return !xa;
        }
    }
    false
}

/// Solves the instance to the requested gap (default: proven optimality).
///
/// Ties are broken toward the lexicographically smallest visit vector and
/// the earliest final arrival. Returns an infeasibility report naming the
/// binding segment when no plan can traverse the corridor.
pub fn solve(problem: &EvspProblem, options: &SolveOptions) -> Result<ChargingPlan> {
    let n = problem.num_stations();
    let mut search = Search::new(problem);

    // greedy warm start: charge to saturation at every station, earliest slots
    if let Some((arrival, choices)) = greedy_saturate(problem, &search) {
        search.best_arrival = arrival;
        search.best_choices = Some(choices);
    }

    search.dfs(0, 0.0, problem.vehicle.initial_kwh, options);

    let Some(choices) = search.best_choices else {
        return Err(diagnose_infeasibility(problem));
    };
    let plan = reconstruct(problem, &choices)?;
    debug_assert!(
        (plan.stations[n - 1].arrival - search.best_arrival).abs() < 1e-9,
        "reconstruction drifted from the search objective"
    );
    Ok(plan)
}

/// Forward pass that charges as much as the battery accepts at each station
/// in the earliest slots. Used only as a warm-start incumbent.
fn greedy_saturate(p: &EvspProblem, s: &Search) -> Option<(f64, Vec<Choice>)> {
    let n = p.num_stations();
    let capacity = p.vehicle.capacity_kwh;
    let mut choices = Vec::with_capacity(n);
    let mut t = 0.0;
    let mut e = p.vehicle.initial_kwh;
    for i in 0..n - 1 {
        if e < s.floor - 1e-9 {
            return None;
        }
        let mut taken = Choice::Skip;
        if e < capacity - 1e-9 {
            if let (Some(slot), headroom) = (p.slot_of(t), capacity - e) {
                let charge_start = t + p.wait[i][slot] + p.overhead[i];
                if let Some(start_node) = p.node_at_or_after(charge_start) {
                    let mut nodes = 0;
                    while start_node + nodes < p.grid.len
                        && p.window_energy(i, start_node, nodes) < headroom - 1e-12
                    {
                        nodes += 1;
                    }
                    if nodes > 0 && p.window_energy(i, start_node, nodes) > 1e-12 {
                        let window = p.window_energy(i, start_node, nodes).min(headroom);
                        e = (e + window).min(capacity);
                        t = charge_start + nodes as f64 * p.grid.dt;
                        taken = Choice::Charge { slot, start_node, nodes };
                    }
                }
            }
        }
        choices.push(taken);
        t += p.drive_time[i];
        e -= p.drive_energy[i];
    }
    if e < s.floor - 1e-9 {
        return None;
    }
    Some((t, choices))
}

fn diagnose_infeasibility(p: &EvspProblem) -> Error {
    // battery-only check: fill to capacity at every station and see where
    // the route first dips below the floor
    let floor = p.vehicle.floor_kwh();
    for i in 0..p.num_stations() - 1 {
        let e = p.vehicle.capacity_kwh - p.drive_energy[i];
        if e < floor - 1e-9 {
            return Error::Infeasible(format!(
                "segment {} -> {} exceeds the usable battery window even after a full charge",
                i,
                i + 1
            ));
        }
    }
    Error::Infeasible(
        "no feasible plan within the forecast horizon: charging windows and waits \
         exhaust the grid"
            .to_string(),
    )
}

/// Expands a choice vector into a full plan with concrete times and a
/// just-in-time energy assignment.
fn reconstruct(p: &EvspProblem, choices: &[Choice]) -> Result<ChargingPlan> {
    let n = p.num_stations();
    let floor = p.vehicle.floor_kwh();
    let capacity = p.vehicle.capacity_kwh;

    // timing forward pass, identical transitions to the search
    let mut rows: Vec<StationPlan> = Vec::with_capacity(n);
    let mut t = 0.0;
    for i in 0..n - 1 {
        match choices[i] {
            Choice::Skip => {
                rows.push(StationPlan::pass_through(t));
                t += p.drive_time[i];
            }
            Choice::Charge { slot, start_node, nodes } => {
                let arrival =
                    if Some(slot) == p.slot_of(t) { t } else { p.grid.time(slot) };
                let wait = p.wait[i][slot];
                let charge_start = arrival + wait + p.overhead[i];
                let depart = charge_start + nodes as f64 * p.grid.dt;
                rows.push(StationPlan {
                    visited: true,
                    energy_kwh: 0.0,
                    arrival,
                    wait,
                    charge_start,
                    departure: depart,
                    arrival_slot: Some(slot),
                    charge_slots: (start_node, start_node + nodes),
                });
                t = depart + p.drive_time[i];
            }
        }
    }
    rows.push(StationPlan::pass_through(t));

    // backward minimum-requirement pass
    let mut need = vec![floor; n];
    for i in (0..n - 1).rev() {
        let cap = match choices[i] {
            Choice::Skip => 0.0,
            Choice::Charge { start_node, nodes, .. } => p.window_energy(i, start_node, nodes),
        };
        need[i] = floor.max(need[i + 1] + p.drive_energy[i] - cap);
    }
    if need[0] > p.vehicle.initial_kwh + 1e-9 {
        return Err(Error::internal(
            "search accepted a plan the energy recursion cannot support".to_string(),
        ));
    }

    // just-in-time forward assignment
    let mut e = p.vehicle.initial_kwh;
    for i in 0..n - 1 {
        if e < floor - 1e-9 {
            return Err(Error::internal("battery dipped below floor in reconstruction".to_string()));
        }
        if let Choice::Charge { start_node, nodes, .. } = choices[i] {
            let window = p.window_energy(i, start_node, nodes);
            let wanted = (need[i + 1] + p.drive_energy[i] - e).max(0.0);
            let energy = wanted.min(window).min(capacity - e);
            rows[i].energy_kwh = energy;
            e += energy;
        }
        e -= p.drive_energy[i];
    }
    if e < floor - 1e-9 {
        return Err(Error::internal("final arrival below the energy floor".to_string()));
    }

    let tau = rows[n - 1].arrival - p.free_flow_time();
    Ok(ChargingPlan { stations: rows, objective_tau: tau })
}
