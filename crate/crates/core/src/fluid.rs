//! Coupled fluid queue for a charging station.
//!
//! The station is a multi-server FCFS queue whose state couples a vehicle
//! flow and an energy-demand flow: `q`/`b` vehicles in queue/service and
//! `E`/`W` kWh of demand in queue/service. Service depletes `W` at the
//! supplied power, vehicles depart at rate `r = mu * b` with per-charger
//! service rate `mu = P_S / W`, and the system switches between an
//! underloaded regime (`b < c`, empty queue) and an overloaded regime
//! (`b` pinned at `c`, queue accumulating).
//!
//! Integration is explicit Euler with per-cell rate averages recorded, so
//! the discrete trajectory conserves vehicles and energy up to the regime
//! switching within a step. Arrival rates are evaluated at cell midpoints;
//! since a [`RateGrid`] is piecewise linear, the admitted mass per cell is
//! the exact integral of the arrival curve.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CumulativeCurve, RateGrid, TimeGrid};

/// Service-energy level (kWh) below which the service phase is treated as
/// instantaneous pass-through; the per-charger rate in `mu = P_S / W` is
/// undefined at `W = 0`.
pub const EPS_W: f64 = 1e-6;

/// Lower bound (kWh) on the energy of any real charging session; caps the
/// per-charger service rate at `charger_power / E_FLOOR`.
pub const E_FLOOR: f64 = 1.0;

/// Occupancy below which per-vehicle power falls back to the nominal rating.
pub const EPS_B: f64 = 1e-6;

const EPS_RATE: f64 = 1e-12;

/// Physical parameters of one charging station.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationConfig {
    /// Number of chargers.
    pub capacity_c: u32,
    /// Rated power per charger (kW).
    pub charger_power: f64,
    /// Grid connection power over total installed charger power, in (0, 1].
    pub gamma: f64,
}

impl StationConfig {
    pub fn new(capacity_c: u32, charger_power: f64, gamma: f64) -> Result<Self> {
        if capacity_c < 1 {
            return Err(Error::invalid("station needs at least one charger".to_string()));
        }
        if !(charger_power > 0.0) {
            return Err(Error::invalid(format!("charger power must be > 0, got {charger_power}")));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::invalid(format!("gamma must be in (0, 1], got {gamma}")));
        }
        Ok(StationConfig { capacity_c, charger_power, gamma })
    }

    pub fn capacity(&self) -> f64 {
        self.capacity_c as f64
    }

    /// Maximum power deliverable through the grid connection (kW).
    pub fn grid_power(&self) -> f64 {
        self.gamma * self.charger_power * self.capacity()
    }

    /// Physical cap on the per-charger service rate (1/h).
    pub fn service_rate_cap(&self) -> f64 {
        self.charger_power / E_FLOOR
    }
}

/// Operating regime of the fluid queue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// `b < c`: arriving fluid enters service immediately, the queue is empty.
    Underloaded,
    /// `b = c`: the station runs at capacity, excess inflow queues up.
    Overloaded,
}

/// Instantaneous state of the coupled fluid queue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluidState {
    /// Vehicles in queue (q).
    pub queue: f64,
    /// Vehicles in service (b).
    pub in_service: f64,
    /// Energy demand waiting in queue (E, kWh).
    pub queue_energy: f64,
    /// Energy demand remaining in service (W, kWh).
    pub service_energy: f64,
    /// Time the fluid now entering service has waited (w, h).
    pub waited: f64,
    pub regime: Regime,
}

impl FluidState {
    pub fn empty() -> Self {
        FluidState {
            queue: 0.0,
            in_service: 0.0,
            queue_energy: 0.0,
            service_energy: 0.0,
            waited: 0.0,
            regime: Regime::Underloaded,
        }
    }

    pub fn validate(&self, cfg: &StationConfig) -> Result<()> {
        let c = cfg.capacity();
        if !(self.in_service >= -1e-9 && self.in_service <= c + 1e-9) {
            return Err(Error::internal(format!("b = {} outside [0, {c}]", self.in_service)));
        }
        if self.queue < -1e-9 || self.queue_energy < -1e-9 || self.service_energy < -1e-9 {
            return Err(Error::internal("negative fluid stock".to_string()));
        }
        if self.regime == Regime::Underloaded
            && (self.queue != 0.0 || self.queue_energy != 0.0 || self.waited != 0.0)
        {
            return Err(Error::internal("underloaded state with nonempty queue".to_string()));
        }
        Ok(())
    }
}

/// Total supplied power over all chargers (kW): per-charger power times
/// occupied chargers, capped by the grid connection.
pub fn supplied_power(in_service: f64, cfg: &StationConfig) -> f64 {
    debug_assert!(in_service >= 0.0 && in_service <= cfg.capacity() + 1e-9);
    cfg.grid_power().min(cfg.charger_power * in_service)
}

/// Per-charger service rate and aggregate departure rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ServiceRates {
    /// Demand present in service: `mu = P_S / W` (capped) and `r = mu * b`.
    Active { mu: f64, r: f64 },
    /// Service energy at or below [`EPS_W`]: the service phase passes
    /// admitted fluid straight through; departures track admissions.
    PassThrough,
}

pub fn service_and_departure(
    supplied: f64,
    service_energy: f64,
    in_service: f64,
    cfg: &StationConfig,
) -> ServiceRates {
    debug_assert!(service_energy >= 0.0 && in_service >= 0.0);
    if service_energy <= EPS_W {
        return ServiceRates::PassThrough;
    }
    let mu = (supplied / service_energy).min(cfg.service_rate_cap());
    ServiceRates::Active { mu, r: mu * in_service }
}

/// Per-cell average rates actually applied by the integrator.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepRates {
    /// Admission rate into service, lambda* (veh/h).
    pub admitted_lambda: f64,
    /// Admitted load into service, delta* (kW).
    pub admitted_delta: f64,
    /// Departure rate r (veh/h).
    pub departure: f64,
    /// Supplied power P_S actually drawn (kW).
    pub supplied: f64,
}

/// Mass moved during a partial advance, used to build per-cell averages.
#[derive(Debug, Clone, Copy, Default)]
struct PhaseFlows {
    admitted_vehicles: f64,
    admitted_energy: f64,
    departed_vehicles: f64,
    supplied_energy: f64,
}

/// Advances one regime phase by at most `dt`, returning the time consumed.
/// Consumes less than `dt` only when the queue drains mid-step.
fn advance_phase(
    state: &FluidState,
    lam: f64,
    del: f64,
    head_energy_per_vehicle: f64,
    dt: f64,
    cfg: &StationConfig,
) -> (FluidState, PhaseFlows, f64) {
    let c = cfg.capacity();
    let mut next = *state;
    let mut flows = PhaseFlows::default();

    match state.regime {
        Regime::Underloaded => {
            let b = state.in_service;
            let w_energy = state.service_energy;
            let ps = supplied_power(b, cfg);
            let r = match service_and_departure(ps, w_energy, b, cfg) {
                ServiceRates::Active { r, .. } => r,
                ServiceRates::PassThrough => {
                    // Keep b tracking lambda* times the mean residual
                    // service time of the incoming fluid.
                    let e_in = if lam > EPS_RATE { (del / lam).max(E_FLOOR) } else { E_FLOOR };
                    let b_target = lam * e_in / cfg.charger_power;
                    ((b - b_target) / dt + lam).max(0.0)
                }
            };
            // over-draining guards: r*dt <= b + inflow, P_S*dt <= W + inflow
            let r = r.min(b / dt + lam);
            let ps_eff = ps.min(w_energy / dt + del);
            let b_trial = b + dt * (lam - r);

            if b_trial <= c {
                next.in_service = b_trial.max(0.0);
                next.service_energy = (w_energy + dt * (del - ps_eff)).max(0.0);
                flows.admitted_vehicles = lam * dt;
                flows.admitted_energy = del * dt;
            } else {
                // capacity reached within the step: divert the excess
                // inflow to the queue pro rata
                let admitted = (c - b) + r * dt;
                let inflow = lam * dt;
                let excess = (inflow - admitted).max(0.0);
                let e_in = if lam > EPS_RATE { del / lam } else { 0.0 };
                next.in_service = c;
                next.queue = excess;
                next.queue_energy = excess * e_in;
                next.service_energy =
                    (w_energy + admitted * e_in - ps_eff * dt).max(0.0);
                next.regime = Regime::Overloaded;
                flows.admitted_vehicles = admitted;
                flows.admitted_energy = admitted * e_in;
            }
            flows.departed_vehicles = r * dt;
            flows.supplied_energy = ps_eff * dt;
            (next, flows, dt)
        }
        Regime::Overloaded => {
            let w_energy = state.service_energy;
            let ps = supplied_power(c, cfg);
            let r = match service_and_departure(ps, w_energy, c, cfg) {
                ServiceRates::Active { r, .. } => r,
                ServiceRates::PassThrough => cfg.service_rate_cap() * c,
            };
            let r = r.min(c / dt);
            let lam_star = r;
            // FCFS: fluid entering service now arrived at the head-of-queue
            // epoch; its load ratio sets delta*.
            let del_star = (lam_star * head_energy_per_vehicle)
                .min(state.queue_energy / dt + del);
            let ps_eff = ps.min(w_energy / dt + del_star);

            let q_trial = state.queue + dt * (lam - lam_star);
            if q_trial > 0.0 || lam >= lam_star {
                next.queue = q_trial.max(0.0);
                next.queue_energy = (state.queue_energy + dt * (del - del_star)).max(0.0);
                next.service_energy = (w_energy + dt * (del_star - ps_eff)).max(0.0);
                next.in_service = c;
                flows.admitted_vehicles = lam_star * dt;
                flows.admitted_energy = del_star * dt;
                flows.departed_vehicles = r * dt;
                flows.supplied_energy = ps_eff * dt;
                (next, flows, dt)
            } else {
                // queue drains within the step: advance to the drain
                // instant, flush residual queue energy into service, and
                // hand the remainder of the step to the underloaded branch
                let theta = (state.queue / (dt * (lam_star - lam))).clamp(0.0, 1.0);
                let used = theta * dt;
                let drained_energy = (del_star * used).min(state.queue_energy + del * used);
                let residual_queue_energy =
                    (state.queue_energy + del * used - drained_energy).max(0.0);
                next.queue = 0.0;
                next.queue_energy = 0.0;
                next.waited = 0.0;
                next.service_energy = (w_energy + drained_energy + residual_queue_energy
                    - ps_eff * used)
                    .max(0.0);
                next.in_service = c;
                next.regime = Regime::Underloaded;
                flows.admitted_vehicles = lam_star * used + state.queue;
                flows.admitted_energy = drained_energy + residual_queue_energy;
                flows.departed_vehicles = r * used;
                flows.supplied_energy = ps_eff * used;
                // consume a whole step even when theta == 0 so the caller
                // always progresses; the regime switch is the progress
                (next, flows, if used > 0.0 { used } else { f64::MIN_POSITIVE })
            }
        }
    }
}

/// Advances the fluid state across one time step of width `dt` starting at
/// `t`, switching regimes inside the step where required. Returns the new
/// state and the average rates applied over the step.
pub fn step(
    state: &FluidState,
    t: f64,
    dt: f64,
    lam: &RateGrid,
    del: &RateGrid,
    cfg: &StationConfig,
    cum_lambda: &CumulativeCurve,
) -> Result<(FluidState, StepRates)> {
    let mut current = *state;
    let mut elapsed = 0.0f64;
    let mut total = PhaseFlows::default();

    for _ in 0..8 {
        if elapsed >= dt - 1e-15 {
            break;
        }
        let remaining = dt - elapsed;
        let t_mid = t + elapsed + 0.5 * remaining;
        let lam_mid = lam.value_at(t_mid);
        let del_mid = del.value_at(t_mid);
        // head-of-queue arrival epoch for the admitted-load split
        let head_epoch = t + elapsed - current.waited;
        let lam_head = lam.value_at(head_epoch);
        let head_energy = if lam_head > EPS_RATE {
            del.value_at(head_epoch) / lam_head
        } else if current.queue > EPS_RATE {
            current.queue_energy / current.queue
        } else if lam_mid > EPS_RATE {
            del_mid / lam_mid
        } else {
            0.0
        };

        let (next, flows, used) =
            advance_phase(&current, lam_mid, del_mid, head_energy, remaining, cfg);
        total.admitted_vehicles += flows.admitted_vehicles;
        total.admitted_energy += flows.admitted_energy;
        total.departed_vehicles += flows.departed_vehicles;
        total.supplied_energy += flows.supplied_energy;
        current = next;
        elapsed += used;
    }
    if elapsed < dt - 1e-12 {
        return Err(Error::internal(format!(
            "fluid step failed to converge at t={t}: advanced {elapsed} of {dt}"
        )));
    }

    // waited time from the accumulated-arrivals relation
    current.waited = if current.queue > EPS_RATE {
        waited_time(cum_lambda, current.queue, t + dt)?
    } else {
        0.0
    };

    Ok((
        current,
        StepRates {
            admitted_lambda: total.admitted_vehicles / dt,
            admitted_delta: total.admitted_energy / dt,
            departure: total.departed_vehicles / dt,
            supplied: total.supplied_energy / dt,
        },
    ))
}

/// Smallest `w >= 0` whose accumulated arrivals over `[t - w, t]` equal the
/// queued mass `q`. Errors when `q` exceeds all past arrivals, which means
/// the integrator state is inconsistent.
pub fn waited_time(cum_lambda: &CumulativeCurve, queue: f64, t: f64) -> Result<f64> {
    cum_lambda.invert_window(t, queue)
}

/// Full fluid trajectory over a horizon.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FluidTrajectory {
    pub grid: TimeGrid,
    pub states: Vec<FluidState>,
    /// Per-cell average rates, `grid.len - 1` entries.
    pub rates: Vec<StepRates>,
}

/// Integrates the fluid queue over the arrival grids, starting from
/// `initial`. The integrator steps at the grid resolution; refine the grids
/// (see [`RateGrid`]) to integrate at a finer `dt`.
pub fn integrate(
    lam: &RateGrid,
    del: &RateGrid,
    cfg: &StationConfig,
    initial: FluidState,
) -> Result<FluidTrajectory> {
    if !lam.grid().aligned_with(del.grid()) {
        return Err(Error::GridMismatch(
            "arrival-rate and load-rate grids differ".to_string(),
        ));
    }
    initial.validate(cfg)?;
    let grid = *lam.grid();
    let cum = lam.cumulative();
    let mut states = Vec::with_capacity(grid.len);
    let mut rates = Vec::with_capacity(grid.len - 1);
    let mut state = initial;
    states.push(state);
    for k in 0..grid.len - 1 {
        let (next, step_rates) = step(&state, grid.time(k), grid.dt, lam, del, cfg, &cum)?;
        state = next;
        states.push(state);
        rates.push(step_rates);
    }
    Ok(FluidTrajectory { grid, states, rates })
}

/// Station availability over time: expected wait before service `v(t)` (h)
/// and per-vehicle charging power `P(t)` (kW).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AvailabilityForecast {
    pub grid: TimeGrid,
    pub wait: Vec<f64>,
    pub power: Vec<f64>,
}

impl AvailabilityForecast {
    /// Forecast of an uncongested station: zero wait, nominal power.
    pub fn naive(grid: TimeGrid, charger_power: f64) -> Self {
        AvailabilityForecast {
            grid,
            wait: vec![0.0; grid.len],
            power: vec![charger_power; grid.len],
        }
    }

    pub fn wait_at(&self, t: f64) -> f64 {
        interp(&self.grid, &self.wait, t)
    }

    pub fn power_at(&self, t: f64) -> f64 {
        interp(&self.grid, &self.power, t)
    }

    pub fn write_csv(&self, mut w: impl std::io::Write) -> Result<()> {
        writeln!(w, "t_h,wait_h,power_kw")?;
        for (k, t) in self.grid.times().enumerate() {
            writeln!(w, "{t:.6},{:.9},{:.9}", self.wait[k], self.power[k])?;
        }
        Ok(())
    }

    /// Reads the `t_h,wait_h,power_kw` schema written by [`Self::write_csv`];
    /// the grid is inferred from the (uniform) time column.
    pub fn read_csv(r: impl std::io::BufRead) -> Result<Self> {
        let mut times = Vec::new();
        let mut wait = Vec::new();
        let mut power = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line.starts_with("t_h")) {
                continue;
            }
            let mut fields = line.split(',');
            let mut next = |name: &str| -> Result<f64> {
                fields
                    .next()
                    .ok_or_else(|| {
                        Error::Parse(format!("line {}: missing {name}", lineno + 1))
                    })?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {name}: {e}", lineno + 1)))
            };
            times.push(next("t_h")?);
            wait.push(next("wait_h")?);
            power.push(next("power_kw")?);
        }
        if times.len() < 2 {
            return Err(Error::Parse("forecast csv needs at least two rows".to_string()));
        }
        let dt = times[1] - times[0];
        if !(dt > 0.0) {
            return Err(Error::Parse("forecast csv times must increase".to_string()));
        }
        for (k, w) in times.windows(2).enumerate() {
            if ((w[1] - w[0]) - dt).abs() > 1e-6 * dt {
                return Err(Error::Parse(format!(
                    "forecast csv grid is not uniform near row {}",
                    k + 2
                )));
            }
        }
        let grid = TimeGrid::new(times[0], dt, times.len())?;
        Ok(AvailabilityForecast { grid, wait, power })
    }
}

fn interp(grid: &TimeGrid, values: &[f64], t: f64) -> f64 {
    if t <= grid.t0 {
        return values[0];
    }
    if t >= grid.end() {
        return values[grid.len - 1];
    }
    let x = (t - grid.t0) / grid.dt;
    let k = (x.floor() as usize).min(grid.len - 2);
    let frac = x - k as f64;
    values[k] * (1.0 - frac) + values[k + 1] * frac
}

/// Extracts the availability forecast from a trajectory.
///
/// The wait-upon-arrival curve `v` inverts the waited-time relation: fluid
/// entering service at `t_k` after waiting `w_k` arrived at `t_k - w_k`, so
/// `v(t_k - w_k) = w_k`; the inversion points are interpolated onto the
/// grid and the last value is held beyond the final point. Per-vehicle
/// power divides the supplied power of the occupancy level by the occupancy
/// itself, clipped to the charger rating.
pub fn postprocess(traj: &FluidTrajectory, cfg: &StationConfig) -> AvailabilityForecast {
    let grid = traj.grid;
    // monotone service-entry arrival epochs
    let mut points: Vec<(f64, f64)> = Vec::with_capacity(grid.len);
    let mut last_epoch = f64::NEG_INFINITY;
    for (k, s) in traj.states.iter().enumerate() {
        let epoch = (grid.time(k) - s.waited).max(last_epoch);
        last_epoch = epoch;
        points.push((epoch, s.waited));
    }

    let mut wait = Vec::with_capacity(grid.len);
    let mut j = 0usize;
    for t in grid.times() {
        while j + 1 < points.len() && points[j + 1].0 <= t {
            j += 1;
        }
        let v = if j + 1 < points.len() && points[j + 1].0 > points[j].0 && t >= points[j].0 {
            let (a0, w0) = points[j];
            let (a1, w1) = points[j + 1];
            w0 + (w1 - w0) * ((t - a0) / (a1 - a0)).clamp(0.0, 1.0)
        } else {
            points[j].1
        };
        wait.push(v.max(0.0));
    }

    let power = traj
        .states
        .iter()
        .map(|s| {
            if s.in_service > EPS_B {
                (supplied_power(s.in_service, cfg) / s.in_service)
                    .clamp(0.0, cfg.charger_power)
            } else {
                cfg.charger_power
            }
        })
        .collect();

    AvailabilityForecast { grid, wait, power }
}

/// Writes the full trajectory with its forecast as CSV
/// (t, q, b, E, W, w, v, P, P_S).
pub fn write_trajectory_csv(
    traj: &FluidTrajectory,
    forecast: &AvailabilityForecast,
    mut w: impl std::io::Write,
) -> Result<()> {
    writeln!(w, "t_h,q,b,E_kwh,W_kwh,w_h,v_h,P_kw,PS_kw")?;
    for (k, t) in traj.grid.times().enumerate() {
        let s = &traj.states[k];
        let ps = if k < traj.rates.len() { traj.rates[k].supplied } else { 0.0 };
        writeln!(
            w,
            "{t:.6},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9}",
            s.queue,
            s.in_service,
            s.queue_energy,
            s.service_energy,
            s.waited,
            forecast.wait[k],
            forecast.power[k],
            ps
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arrivals::{scheduled_rates, ScheduledVehicle, SigmaModel};
    use approx::assert_abs_diff_eq;

    fn cfg_one_charger() -> StationConfig {
        StationConfig::new(1, 150.0, 1.0).unwrap()
    }

    #[test]
    fn supplied_power_examples() {
        let cfg = cfg_one_charger();
        assert_eq!(supplied_power(0.0, &cfg), 0.0);
        assert_eq!(supplied_power(1.0, &cfg), 150.0);

        let cfg10 = StationConfig::new(10, 150.0, 1.0).unwrap();
        assert_eq!(supplied_power(10.0, &cfg10), 1500.0);

        let cfg_half = StationConfig::new(10, 150.0, 0.5).unwrap();
        assert_eq!(supplied_power(8.0, &cfg_half), 750.0);
    }

    #[test]
    fn service_rate_examples() {
        let cfg = cfg_one_charger();
        match service_and_departure(150.0, 30.0, 1.0, &cfg) {
            ServiceRates::Active { mu, r } => {
                assert_abs_diff_eq!(mu, 5.0, epsilon = 1e-12);
                assert_abs_diff_eq!(r, 5.0, epsilon = 1e-12);
            }
            ServiceRates::PassThrough => panic!("expected active service"),
        }
        assert!(matches!(
            service_and_departure(150.0, 0.0, 1.0, &cfg),
            ServiceRates::PassThrough
        ));
        match service_and_departure(0.0, 30.0, 0.0, &cfg) {
            ServiceRates::Active { r, .. } => assert_eq!(r, 0.0),
            ServiceRates::PassThrough => panic!("expected active service"),
        }
    }

    #[test]
    fn empty_station_is_a_fixed_point() {
        let cfg = cfg_one_charger();
        let grid = TimeGrid::over(0.0, 1.0, 0.005).unwrap();
        let lam = RateGrid::zeros(grid);
        let del = RateGrid::zeros(grid);
        let traj = integrate(&lam, &del, &cfg, FluidState::empty()).unwrap();
        for s in &traj.states {
            assert_eq!(s.queue, 0.0);
            assert_eq!(s.in_service, 0.0);
            assert_eq!(s.queue_energy, 0.0);
            assert_eq!(s.service_energy, 0.0);
        }
    }

    fn toy_rates(grid: TimeGrid) -> (RateGrid, RateGrid) {
        let sm = SigmaModel::default();
        let vehicles = [
            ScheduledVehicle::new(0.1, 30.0, sm.sigma_at(0.1)).unwrap(),
            ScheduledVehicle::new(0.12, 20.0, sm.sigma_at(0.12)).unwrap(),
            ScheduledVehicle::new(0.7, 15.0, sm.sigma_at(0.7)).unwrap(),
        ];
        scheduled_rates(&vehicles, grid).unwrap()
    }

    #[test]
    fn toy_example_saturates_single_charger() {
        let cfg = cfg_one_charger();
        let grid = TimeGrid::over(0.0, 2.0, 0.005).unwrap();
        let (lam, del) = toy_rates(grid);
        let traj = integrate(&lam, &del, &cfg, FluidState::empty()).unwrap();

        // the charger saturates shortly after the first arrival peak
        let b_at = |t: f64| traj.states[grid.index_at(t)].in_service;
        assert!(b_at(0.2) > 0.95, "b(0.2) = {}", b_at(0.2));
        // a queue forms between the first two arrivals
        let q_max_early: f64 = traj
            .states
            .iter()
            .enumerate()
            .filter(|(k, _)| grid.time(*k) > 0.1 && grid.time(*k) < 0.5)
            .map(|(_, s)| s.queue)
            .fold(0.0, f64::max);
        assert!(q_max_early > 0.3, "queue never formed: {q_max_early}");
        // waiting happens only while the charger is saturated
        for s in &traj.states {
            if s.waited > 1e-9 {
                assert!(s.in_service > 1.0 - 1e-6);
            }
            assert!(s.in_service <= cfg.capacity() + 1e-9);
        }
    }

    #[test]
    fn conservation_on_toy_example() {
        let cfg = cfg_one_charger();
        let grid = TimeGrid::over(0.0, 2.0, 0.005).unwrap();
        let (lam, del) = toy_rates(grid);
        let traj = integrate(&lam, &del, &cfg, FluidState::empty()).unwrap();

        let cum_lam = lam.cumulative();
        let cum_del = del.cumulative();
        let mut out_v = 0.0;
        let mut out_e = 0.0;
        for k in 0..traj.rates.len() {
            out_v += traj.rates[k].departure * grid.dt;
            out_e += traj.rates[k].supplied * grid.dt;
            let t = grid.time(k + 1);
            let s = &traj.states[k + 1];
            let vehicle_residual =
                (cum_lam.value_at(t) - out_v - (s.queue + s.in_service)).abs();
            let energy_residual =
                (cum_del.value_at(t) - out_e - (s.queue_energy + s.service_energy)).abs();
            assert!(
                vehicle_residual <= 5.0 * grid.dt * t.max(1.0),
                "vehicle residual {vehicle_residual} at t={t}"
            );
            assert!(
                energy_residual <= 5.0 * grid.dt * t.max(1.0) * 30.0,
                "energy residual {energy_residual} at t={t}"
            );
        }
    }

    #[test]
    fn waited_time_relation_holds() {
        let cfg = cfg_one_charger();
        let grid = TimeGrid::over(0.0, 2.0, 0.005).unwrap();
        let (lam, del) = toy_rates(grid);
        let traj = integrate(&lam, &del, &cfg, FluidState::empty()).unwrap();
        let cum = lam.cumulative();
        for (k, s) in traj.states.iter().enumerate() {
            if s.queue > 1e-9 {
                let t = grid.time(k);
                let mass = cum.between(t - s.waited, t);
                assert!(
                    (mass - s.queue).abs() <= 1e-8 * s.queue.max(1.0),
                    "waited-time residual at t={t}: {} vs {}",
                    mass,
                    s.queue
                );
            }
        }
    }

    #[test]
    fn constant_overload_wait_matches_closed_form() {
        // constant lambda = 10 veh/h, one charger that can serve 5 veh/h
        let cfg = cfg_one_charger();
        let grid = TimeGrid::over(0.0, 3.0, 0.002).unwrap();
        let lam = RateGrid::constant(grid, 10.0).unwrap();
        let del = lam.scale(30.0 / 1.0).unwrap(); // 30 kWh per vehicle
        let traj = integrate(&lam, &del, &cfg, FluidState::empty()).unwrap();
        // with q(t) growing and constant lambda, v(t) = q(t)/lambda at the
        // service-entry epochs; spot check near the end of the run
        let k = grid.index_at(2.5);
        let s = &traj.states[k];
        assert!(s.queue > 1.0);
        assert_abs_diff_eq!(s.waited, s.queue / 10.0, epsilon = 0.01);
    }

    #[test]
    fn postprocess_uncongested_is_nominal() {
        let cfg = StationConfig::new(5, 150.0, 1.0).unwrap();
        let grid = TimeGrid::over(0.0, 2.0, 0.01).unwrap();
        let lam = RateGrid::constant(grid, 0.5).unwrap();
        let del = lam.scale(20.0).unwrap();
        let traj = integrate(&lam, &del, &cfg, FluidState::empty()).unwrap();
        let fc = postprocess(&traj, &cfg);
        assert!(fc.wait.iter().all(|&v| v == 0.0));
        assert!(fc.power.iter().all(|&p| (p - 150.0).abs() < 1e-9));
    }

    #[test]
    fn postprocess_power_dips_under_grid_cap() {
        // gamma < 1: once occupancy exceeds gamma*c the per-vehicle power
        // drops below nominal, with no waiting event required
        let cfg = StationConfig::new(1, 150.0, 0.7).unwrap();
        let grid = TimeGrid::over(0.0, 2.0, 0.005).unwrap();
        let (lam, del) = toy_rates(grid);
        let traj = integrate(&lam, &del, &cfg, FluidState::empty()).unwrap();
        let fc = postprocess(&traj, &cfg);
        let min_power = fc.power.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(min_power < 150.0 - 1.0, "power never dipped: {min_power}");
        assert!(min_power >= 0.7 * 150.0 - 1e-9);
        // the dip begins while the queue is still empty
        let first_dip = fc.power.iter().position(|&p| p < 150.0 - 1.0).unwrap();
        assert_eq!(traj.states[first_dip].queue, 0.0);
    }

    #[test]
    fn refined_grid_converges_first_order() {
        let cfg = cfg_one_charger();
        // b(t) error against a dt/8 reference shrinks when dt halves
        let run = |f: usize| {
            let grid = TimeGrid::over(0.0, 2.0, 0.02 / f as f64).unwrap();
            let (lam, del) = toy_rates(grid);
            (grid, integrate(&lam, &del, &cfg, FluidState::empty()).unwrap())
        };
        let (g1, t1) = run(1);
        let (g2, t2) = run(2);
        let (_g8, t8) = run(8);
        let b_err = |g: &TimeGrid, t: &FluidTrajectory| -> f64 {
            let mut acc = 0.0;
            for (k, time) in g.times().enumerate() {
                let fine = &t8.states[(time / (0.02 / 8.0)).round() as usize];
                acc += (t.states[k].in_service - fine.in_service).abs();
            }
            acc / g.len as f64
        };
        let e1 = b_err(&g1, &t1);
        let e2 = b_err(&g2, &t2);
        assert!(e2 <= 0.75 * e1 + 1e-9, "no first-order decay: {e1} -> {e2}");
    }
}
