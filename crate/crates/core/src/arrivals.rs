//! Arrival modeling.
//!
//! Scheduled vehicles announce an expected arrival time and energy demand;
//! their uncertain arrival is spread over time as a Gaussian rate
//! contribution. Unscheduled vehicles are carried as historical rate
//! profiles. Both are summed into the aggregate arrival rate `lambda(t)`
//! (vehicles/h) and load rate `delta(t)` (kW) consumed by the fluid model
//! and the simulator.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{RateGrid, TimeGrid};

/// Period of the sinusoidal baseline arrival profile (hours).
pub const BASELINE_PERIOD_H: f64 = 24.0;

/// A vehicle that announced its charging intention in advance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduledVehicle {
    /// Announced arrival time (h).
    pub expected_arrival: f64,
    /// Announced energy demand (kWh).
    pub energy_demand: f64,
    /// Arrival-time standard deviation (h).
    pub sigma: f64,
}

impl ScheduledVehicle {
    pub fn new(expected_arrival: f64, energy_demand: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::invalid(format!("sigma must be > 0, got {sigma}")));
        }
        if !(energy_demand > 0.0) {
            return Err(Error::invalid(format!(
                "energy demand must be > 0, got {energy_demand}"
            )));
        }
        if expected_arrival < 0.0 {
            return Err(Error::invalid(format!(
                "expected arrival must be >= 0, got {expected_arrival}"
            )));
        }
        Ok(ScheduledVehicle { expected_arrival, energy_demand, sigma })
    }

    /// Gaussian arrival density at `t`: the vehicle's instantaneous expected
    /// arrival-rate contribution. Integrates to one over the real line.
    pub fn arrival_pdf(&self, t: f64) -> f64 {
        let z = (t - self.expected_arrival) / self.sigma;
        (-0.5 * z * z).exp() / (self.sigma * (2.0 * std::f64::consts::PI).sqrt())
    }
}

/// Linear growth of arrival-time uncertainty over the planning horizon:
/// `sigma(t) = epsilon + slope_k * t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaModel {
    pub epsilon: f64,
    pub slope_k: f64,
}

impl Default for SigmaModel {
    fn default() -> Self {
        SigmaModel { epsilon: 0.02, slope_k: 0.05 }
    }
}

impl SigmaModel {
    pub fn new(epsilon: f64, slope_k: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::invalid(format!("sigma epsilon must be > 0, got {epsilon}")));
        }
        if slope_k < 0.0 {
            return Err(Error::invalid(format!("sigma slope must be >= 0, got {slope_k}")));
        }
        Ok(SigmaModel { epsilon, slope_k })
    }

    pub fn sigma_at(&self, expected_arrival: f64) -> f64 {
        self.epsilon + self.slope_k * expected_arrival
    }
}

/// Uniform energy-demand distribution for sampled vehicles (kWh).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyDistribution {
    pub e_min: f64,
    pub e_max: f64,
}

impl Default for EnergyDistribution {
    fn default() -> Self {
        EnergyDistribution { e_min: 15.0, e_max: 60.0 }
    }
}

impl EnergyDistribution {
    pub fn new(e_min: f64, e_max: f64) -> Result<Self> {
        if !(e_min > 0.0) || e_max < e_min {
            return Err(Error::invalid(format!(
                "energy distribution needs 0 < e_min <= e_max, got [{e_min}, {e_max}]"
            )));
        }
        Ok(EnergyDistribution { e_min, e_max })
    }

    pub fn mean(&self) -> f64 {
        0.5 * (self.e_min + self.e_max)
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.e_max == self.e_min {
            return self.e_min;
        }
        rng.random_range(self.e_min..self.e_max)
    }
}

/// The key system parameters of a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    /// Average congestion level: mean demand over station saturation throughput.
    pub alpha: f64,
    /// Fraction of vehicles that announce their arrival in advance.
    pub beta: f64,
    /// Number of chargers.
    pub capacity_c: u32,
    /// Grid connection power over total installed charger power.
    pub gamma: f64,
    /// Scenario horizon (h).
    pub horizon: f64,
    /// Master seed for all scenario randomness.
    pub seed: u64,
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) {
            return Err(Error::invalid(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::invalid(format!("beta must be in [0, 1], got {}", self.beta)));
        }
        if self.capacity_c < 1 {
            return Err(Error::invalid("capacity_c must be >= 1".to_string()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::invalid(format!("gamma must be in (0, 1], got {}", self.gamma)));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::invalid(format!("horizon must be > 0, got {}", self.horizon)));
        }
        Ok(())
    }
}

/// Sum of per-vehicle Gaussian rate contributions sampled on `grid`:
/// the scheduled arrival rate (veh/h) and the scheduled load rate (kW).
pub fn scheduled_rates(
    vehicles: &[ScheduledVehicle],
    grid: TimeGrid,
) -> Result<(RateGrid, RateGrid)> {
    let mut lam = vec![0.0; grid.len];
    let mut del = vec![0.0; grid.len];
    for v in vehicles {
        // Contributions beyond 10 sigma are below f64 noise; restrict the
        // scan window accordingly to keep large scenarios cheap.
        let lo = grid.index_at(v.expected_arrival - 10.0 * v.sigma);
        let hi_t = v.expected_arrival + 10.0 * v.sigma;
        let hi = if hi_t >= grid.end() { grid.len - 1 } else { grid.index_at(hi_t) + 1 };
        for k in lo..=hi.min(grid.len - 1) {
            let k_n = v.arrival_pdf(grid.time(k));
            lam[k] += k_n;
            del[k] += v.energy_demand * k_n;
        }
    }
    Ok((RateGrid::new(grid, lam)?, RateGrid::new(grid, del)?))
}

/// Pointwise aggregation of scheduled and unscheduled rate pairs into the
/// total arrival rate `lambda` and load rate `delta`.
pub fn aggregate_rates(
    scheduled_lambda: &RateGrid,
    scheduled_delta: &RateGrid,
    unscheduled_lambda: &RateGrid,
    unscheduled_delta: &RateGrid,
) -> Result<(RateGrid, RateGrid)> {
    Ok((
        scheduled_lambda.add(unscheduled_lambda)?,
        scheduled_delta.add(unscheduled_delta)?,
    ))
}

/// Station saturation throughput in vehicles per hour: the rate at which
/// `capacity_c` chargers at `charger_power` kW turn over vehicles of mean
/// demand `mean_energy` kWh.
pub fn max_throughput(capacity_c: u32, charger_power: f64, mean_energy: f64) -> f64 {
    capacity_c as f64 * charger_power / mean_energy
}

/// Unit-mean periodic baseline profile: `1 + sin(2*pi*(t + phase)/T)`,
/// nonnegative with time average one over a full period.
pub fn unit_baseline(t: f64, phase: f64) -> f64 {
    (1.0 + (2.0 * std::f64::consts::PI * (t + phase) / BASELINE_PERIOD_H).sin()).max(0.0)
}

/// Total arrival-rate profile `f(t) = R * alpha * f_sin(t)` on `grid`,
/// where `R` is the station's saturation throughput.
pub fn baseline_rate(
    grid: TimeGrid,
    alpha: f64,
    max_throughput_r: f64,
    phase: f64,
) -> Result<RateGrid> {
    if alpha < 0.0 {
        return Err(Error::invalid(format!("alpha must be >= 0, got {alpha}")));
    }
    RateGrid::from_fn(grid, |t| max_throughput_r * alpha * unit_baseline(t, phase))
}

/// Splits a total arrival profile into an unscheduled remainder and a set of
/// sampled scheduled vehicles.
///
/// Scheduled arrival times are drawn from a nonhomogeneous Poisson process
/// with intensity `beta * f` by thinning; each sampled vehicle receives an
/// energy demand from `energy_dist` and a sigma from `sigma_model`. The
/// unscheduled remainder keeps rate `(1 - beta) * f` with load rate
/// `(1 - beta) * f * mean_energy` so that aggregate load matches aggregate
/// count in expectation.
pub fn split_and_sample(
    f: &RateGrid,
    beta: f64,
    energy_dist: EnergyDistribution,
    sigma_model: SigmaModel,
    rng: &mut impl Rng,
) -> Result<(Vec<ScheduledVehicle>, RateGrid, RateGrid)> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::invalid(format!("beta must be in [0, 1], got {beta}")));
    }
    let unscheduled_lambda = f.scale(1.0 - beta)?;
    let unscheduled_delta = unscheduled_lambda.scale(energy_dist.mean())?;

    let times = sample_poisson_times(f, beta, rng);
    let vehicles = times
        .into_iter()
        .map(|t| {
            ScheduledVehicle::new(t, energy_dist.sample(rng), sigma_model.sigma_at(t))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok((vehicles, unscheduled_lambda, unscheduled_delta))
}

/// Nonhomogeneous Poisson arrival times over the grid span with intensity
/// `scale * f(t)`, by thinning a homogeneous majorant process.
pub fn sample_poisson_times(f: &RateGrid, scale: f64, rng: &mut impl Rng) -> Vec<f64> {
    let mut times = Vec::new();
    let lambda_max = f.max_value() * scale;
    if lambda_max <= 0.0 {
        return times;
    }
    let (t0, t_end) = (f.grid().t0, f.grid().end());
    let mut t = t0;
    loop {
        let u: f64 = rng.random();
        t += -u.ln() / lambda_max;
        if t >= t_end {
            break;
        }
        let accept: f64 = rng.random();
        if accept * lambda_max <= scale * f.value_at(t) {
            times.push(t);
        }
    }
    times
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use crate::rng::stream;

    // covers every density fully, including left tails of early vehicles
    fn wide_grid() -> TimeGrid {
        TimeGrid::new(-1.0, 0.002, 1501).unwrap() // [-1, 2] h
    }

    #[test]
    fn pdf_peak_and_normalization() {
        let v = ScheduledVehicle::new(0.1, 30.0, 0.05).unwrap();
        let peak = v.arrival_pdf(0.1);
        assert_abs_diff_eq!(
            peak,
            1.0 / (0.05 * (2.0 * std::f64::consts::PI).sqrt()),
            epsilon = 1e-12
        );
        // numeric quadrature over +-10 sigma
        let n = 40_000;
        let (a, b) = (0.1 - 0.5, 0.1 + 0.5);
        let h = (b - a) / n as f64;
        let mut integral = 0.5 * (v.arrival_pdf(a) + v.arrival_pdf(b));
        for i in 1..n {
            integral += v.arrival_pdf(a + i as f64 * h);
        }
        integral *= h;
        assert_abs_diff_eq!(integral, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn later_vehicles_have_wider_flatter_peaks() {
        let sm = SigmaModel::new(0.02, 0.05).unwrap();
        let early = ScheduledVehicle::new(0.1, 30.0, sm.sigma_at(0.1)).unwrap();
        let late = ScheduledVehicle::new(0.7, 15.0, sm.sigma_at(0.7)).unwrap();
        assert!(late.sigma > early.sigma);
        assert!(late.arrival_pdf(0.7) < early.arrival_pdf(0.1));
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(ScheduledVehicle::new(0.1, 30.0, 0.0).is_err());
        assert!(ScheduledVehicle::new(0.1, -1.0, 0.1).is_err());
        assert!(ScheduledVehicle::new(-0.1, 30.0, 0.1).is_err());
        assert!(SigmaModel::new(0.0, 0.1).is_err());
        assert!(EnergyDistribution::new(0.0, 10.0).is_err());
    }

    #[test]
    fn scheduled_rates_single_vehicle() {
        let g = wide_grid();
        let v = ScheduledVehicle::new(0.1, 30.0, 0.025).unwrap();
        let (lam, del) = scheduled_rates(&[v], g).unwrap();
        assert_abs_diff_eq!(lam.integral(), 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(del.integral(), 30.0, epsilon = 3e-5);
        // peak at the announced arrival
        let peak_t = g
            .times()
            .zip(lam.values())
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_abs_diff_eq!(peak_t, 0.1, epsilon = 0.003);
    }

    #[test]
    fn scheduled_rates_empty_and_trio() {
        let g = wide_grid();
        let (lam, del) = scheduled_rates(&[], g).unwrap();
        assert_eq!(lam.integral(), 0.0);
        assert_eq!(del.integral(), 0.0);

        let sm = SigmaModel::default();
        let vehicles = [
            ScheduledVehicle::new(0.1, 30.0, sm.sigma_at(0.1)).unwrap(),
            ScheduledVehicle::new(0.12, 20.0, sm.sigma_at(0.12)).unwrap(),
            ScheduledVehicle::new(0.7, 15.0, sm.sigma_at(0.7)).unwrap(),
        ];
        let (lam, del) = scheduled_rates(&vehicles, g).unwrap();
        assert_abs_diff_eq!(lam.integral(), 3.0, epsilon = 1e-6);
        assert_abs_diff_eq!(del.integral(), 65.0, epsilon = 1e-4);
    }

    #[test]
    fn aggregate_is_pointwise_sum() {
        let g = wide_grid();
        let lu = RateGrid::constant(g, 1.0).unwrap();
        let du = RateGrid::constant(g, 30.0).unwrap();
        let zero = RateGrid::zeros(g);
        // zero unscheduled traffic: aggregate equals the scheduled side
        let (lam, del) = aggregate_rates(&lu, &du, &zero, &zero).unwrap();
        assert_eq!(lam.values(), lu.values());
        assert_eq!(del.values(), du.values());
        // aggregating zero twice is the identity
        let (lam2, del2) = aggregate_rates(&lam, &del, &zero, &zero).unwrap();
        assert_eq!(lam2.values(), lam.values());
        assert_eq!(del2.values(), del.values());
    }

    #[test]
    fn baseline_rate_scaling() {
        let g = TimeGrid::over(0.0, BASELINE_PERIOD_H, 0.01).unwrap();
        let r = max_throughput(5, 150.0, 40.0);
        assert_abs_diff_eq!(r, 18.75, epsilon = 1e-12);

        let f0 = baseline_rate(g, 0.0, r, 0.0).unwrap();
        assert_eq!(f0.integral(), 0.0);

        let f = baseline_rate(g, 0.4, r, 3.7).unwrap();
        // unit-mean baseline: time average over a full period is R * alpha
        assert_abs_diff_eq!(f.mean(), 0.4 * r, epsilon = 1e-6);
    }

    #[test]
    fn split_beta_extremes() {
        let g = TimeGrid::over(0.0, 12.0, 0.01).unwrap();
        let f = baseline_rate(g, 0.5, 10.0, 0.0).unwrap();
        let dist = EnergyDistribution::default();
        let sm = SigmaModel::default();

        let mut rng = stream(1, &[10]);
        let (veh, lt, _) = split_and_sample(&f, 0.0, dist, sm, &mut rng).unwrap();
        assert!(veh.is_empty());
        assert_eq!(lt.values(), f.values());

        let mut rng = stream(1, &[11]);
        let (veh, lt, dt) = split_and_sample(&f, 1.0, dist, sm, &mut rng).unwrap();
        assert!(!veh.is_empty());
        assert!(lt.values().iter().all(|&v| v == 0.0));
        assert!(dt.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn thinning_matches_expected_count() {
        let g = TimeGrid::over(0.0, 12.0, 0.01).unwrap();
        let f = baseline_rate(g, 0.8, 12.0, 5.0).unwrap();
        let beta = 0.6;
        let expected = f.integral() * beta;

        let runs = 1000;
        let mut total = 0usize;
        let mut sum_sq = 0.0f64;
        for i in 0..runs {
            let mut rng = stream(7, &[i]);
            let n = sample_poisson_times(&f, beta, &mut rng).len();
            total += n;
            sum_sq += (n as f64 - expected).powi(2);
        }
        let mean = total as f64 / runs as f64;
        // Poisson: variance equals the mean; allow 3 standard errors
        let se = (expected / runs as f64).sqrt();
        assert!(
            (mean - expected).abs() <= 3.0 * se,
            "mean {mean} vs expected {expected} (se {se})"
        );
        // variance sanity: within 25% of the Poisson variance
        let var = sum_sq / runs as f64;
        assert!((var / expected - 1.0).abs() < 0.25, "var {var} vs {expected}");
    }

    #[test]
    fn thinning_histogram_tracks_intensity() {
        // chi-square goodness of fit of pooled arrivals against beta*f
        let g = TimeGrid::over(0.0, 12.0, 0.01).unwrap();
        let f = baseline_rate(g, 1.0, 10.0, 2.0).unwrap();
        let beta = 0.5;
        let bins = 12usize;
        let bin_w = 1.0;
        let mut counts = vec![0.0f64; bins];
        let runs = 400;
        for i in 0..runs {
            let mut rng = stream(99, &[i]);
            for t in sample_poisson_times(&f, beta, &mut rng) {
                counts[((t / bin_w) as usize).min(bins - 1)] += 1.0;
            }
        }
        let cum = f.cumulative();
        let mut chi2 = 0.0;
        for (b, &obs) in counts.iter().enumerate() {
            let expected = beta * cum.between(b as f64 * bin_w, (b + 1) as f64 * bin_w) * runs as f64;
            if expected > 5.0 {
                chi2 += (obs - expected).powi(2) / expected;
            }
        }
        // 11 dof, alpha = 0.001 critical value
        assert!(chi2 < 31.26, "chi2 {chi2} rejects thinning sampler");
    }

    #[test]
    fn scenario_params_validation() {
        let p = ScenarioParams {
            alpha: 0.9,
            beta: 0.5,
            capacity_c: 5,
            gamma: 1.0,
            horizon: 12.0,
            seed: 1,
        };
        assert!(p.validate().is_ok());
        assert!(ScenarioParams { beta: 1.2, ..p }.validate().is_err());
        assert!(ScenarioParams { gamma: 0.0, ..p }.validate().is_err());
        assert!(ScenarioParams { capacity_c: 0, ..p }.validate().is_err());
    }
}
