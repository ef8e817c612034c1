//! Run configuration: one JSON document, overridable from the command line.

use std::path::Path;

use chargecast::arrivals::{EnergyDistribution, ScenarioParams, SigmaModel};
use chargecast::harness::{HarnessConfig, SweepAxis, SweepSpec};
use chargecast::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleConfig {
    pub capacity_kwh: f64,
    pub consumption_kwh_per_km: f64,
    pub soc_floor: f64,
}

impl Default for VehicleConfig {
    fn default() -> Self {
        VehicleConfig { capacity_kwh: 80.0, consumption_kwh_per_km: 0.2, soc_floor: 0.1 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorridorConfig {
    pub stations: usize,
    pub segment_km_min: f64,
    pub segment_km_max: f64,
    pub speed_kmh: f64,
    pub overhead_min_h: f64,
    pub overhead_max_h: f64,
    pub initial_soc_min: f64,
    pub initial_soc_max: f64,
}

impl Default for CorridorConfig {
    fn default() -> Self {
        CorridorConfig {
            stations: 5,
            segment_km_min: 40.0,
            segment_km_max: 120.0,
            speed_kmh: 100.0,
            overhead_min_h: 0.05,
            overhead_max_h: 0.15,
            initial_soc_min: 0.3,
            initial_soc_max: 0.9,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub capacities: Vec<u32>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            axis: SweepAxis::Alpha,
            values: vec![0.1, 0.5, 0.7, 0.9, 1.0, 1.1],
            capacities: vec![2, 5, 10, 50],
        }
    }
}

/// Everything a run needs; every field has a default, unknown keys are
/// rejected. Times in hours, energies in kWh, power in kW.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub alpha: f64,
    pub beta: f64,
    pub capacity_c: u32,
    pub gamma: f64,
    pub horizon_h: f64,
    /// Fluid integrator step (h).
    pub dt_h: f64,
    pub seed: u64,
    pub energy_min_kwh: f64,
    pub energy_max_kwh: f64,
    pub sigma_eps_h: f64,
    pub sigma_slope: f64,
    pub charger_power_kw: f64,
    /// Scheduling slot width (h).
    pub evsp_dt_h: f64,
    pub scenarios_per_cell: usize,
    pub eval_runs: usize,
    pub sim_forecast_runs: usize,
    pub degenerate_cap: f64,
    pub vehicle: VehicleConfig,
    pub corridor: CorridorConfig,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            alpha: 0.9,
            beta: 0.5,
            capacity_c: 5,
            gamma: 1.0,
            horizon_h: 12.0,
            dt_h: 0.005,
            seed: 42,
            energy_min_kwh: 15.0,
            energy_max_kwh: 60.0,
            sigma_eps_h: 0.02,
            sigma_slope: 0.05,
            charger_power_kw: 150.0,
            evsp_dt_h: 0.1,
            scenarios_per_cell: 200,
            eval_runs: 50,
            sim_forecast_runs: 30,
            degenerate_cap: 0.05,
            vehicle: VehicleConfig::default(),
            corridor: CorridorConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: &[String], seed: Option<u64>) -> Result<Self> {
        let mut value: serde_json::Value = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                serde_json::from_str(&text)
                    .map_err(|e| Error::Parse(format!("{}: {e}", p.display())))?
            }
            None => serde_json::json!({}),
        };
        for entry in overrides {
            apply_override(&mut value, entry)?;
        }
        let mut config: RunConfig = serde_json::from_value(value)
            .map_err(|e| Error::Parse(format!("config: {e}")))?;
        if let Some(s) = seed {
            config.seed = s;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario_params().validate()?;
        self.energy_dist()?;
        self.sigma_model()?;
        if self.corridor.stations < 2 {
            return Err(Error::Config("corridor needs at least two stations".to_string()));
        }
        Ok(())
    }

    pub fn scenario_params(&self) -> ScenarioParams {
        ScenarioParams {
            alpha: self.alpha,
            beta: self.beta,
            capacity_c: self.capacity_c,
            gamma: self.gamma,
            horizon: self.horizon_h,
            seed: self.seed,
        }
    }

    pub fn energy_dist(&self) -> Result<EnergyDistribution> {
        EnergyDistribution::new(self.energy_min_kwh, self.energy_max_kwh)
    }

    pub fn sigma_model(&self) -> Result<SigmaModel> {
        SigmaModel::new(self.sigma_eps_h, self.sigma_slope)
    }

    pub fn harness_config(&self) -> Result<HarnessConfig> {
        Ok(HarnessConfig {
            stations: self.corridor.stations,
            scenarios_per_cell: self.scenarios_per_cell,
            eval_runs: self.eval_runs,
            sim_forecast_runs: self.sim_forecast_runs,
            degenerate_cap: self.degenerate_cap,
            charger_power_kw: self.charger_power_kw,
            energy_dist: self.energy_dist()?,
            sigma_model: self.sigma_model()?,
            vehicle_capacity_kwh: self.vehicle.capacity_kwh,
            vehicle_consumption_kwh_per_km: self.vehicle.consumption_kwh_per_km,
            vehicle_soc_floor: self.vehicle.soc_floor,
            initial_soc_range: (self.corridor.initial_soc_min, self.corridor.initial_soc_max),
            segment_km_range: (self.corridor.segment_km_min, self.corridor.segment_km_max),
            segment_speed_kmh: self.corridor.speed_kmh,
            overhead_range_h: (self.corridor.overhead_min_h, self.corridor.overhead_max_h),
            fluid_dt_h: self.dt_h,
            evsp_dt_h: self.evsp_dt_h,
        })
    }

    pub fn sweep_spec(&self) -> SweepSpec {
        SweepSpec {
            axis: self.sweep.axis,
            values: self.sweep.values.clone(),
            capacities: self.sweep.capacities.clone(),
        }
    }
}

/// Applies one `dotted.path=value` override onto the raw JSON document.
/// The value is parsed as JSON when possible, otherwise kept as a string.
fn apply_override(root: &mut serde_json::Value, entry: &str) -> Result<()> {
    let (path, raw) = entry
        .split_once('=')
        .ok_or_else(|| Error::Parse(format!("--set needs key=value, got '{entry}'")))?;
    let value: serde_json::Value = serde_json::from_str(raw)
        .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let mut cursor = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if !cursor.is_object() {
            return Err(Error::Parse(format!("--set path '{path}' crosses a non-object")));
        }
        let map = cursor.as_object_mut().unwrap();
        if i + 1 == parts.len() {
            map.insert((*part).to_string(), value);
            return Ok(());
        }
        cursor = map
            .entry((*part).to_string())
            .or_insert_with(|| serde_json::json!({}));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn overrides_apply_and_unknown_keys_reject() {
        let cfg = RunConfig::load(
            None,
            &["alpha=1.1".to_string(), "vehicle.capacity_kwh=60".to_string()],
            Some(7),
        )
        .unwrap();
        assert_eq!(cfg.alpha, 1.1);
        assert_eq!(cfg.vehicle.capacity_kwh, 60.0);
        assert_eq!(cfg.seed, 7);

        let err = RunConfig::load(None, &["no_such_key=1".to_string()], None).unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
    }
}
