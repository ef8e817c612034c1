//! Input-file schemas: station arrivals and corridor descriptions.

use std::io::BufReader;
use std::path::Path;

use chargecast::arrivals::{baseline_rate, max_throughput, ScheduledVehicle};
use chargecast::evsp::{Corridor, CorridorStation, Segment, VehicleSpec};
use chargecast::fluid::AvailabilityForecast;
use chargecast::grid::{RateGrid, TimeGrid};
use chargecast::sim::StationEnvironment;
use chargecast::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduledEntry {
    pub expected_arrival_h: f64,
    pub energy_kwh: f64,
    /// Defaults to the config sigma model evaluated at the arrival time.
    #[serde(default)]
    pub sigma_h: Option<f64>,
}

/// One station's arrival description.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ArrivalsFile {
    pub scheduled: Vec<ScheduledEntry>,
    /// Adds the config's unscheduled baseline rate `(1 - beta) * f`.
    pub unscheduled_baseline: bool,
    /// Phase offset of the baseline profile (h).
    pub baseline_phase_h: f64,
}

impl ArrivalsFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }

    pub fn scheduled_vehicles(&self, config: &RunConfig) -> Result<Vec<ScheduledVehicle>> {
        let sigma_model = config.sigma_model()?;
        self.scheduled
            .iter()
            .map(|e| {
                let sigma = e.sigma_h.unwrap_or_else(|| sigma_model.sigma_at(e.expected_arrival_h));
                ScheduledVehicle::new(e.expected_arrival_h, e.energy_kwh, sigma)
            })
            .collect()
    }

    /// Unscheduled arrival rate on `grid`: the scaled baseline when enabled,
    /// zero otherwise.
    pub fn unscheduled_lambda(&self, config: &RunConfig, grid: TimeGrid) -> Result<RateGrid> {
        if !self.unscheduled_baseline {
            return Ok(RateGrid::zeros(grid));
        }
        let throughput = max_throughput(
            config.capacity_c,
            config.charger_power_kw,
            config.energy_dist()?.mean(),
        );
        baseline_rate(grid, config.alpha, throughput, self.baseline_phase_h)?
            .scale(1.0 - config.beta)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorridorStationFile {
    pub overhead_h: f64,
    /// Availability table (t_h, wait_h, power_kw), relative to this file.
    pub forecast_csv: String,
    /// Station-side arrivals for plan evaluation, relative to this file.
    #[serde(default)]
    pub arrivals_file: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorridorVehicleFile {
    pub capacity_kwh: f64,
    pub consumption_kwh_per_km: f64,
    pub soc_floor: f64,
    pub initial_kwh: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentFile {
    pub length_km: f64,
    pub speed_kmh: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorridorFile {
    pub stations: Vec<CorridorStationFile>,
    pub segments: Vec<SegmentFile>,
    pub vehicle: CorridorVehicleFile,
}

impl CorridorFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }

    pub fn vehicle_spec(&self) -> VehicleSpec {
        VehicleSpec {
            capacity_kwh: self.vehicle.capacity_kwh,
            consumption_kwh_per_km: self.vehicle.consumption_kwh_per_km,
            soc_floor: self.vehicle.soc_floor,
            initial_kwh: self.vehicle.initial_kwh,
        }
    }

    pub fn segments(&self) -> Vec<Segment> {
        self.segments
            .iter()
            .map(|s| Segment { length_km: s.length_km, speed_kmh: s.speed_kmh })
            .collect()
    }

    /// Loads the per-station forecast tables, resolving paths relative to
    /// the corridor file's directory.
    pub fn corridor(&self, base: &Path) -> Result<Corridor> {
        let dir = base.parent().unwrap_or_else(|| Path::new("."));
        let stations = self
            .stations
            .iter()
            .map(|st| {
                let path = dir.join(&st.forecast_csv);
                let file = std::fs::File::open(&path)
                    .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
                let forecast = AvailabilityForecast::read_csv(BufReader::new(file))
                    .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
                Ok(CorridorStation { overhead_h: st.overhead_h, forecast })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Corridor { stations, segments: self.segments() })
    }

    /// Builds the station-side evaluation environments; stations without an
    /// arrivals file get an empty background.
    pub fn environments(
        &self,
        base: &Path,
        config: &RunConfig,
    ) -> Result<Vec<StationEnvironment>> {
        let dir = base.parent().unwrap_or_else(|| Path::new("."));
        let grid = TimeGrid::over(0.0, config.horizon_h, config.dt_h)?;
        let station_config = chargecast::fluid::StationConfig::new(
            config.capacity_c,
            config.charger_power_kw,
            config.gamma,
        )?;
        self.stations
            .iter()
            .map(|st| {
                let (scheduled, lambda) = match &st.arrivals_file {
                    Some(rel) => {
                        let arrivals = ArrivalsFile::load(&dir.join(rel))?;
                        (
                            arrivals.scheduled_vehicles(config)?,
                            arrivals.unscheduled_lambda(config, grid)?,
                        )
                    }
                    None => (Vec::new(), RateGrid::zeros(grid)),
                };
                Ok(StationEnvironment {
                    config: station_config,
                    scheduled,
                    unscheduled_lambda: lambda,
                    energy_dist: config.energy_dist()?,
                })
            })
            .collect()
    }
}
