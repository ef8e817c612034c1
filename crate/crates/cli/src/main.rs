//! Command-line driver.
//!
//! Every subcommand is a pure function of (config file, input files, seed)
//! to output bytes; re-running with identical inputs reproduces outputs
//! byte for byte, regardless of `--threads`.

mod config;
mod files;

use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chargecast::arrivals::{aggregate_rates, scheduled_rates};
use chargecast::evsp::{build_problem, export_lp, solve, validate_plan, SolveOptions};
use chargecast::fluid::{
    integrate, postprocess, write_trajectory_csv, FluidState, StationConfig,
};
use chargecast::grid::TimeGrid;
use chargecast::harness::{sweep, StrategyKind, SweepReport};
use chargecast::sim::{evaluate_plan, forecast_deterministic, simulate, SimOptions};
use chargecast::stats::{mean, std_dev};
use chargecast::{Error, RateGrid, Result};
use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use files::{ArrivalsFile, CorridorFile};

#[derive(Parser)]
#[command(name = "chargecast", about = "Charging-station availability forecasting and corridor scheduling", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonOpts {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads for scenario parallelism (0 = all cores).
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Config overrides as dotted.path=value; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Fluid-model availability forecast for one station.
    Forecast {
        #[command(flatten)]
        common: CommonOpts,
        /// Station arrivals JSON.
        #[arg(long)]
        arrivals: PathBuf,
    },
    /// Discrete-event availability forecast for one station.
    Simulate {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        arrivals: PathBuf,
    },
    /// Solve the corridor charging-scheduling problem.
    Plan {
        #[command(flatten)]
        common: CommonOpts,
        /// Corridor JSON with per-station forecast tables.
        #[arg(long)]
        corridor: PathBuf,
        /// Also export the MIP in LP format.
        #[arg(long)]
        lp: bool,
    },
    /// Monte Carlo evaluation of a stored plan under stochastic arrivals.
    Evaluate {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        corridor: PathBuf,
        /// Plan JSON produced by `plan`.
        #[arg(long)]
        plan: PathBuf,
        /// Evaluation runs.
        #[arg(long, default_value_t = 50)]
        runs: usize,
    },
    /// Full scenario sweep: three strategies, solved and evaluated per cell.
    Sweep {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Recompute summary tables from a sweep's per-scenario CSV.
    Report {
        #[command(flatten)]
        common: CommonOpts,
        /// Directory containing per_scenario.csv.
        #[arg(long)]
        results: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse(_) | Error::Config(_) | Error::InvalidParameter(_) | Error::GridMismatch(_) => 2,
        Error::Infeasible(_) => 3,
        Error::Internal(_) => 4,
        Error::Io(_) => 1,
    }
}

fn setup(common: &CommonOpts) -> Result<RunConfig> {
    if common.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(common.threads)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    std::fs::create_dir_all(&common.out)?;
    RunConfig::load(common.config.as_deref(), &common.set, common.seed)
}

fn create(path: &Path) -> Result<BufWriter<std::fs::File>> {
    Ok(BufWriter::new(std::fs::File::create(path)?))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Forecast { common, arrivals } => cmd_forecast(&common, &arrivals),
        Command::Simulate { common, arrivals } => cmd_simulate(&common, &arrivals),
        Command::Plan { common, corridor, lp } => cmd_plan(&common, &corridor, lp),
        Command::Evaluate { common, corridor, plan, runs } => {
            cmd_evaluate(&common, &corridor, &plan, runs)
        }
        Command::Sweep { common } => cmd_sweep(&common),
        Command::Report { common, results } => cmd_report(&common, &results),
    }
}

/// Station arrival curves from an arrivals file: aggregate rate and load.
fn station_rates(
    config: &RunConfig,
    arrivals: &ArrivalsFile,
) -> Result<(RateGrid, RateGrid)> {
    let grid = TimeGrid::over(0.0, config.horizon_h, config.dt_h)?;
    let vehicles = arrivals.scheduled_vehicles(config)?;
    let (lam_s, del_s) = scheduled_rates(&vehicles, grid)?;
    let lam_u = arrivals.unscheduled_lambda(config, grid)?;
    let del_u = lam_u.scale(config.energy_dist()?.mean())?;
    aggregate_rates(&lam_s, &del_s, &lam_u, &del_u)
}

fn cmd_forecast(common: &CommonOpts, arrivals_path: &Path) -> Result<()> {
    let config = setup(common)?;
    let arrivals = ArrivalsFile::load(arrivals_path)?;
    let (lam, del) = station_rates(&config, &arrivals)?;
    let station = StationConfig::new(config.capacity_c, config.charger_power_kw, config.gamma)?;
    let traj = integrate(&lam, &del, &station, FluidState::empty())?;
    let forecast = postprocess(&traj, &station);

    forecast.write_csv(create(&common.out.join("availability.csv"))?)?;
    write_trajectory_csv(&traj, &forecast, create(&common.out.join("trajectory.csv"))?)?;
    lam.write_csv(create(&common.out.join("lambda.csv"))?, "rate_veh_per_h")?;
    del.write_csv(create(&common.out.join("delta.csv"))?, "load_kw")?;
    println!("wrote availability.csv, trajectory.csv, lambda.csv, delta.csv to {}", common.out.display());
    Ok(())
}

fn cmd_simulate(common: &CommonOpts, arrivals_path: &Path) -> Result<()> {
    let config = setup(common)?;
    let arrivals = ArrivalsFile::load(arrivals_path)?;
    let grid = TimeGrid::over(0.0, config.horizon_h, config.evsp_dt_h)?;
    let station = StationConfig::new(config.capacity_c, config.charger_power_kw, config.gamma)?;
    let vehicles = arrivals.scheduled_vehicles(&config)?;
    let lam_u = arrivals.unscheduled_lambda(&config, TimeGrid::over(0.0, config.horizon_h, config.dt_h)?)?;

    let mut rng = chargecast::rng::stream(config.seed, &[chargecast::rng::tag::SIM_FORECAST]);
    let forecast = forecast_deterministic(
        &vehicles,
        &lam_u,
        config.energy_dist()?,
        &station,
        grid,
        config.sim_forecast_runs,
        &mut rng,
    )?;
    forecast.write_csv(create(&common.out.join("availability.csv"))?)?;

    // event log of the deterministic scheduled-only run
    let exact: Vec<chargecast::sim::DiscreteArrival> = vehicles
        .iter()
        .map(|v| {
            chargecast::sim::DiscreteArrival::new(
                v.expected_arrival,
                v.energy_demand,
                chargecast::sim::ArrivalKind::Scheduled,
            )
        })
        .collect::<Result<_>>()?;
    let outcome = simulate(&exact, &station, &SimOptions { probe_grid: None, log_events: true })?;
    outcome.write_event_csv(create(&common.out.join("events.csv"))?)?;
    println!("wrote availability.csv, events.csv to {}", common.out.display());
    Ok(())
}

fn cmd_plan(common: &CommonOpts, corridor_path: &Path, lp: bool) -> Result<()> {
    let config = setup(common)?;
    let file = CorridorFile::load(corridor_path)?;
    let corridor = file.corridor(corridor_path)?;
    let problem = build_problem(&corridor, &file.vehicle_spec(), config.evsp_dt_h, config.horizon_h)?;
    let plan = solve(&problem, &SolveOptions::default())?;
    let report = validate_plan(&plan, &problem);
    if !report.is_ok() {
        return Err(Error::internal(format!(
            "solver plan failed validation: {:?}",
            report.violations
        )));
    }

    let json = serde_json::to_string_pretty(&plan)
        .map_err(|e| Error::internal(format!("serialize plan: {e}")))?;
    std::fs::write(common.out.join("plan.json"), json)?;
    plan.write_summary_csv(create(&common.out.join("plan_summary.csv"))?)?;
    if lp {
        std::fs::write(common.out.join("problem.lp"), export_lp(&problem))?;
    }
    println!("tau = {:.6} h; wrote plan.json, plan_summary.csv to {}", plan.objective_tau, common.out.display());
    Ok(())
}

fn cmd_evaluate(common: &CommonOpts, corridor_path: &Path, plan_path: &Path, runs: usize) -> Result<()> {
    let config = setup(common)?;
    let file = CorridorFile::load(corridor_path)?;
    let plan: chargecast::evsp::ChargingPlan = serde_json::from_str(
        &std::fs::read_to_string(plan_path)?,
    )
    .map_err(|e| Error::Parse(format!("{}: {e}", plan_path.display())))?;
    let environments = file.environments(corridor_path, &config)?;
    let overheads: Vec<f64> = file.stations.iter().map(|s| s.overhead_h).collect();
    let taus = evaluate_plan(&plan, &file.segments(), &overheads, &environments, config.seed, runs)?;

    let mut w = create(&common.out.join("realized.csv"))?;
    writeln!(w, "run,realized_tau_h")?;
    for (i, tau) in taus.iter().enumerate() {
        writeln!(w, "{i},{tau:.6}")?;
    }
    w.flush()?;
    println!(
        "planned tau = {:.6} h, realized mean = {:.6} h over {} runs; wrote realized.csv to {}",
        plan.objective_tau,
        mean(&taus),
        taus.len(),
        common.out.display()
    );
    Ok(())
}

#[derive(serde::Serialize)]
struct Manifest<'a> {
    config: &'a RunConfig,
    command: &'a str,
    threads_requested: usize,
}

fn cmd_sweep(common: &CommonOpts) -> Result<()> {
    let config = setup(common)?;
    let report = sweep(&config.sweep_spec(), &config.scenario_params(), &config.harness_config()?)?;

    report.write_per_scenario_csv(create(&common.out.join("per_scenario.csv"))?)?;
    report.write_summary_csv(create(&common.out.join("summary.csv"))?)?;
    report.write_improvement_csv(create(&common.out.join("improvements.csv"))?)?;
    let manifest = Manifest { config: &config, command: "sweep", threads_requested: common.threads };
    std::fs::write(
        common.out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::internal(format!("serialize manifest: {e}")))?,
    )?;
    if !report.degenerate.is_empty() {
        let mut w = create(&common.out.join("degenerate.log"))?;
        for d in &report.degenerate {
            writeln!(w, "scenario {}: {}", d.scenario_id, d.reason)?;
        }
        w.flush()?;
    }
    print_summary(&report);
    println!("wrote per_scenario.csv, summary.csv, improvements.csv, manifest.json to {}", common.out.display());
    Ok(())
}

fn print_summary(report: &SweepReport) {
    for cell in &report.cells {
        println!(
            "c={} {}={:.3}: fluid {:.2}% sim {:.2}% naive {:.2}% | improvement vs naive {:.2}% vs sim {:.2}%",
            cell.capacity_c,
            report.axis.name(),
            cell.axis_value,
            cell.mean_downtime_pct[StrategyKind::Fluid.index()],
            cell.mean_downtime_pct[StrategyKind::Simulation.index()],
            cell.mean_downtime_pct[StrategyKind::Naive.index()],
            cell.improvement_vs_naive_pct,
            cell.improvement_vs_sim_pct,
        );
    }
}

fn cmd_report(common: &CommonOpts, results: &Path) -> Result<()> {
    let _ = setup(common)?;
    let path = results.join("per_scenario.csv");
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;

    // columns: capacity_c, axis_value, scenario_id, free_flow_h, strategy,
    // planned_tau_h, realized_mean_h, realized_std_h, downtime_pct
    let mut header = None;
    let mut rows: Vec<(u32, f64, String, f64)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 {
            header = Some(line.to_string());
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(Error::Parse(format!("{}: line {}: expected 9 fields", path.display(), lineno + 1)));
        }
        let parse = |s: &str, what: &str| -> Result<f64> {
            s.parse().map_err(|e| Error::Parse(format!("line {}: {what}: {e}", lineno + 1)))
        };
        rows.push((
            f[0].parse().map_err(|e| Error::Parse(format!("line {}: capacity: {e}", lineno + 1)))?,
            parse(f[1], "axis value")?,
            f[4].to_string(),
            parse(f[8], "downtime pct")?,
        ));
    }
    let axis_name = header
        .as_deref()
        .and_then(|h| h.split(',').nth(1))
        .unwrap_or("axis_value")
        .trim_end_matches("_value")
        .to_string();

    let mut cells: Vec<(u32, f64)> = rows.iter().map(|r| (r.0, r.1)).collect();
    cells.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.partial_cmp(&b.1).unwrap()));
    cells.dedup();

    let mut w = create(&common.out.join("report_summary.csv"))?;
    writeln!(w, "capacity_c,{axis_name}_value,strategy,mean_downtime_pct,std_downtime_pct,worst_downtime_pct")?;
    for (cap, value) in cells {
        for strategy in ["fluid", "simulation", "naive"] {
            let sample: Vec<f64> = rows
                .iter()
                .filter(|r| r.0 == cap && r.1 == value && r.2 == strategy)
                .map(|r| r.3)
                .collect();
            writeln!(
                w,
                "{cap},{value:.6},{strategy},{:.6},{:.6},{:.6}",
                mean(&sample),
                std_dev(&sample),
                sample.iter().copied().fold(0.0, f64::max),
            )?;
        }
    }
    w.flush()?;
    println!("wrote report_summary.csv to {}", common.out.display());
    Ok(())
}
