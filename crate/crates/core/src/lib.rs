//! Charging-station availability forecasting and corridor charging scheduling.
//!
//! The crate models a public fast-charging station as a multi-server FCFS
//! queue fed by a mix of announced ("scheduled") and walk-in ("unscheduled")
//! vehicle arrivals. Three layers build on each other:
//!
//! * [`arrivals`] turns announced vehicles and historical rate profiles into
//!   arrival-rate and load-rate curves, and samples concrete realizations.
//! * [`fluid`] integrates a coupled fluid queue (vehicle flow plus energy
//!   flow) through underloaded/overloaded regimes and post-processes the
//!   trajectory into an availability forecast: expected wait `v(t)` and
//!   per-vehicle power `P(t)`.
//! * [`sim`] is the discrete-event counterpart used both as a forecasting
//!   baseline and as the stochastic evaluation environment.
//!
//! On top of the forecasts, [`evsp`] builds and solves (to proven optimality)
//! the discrete-time corridor charging-scheduling problem, and [`harness`]
//! orchestrates scenario generation, the three forecasting strategies, and
//! Monte Carlo evaluation sweeps.

pub mod arrivals;
pub mod error;
pub mod evsp;
pub mod fluid;
pub mod grid;
pub mod harness;
pub mod rng;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
pub use grid::{RateGrid, TimeGrid};
