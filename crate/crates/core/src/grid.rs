//! Uniformly sampled rate functions.
//!
//! A [`RateGrid`] is the common currency between the arrival models, the
//! fluid integrator, and the discrete simulator: a nonnegative function
//! sampled on a uniform time grid, evaluated by linear interpolation and
//! integrated by the trapezoid rule. Because the function is piecewise
//! linear by definition, trapezoid quadrature over whole cells is exact.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A uniform time grid: `len` samples at `t0 + k*dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub dt: f64,
    pub len: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, dt: f64, len: usize) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::invalid(format!("grid dt must be > 0, got {dt}")));
        }
        if len < 2 {
            return Err(Error::invalid(format!("grid needs >= 2 samples, got {len}")));
        }
        Ok(TimeGrid { t0, dt, len })
    }

    /// Grid spanning `[t0, t0 + horizon]` with the step closest to `dt`
    /// that divides the horizon evenly.
    pub fn over(t0: f64, horizon: f64, dt: f64) -> Result<Self> {
        if !(horizon > 0.0) || !(dt > 0.0) {
            return Err(Error::invalid("horizon and dt must be > 0".to_string()));
        }
        let steps = (horizon / dt).round().max(1.0) as usize;
        TimeGrid::new(t0, horizon / steps as f64, steps + 1)
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + self.dt * k as f64
    }

    pub fn end(&self) -> f64 {
        self.time(self.len - 1)
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(|k| self.time(k))
    }

    /// Index of the last sample at or before `t`, clamped into range.
    pub fn index_at(&self, t: f64) -> usize {
        if t <= self.t0 {
            return 0;
        }
        let k = ((t - self.t0) / self.dt).floor() as usize;
        k.min(self.len - 1)
    }

    pub fn aligned_with(&self, other: &TimeGrid) -> bool {
        self.len == other.len
            && (self.t0 - other.t0).abs() <= 1e-12 * (1.0 + self.t0.abs())
            && (self.dt - other.dt).abs() <= 1e-12 * self.dt
    }
}

/// A nonnegative rate (or load) function sampled on a uniform grid.
/// Evaluation between samples is linear interpolation; outside the grid the
/// endpoint value is held.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateGrid {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl RateGrid {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of length {}",
                values.len(),
                grid.len
            )));
        }
        let mut values = values;
        for v in &mut values {
            if *v < 0.0 {
                if *v < -1e-9 {
                    return Err(Error::invalid(format!("negative rate sample {v}")));
                }
                *v = 0.0;
            }
            if !v.is_finite() {
                return Err(Error::invalid("non-finite rate sample".to_string()));
            }
        }
        Ok(RateGrid { grid, values })
    }

    pub fn zeros(grid: TimeGrid) -> Self {
        RateGrid { values: vec![0.0; grid.len], grid }
    }

    pub fn constant(grid: TimeGrid, value: f64) -> Result<Self> {
        RateGrid::new(grid, vec![value; grid.len])
    }

    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        RateGrid::new(grid, grid.times().map(f).collect())
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value_at(&self, t: f64) -> f64 {
        let g = &self.grid;
        if t <= g.t0 {
            return self.values[0];
        }
        if t >= g.end() {
            return self.values[g.len - 1];
        }
        let x = (t - g.t0) / g.dt;
        let k = (x.floor() as usize).min(g.len - 2);
        let frac = x - k as f64;
        self.values[k] * (1.0 - frac) + self.values[k + 1] * frac
    }

    /// Exact integral of the piecewise-linear function over the whole grid.
    pub fn integral(&self) -> f64 {
        let mut acc = 0.0;
        for w in self.values.windows(2) {
            acc += 0.5 * (w[0] + w[1]);
        }
        acc * self.grid.dt
    }

    /// Time average over the grid span.
    pub fn mean(&self) -> f64 {
        self.integral() / (self.grid.end() - self.grid.t0)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Pointwise sum; grids must align.
    pub fn add(&self, other: &RateGrid) -> Result<RateGrid> {
        if !self.grid.aligned_with(&other.grid) {
            return Err(Error::GridMismatch(
                "cannot add rate grids on different time grids".to_string(),
            ));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + b)
            .collect();
        RateGrid::new(self.grid, values)
    }

    pub fn scale(&self, factor: f64) -> Result<RateGrid> {
        if factor < 0.0 {
            return Err(Error::invalid(format!("negative scale factor {factor}")));
        }
        RateGrid::new(self.grid, self.values.iter().map(|v| v * factor).collect())
    }

    /// Exact cumulative integral from the grid start, queryable anywhere.
    pub fn cumulative(&self) -> CumulativeCurve {
        let mut nodes = Vec::with_capacity(self.grid.len);
        let mut acc = 0.0;
        nodes.push(0.0);
        for w in self.values.windows(2) {
            acc += 0.5 * (w[0] + w[1]) * self.grid.dt;
            nodes.push(acc);
        }
        CumulativeCurve { grid: self.grid, rate: self.values.clone(), nodes }
    }

    /// Writes `t,value` rows with the given header for the value column.
    pub fn write_csv(&self, mut w: impl std::io::Write, value_header: &str) -> Result<()> {
        writeln!(w, "t_h,{value_header}")?;
        for (t, v) in self.grid.times().zip(&self.values) {
            writeln!(w, "{t:.6},{v:.9}")?;
        }
        Ok(())
    }
}

/// Cumulative integral of a [`RateGrid`]: monotone nondecreasing and
/// piecewise quadratic (exact between grid nodes).
#[derive(Debug, Clone)]
pub struct CumulativeCurve {
    grid: TimeGrid,
    rate: Vec<f64>,
    nodes: Vec<f64>,
}

impl CumulativeCurve {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn total(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    /// Cumulative value at `t`, clamped to the grid span.
    pub fn value_at(&self, t: f64) -> f64 {
        let g = &self.grid;
        if t <= g.t0 {
            return 0.0;
        }
        if t >= g.end() {
            return self.total();
        }
        let x = (t - g.t0) / g.dt;
        let k = (x.floor() as usize).min(g.len - 2);
        let tk = g.time(k);
        let h = t - tk;
        let r0 = self.rate[k];
        let r1 = self.rate[k + 1];
        let rt = r0 + (r1 - r0) * h / g.dt;
        self.nodes[k] + 0.5 * (r0 + rt) * h
    }

    /// Integral over `[a, b]`, clamped to the grid span.
    pub fn between(&self, a: f64, b: f64) -> f64 {
        self.value_at(b) - self.value_at(a)
    }

    /// Smallest `w >= 0` such that the integral over `[t - w, t]` equals
    /// `mass`, by bisection on the monotone cumulative curve.
    ///
    /// Errors when `mass` exceeds everything that has arrived before `t`,
    /// which signals an inconsistent caller state rather than a user input.
    pub fn invert_window(&self, t: f64, mass: f64) -> Result<f64> {
        if mass <= 0.0 {
            return Ok(0.0);
        }
        let upper = self.value_at(t);
        let target = upper - mass;
        if target < -1e-8 * mass.max(1.0) {
            return Err(Error::internal(format!(
                "queued mass {mass} exceeds cumulative arrivals {upper} at t={t}"
            )));
        }
        let target = target.max(0.0);
        // Bisect s in [t0, t] with value_at(s) = target; value_at is monotone.
        let (mut lo, mut hi) = (self.grid.t0, t.min(self.grid.end()).max(self.grid.t0));
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.value_at(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-14 * (1.0 + t.abs()) {
                break;
            }
        }
        let s = 0.5 * (lo + hi);
        Ok((t - s).max(0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn interpolation_and_clamping() {
        let g = TimeGrid::new(0.0, 0.5, 3).unwrap();
        let r = RateGrid::new(g, vec![1.0, 2.0, 4.0]).unwrap();
        assert_abs_diff_eq!(r.value_at(0.25), 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(r.value_at(0.75), 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.value_at(-1.0), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.value_at(9.0), 4.0, epsilon = 1e-12);
    }

    #[test]
    fn trapezoid_integral_exact_for_linear() {
        let g = TimeGrid::new(0.0, 0.25, 9).unwrap();
        let r = RateGrid::from_fn(g, |t| 3.0 * t).unwrap();
        assert_abs_diff_eq!(r.integral(), 6.0, epsilon = 1e-12);
    }

    #[test]
    fn cumulative_matches_closed_form() {
        let g = TimeGrid::new(0.0, 0.1, 11).unwrap();
        let r = RateGrid::from_fn(g, |t| 2.0 * t).unwrap();
        let c = r.cumulative();
        // integral of 2t from 0 to x is x^2; exact for piecewise-linear rate
        assert_abs_diff_eq!(c.value_at(0.35), 0.35 * 0.35, epsilon = 1e-12);
        assert_abs_diff_eq!(c.between(0.2, 0.8), 0.64 - 0.04, epsilon = 1e-12);
    }

    #[test]
    fn invert_window_constant_rate() {
        let g = TimeGrid::new(0.0, 0.1, 21).unwrap();
        let r = RateGrid::constant(g, 10.0).unwrap();
        let c = r.cumulative();
        // 5 vehicles at 10 veh/h accumulate over 0.5 h
        let w = c.invert_window(2.0, 5.0).unwrap();
        assert_abs_diff_eq!(w, 0.5, epsilon = 1e-9);
        assert_eq!(c.invert_window(2.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn invert_window_rejects_excess_mass() {
        let g = TimeGrid::new(0.0, 0.1, 11).unwrap();
        let r = RateGrid::constant(g, 1.0).unwrap();
        let c = r.cumulative();
        assert!(c.invert_window(1.0, 50.0).is_err());
    }

    #[test]
    fn alignment_checks() {
        let a = RateGrid::zeros(TimeGrid::new(0.0, 0.1, 11).unwrap());
        let b = RateGrid::zeros(TimeGrid::new(0.0, 0.2, 11).unwrap());
        assert!(a.add(&b).is_err());
        let c = RateGrid::constant(TimeGrid::new(0.0, 0.1, 11).unwrap(), 2.0).unwrap();
        assert_abs_diff_eq!(a.add(&c).unwrap().integral(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn negative_values_rejected() {
        let g = TimeGrid::new(0.0, 0.1, 3).unwrap();
        assert!(RateGrid::new(g, vec![0.0, -1.0, 0.0]).is_err());
        // tiny negatives from arithmetic are flushed to zero
        let r = RateGrid::new(g, vec![0.0, -1e-15, 0.0]).unwrap();
        assert_eq!(r.values()[1], 0.0);
    }
}
