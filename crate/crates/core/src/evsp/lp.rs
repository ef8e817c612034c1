//! LP text export of the scheduling MIP.
//!
//! Emits the formulation with the indicator logic expanded into big-M rows
//! (one auxiliary binary per station and grid node for the charging-window
//! indicator), in the LP file format industrial solvers read. Strict
//! interval bounds carry a small epsilon, so cross-checked optima agree
//! with the combinatorial solver to that tolerance.

use std::fmt::Write as _;

use super::EvspProblem;

const EPS: f64 = 1e-6;

fn term(buf: &mut String, coef: f64, var: &str) {
    if coef >= 0.0 {
        let _ = write!(buf, " + {coef} {var}");
    } else {
        let _ = write!(buf, " - {} {var}", -coef);
    }
}

/// Serializes the instance as an LP-format MIP minimizing the arrival time
/// at the last station (the objective differs from downtime by the constant
/// free-flow travel time).
pub fn export_lp(problem: &EvspProblem) -> String {
    let n = problem.num_stations();
    let grid = &problem.grid;
    let nodes = grid.len;
    let slots = grid.len - 1;
    let dt = grid.dt;
    let v = &problem.vehicle;
    let capacity = v.capacity_kwh;
    let floor = v.floor_kwh();
    let horizon = grid.end();
    let big_m = 2.0 * horizon.max(1.0);

    let mut out = String::new();
    out.push_str("\\ corridor charging schedule\n");
    out.push_str("Minimize\n");
    let _ = writeln!(out, " obj: tb_{}", n - 1);
    out.push_str("Subject To\n");

    for i in 0..n {
        // 11a: energy recursion along the corridor
        if i + 1 < n {
            let mut row = format!(" c11a_{i}:");
            term(&mut row, 1.0, &format!("soc_{}", i + 1));
            term(&mut row, -1.0, &format!("soc_{i}"));
            term(&mut row, -1.0, &format!("chg_{i}"));
            let _ = writeln!(out, "{row} = {}", -problem.drive_energy[i]);
        }
        // 11b: charge gated by the visit flag
        let mut row = format!(" c11b_{i}:");
        term(&mut row, 1.0, &format!("chg_{i}"));
        term(&mut row, -capacity, &format!("x_{i}"));
        let _ = writeln!(out, "{row} <= 0");
        // 11d: charge bounded by integrated window power
        let mut row = format!(" c11d_{i}:");
        term(&mut row, 1.0, &format!("chg_{i}"));
        for k in 0..nodes {
            let p = problem.power[i][k];
            if p != 0.0 {
                term(&mut row, -dt * p, &format!("th_{i}_{k}"));
            }
        }
        let _ = writeln!(out, "{row} <= 0");
        // 11e: headroom
        let mut row = format!(" c11e_{i}:");
        term(&mut row, 1.0, &format!("chg_{i}"));
        term(&mut row, 1.0, &format!("soc_{i}"));
        let _ = writeln!(out, "{row} <= {capacity}");
        // 12a: charge start after arrival, wait, and overhead
        let mut row = format!(" c12a_{i}:");
        term(&mut row, 1.0, &format!("ts_{i}"));
        term(&mut row, -1.0, &format!("tb_{i}"));
        term(&mut row, -1.0, &format!("om_{i}"));
        term(&mut row, -problem.overhead[i], &format!("x_{i}"));
        let _ = writeln!(out, "{row} >= 0");
        // 12b: departure covers the charging interval
        let mut row = format!(" c12b_{i}:");
        term(&mut row, 1.0, &format!("td_{i}"));
        term(&mut row, -1.0, &format!("ts_{i}"));
        for k in 0..nodes {
            term(&mut row, -dt, &format!("th_{i}_{k}"));
        }
        let _ = writeln!(out, "{row} >= 0");
        // 12c: earliest arrival at the next station
        if i + 1 < n {
            let mut row = format!(" c12c_{i}:");
            term(&mut row, 1.0, &format!("tb_{}", i + 1));
            term(&mut row, -1.0, &format!("td_{i}"));
            let _ = writeln!(out, "{row} >= {}", problem.drive_time[i]);
        }
        // 13c: wait selected by the arrival slot
        let mut row = format!(" c13c_{i}:");
        term(&mut row, 1.0, &format!("om_{i}"));
        for s in 0..slots {
            let w = problem.wait[i][s];
            if w != 0.0 {
                term(&mut row, -w, &format!("phi_{i}_{s}"));
            }
        }
        let _ = writeln!(out, "{row} = 0");
        // 13d: exactly one arrival slot when visiting
        let mut row = format!(" c13d_{i}:");
        for s in 0..slots {
            term(&mut row, 1.0, &format!("phi_{i}_{s}"));
        }
        term(&mut row, -1.0, &format!("x_{i}"));
        let _ = writeln!(out, "{row} = 0");

        for s in 0..slots {
            // 13e tightening
            let mut row = format!(" c13e_p_{i}_{s}:");
            term(&mut row, 1.0, &format!("phi_{i}_{s}"));
            term(&mut row, -1.0, &format!("x_{i}"));
            let _ = writeln!(out, "{row} <= 0");
            // 13b: selected slot brackets the arrival time
            let t_lo = grid.time(s);
            let t_hi = grid.time(s + 1);
            let mut row = format!(" c13b_lo_{i}_{s}:");
            term(&mut row, 1.0, &format!("tb_{i}"));
            term(&mut row, -big_m, &format!("phi_{i}_{s}"));
            let _ = writeln!(out, "{row} >= {}", t_lo - big_m);
            let mut row = format!(" c13b_hi_{i}_{s}:");
            term(&mut row, 1.0, &format!("tb_{i}"));
            term(&mut row, big_m, &format!("phi_{i}_{s}"));
            let _ = writeln!(out, "{row} <= {}", t_hi - EPS + big_m);
        }

        for k in 0..nodes {
            let tk = grid.time(k);
            // 13e tightening
            let mut row = format!(" c13e_t_{i}_{k}:");
            term(&mut row, 1.0, &format!("th_{i}_{k}"));
            term(&mut row, -1.0, &format!("x_{i}"));
            let _ = writeln!(out, "{row} <= 0");
            // 13a, selected implies inside the window
            let mut row = format!(" c13a_in1_{i}_{k}:");
            term(&mut row, 1.0, &format!("ts_{i}"));
            term(&mut row, big_m, &format!("th_{i}_{k}"));
            let _ = writeln!(out, "{row} <= {}", tk + big_m);
            let mut row = format!(" c13a_in2_{i}_{k}:");
            term(&mut row, 1.0, &format!("td_{i}"));
            term(&mut row, -big_m, &format!("th_{i}_{k}"));
            let _ = writeln!(out, "{row} >= {}", tk + EPS - big_m);
            // 13a, inside the window forces selection (aux disjunction y)
            let mut row = format!(" c13a_on1_{i}_{k}:");
            term(&mut row, 1.0, &format!("ts_{i}"));
            term(&mut row, big_m, &format!("th_{i}_{k}"));
            term(&mut row, big_m, &format!("y_{i}_{k}"));
            let _ = writeln!(out, "{row} >= {}", tk + EPS);
            let mut row = format!(" c13a_on2_{i}_{k}:");
            term(&mut row, 1.0, &format!("td_{i}"));
            term(&mut row, -big_m, &format!("th_{i}_{k}"));
            term(&mut row, big_m, &format!("y_{i}_{k}"));
            let _ = writeln!(out, "{row} <= {}", tk + big_m);
        }
    }

    out.push_str("Bounds\n");
    let _ = writeln!(out, " soc_0 = {}", v.initial_kwh);
    let _ = writeln!(out, " tb_0 = 0");
    for i in 0..n {
        if i > 0 {
            let _ = writeln!(out, " {floor} <= soc_{i} <= {capacity}");
            let _ = writeln!(out, " 0 <= tb_{i} <= {horizon}");
        }
        let _ = writeln!(out, " 0 <= chg_{i} <= {capacity}");
        let _ = writeln!(out, " 0 <= ts_{i} <= {horizon}");
        let _ = writeln!(out, " 0 <= td_{i} <= {horizon}");
        let _ = writeln!(out, " 0 <= om_{i} <= {horizon}");
    }
    out.push_str("Binaries\n");
    for i in 0..n {
        let _ = write!(out, " x_{i}");
        for s in 0..slots {
            let _ = write!(out, " phi_{i}_{s}");
        }
        for k in 0..nodes {
            let _ = write!(out, " th_{i}_{k} y_{i}_{k}");
        }
        out.push('\n');
    }
    out.push_str("End\n");
    out
}
