//! Error tables under uniform refinement.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::{prepare_mesh, solve_case, ErrorComponents, ManufacturedCase, PhiReference};
use crate::error::Result;
use crate::mesh::{build_structured_mesh, StructuredKind};
use crate::solver::FixedPointConfig;

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub h: f64,
    pub cells: usize,
    pub unknowns: usize,
    pub errors: ErrorComponents,
    pub iterations: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub case: String,
    pub family: String,
    pub rows: Vec<ConvergenceRow>,
    /// Rates of the total error between consecutive meshes.
    pub rates: Vec<f64>,
    /// Least-squares slope of `log e` against `log h` over all meshes.
    pub ls_rate: f64,
    /// Set when the last observed rate is below 0.5.
    pub anomaly: bool,
}

pub fn observed_rate(e1: f64, e2: f64, h1: f64, h2: f64) -> f64 {
    (e1 / e2).ln() / (h1 / h2).ln()
}

pub fn least_squares_rate(h: &[f64], e: &[f64]) -> f64 {
    let n = h.len() as f64;
    let x: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = e.iter().map(|v| v.ln()).collect();
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

fn family_name(kind: StructuredKind) -> &'static str {
    match kind {
        StructuredKind::Hex => "hex",
        StructuredKind::Prism => "prism",
    }
}

/// Solves `case` on structured meshes of the unit cube with `n` cells per
/// direction for each entry of `sizes`.
pub fn run_convergence(
    case: &ManufacturedCase,
    kind: StructuredKind,
    sizes: &[usize],
    config: &FixedPointConfig,
    error_quad_order: usize,
) -> Result<ConvergenceReport> {
    let mut rows = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let mesh = prepare_mesh(build_structured_mesh(kind, n, [0.0; 3], [1.0; 3]), case)?;
        let res = solve_case(&mesh, case, config)?;
        let errors = res.errors(&mesh, case, error_quad_order, PhiReference::Pointwise);
        let map = &res.discretization.map;
        let row = ConvergenceRow {
            n,
            h: mesh.mesh_size(),
            cells: mesh.num_cells(),
            unknowns: map.n_u() + map.n_p() + map.n_flux() + map.n_phi(),
            errors,
            iterations: res.trace.iterations(),
            seconds: res.seconds,
        };
        log::info!(
            "{} n={n}: h={:.4} total={:.4e} iterations={} ({:.1}s)",
            family_name(kind),
            row.h,
            errors.total,
            row.iterations,
            row.seconds
        );
        rows.push(row);
    }
    let rates: Vec<f64> = rows
        .windows(2)
        .map(|w| observed_rate(w[0].errors.total, w[1].errors.total, w[0].h, w[1].h))
        .collect();
    let ls_rate = if rows.len() > 1 {
        let h: Vec<f64> = rows.iter().map(|r| r.h).collect();
        let e: Vec<f64> = rows.iter().map(|r| r.errors.total).collect();
        least_squares_rate(&h, &e)
    } else {
        f64::NAN
    };
    let anomaly = rates.last().is_some_and(|r| *r < 0.5);
    if anomaly {
        log::warn!("observed rate {:.3} on the finest pair is below 0.5", rates.last().unwrap());
    }
    Ok(ConvergenceReport {
        case: case.name.clone(),
        family: family_name(kind).into(),
        rows,
        rates,
        ls_rate,
        anomaly,
    })
}

impl ConvergenceReport {
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "case {} on {} meshes", self.case, self.family);
        let _ = writeln!(
            s,
            "{:>4} {:>9} {:>7} {:>10} {:>11} {:>11} {:>11} {:>11} {:>11} {:>6} {:>6}",
            "n", "h", "cells", "unknowns", "e_u", "e_p", "e_zeta", "e_phi", "e_total", "iter", "rate"
        );
        for (i, r) in self.rows.iter().enumerate() {
            let rate = if i == 0 { "-".to_string() } else { format!("{:.3}", self.rates[i - 1]) };
            let e = &r.errors;
            let _ = writeln!(
                s,
                "{:>4} {:>9.5} {:>7} {:>10} {:>11.4e} {:>11.4e} {:>11.4e} {:>11.4e} {:>11.4e} {:>6} {:>6}",
                r.n, r.h, r.cells, r.unknowns, e.u, e.p, e.zeta, e.phi, e.total, r.iterations, rate
            );
        }
        if self.ls_rate.is_finite() {
            let _ = writeln!(s, "least-squares rate: {:.3}", self.ls_rate);
        } else {
            let _ = writeln!(s, "least-squares rate: - (needs two levels)");
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,h,cells,unknowns,e_u,e_p,e_zeta,e_phi,e_total,iterations,rate,seconds\n");
        for (i, r) in self.rows.iter().enumerate() {
            let rate = if i == 0 { String::new() } else { format!("{}", self.rates[i - 1]) };
            let e = &r.errors;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.n, r.h, r.cells, r.unknowns, e.u, e.p, e.zeta, e.phi, e.total, r.iterations, rate, r.seconds
            );
        }
        s
    }

    /// Whitespace-separated columns for gnuplot or pgfplots.
    pub fn to_dat(&self) -> String {
        let mut s = String::from("# h e_u e_p e_zeta e_phi e_total\n");
        for r in &self.rows {
            let e = &r.errors;
            let _ = writeln!(s, "{} {} {} {} {} {}", r.h, e.u, e.p, e.zeta, e.phi, e.total);
        }
        s
    }

    /// Writes `<stem>.txt`, `.csv`, `.dat` and `.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let stem = format!("{}_{}", self.case, self.family);
        std::fs::write(dir.join(format!("{stem}.txt")), self.to_table())?;
        std::fs::write(dir.join(format!("{stem}.csv")), self.to_csv())?;
        std::fs::write(dir.join(format!("{stem}.dat")), self.to_dat())?;
        let json = serde_json::to_string_pretty(self).map_err(|e| crate::Error::Input(e.to_string()))?;
        std::fs::write(dir.join(format!("{stem}.json")), json)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rates_of_power_law() {
        let h = [0.5, 0.25, 0.125];
        let e: Vec<f64> = h.iter().map(|v: &f64| 3.0 * v.powf(1.5)).collect();
        assert!((observed_rate(e[0], e[1], h[0], h[1]) - 1.5).abs() < 1e-12);
        assert!((least_squares_rate(&h, &e) - 1.5).abs() < 1e-12);
    }
}
