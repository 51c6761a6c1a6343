//! Manufactured-solution convergence study for the backward HJB solver.
//!
//! `u*(t,x) = cos(2πx)(T − t)` with `H = ½p²` and the source
//! `r = −∂_t u* − Δu* + ½|∂_x u*|²` evaluated in closed form. The time step
//! follows `dt = ratio·dx²`, so the observed order is the spatial one.

use std::f64::consts::PI;

use mfg_lab::model::library::builtin_quadratic;
use mfg_lab::model::{CouplingKind, InitialDensity};
use mfg_lab::pde::{solve_hjb, HjbProblem};
use mfg_lab::{Field, Grid, Result};
use serde::{Deserialize, Serialize};

pub fn exact(x: f64, t: f64, t_end: f64) -> f64 {
    (2.0 * PI * x).cos() * (t_end - t)
}

pub fn source(x: f64, t: f64, t_end: f64) -> f64 {
    let c = (2.0 * PI * x).cos();
    let s = (2.0 * PI * x).sin();
    let tau = t_end - t;
    c + 4.0 * PI * PI * c * tau + 0.5 * (2.0 * PI * s * tau).powi(2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub n: usize,
    pub k: usize,
    pub dx: f64,
    pub dt: f64,
    pub sup_error: f64,
}

/// Solves on `N` nodes with `K = ⌈T/(ratio·dx²)⌉` steps.
pub fn manufactured_row(n: usize, ratio: f64, t_end: f64) -> Result<StudyRow> {
    let dx = 1.0 / n as f64;
    let k = (t_end / (ratio * dx * dx)).ceil() as usize;
    let grid = Grid::new(1, n, k, 0.0, t_end)?;
    let model = builtin_quadratic(grid, CouplingKind::None, 0.0, InitialDensity::Uniform)?;
    let r = Field::from_fn(grid, |x, t| source(x[0], t, t_end));
    let terminal = vec![0.0; n];
    let (u, _) = solve_hjb(&HjbProblem { model: &model, source: &r, terminal: &terminal })?;
    let exact = Field::from_fn(grid, |x, t| exact(x[0], t, t_end));
    Ok(StudyRow { n, k, dx, dt: grid.dt(), sup_error: u.sup_distance(&exact) })
}

/// Least-squares slope of `log y` against `log x`.
pub fn fitted_order(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points.iter().map(|(x, y)| (x.ln(), y.ln())).collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
