//! Schema and model checks that run before any solve.

use mfg_lab::model::checks::{check_convexity, check_legendre, check_symmetry_relation};
use mfg_lab::model::Hamiltonian;
use mfg_lab::MfgError;
use serde::{Deserialize, Serialize};

use crate::config::{check_ranges, LoadedConfig};
use crate::error::CliError;

/// Sampled points per check.
pub const SAMPLES: usize = 100;
/// Largest accepted symmetry-relation defect.
pub const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub model: String,
    pub min_hessian_eigenvalue: f64,
    pub max_hessian_eigenvalue: f64,
    pub legendre_defect: Option<f64>,
    pub symmetry_defect: f64,
    pub normalization_defect: f64,
    pub failures: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Range checks, then convexity, density and symmetry checks on the
/// configured model. Schema and range problems are returned as errors;
/// model failures are collected in the report.
pub fn validate(cfg: &LoadedConfig) -> Result<ValidationReport, CliError> {
    check_ranges(cfg)?;
    let c = &cfg.config;
    let grid = c.grid.build()?;
    let spec = c.model.spec();
    let seed = c.seed;
    let h: std::sync::Arc<dyn Hamiltonian<f64>> = spec.hamiltonian.build();
    let convex = check_convexity(h.as_ref(), grid.dim(), SAMPLES, seed);
    let mut failures = Vec::new();
    let mut legendre = None;
    if !convex.passed {
        failures.push(format!(
            "[model] hamiltonian (line {}): coercivity condition violated, D²_pp H is not positive definite \
             (smallest sampled eigenvalue {:e})",
            line(cfg, "hamiltonian"),
            convex.min_eig
        ));
    } else {
        legendre = Some(check_legendre(h.as_ref(), grid.dim(), SAMPLES, seed).legendre_defect);
    }
    let m0 = match spec.initial.sample::<f64>(&grid) {
        Ok(m0) => Some(m0),
        Err(MfgError::Density(msg)) => {
            failures.push(format!(
                "[model] initial (line {}): density invariant violated (m >= 0, unit mass): {msg}",
                line(cfg, "initial_parameter").max(line(cfg, "initial"))
            ));
            None
        }
        Err(e) => return Err(e.into()),
    };
    let uniform = vec![1.0; grid.nodes()];
    let coupling = spec.coupling.build::<f64>(spec.theta, spec.smoothing);
    let sym = check_symmetry_relation(coupling.as_ref(), &grid, m0.as_deref().unwrap_or(&uniform), Some((SAMPLES, seed)));
    if !(sym.max_defect <= SYMMETRY_TOL) {
        failures.push(format!(
            "[model] coupling (line {}): kernel symmetry relation defect {:e} exceeds {SYMMETRY_TOL:e}",
            line(cfg, "coupling"),
            sym.max_defect
        ));
    }
    Ok(ValidationReport {
        model: spec.name(),
        min_hessian_eigenvalue: convex.min_eig,
        max_hessian_eigenvalue: convex.max_eig,
        legendre_defect: legendre,
        symmetry_defect: sym.max_defect,
        normalization_defect: sym.normalization_defect,
        failures,
    })
}

fn line(cfg: &LoadedConfig, key: &str) -> usize {
    crate::config::locate(&cfg.source, "model", key).unwrap_or(0)
}

/// [`validate`] with failures turned into an error.
pub fn validate_or_fail(cfg: &LoadedConfig) -> Result<ValidationReport, CliError> {
    let report = validate(cfg)?;
    if report.passed() {
        Ok(report)
    } else {
        Err(CliError::Validation(report.failures))
    }
}
