//! Built-in games, selectable by name from configuration.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::coupling::{self, Coupling};
use super::hamiltonian::{self, Hamiltonian};
use super::MfgModel;
use crate::error::{MfgError, Result};
use crate::grid::{ops, TorusGrid};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HamiltonianKind {
    /// `½|p|²`.
    Quadratic,
    /// `½(1 + 0.1 cos 2πx₁)|p|²`.
    Modulated,
    /// `Σ_k ½p_k² + √(1+p_k²) − 1`.
    Soft,
    /// `Σ_k |p_k|`; not uniformly convex, rejected by validation.
    Abs,
}

impl HamiltonianKind {
    pub const ALL: [HamiltonianKind; 4] = [Self::Quadratic, Self::Modulated, Self::Soft, Self::Abs];

    pub fn build<T: Scalar>(self) -> Arc<dyn Hamiltonian<T>> {
        match self {
            Self::Quadratic => Arc::new(hamiltonian::Quadratic),
            Self::Modulated => Arc::new(hamiltonian::Modulated::default()),
            Self::Soft => Arc::new(hamiltonian::Soft),
            Self::Abs => Arc::new(hamiltonian::Abs),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CouplingKind {
    /// `f ≡ 0`.
    None,
    /// `f(x,m) = θ m(x)`.
    Monotone,
    /// `f(x,m) = θ (ρ⋆m)(x)`.
    Smoothed,
    /// `f(x,m) = θ cos(2πx₁)`, independent of `m`.
    External,
    /// `F(m) = θ (1 − S(m)²)²` with `S(m) = ∫ sin(2πx₁) dm`.
    DoubleWell,
}

impl CouplingKind {
    pub const ALL: [CouplingKind; 5] = [Self::None, Self::Monotone, Self::Smoothed, Self::External, Self::DoubleWell];

    pub fn build<T: Scalar>(self, theta: f64, smoothing: f64) -> Arc<dyn Coupling<T>> {
        match self {
            _ if theta == 0.0 => Arc::new(coupling::Zero),
            Self::None => Arc::new(coupling::Zero),
            Self::Monotone => Arc::new(coupling::Local { strength: theta }),
            Self::Smoothed => Arc::new(coupling::Smoothed { strength: theta, kappa: smoothing }),
            Self::External => Arc::new(coupling::External { strength: theta }),
            Self::DoubleWell => Arc::new(coupling::DoubleWell { strength: theta }),
        }
    }
}

/// Closed-form initial densities; sampled on the nodes and rescaled to unit
/// discrete mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialDensity {
    Uniform,
    /// `1 + a cos 2πx₁`; negative somewhere when `|a| > 1`.
    Cosine { amplitude: f64 },
    /// Symmetric bump `∝ exp(κ cos 2πx₁)`.
    Bump { kappa: f64 },
    /// Asymmetric bump `∝ exp(κ sin 2πx₁)`.
    Tilted { kappa: f64 },
}

impl InitialDensity {
    /// Unnormalized profile at a point.
    pub fn profile(&self, x: [f64; 2]) -> f64 {
        let c = 2.0 * std::f64::consts::PI * x[0];
        match *self {
            Self::Uniform => 1.0,
            Self::Cosine { amplitude } => 1.0 + amplitude * c.cos(),
            Self::Bump { kappa } => (kappa * (c.cos() - 1.0)).exp(),
            Self::Tilted { kappa } => (kappa * (c.sin() - 1.0)).exp(),
        }
    }

    /// Samples on the grid and normalizes. Fails if the profile is negative
    /// or non-finite anywhere on the grid.
    pub fn sample<T: Scalar>(&self, grid: &TorusGrid<T>) -> Result<Vec<T>> {
        let raw: Vec<T> = (0..grid.nodes())
            .map(|i| {
                let x = grid.coords(i);
                T::of(self.profile([x[0].as_f64(), x[1].as_f64()]))
            })
            .collect();
        if let Some((i, v)) = raw.iter().enumerate().find(|(_, v)| !(**v >= T::zero()) || !v.is_finite()) {
            return Err(MfgError::Density(format!(
                "initial density preset takes value {v} at node {i}; densities must be nonnegative"
            )));
        }
        let mass = ops::integrate(grid, &raw);
        Ok(raw.into_iter().map(|v| v / mass).collect())
    }

    /// Whether the preset is invariant under `x₁ ↦ −x₁`.
    pub fn is_symmetric(&self) -> bool {
        !matches!(self, Self::Tilted { .. })
    }
}

/// Name-and-parameter description of a built-in game.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub hamiltonian: HamiltonianKind,
    pub coupling: CouplingKind,
    /// Coupling strength `θ ≥ 0`.
    pub theta: f64,
    /// Kernel concentration of the smoothed coupling.
    pub smoothing: f64,
    pub initial: InitialDensity,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            hamiltonian: HamiltonianKind::Quadratic,
            coupling: CouplingKind::None,
            theta: 0.0,
            smoothing: 2.0,
            initial: InitialDensity::Cosine { amplitude: 0.5 },
        }
    }
}

impl ModelSpec {
    pub fn name(&self) -> String {
        format!(
            "{}/{}",
            serde_json::to_value(self.hamiltonian).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
            serde_json::to_value(self.coupling).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
        )
    }

    pub fn build<T: Scalar>(&self, grid: TorusGrid<T>) -> Result<MfgModel<T>> {
        if !(self.theta >= 0.0) || !self.theta.is_finite() {
            return Err(MfgError::InvalidParameter(format!("theta must be finite and >= 0, got {}", self.theta)));
        }
        MfgModel::new(
            self.name(),
            grid,
            self.hamiltonian.build(),
            self.coupling.build(self.theta, self.smoothing),
            Arc::new(coupling::Zero),
            self.initial.sample(&grid)?,
        )
    }
}

/// `H = ½|p|²`, `g = 0`, running coupling `kind` scaled by `θ`.
pub fn builtin_quadratic<T: Scalar>(
    grid: TorusGrid<T>,
    kind: CouplingKind,
    theta: f64,
    initial: InitialDensity,
) -> Result<MfgModel<T>> {
    ModelSpec { hamiltonian: HamiltonianKind::Quadratic, coupling: kind, theta, initial, ..ModelSpec::default() }.build(grid)
}
