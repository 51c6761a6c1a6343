//! Game data: Hamiltonian, couplings, initial density, and the grid they
//! are sampled on.

pub mod checks;
pub mod coupling;
pub mod hamiltonian;
pub mod library;

use std::sync::Arc;

pub use coupling::{Coupling, CouplingAt};
pub use hamiltonian::Hamiltonian;
pub use library::{CouplingKind, HamiltonianKind, InitialDensity, ModelSpec};

use crate::error::{MfgError, Result};
use crate::grid::{check_density, DiffusionSolver, TorusGrid};
use crate::scalar::Scalar;

/// Immutable bundle of everything the solvers need for one game on one grid.
#[derive(Debug, Clone)]
pub struct MfgModel<T: Scalar> {
    name: String,
    grid: TorusGrid<T>,
    hamiltonian: Arc<dyn Hamiltonian<T>>,
    running: Arc<dyn Coupling<T>>,
    terminal: Arc<dyn Coupling<T>>,
    m0: Vec<T>,
    face_x: Arc<Vec<[T; 2]>>,
    diffusion: Arc<DiffusionSolver<T>>,
}

impl<T: Scalar> MfgModel<T> {
    pub fn new(
        name: impl Into<String>,
        grid: TorusGrid<T>,
        hamiltonian: Arc<dyn Hamiltonian<T>>,
        running: Arc<dyn Coupling<T>>,
        terminal: Arc<dyn Coupling<T>>,
        m0: Vec<T>,
    ) -> Result<Self> {
        if m0.len() != grid.nodes() {
            return Err(MfgError::ShapeMismatch { expected: grid.nodes(), got: m0.len() });
        }
        check_density(&grid, &m0)?;
        let face_x = (0..grid.dim())
            .flat_map(|axis| (0..grid.nodes()).map(move |i| (i, axis)))
            .map(|(i, axis)| grid.face_coords(i, axis))
            .collect();
        let diffusion = DiffusionSolver::new(&grid, grid.dt())?;
        Ok(Self {
            name: name.into(),
            grid,
            hamiltonian,
            running,
            terminal,
            m0,
            face_x: Arc::new(face_x),
            diffusion: Arc::new(diffusion),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn grid(&self) -> &TorusGrid<T> {
        &self.grid
    }
    pub fn hamiltonian(&self) -> &dyn Hamiltonian<T> {
        self.hamiltonian.as_ref()
    }
    pub fn running(&self) -> &dyn Coupling<T> {
        self.running.as_ref()
    }
    pub fn terminal(&self) -> &dyn Coupling<T> {
        self.terminal.as_ref()
    }
    pub fn m0(&self) -> &[T] {
        &self.m0
    }
    /// Factorization of `I − dt·Δ`.
    pub fn diffusion(&self) -> &DiffusionSolver<T> {
        &self.diffusion
    }
    /// True when both couplings vanish.
    pub fn is_decoupled(&self) -> bool {
        self.running.is_zero() && self.terminal.is_zero()
    }

    /// Same game with another initial density.
    pub fn with_initial(&self, m0: Vec<T>) -> Result<Self> {
        if m0.len() != self.grid.nodes() {
            return Err(MfgError::ShapeMismatch { expected: self.grid.nodes(), got: m0.len() });
        }
        check_density(&self.grid, &m0)?;
        Ok(Self { m0, ..self.clone() })
    }

    /// Same game on `[time(slice), T]` started from `m0`.
    pub fn restricted(&self, slice: usize, m0: Vec<T>) -> Result<Self> {
        let grid = self.grid.restrict(slice)?;
        check_density(&grid, &m0)?;
        Ok(Self { grid, m0, ..self.clone() })
    }

    /// Same game on another grid; the caller supplies the resampled `m0`.
    pub fn on_grid(&self, grid: TorusGrid<T>, m0: Vec<T>) -> Result<Self> {
        Self::new(self.name.clone(), grid, self.hamiltonian.clone(), self.running.clone(), self.terminal.clone(), m0)
    }

    /// Coordinates of face `f` of a flux slice.
    #[inline]
    pub fn face_x(&self, f: usize) -> [T; 2] {
        self.face_x[f]
    }

    /// Drift `b = D_pH(x, Du)` on every face of a slice.
    pub fn drift(&self, du: &[T], out: &mut [T]) {
        let nodes = self.grid.nodes();
        for (f, (o, p)) in out.iter_mut().zip(du).enumerate() {
            *o = self.hamiltonian.dh(self.face_x[f], f / nodes, *p);
        }
    }

    /// `D²_pp H(x, Du)` on every face of a slice.
    pub fn hessian(&self, du: &[T], out: &mut [T]) {
        let nodes = self.grid.nodes();
        for (f, (o, p)) in out.iter_mut().zip(du).enumerate() {
            *o = self.hamiltonian.d2h(self.face_x[f], f / nodes, *p);
        }
    }

    /// Node Hamiltonian `Σ_k ½(h(face i) + h(face i − e_k))` of a face gradient.
    pub fn node_hamiltonian(&self, du: &[T], out: &mut [T]) {
        let g = &self.grid;
        let nodes = g.nodes();
        let mut hf = vec![T::zero(); du.len()];
        for (f, (o, p)) in hf.iter_mut().zip(du).enumerate() {
            *o = self.hamiltonian.h(self.face_x[f], f / nodes, *p);
        }
        crate::grid::ops::face_average_adjoint(g, &hf, out);
    }

    /// Lagrangian `l(x, q)` on every face of a slice.
    pub fn face_lagrangian(&self, f: usize, q: T) -> T {
        self.hamiltonian.l(self.face_x[f], f / self.grid.nodes(), q)
    }
}
