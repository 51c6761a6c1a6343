//! Uniform space–time discretization of the unit torus `[0,1)^d × [t0, T]`.
//!
//! Scalars (u, m, v, μ) live on nodes `x_i = i·dx`. Flux components live on
//! the faces `x_i + dx/2·e_k`, stored per axis at the index of the face's
//! lower node. With this layout the face-centered gradient and the divergence
//! are exact negative adjoints and `divergence ∘ gradient` is the standard
//! (2d+1)-point Laplacian.

mod diffusion;
mod field;
pub mod io;
pub mod ops;

pub use diffusion::DiffusionSolver;
pub use field::{check_density, normalize_mass, DensityField, FluxField, ScalarField};

use serde::{Deserialize, Serialize};

use crate::error::{MfgError, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusGrid<T> {
    dim: usize,
    n_space: usize,
    n_time: usize,
    t0: T,
    t_end: T,
}

impl<T: Scalar> TorusGrid<T> {
    pub fn new(dim: usize, n_space: usize, n_time: usize, t0: T, t_end: T) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(MfgError::InvalidGrid(format!("dim must be 1 or 2, got {dim}")));
        }
        if n_space < 4 {
            return Err(MfgError::InvalidGrid(format!("need N >= 4, got {n_space}")));
        }
        if n_time < 2 {
            return Err(MfgError::InvalidGrid(format!("need K >= 2, got {n_time}")));
        }
        if !(t_end > t0) || !t0.is_finite() || !t_end.is_finite() {
            return Err(MfgError::InvalidGrid(format!("need T > t0, got [{t0}, {t_end}]")));
        }
        Ok(Self { dim, n_space, n_time, t0, t_end })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    /// Points per axis (N).
    pub fn n_space(&self) -> usize {
        self.n_space
    }
    /// Time steps (K); there are K+1 time slices.
    pub fn n_time(&self) -> usize {
        self.n_time
    }
    pub fn t0(&self) -> T {
        self.t0
    }
    pub fn t_end(&self) -> T {
        self.t_end
    }
    pub fn slices(&self) -> usize {
        self.n_time + 1
    }
    /// Nodes per time slice, N^d.
    pub fn nodes(&self) -> usize {
        self.n_space.pow(self.dim as u32)
    }
    /// Flux values per time slice, d·N^d.
    pub fn faces(&self) -> usize {
        self.dim * self.nodes()
    }
    pub fn dx(&self) -> T {
        T::one() / T::of_usize(self.n_space)
    }
    pub fn dt(&self) -> T {
        (self.t_end - self.t0) / T::of_usize(self.n_time)
    }
    /// dx^d, the quadrature weight of one node.
    pub fn cell_volume(&self) -> T {
        self.dx().powi(self.dim as i32)
    }
    pub fn time(&self, slice: usize) -> T {
        if slice == self.n_time {
            self.t_end
        } else {
            self.t0 + T::of_usize(slice) * self.dt()
        }
    }

    /// Per-axis integer coordinates of a node.
    pub fn multi_index(&self, node: usize) -> [usize; 2] {
        [node % self.n_space, node / self.n_space]
    }

    pub fn node_index(&self, ix: [usize; 2]) -> usize {
        ix[0] + self.n_space * ix[1]
    }

    /// Node coordinates; unused axes are zero.
    pub fn coords(&self, node: usize) -> [T; 2] {
        let ix = self.multi_index(node);
        let dx = self.dx();
        [T::of_usize(ix[0]) * dx, if self.dim == 2 { T::of_usize(ix[1]) * dx } else { T::zero() }]
    }

    /// Coordinates of the axis-`axis` face attached above `node`.
    pub fn face_coords(&self, node: usize, axis: usize) -> [T; 2] {
        let mut x = self.coords(node);
        x[axis] += self.dx() / T::of(2.0);
        x
    }

    /// Periodic neighbour of `node` one step forward along `axis`.
    #[inline]
    pub fn next(&self, node: usize, axis: usize) -> usize {
        let n = self.n_space;
        if axis == 0 {
            let i = node % n;
            if i + 1 == n { node + 1 - n } else { node + 1 }
        } else {
            let j = node / n;
            if j + 1 == n { node % n } else { node + n }
        }
    }

    /// Periodic neighbour of `node` one step backward along `axis`.
    #[inline]
    pub fn prev(&self, node: usize, axis: usize) -> usize {
        let n = self.n_space;
        if axis == 0 {
            let i = node % n;
            if i == 0 { node + n - 1 } else { node - 1 }
        } else {
            let j = node / n;
            if j == 0 { node + n * (n - 1) } else { node - n }
        }
    }

    /// Image of a node under the reflection x₁ ↦ −x₁ (mod 1).
    pub fn reflect(&self, node: usize) -> usize {
        let [i, j] = self.multi_index(node);
        self.node_index([(self.n_space - i) % self.n_space, j])
    }

    /// Image of an axis-`axis` face index under x₁ ↦ −x₁. The x₁-component
    /// of a reflected flux also flips sign.
    pub fn reflect_face(&self, node: usize, axis: usize) -> usize {
        let [i, j] = self.multi_index(node);
        let n = self.n_space;
        if axis == 0 {
            self.node_index([(2 * n - i - 1) % n, j])
        } else {
            self.node_index([(n - i) % n, j])
        }
    }

    /// Grid on `[time(slice), T]` sharing the spatial mesh and time step.
    pub fn restrict(&self, slice: usize) -> Result<Self> {
        if slice + 2 > self.slices() {
            return Err(MfgError::InvalidGrid(format!(
                "restriction slice {slice} leaves fewer than 2 steps"
            )));
        }
        Self::new(self.dim, self.n_space, self.n_time - slice, self.time(slice), self.t_end)
    }

    /// Slice index of time `t`, if `t` is on the time grid.
    pub fn slice_of(&self, t: T) -> Result<usize> {
        let s = (t - self.t0) / self.dt();
        let r = s.round();
        if (s - r).abs() > T::of(1e-9) || r < T::zero() || r > T::of_usize(self.n_time) {
            return Err(MfgError::OffGrid(t.as_f64()));
        }
        Ok(r.to_usize().unwrap_or(0))
    }

    /// Halves dx and dt.
    pub fn refined(&self) -> Self {
        Self { n_space: 2 * self.n_space, n_time: 2 * self.n_time, ..*self }
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.dim == other.dim && self.n_space == other.n_space && self.n_time == other.n_time
    }

    pub fn signature(&self) -> String {
        format!(
            "d={} N={} K={} t0={} T={}",
            self.dim, self.n_space, self.n_time, self.t0, self.t_end
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(TorusGrid::<f64>::new(3, 8, 4, 0.0, 1.0).is_err());
        assert!(TorusGrid::<f64>::new(1, 3, 4, 0.0, 1.0).is_err());
        assert!(TorusGrid::<f64>::new(1, 8, 1, 0.0, 1.0).is_err());
        assert!(TorusGrid::<f64>::new(1, 8, 4, 1.0, 1.0).is_err());
    }

    #[test]
    fn unit_torus() {
        let g = TorusGrid::<f64>::new(2, 16, 8, 0.0, 0.5).unwrap();
        assert_eq!(g.dx() * 16.0, 1.0);
        assert_eq!(g.nodes(), 256);
        assert_eq!(g.time(8), 0.5);
    }

    #[test]
    fn periodic_neighbours_invert() {
        let g = TorusGrid::<f64>::new(2, 5, 2, 0.0, 1.0).unwrap();
        for node in 0..g.nodes() {
            for axis in 0..2 {
                assert_eq!(g.prev(g.next(node, axis), axis), node);
            }
            assert_eq!(g.reflect(g.reflect(node)), node);
            assert_eq!(g.reflect_face(g.reflect_face(node, 0), 0), node);
        }
        assert_eq!(g.next(4, 0), 0);
        assert_eq!(g.prev(0, 1), 20);
    }

    #[test]
    fn restriction_keeps_step() {
        let g = TorusGrid::<f64>::new(1, 8, 10, 0.0, 1.0).unwrap();
        let r = g.restrict(4).unwrap();
        assert_eq!(r.n_time(), 6);
        assert!((r.dt() - g.dt()).abs() < 1e-15);
        assert_eq!(g.slice_of(0.4).unwrap(), 4);
        assert!(g.slice_of(0.45).is_err());
    }
}
