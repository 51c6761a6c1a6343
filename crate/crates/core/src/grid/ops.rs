//! Periodic finite-difference stencils on single time slices.
//!
//! Node slices have length `N^d`; flux slices have length `d·N^d` with the
//! axis-`k` components stored contiguously in block `k`.

use super::TorusGrid;
use crate::scalar::Scalar;

/// Face-centered difference `(u[i+e_k] - u[i]) / dx` on every axis-`k` face.
pub fn gradient<T: Scalar>(grid: &TorusGrid<T>, u: &[T], out: &mut [T]) {
    let nodes = grid.nodes();
    debug_assert_eq!(u.len(), nodes);
    debug_assert_eq!(out.len(), grid.faces());
    let inv_dx = T::one() / grid.dx();
    for axis in 0..grid.dim() {
        let block = &mut out[axis * nodes..(axis + 1) * nodes];
        for (i, o) in block.iter_mut().enumerate() {
            *o = (u[grid.next(i, axis)] - u[i]) * inv_dx;
        }
    }
}

/// Negative adjoint of [`gradient`]: `Σ_k (w_k[i] - w_k[i-e_k]) / dx`.
pub fn divergence<T: Scalar>(grid: &TorusGrid<T>, w: &[T], out: &mut [T]) {
    let nodes = grid.nodes();
    debug_assert_eq!(w.len(), grid.faces());
    debug_assert_eq!(out.len(), nodes);
    let inv_dx = T::one() / grid.dx();
    out.iter_mut().for_each(|o| *o = T::zero());
    for axis in 0..grid.dim() {
        let block = &w[axis * nodes..(axis + 1) * nodes];
        for (i, o) in out.iter_mut().enumerate() {
            *o += (block[i] - block[grid.prev(i, axis)]) * inv_dx;
        }
    }
}

/// Standard 3-point (1D) / 5-point (2D) periodic Laplacian.
pub fn laplacian<T: Scalar>(grid: &TorusGrid<T>, u: &[T], out: &mut [T]) {
    let inv_dx2 = T::one() / (grid.dx() * grid.dx());
    let two = T::of(2.0);
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = T::zero();
        for axis in 0..grid.dim() {
            acc += u[grid.next(i, axis)] - two * u[i] + u[grid.prev(i, axis)];
        }
        *o = acc * inv_dx2;
    }
}

/// Arithmetic average of a node field onto the faces.
pub fn face_average<T: Scalar>(grid: &TorusGrid<T>, m: &[T], out: &mut [T]) {
    let nodes = grid.nodes();
    let half = T::of(0.5);
    for axis in 0..grid.dim() {
        let block = &mut out[axis * nodes..(axis + 1) * nodes];
        for (i, o) in block.iter_mut().enumerate() {
            *o = half * (m[i] + m[grid.next(i, axis)]);
        }
    }
}

/// Transpose of [`face_average`]: `Σ_k ½(φ_k[i] + φ_k[i-e_k])`.
pub fn face_average_adjoint<T: Scalar>(grid: &TorusGrid<T>, phi: &[T], out: &mut [T]) {
    let nodes = grid.nodes();
    let half = T::of(0.5);
    out.iter_mut().for_each(|o| *o = T::zero());
    for axis in 0..grid.dim() {
        let block = &phi[axis * nodes..(axis + 1) * nodes];
        for (i, o) in out.iter_mut().enumerate() {
            *o += half * (block[i] + block[grid.prev(i, axis)]);
        }
    }
}

/// `dx^d · Σ values`.
pub fn integrate<T: Scalar>(grid: &TorusGrid<T>, u: &[T]) -> T {
    grid.cell_volume() * u.iter().copied().sum::<T>()
}

/// Discrete L² inner product `dx^d Σ a·b` (works for node and flux slices).
pub fn inner<T: Scalar>(grid: &TorusGrid<T>, a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    grid.cell_volume() * a.iter().zip(b).map(|(x, y)| *x * *y).sum::<T>()
}

pub fn l2_norm<T: Scalar>(grid: &TorusGrid<T>, u: &[T]) -> T {
    inner(grid, u, u).sqrt()
}

pub fn sup_norm<T: Scalar>(u: &[T]) -> T {
    u.iter().fold(T::zero(), |acc, x| acc.max(x.abs()))
}

/// Discrete H¹ norm `(‖u‖² + ‖Du‖²)^{1/2}`.
pub fn h1_norm<T: Scalar>(grid: &TorusGrid<T>, u: &[T]) -> T {
    let mut du = vec![T::zero(); grid.faces()];
    gradient(grid, u, &mut du);
    (inner(grid, u, u) + inner(grid, &du, &du)).sqrt()
}

/// `‖u‖_∞ + ‖Du‖_∞` on one slice, the grid proxy for the C^{1,0} norm.
pub fn c10_norm<T: Scalar>(grid: &TorusGrid<T>, u: &[T]) -> T {
    let mut du = vec![T::zero(); grid.faces()];
    gradient(grid, u, &mut du);
    sup_norm(u) + sup_norm(&du)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn gradient_of_constant_vanishes() {
        let g = TorusGrid::new(2, 8, 2, 0.0, 1.0).unwrap();
        let u = vec![3.5; g.nodes()];
        let mut du = vec![1.0; g.faces()];
        gradient(&g, &u, &mut du);
        assert!(du.iter().all(|v| *v == 0.0));
        let mut lap = vec![1.0; g.nodes()];
        laplacian(&g, &u, &mut lap);
        assert!(lap.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn gradient_taylor_bound_at_faces() {
        let g = TorusGrid::new(1, 64, 2, 0.0, 1.0).unwrap();
        let dx = g.dx();
        let u: Vec<f64> = (0..64).map(|i| (2.0 * PI * i as f64 * dx).sin()).collect();
        let mut du = vec![0.0; 64];
        gradient(&g, &u, &mut du);
        let err = (0..64)
            .map(|i| (du[i] - 2.0 * PI * (2.0 * PI * g.face_coords(i, 0)[0]).cos()).abs())
            .fold(0.0, f64::max);
        assert!(err <= (2.0 * PI).powi(3) * dx * dx / 6.0, "err {err}");
    }

    #[test]
    fn divergence_and_laplacian_second_order() {
        for n in [32usize, 64] {
            let g = TorusGrid::new(1, n, 2, 0.0, 1.0).unwrap();
            let dx = g.dx();
            let w: Vec<f64> = (0..n).map(|i| (2.0 * PI * g.face_coords(i, 0)[0]).cos()).collect();
            let mut div = vec![0.0; n];
            divergence(&g, &w, &mut div);
            let err = (0..n)
                .map(|i| (div[i] + 2.0 * PI * (2.0 * PI * i as f64 * dx).sin()).abs())
                .fold(0.0, f64::max);
            assert!(err <= (2.0 * PI).powi(3) * dx * dx / 24.0 + 1e-12);

            let u: Vec<f64> = (0..n).map(|i| (2.0 * PI * i as f64 * dx).sin()).collect();
            let mut lap = vec![0.0; n];
            laplacian(&g, &u, &mut lap);
            let err = (0..n)
                .map(|i| (lap[i] + 4.0 * PI * PI * u[i]).abs())
                .fold(0.0, f64::max);
            assert!(err <= (2.0 * PI).powi(4) * dx * dx / 12.0 + 1e-12);
        }
    }

    #[test]
    fn adjoint_pair_and_stencil_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for dim in [1usize, 2] {
            let g = TorusGrid::new(dim, 12, 2, 0.0, 1.0).unwrap();
            for _ in 0..20 {
                let u = random(g.nodes(), &mut rng);
                let w = random(g.faces(), &mut rng);
                let mut du = vec![0.0; g.faces()];
                let mut dw = vec![0.0; g.nodes()];
                gradient(&g, &u, &mut du);
                divergence(&g, &w, &mut dw);
                assert!((inner(&g, &du, &w) + inner(&g, &u, &dw)).abs() < 1e-12);
                assert!(integrate(&g, &dw).abs() < 1e-13);

                let mut divgrad = vec![0.0; g.nodes()];
                let mut lap = vec![0.0; g.nodes()];
                divergence(&g, &du, &mut divgrad);
                laplacian(&g, &u, &mut lap);
                let diff = divgrad.iter().zip(&lap).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(diff < 1e-12 * 4.0 * (g.n_space() * g.n_space()) as f64);

                let m = random(g.nodes(), &mut rng);
                let mut am = vec![0.0; g.faces()];
                let mut atw = vec![0.0; g.nodes()];
                face_average(&g, &m, &mut am);
                face_average_adjoint(&g, &w, &mut atw);
                assert!((inner(&g, &am, &w) - inner(&g, &m, &atw)).abs() < 1e-13);
            }
        }
    }
}
