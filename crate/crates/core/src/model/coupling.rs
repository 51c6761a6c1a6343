//! Potential couplings `F(m)` on grid densities, their flat derivatives
//! `f = δF/δm` and measure-derivative kernels `K = δf/δm`.
//!
//! Implementors supply the raw quantities `f̃_i = ∂F/∂m_i / dx^d` and
//! `S_ij = ∂²F/∂m_i∂m_j / dx^{2d}`. [`CouplingAt`] turns them into the
//! normalized objects, `∫ f dm = 0` and `∫ K(x, m, y) dm(y) = 0`, which
//! satisfy `K(x,y) = K(y,x) + f(x) − f(y)` identically.

use std::fmt::Debug;

use crate::grid::{ops, TorusGrid};
use crate::scalar::Scalar;

pub trait Coupling<T: Scalar>: Send + Sync + Debug {
    fn name(&self) -> &str;
    /// `F(m)` for one density slice.
    fn potential(&self, grid: &TorusGrid<T>, m: &[T]) -> T;
    /// `f̃_i = ∂F/∂m_i / dx^d`.
    fn raw_derivative(&self, grid: &TorusGrid<T>, m: &[T], out: &mut [T]);
    /// `(Sμ)_i = dx^d Σ_j S_ij μ_j`.
    fn raw_hessian_apply(&self, grid: &TorusGrid<T>, m: &[T], mu: &[T], out: &mut [T]);
    /// `S_ij`.
    fn raw_hessian_entry(&self, grid: &TorusGrid<T>, m: &[T], i: usize, j: usize) -> T;
    /// True when `F` is identically zero; solvers skip work.
    fn is_zero(&self) -> bool {
        false
    }
    /// Whether `F(m) = F(τ♯m)` for the reflection `x₁ ↦ −x₁`.
    fn reflection_invariant(&self) -> bool {
        false
    }
}

/// Normalized derivative and kernel of a coupling at a fixed density slice.
#[derive(Debug, Clone)]
pub struct CouplingAt<'a, T: Scalar> {
    coupling: &'a dyn Coupling<T>,
    grid: TorusGrid<T>,
    m: Vec<T>,
    raw: Vec<T>,
    sm: Vec<T>,
    mean_raw: T,
    offset: T,
}

impl<'a, T: Scalar> CouplingAt<'a, T> {
    pub fn new(coupling: &'a dyn Coupling<T>, grid: &TorusGrid<T>, m: &[T]) -> Self {
        let nodes = grid.nodes();
        let mut raw = vec![T::zero(); nodes];
        let mut sm = vec![T::zero(); nodes];
        if !coupling.is_zero() {
            coupling.raw_derivative(grid, m, &mut raw);
            coupling.raw_hessian_apply(grid, m, m, &mut sm);
        }
        let mean_raw = ops::inner(grid, &raw, m);
        let offset = ops::inner(grid, &sm, m) + mean_raw;
        Self { coupling, grid: *grid, m: m.to_vec(), raw, sm, mean_raw, offset }
    }

    /// `F(m)`.
    pub fn potential(&self) -> T {
        if self.coupling.is_zero() {
            return T::zero();
        }
        self.coupling.potential(&self.grid, &self.m)
    }

    /// Normalized `f(x_i, m) = f̃_i − ∫ f̃ dm`.
    pub fn value(&self, out: &mut [T]) {
        for (o, r) in out.iter_mut().zip(&self.raw) {
            *o = *r - self.mean_raw;
        }
    }

    pub fn values(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.raw.len()];
        self.value(&mut out);
        out
    }

    /// Normalized kernel `K(x_i, m, y_j)`.
    pub fn kernel_entry(&self, i: usize, j: usize) -> T {
        let s = if self.coupling.is_zero() {
            T::zero()
        } else {
            self.coupling.raw_hessian_entry(&self.grid, &self.m, i, j)
        };
        s - self.sm[j] - self.raw[j] - self.sm[i] + self.offset
    }

    /// `(Kμ)_i = dx^d Σ_j K(x_i, m, y_j) μ_j` for any `μ`.
    pub fn kernel_apply(&self, mu: &[T], out: &mut [T]) {
        if self.coupling.is_zero() {
            out.iter_mut().for_each(|o| *o = T::zero());
            return;
        }
        self.coupling.raw_hessian_apply(&self.grid, &self.m, mu, out);
        let g = &self.grid;
        let shift = ops::inner(g, &self.sm, mu) + ops::inner(g, &self.raw, mu);
        let mass = ops::integrate(g, mu);
        for (o, s) in out.iter_mut().zip(&self.sm) {
            *o += (self.offset - *s) * mass - shift;
        }
    }
}

/// `F ≡ 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Zero;

impl<T: Scalar> Coupling<T> for Zero {
    fn name(&self) -> &str {
        "none"
    }
    fn potential(&self, _: &TorusGrid<T>, _: &[T]) -> T {
        T::zero()
    }
    fn raw_derivative(&self, _: &TorusGrid<T>, _: &[T], out: &mut [T]) {
        out.iter_mut().for_each(|o| *o = T::zero());
    }
    fn raw_hessian_apply(&self, _: &TorusGrid<T>, _: &[T], _: &[T], out: &mut [T]) {
        out.iter_mut().for_each(|o| *o = T::zero());
    }
    fn raw_hessian_entry(&self, _: &TorusGrid<T>, _: &[T], _: usize, _: usize) -> T {
        T::zero()
    }
    fn is_zero(&self) -> bool {
        true
    }
    fn reflection_invariant(&self) -> bool {
        true
    }
}

/// Local monotone coupling `F(m) = θ/2 ∫ m²`, so `f(x,m) = θ m(x)` up to the
/// normalizing constant.
#[derive(Debug, Clone, Copy)]
pub struct Local {
    pub strength: f64,
}

impl<T: Scalar> Coupling<T> for Local {
    fn name(&self) -> &str {
        "monotone"
    }
    fn potential(&self, grid: &TorusGrid<T>, m: &[T]) -> T {
        T::of(self.strength) / T::of(2.0) * ops::inner(grid, m, m)
    }
    fn raw_derivative(&self, _: &TorusGrid<T>, m: &[T], out: &mut [T]) {
        let s = T::of(self.strength);
        for (o, v) in out.iter_mut().zip(m) {
            *o = s * *v;
        }
    }
    fn raw_hessian_apply(&self, _: &TorusGrid<T>, _: &[T], mu: &[T], out: &mut [T]) {
        let s = T::of(self.strength);
        for (o, v) in out.iter_mut().zip(mu) {
            *o = s * *v;
        }
    }
    fn raw_hessian_entry(&self, grid: &TorusGrid<T>, _: &[T], i: usize, j: usize) -> T {
        if i == j {
            T::of(self.strength) / grid.cell_volume()
        } else {
            T::zero()
        }
    }
    fn reflection_invariant(&self) -> bool {
        true
    }
}

/// Nonlocal monotone coupling `F(m) = θ/2 ⟨m, ρ⋆m⟩` with the even, positive
/// definite kernel `ρ(z) = exp(κ Σ_k (cos 2πz_k − 1))`.
#[derive(Debug, Clone, Copy)]
pub struct Smoothed {
    pub strength: f64,
    pub kappa: f64,
}

impl Smoothed {
    fn rho<T: Scalar>(&self, grid: &TorusGrid<T>, i: usize, j: usize) -> T {
        let n = grid.n_space();
        let a = grid.multi_index(i);
        let b = grid.multi_index(j);
        let two_pi = T::of(2.0) * T::PI();
        let mut e = T::zero();
        for k in 0..grid.dim() {
            let off = (a[k] + n - b[k]) % n;
            e += (two_pi * T::of_usize(off) / T::of_usize(n)).cos() - T::one();
        }
        (T::of(self.kappa) * e).exp()
    }

    fn table<T: Scalar>(&self, grid: &TorusGrid<T>) -> Vec<T> {
        (0..grid.nodes()).map(|off| self.rho(grid, off, 0)).collect()
    }

    fn convolve<T: Scalar>(&self, grid: &TorusGrid<T>, m: &[T], out: &mut [T]) {
        let table = self.table(grid);
        let n = grid.n_space();
        let vol = grid.cell_volume();
        for (i, o) in out.iter_mut().enumerate() {
            let a = grid.multi_index(i);
            let mut acc = T::zero();
            for (j, v) in m.iter().enumerate() {
                let b = grid.multi_index(j);
                let off = grid.node_index([(a[0] + n - b[0]) % n, (a[1] + n - b[1]) % n]);
                acc += table[off] * *v;
            }
            *o = vol * acc;
        }
    }
}

impl<T: Scalar> Coupling<T> for Smoothed {
    fn name(&self) -> &str {
        "smoothed"
    }
    fn potential(&self, grid: &TorusGrid<T>, m: &[T]) -> T {
        let mut c = vec![T::zero(); m.len()];
        self.convolve(grid, m, &mut c);
        T::of(self.strength) / T::of(2.0) * ops::inner(grid, m, &c)
    }
    fn raw_derivative(&self, grid: &TorusGrid<T>, m: &[T], out: &mut [T]) {
        self.convolve(grid, m, out);
        out.iter_mut().for_each(|o| *o *= T::of(self.strength));
    }
    fn raw_hessian_apply(&self, grid: &TorusGrid<T>, _: &[T], mu: &[T], out: &mut [T]) {
        self.convolve(grid, mu, out);
        out.iter_mut().for_each(|o| *o *= T::of(self.strength));
    }
    fn raw_hessian_entry(&self, grid: &TorusGrid<T>, _: &[T], i: usize, j: usize) -> T {
        T::of(self.strength) * self.rho(grid, i, j)
    }
    fn reflection_invariant(&self) -> bool {
        true
    }
}

/// Mass-independent coupling `F(m) = θ ∫ cos(2πx₁) dm`: `f` does not
/// depend on `m` and the raw Hessian vanishes.
#[derive(Debug, Clone, Copy)]
pub struct External {
    pub strength: f64,
}

impl External {
    fn v<T: Scalar>(&self, grid: &TorusGrid<T>, i: usize) -> T {
        T::of(self.strength) * (T::of(2.0) * T::PI() * grid.coords(i)[0]).cos()
    }
}

impl<T: Scalar> Coupling<T> for External {
    fn name(&self) -> &str {
        "external"
    }
    fn potential(&self, grid: &TorusGrid<T>, m: &[T]) -> T {
        grid.cell_volume() * m.iter().enumerate().map(|(i, v)| self.v(grid, i) * *v).sum::<T>()
    }
    fn raw_derivative(&self, grid: &TorusGrid<T>, _: &[T], out: &mut [T]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.v(grid, i);
        }
    }
    fn raw_hessian_apply(&self, _: &TorusGrid<T>, _: &[T], _: &[T], out: &mut [T]) {
        out.iter_mut().for_each(|o| *o = T::zero());
    }
    fn raw_hessian_entry(&self, _: &TorusGrid<T>, _: &[T], _: usize, _: usize) -> T {
        T::zero()
    }
    fn reflection_invariant(&self) -> bool {
        true
    }
}

/// Reflection-invariant coupling favouring asymmetric densities:
/// `F(m) = θ Φ(S(m))` with `S(m) = ∫ sin(2πx₁) dm` and `Φ(s) = (1 − s²)²`.
///
/// `S` is accumulated over reflection pairs so that it vanishes exactly on
/// symmetric grid densities; `f` then vanishes too and the symmetric
/// equilibrium is the heat flow with `u ≡ 0`.
#[derive(Debug, Clone, Copy)]
pub struct DoubleWell {
    pub strength: f64,
}

impl DoubleWell {
    pub fn phi<T: Scalar>(s: T) -> T {
        let a = T::one() - s * s;
        a * a
    }
    pub fn dphi<T: Scalar>(s: T) -> T {
        -T::of(4.0) * s * (T::one() - s * s)
    }
    pub fn d2phi<T: Scalar>(s: T) -> T {
        T::of(12.0) * s * s - T::of(4.0)
    }

    /// `sin(2πx₁)` on the nodes, exactly odd under the grid reflection.
    pub fn odd_profile<T: Scalar>(grid: &TorusGrid<T>) -> Vec<T> {
        let mut s = vec![T::zero(); grid.nodes()];
        for i in 0..grid.nodes() {
            let r = grid.reflect(i);
            if i < r {
                let v = (T::of(2.0) * T::PI() * grid.coords(i)[0]).sin();
                s[i] = v;
                s[r] = -v;
            }
        }
        s
    }

    /// `S(m)`, summed as `Σ_{i<τi} s_i (m_i − m_τi)`.
    pub fn moment<T: Scalar>(grid: &TorusGrid<T>, m: &[T]) -> T {
        let s = Self::odd_profile(grid);
        let mut acc = T::zero();
        for i in 0..grid.nodes() {
            let r = grid.reflect(i);
            if i < r {
                acc += s[i] * (m[i] - m[r]);
            }
        }
        grid.cell_volume() * acc
    }
}

impl<T: Scalar> Coupling<T> for DoubleWell {
    fn name(&self) -> &str {
        "double-well"
    }
    fn potential(&self, grid: &TorusGrid<T>, m: &[T]) -> T {
        T::of(self.strength) * Self::phi(Self::moment(grid, m))
    }
    fn raw_derivative(&self, grid: &TorusGrid<T>, m: &[T], out: &mut [T]) {
        let c = T::of(self.strength) * Self::dphi(Self::moment(grid, m));
        for (o, s) in out.iter_mut().zip(Self::odd_profile(grid)) {
            *o = c * s;
        }
    }
    fn raw_hessian_apply(&self, grid: &TorusGrid<T>, m: &[T], mu: &[T], out: &mut [T]) {
        let c = T::of(self.strength) * Self::d2phi(Self::moment(grid, m)) * Self::moment(grid, mu);
        for (o, s) in out.iter_mut().zip(Self::odd_profile(grid)) {
            *o = c * s;
        }
    }
    fn raw_hessian_entry(&self, grid: &TorusGrid<T>, m: &[T], i: usize, j: usize) -> T {
        let s = Self::odd_profile(grid);
        T::of(self.strength) * Self::d2phi(Self::moment(grid, m)) * s[i] * s[j]
    }
    fn reflection_invariant(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> TorusGrid<f64> {
        TorusGrid::new(1, 16, 2, 0.0, 1.0).unwrap()
    }

    fn density(g: &TorusGrid<f64>) -> Vec<f64> {
        (0..g.nodes())
            .map(|i| {
                let x = g.coords(i)[0];
                1.0 + 0.3 * (2.0 * std::f64::consts::PI * x).sin() + 0.2 * (4.0 * std::f64::consts::PI * x).cos()
            })
            .collect()
    }

    #[test]
    fn raw_derivative_matches_finite_differences() {
        let g = grid();
        let m = density(&g);
        let couplings: Vec<Box<dyn Coupling<f64>>> = vec![
            Box::new(Local { strength: 1.5 }),
            Box::new(Smoothed { strength: 1.0, kappa: 2.0 }),
            Box::new(External { strength: 0.7 }),
            Box::new(DoubleWell { strength: 3.0 }),
        ];
        for c in &couplings {
            let mut raw = vec![0.0; g.nodes()];
            c.raw_derivative(&g, &m, &mut raw);
            for i in [0, 3, 9] {
                let h = 1e-6;
                let mut p = m.clone();
                p[i] += h;
                let mut q = m.clone();
                q[i] -= h;
                let fd = (c.potential(&g, &p) - c.potential(&g, &q)) / (2.0 * h) / g.cell_volume();
                assert!((fd - raw[i]).abs() < 1e-6 * (1.0 + raw[i].abs()), "{} {fd} {}", c.name(), raw[i]);
            }
        }
    }

    #[test]
    fn kernel_apply_matches_entries() {
        let g = grid();
        let m = density(&g);
        let c = DoubleWell { strength: 2.0 };
        let at = CouplingAt::new(&c, &g, &m);
        let mu: Vec<f64> = (0..g.nodes()).map(|i| (i as f64 * 0.7).sin()).collect();
        let mut out = vec![0.0; g.nodes()];
        at.kernel_apply(&mu, &mut out);
        for i in 0..g.nodes() {
            let direct: f64 = (0..g.nodes()).map(|j| at.kernel_entry(i, j) * mu[j]).sum::<f64>() * g.cell_volume();
            assert!((direct - out[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn double_well_moment_vanishes_on_symmetric_densities() {
        let g = TorusGrid::<f64>::new(2, 12, 2, 0.0, 1.0).unwrap();
        let raw: Vec<f64> = (0..g.nodes())
            .map(|i| {
                let x = g.coords(i);
                1.0 + 0.4 * (2.0 * std::f64::consts::PI * x[0]).cos() * (2.0 * std::f64::consts::PI * x[1]).sin()
            })
            .collect();
        let m: Vec<f64> = (0..g.nodes()).map(|i| 0.5 * (raw[i] + raw[g.reflect(i)])).collect();
        assert_eq!(DoubleWell::moment(&g, &m), 0.0);
        let at = CouplingAt::new(&DoubleWell { strength: 5.0 }, &g, &m);
        assert!(at.values().iter().all(|v| *v == 0.0));
    }
}
