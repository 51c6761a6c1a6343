use super::{ops, TorusGrid};
use crate::error::{MfgError, Result};
use crate::scalar::Scalar;

/// Space–time grid function, time-major: one contiguous block per slice.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField<T> {
    grid: TorusGrid<T>,
    values: Vec<T>,
}

impl<T: Scalar> ScalarField<T> {
    pub fn zeros(grid: TorusGrid<T>) -> Self {
        Self { values: vec![T::zero(); grid.nodes() * grid.slices()], grid }
    }

    pub fn from_values(grid: TorusGrid<T>, values: Vec<T>) -> Result<Self> {
        let expected = grid.nodes() * grid.slices();
        if values.len() != expected {
            return Err(MfgError::ShapeMismatch { expected, got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(MfgError::NonFinite("scalar field"));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f(x, t)` at every node and slice.
    pub fn from_fn(grid: TorusGrid<T>, f: impl Fn([T; 2], T) -> T) -> Self {
        let mut out = Self::zeros(grid);
        for n in 0..grid.slices() {
            let t = grid.time(n);
            for (i, v) in out.slice_mut(n).iter_mut().enumerate() {
                *v = f(grid.coords(i), t);
            }
        }
        out
    }

    /// Same slice repeated at every time.
    pub fn constant_in_time(grid: TorusGrid<T>, slice: &[T]) -> Self {
        let mut out = Self::zeros(grid);
        for n in 0..grid.slices() {
            out.slice_mut(n).copy_from_slice(slice);
        }
        out
    }

    pub fn grid(&self) -> &TorusGrid<T> {
        &self.grid
    }
    pub fn values(&self) -> &[T] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn slice(&self, n: usize) -> &[T] {
        let len = self.grid.nodes();
        &self.values[n * len..(n + 1) * len]
    }

    pub fn slice_mut(&mut self, n: usize) -> &mut [T] {
        let len = self.grid.nodes();
        &mut self.values[n * len..(n + 1) * len]
    }

    /// Copy of slices `from..=K` on the restricted grid.
    pub fn restrict(&self, from: usize) -> Result<Self> {
        let grid = self.grid.restrict(from)?;
        let start = from * self.grid.nodes();
        Ok(Self { grid, values: self.values[start..].to_vec() })
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: T, other: &Self, b: T) -> Self {
        debug_assert!(self.grid.same_shape(&other.grid));
        let values = self.values.iter().zip(&other.values).map(|(x, y)| a * *x + b * *y).collect();
        Self { grid: self.grid, values }
    }

    pub fn sup_norm(&self) -> T {
        ops::sup_norm(&self.values)
    }

    /// `sup_t ‖self(t) − other(t)‖_∞`.
    pub fn sup_distance(&self, other: &Self) -> T {
        self.values
            .iter()
            .zip(&other.values)
            .fold(T::zero(), |acc, (a, b)| acc.max((*a - *b).abs()))
    }

    /// `sup_t ‖self(t) − other(t)‖₂` (spatial l2 per slice).
    pub fn sup_l2_distance(&self, other: &Self) -> T {
        let nodes = self.grid.nodes();
        let vol = self.grid.cell_volume();
        self.values
            .chunks(nodes)
            .zip(other.values.chunks(nodes))
            .map(|(a, b)| (vol * a.iter().zip(b).map(|(x, y)| (*x - *y) * (*x - *y)).sum::<T>()).sqrt())
            .fold(T::zero(), T::max)
    }

    /// Sup over slices of the C^{1,0} proxy `‖u‖_∞ + ‖Du‖_∞`.
    pub fn c10_norm(&self) -> T {
        let mut sup_u = T::zero();
        let mut sup_du = T::zero();
        let mut du = vec![T::zero(); self.grid.faces()];
        for n in 0..self.grid.slices() {
            let s = self.slice(n);
            ops::gradient(&self.grid, s, &mut du);
            sup_u = sup_u.max(ops::sup_norm(s));
            sup_du = sup_du.max(ops::sup_norm(&du));
        }
        sup_u + sup_du
    }

    /// Spatial gradient of every slice.
    pub fn gradient(&self) -> FluxField<T> {
        let mut out = FluxField::zeros(self.grid);
        for n in 0..self.grid.slices() {
            ops::gradient(&self.grid, self.slice(n), out.slice_mut(n));
        }
        out
    }
}

/// Nonnegative space–time field with unit mass on every slice.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField<T>(ScalarField<T>);

impl<T: Scalar> DensityField<T> {
    /// Mass tolerance of the unit-mass invariant.
    pub const MASS_TOL: f64 = 1e-12;

    /// Validates nonnegativity and unit mass slice by slice.
    pub fn new(field: ScalarField<T>) -> Result<Self> {
        check_density(field.grid(), field.values())?;
        Ok(Self(field))
    }

    /// Wraps without validation; solvers that preserve the invariants by
    /// construction use this.
    pub(crate) fn new_unchecked(field: ScalarField<T>) -> Self {
        Self(field)
    }

    /// Density equal to `slice` (normalized to unit mass) at every time.
    pub fn constant_in_time(grid: TorusGrid<T>, slice: &[T]) -> Result<Self> {
        Self::new(ScalarField::constant_in_time(grid, slice))
    }

    pub fn field(&self) -> &ScalarField<T> {
        &self.0
    }
    pub fn into_field(self) -> ScalarField<T> {
        self.0
    }
    pub fn grid(&self) -> &TorusGrid<T> {
        self.0.grid()
    }
    pub fn slice(&self, n: usize) -> &[T] {
        self.0.slice(n)
    }
    pub fn values(&self) -> &[T] {
        self.0.values()
    }

    pub fn restrict(&self, from: usize) -> Result<Self> {
        Ok(Self(self.0.restrict(from)?))
    }

    /// Convex combination `(1−λ)·self + λ·other`; stays a density.
    pub fn blend(&self, other: &Self, lambda: T) -> Self {
        Self(self.0.combine(T::one() - lambda, &other.0, lambda))
    }

    /// Largest deviation of the per-slice mass from one.
    pub fn mass_defect(&self) -> T {
        let g = self.grid();
        (0..g.slices())
            .map(|n| (ops::integrate(g, self.slice(n)) - T::one()).abs())
            .fold(T::zero(), T::max)
    }

    pub fn min_value(&self) -> T {
        self.values().iter().copied().fold(T::infinity(), T::min)
    }
}

/// Checks the density invariants on every slice of `values`.
pub fn check_density<T: Scalar>(grid: &TorusGrid<T>, values: &[T]) -> Result<()> {
    let nodes = grid.nodes();
    for (n, slice) in values.chunks(nodes).enumerate() {
        if let Some((i, v)) = slice.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < T::zero()) {
            return Err(MfgError::Density(format!("value {v} at slice {n}, node {i} is negative or non-finite")));
        }
        let mass = ops::integrate(grid, slice);
        if (mass - T::one()).abs() > T::of(DensityField::<T>::MASS_TOL) {
            return Err(MfgError::Density(format!("mass {mass} at slice {n} differs from 1")));
        }
    }
    Ok(())
}

/// Rescales a nonnegative node slice to unit mass.
pub fn normalize_mass<T: Scalar>(grid: &TorusGrid<T>, slice: &mut [T]) -> Result<()> {
    if slice.iter().any(|v| *v < T::zero() || !v.is_finite()) {
        return Err(MfgError::Density("cannot normalize a slice with negative values".into()));
    }
    let mass = ops::integrate(grid, slice);
    if !(mass > T::zero()) {
        return Err(MfgError::Density("zero total mass".into()));
    }
    slice.iter_mut().for_each(|v| *v /= mass);
    Ok(())
}

/// Face-valued space–time field (fluxes w, z and drifts b); d components per face.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxField<T> {
    grid: TorusGrid<T>,
    values: Vec<T>,
}

impl<T: Scalar> FluxField<T> {
    pub fn zeros(grid: TorusGrid<T>) -> Self {
        Self { values: vec![T::zero(); grid.faces() * grid.slices()], grid }
    }

    pub fn from_values(grid: TorusGrid<T>, values: Vec<T>) -> Result<Self> {
        let expected = grid.faces() * grid.slices();
        if values.len() != expected {
            return Err(MfgError::ShapeMismatch { expected, got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(MfgError::NonFinite("flux field"));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &TorusGrid<T> {
        &self.grid
    }
    pub fn values(&self) -> &[T] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn slice(&self, n: usize) -> &[T] {
        let len = self.grid.faces();
        &self.values[n * len..(n + 1) * len]
    }

    pub fn slice_mut(&mut self, n: usize) -> &mut [T] {
        let len = self.grid.faces();
        &mut self.values[n * len..(n + 1) * len]
    }

    pub fn restrict(&self, from: usize) -> Result<Self> {
        let grid = self.grid.restrict(from)?;
        let start = from * self.grid.faces();
        Ok(Self { grid, values: self.values[start..].to_vec() })
    }

    pub fn combine(&self, a: T, other: &Self, b: T) -> Self {
        let values = self.values.iter().zip(&other.values).map(|(x, y)| a * *x + b * *y).collect();
        Self { grid: self.grid, values }
    }

    pub fn sup_norm(&self) -> T {
        ops::sup_norm(&self.values)
    }

    /// Divergence of every slice.
    pub fn divergence(&self) -> ScalarField<T> {
        let mut out = ScalarField::zeros(self.grid);
        for n in 0..self.grid.slices() {
            ops::divergence(&self.grid, self.slice(n), out.slice_mut(n));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn density_validation() {
        let g = TorusGrid::<f64>::new(1, 8, 2, 0.0, 1.0).unwrap();
        assert!(DensityField::new(ScalarField::from_fn(g, |_, _| 1.0)).is_ok());
        assert!(DensityField::new(ScalarField::from_fn(g, |_, _| 2.0)).is_err());
        let mut bad = vec![1.0; 8];
        bad[0] = -0.5;
        bad[1] = 2.5;
        assert!(DensityField::constant_in_time(g, &bad).is_err());
        let d = DensityField::new(ScalarField::from_fn(g, |x, _| 1.0 + 0.5 * (6.283185307179586 * x[0]).cos())).unwrap();
        assert!(d.mass_defect() < 1e-12);
    }

    #[test]
    fn restriction_and_distances() {
        let g = TorusGrid::<f64>::new(1, 8, 4, 0.0, 1.0).unwrap();
        let a = ScalarField::from_fn(g, |x, t| x[0] + t);
        let r = a.restrict(2).unwrap();
        assert_eq!(r.grid().n_time(), 2);
        assert_eq!(r.slice(0), a.slice(2));
        let b = a.combine(1.0, &ScalarField::from_fn(g, |_, _| 0.25), 1.0);
        assert!((a.sup_distance(&b) - 0.25).abs() < 1e-15);
        assert!((a.sup_l2_distance(&b) - 0.25).abs() < 1e-15);
    }
}
