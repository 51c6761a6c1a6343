//! Axis-separable Hamiltonians `H(x,p) = Σ_k h(x, k, p_k)` and their Legendre
//! duals `L(x,q) = sup_p {−p·q − H(x,p)}`.

use std::fmt::Debug;

use crate::scalar::Scalar;

/// One-dimensional profile `h(x, axis, ·)` of a separable Hamiltonian.
///
/// The Lagrangian defaults to a safeguarded Newton solve of `h'(p) = −q`;
/// implementors with a closed form override [`Hamiltonian::legendre_argmax`].
pub trait Hamiltonian<T: Scalar>: Send + Sync + Debug {
    fn name(&self) -> &str;
    fn h(&self, x: [T; 2], axis: usize, p: T) -> T;
    fn dh(&self, x: [T; 2], axis: usize, p: T) -> T;
    fn d2h(&self, x: [T; 2], axis: usize, p: T) -> T;
    /// `D_x h` along each coordinate.
    fn dxh(&self, x: [T; 2], axis: usize, p: T) -> [T; 2];
    /// Declared bounds `(c_low, c_high)` on the eigenvalues of `D²_pp H`.
    fn convexity_bounds(&self) -> (T, T);

    /// Maximizer `p*` of `−p·q − h(p)`, i.e. the root of `h'(p) = −q`.
    fn legendre_argmax(&self, x: [T; 2], axis: usize, q: T) -> T {
        newton_argmax(self, x, axis, q)
    }

    fn l(&self, x: [T; 2], axis: usize, q: T) -> T {
        let p = self.legendre_argmax(x, axis, q);
        -p * q - self.h(x, axis, p)
    }
    fn dl(&self, x: [T; 2], axis: usize, q: T) -> T {
        -self.legendre_argmax(x, axis, q)
    }
    fn d2l(&self, x: [T; 2], axis: usize, q: T) -> T {
        T::one() / self.d2h(x, axis, self.legendre_argmax(x, axis, q))
    }
}

/// Full `H(x,p)` over the first `dim` axes.
pub fn hamiltonian<T: Scalar, H: Hamiltonian<T> + ?Sized>(h: &H, dim: usize, x: [T; 2], p: [T; 2]) -> T {
    (0..dim).map(|k| h.h(x, k, p[k])).sum()
}

/// Full `L(x,q)` over the first `dim` axes.
pub fn lagrangian<T: Scalar, H: Hamiltonian<T> + ?Sized>(h: &H, dim: usize, x: [T; 2], q: [T; 2]) -> T {
    (0..dim).map(|k| h.l(x, k, q[k])).sum()
}

/// Root of `h'(p) = −q` by Newton iteration safeguarded with bisection.
pub fn newton_argmax<T: Scalar, H: Hamiltonian<T> + ?Sized>(h: &H, x: [T; 2], axis: usize, q: T) -> T {
    // h' is increasing, so bracket the root and fall back to bisection when a
    // Newton step leaves the bracket.
    let target = -q;
    let g = |p: T| h.dh(x, axis, p) - target;
    let mut lo = -T::one();
    let mut hi = T::one();
    while g(lo) > T::zero() {
        lo *= T::of(2.0);
        if lo < T::of(-1e300) {
            return T::nan();
        }
    }
    while g(hi) < T::zero() {
        hi *= T::of(2.0);
        if hi > T::of(1e300) {
            return T::nan();
        }
    }
    let mut p = (lo + hi) / T::of(2.0);
    for _ in 0..200 {
        let gp = g(p);
        if gp == T::zero() {
            return p;
        }
        if gp > T::zero() {
            hi = p;
        } else {
            lo = p;
        }
        let slope = h.d2h(x, axis, p);
        let mut next = p - gp / slope;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = (lo + hi) / T::of(2.0);
        }
        if (next - p).abs() <= T::epsilon() * (T::one() + p.abs()) {
            return next;
        }
        p = next;
    }
    p
}

/// `h(p) = ½p²`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Quadratic;

impl<T: Scalar> Hamiltonian<T> for Quadratic {
    fn name(&self) -> &str {
        "quadratic"
    }
    fn h(&self, _: [T; 2], _: usize, p: T) -> T {
        p * p / T::of(2.0)
    }
    fn dh(&self, _: [T; 2], _: usize, p: T) -> T {
        p
    }
    fn d2h(&self, _: [T; 2], _: usize, _: T) -> T {
        T::one()
    }
    fn dxh(&self, _: [T; 2], _: usize, _: T) -> [T; 2] {
        [T::zero(); 2]
    }
    fn convexity_bounds(&self) -> (T, T) {
        (T::one(), T::one())
    }
    fn legendre_argmax(&self, _: [T; 2], _: usize, q: T) -> T {
        -q
    }
}

/// `h(x,p) = ½(1 + ε cos 2πx₁) p²`.
#[derive(Debug, Clone, Copy)]
pub struct Modulated {
    pub epsilon: f64,
}

impl Default for Modulated {
    fn default() -> Self {
        Self { epsilon: 0.1 }
    }
}

impl Modulated {
    fn a<T: Scalar>(&self, x: [T; 2]) -> T {
        T::one() + T::of(self.epsilon) * (T::of(2.0) * T::PI() * x[0]).cos()
    }
}

impl<T: Scalar> Hamiltonian<T> for Modulated {
    fn name(&self) -> &str {
        "modulated"
    }
    fn h(&self, x: [T; 2], _: usize, p: T) -> T {
        self.a(x) * p * p / T::of(2.0)
    }
    fn dh(&self, x: [T; 2], _: usize, p: T) -> T {
        self.a(x) * p
    }
    fn d2h(&self, x: [T; 2], _: usize, _: T) -> T {
        self.a(x)
    }
    fn dxh(&self, x: [T; 2], _: usize, p: T) -> [T; 2] {
        let two_pi = T::of(2.0) * T::PI();
        let da = -T::of(self.epsilon) * two_pi * (two_pi * x[0]).sin();
        [da * p * p / T::of(2.0), T::zero()]
    }
    fn convexity_bounds(&self) -> (T, T) {
        (T::one() - T::of(self.epsilon), T::one() + T::of(self.epsilon))
    }
    fn legendre_argmax(&self, x: [T; 2], _: usize, q: T) -> T {
        -q / self.a(x)
    }
}

/// `h(p) = ½p² + √(1+p²) − 1`: uniformly convex with `1 < h'' ≤ 2` and no
/// closed-form dual, so its Lagrangian goes through the Newton solve.
#[derive(Debug, Clone, Copy, Default)]
pub struct Soft;

impl<T: Scalar> Hamiltonian<T> for Soft {
    fn name(&self) -> &str {
        "soft"
    }
    fn h(&self, _: [T; 2], _: usize, p: T) -> T {
        p * p / T::of(2.0) + (T::one() + p * p).sqrt() - T::one()
    }
    fn dh(&self, _: [T; 2], _: usize, p: T) -> T {
        p + p / (T::one() + p * p).sqrt()
    }
    fn d2h(&self, _: [T; 2], _: usize, p: T) -> T {
        T::one() + (T::one() + p * p).powf(T::of(-1.5))
    }
    fn dxh(&self, _: [T; 2], _: usize, _: T) -> [T; 2] {
        [T::zero(); 2]
    }
    fn convexity_bounds(&self) -> (T, T) {
        (T::one(), T::of(2.0))
    }
}

/// `h(p) = |p|`. Degenerate (zero Hessian); kept as a validation fixture.
#[derive(Debug, Clone, Copy, Default)]
pub struct Abs;

impl<T: Scalar> Hamiltonian<T> for Abs {
    fn name(&self) -> &str {
        "abs"
    }
    fn h(&self, _: [T; 2], _: usize, p: T) -> T {
        p.abs()
    }
    fn dh(&self, _: [T; 2], _: usize, p: T) -> T {
        if p > T::zero() {
            T::one()
        } else if p < T::zero() {
            -T::one()
        } else {
            T::zero()
        }
    }
    fn d2h(&self, _: [T; 2], _: usize, _: T) -> T {
        T::zero()
    }
    fn dxh(&self, _: [T; 2], _: usize, _: T) -> [T; 2] {
        [T::zero(); 2]
    }
    fn convexity_bounds(&self) -> (T, T) {
        (T::zero(), T::zero())
    }
    fn legendre_argmax(&self, _: [T; 2], _: usize, q: T) -> T {
        if q.abs() <= T::one() {
            T::zero()
        } else {
            T::nan()
        }
    }
    fn l(&self, _: [T; 2], _: usize, q: T) -> T {
        if q.abs() <= T::one() {
            T::zero()
        } else {
            T::infinity()
        }
    }
    fn dl(&self, _: [T; 2], _: usize, _: T) -> T {
        T::zero()
    }
    fn d2l(&self, _: [T; 2], _: usize, _: T) -> T {
        T::infinity()
    }
}
