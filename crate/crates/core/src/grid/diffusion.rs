use super::TorusGrid;
use crate::error::{MfgError, Result};
use crate::scalar::Scalar;

/// Factorization of `I − a·Δ` on one slice, reused for every time step.
///
/// 1D uses a cyclic tridiagonal solve (Sherman–Morrison on top of a Thomas
/// factorization); 2D diagonalizes the operator in the real orthonormal
/// Fourier basis of each axis.
#[derive(Debug, Clone)]
pub struct DiffusionSolver<T> {
    grid: TorusGrid<T>,
    a: T,
    kind: Kind<T>,
}

#[derive(Debug, Clone)]
enum Kind<T> {
    Cyclic {
        /// Modified diagonal after elimination.
        diag: Vec<T>,
        /// Eliminated sub-diagonal multipliers.
        mult: Vec<T>,
        off: T,
        /// Solution of the bordered correction system B q = u.
        q: Vec<T>,
        v_last: T,
        denom: T,
    },
    Fourier {
        /// Row-major N×N orthonormal basis; column k is mode k.
        basis: Vec<T>,
        /// Eigenvalue of `I − aΔ` for each (k0, k1).
        eig: Vec<T>,
    },
}

impl<T: Scalar> DiffusionSolver<T> {
    /// Factorizes `I − a·Δ`; `a ≥ 0`.
    pub fn new(grid: &TorusGrid<T>, a: T) -> Result<Self> {
        if a < T::zero() || !a.is_finite() {
            return Err(MfgError::InvalidParameter(format!("diffusion coefficient {a}")));
        }
        let n = grid.n_space();
        let r = a / (grid.dx() * grid.dx());
        let kind = if grid.dim() == 1 {
            let d = T::one() + T::of(2.0) * r;
            let o = -r;
            if o == T::zero() {
                Kind::Cyclic {
                    diag: vec![T::one(); n],
                    mult: vec![T::zero(); n],
                    off: T::zero(),
                    q: vec![T::zero(); n],
                    v_last: T::zero(),
                    denom: T::one(),
                }
            } else {
                // A = B + u vᵀ with u = (γ, 0, …, 0, o), v = (1, 0, …, 0, o/γ).
                let gamma = -d;
                let mut b = vec![d; n];
                b[0] = d - gamma;
                b[n - 1] = d - o * o / gamma;
                let (diag, mult) = thomas_factor(&b, o)?;
                let mut u = vec![T::zero(); n];
                u[0] = gamma;
                u[n - 1] = o;
                let q = thomas_solve(&diag, &mult, o, &u);
                let v_last = o / gamma;
                let denom = T::one() + q[0] + v_last * q[n - 1];
                if denom.abs() < T::epsilon() {
                    return Err(MfgError::SingularOperator("cyclic correction".into()));
                }
                Kind::Cyclic { diag, mult, off: o, q, v_last, denom }
            }
        } else {
            let basis = fourier_basis::<T>(n);
            let lam: Vec<T> = (0..n).map(|k| mode_eigenvalue::<T>(n, k)).collect();
            let mut eig = vec![T::zero(); n * n];
            for k1 in 0..n {
                for k0 in 0..n {
                    eig[k0 + n * k1] = T::one() + r * (lam[k0] + lam[k1]);
                }
            }
            Kind::Fourier { basis, eig }
        };
        Ok(Self { grid: *grid, a, kind })
    }

    /// Solves `(I − aΔ) x = rhs` in place, with one step of iterative
    /// refinement.
    pub fn solve_in_place(&self, x: &mut [T]) {
        let rhs = x.to_vec();
        self.solve_once(x);
        let mut lap = vec![T::zero(); x.len()];
        super::ops::laplacian(&self.grid, x, &mut lap);
        let mut res: Vec<T> = (0..x.len()).map(|i| rhs[i] - (x[i] - self.a * lap[i])).collect();
        self.solve_once(&mut res);
        for (v, r) in x.iter_mut().zip(&res) {
            *v += *r;
        }
    }

    fn solve_once(&self, x: &mut [T]) {
        match &self.kind {
            Kind::Cyclic { diag, mult, off, q, v_last, denom } => {
                let y = thomas_solve(diag, mult, *off, x);
                let n = y.len();
                let coef = (y[0] + *v_last * y[n - 1]) / *denom;
                for i in 0..n {
                    x[i] = y[i] - coef * q[i];
                }
            }
            Kind::Fourier { basis, eig } => {
                let n = self.grid.n_space();
                let mut hat = transform(basis, n, x, true);
                for (h, e) in hat.iter_mut().zip(eig) {
                    *h /= *e;
                }
                let back = transform(basis, n, &hat, false);
                x.copy_from_slice(&back);
            }
        }
    }
}

fn thomas_factor<T: Scalar>(b: &[T], off: T) -> Result<(Vec<T>, Vec<T>)> {
    let n = b.len();
    let mut diag = vec![T::zero(); n];
    let mut mult = vec![T::zero(); n];
    diag[0] = b[0];
    for i in 1..n {
        if diag[i - 1].abs() < T::epsilon() {
            return Err(MfgError::SingularOperator(format!("zero pivot at row {}", i - 1)));
        }
        mult[i] = off / diag[i - 1];
        diag[i] = b[i] - mult[i] * off;
    }
    Ok((diag, mult))
}

fn thomas_solve<T: Scalar>(diag: &[T], mult: &[T], off: T, rhs: &[T]) -> Vec<T> {
    let n = diag.len();
    let mut y = rhs.to_vec();
    for i in 1..n {
        let prev = y[i - 1];
        y[i] -= mult[i] * prev;
    }
    y[n - 1] /= diag[n - 1];
    for i in (0..n - 1).rev() {
        y[i] = (y[i] - off * y[i + 1]) / diag[i];
    }
    y
}

/// Eigenvalue of the 1D negative Laplacian (times dx²) for Fourier mode `k`.
fn mode_eigenvalue<T: Scalar>(n: usize, k: usize) -> T {
    let freq = k.min(n - k);
    let s = (T::PI() * T::of_usize(freq) / T::of_usize(n)).sin();
    T::of(4.0) * s * s
}

/// Real orthonormal Fourier basis: constant, cos/sin pairs, alternating mode for even N.
fn fourier_basis<T: Scalar>(n: usize) -> Vec<T> {
    let mut q = vec![T::zero(); n * n];
    let nf = T::of_usize(n);
    let c0 = T::one() / nf.sqrt();
    let c = (T::of(2.0) / nf).sqrt();
    for j in 0..n {
        for k in 0..n {
            let val = if k == 0 {
                c0
            } else if 2 * k == n {
                if j % 2 == 0 { c0 } else { -c0 }
            } else {
                let freq = k.min(n - k);
                let phase = T::of(2.0) * T::PI() * T::of_usize((freq * j) % n) / nf;
                if k < n - k { c * phase.cos() } else { c * phase.sin() }
            };
            q[j * n + k] = val;
        }
    }
    q
}

/// Applies Qᵀ (forward) or Q (backward) along both axes of an N×N slice.
fn transform<T: Scalar>(q: &[T], n: usize, x: &[T], forward: bool) -> Vec<T> {
    let coef = |j: usize, k: usize| if forward { q[j * n + k] } else { q[k * n + j] };
    let mut tmp = vec![T::zero(); n * n];
    for i1 in 0..n {
        for k0 in 0..n {
            let mut acc = T::zero();
            for i0 in 0..n {
                acc += coef(i0, k0) * x[i0 + n * i1];
            }
            tmp[k0 + n * i1] = acc;
        }
    }
    let mut out = vec![T::zero(); n * n];
    for k1 in 0..n {
        for k0 in 0..n {
            let mut acc = T::zero();
            for i1 in 0..n {
                acc += coef(i1, k1) * tmp[k0 + n * i1];
            }
            out[k0 + n * k1] = acc;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::ops;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn solves_reproduce_rhs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (dim, n) in [(1usize, 5usize), (1, 16), (2, 6), (2, 7)] {
            let g = TorusGrid::new(dim, n, 4, 0.0, 1.0).unwrap();
            for a in [0.0, 1e-3, 0.5] {
                let s = DiffusionSolver::new(&g, a).unwrap();
                let rhs: Vec<f64> = (0..g.nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let mut x = rhs.clone();
                s.solve_in_place(&mut x);
                let mut lap = vec![0.0; g.nodes()];
                ops::laplacian(&g, &x, &mut lap);
                let res = (0..g.nodes()).map(|i| (x[i] - a * lap[i] - rhs[i]).abs()).fold(0.0, f64::max);
                assert!(res < 1e-11, "dim {dim} n {n} a {a}: {res}");
                assert!((ops::integrate(&g, &x) - ops::integrate(&g, &rhs)).abs() < 1e-13);
            }
        }
    }
}
