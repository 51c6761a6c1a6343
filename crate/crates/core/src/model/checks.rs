//! Sampled verification of the standing assumptions on a model.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::coupling::{Coupling, CouplingAt};
use super::hamiltonian::{newton_argmax, Hamiltonian};
use crate::grid::{ops, TorusGrid};
use crate::rng;
use crate::scalar::Scalar;

/// Radius of the momentum ball sampled by the Hamiltonian checks.
pub const P_RADIUS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvexityReport {
    pub min_eig: f64,
    pub max_eig: f64,
    pub samples: usize,
    /// `min_eig > 0`.
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LegendreReport {
    /// `max |L(x,q) + H(x,p*) + p*·q|` with `p*` from an independent Newton solve.
    pub legendre_defect: f64,
    /// `max ‖D²L(x, −D_pH(x,p)) D²H(x,p) − I‖`.
    pub hessian_product_defect: f64,
    /// `max |D_pH − central difference of H|` at step 1e-4.
    pub gradient_defect: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymmetryReport {
    /// `max |K(x,y) − K(y,x) − f(x) + f(y)|`.
    pub max_defect: f64,
    /// `max_x |∫ K(x, m, y) dm(y)|` together with `|∫ f dm|`.
    pub normalization_defect: f64,
    pub pairs: usize,
}

fn sample_point<T: Scalar, R: Rng>(dim: usize, rng: &mut R) -> ([T; 2], [T; 2]) {
    let x = [T::of(rng.gen::<f64>()), if dim == 2 { T::of(rng.gen::<f64>()) } else { T::zero() }];
    let mut p = [T::zero(); 2];
    loop {
        for pk in p.iter_mut().take(dim) {
            *pk = T::of(rng.gen_range(-P_RADIUS..P_RADIUS));
        }
        let r2: T = p.iter().map(|v| *v * *v).sum();
        if r2 <= T::of(P_RADIUS * P_RADIUS) {
            return (x, p);
        }
    }
}

/// Extreme eigenvalues of `D²_pp H` over `samples` points with `|p| ≤ 10`.
pub fn check_convexity<T: Scalar>(h: &dyn Hamiltonian<T>, dim: usize, samples: usize, seed: u64) -> ConvexityReport {
    let mut rng = rng::stream(seed, 0);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for _ in 0..samples.max(1) {
        let (x, p) = sample_point::<T, _>(dim, &mut rng);
        for k in 0..dim {
            let e = h.d2h(x, k, p[k]).as_f64();
            lo = lo.min(e);
            hi = hi.max(e);
        }
    }
    ConvexityReport { min_eig: lo, max_eig: hi, samples: samples.max(1), passed: lo > 0.0 }
}

/// Legendre, Hessian-product and gradient identities on sampled `(x, p)`.
pub fn check_legendre<T: Scalar>(h: &dyn Hamiltonian<T>, dim: usize, samples: usize, seed: u64) -> LegendreReport {
    let mut rng = rng::stream(seed, 1);
    let mut leg = 0.0f64;
    let mut prod = 0.0f64;
    let mut grad = 0.0f64;
    let step = T::of(1e-4);
    for _ in 0..samples.max(1) {
        let (x, p) = sample_point::<T, _>(dim, &mut rng);
        for k in 0..dim {
            let q = -h.dh(x, k, p[k]);
            let p_star = newton_argmax(h, x, k, q);
            let defect = h.l(x, k, q) + h.h(x, k, p_star) + p_star * q;
            leg = leg.max(defect.abs().as_f64());
            let d = h.d2l(x, k, q) * h.d2h(x, k, p[k]) - T::one();
            prod = prod.max(d.abs().as_f64());
            let fd = (h.h(x, k, p[k] + step) - h.h(x, k, p[k] - step)) / (T::of(2.0) * step);
            grad = grad.max((fd - h.dh(x, k, p[k])).abs().as_f64());
        }
    }
    let nan_to_inf = |v: f64| if v.is_nan() { f64::INFINITY } else { v };
    LegendreReport {
        legendre_defect: nan_to_inf(leg),
        hessian_product_defect: nan_to_inf(prod),
        gradient_defect: nan_to_inf(grad),
        samples: samples.max(1),
    }
}

/// Symmetry-relation and normalization defects of the coupling kernel at
/// the density slice `m`. `samples = None` brute-forces every node pair.
pub fn check_symmetry_relation<T: Scalar>(
    c: &dyn Coupling<T>,
    grid: &TorusGrid<T>,
    m: &[T],
    samples: Option<(usize, u64)>,
) -> SymmetryReport {
    let at = CouplingAt::new(c, grid, m);
    let f = at.values();
    let nodes = grid.nodes();
    let pairs: Vec<(usize, usize)> = match samples {
        None => (0..nodes).flat_map(|i| (0..nodes).map(move |j| (i, j))).collect(),
        Some((count, seed)) => {
            let mut rng = rng::stream(seed, 2);
            (0..count).map(|_| (rng.gen_range(0..nodes), rng.gen_range(0..nodes))).collect()
        }
    };
    let mut defect = T::zero();
    for &(i, j) in &pairs {
        let d = at.kernel_entry(i, j) - at.kernel_entry(j, i) - f[i] + f[j];
        defect = defect.max(d.abs());
    }
    let mut norm = ops::inner(grid, &f, m).abs();
    let rows: Vec<usize> = match samples {
        None => (0..nodes).collect(),
        Some(_) => pairs.iter().map(|p| p.0).collect(),
    };
    for i in rows {
        let row: T = (0..nodes).map(|j| at.kernel_entry(i, j) * m[j]).sum::<T>() * grid.cell_volume();
        norm = norm.max(row.abs());
    }
    SymmetryReport { max_defect: defect.as_f64(), normalization_defect: norm.as_f64(), pairs: pairs.len() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::hamiltonian::{Abs, Modulated, Quadratic, Soft};

    #[test]
    fn convexity_extremes() {
        let r = check_convexity::<f64>(&Quadratic, 2, 50, 3);
        assert_eq!((r.min_eig, r.max_eig), (1.0, 1.0));
        let r = check_convexity::<f64>(&Modulated::default(), 1, 500, 3);
        assert!(r.min_eig >= 0.9 - 1e-12 && r.max_eig <= 1.1 + 1e-12);
        assert!(!check_convexity::<f64>(&Abs, 1, 10, 3).passed);
    }

    #[test]
    fn legendre_identities() {
        for h in [&Quadratic as &dyn Hamiltonian<f64>, &Modulated::default(), &Soft] {
            let r = check_legendre(h, 2, 200, 5);
            assert!(r.legendre_defect <= 1e-8, "{r:?}");
            assert!(r.hessian_product_defect <= 1e-8, "{r:?}");
            assert!(r.gradient_defect <= 1e-6, "{r:?}");
        }
    }
}
