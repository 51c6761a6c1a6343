use mfg_lab::grid::{normalize_mass, ops};
use mfg_lab::model::checks::{check_convexity, check_legendre, check_symmetry_relation};
use mfg_lab::model::hamiltonian::{hamiltonian, lagrangian};
use mfg_lab::model::{CouplingAt, CouplingKind, HamiltonianKind, InitialDensity};
use mfg_lab::Grid;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn convex_hamiltonians_satisfy_the_legendre_identities() {
    for kind in HamiltonianKind::ALL {
        let h = kind.build::<f64>();
        if kind == HamiltonianKind::Abs {
            assert!(!check_convexity(h.as_ref(), 1, 200, 1).passed);
            continue;
        }
        for dim in [1, 2] {
            assert!(check_convexity(h.as_ref(), dim, 200, 1).passed, "{kind:?}");
            let r = check_legendre(h.as_ref(), dim, 200, 2);
            assert!(r.legendre_defect <= 1e-8, "{kind:?}: {r:?}");
            assert!(r.hessian_product_defect <= 1e-8, "{kind:?}: {r:?}");
            assert!(r.gradient_defect <= 1e-6, "{kind:?}: {r:?}");
        }
    }
}

#[test]
fn quadratic_hamiltonian_closed_form() {
    let h = HamiltonianKind::Quadratic.build::<f64>();
    let (x, p) = ([0.3, 0.7], [1.5, -2.0]);
    assert!((hamiltonian(h.as_ref(), 2, x, p) - 0.5 * (1.5f64.powi(2) + 4.0)).abs() < 1e-14);
    assert!((lagrangian(h.as_ref(), 2, x, [1.5, -2.0]) - 0.5 * 6.25).abs() < 1e-12);
}

fn random_density(g: &Grid, seed: u64) -> Vec<f64> {
    let mut rng = mfg_lab::rng::stream(seed, 9);
    let mut m: Vec<f64> = (0..g.nodes()).map(|_| rng.gen_range(0.1..3.0)).collect();
    normalize_mass(g, &mut m).unwrap();
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn every_coupling_satisfies_the_symmetry_relation(seed in 0u64..1000, theta in 0.1..4.0f64, dim in 1usize..=2) {
        let g = Grid::new(dim, 8, 2, 0.0, 1.0).unwrap();
        let m = random_density(&g, seed);
        for kind in CouplingKind::ALL {
            let c = kind.build::<f64>(theta, 2.0);
            let r = check_symmetry_relation(c.as_ref(), &g, &m, None);
            prop_assert!(r.max_defect <= 1e-10, "{:?}: {:?}", kind, r);
            prop_assert!(r.normalization_defect <= 1e-10, "{:?}: {:?}", kind, r);
        }
    }

    #[test]
    fn kernel_and_value_are_derivatives(seed in 0u64..1000, dim in 1usize..=2) {
        let g = Grid::new(dim, 6, 2, 0.0, 1.0).unwrap();
        let m = random_density(&g, seed);
        let mut rng = mfg_lab::rng::stream(seed, 10);
        let mut mu: Vec<f64> = (0..g.nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mean = ops::integrate(&g, &mu);
        mu.iter_mut().for_each(|v| *v -= mean);
        let h = 1e-5;
        let shift = |s: f64| -> Vec<f64> { m.iter().zip(&mu).map(|(a, b)| a + s * b).collect() };
        let (mp, mm) = (shift(h), shift(-h));
        for kind in [CouplingKind::Monotone, CouplingKind::Smoothed, CouplingKind::External, CouplingKind::DoubleWell] {
            let c = kind.build::<f64>(1.5, 2.0);
            let at = CouplingAt::new(c.as_ref(), &g, &m);
            let dpot = (CouplingAt::new(c.as_ref(), &g, &mp).potential()
                - CouplingAt::new(c.as_ref(), &g, &mm).potential()) / (2.0 * h);
            prop_assert!((dpot - ops::inner(&g, &at.values(), &mu)).abs() < 1e-6, "{:?}", kind);
            let fp = CouplingAt::new(c.as_ref(), &g, &mp).values();
            let fm = CouplingAt::new(c.as_ref(), &g, &mm).values();
            let mut k = vec![0.0; g.nodes()];
            at.kernel_apply(&mu, &mut k);
            for i in 0..g.nodes() {
                prop_assert!(((fp[i] - fm[i]) / (2.0 * h) - k[i]).abs() < 1e-5, "{:?} node {}", kind, i);
            }
        }
    }
}

#[test]
fn initial_densities_have_unit_mass() {
    let g = Grid::new(2, 12, 2, 0.0, 1.0).unwrap();
    for init in [
        InitialDensity::Uniform,
        InitialDensity::Cosine { amplitude: 0.9 },
        InitialDensity::Bump { kappa: 2.0 },
        InitialDensity::Tilted { kappa: 1.0 },
    ] {
        let m = init.sample::<f64>(&g).unwrap();
        assert!((ops::integrate(&g, &m) - 1.0).abs() < 1e-13, "{init:?}");
        assert!(m.iter().all(|v| *v >= 0.0));
    }
    assert!(InitialDensity::Cosine { amplitude: 1.5 }.sample::<f64>(&g).is_err());
}
