use std::f64::consts::PI;

use mfg_lab::grid::ops;
use mfg_lab::model::library::builtin_quadratic;
use mfg_lab::model::{CouplingKind, InitialDensity, MfgModel};
use mfg_lab::pde::{drift_field, hjb_residual, kolmogorov_residual, solve_hjb, solve_kolmogorov, HjbProblem, KolmogorovProblem};
use mfg_lab::{Field, Flux, Grid};
use proptest::prelude::*;

fn model(g: Grid, init: InitialDensity) -> MfgModel<f64> {
    builtin_quadratic(g, CouplingKind::None, 0.0, init).unwrap()
}

/// Final-time l2 error of the heat flow from `1 + ½cos 2πx`.
fn heat_error(n: usize, k: usize) -> f64 {
    let g = Grid::new(1, n, k, 0.0, 0.25).unwrap();
    let md = model(g, InitialDensity::Cosine { amplitude: 0.5 });
    let (m, _) = solve_kolmogorov(&KolmogorovProblem { model: &md, drift: &Flux::zeros(g), m0: md.m0() }).unwrap();
    let lam = 4.0 * PI * PI * (PI / n as f64).sin().powi(2) / (PI / n as f64).powi(2);
    let exact: Vec<f64> =
        (0..n).map(|i| 1.0 + 0.5 * (-lam * 0.25f64).exp() * (2.0 * PI * g.coords(i)[0]).cos()).collect();
    let diff: Vec<f64> = m.slice(k).iter().zip(&exact).map(|(a, b)| a - b).collect();
    ops::l2_norm(&g, &diff)
}

#[test]
fn heat_flow_is_first_order_in_time() {
    // Exact semi-discrete decay rate, so only the time error remains.
    let (e1, e2) = (heat_error(32, 256), heat_error(32, 512));
    let order = (e1 / e2).log2();
    assert!((order - 1.0).abs() < 0.1, "order {order} ({e1:e}, {e2:e})");
}

#[test]
fn heat_flow_matches_the_continuous_solution() {
    let g = Grid::new(1, 64, 512, 0.0, 0.25).unwrap();
    let md = model(g, InitialDensity::Cosine { amplitude: 0.5 });
    let (m, _) = solve_kolmogorov(&KolmogorovProblem { model: &md, drift: &Flux::zeros(g), m0: md.m0() }).unwrap();
    let exact = Field::from_fn(g, |x, t| 1.0 + 0.5 * (-4.0 * PI * PI * t).exp() * (2.0 * PI * x[0]).cos());
    let k = g.n_time();
    let diff: Vec<f64> = m.slice(k).iter().zip(exact.slice(k)).map(|(a, b)| a - b).collect();
    assert!(ops::l2_norm(&g, &diff) < 5e-4);
}

#[test]
fn hjb_with_a_time_source_only() {
    // r ≡ 1 and u^K = 0; the last step carries no source, so uⁿ = (K−1−n)dt.
    let g = Grid::new(2, 8, 20, 0.0, 1.0).unwrap();
    let md = model(g, InitialDensity::Uniform);
    let r = Field::from_fn(g, |_, _| 1.0);
    let (u, _) = solve_hjb(&HjbProblem { model: &md, source: &r, terminal: &vec![0.0; g.nodes()] }).unwrap();
    let k = g.n_time();
    for n in 0..=k {
        let expected = (k.saturating_sub(n + 1)) as f64 * g.dt();
        assert!(u.slice(n).iter().all(|v| (v - expected).abs() < 1e-12), "slice {n}");
    }
    assert!(hjb_residual(&md, &u, &r) < 1e-12);
}

#[test]
fn hjb_spatial_convergence() {
    let err = |n: usize| {
        let k = (n * n) / 4;
        let g = Grid::new(1, n, k, 0.0, 0.25).unwrap();
        let md = model(g, InitialDensity::Uniform);
        let tau = |t: f64| 0.25 - t;
        let r = Field::from_fn(g, |x, t| {
            let (c, s) = ((2.0 * PI * x[0]).cos(), (2.0 * PI * x[0]).sin());
            c + 4.0 * PI * PI * c * tau(t) + 0.5 * (2.0 * PI * s * tau(t)).powi(2)
        });
        let (u, _) = solve_hjb(&HjbProblem { model: &md, source: &r, terminal: &vec![0.0; n] }).unwrap();
        u.sup_distance(&Field::from_fn(g, |x, t| (2.0 * PI * x[0]).cos() * tau(t)))
    };
    let order = (err(16) / err(32)).log2();
    assert!(order > 1.8, "order {order}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn kolmogorov_preserves_mass_and_sign(
        a1 in -1.0..1.0f64, a2 in -1.0..1.0f64, kappa in 0.0..2.0f64, dim in 1usize..=2,
    ) {
        let g = Grid::new(dim, 12, 24, 0.0, 0.5).unwrap();
        let md = model(g, InitialDensity::Bump { kappa });
        let u = Field::from_fn(g, |x, t| a1 * (2.0 * PI * x[0]).sin() * (1.0 + t) + a2 * (2.0 * PI * x[1]).cos());
        let b = drift_field(&md, &u);
        let (m, _) = solve_kolmogorov(&KolmogorovProblem { model: &md, drift: &b, m0: md.m0() }).unwrap();
        prop_assert!(m.mass_defect() <= 1e-12);
        prop_assert!(m.min_value() >= 0.0);
        prop_assert!(kolmogorov_residual(&md, m.field(), &b) <= 1e-12);
    }
}

#[test]
fn zero_drift_keeps_the_uniform_density() {
    let g = Grid::new(2, 6, 5, 0.0, 1.0).unwrap();
    let md = model(g, InitialDensity::Uniform);
    let (m, _) = solve_kolmogorov(&KolmogorovProblem { model: &md, drift: &Flux::zeros(g), m0: md.m0() }).unwrap();
    assert!(m.values().iter().all(|v| (v - 1.0).abs() < 1e-14));
}
