use mfg_lab::grid::ops;
use mfg_lab::mfg::{solve_picard, MfgSolution, PicardOptions};
use mfg_lab::model::library::builtin_quadratic;
use mfg_lab::model::{CouplingKind, InitialDensity, MfgModel};
use mfg_lab::potential::evaluate_second_variation;
use mfg_lab::stability::linalg::{smallest_singular_banded, smallest_singular_dense};
use mfg_lab::stability::{
    assemble_operator, bound_ratio, certify_stability, estimate_bound, random_sources, solve_linearized,
    LinearOptions, Linearization, LinearizedProblem, Sources, Verdict,
};
use mfg_lab::{Density, Grid};
use proptest::prelude::*;

fn solved(g: Grid, kind: CouplingKind, theta: f64) -> (MfgModel<f64>, MfgSolution<f64>) {
    let model = builtin_quadratic(g, kind, theta, InitialDensity::Cosine { amplitude: 0.5 }).unwrap();
    let init = Density::constant_in_time(g, model.m0()).unwrap();
    let sol = solve_picard(&model, &init, &PicardOptions { tol: 1e-12, ..Default::default() }).unwrap();
    (model, sol)
}

fn base() -> (MfgModel<f64>, MfgSolution<f64>) {
    solved(Grid::new(1, 16, 32, 0.0, 0.5).unwrap(), CouplingKind::Monotone, 1.0)
}

#[test]
fn zero_data_gives_the_zero_solution() {
    let (model, sol) = base();
    let p = LinearizedProblem::new(&model, &sol, 0).unwrap();
    let s = solve_linearized(&p, &LinearOptions::default()).unwrap();
    assert!(s.v.sup_norm() <= 1e-11 && s.mu.sup_norm() <= 1e-11);
}

#[test]
fn constant_running_data_gives_a_linear_value() {
    // μ stays zero, and a ≡ 1 acts on slices 1..K−1, so vⁿ = (K−1−n)dt.
    let (model, sol) = base();
    let g = *model.grid();
    let mut src = Sources::zeros(g);
    src.a.values_mut().iter_mut().for_each(|v| *v = 1.0);
    let p = LinearizedProblem::new(&model, &sol, 0).unwrap().with_sources(src).unwrap();
    let s = solve_linearized(&p, &LinearOptions::default()).unwrap();
    assert!(s.mu.sup_norm() <= 1e-12);
    let k = g.n_time();
    for n in 0..=k {
        let expected = k.saturating_sub(n + 1) as f64 * g.dt();
        assert!(s.v.slice(n).iter().all(|v| (v - expected).abs() <= 1e-11), "slice {n}");
    }
}

#[test]
fn perturbations_carry_no_mass() {
    let (model, sol) = base();
    let p0 = LinearizedProblem::new(&model, &sol, 0).unwrap();
    let p = p0.clone().with_sources(random_sources(&p0, 3, 1)).unwrap();
    let s = solve_linearized(&p, &LinearOptions::default()).unwrap();
    let g = *model.grid();
    for n in 0..g.slices() {
        assert!(ops::integrate(&g, s.mu.slice(n)).abs() <= 1e-12, "slice {n}");
    }
    assert!(s.residuals.max() <= 1e-10);
}

#[test]
fn iterative_and_assembled_solves_agree() {
    let (model, sol) = base();
    let p0 = LinearizedProblem::new(&model, &sol, 0).unwrap();
    let src = random_sources(&p0, 8, 0);
    let p = p0.clone().with_sources(src.clone()).unwrap();
    let s = solve_linearized(&p, &LinearOptions::default()).unwrap();
    let op = assemble_operator(&p).unwrap();
    let (v, mu) = op.solve(&Linearization::new(&p), &src).unwrap();
    assert!(v.sup_distance(&s.v) <= 1e-9 && mu.sup_distance(&s.mu) <= 1e-9);
}

#[test]
fn assembled_transpose_is_consistent() {
    let (model, sol) = base();
    let op = assemble_operator(&LinearizedProblem::new(&model, &sol, 0).unwrap()).unwrap();
    let n = op.unknowns();
    let mut rng = mfg_lab::rng::stream(6, 0);
    use rand::Rng;
    let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let ax = op.scaled.matvec(&x);
    let aty = op.scaled.matvec_t(&y);
    let lhs: f64 = ax.iter().zip(&y).map(|(a, b)| a * b).sum();
    let rhs: f64 = x.iter().zip(&aty).map(|(a, b)| a * b).sum();
    assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn solutions_superpose(s1 in 0u64..100, s2 in 0u64..100, x in -2.0..2.0f64, y in -2.0..2.0f64) {
        let (model, sol) = base();
        let p0 = LinearizedProblem::new(&model, &sol, 0).unwrap();
        let (a, b) = (random_sources(&p0, s1, 0), random_sources(&p0, s2, 1));
        let solve = |src: Sources<f64>| solve_linearized(&p0.clone().with_sources(src).unwrap(), &LinearOptions::default()).unwrap();
        let (sa, sb, sc) = (solve(a.clone()), solve(b.clone()), solve(a.combine(x, &b, y)));
        prop_assert!(sc.v.sup_distance(&sa.v.combine(x, &sb.v, y)) <= 1e-9);
        prop_assert!(sc.mu.sup_distance(&sa.mu.combine(x, &sb.mu, y)) <= 1e-9);
    }

    #[test]
    fn second_variation_pairs_with_the_data(seed in 0u64..1000) {
        let (model, sol) = base();
        let g = *model.grid();
        let p0 = LinearizedProblem::new(&model, &sol, 0).unwrap();
        let mut src = random_sources(&p0, seed, 0);
        src.beta = mfg_lab::Flux::zeros(g);
        let p = p0.with_sources(src.clone()).unwrap();
        let s = solve_linearized(&p, &LinearOptions::default()).unwrap();
        let dir = Linearization::new(&p).direction(&s.v, &s.mu);
        let j = evaluate_second_variation(&model, &sol, &dir).unwrap();
        let k = g.n_time();
        let mut pairing = ops::inner(&g, &src.c, s.mu.slice(k));
        for n in 0..k {
            pairing += g.dt() * ops::inner(&g, src.a.slice(n), s.mu.slice(n));
        }
        prop_assert!((j + pairing).abs() <= 1e-8, "J {} pairing {}", j, pairing);
    }
}

#[test]
fn dense_and_banded_smallest_singular_values_agree() {
    let (model, sol) = solved(Grid::new(1, 8, 16, 0.0, 0.5).unwrap(), CouplingKind::Smoothed, 2.0);
    let op = assemble_operator(&LinearizedProblem::new(&model, &sol, 0).unwrap()).unwrap();
    let dense = smallest_singular_dense(&op.scaled, 1000).unwrap();
    let banded = smallest_singular_banded(&op.scaled, 4, 300, 1e-12, 1).unwrap();
    assert!((dense.sigma - banded.sigma).abs() <= 1e-8 * dense.sigma);
    let r = op.scaled.matvec(&dense.vector);
    let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!((norm - dense.sigma).abs() <= 1e-8);
}

#[test]
fn monotone_equilibria_certify_stable() {
    let (model, sol) = base();
    let (cert, witness) = certify_stability(&model, &sol, 0, 1e-6).unwrap();
    assert_eq!(cert.verdict, Verdict::Stable);
    assert!(cert.sigma_min > 1e-6 && cert.sigma_next >= cert.sigma_min);
    assert!(witness.is_none());
}

#[test]
fn bound_constant_covers_random_data() {
    // The C¹ ratio must stay below Ĉ, and Ĉ must be resolution-stable.
    let mut hats = Vec::new();
    for n in [10, 12] {
        let (model, sol) = solved(Grid::new(1, n, 2 * n, 0.0, 0.5).unwrap(), CouplingKind::Monotone, 1.0);
        let p = LinearizedProblem::new(&model, &sol, 0).unwrap();
        let est = estimate_bound(&p).unwrap();
        assert!(est.exact);
        for k in 0..4 {
            let r = bound_ratio(&p, random_sources(&p, 12, k)).unwrap();
            assert!(r.c1_ratio <= est.c_hat, "{r:?} vs {est:?}");
        }
        hats.push(est.c_hat);
    }
    assert!((hats[1] / hats[0] - 1.0).abs() <= 0.2, "{hats:?}");
}
