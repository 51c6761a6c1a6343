use mfg_lab::mfg::{solve_picard, MfgSolution, PicardOptions};
use mfg_lab::model::library::builtin_quadratic;
use mfg_lab::model::{CouplingKind, InitialDensity, MfgModel};
use mfg_lab::potential::{
    continuity_defect, criticality_defect, evaluate_j, evaluate_second_variation, first_variation, first_variation_fd,
    random_direction, restriction_consistency, AdmissiblePair,
};
use mfg_lab::{Density, Flux, Grid};

fn solved(kind: CouplingKind, theta: f64) -> (MfgModel<f64>, MfgSolution<f64>) {
    let g = Grid::new(1, 24, 48, 0.0, 0.5).unwrap();
    let model = builtin_quadratic(g, kind, theta, InitialDensity::Cosine { amplitude: 0.5 }).unwrap();
    let init = Density::constant_in_time(g, model.m0()).unwrap();
    let sol = solve_picard(&model, &init, &PicardOptions { tol: 1e-12, ..Default::default() }).unwrap();
    assert!(sol.converged);
    (model, sol)
}

#[test]
fn equilibria_are_critical_points() {
    for (kind, theta) in [(CouplingKind::None, 0.0), (CouplingKind::Monotone, 1.0), (CouplingKind::Smoothed, 2.0)] {
        let (model, sol) = solved(kind, theta);
        let pair = AdmissiblePair::from_solution(&sol);
        assert!(pair.is_admissible());
        let r = criticality_defect(&model, &pair, 8, 3);
        assert!(r.defect <= 1e-6, "{kind:?}: {r:?}");
        assert!(r.fd_mismatch <= 1e-5, "{kind:?}: {r:?}");
    }
}

#[test]
fn first_variation_matches_finite_differences_away_from_equilibrium() {
    let (model, sol) = solved(CouplingKind::Monotone, 1.0);
    let pair = AdmissiblePair::from_solution(&sol).shifted(&random_direction(&model, 5, 0).scaled(0.05), 1.0).unwrap();
    for k in 1..6 {
        let dir = random_direction(&model, 5, k);
        let a = first_variation(&model, &pair, &dir);
        let fd = first_variation_fd(&model, &pair, &dir, 1e-4);
        assert!((a - fd).abs() <= 1e-5 * (1.0 + a.abs()), "{a} vs {fd}");
    }
    assert!(criticality_defect(&model, &pair, 5, 1).defect > 1e-4);
}

#[test]
fn j_of_the_heat_flow_is_the_potential_alone() {
    let g = Grid::new(1, 16, 16, 0.0, 1.0).unwrap();
    let model = builtin_quadratic(g, CouplingKind::Monotone, 2.0, InitialDensity::Uniform).unwrap();
    let m = Density::constant_in_time(g, model.m0()).unwrap();
    let pair = AdmissiblePair::new(m, Flux::zeros(g)).unwrap();
    let j = evaluate_j(&model, &pair).unwrap();
    assert_eq!(j.kinetic, 0.0);
    assert!((j.total - j.running_potential - j.terminal_potential).abs() < 1e-14);
}

#[test]
fn inadmissible_pairs_are_flagged() {
    let g = Grid::new(1, 16, 8, 0.0, 1.0).unwrap();
    let model = builtin_quadratic(g, CouplingKind::None, 0.0, InitialDensity::Uniform).unwrap();
    let m = Density::constant_in_time(g, model.m0()).unwrap();
    let mut w = Flux::zeros(g);
    w.slice_mut(2)[3] = 1.0;
    assert!(continuity_defect(m.values(), &w) > 1e-3);
    assert!(!AdmissiblePair::new(m, w).unwrap().is_admissible());
}

#[test]
fn second_variation_is_nonnegative_in_the_monotone_regime() {
    let (model, sol) = solved(CouplingKind::Monotone, 1.0);
    for k in 0..6 {
        let dir = random_direction(&model, 9, k);
        let q = evaluate_second_variation(&model, &sol, &dir).unwrap();
        assert!(q > 0.0, "direction {k}: {q}");
    }
}

#[test]
fn second_variation_is_the_curvature_of_j() {
    let (model, sol) = solved(CouplingKind::Smoothed, 2.0);
    let pair = AdmissiblePair::from_solution(&sol);
    let dir = random_direction(&model, 4, 2);
    let h = 1e-3;
    let j = |s: f64| evaluate_j(&model, &pair.shifted(&dir, s).unwrap()).unwrap().total;
    let fd = (j(h) - 2.0 * j(0.0) + j(-h)) / (h * h);
    let q = evaluate_second_variation(&model, &sol, &dir).unwrap();
    assert!((fd - q).abs() <= 1e-4 * (1.0 + q.abs()), "fd {fd} vs {q}");
}

#[test]
fn restrictions_of_equilibria_are_equilibria() {
    let (model, sol) = solved(CouplingKind::Monotone, 1.0);
    let r = restriction_consistency(&model, &sol, 0.25, &PicardOptions { tol: 1e-12, ..Default::default() }, 2).unwrap();
    assert!(r.from_restriction_converged && r.from_perturbed_converged);
    assert!(r.from_restriction <= 1e-8, "{r:?}");
    assert!(r.from_perturbed <= 1e-8, "{r:?}");
}
