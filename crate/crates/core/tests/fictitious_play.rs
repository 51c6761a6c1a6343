use mfg_lab::fictitious_play::{
    averaging_recomputation, fp_step, local_attractor_experiment, perturb_within, random_density, run_fp, FpOptions,
    FpState,
};
use mfg_lab::mfg::{solve_picard, PicardOptions};
use mfg_lab::model::library::builtin_quadratic;
use mfg_lab::model::{CouplingKind, InitialDensity, MfgModel};
use mfg_lab::{Density, Grid};
use proptest::prelude::*;

fn monotone() -> MfgModel<f64> {
    let g = Grid::new(1, 16, 32, 0.0, 0.5).unwrap();
    builtin_quadratic(g, CouplingKind::Monotone, 1.0, InitialDensity::Cosine { amplitude: 0.5 }).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn average_is_the_mean_of_the_responses(seed in 0u64..1000, n in 1usize..8) {
        let model = monotone();
        let mu0 = random_density(*model.grid(), 0.5, seed, 0).unwrap();
        prop_assert!(averaging_recomputation(&model, &mu0, n).unwrap() <= 1e-13);
    }

    #[test]
    fn perturbations_stay_within_delta(seed in 0u64..1000, delta in 1e-4..0.5f64) {
        let model = monotone();
        let m = Density::constant_in_time(*model.grid(), model.m0()).unwrap();
        let p = perturb_within(&m, delta, seed, 1).unwrap();
        prop_assert!(p.field().sup_distance(m.field()) <= delta * (1.0 + 1e-12));
        prop_assert!(p.mass_defect() <= 1e-12);
        prop_assert!(p.min_value() >= 0.0);
    }
}

#[test]
fn decoupled_play_stops_after_one_round() {
    let g = Grid::new(1, 16, 16, 0.0, 0.5).unwrap();
    let model = builtin_quadratic(g, CouplingKind::None, 0.0, InitialDensity::Bump { kappa: 1.0 }).unwrap();
    let mu0 = random_density(g, 0.5, 4, 0).unwrap();
    let mut state = FpState::new(mu0);
    let (first, _) = fp_step(&model, &mut state).unwrap();
    assert!(first.gap > 0.0);
    for _ in 0..3 {
        let (rec, _) = fp_step(&model, &mut state).unwrap();
        assert!(rec.gap <= 1e-14, "{rec:?}");
    }
}

#[test]
fn play_converges_to_the_monotone_equilibrium() {
    let model = monotone();
    let g = *model.grid();
    let init = Density::constant_in_time(g, model.m0()).unwrap();
    let reference = solve_picard(&model, &init, &PicardOptions { tol: 1e-12, ..Default::default() }).unwrap();
    let mu0 = random_density(g, 0.5, 1, 0).unwrap();
    let trace = run_fp(&model, &mu0, &FpOptions { n_max: 3000, gap_tol: 2e-6 }, Some(&reference)).unwrap();
    assert!(trace.converged, "gap {}", trace.final_gap);
    assert!(trace.final_err.unwrap() <= 1e-4, "err {:?}", trace.final_err);
    assert!(trace.averaging_defect <= 1e-13);
    let slope = trace.gap_slope(20, trace.iterations).unwrap();
    assert!(slope < -0.5, "slope {slope}");
}

#[test]
fn small_perturbations_are_attracted() {
    let model = monotone();
    let g = *model.grid();
    let init = Density::constant_in_time(g, model.m0()).unwrap();
    let reference = solve_picard(&model, &init, &PicardOptions { tol: 1e-12, ..Default::default() }).unwrap();
    let rows = local_attractor_experiment(&model, &reference, &[0.0, 1e-2], 3, 2, 300).unwrap();
    assert_eq!(rows.len(), 2);
    for r in rows {
        assert_eq!(r.successes, r.trials, "{r:?}");
        assert!(r.max_averaging_defect <= 1e-13);
    }
}
