use mfg_lab::grid::{io, normalize_mass, ops};
use mfg_lab::{Field, Flux, Grid};
use proptest::prelude::*;

fn grid(dim: usize, n: usize) -> Grid {
    Grid::new(dim, n, 4, 0.0, 1.0).unwrap()
}

fn slices(dim: usize) -> impl Strategy<Value = (Grid, Vec<f64>, Vec<f64>)> {
    (4usize..24).prop_flat_map(move |n| {
        let g = grid(dim, n);
        (Just(g), prop::collection::vec(-1.0..1.0f64, g.nodes()), prop::collection::vec(-1.0..1.0f64, g.faces()))
    })
}

proptest! {
    #[test]
    fn divergence_is_minus_the_adjoint_of_the_gradient((g, u, w) in prop_oneof![slices(1), slices(2)]) {
        let mut du = vec![0.0; g.faces()];
        let mut dw = vec![0.0; g.nodes()];
        ops::gradient(&g, &u, &mut du);
        ops::divergence(&g, &w, &mut dw);
        prop_assert!((ops::inner(&g, &du, &w) + ops::inner(&g, &u, &dw)).abs() <= 1e-12);
    }

    #[test]
    fn laplacian_is_divergence_of_gradient((g, u, _) in prop_oneof![slices(1), slices(2)]) {
        let mut du = vec![0.0; g.faces()];
        let mut a = vec![0.0; g.nodes()];
        let mut b = vec![0.0; g.nodes()];
        ops::gradient(&g, &u, &mut du);
        ops::divergence(&g, &du, &mut a);
        ops::laplacian(&g, &u, &mut b);
        prop_assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= 1e-12));
        prop_assert!(ops::integrate(&g, &b).abs() <= 1e-10);
    }

    #[test]
    fn face_average_adjoint((g, m, phi) in prop_oneof![slices(1), slices(2)]) {
        let mut am = vec![0.0; g.faces()];
        let mut at = vec![0.0; g.nodes()];
        ops::face_average(&g, &m, &mut am);
        ops::face_average_adjoint(&g, &phi, &mut at);
        prop_assert!((ops::inner(&g, &am, &phi) - ops::inner(&g, &m, &at)).abs() <= 1e-12);
    }

    #[test]
    fn normalized_slices_have_unit_mass(values in prop::collection::vec(0.01..5.0f64, 16)) {
        let g = grid(1, 16);
        let mut m = values;
        normalize_mass(&g, &mut m).unwrap();
        prop_assert!((ops::integrate(&g, &m) - 1.0).abs() <= 1e-13);
    }

    #[test]
    fn reflection_is_an_involution(n in 4usize..20, dim in 1usize..=2) {
        let g = grid(dim, n);
        for i in 0..g.nodes() {
            prop_assert_eq!(g.reflect(g.reflect(i)), i);
        }
    }
}

#[test]
fn gradient_of_a_cosine_is_second_order() {
    let err = |n: usize| {
        let g = grid(1, n);
        let pi2 = 2.0 * std::f64::consts::PI;
        let u: Vec<f64> = (0..n).map(|i| (pi2 * g.coords(i)[0]).cos()).collect();
        let mut lap = vec![0.0; n];
        ops::laplacian(&g, &u, &mut lap);
        lap.iter().zip(&u).map(|(l, v)| (l + pi2 * pi2 * v).abs()).fold(0.0, f64::max)
    };
    let order = (err(32) / err(64)).log2();
    assert!((order - 2.0).abs() < 0.05, "order {order}");
}

#[test]
fn constants_are_in_the_kernel() {
    let g = grid(2, 8);
    let mut out = vec![1.0; g.faces()];
    ops::gradient(&g, &vec![3.5; g.nodes()], &mut out);
    assert!(out.iter().all(|v| *v == 0.0));
}

#[test]
fn neighbours_wrap_around() {
    let g = grid(2, 5);
    let i = g.node_index([4, 0]);
    assert_eq!(g.multi_index(g.next(i, 0)), [0, 0]);
    assert_eq!(g.multi_index(g.prev(i, 1)), [4, 4]);
}

#[test]
fn fields_round_trip_through_bytes() {
    let g = Grid::new(2, 6, 3, 0.0, 0.5).unwrap();
    let u = Field::from_fn(g, |x, t| x[0] - 2.0 * x[1] + t);
    let back: Field = io::scalar_from_bytes(&io::scalar_to_bytes(&u)).unwrap();
    assert_eq!(back.values(), u.values());
    assert_eq!(back.grid(), u.grid());
    let w = u.gradient();
    let back: Flux = io::flux_from_bytes(&io::flux_to_bytes(&w)).unwrap();
    assert_eq!(back.values(), w.values());
}

#[test]
fn restriction_keeps_the_tail() {
    let g = Grid::new(1, 8, 10, 0.0, 1.0).unwrap();
    let u = Field::from_fn(g, |_, t| t);
    let r = u.restrict(4).unwrap();
    assert_eq!(r.grid().n_time(), 6);
    assert!((r.grid().t0() - 0.4).abs() < 1e-14);
    assert_eq!(r.slice(0), u.slice(4));
}

#[test]
fn invalid_grids_are_rejected() {
    assert!(Grid::new(3, 8, 8, 0.0, 1.0).is_err());
    assert!(Grid::new(1, 2, 8, 0.0, 1.0).is_err());
    assert!(Grid::new(1, 8, 8, 1.0, 0.5).is_err());
}
