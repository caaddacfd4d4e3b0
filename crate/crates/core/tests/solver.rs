use fb_core::energy::discrete_energy;
use fb_core::grid::{sample_exact, FieldSource};
use fb_core::solver::{minimize, solve_1d, Acceleration, SolverConfig};
use fb_core::{make_params, FbError, Grid, HalfSpaceSolution, VectorField};

#[test]
fn one_dimensional_minimizer_is_the_profile() {
    for p in [0.3, 0.5, 0.8] {
        let q = make_params(p).unwrap();
        let h = 1.0 / 256.0;
        let cfg = SolverConfig::for_spacing(h, 1);
        let (prof, rep) = solve_1d(&q, (-1.0, 1.0), (&[0.0], &[q.c_p]), h, &cfg).unwrap();
        assert!(rep.converged, "p = {p}");
        let err = (0..prof.len()).map(|i| (prof.values[i] - q.u0(prof.x(i))).abs()).fold(0.0, f64::max);
        assert!(err <= 5e-3, "p = {p}: error {err}");
        let fb = prof.free_boundary(cfg.zero_threshold).unwrap();
        assert!(fb.abs() <= 2.0 * h, "p = {p}: free boundary at {fb}");
        assert!(rep.energy_history.windows(2).all(|w| w[1] <= w[0]), "p = {p}");
    }
}

#[test]
fn one_dimensional_vector_data_keeps_direction() {
    let q = make_params(0.5).unwrap();
    let h = 1.0 / 128.0;
    let cfg = SolverConfig::for_spacing(h, 1);
    let f = [0.6 * q.c_p, -0.8 * q.c_p];
    let (prof, _) = solve_1d(&q, (-1.0, 1.0), (&[0.0, 0.0], &f), h, &cfg).unwrap();
    for i in 0..prof.len() {
        let u = prof.node(i);
        assert!((0.8 * u[0] + 0.6 * u[1]).abs() <= 1e-12 * prof.norm_at(i).max(1.0));
    }
}

#[test]
fn rejects_coarse_intervals_and_bad_data() {
    let q = make_params(0.5).unwrap();
    let cfg = SolverConfig::for_spacing(0.1, 1);
    assert!(matches!(solve_1d(&q, (0.0, 1.0), (&[0.0], &[1.0]), 0.1, &cfg), Err(FbError::Grid(_))));
    assert!(solve_1d(&q, (1.0, 0.0), (&[0.0], &[1.0]), 0.001, &cfg).is_err());
    assert!(solve_1d(&q, (0.0, 1.0), (&[0.0], &[f64::NAN]), 0.001, &cfg).is_err());
}

fn flat_problem(h: f64, f: Vec<f64>) -> (Grid, VectorField, HalfSpaceSolution) {
    let q = make_params(0.5).unwrap();
    let g = Grid::cube(2, -0.5, 0.5, h).unwrap();
    let hs = HalfSpaceSolution::new(q, vec![0.0, 1.0], f, 0.1).unwrap();
    let bc = sample_exact(&g, &FieldSource::HalfSpace(&hs)).unwrap();
    (g, bc, hs)
}

#[test]
fn flat_minimizer_beats_the_sampled_competitor() {
    let q = make_params(0.5).unwrap();
    let (g, bc, _) = flat_problem(1.0 / 32.0, vec![1.0, 0.0]);
    let cfg = SolverConfig::for_spacing(g.h(), 2);
    let (u, rep) = minimize(&g, &bc, &q, &cfg).unwrap();
    let competitor = discrete_energy(&bc, &q).total;
    assert!(rep.final_energy <= competitor + 1e-6, "{} vs {competitor}", rep.final_energy);
    assert!((discrete_energy(&u, &q).total - rep.final_energy).abs() <= 1e-12 * competitor);
    assert!(rep.energy_history.windows(2).all(|w| w[1] <= w[0]));
    for i in 0..g.num_nodes() {
        if g.is_boundary(i) {
            assert_eq!(u.node(i), bc.node(i));
        }
        // Dead zone below the interface.
        if g.coords(i)[1] < -0.1 - 3.0 * g.h() {
            assert_eq!(u.norm_at(i), 0.0, "node {i}");
        }
    }
    assert!(u.max_abs_diff(&bc) < 0.05);
}

#[test]
fn plain_iteration_also_decreases_energy() {
    let q = make_params(0.5).unwrap();
    let (g, bc, _) = flat_problem(1.0 / 16.0, vec![1.0, 0.0]);
    let mut cfg = SolverConfig::for_spacing(g.h(), 2);
    cfg.acceleration = Acceleration::None;
    cfg.polish = false;
    cfg.max_iter = 2_000;
    let (_, rep) = minimize(&g, &bc, &q, &cfg).unwrap();
    assert!(rep.energy_history.windows(2).all(|w| w[1] <= w[0]));
    assert!(rep.final_energy <= discrete_energy(&bc, &q).total);
}

#[test]
fn target_direction_is_equivariant() {
    let q = make_params(0.5).unwrap();
    let (g, bc1, _) = flat_problem(1.0 / 16.0, vec![1.0, 0.0]);
    let (_, bc2, _) = flat_problem(1.0 / 16.0, vec![0.6, 0.8]);
    let cfg = SolverConfig::for_spacing(g.h(), 2);
    let (u1, r1) = minimize(&g, &bc1, &q, &cfg).unwrap();
    let (u2, r2) = minimize(&g, &bc2, &q, &cfg).unwrap();
    assert!((r1.final_energy - r2.final_energy).abs() <= 1e-8 * r1.final_energy);
    for i in 0..g.num_nodes() {
        let (a, b) = (u1.node(i), u2.node(i));
        assert!((a[0] * 0.6 - b[0]).abs() < 1e-6 && (a[0] * 0.8 - b[1]).abs() < 1e-6, "node {i}");
    }
}

#[test]
fn mismatched_boundary_field_is_rejected() {
    let q = make_params(0.5).unwrap();
    let g = Grid::cube(2, -0.5, 0.5, 1.0 / 16.0).unwrap();
    let other = VectorField::zeros(Grid::cube(2, -0.5, 0.5, 1.0 / 8.0).unwrap(), 1);
    assert!(minimize(&g, &other, &q, &SolverConfig::for_spacing(g.h(), 2)).is_err());
}
