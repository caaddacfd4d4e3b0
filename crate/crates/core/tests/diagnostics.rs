use fb_core::diagnostics::{
    blowup, decay_check, extract_free_boundary, fit_flatness, fit_growth_exponent, fit_slab_constant, flatness_error,
    halfspace_distance, harnack_trap, hodograph, slab_decay_check,
};
use fb_core::grid::{sample_exact, FieldSource};
use fb_core::{make_params, FbError, Grid, HalfSpaceSolution, PParams, VectorField};
use proptest::prelude::*;

fn tilted(q: PParams, theta: f64, shift: f64, h: f64) -> (HalfSpaceSolution, VectorField) {
    let hs = HalfSpaceSolution::new(q, vec![theta.sin(), theta.cos()], vec![0.6, 0.8], shift).unwrap();
    let g = Grid::cube(2, -0.5, 0.5, h).unwrap();
    let u = sample_exact(&g, &FieldSource::HalfSpace(&hs)).unwrap();
    (hs, u)
}

#[test]
fn free_boundary_of_tilted_halfspace() {
    let q = make_params(0.5).unwrap();
    let h = 1.0 / 64.0;
    for theta in [0.0, 0.3, -0.7] {
        let (hs, u) = tilted(q, theta, 0.05, h);
        let fb = extract_free_boundary(&u, 0.0).unwrap();
        assert!(!fb.is_empty());
        let d = fb.hausdorff_to_hyperplane(&hs.e, -0.05, &[-0.4, -0.4], &[0.4, 0.4], h / 4.0);
        // Vertices lie within h of the plane; the plane is sampled against a
        // vertex set with spacing h along it.
        assert!(d <= 1.5 * h, "theta = {theta}: {d}");
    }
}

#[test]
fn flatness_recovers_directions() {
    let q = make_params(0.5).unwrap();
    let h = 1.0 / 64.0;
    for theta in [0.0, 0.2, -0.45] {
        let (hs, u) = tilted(q, theta, 0.0, h);
        let fit = fit_flatness(&u, &q, &[0.0, 0.0], 0.3).unwrap();
        let cos_e = fit.e[0] * hs.e[0] + fit.e[1] * hs.e[1];
        assert!(cos_e > (0.02f64).cos(), "theta = {theta}: e = {:?}", fit.e);
        assert!((fit.f[0] - 0.6).abs() < 1e-9 && (fit.f[1] - 0.8).abs() < 1e-9);
        assert!(fit.eps <= 4.0 * h.powf(q.kappa - 1.0), "theta = {theta}: eps {}", fit.eps);
        let (sup, dead) = flatness_error(&u, &q, &[0.0, 0.0], 0.3, &hs.e, &hs.f).unwrap();
        assert!(sup < 1e-12 && dead < 1e-12);
    }
}

#[test]
fn flatness_is_rotation_symmetric() {
    // Rotating the data rotates the fitted normal; the errors are unchanged.
    let q = make_params(0.5).unwrap();
    let h = 1.0 / 64.0;
    let (_, u0) = tilted(q, 0.1, 0.02, h);
    let (_, u1) = tilted(q, 0.1 + std::f64::consts::FRAC_PI_2, 0.02, h);
    let a = fit_flatness(&u0, &q, &[0.0, 0.0], 0.3).unwrap();
    let b = fit_flatness(&u1, &q, &[0.0, 0.0], 0.3).unwrap();
    // A quarter turn maps grid nodes to grid nodes.
    assert!((a.eps - b.eps).abs() < 1e-3 * a.eps.max(1e-6), "{} vs {}", a.eps, b.eps);
    assert!((a.e[0] * b.e[1] - a.e[1] * b.e[0] + 1.0).abs() < 1e-3 || (a.e[0] * b.e[0] + a.e[1] * b.e[1]).abs() < 2e-2);
}

#[test]
fn growth_exponent_of_exact_sample() {
    for p in [0.3, 0.5, 0.8] {
        let q = make_params(p).unwrap();
        let (_, u) = tilted(q, 0.0, 0.1, 1.0 / 128.0);
        // Small radii see the node lattice: the top node of B_r sits up to h below r.
        let radii: Vec<f64> = (0..6).map(|k| 0.1 + 0.05 * k as f64).collect();
        let fit = fit_growth_exponent(&u, &[0.0, -0.1], &radii).unwrap();
        assert!(fit.boundary_point);
        assert!((fit.kappa_hat - q.kappa).abs() < 0.05, "p = {p}: {}", fit.kappa_hat);
    }
}

#[test]
fn blowup_of_halfspace_is_itself() {
    let q = make_params(0.5).unwrap();
    let (_, u) = tilted(q, 0.25, 0.0, 1.0 / 128.0);
    let target = Grid::cube(2, -1.0, 1.0, 1.0 / 8.0).unwrap();
    let canon = HalfSpaceSolution::new(q, vec![0.25f64.sin(), 0.25f64.cos()], vec![0.6, 0.8], 0.0).unwrap();
    for r in [0.1, 0.2, 0.4] {
        let b = blowup(&u, &q, &[0.0, 0.0], r, &target).unwrap();
        let d = halfspace_distance(&b, &canon, &[0.0, 0.0], 0.9).unwrap();
        // Interpolation error of the scaled sample, O((h/r)^kappa) near the interface.
        assert!(d < 0.05, "r = {r}: {d}");
    }
    // Composition: blowing up twice matches one blowup at the product scale.
    let once = blowup(&u, &q, &[0.0, 0.0], 0.2, &target).unwrap();
    let fine = Grid::cube(2, -1.0, 1.0, 1.0 / 64.0).unwrap();
    let mid = blowup(&u, &q, &[0.0, 0.0], 0.4, &fine).unwrap();
    let twice = blowup(&mid, &q, &[0.0, 0.0], 0.5, &target).unwrap();
    assert!(once.max_abs_diff(&twice) < 0.05);
    assert!(matches!(blowup(&u, &q, &[0.0, 0.0], 0.6, &target), Err(FbError::Geometry(_))));
}

#[test]
fn hodograph_of_shifted_profile_is_constant() {
    let q = make_params(0.5).unwrap();
    let eps = 0.05;
    let (hs, u) = tilted(q, 0.0, 0.1, 1.0 / 64.0);
    let hod = hodograph(&u, &q, &hs.e, eps).unwrap();
    // u^1 = 0.6 u0(x_n + 0.1) so only |u| inverts to the shift exactly.
    for v in hod.modulus.iter().flatten() {
        assert!((v - 0.1 / eps).abs() < 1e-8, "{v}");
    }
    assert!(hod.modulus.iter().filter(|v| v.is_none()).count() > 0);
}

#[test]
fn trap_on_exact_data_has_zero_width() {
    let q = make_params(0.5).unwrap();
    let hs = HalfSpaceSolution::canonical(q, 2, 2, 0.1);
    let g = Grid::cube(2, -0.5, 0.5, 1.0 / 64.0).unwrap();
    let u = sample_exact(&g, &FieldSource::HalfSpace(&hs)).unwrap();
    let seq = harnack_trap(&u, &q, &[0.01, -0.1], 0.3, 0.5, 5).unwrap();
    assert!(seq.nested());
    for s in &seq.steps {
        assert!(s.width.abs() < 1e-6, "{s:?}");
    }
    assert!(matches!(harnack_trap(&u, &q, &[0.0, -0.1], 0.3, 1.5, 5), Err(FbError::Domain(_))));
}

#[test]
fn decay_constant_is_finite() {
    let q = make_params(0.5).unwrap();
    let (_, u) = tilted(q, 0.0, 0.1, 1.0 / 64.0);
    let d = decay_check(&u, &q, &[0.0, -0.1], &[0.1, 0.2, 0.3]).unwrap();
    assert_eq!(d.pairs.len(), 3);
    assert!(d.c > 0.0 && d.c.is_finite());
}

#[test]
fn slab_ratio_falls_with_width() {
    let g = Grid::cube(2, -1.0, 1.0, 1.0 / 32.0).unwrap();
    let wide = slab_decay_check(0.5, &g).unwrap();
    let thin = slab_decay_check(0.125, &g).unwrap();
    assert!(thin.ratio < wide.ratio && thin.ratio > 0.0);
    assert!(slab_decay_check(0.1, &g).is_err());
    let fit = fit_slab_constant(&[0.25, 0.125], &g).unwrap();
    assert!(fit.c > 0.0 && fit.c_bound > 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn snapped_centers_sit_on_the_interface(x in -0.3f64..0.3, y in -0.13f64..-0.07) {
        let q = make_params(0.5).unwrap();
        let h = 1.0 / 64.0;
        let (_, u) = tilted(q, 0.0, 0.1, h);
        let fb = extract_free_boundary(&u, 0.0).unwrap();
        match fb.snap(&[x, y]) {
            Some(s) => {
                prop_assert!((s.point[1] + 0.1).abs() <= h);
                prop_assert!(s.distance <= (y + 0.1).abs() + h);
            }
            None => prop_assert!(false, "no snap"),
        }
    }
}
