use proptest::prelude::*;
use rand::Rng;
use sympwalk_core::action::{
    conjugate_and_symmetrize, cz_index_hessian, generating_coeffs, hessian_dense, interleave_tridiagonal,
    signature_sturm, DiagonalScaling, HessianBlocks,
};
use sympwalk_core::linalg::{dense_inertia, j0, max_abs, Mat};
use sympwalk_core::riccati::{eigenvalues_above, monotonicity_check, StepMap};
use sympwalk_core::rng::rng_from_seed;
use sympwalk_core::sampling::{
    algebra_coords_n1, log_n1, random_walk, sample_algebra_element, DiscretePath, NoiseTriple, ProductOrder, Scheme,
    WalkParams,
};
use sympwalk_core::sde::{diffusion_sigma, drift_b};
use sympwalk_core::symplectic::{
    canonical_endpoints, cayley_m, classify_endpoint, det_minus_identity, lie_exp, relative_symplectic_defect, rho,
};
use sympwalk_core::winding::{cz_index_segmented, cz_index_winding, WindingOptions};
use sympwalk_core::{ComponentLabel, SpAlgebraElement, SymplecticMatrix};

fn symmetric(n: usize, seed: u64, scale: f64) -> Mat {
    let mut rng = rng_from_seed(seed);
    let g = Mat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    (&g + g.transpose()) * (0.5 * scale)
}

/// A unitary symplectic matrix exp(J0 S) with S = [[A, -B], [B, A]].
fn unitary(n: usize, seed: u64) -> Mat {
    let a = symmetric(n, seed, 2.0);
    let mut rng = rng_from_seed(seed ^ 1);
    let g = Mat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let b = &g - g.transpose();
    let mut s = Mat::zeros(2 * n, 2 * n);
    s.view_mut((0, 0), (n, n)).copy_from(&a);
    s.view_mut((n, n), (n, n)).copy_from(&a);
    s.view_mut((0, n), (n, n)).copy_from(&(-&b));
    s.view_mut((n, 0), (n, n)).copy_from(&b);
    lie_exp(&SpAlgebraElement::from_symmetric(&s).unwrap()).into_matrix()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exponentials_are_symplectic(n in 1usize..=3, seed in any::<u64>(), var in 0.01f64..1.0) {
        let x = sample_algebra_element(n, var, &mut rng_from_seed(seed));
        let m = lie_exp(&x);
        prop_assert!(relative_symplectic_defect(m.matrix()).unwrap() < 1e-9);
    }

    #[test]
    fn rho_has_unit_modulus_after_unitary_factors(n in 1usize..=3, seed in any::<u64>()) {
        let walk = random_walk(&WalkParams::new(n, 20, 3.0, seed), &mut rng_from_seed(seed)).unwrap();
        let m = walk.endpoint().matrix() * unitary(n, seed);
        prop_assert!((rho(&m).unwrap().value().norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cayley_transform_is_symmetric(n in 1usize..=3, seed in any::<u64>(), c in 0.1f64..5.0) {
        let walk = random_walk(&WalkParams::new(n, 50, c, seed), &mut rng_from_seed(seed)).unwrap();
        let end = walk.endpoint().matrix();
        // Far from the identity component boundary and with a moderate condition number.
        prop_assume!(det_minus_identity(end).abs() > 1e-6 && max_abs(end) < 1e4);
        let m = cayley_m(end, 1e-9).unwrap();
        prop_assert!(max_abs(&(&m - m.transpose())) <= 1e-8 * max_abs(&m).max(1.0));
    }

    #[test]
    fn n1_determinant_identity(seed in any::<u64>(), c in 0.1f64..30.0) {
        let walk = random_walk(&WalkParams::new(1, 30, c, seed), &mut rng_from_seed(seed)).unwrap();
        let m = walk.endpoint().matrix();
        let scale = max_abs(m).powi(2).max(1.0);
        prop_assert!((det_minus_identity(m) - (2.0 - m.trace())).abs() <= 1e-10 * scale);
    }

    #[test]
    fn partial_products_stay_symplectic(n in 1usize..=3, steps in 1usize..2000, seed in any::<u64>(), c in 0.1f64..30.0) {
        let walk = random_walk(&WalkParams::new(n, steps, c, seed), &mut rng_from_seed(seed)).unwrap();
        prop_assert!(walk.max_relative_defect() < 1e-7);
    }

    #[test]
    fn walks_are_determined_by_their_seed(n in 1usize..=2, seed in any::<u64>()) {
        let p = WalkParams::new(n, 40, 2.0, seed);
        let a = random_walk(&p, &mut rng_from_seed(seed)).unwrap();
        let b = random_walk(&p, &mut rng_from_seed(seed)).unwrap();
        prop_assert_eq!(a.endpoint().matrix(), b.endpoint().matrix());
    }

    #[test]
    fn odd_index_iff_positive_component(seed in any::<u64>(), c in 0.5f64..20.0) {
        let walk = random_walk(&WalkParams::new(1, 200, c, seed), &mut rng_from_seed(seed)).unwrap();
        let label = classify_endpoint(walk.endpoint().matrix(), 1e-9);
        prop_assume!(label != ComponentLabel::SpZero);
        let Ok(index) = cz_index_winding(&walk, &WindingOptions::default()) else { return Ok(()) };
        prop_assert_eq!(index.rem_euclid(2) == 1, label == ComponentLabel::SpPlus);
    }

    #[test]
    fn segmentation_does_not_change_the_index(n in 1usize..=2, seed in any::<u64>(), len in 5usize..60) {
        let walk = random_walk(&WalkParams::new(n, 150, 4.0, seed), &mut rng_from_seed(seed)).unwrap();
        let opts = WindingOptions::default();
        if let (Ok(direct), Ok(seg)) = (cz_index_winding(&walk, &opts), cz_index_segmented(&walk, len, &opts)) {
            prop_assert_eq!(direct, seg.index);
        }
    }

    #[test]
    fn generating_relations_reproduce_steps(seed in any::<u64>(), var in 0.001f64..0.3) {
        let mut rng = rng_from_seed(seed);
        let step = NoiseTriple::sample(var, &mut rng).step_matrix();
        let v = generating_coeffs(&SymplecticMatrix::from_matrix_unchecked(step.clone())).unwrap();
        for _ in 0..20 {
            let (x0, y0): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let image = &step * nalgebra::DVector::from_vec(vec![x0, y0]);
            let (x_back, y1) = v.reconstruct(&[image[0]], &[y0]);
            prop_assert!((x_back[0] - x0).abs() < 1e-9 && (y1[0] - image[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn hessian_is_exactly_symmetric(n in 1usize..=2, seed in any::<u64>()) {
        let walk = random_walk(&WalkParams::new(n, 12, 2.0, seed), &mut rng_from_seed(seed)).unwrap();
        let coeffs: Vec<_> = walk
            .increments()
            .iter()
            .filter_map(|m| generating_coeffs(m).ok())
            .collect();
        prop_assume!(coeffs.len() == walk.steps());
        let h = hessian_dense(&coeffs).unwrap();
        prop_assert_eq!(max_abs(&(&h - h.transpose())), 0.0);
    }

    #[test]
    fn symmetrization_preserves_inertia(seed in any::<u64>(), steps in 1usize..60, c in 0.1f64..20.0) {
        let mut rng = rng_from_seed(seed);
        let noise: Vec<_> = (0..steps).map(|_| NoiseTriple::sample(c / steps as f64, &mut rng)).collect();
        let blocks = HessianBlocks::from_noise(&noise, DiagonalScaling::Exact);
        let sym = conjugate_and_symmetrize(&interleave_tridiagonal(&blocks)).unwrap();
        let sturm = signature_sturm(&sym, 0.0);
        let dense = dense_inertia(&blocks.to_dense(), 0.0);
        prop_assert_eq!((sturm.pos, sturm.neg), (dense.pos, dense.neg));
    }

    #[test]
    fn crossing_count_matches_dense_spectrum(seed in any::<u64>(), steps in 1usize..40, l in -3.0f64..3.0) {
        let mut rng = rng_from_seed(seed);
        let noise: Vec<_> = (0..steps).map(|_| NoiseTriple::sample(0.2, &mut rng)).collect();
        for scaling in [DiagonalScaling::Exact, DiagonalScaling::Halved] {
            let Ok(count) = eigenvalues_above(&noise, l, scaling) else { continue };
            let h = HessianBlocks::from_noise(&noise, scaling).to_dense();
            let shifted = &h - Mat::identity(h.nrows(), h.nrows()) * l;
            prop_assert_eq!(count, dense_inertia(&shifted, 0.0).pos as i64);
        }
    }

    #[test]
    fn f_is_monotone_in_l(seed in any::<u64>(), k in 1usize..40, log_var in -3.0f64..-0.3) {
        let mut rng = rng_from_seed(seed);
        let noise: Vec<_> = (0..k).map(|_| NoiseTriple::sample(10f64.powf(log_var), &mut rng)).collect();
        let grid: Vec<f64> = (0..30).map(|i| 0.25 * i as f64 * (1.0 + i as f64)).collect();
        for scaling in [DiagonalScaling::Exact, DiagonalScaling::Halved] {
            prop_assert!(monotonicity_check(&noise, k, &grid, scaling).unwrap());
        }
    }

    #[test]
    fn step_maps_are_increasing(seed in any::<u64>(), l in -10.0f64..10.0, u in -50.0f64..50.0, var in 0.001f64..2.0) {
        let noise = NoiseTriple::sample(var, &mut rng_from_seed(seed));
        for scaling in [DiagonalScaling::Exact, DiagonalScaling::Halved] {
            let f = StepMap::new(l, &noise, scaling).coeffs().unwrap();
            prop_assert!(f.det() > 0.0);
            let d = f.derivative(u);
            prop_assert!(d > 0.0 || d.is_infinite());
        }
    }

    #[test]
    fn diffusion_coefficients_are_uniformly_elliptic(x in -20.0f64..20.0, c in 0.01f64..100.0) {
        let s2 = diffusion_sigma(x, c).powi(2);
        prop_assert!(s2 >= c * (1.0 - 1e-12) && s2 <= 4.5 * c * (1.0 + 1e-12));
        prop_assert!(drift_b(x, c).abs() <= 7.0 * c / 8.0 * (1.0 + 1e-12));
    }
}

#[test]
fn canonical_endpoints_are_classified() {
    for n in 1..=3 {
        let (wp, wm) = canonical_endpoints(n);
        assert_eq!(classify_endpoint(wp.matrix(), 1e-9), ComponentLabel::SpPlus);
        assert_eq!(classify_endpoint(wm.matrix(), 1e-9), ComponentLabel::SpMinus);
        assert_eq!(rho(&Mat::identity(2 * n, 2 * n)).unwrap().angle(), 0.0);
    }
}

#[test]
fn jittering_interior_points_keeps_the_index() {
    let opts = WindingOptions::default();
    let mut rng = rng_from_seed(99);
    let mut compared = 0;
    for seed in 0..1000u64 {
        let walk = random_walk(&WalkParams::new(1, 60, 3.0, seed), &mut rng_from_seed(seed)).unwrap();
        let Ok(index) = cz_index_winding(&walk, &opts) else { continue };
        let last = walk.steps();
        let points: Vec<SymplecticMatrix> = walk
            .points()
            .iter()
            .enumerate()
            .map(|(j, p)| {
                if j == 0 || j == last {
                    return p.clone();
                }
                let bump = sample_algebra_element(1, 1e-12, &mut rng);
                SymplecticMatrix::from_matrix_unchecked(p.matrix() * lie_exp(&bump).matrix())
            })
            .collect();
        let jittered = DiscretePath::from_points(points).unwrap();
        assert_eq!(cz_index_winding(&jittered, &opts).unwrap(), index, "seed {seed}");
        compared += 1;
    }
    assert!(compared > 950);
}

#[test]
fn hessian_index_stabilises_under_refinement() {
    let shapes = [
        Mat::from_row_slice(2, 2, &[1.3, 0.2, 0.2, 0.9]),
        Mat::from_row_slice(2, 2, &[-2.0, 0.5, 0.5, 1.0]),
        Mat::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 3.5]),
    ];
    for s in &shapes {
        let indices: Vec<i64> = [64, 128, 256, 512]
            .iter()
            .map(|&steps| cz_index_hessian(&flow(s, steps)).unwrap().index)
            .collect();
        assert!(indices.windows(2).all(|w| w[0] == w[1]), "{indices:?}");
        assert_eq!(indices[0], cz_index_winding(&flow(s, 64), &WindingOptions::default()).unwrap());
    }
    let s4 = symmetric(4, 12, 1.5);
    let indices: Vec<i64> =
        [64, 128, 256, 512].iter().map(|&steps| cz_index_hessian(&flow(&s4, steps)).unwrap().index).collect();
    assert!(indices.windows(2).all(|w| w[0] == w[1]), "{indices:?}");
}

fn flow(s: &Mat, steps: usize) -> DiscretePath {
    let x = j0(s.nrows() / 2) * s / steps as f64;
    let inc = lie_exp(&SpAlgebraElement::from_matrix_unchecked(x));
    DiscretePath::from_increments(vec![inc; steps], ProductOrder::Left).unwrap()
}

#[test]
fn triangular_steps_match_exp_gaussian_moments() {
    let c = 1.0;
    let samples = 1_000_000;
    for steps in [100usize, 1000, 10_000] {
        let var = c / steps as f64;
        let mut rng = rng_from_seed(steps as u64);
        let mut sum = [0.0; 3];
        let mut cross = [[0.0; 3]; 3];
        for _ in 0..samples {
            let step = NoiseTriple::sample(var, &mut rng).step_matrix();
            let a = algebra_coords_n1(&log_n1(&step).unwrap());
            for i in 0..3 {
                sum[i] += a[i];
                for j in 0..3 {
                    cross[i][j] += a[i] * a[j];
                }
            }
        }
        let m = samples as f64;
        for i in 0..3 {
            let mean = sum[i] / m;
            let se = (var / m).sqrt();
            assert!(mean.abs() < 5.0 * se, "N = {steps}: mean of a{} = {mean:e}", i + 1);
            for j in 0..3 {
                let cov = cross[i][j] / m - (sum[i] / m) * (sum[j] / m);
                let target = if i == j { c } else { 0.0 };
                assert!(
                    (steps as f64 * cov - target).abs() < 0.03 + 5.0 * (2.0 / m).sqrt(),
                    "N = {steps}: N cov[{i}][{j}] = {}",
                    steps as f64 * cov
                );
            }
        }
    }
}

#[test]
fn both_product_orders_give_admissible_walks() {
    for order in [ProductOrder::Left, ProductOrder::Right] {
        let p = WalkParams::new(1, 500, 5.0, 3).with_scheme(Scheme::Triangular).with_order(order);
        let walk = random_walk(&p, &mut rng_from_seed(3)).unwrap();
        assert!(walk.max_relative_defect() < 1e-9);
        assert!(cz_index_winding(&walk, &WindingOptions::default()).is_ok());
    }
}
