use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use randsmap::bench::{int_grid, percentile_nearest_rank, Spread};
use randsmap::decoders::{decode, knn_decode, pod_fit, pod_reconstruct, project_simplex, randsmap_fit, KnnOptions};
use randsmap::dmap::{dm_fit_with, DmParams, EigenNorm};
use randsmap::io::{read_matrix, write_matrix, Bundle};
use randsmap::pdesolvers::{lwr_godunov_flux, lwr_roe_flux, lwr_step, Lwr1dConfig, LwrFlux};
use randsmap::randfeat::{feature_matrix, sample_rff, sample_sigmoid};
use randsmap::synthdata::{gen_phantom, rotate_normalized, split_indices, SplitSpec};

fn columns_on_simplex(m: usize, n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = randsmap::rng::SeededRng::new(seed);
    let mut x = DMatrix::from_fn(m, n, |_, _| rng.uniform() + 0.05);
    for mut c in x.column_iter_mut() {
        let s = c.sum();
        c /= s;
    }
    x
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn simplex_projection_is_feasible_and_idempotent(v in prop::collection::vec(-5.0f64..5.0, 1..12)) {
        let p = project_simplex(&DVector::from_vec(v));
        prop_assert!(p.iter().all(|a| *a >= -1e-12));
        prop_assert!((p.sum() - 1.0).abs() <= 1e-12);
        let q = project_simplex(&p);
        prop_assert!((q - &p).amax() <= 1e-12);
    }

    #[test]
    fn simplex_projection_is_nearest_among_vertices(v in prop::collection::vec(-2.0f64..2.0, 2..8)) {
        let v = DVector::from_vec(v);
        let p = project_simplex(&v);
        let d = (&v - &p).norm();
        for i in 0..v.len() {
            let mut e = DVector::zeros(v.len());
            e[i] = 1.0;
            prop_assert!(d <= (&v - e).norm() + 1e-12);
        }
    }

    #[test]
    fn percentiles_are_ordered(mut v in prop::collection::vec(-1e3f64..1e3, 1..200)) {
        let s = Spread::of(&v);
        prop_assert!(s.p5 <= s.median && s.median <= s.p95);
        v.sort_by(f64::total_cmp);
        prop_assert!(v.contains(&percentile_nearest_rank(&v, 37.0)));
    }

    #[test]
    fn matrix_container_roundtrip_is_exact(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>(), flag in any::<bool>()) {
        let mut rng = randsmap::rng::SeededRng::new(seed);
        let m = DMatrix::from_fn(rows, cols, |_, _| rng.normal() * 1e3);
        let mut buf = Vec::new();
        write_matrix(&mut buf, &m, flag).unwrap();
        let (back, f) = read_matrix(&mut buf.as_slice()).unwrap();
        prop_assert_eq!(back, m);
        prop_assert_eq!(f, flag);
    }

    #[test]
    fn truncated_containers_are_rejected(cut in 0usize..60) {
        let m = DMatrix::from_element(2, 3, 0.5);
        let mut b = Bundle::new(&serde_json::json!({"kind": "x"})).unwrap();
        b.push("m", m);
        let mut buf = Vec::new();
        b.write_to(&mut buf).unwrap();
        let cut = cut.min(buf.len() - 1);
        prop_assert!(Bundle::read_from(&mut &buf[..cut]).is_err());
    }

    #[test]
    fn splits_are_disjoint(n in 3usize..200, a in 0usize..100, b in 0usize..100, c in 0usize..100, seed in any::<u64>()) {
        let spec = SplitSpec { n_train: a.min(n), n_val: b.min(n), n_test: c.min(n), seed };
        match split_indices(n, &spec) {
            Ok((tr, va, te)) => {
                let mut all: Vec<usize> = tr.iter().chain(&va).chain(&te).copied().collect();
                let len = all.len();
                all.sort_unstable();
                all.dedup();
                prop_assert_eq!(all.len(), len);
                prop_assert!(all.iter().all(|i| *i < n));
            }
            Err(_) => prop_assert!(spec.n_train + spec.n_val + spec.n_test > n),
        }
    }

    #[test]
    fn integer_grids_are_strictly_increasing(lo in 1usize..20, span in 0usize..40, n in 1usize..15) {
        let g = int_grid(lo, lo + span, n);
        prop_assert!(g.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(g.len() <= n);
        prop_assert_eq!(g[0], lo as f64);
    }

    #[test]
    fn numerical_fluxes_are_consistent(r in 0.0f64..1.0) {
        let f = 2.0 * r * (1.0 - r);
        prop_assert!((lwr_godunov_flux(r, r, 2.0, 1.0).unwrap() - f).abs() < 1e-14);
        prop_assert!((lwr_roe_flux(r, r, 2.0, 1.0).unwrap() - f).abs() < 1e-14);
    }

    #[test]
    fn lwr_step_conserves_mass(seed in any::<u64>(), roe in any::<bool>()) {
        let cfg = Lwr1dConfig { m_cells: 64, flux: if roe { LwrFlux::Roe } else { LwrFlux::Godunov }, dt: 0.02, ..Default::default() };
        let mut rng = randsmap::rng::SeededRng::new(seed);
        let mut rho = DVector::from_fn(64, |_, _| rng.uniform());
        let m0 = rho.sum();
        for _ in 0..20 {
            rho = lwr_step(&rho, &cfg).unwrap();
        }
        prop_assert!(((rho.sum() - m0) / m0).abs() <= 1e-13);
        prop_assert!(rho.iter().all(|v| *v >= -1e-12 && *v <= 1.0 + 1e-12));
    }

    #[test]
    fn rotations_have_unit_mass(theta in -7.0f64..7.0) {
        let base = gen_phantom(24).unwrap();
        let img = rotate_normalized(&base, theta).unwrap();
        prop_assert!((img.sum() - 1.0).abs() <= 1e-12);
        prop_assert!(img.data.iter().all(|v| *v >= 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn randsmap_conserves_mass_at_any_latent_point(seed in any::<u64>(), sigma in 0.3f64..3.0) {
        let x = columns_on_simplex(7, 20, seed);
        let mut rng = randsmap::rng::SeededRng::new(seed ^ 1);
        let y = DMatrix::from_fn(2, 20, |_, _| rng.uniform_in(-1.0, 1.0));
        let map = sample_rff(2, 12, sigma, seed).unwrap();
        let model = randsmap_fit(&feature_matrix(&map, &y).unwrap(), &x, 1e-3, 1e-8).unwrap();
        let y_new = DMatrix::from_fn(2, 15, |_, _| rng.uniform_in(-3.0, 3.0));
        let xh = decode(&model, &map, &y_new).unwrap();
        for c in xh.column_iter() {
            prop_assert!((c.sum() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn sigmoid_randsmap_conserves_on_training_points(seed in any::<u64>(), c in 1.0f64..10.0) {
        let x = columns_on_simplex(5, 12, seed);
        let mut rng = randsmap::rng::SeededRng::new(seed ^ 2);
        let y = DMatrix::from_fn(3, 12, |_, _| rng.normal());
        let map = sample_sigmoid(&y, 8, c, seed).unwrap();
        let model = randsmap_fit(&feature_matrix(&map, &y).unwrap(), &x, 1e-3, 1e-8).unwrap();
        let xh = decode(&model, &map, &y).unwrap();
        prop_assert!(xh.column_iter().all(|c| (c.sum() - 1.0).abs() <= 1e-9));
    }

    #[test]
    fn pod_reconstruction_preserves_mass(seed in any::<u64>(), d in 1usize..5) {
        let x = columns_on_simplex(9, 15, seed);
        let pod = pod_fit(&x, d).unwrap();
        let other = columns_on_simplex(9, 6, seed ^ 3);
        let xh = pod_reconstruct(&pod, &other).unwrap();
        prop_assert!(xh.column_iter().all(|c| (c.sum() - 1.0).abs() <= 1e-12));
    }

    #[test]
    fn knn_weights_stay_on_the_simplex(seed in any::<u64>(), k in 1usize..6) {
        let x = columns_on_simplex(6, 25, seed);
        let dm = dm_fit_with(&x, &DmParams { alpha: 1.0, w1: 1.0, d: 2, norm: EigenNorm::Stationary }).unwrap();
        let y = dm.embedding();
        let mut rng = randsmap::rng::SeededRng::new(seed ^ 4);
        let target = DVector::from_fn(2, |i, _| y[(i, 0)] + 0.01 * rng.normal());
        let opts = KnnOptions { k, tol: 1e-8, max_iter: 50 };
        let r = knn_decode(&dm, &y, &x, &target, &opts).unwrap();
        prop_assert!(r.alpha.iter().all(|a| *a >= -1e-12));
        prop_assert!((r.alpha.sum() - 1.0).abs() <= 1e-12);
        prop_assert!((r.x.sum() - 1.0).abs() <= 1e-12);
        prop_assert_eq!(r.neighbors.len(), k);
    }
}
