//! Randomized invariants over seeded generator instances.

use leech_core::equations::solve_stein_symmetric;
use leech_core::io::{self, ProblemFile};
use leech_core::linalg::{self, CMat, Cx};
use leech_core::realization::{eval_r, mcmillan_degree_estimate};
use leech_core::toeplitz::{build_sections, central_solution_taylor, positivity_margin};
use leech_core::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dims_strategy() -> impl Strategy<Value = Dimensions> {
    (1usize..=3, 1usize..=2, 1usize..=2).prop_map(|(n, m, q)| Dimensions { n, m, p: m, q })
}

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| Cx::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

fn instance(seed: u64, dims: Dimensions) -> GeneratedInstance {
    generate_instance(seed, dims, 0.7).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn r_is_hermitian_on_circle(seed in 0u64..10_000, dims in dims_strategy(), omega in 0.0..std::f64::consts::TAU) {
        let r = instance(seed, dims).realization;
        let pd = compute_problem_data(&r).unwrap();
        let v = eval_r(&r, &pd, linalg::circle(omega)).unwrap();
        prop_assert!(linalg::fnorm(&(&v - v.adjoint())) <= 1e-12 * (1.0 + linalg::fnorm(&v)));
    }

    #[test]
    fn degree_is_similarity_invariant(seed in 0u64..10_000, dims in dims_strategy()) {
        let g = instance(seed, dims).g;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = g.order();
        let t = random(&mut rng, n, n) + linalg::eye(n) * Cx::new(3.0, 0.0);
        let t_inv = t.clone().try_inverse().unwrap();
        let h = TransferFunction::new(g.d.clone(), &g.c * &t, &t_inv * &g.a * &t, &t_inv * &g.b).unwrap();
        prop_assert_eq!(mcmillan_degree_estimate(&g, 1e-10).unwrap(), mcmillan_degree_estimate(&h, 1e-10).unwrap());
    }

    #[test]
    fn problem_file_round_trip(seed in 0u64..10_000, dims in dims_strategy()) {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
        let inst = instance(seed, dims);
        io::save_problem(&a, &ProblemFile::from_generated(&inst)).unwrap();
        let loaded = io::load_problem(&a).unwrap();
        prop_assert_eq!(&loaded, &inst.realization);
        io::save_problem(&b, &io::read_problem_file(&a).unwrap()).unwrap();
        prop_assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn stein_solution_is_hermitian_psd(seed in 0u64..10_000, n in 1usize..8, rho in 0.1f64..0.95) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random(&mut rng, n, n);
        let a = &a * Cx::new(rho / linalg::spectral_radius(&a).unwrap(), 0.0);
        let b = random(&mut rng, n, 2);
        let p = solve_stein_symmetric(&a, &b).unwrap();
        let scale = 1.0 + linalg::fnorm(&p);
        prop_assert!(linalg::fnorm(&(&p - p.adjoint())) <= 1e-13 * scale);
        prop_assert!(linalg::min_eig(&p) >= -1e-12 * scale);
    }

    #[test]
    fn sections_nest_exactly(seed in 0u64..10_000, dims in dims_strategy(), n in 4usize..24) {
        let r = instance(seed, dims).realization;
        let small = build_sections(&r, n).unwrap();
        let big = build_sections(&r, n + 1).unwrap();
        for (s, b) in [(&small.t_g.matrix, &big.t_g.matrix), (&small.t_k.matrix, &big.t_k.matrix), (&small.t_r, &big.t_r)] {
            prop_assert_eq!(&b.view((0, 0), s.shape()).into_owned(), s);
        }
    }

    #[test]
    fn central_series_stabilizes(seed in 0u64..10_000, dims in dims_strategy()) {
        let r = instance(seed, dims).realization;
        let a = central_solution_taylor(&build_sections(&r, 32).unwrap(), 6).unwrap().x;
        let b = central_solution_taylor(&build_sections(&r, 64).unwrap(), 6).unwrap().x;
        let worst = (0..6).map(|k| linalg::fnorm(&(&a[k] - &b[k]))).fold(0.0, f64::max);
        prop_assert!(worst < 1e-6, "{}", worst);
    }

    #[test]
    fn margin_is_non_increasing(seed in 0u64..10_000, dims in dims_strategy()) {
        let r = instance(seed, dims).realization;
        let margins: Vec<f64> = [4, 8, 16, 32].iter().map(|&n| positivity_margin(&build_sections(&r, n).unwrap())).collect();
        prop_assert!(margins.windows(2).all(|w| w[1] <= w[0] + 1e-12 * (1.0 + w[0].abs())), "{:?}", margins);
    }

    #[test]
    fn series_is_pointwise_product(seed in 0u64..10_000, dims in dims_strategy(), omega in 0.0..std::f64::consts::TAU) {
        let inst = instance(seed, dims);
        let z = linalg::circle(omega);
        let product = inst.g.series(&inst.x0).unwrap();
        let expected = inst.g.eval(z).unwrap() * inst.x0.eval(z).unwrap();
        prop_assert!(linalg::fnorm(&(product.eval(z).unwrap() - &expected)) <= 1e-12 * (1.0 + linalg::fnorm(&expected)));
    }
}
