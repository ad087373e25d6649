use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tcm_core::mc_harness::{fit_convergence_order, NoiseGenerator};
use tcm_core::problems;
use tcm_core::scheme::{simulate_path, Scheme, WienerIncrements};
use tcm_core::subordinator::{SubordinatorModel, TimeChangeGrid};
use tcm_core::truncation::TruncationConfig;
use tcm_core::{ErrorRow, ErrorTable};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stable_grid_invariants(alpha in 0.3f64..0.99, k in 2i32..10, seed in any::<u64>()) {
        let h = 2f64.powi(-k);
        let model = SubordinatorModel::stable(alpha).unwrap();
        let grid = TimeChangeGrid::build(&model, h, 1.0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let tau = grid.tau();
        prop_assert!(tau[grid.n()] <= 1.0 && tau[grid.n() + 1] > 1.0);
        for (i, &t) in tau.iter().enumerate().take(grid.n() + 1) {
            prop_assert_eq!(grid.evaluate_inverse(t).unwrap(), i as f64 * h);
        }
        prop_assert_eq!(grid.evaluate_inverse(1.0).unwrap(), grid.n() as f64 * h);
    }

    #[test]
    fn aggregation_sums_consecutive_increments(seed in any::<u64>(), j in 0usize..1000, k in 1usize..20) {
        let gen = NoiseGenerator::new(SubordinatorModel::stable(0.8).unwrap(), 1e-3, 1.0, seed)
            .unwrap()
            .with_multiples(&[k]);
        let fine = gen.trajectory(j).unwrap();
        let coarse = fine.aggregate(k).unwrap();
        prop_assert_eq!(coarse.len() * k, fine.len());
        for (n, dw) in coarse.wiener().iter().enumerate() {
            let sum: f64 = fine.wiener()[n * k..(n + 1) * k].iter().sum();
            prop_assert_eq!(*dw, sum);
        }
        prop_assert_eq!(gen.trajectory(j).unwrap(), fine);
    }

    #[test]
    fn paths_are_reproducible_and_finite(seed in any::<u64>(), h in prop::sample::select(vec![0.1, 0.05, 0.01])) {
        let p = problems::example1();
        let cfg = TruncationConfig::default();
        let model = SubordinatorModel::stable(0.9).unwrap();
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let grid = TimeChangeGrid::build(&model, h, 1.0, &mut rng).unwrap();
            let w = WienerIncrements::sample(h, grid.n(), &mut rng);
            simulate_path(&p, &cfg, &grid, &w, Scheme::TruncatedMilstein).unwrap()
        };
        let a = run();
        prop_assert_eq!(a.len(), a.grid().n() + 1);
        prop_assert_eq!(a.state(0), p.y0());
        prop_assert!(a.states().all(|x| x[0].is_finite()));
        prop_assert_eq!(a, run());
    }

    #[test]
    fn power_law_tables_fit_exactly(rate in 0.05f64..1.5, c in 0.1f64..10.0) {
        let rows = [1e-1, 1e-2, 1e-3, 1e-4]
            .iter()
            .map(|&h| ErrorRow {
                h,
                trajectories: 1,
                p_bar: 2.0,
                error: c * h.powf(rate),
                stderr: 0.0,
                mean_sup_sq: 0.0,
            })
            .collect();
        let table = ErrorTable {
            problem: "synthetic".into(),
            subordinator: "deterministic".into(),
            scheme: Scheme::TruncatedMilstein,
            seed: 0,
            h_ref: 1e-5,
            blowups: 0,
            rows,
        };
        let fit = fit_convergence_order(&table).unwrap();
        prop_assert!((fit.slope - rate).abs() < 1e-10);
        prop_assert!((fit.intercept - c.log10()).abs() < 1e-10);
    }
}
