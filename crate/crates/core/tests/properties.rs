//! Structural invariants checked on random inputs.

use ccva_core::capital::{irb_correlation, irb_weight, k_ccp, k_ccr, k_cva, CapitalParams, NettingSet};
use ccva_core::experiments::{positions_from_alphas, Scenario};
use ccva_core::margining::{
    allocate_default_fund, breach_from_values, ccp_weight, default_fund_total, initial_margin_proxy, regulatory_ead,
    WaterfallState,
};
use ccva_core::market_model::{simulate_driver, swap_mtm, SwapParams, SwapSpec};
use proptest::prelude::*;

fn base_swap() -> SwapSpec {
    SwapSpec::new(&SwapParams::default()).unwrap()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn waterfall_conserves_losses(
        equity in 0.0..5.0f64,
        dfc in prop::collection::vec(0.0..3.0f64, 2..8),
        dead in prop::collection::vec(any::<bool>(), 8),
        breaches in prop::collection::vec(0.0..4.0f64, 1..6),
    ) {
        let mut w = WaterfallState::new(dfc.len());
        w.reset_equity(equity);
        w.reset_default_fund(&dfc);
        for (i, &d) in dead.iter().take(dfc.len()).enumerate() {
            if d { w.mark_default(i); }
        }
        for &b in &breaches {
            let live: Vec<f64> = w.accounts.iter().map(|a| if a.alive { a.dfc } else { 0.0 }).collect();
            let live_total: f64 = live.iter().sum();
            let before = w.equity;
            let out = w.apply(b);
            let refilled: f64 = out.refills.iter().sum();
            prop_assert!(close(out.equity_burn + refilled + out.uncovered, b, 1e-12));
            prop_assert!(close(before - w.equity, out.equity_burn, 1e-12));
            for (k, r) in out.refills.iter().enumerate() {
                if live[k] == 0.0 {
                    prop_assert_eq!(*r, 0.0);
                } else {
                    prop_assert!(close(*r, refilled * live[k] / live_total, 1e-10));
                }
            }
        }
    }

    #[test]
    fn default_fund_split_adds_up(total in 0.0..100.0f64, ims in prop::collection::vec(0.0..10.0f64, 1..12)) {
        let dfc = allocate_default_fund(total, &ims);
        prop_assert!(close(dfc.iter().sum::<f64>(), total, 1e-13));
        prop_assert!(dfc.iter().all(|&d| d >= -1e-12));
    }

    #[test]
    fn cover_two_is_two_largest(eads in prop::collection::vec(0.0..10.0f64, 2..12)) {
        let mut s = eads.clone();
        s.sort_by(|a, b| b.total_cmp(a));
        prop_assert!(close(default_fund_total(&eads), s[0] + s[1], 1e-14));
    }

    #[test]
    fn clearing_positions_cancel(
        alphas in prop::collection::vec(-1.0..1.0f64, 3..9),
        seed in 0u64..1000,
        t in 0.0..5.2f64,
    ) {
        let mut alphas = alphas;
        let n = alphas.len();
        let mean = alphas.iter().sum::<f64>() / n as f64;
        alphas.iter_mut().for_each(|a| *a -= mean);
        prop_assume!(alphas[0].abs() > 1e-3);
        let (omegas, _) = positions_from_alphas(&alphas, 0).unwrap();
        prop_assert!(omegas.iter().sum::<f64>().abs() < 1e-10);
        let spec = base_swap();
        let grid = [0.0, t];
        let path = simulate_driver(&spec, &grid, seed, 0).unwrap();
        let total: f64 = omegas.iter().map(|&w| swap_mtm(&spec, t, &path, ccp_weight(w)).unwrap()).sum();
        prop_assert!(total.abs() < 1e-10);
    }

    #[test]
    fn covered_liquidation_has_no_loss(q in -5.0..5.0f64, extra in 0.0..5.0f64, r in 0.0..1.0f64) {
        let b = breach_from_values(q, q.max(0.0) + extra, r);
        prop_assert_eq!(b.raw, 0.0);
        prop_assert_eq!(b.loss, 0.0);
    }

    #[test]
    fn margin_grows_with_quantile(a in 0.55..0.98f64, step in 0.001..0.019f64, t in 0.0..4.9f64, s in 50.0..200.0f64, omega in -3.0..3.0f64) {
        prop_assume!(omega.abs() > 1e-6);
        let spec = base_swap();
        let dp = 6.0 / 250.0;
        let lo = initial_margin_proxy(&spec, omega, t, s, a, dp);
        let hi = initial_margin_proxy(&spec, omega, t, s, a + step, dp);
        prop_assert!(hi >= lo && lo >= 0.0);
    }

    #[test]
    fn exposure_at_default_scales_with_size(t in 0.0..4.5f64, s in 50.0..200.0f64, omega in -3.0..3.0f64, k in 0.1..10.0f64) {
        let spec = base_swap();
        let e1 = regulatory_ead(&spec, omega, t, s, 0.7, 0.024);
        let ek = regulatory_ead(&spec, k * omega, t, s, 0.7, 0.024);
        prop_assert!(close(ek, k * e1, 1e-12));
        prop_assert!(e1 >= 0.0);
    }

    #[test]
    fn capital_is_homogeneous(eads in prop::collection::vec(0.0..1.0f64, 1..6), k in 0.1..10.0f64, dp in 1e-4..0.3f64) {
        let p = CapitalParams::default();
        let scaled: Vec<f64> = eads.iter().map(|e| k * e).collect();
        prop_assert!(close(k_ccp(&scaled, &p), k * k_ccp(&eads, &p), 1e-12));
        let sets = |xs: &[f64]| -> Vec<NettingSet> {
            xs.iter().map(|&ead| NettingSet { dp, recovery: 0.4, maturity: 3.0, ead }).collect()
        };
        prop_assert!(close(k_ccr(&sets(&scaled), &p).unwrap(), k * k_ccr(&sets(&eads), &p).unwrap(), 1e-12));
        prop_assert!(close(k_cva(&sets(&scaled), &p), k * k_cva(&sets(&eads), &p), 1e-12));
    }

    #[test]
    fn irb_weight_behaves(dp in 1e-4..0.5f64, r in 0.0..1.0f64, m in 1.0..5.0f64) {
        let rho = irb_correlation(dp);
        prop_assert!((0.12 - 1e-12..=0.24 + 1e-12).contains(&rho));
        let w = irb_weight(dp, r, m).unwrap();
        prop_assert!(w >= 0.0 && w <= 1.0 - r + 1e-12);
        prop_assert!(irb_weight(dp, 1.0, m).unwrap().abs() < 1e-15);
    }

    #[test]
    fn scenario_survives_serialization(seed in any::<u64>(), paths in 2usize..100_000, a in 0.6..0.99f64) {
        let mut sc = Scenario::base();
        sc.seed = seed;
        sc.n_paths = paths;
        sc.ccp.quantile = a;
        let back = Scenario::from_toml(&sc.to_toml().unwrap()).unwrap();
        prop_assert_eq!(back, sc);
    }
}
