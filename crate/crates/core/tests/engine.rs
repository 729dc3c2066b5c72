//! End-to-end checks of the path engine on small runs.

use ccva_core::experiments::Scenario;
use ccva_core::xva_engine::{bva_samples, ccva_samples, estimate_xva, RunConfig, Setup};

fn small(paths: usize) -> Scenario {
    let mut sc = Scenario::base();
    sc.n_paths = paths;
    sc
}

fn run(sc: &Scenario, setup: Setup, workers: Option<usize>) -> Vec<ccva_core::xva_engine::PathSample> {
    let problem = sc.problem(setup).unwrap();
    let cfg = sc.run_config(workers);
    match setup {
        Setup::Ccp => ccva_samples(&problem, &cfg).unwrap(),
        Setup::Csa => bva_samples(&problem, &cfg).unwrap(),
    }
}

#[test]
fn samples_do_not_depend_on_worker_count() {
    let sc = small(300);
    for setup in [Setup::Ccp, Setup::Csa] {
        let one = run(&sc, setup, Some(1));
        let many = run(&sc, setup, Some(4));
        assert_eq!(one, many);
    }
}

#[test]
fn no_funding_spread_means_no_funding_costs() {
    let mut sc = small(500);
    sc.funding.lambda_bar = Some(0.0);
    sc.funding.lambda = 0.0;
    sc.ccp.fee = 0.0;
    sc.csa.fee = 0.0;
    for setup in [Setup::Ccp, Setup::Csa] {
        for s in run(&sc, setup, None) {
            assert_eq!(s.mva, 0.0);
            assert_eq!(s.mla, 0.0);
        }
    }
}

#[test]
fn margin_funding_is_a_cost_without_lending_benefit() {
    let sc = small(500);
    for setup in [Setup::Ccp, Setup::Csa] {
        assert!(run(&sc, setup, None).iter().all(|s| s.mva >= 0.0));
    }
}

#[test]
fn full_own_recovery_removes_debt_adjustment() {
    let mut sc = small(500);
    sc.ccp.recovery_self = 1.0;
    sc.csa.recovery_self = 1.0;
    for setup in [Setup::Ccp, Setup::Csa] {
        assert!(run(&sc, setup, None).iter().all(|s| s.dva == 0.0));
    }
}

#[test]
fn nonpositive_hurdle_rate_is_rejected() {
    let mut sc = small(300);
    sc.capital.hurdle = 0.0;
    assert!(sc.problem(Setup::Ccp).is_err());
}

#[test]
fn clearing_house_conserves_losses_per_path() {
    let sc = small(1000);
    for s in run(&sc, Setup::Ccp, None) {
        assert!(s.clearing_residual.abs() < 1e-9, "residual {}", s.clearing_residual);
    }
}

#[test]
fn standard_error_shrinks_like_root_n() {
    let sc = small(1);
    for setup in [Setup::Ccp, Setup::Csa] {
        let problem = sc.problem(setup).unwrap();
        let se = |n: usize| {
            let cfg = RunConfig { n_paths: n, seed: 11, workers: None };
            estimate_xva(&problem, &cfg).unwrap().total.se
        };
        let ratio = se(1000) / se(4000);
        assert!((1.5..2.7).contains(&ratio), "{setup}: ratio {ratio}");
    }
}

#[test]
fn reports_are_reproducible() {
    let sc = small(200);
    for setup in [Setup::Ccp, Setup::Csa] {
        let problem = sc.problem(setup).unwrap();
        let a = estimate_xva(&problem, &sc.run_config(Some(2))).unwrap();
        let b = estimate_xva(&problem, &sc.run_config(Some(3))).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.mla.is_some(), setup == Setup::Ccp);
    }
}
