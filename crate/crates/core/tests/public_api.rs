use std::sync::Arc;

use indiff::asymptotics::{certainty_equivalent_mc, dual_lower_bound, optimal_dual_y, DualIntegration};
use indiff::hedger::{bound_check, position_bound, wealth, Hedger};
use indiff::market::{simulate_path, simulate_paths};
use indiff::quadrature::{default_kink_rule, default_pricing_rule};
use indiff::{BachelierModel, Payoff, Pricer, SpdMatrix, TimeGrid};
use proptest::prelude::*;

fn erf_series(x: f64) -> f64 {
    let mut term = x;
    let mut sum = x;
    for n in 1..200 {
        term *= -x * x / n as f64;
        sum += term / (2 * n + 1) as f64;
    }
    2.0 / std::f64::consts::PI.sqrt() * sum
}

fn phi_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf_series(x / std::f64::consts::SQRT_2))
}

fn phi_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn two_asset_pricer(a: f64, payoff: Payoff) -> Pricer {
    let sigma = SpdMatrix::from_rows(&[[1.0, 0.3], [0.3, 0.8]]).unwrap();
    let model = BachelierModel::new(vec![0.1, -0.2], vec![0.2, 0.0], sigma, 1.0).unwrap();
    Pricer::new(a, model, payoff, Arc::new(default_pricing_rule(2).unwrap())).unwrap()
}

#[test]
fn one_asset_limit_matches_series_oracle() {
    let model = BachelierModel::new(vec![0.0], vec![0.0], SpdMatrix::scalar(1.0).unwrap(), 1.0).unwrap();
    for a in [0.1, 1.0, 4.0] {
        let pricer = Pricer::new(a, model.clone(), Payoff::basket_call(vec![1.0], 0.0), Arc::new(default_pricing_rule(1).unwrap())).unwrap();
        let z = a.sqrt() / 2.0;
        let expected = z * phi_cdf(z) + phi_pdf(z);
        assert!((pricer.indifference_limit(&[0.0]).unwrap() - expected).abs() < 1e-10);
    }
}

#[test]
fn generic_search_agrees_with_closed_form_basket() {
    let closed = two_asset_pricer(1.5, Payoff::basket_call(vec![0.6, 0.4], -0.1));
    let generic = two_asset_pricer(1.5, Payoff::basket_call_as_generic(vec![0.6, 0.4], -0.1));
    for x in [[0.0, 0.0], [1.0, -0.5], [-2.0, 0.7]] {
        let g_closed = closed.g(&x).unwrap();
        let g_generic = generic.g(&x).unwrap();
        assert!((g_closed - g_generic).abs() < 1e-6, "{g_closed} vs {g_generic}");
        let u_closed = closed.price_u_quadrature(0.2, &x).unwrap();
        let u_generic = generic.price_u(0.2, &x).unwrap();
        assert!((u_closed - u_generic).abs() < 1e-6, "{u_closed} vs {u_generic}");
    }
}

#[test]
fn optimal_dual_attains_limit_in_two_dimensions() {
    let pricer = two_asset_pricer(1.0, Payoff::basket_call(vec![0.5, 0.5], 0.0));
    let phi0 = [0.2, -0.1];
    let spec = optimal_dual_y(&pricer, &phi0, 1e-9).unwrap();
    let method = DualIntegration::Quadrature(Arc::new(default_kink_rule(2).unwrap()));
    let bound = dual_lower_bound(&pricer, &phi0, &spec, &method).unwrap();
    assert!((bound.value - pricer.limit_value(&phi0).unwrap()).abs() < 1e-5);
}

#[test]
fn tracking_hedge_stays_bounded_and_ce_below_limit() {
    let pricer = two_asset_pricer(1.0, Payoff::basket_call(vec![0.5, 0.5], 0.0));
    let phi0 = [0.0, 0.0];
    let hedger = Hedger::new(pricer.clone(), 0.2).unwrap();
    let grid = TimeGrid::new(400, 1.0).unwrap();
    let results: Vec<_> = (0..50)
        .map(|i| hedger.integrate_strategy(&simulate_path(pricer.model(), grid, 3, i), &phi0).unwrap())
        .collect();
    assert!(bound_check(&results) <= position_bound(&phi0, pricer.payoff(), 1e-9));
    let ce = certainty_equivalent_mc(&hedger, &phi0, 4000, grid, 11).unwrap();
    assert!(ce.value <= pricer.limit_value(&phi0).unwrap() + 3.0 * ce.std_error);
}

#[test]
fn recorded_wealth_matches_recomputation() {
    let pricer = two_asset_pricer(2.0, Payoff::basket_call(vec![1.0, -0.5], 0.3));
    let hedger = Hedger::new(pricer.clone(), 0.1).unwrap();
    let path = simulate_path(pricer.model(), TimeGrid::new(300, 1.0).unwrap(), 5, 0);
    let r = hedger.integrate_strategy(&path, &[0.1, 0.1]).unwrap();
    let v = wealth(&path, &r.phi_positions, &r.phi_rates, 0.1).unwrap();
    assert!((v - r.terminal_wealth).abs() < 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn path_batches_are_reproducible(seed in any::<u64>(), n in 1usize..40) {
        let pricer = two_asset_pricer(1.0, Payoff::zero(2));
        let grid = TimeGrid::new(n, 1.0).unwrap();
        let batch = simulate_paths(pricer.model(), grid, 5, seed).unwrap();
        for (i, path) in batch.iter().enumerate() {
            prop_assert_eq!(path, &simulate_path(pricer.model(), grid, seed, i as u64));
        }
    }
}
