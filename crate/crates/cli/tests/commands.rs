//! Subcommand outputs against closed-form values.

use indiff_cli::{cmd_converge, cmd_dual, cmd_figure, cmd_price, run_command, Command, CsvTable, ExperimentConfig, DEFAULT_CONFIG};

fn config(replacements: &[(&str, &str)]) -> ExperimentConfig {
    let mut text = DEFAULT_CONFIG.to_string();
    for (from, to) in replacements {
        assert!(text.contains(from), "{from}");
        text = text.replace(from, to);
    }
    ExperimentConfig::parse(&text).unwrap()
}

fn column(t: &CsvTable, name: &str) -> Vec<f64> {
    (0..t.rows().len()).map(|i| t.value(i, name).unwrap()).collect()
}

fn bachelier_atm(m: f64) -> f64 {
    // m Φ(m) + φ(m) through the error function series, independent of the library
    let erf = |x: f64| {
        let mut term = x;
        let mut sum = x;
        for n in 1..60 {
            term *= -x * x / n as f64;
            sum += term / (2 * n + 1) as f64;
        }
        2.0 / std::f64::consts::PI.sqrt() * sum
    };
    let cdf = 0.5 * (1.0 + erf(m / 2f64.sqrt()));
    m * cdf + (-0.5 * m * m).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

#[test]
fn price_grid_matches_closed_form() {
    let c = config(&[("impact.a_risk = 0.1, 0.25, 0.5, 1, 2, 4", "impact.a_risk = 0.25, 1, 4")]);
    let t = cmd_price(&c).unwrap();
    let u = column(&t, "u");
    for (u, m) in u.iter().zip([0.25, 0.5, 1.0]) {
        assert!((u - bachelier_atm(m)).abs() < 1e-8, "{u} vs {}", bachelier_atm(m));
    }
    assert!((u[1] - 0.6977965).abs() < 1e-7);
    assert!(column(&t, "pde_residual").iter().all(|r| r.abs() < 1e-3));
}

#[test]
fn price_at_maturity_leaves_derivatives_empty() {
    let c = config(&[("impact.a_risk = 0.1, 0.25, 0.5, 1, 2, 4", "impact.a_risk = 1\neval.times = 0.5, 1\neval.points = 7; 9")]);
    let t = cmd_price(&c).unwrap();
    assert_eq!(t.rows().len(), 4);
    assert_eq!(t.rows()[3], vec!["1", "1", "9", "1.5", "", ""]);
    assert_eq!(t.value(2, "u"), Some(0.0));
}

#[test]
fn zero_payoff_prices_and_certainty_equivalents_vanish() {
    let c = config(&[
        ("payoff.kind = basket_call", "payoff.kind = zero"),
        ("numerics.n_paths = 100000", "numerics.n_paths = 200"),
        ("impact.a_risk = 0.1, 0.25, 0.5, 1, 2, 4", "impact.a_risk = 1"),
    ]);
    assert!(column(&cmd_price(&c).unwrap(), "u").iter().all(|u| *u == 0.0));
    let conv = cmd_converge(&c).unwrap();
    assert!(column(&conv, "ce_value").iter().all(|v| *v == 0.0));
    assert!(column(&conv, "slack_bound").iter().all(|v| *v == 0.0));
}

#[test]
fn figure_endpoints() {
    let c = config(&[("impact.a_risk = 0.1, 0.25, 0.5, 1, 2, 4", "impact.a_risk = 1e-14, 1")]);
    let u = column(&cmd_figure(&c).unwrap(), "indifference_limit");
    assert!((u[0] - 0.3989423).abs() < 1e-6);
    assert!((u[1] - 0.6977965).abs() < 1e-7);
}

#[test]
fn dual_specs() {
    let c = config(&[
        ("payoff.kind = basket_call", "payoff.kind = zero"),
        ("impact.a_risk = 0.1, 0.25, 0.5, 1, 2, 4", "impact.a_risk = 1\neval.dual_specs = zero, constant:0.5, optimal"),
    ]);
    let t = cmd_dual(&c).unwrap();
    let v = column(&t, "lower_bound");
    assert_eq!(v[0], 0.0);
    assert!((v[1] + 0.125).abs() < 1e-12);
    assert_eq!(v[2], 0.0);
    assert_eq!(t.meta_value("integration"), Some("quadrature"));
}

#[test]
fn dual_in_two_dimensions() {
    let c = config(&[
        ("model.dim = 1", "model.dim = 2"),
        ("model.s0 = 8", "model.s0 = 8, 5"),
        ("model.mu = 0", "model.mu = 0, 0"),
        ("model.sigma = 1", "model.sigma = 1, 0.3, 0.3, 0.8"),
        ("payoff.a = 1", "payoff.a = 1, 0.5"),
        ("payoff.b = -8", "payoff.b = -10.5"),
        ("impact.phi0 = 0", "impact.phi0 = 0.2, -0.1"),
        ("impact.a_risk = 0.1, 0.25, 0.5, 1, 2, 4", "impact.a_risk = 1"),
    ]);
    let t = cmd_dual(&c).unwrap();
    let limit = t.value(1, "limit").unwrap();
    assert!((t.value(1, "lower_bound").unwrap() - limit).abs() < 1e-5);
    assert!(t.value(0, "lower_bound").unwrap() < limit);
}

#[test]
fn converge_respects_the_upper_bound() {
    let c = config(&[
        ("impact.a_risk = 0.1, 0.25, 0.5, 1, 2, 4", "impact.a_risk = 1"),
        ("impact.lambda = 0.4, 0.2, 0.1, 0.05", "impact.lambda = 0.4, 0.2"),
        ("model.mu = 0", "model.mu = 0.5"),
        ("numerics.n_paths = 100000", "numerics.n_paths = 5000"),
    ]);
    let t = cmd_converge(&c).unwrap();
    for i in 0..2 {
        let bound = t.value(i, "limit").unwrap() + t.value(i, "slack_bound").unwrap() + 3.0 * t.value(i, "ce_se").unwrap();
        assert!(t.value(i, "ce_value").unwrap() <= bound);
        assert!(t.value(i, "slack_bound").unwrap() > 0.0);
    }
    assert_eq!(t.meta_value("n_steps"), Some("1000 1000"));
}

#[test]
fn generic_payoff_runs_through_every_command() {
    let c = config(&[
        ("payoff.kind = basket_call", "payoff.kind = generic\npayoff.name = straddle"),
        ("impact.a_risk = 0.1, 0.25, 0.5, 1, 2, 4", "impact.a_risk = 1"),
        ("impact.lambda = 0.4, 0.2, 0.1, 0.05", "impact.lambda = 0.4"),
        ("numerics.n_paths = 100000", "numerics.n_paths = 4"),
        ("numerics.n_steps = auto", "numerics.n_steps = 20"),
    ]);
    for cmd in [Command::Price, Command::Figure, Command::Hedge, Command::Converge, Command::Dual] {
        let (t, ok) = run_command(cmd, &c).unwrap();
        assert!(ok && !t.rows().is_empty(), "{cmd:?}");
    }
    // straddle smoothing: g(x) = |x − 8| + √A/2 away from the kink, so u(0, 8) exceeds the call's value
    let u = cmd_price(&c).unwrap().value(0, "u").unwrap();
    assert!(u > 0.6977965);
}
