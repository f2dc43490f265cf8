//! Certainty equivalents along the tracking strategy, dual lower bounds for
//! their `Λ ↓ 0` limit, and the `cosh/sinh` kernels behind the dual measures.

use std::fmt;
use std::sync::Arc;

use log::warn;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::hedger::Hedger;
use crate::linalg::{dot, norm, quad_form, row_vec_mul, Matrix, ScaledHyperbolic, SpdMatrix};
use crate::market::{check_a, g_argmax, path_rng, simulate_path, Payoff, TimeGrid};
use crate::pricer::Pricer;
use crate::quadrature::{KahanSum, QuadratureRule};

/// Below this impact the exponential moments get too heavy-tailed for plain
/// Monte Carlo at desk sample sizes.
pub const LAMBDA_FLOOR: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct CeEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub lambda: f64,
    pub a_risk: f64,
}

/// `(log mean exp(e), standard error of that log)`, shifted by `max e`.
fn log_mean_exp(exponents: &[f64]) -> (f64, f64) {
    let n = exponents.len();
    let shift = exponents.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = KahanSum::default();
    for e in exponents {
        sum.add((e - shift).exp());
    }
    let mean = sum.value() / n as f64;
    let se = if n > 1 {
        let mut ss = KahanSum::default();
        for e in exponents {
            ss.add(((e - shift).exp() - mean).powi(2));
        }
        (ss.value() / (n - 1) as f64).sqrt() / (mean * (n as f64).sqrt())
    } else {
        0.0
    };
    (mean.ln() + shift, se)
}

fn hedge_exponents(hedger: &Hedger, phi0: &[f64], n_paths: usize, grid: TimeGrid, seed: u64) -> Result<Vec<f64>> {
    if n_paths == 0 {
        return Err(Error::InvalidParameter("n_paths must be ≥ 1".into()));
    }
    check_dim(hedger.pricer().dim(), phi0.len())?;
    let model = hedger.pricer().model();
    (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let path = simulate_path(model, grid, seed, i);
            hedger.integrate_summary(&path, phi0).map(|s| s.utility_exponent)
        })
        .collect()
}

fn warn_below_floor(lambda: f64) {
    if lambda < LAMBDA_FLOOR {
        warn!("Λ = {lambda} is below {LAMBDA_FLOOR}; exponential-moment estimates are unreliable");
    }
}

/// `(Λ/A) log E[exp((A/Λ)(f(S_T) − V_T))]` along the tracking strategy.
pub fn certainty_equivalent_mc(hedger: &Hedger, phi0: &[f64], n_paths: usize, grid: TimeGrid, seed: u64) -> Result<CeEstimate> {
    let impact = hedger.impact();
    warn_below_floor(impact.lambda());
    let exps = hedge_exponents(hedger, phi0, n_paths, grid, seed)?;
    let (log_mean, se) = log_mean_exp(&exps);
    let scale = 1.0 / impact.alpha();
    let value = scale * log_mean;
    if !value.is_finite() {
        return Err(Error::OverflowGuard("certainty equivalent is not finite".into()));
    }
    Ok(CeEstimate { value, std_error: scale * se, n_paths, lambda: impact.lambda(), a_risk: impact.a_risk() })
}

/// Difference of the certainty equivalents with payoff `f` and with `f ≡ 0`,
/// each hedged with its own tracking strategy on common random numbers.
///
/// The strategies are only asymptotically optimal, so at finite `Λ` this is a
/// proxy for the indifference price that converges to
/// [`Pricer::indifference_limit`].
pub fn indifference_price_mc(hedger: &Hedger, phi0: &[f64], n_paths: usize, grid: TimeGrid, seed: u64) -> Result<CeEstimate> {
    let impact = hedger.impact();
    warn_below_floor(impact.lambda());
    let zero = Hedger::new(hedger.pricer().with_payoff(Payoff::zero(phi0.len()))?, impact.lambda())?;
    let with_claim = hedge_exponents(hedger, phi0, n_paths, grid, seed)?;
    let without = hedge_exponents(&zero, phi0, n_paths, grid, seed)?;
    let (lf, _) = log_mean_exp(&with_claim);
    let (l0, _) = log_mean_exp(&without);
    // delta method on log(mean_f) − log(mean_0) with paired samples
    let n = n_paths as f64;
    let se = if n_paths > 1 {
        let mut ss = KahanSum::default();
        for (ef, e0) in with_claim.iter().zip(&without) {
            let d = (ef - lf).exp() - (e0 - l0).exp();
            ss.add(d * d);
        }
        (ss.value() / (n - 1.0)).sqrt() / n.sqrt()
    } else {
        0.0
    };
    let scale = 1.0 / impact.alpha();
    let value = scale * (lf - l0);
    if !value.is_finite() {
        return Err(Error::OverflowGuard("indifference price is not finite".into()));
    }
    Ok(CeEstimate { value, std_error: scale * se, n_paths, lambda: impact.lambda(), a_risk: impact.a_risk() })
}

/// Sample mean of `M_T / M_0` for the drift-corrected process of
/// [`Hedger::supermartingale_exponent`], which stays at or below one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
}

fn corrected_log_m(hedger: &Hedger, t: f64, s: &[f64], phi: &[f64], phi0: &[f64], wealth: f64) -> Result<f64> {
    let pricer = hedger.pricer();
    let model = pricer.model();
    let sqrt_a = pricer.a_risk().sqrt();
    let phi_sigma = row_vec_mul(phi, model.sigma().entries())?;
    let x: Vec<f64> = s.iter().zip(&phi_sigma).map(|(s, v)| s - sqrt_a * v).collect();
    let u = pricer.price_u(t, &x)?;
    let moved: Vec<f64> = phi.iter().zip(phi0).map(|(a, b)| a - b).collect();
    Ok(hedger.impact().alpha() * (u + 0.5 * sqrt_a * dot(&phi_sigma, phi) - wealth)
        - sqrt_a * dot(&moved, &model.mu_sigma_inv()))
}

/// Per-path hedging diagnostics aggregated over a Monte Carlo run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HedgeStatistics {
    pub ratio: RatioEstimate,
    pub mean_terminal_wealth: f64,
    pub mean_cost: f64,
    pub max_sup_position: f64,
}

pub fn hedge_statistics_mc(hedger: &Hedger, phi0: &[f64], n_paths: usize, grid: TimeGrid, seed: u64) -> Result<HedgeStatistics> {
    if n_paths < 2 {
        return Err(Error::InvalidParameter("n_paths must be ≥ 2".into()));
    }
    check_dim(hedger.pricer().dim(), phi0.len())?;
    let model = hedger.pricer().model();
    let start = corrected_log_m(hedger, 0.0, model.s0(), phi0, phi0, 0.0)?;
    let per_path = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let path = simulate_path(model, grid, seed, i);
            let summary = hedger.integrate_summary(&path, phi0)?;
            let end = corrected_log_m(
                hedger,
                grid.horizon(),
                path.terminal_price(),
                &summary.terminal_position,
                phi0,
                summary.terminal_wealth,
            )?;
            let r = (end - start).exp();
            if r.is_finite() {
                Ok((r, summary.terminal_wealth, summary.cost_integral, summary.sup_position_norm))
            } else {
                Err(Error::OverflowGuard(format!("M_T/M_0 not finite on path {i}")))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let n = n_paths as f64;
    let (mut ratio, mut wealth, mut cost) = (KahanSum::default(), KahanSum::default(), KahanSum::default());
    let mut max_sup = 0.0f64;
    for (r, v, c, sup) in &per_path {
        ratio.add(*r);
        wealth.add(*v);
        cost.add(*c);
        max_sup = max_sup.max(*sup);
    }
    let mean = ratio.value() / n;
    let var = per_path.iter().map(|p| (p.0 - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(HedgeStatistics {
        ratio: RatioEstimate { mean, std_error: (var / n).sqrt(), n_paths },
        mean_terminal_wealth: wealth.value() / n,
        mean_cost: cost.value() / n,
        max_sup_position: max_sup,
    })
}

pub fn supermartingale_ratio_mc(hedger: &Hedger, phi0: &[f64], n_paths: usize, grid: TimeGrid, seed: u64) -> Result<RatioEstimate> {
    Ok(hedge_statistics_mc(hedger, phi0, n_paths, grid, seed)?.ratio)
}

pub type DualMap = Arc<dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync>;

/// `Y = h(W_T)` for the dual functional.
#[derive(Clone)]
pub struct DualSpec {
    name: String,
    map: DualMap,
    /// Declared bound on `‖h(w)‖`, checked at every evaluation.
    bound: Option<f64>,
}

impl fmt::Debug for DualSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DualSpec").field("name", &self.name).field("bound", &self.bound).finish()
    }
}

impl DualSpec {
    pub fn new<F>(name: impl Into<String>, bound: Option<f64>, map: F) -> Self
    where
        F: Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync + 'static,
    {
        Self { name: name.into(), map: Arc::new(map), bound }
    }

    pub fn zero(dim: usize) -> Self {
        Self::new("zero", Some(0.0), move |_| Ok(vec![0.0; dim]))
    }

    pub fn constant(y: Vec<f64>) -> Self {
        let bound = norm(&y);
        Self::new("constant", Some(bound), move |_| Ok(y.clone()))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn bound(&self) -> Option<f64> {
        self.bound
    }

    pub fn eval(&self, w: &[f64]) -> Result<Vec<f64>> {
        let y = (self.map)(w)?;
        if let Some(b) = self.bound {
            let n = norm(&y);
            if n > b * (1.0 + 1e-12) + 1e-12 {
                return Err(Error::InvalidParameter(format!("dual spec '{}' exceeds its bound: {n} > {b}", self.name)));
            }
        }
        Ok(y)
    }
}

/// How the expectation over `W_T` is taken.
#[derive(Debug, Clone)]
pub enum DualIntegration {
    Quadrature(Arc<QuadratureRule>),
    MonteCarlo { n_samples: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualBound {
    pub value: f64,
    /// Zero for quadrature.
    pub std_error: f64,
}

/// `E[f(s0 + W_Tσ − Y) + ⟨Φ0, Y⟩ − ⟨Y, Yσ⁻¹⟩/(2√A)]`, a lower bound for the
/// limit of the certainty equivalent for any bounded `Y = h(W_T)`.
pub fn dual_lower_bound(pricer: &Pricer, phi0: &[f64], spec: &DualSpec, method: &DualIntegration) -> Result<DualBound> {
    let model = pricer.model();
    let d = model.dim();
    check_dim(d, phi0.len())?;
    let sqrt_a = pricer.a_risk().sqrt();
    let sqrt_t = model.horizon().sqrt();
    let sigma = model.sigma().entries();
    let sigma_inv = model.sigma_inv().entries();
    let payoff = pricer.payoff();
    let integrand = |z: &[f64]| -> Result<f64> {
        let w: Vec<f64> = z.iter().map(|v| sqrt_t * v).collect();
        let y = spec.eval(&w)?;
        check_dim(d, y.len())?;
        let ws = row_vec_mul(&w, sigma)?;
        let x: Vec<f64> = model.s0().iter().zip(&ws).zip(&y).map(|((s, a), b)| s + a - b).collect();
        Ok(payoff.eval(&x) + dot(phi0, &y) - quad_form(&y, sigma_inv)? / (2.0 * sqrt_a))
    };
    match method {
        DualIntegration::Quadrature(rule) => {
            check_dim(d, rule.dim())?;
            Ok(DualBound { value: rule.try_expect(integrand)?, std_error: 0.0 })
        }
        DualIntegration::MonteCarlo { n_samples, seed } => {
            if *n_samples < 2 {
                return Err(Error::InvalidParameter("Monte Carlo dual bound needs ≥ 2 samples".into()));
            }
            let values = (0..*n_samples as u64)
                .into_par_iter()
                .map(|i| {
                    let mut rng = path_rng(*seed, i);
                    let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                    integrand(&z)
                })
                .collect::<Result<Vec<f64>>>()?;
            let n = values.len() as f64;
            let mut sum = KahanSum::default();
            values.iter().for_each(|v| sum.add(*v));
            let mean = sum.value() / n;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            Ok(DualBound { value: mean, std_error: (var / n).sqrt() })
        }
    }
}

/// The `Y` that attains the limit: `Y = −ζ(x) + √AΦ0σ` with
/// `x = s0 − √AΦ0σ + W_Tσ` and `ζ` the sup-convolution maximizer at `x`.
pub fn optimal_dual_y(pricer: &Pricer, phi0: &[f64], eps: f64) -> Result<DualSpec> {
    let model = pricer.model().clone();
    let d = model.dim();
    check_dim(d, phi0.len())?;
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    let a = pricer.a_risk();
    let sqrt_a = a.sqrt();
    let inventory: Vec<f64> = row_vec_mul(phi0, model.sigma().entries())?.iter().map(|v| sqrt_a * v).collect();
    let start: Vec<f64> = model.s0().iter().zip(&inventory).map(|(s, v)| s - v).collect();
    let payoff = pricer.payoff().clone();
    let search = *pricer.search();
    let max_shift = match &payoff {
        Payoff::BasketCall { a: coef, .. } => sqrt_a * norm(&row_vec_mul(coef, model.sigma().entries())?),
        Payoff::GenericLipschitz { lipschitz, .. } => {
            2.0 * sqrt_a * model.sigma().max_eigenvalue() * lipschitz * (d as f64).sqrt()
        }
    };
    let bound = max_shift + norm(&inventory);
    Ok(DualSpec::new("optimal", Some(bound), move |w| {
        let ws = row_vec_mul(w, model.sigma().entries())?;
        let x: Vec<f64> = start.iter().zip(&ws).map(|(s, v)| s + v).collect();
        let y = g_argmax(&payoff, a, model.sigma(), &x, eps, &search)?;
        Ok(y.iter().zip(&inventory).map(|(y, v)| v - y).collect())
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    K,
    L,
}

fn kernel_times(horizon: f64, t: f64, s: f64) -> Result<()> {
    if !(0.0 <= s && s <= t && t <= horizon) {
        return Err(Error::InvalidTime { t, horizon });
    }
    if s >= horizon {
        return Err(Error::SingularDenominator { eigenvalue: 0.0 });
    }
    Ok(())
}

/// `K_{t,s} = cosh(√A(T−t)σ/Λ) sinh(√A(T−s)σ/Λ)⁻¹`.
pub fn kernel_k(a: f64, lambda: f64, sigma: &SpdMatrix, horizon: f64, t: f64, s: f64) -> Result<Matrix> {
    check_a(a)?;
    kernel_times(horizon, t, s)?;
    let r = a.sqrt() / lambda;
    sigma.ratio_function(ScaledHyperbolic::cosh(r * (horizon - t)), ScaledHyperbolic::sinh(r * (horizon - s)))
}

/// `G_t = sinh(√A(T−t)σ/Λ) sinh(√ATσ/Λ)⁻¹`.
pub fn kernel_g(a: f64, lambda: f64, sigma: &SpdMatrix, horizon: f64, t: f64) -> Result<Matrix> {
    check_a(a)?;
    kernel_times(horizon, t, 0.0)?;
    let r = a.sqrt() / lambda;
    sigma.ratio_function(ScaledHyperbolic::sinh(r * (horizon - t)), ScaledHyperbolic::sinh(r * horizon))
}

/// `L_{t,s} = sinh(√A(T−t)σ/Λ) sinh(√A(T−s)σ/Λ)⁻¹`.
pub fn kernel_l(a: f64, lambda: f64, sigma: &SpdMatrix, horizon: f64, t: f64, s: f64) -> Result<Matrix> {
    check_a(a)?;
    kernel_times(horizon, t, s)?;
    let r = a.sqrt() / lambda;
    sigma.ratio_function(ScaledHyperbolic::sinh(r * (horizon - t)), ScaledHyperbolic::sinh(r * (horizon - s)))
}

/// `(1/2Λ) ∫_s^T (kernel_{t,s})² dt`, eigenvalue by eigenvalue through the
/// closed antiderivatives of `cosh²` and `sinh²`.
pub fn kernel_limit_integral(a: f64, lambda: f64, sigma: &SpdMatrix, horizon: f64, s: f64, which: KernelKind) -> Result<Matrix> {
    check_a(a)?;
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("Λ must be positive, got {lambda}")));
    }
    kernel_times(horizon, s, s)?;
    let tau = horizon - s;
    let sqrt_a = a.sqrt();
    sigma.apply_scalar_function(|ev| {
        let c = sqrt_a * ev / lambda;
        let x = c * tau;
        let q = (-2.0 * x).exp();
        let one_minus = -(-2.0 * x).exp_m1();
        let coth = (1.0 + q) / one_minus;
        let inv_sinh2 = 4.0 * q / (one_minus * one_minus);
        let bracket = match which {
            KernelKind::K => coth / (2.0 * c) + 0.5 * tau * inv_sinh2,
            KernelKind::L => coth / (2.0 * c) - 0.5 * tau * inv_sinh2,
        };
        bracket / (2.0 * lambda)
    })
}

/// `σ⁻¹ / (4√A)`, the `Λ ↓ 0` limit of [`kernel_limit_integral`].
pub fn kernel_limit_target(a: f64, sigma: &SpdMatrix) -> Matrix {
    sigma.inverse().entries().scaled(0.25 / a.sqrt())
}
