//! The smoothed claim `u^A(t, x) = E[g^A(x + W_{T−t}σ)]`.
//!
//! Basket calls go through closed forms: `g^A` is again a call with strike
//! shifted by `√A⟨aσ, a⟩/2`, so `u^A` is a Bachelier call price. Generic
//! payoffs are integrated with the configured [`QuadratureRule`], each node
//! solving one sup-convolution.

use std::sync::Arc;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, norm, row_vec_mul};
use crate::market::{check_a, sup_convolve_g, BachelierModel, Payoff, SupConvSearch};
use crate::quadrature::QuadratureRule;
use crate::special::{norm_cdf, normal_call};

#[derive(Debug, Clone)]
struct BasketTerms {
    a: Vec<f64>,
    /// `‖aσ‖² = a σ² aᵀ`, the variance rate of `⟨a, S⟩`.
    variance_rate: f64,
    /// `b + √A⟨aσ, a⟩/2`.
    shifted_strike: f64,
}

/// Prices `u^A` for one model, payoff and `A`.
#[derive(Debug, Clone)]
pub struct Pricer {
    a_risk: f64,
    model: BachelierModel,
    payoff: Payoff,
    rule: Arc<QuadratureRule>,
    search: SupConvSearch,
    basket: Option<BasketTerms>,
}

impl Pricer {
    pub fn new(a_risk: f64, model: BachelierModel, payoff: Payoff, rule: Arc<QuadratureRule>) -> Result<Self> {
        check_a(a_risk)?;
        let d = model.dim();
        check_dim(d, rule.dim())?;
        payoff.check_dim(d)?;
        let basket = match &payoff {
            Payoff::BasketCall { a, b } => {
                let a_sigma = row_vec_mul(a, model.sigma().entries())?;
                Some(BasketTerms {
                    a: a.clone(),
                    variance_rate: dot(&a_sigma, &a_sigma),
                    shifted_strike: b + 0.5 * a_risk.sqrt() * dot(&a_sigma, a),
                })
            }
            Payoff::GenericLipschitz { .. } => None,
        };
        Ok(Self { a_risk, model, payoff, rule, search: SupConvSearch::default(), basket })
    }

    pub fn with_search(mut self, search: SupConvSearch) -> Self {
        self.search = search;
        self
    }

    /// Same model, rule and `A` with a different payoff.
    pub fn with_payoff(&self, payoff: Payoff) -> Result<Self> {
        Ok(Self::new(self.a_risk, self.model.clone(), payoff, self.rule.clone())?.with_search(self.search))
    }

    pub fn a_risk(&self) -> f64 {
        self.a_risk
    }

    pub fn model(&self) -> &BachelierModel {
        &self.model
    }

    pub fn payoff(&self) -> &Payoff {
        &self.payoff
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    pub fn search(&self) -> &SupConvSearch {
        &self.search
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    /// `g^A(x)`.
    pub fn g(&self, x: &[f64]) -> Result<f64> {
        sup_convolve_g(&self.payoff, self.a_risk, self.model.sigma(), x, &self.search)
    }

    fn check_time(&self, t: f64) -> Result<()> {
        let horizon = self.model.horizon();
        if (0.0..=horizon).contains(&t) {
            Ok(())
        } else {
            Err(Error::InvalidTime { t, horizon })
        }
    }

    /// `u^A(t, x)`; equals `g^A(x)` at `t = T`.
    pub fn price_u(&self, t: f64, x: &[f64]) -> Result<f64> {
        self.check_time(t)?;
        check_dim(self.dim(), x.len())?;
        let tau = self.model.horizon() - t;
        if tau == 0.0 {
            return self.g(x);
        }
        match &self.basket {
            Some(bt) => Ok(normal_call(dot(&bt.a, x) + bt.shifted_strike, (tau * bt.variance_rate).sqrt())),
            None => self.price_u_quadrature(t, x),
        }
    }

    /// `Σ wᵢ g^A(x + √(T−t) zᵢσ)` regardless of the payoff variant.
    pub fn price_u_quadrature(&self, t: f64, x: &[f64]) -> Result<f64> {
        self.check_time(t)?;
        check_dim(self.dim(), x.len())?;
        let scale = (self.model.horizon() - t).sqrt();
        let sigma = self.model.sigma().entries();
        let mut point = vec![0.0; x.len()];
        self.rule.try_expect(|z| {
            let zs = row_vec_mul(z, sigma)?;
            for ((p, xi), v) in point.iter_mut().zip(x).zip(&zs) {
                *p = xi + scale * v;
            }
            self.g(&point)
        })
    }

    /// Default spatial difference step `1e-4·(1+‖x‖)·max(√(T−t), 0.05)`.
    pub fn default_fd_step(&self, t: f64, x: &[f64]) -> f64 {
        1e-4 * (1.0 + norm(x)) * (self.model.horizon() - t).max(0.0).sqrt().max(0.05)
    }

    /// Central finite-difference gradient of `price_u`.
    pub fn delta_u(&self, t: f64, x: &[f64], fd_step: f64) -> Result<Vec<f64>> {
        if !(fd_step > 0.0) {
            return Err(Error::InvalidParameter(format!("fd_step must be positive, got {fd_step}")));
        }
        self.check_time(t)?;
        let horizon = self.model.horizon();
        if horizon - t < 10.0 * fd_step || t >= horizon {
            return Err(Error::InvalidTime { t, horizon });
        }
        check_dim(self.dim(), x.len())?;
        let mut bumped = x.to_vec();
        (0..x.len())
            .map(|i| {
                bumped[i] = x[i] + fd_step;
                let up = self.price_u(t, &bumped)?;
                bumped[i] = x[i] - fd_step;
                let down = self.price_u(t, &bumped)?;
                bumped[i] = x[i];
                Ok((up - down) / (2.0 * fd_step))
            })
            .collect()
    }

    /// Basket-call gradient `a·Φ(m̃)`, `m̃ = (⟨a,x⟩ + b̃)/√((T−t) aσ²aᵀ)`.
    /// `None` for generic payoffs.
    pub fn delta_closed_form(&self, t: f64, x: &[f64]) -> Result<Option<Vec<f64>>> {
        let Some(bt) = &self.basket else {
            return Ok(None);
        };
        self.check_time(t)?;
        let horizon = self.model.horizon();
        if t >= horizon {
            return Err(Error::InvalidTime { t, horizon });
        }
        check_dim(self.dim(), x.len())?;
        let p = Self::basket_weight(bt, horizon - t, x);
        Ok(Some(bt.a.iter().map(|a| a * p).collect()))
    }

    fn basket_weight(bt: &BasketTerms, time_left: f64, x: &[f64]) -> f64 {
        let mean = dot(&bt.a, x) + bt.shifted_strike;
        let sd = (time_left * bt.variance_rate).sqrt();
        if sd > 0.0 {
            norm_cdf(mean / sd)
        } else if mean > 0.0 {
            1.0
        } else {
            0.0
        }
    }

    /// Writes `D_x u^A(t, x)` into `out` without allocating on the basket
    /// branch. Callers guarantee `t < T` and matching dimensions.
    pub(crate) fn delta_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        match &self.basket {
            Some(bt) => {
                let p = Self::basket_weight(bt, self.model.horizon() - t, x);
                for (o, a) in out.iter_mut().zip(&bt.a) {
                    *o = a * p;
                }
            }
            None => out.copy_from_slice(&self.delta_u(t, x, self.default_fd_step(t, x))?),
        }
        Ok(())
    }

    /// `D_x u^A(t, x)`: closed form for basket calls, finite differences otherwise.
    pub fn delta(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        match self.delta_closed_form(t, x)? {
            Some(d) => Ok(d),
            None => self.delta_u(t, x, self.default_fd_step(t, x)),
        }
    }

    /// Finite-difference estimate of `∂ₜu + ½ tr(σ² D²ₓu)`, with time step
    /// `fd_step` and space step `fd_step·(1+‖x‖)`.
    pub fn pde_residual(&self, t: f64, x: &[f64], fd_step: f64) -> Result<f64> {
        if !(fd_step > 0.0) {
            return Err(Error::InvalidParameter(format!("fd_step must be positive, got {fd_step}")));
        }
        let horizon = self.model.horizon();
        if t < 0.0 || t > horizon - 10.0 * fd_step {
            return Err(Error::InvalidTime { t, horizon });
        }
        check_dim(self.dim(), x.len())?;
        let ht = fd_step;
        let u_t = if t >= ht {
            (self.price_u(t + ht, x)? - self.price_u(t - ht, x)?) / (2.0 * ht)
        } else {
            (-3.0 * self.price_u(t, x)? + 4.0 * self.price_u(t + ht, x)? - self.price_u(t + 2.0 * ht, x)?) / (2.0 * ht)
        };

        let hx = fd_step * (1.0 + norm(x));
        let d = x.len();
        let u0 = self.price_u(t, x)?;
        let sigma2 = self.model.sigma().entries().matmul(self.model.sigma().entries())?;
        let mut p = x.to_vec();
        let mut trace = 0.0;
        for i in 0..d {
            p[i] = x[i] + hx;
            let up = self.price_u(t, &p)?;
            p[i] = x[i] - hx;
            let down = self.price_u(t, &p)?;
            p[i] = x[i];
            trace += sigma2[(i, i)] * (up - 2.0 * u0 + down) / (hx * hx);
            for j in (i + 1)..d {
                let mut corner = |si: f64, sj: f64| -> Result<f64> {
                    p[i] = x[i] + si * hx;
                    p[j] = x[j] + sj * hx;
                    let v = self.price_u(t, &p);
                    p[i] = x[i];
                    p[j] = x[j];
                    v
                };
                let mixed = (corner(1.0, 1.0)? - corner(1.0, -1.0)? - corner(-1.0, 1.0)? + corner(-1.0, -1.0)?) / (4.0 * hx * hx);
                trace += 2.0 * sigma2[(i, j)] * mixed;
            }
        }
        Ok(u_t + 0.5 * trace)
    }

    /// `s0 − √A Φ0 σ`.
    pub fn shifted_initial_price(&self, phi0: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), phi0.len())?;
        let sqrt_a = self.a_risk.sqrt();
        let shift = row_vec_mul(phi0, self.model.sigma().entries())?;
        Ok(self.model.s0().iter().zip(&shift).map(|(s, v)| s - sqrt_a * v).collect())
    }

    /// `u^A(0, s0 − √AΦ0σ) + √A⟨Φ0σ, Φ0⟩/2`, the limit of the certainty equivalent.
    pub fn limit_value(&self, phi0: &[f64]) -> Result<f64> {
        let inventory = 0.5 * self.a_risk.sqrt() * dot(&row_vec_mul(phi0, self.model.sigma().entries())?, phi0);
        Ok(self.indifference_limit(phi0)? + inventory)
    }

    /// `u^A(0, s0 − √AΦ0σ)`, the limit of the indifference price.
    pub fn indifference_limit(&self, phi0: &[f64]) -> Result<f64> {
        self.price_u(0.0, &self.shifted_initial_price(phi0)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SpdMatrix;
    use crate::market::named_generic_payoff;
    use crate::quadrature::{build_gauss_hermite, default_pricing_rule};
    use crate::special::{norm_cdf, norm_pdf};

    fn oracle(m: f64) -> f64 {
        m * norm_cdf(m) + norm_pdf(m)
    }

    fn figure_pricer(a: f64, payoff: Payoff) -> Pricer {
        let model = BachelierModel::new(vec![8.0], vec![0.0], SpdMatrix::scalar(1.0).unwrap(), 1.0).unwrap();
        Pricer::new(a, model, payoff, Arc::new(default_pricing_rule(1).unwrap())).unwrap()
    }

    fn atm() -> Payoff {
        Payoff::basket_call(vec![1.0], -8.0)
    }

    #[test]
    fn atm_prices() {
        let p = figure_pricer(1.0, atm());
        assert!((p.price_u(0.0, &[8.0]).unwrap() - 0.6977965).abs() < 1e-7);
        assert!((p.price_u(0.0, &[8.0]).unwrap() - oracle(0.5)).abs() < 1e-14);
        let tiny = figure_pricer(1e-12, atm());
        assert!((tiny.price_u(0.0, &[8.0]).unwrap() - 0.3989423).abs() < 1e-6);
        assert_eq!(p.price_u(1.0, &[8.0]).unwrap(), 0.5);
        assert!(matches!(p.price_u(1.5, &[8.0]), Err(Error::InvalidTime { .. })));
        assert!(matches!(p.price_u(-0.1, &[8.0]), Err(Error::InvalidTime { .. })));
    }

    #[test]
    fn zero_payoff_prices_vanish() {
        let p = figure_pricer(1.0, Payoff::zero(1));
        let g = figure_pricer(1.0, named_generic_payoff("zero", 1, &[], 0.0).unwrap());
        for &(t, x) in &[(0.0, 8.0), (0.5, -3.0), (1.0, 100.0)] {
            assert_eq!(p.price_u(t, &[x]).unwrap(), 0.0);
            assert_eq!(g.price_u(t, &[x]).unwrap(), 0.0);
        }
        assert_eq!(p.pde_residual(0.5, &[8.0], 1e-3).unwrap(), 0.0);
    }

    #[test]
    fn deltas() {
        let p = figure_pricer(1.0, atm());
        let closed = p.delta_closed_form(0.0, &[8.0]).unwrap().unwrap();
        assert!((closed[0] - 0.6914625).abs() < 1e-7);
        let deep = p.delta_closed_form(0.0, &[8.0 + 9.0]).unwrap().unwrap();
        assert!((deep[0] - 1.0).abs() < 1e-10);
        for i in 0..41 {
            let x = 6.0 + 0.1 * i as f64;
            for &t in &[0.0, 0.3, 0.8] {
                let fd = p.delta_u(t, &[x], 1e-4).unwrap();
                let cf = p.delta_closed_form(t, &[x]).unwrap().unwrap();
                assert!((fd[0] - cf[0]).abs() < 1e-6, "t={t} x={x}");
            }
        }
        assert!(matches!(p.delta_u(1.0, &[8.0], 1e-4), Err(Error::InvalidTime { .. })));
        assert!(matches!(p.delta_closed_form(1.0, &[8.0]), Err(Error::InvalidTime { .. })));
    }

    #[test]
    fn pde_residuals() {
        let p = figure_pricer(1.0, atm());
        assert!(p.pde_residual(0.5, &[8.0], 1e-3).unwrap().abs() < 1e-3);
        let model = BachelierModel::new(vec![1.0, 2.0], vec![0.0, 0.0], SpdMatrix::from_diag(&[1.0, 2.0]).unwrap(), 1.0).unwrap();
        let p2 = Pricer::new(1.0, model, Payoff::basket_call(vec![1.0, 1.0], -3.0), Arc::new(default_pricing_rule(2).unwrap())).unwrap();
        for &(t, x0, x1) in &[(0.1, 1.0, 2.5), (0.6, 0.2, 1.0), (0.0, 3.0, -1.0)] {
            assert!(p2.pde_residual(t, &[x0, x1], 1e-3).unwrap().abs() < 1e-3);
        }
        assert!(matches!(p.pde_residual(0.995, &[8.0], 1e-3), Err(Error::InvalidTime { .. })));
    }

    #[test]
    fn limits() {
        let zero = figure_pricer(1.0, Payoff::zero(1));
        assert!((zero.limit_value(&[2.0]).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(zero.limit_value(&[0.0]).unwrap(), 0.0);
        assert_eq!(zero.indifference_limit(&[3.0]).unwrap(), 0.0);

        let p = figure_pricer(1.0, atm());
        assert!((p.limit_value(&[0.0]).unwrap() - 0.6977965).abs() < 1e-7);
        assert_eq!(p.limit_value(&[0.0]).unwrap(), p.indifference_limit(&[0.0]).unwrap());
        let p4 = figure_pricer(4.0, atm());
        assert!((p4.indifference_limit(&[0.0]).unwrap() - 1.0833154).abs() < 1e-7);

        for &phi in &[-1.5, 0.3, 2.0] {
            let lhs = p.limit_value(&[phi]).unwrap() - zero.limit_value(&[phi]).unwrap();
            assert!((lhs - p.indifference_limit(&[phi]).unwrap()).abs() < 1e-14);
        }
    }

    #[test]
    fn generic_quadrature_route() {
        // curvature below the penalty keeps g^A smooth
        let model = BachelierModel::new(vec![0.0], vec![0.0], SpdMatrix::scalar(1.0).unwrap(), 1.0).unwrap();
        let smooth = Payoff::generic("wave", 0.5, |x| 0.5 * x[0].sin()).unwrap();
        let p32 = Pricer::new(1.0, model.clone(), smooth.clone(), Arc::new(build_gauss_hermite(32, 1).unwrap())).unwrap();
        let p64 = Pricer::new(1.0, model, smooth, Arc::new(build_gauss_hermite(64, 1).unwrap())).unwrap();
        let a = p32.price_u(0.0, &[0.3]).unwrap();
        let b = p64.price_u(0.0, &[0.3]).unwrap();
        assert!((a - b).abs() < 1e-5, "{a} vs {b}");

        // generic call through quadrature tracks the closed form up to the kink error
        let p = figure_pricer(1.0, Payoff::basket_call_as_generic(vec![1.0], -8.0));
        assert!((p.price_u(0.0, &[8.0]).unwrap() - oracle(0.5)).abs() < 1e-3);
    }
}
