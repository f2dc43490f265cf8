//! The tracking strategy
//!
//! ```text
//! dΦ/dt = (√A/Λ) (D_x u^A(t, S_t − √A Φ_t σ) − Φ_t) σ
//! ```
//!
//! integrated with a frozen-target exponential step, the resulting wealth
//! under quadratic impact costs, and the exponential supermartingale used to
//! bound its certainty equivalent.

use log::warn;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, norm, row_vec_mul, Matrix};
use crate::market::{BachelierModel, ImpactParams, Payoff, SimulatedPath, TimeGrid};
use crate::pricer::Pricer;

pub const MIN_AUTO_STEPS: usize = 1000;
pub const MAX_AUTO_STEPS: usize = 100_000;

/// `max(1000, ⌈20 T √A λ_max(σ) / Λ⌉)`, capped at 10⁵ with a warning.
pub fn auto_steps(model: &BachelierModel, impact: &ImpactParams) -> usize {
    let stiff = 20.0 * model.horizon() * impact.a_risk().sqrt() * model.sigma().max_eigenvalue() / impact.lambda();
    let n = (stiff.ceil() as usize).max(MIN_AUTO_STEPS);
    if n > MAX_AUTO_STEPS {
        warn!("auto step count {n} capped at {MAX_AUTO_STEPS}; boundary layer under-resolved");
        MAX_AUTO_STEPS
    } else {
        n
    }
}

/// One hedged path. Row-major `(n+1)×d` positions, `n×d` rates and targets.
#[derive(Debug, Clone, PartialEq)]
pub struct HedgeResult {
    dim: usize,
    pub phi_positions: Vec<f64>,
    pub phi_rates: Vec<f64>,
    /// Frozen target `Θ_k` used on step `k`.
    pub targets: Vec<f64>,
    pub terminal_wealth: f64,
    pub payoff_value: f64,
    /// `(A/Λ)(f(S_T) − V_T)`.
    pub utility_exponent: f64,
    /// `(Λ/2) Σ ‖φ_k‖² h`.
    pub cost_integral: f64,
    pub sup_position_norm: f64,
}

impl HedgeResult {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_steps(&self) -> usize {
        self.phi_rates.len() / self.dim
    }

    pub fn position(&self, k: usize) -> &[f64] {
        &self.phi_positions[k * self.dim..(k + 1) * self.dim]
    }

    pub fn rate(&self, k: usize) -> &[f64] {
        &self.phi_rates[k * self.dim..(k + 1) * self.dim]
    }
}

/// Terminal quantities of one hedged path, without the trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct HedgeSummary {
    pub terminal_wealth: f64,
    pub payoff_value: f64,
    pub utility_exponent: f64,
    pub cost_integral: f64,
    pub sup_position_norm: f64,
    pub terminal_position: Vec<f64>,
}

/// Tracking-strategy integrator for fixed `A` (from the pricer) and `Λ`.
#[derive(Debug, Clone)]
pub struct Hedger {
    pricer: Pricer,
    impact: ImpactParams,
}

impl Hedger {
    pub fn new(pricer: Pricer, lambda: f64) -> Result<Self> {
        let impact = ImpactParams::new(lambda, pricer.a_risk())?;
        Ok(Self { pricer, impact })
    }

    pub fn pricer(&self) -> &Pricer {
        &self.pricer
    }

    pub fn impact(&self) -> &ImpactParams {
        &self.impact
    }

    pub fn lambda(&self) -> f64 {
        self.impact.lambda()
    }

    fn model(&self) -> &BachelierModel {
        self.pricer.model()
    }

    pub fn auto_steps(&self) -> usize {
        auto_steps(self.model(), &self.impact)
    }

    /// Exact relaxation factor `exp(−√A h σ / Λ)` over a step of length `h`.
    pub fn relaxation(&self, h: f64) -> Result<Matrix> {
        self.model().sigma().exp_scaled(-self.impact.a_risk().sqrt() * h / self.impact.lambda())
    }

    /// `Θ = D_x u^A(t, s_t − √A φ_t σ)`.
    pub fn tracking_target(&self, t: f64, s_t: &[f64], phi_t: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.pricer.dim(), s_t.len())?;
        check_dim(self.pricer.dim(), phi_t.len())?;
        let sqrt_a = self.impact.a_risk().sqrt();
        let shift = row_vec_mul(phi_t, self.model().sigma().entries())?;
        let x: Vec<f64> = s_t.iter().zip(&shift).map(|(s, v)| s - sqrt_a * v).collect();
        self.pricer.delta(t, &x)
    }

    /// Runs the exponential integrator along `path`, calling `on_step(k, Φ_k, Θ_k, Φ_{k+1})`.
    fn track<F>(&self, path: &SimulatedPath, phi0: &[f64], mut on_step: F) -> Result<()>
    where
        F: FnMut(usize, &[f64], &[f64], &[f64]),
    {
        let d = self.pricer.dim();
        check_dim(d, path.dim())?;
        check_dim(d, phi0.len())?;
        let grid = path.grid();
        if (grid.horizon() - self.model().horizon()).abs() > 1e-12 * self.model().horizon() {
            return Err(Error::InvalidParameter(format!(
                "path horizon {} differs from model horizon {}",
                grid.horizon(),
                self.model().horizon()
            )));
        }
        let relax = self.relaxation(grid.step())?;
        let sigma = self.model().sigma().entries();
        let sqrt_a = self.impact.a_risk().sqrt();
        let mut phi = phi0.to_vec();
        let mut next = vec![0.0; d];
        let mut x = vec![0.0; d];
        let mut theta = vec![0.0; d];
        for k in 0..grid.n_steps() {
            // the last step keeps the target from t_{n−1}; D_x u^A is never needed at T
            let s = path.s(k);
            for j in 0..d {
                let shift: f64 = (0..d).map(|i| phi[i] * sigma[(i, j)]).sum();
                x[j] = s[j] - sqrt_a * shift;
            }
            self.pricer.delta_into(grid.time(k), &x, &mut theta)?;
            for j in 0..d {
                let decayed: f64 = (0..d).map(|i| (phi[i] - theta[i]) * relax[(i, j)]).sum();
                next[j] = theta[j] + decayed;
            }
            on_step(k, &phi, &theta, &next);
            std::mem::swap(&mut phi, &mut next);
        }
        Ok(())
    }

    /// Full trajectory of the tracking strategy on one path.
    pub fn integrate_strategy(&self, path: &SimulatedPath, phi0: &[f64]) -> Result<HedgeResult> {
        let d = self.pricer.dim();
        let n = path.n_steps();
        let h = path.grid().step();
        let mut positions = Vec::with_capacity((n + 1) * d);
        let mut rates = Vec::with_capacity(n * d);
        let mut targets = Vec::with_capacity(n * d);
        positions.extend_from_slice(phi0);
        self.track(path, phi0, |_, phi, theta, next| {
            positions.extend_from_slice(next);
            rates.extend(next.iter().zip(phi).map(|(b, a)| (b - a) / h));
            targets.extend_from_slice(theta);
        })?;
        let terminal_wealth = wealth(path, &positions, &rates, self.lambda())?;
        let payoff_value = self.pricer.payoff().eval(path.terminal_price());
        let cost_integral = 0.5 * self.lambda() * rates.chunks_exact(d).map(|r| dot(r, r)).sum::<f64>() * h;
        let sup_position_norm = positions.chunks_exact(d).map(norm).fold(0.0, f64::max);
        Ok(HedgeResult {
            dim: d,
            phi_positions: positions,
            phi_rates: rates,
            targets,
            terminal_wealth,
            payoff_value,
            utility_exponent: self.impact.alpha() * (payoff_value - terminal_wealth),
            cost_integral,
            sup_position_norm,
        })
    }

    /// Same arithmetic as [`integrate_strategy`](Self::integrate_strategy) but keeps only running sums.
    pub fn integrate_summary(&self, path: &SimulatedPath, phi0: &[f64]) -> Result<HedgeSummary> {
        let h = path.grid().step();
        let mut gains = 0.0;
        let mut rate_sq = 0.0;
        let mut sup = norm(phi0);
        let mut last = phi0.to_vec();
        self.track(path, phi0, |k, phi, _, next| {
            gains += phi.iter().zip(path.s(k + 1).iter().zip(path.s(k))).map(|(p, (b, a))| p * (b - a)).sum::<f64>();
            rate_sq += next.iter().zip(phi).map(|(b, a)| ((b - a) / h).powi(2)).sum::<f64>();
            sup = sup.max(norm(next));
            last.copy_from_slice(next);
        })?;
        let cost_integral = 0.5 * self.lambda() * rate_sq * h;
        let terminal_wealth = gains - cost_integral;
        let payoff_value = self.pricer.payoff().eval(path.terminal_price());
        Ok(HedgeSummary {
            terminal_wealth,
            payoff_value,
            utility_exponent: self.impact.alpha() * (payoff_value - terminal_wealth),
            cost_integral,
            sup_position_norm: sup,
            terminal_position: last,
        })
    }

    /// Integrates the position ODE for a prescribed piecewise-constant target
    /// (`n×d`, row `k` held on `[t_k, t_{k+1})`) with the same exponential step.
    pub fn integrate_frozen(&self, theta_path: &[f64], phi0: &[f64], grid: &TimeGrid) -> Result<Vec<f64>> {
        let d = self.pricer.dim();
        check_dim(grid.n_steps() * d, theta_path.len())?;
        check_dim(d, phi0.len())?;
        let relax = self.relaxation(grid.step())?;
        let mut out = phi0.to_vec();
        for theta in theta_path.chunks_exact(d) {
            let k = out.len() - d;
            let gap: Vec<f64> = out[k..].iter().zip(theta).map(|(p, t)| p - t).collect();
            let decayed = row_vec_mul(&gap, &relax)?;
            out.extend(theta.iter().zip(&decayed).map(|(t, g)| t + g));
        }
        Ok(out)
    }

    /// `Φ_t = Φ0 e^{−ct} + (√A/Λ)∫₀ᵗ Θ_v σ e^{c(v−t)} dv`, `c = √Aσ/Λ`, for
    /// piecewise-constant `Θ`, evaluated at every knot.
    ///
    /// Each knot uses its own matrix exponentials `e^{−c(t_k − t_j)}` rather than
    /// powers of a one-step factor, so it is independent of the integrator.
    pub fn duhamel_solution(&self, theta_path: &[f64], phi0: &[f64], grid: &TimeGrid) -> Result<Vec<f64>> {
        let d = self.pricer.dim();
        let n = grid.n_steps();
        check_dim(n * d, theta_path.len())?;
        check_dim(d, phi0.len())?;
        let rate = self.impact.a_risk().sqrt() / self.impact.lambda();
        let sigma = self.model().sigma();
        // kernel[m] = exp(−c · (t_m − t_0)) for lags on the grid
        let kernel = (0..=n)
            .map(|m| sigma.exp_scaled(-rate * (grid.time(m) - grid.time(0))))
            .collect::<Result<Vec<_>>>()?;
        let mut out = Vec::with_capacity((n + 1) * d);
        for k in 0..=n {
            let mut phi = row_vec_mul(phi0, &kernel[k])?;
            for j in 0..k {
                // ∫_{t_j}^{t_{j+1}} (√A/Λ) Θ_j σ e^{c(v − t_k)} dv = Θ_j (e^{−c(t_k − t_{j+1})} − e^{−c(t_k − t_j)})
                let theta = &theta_path[j * d..(j + 1) * d];
                let near = row_vec_mul(theta, &kernel[k - j - 1])?;
                let far = row_vec_mul(theta, &kernel[k - j])?;
                for ((p, a), b) in phi.iter_mut().zip(&near).zip(&far) {
                    *p += a - b;
                }
            }
            out.extend(phi);
        }
        Ok(out)
    }

    /// Log of the drift-corrected process
    /// `exp(−√A⟨Φ_t − Φ_0, μσ⁻¹⟩) · M_t`, with
    /// `log M_t = (A/Λ)(u^A(t, S_t − √AΦ_tσ) + √A⟨Φ_tσ, Φ_t⟩/2 − V_t)`, at every knot.
    pub fn supermartingale_exponent(&self, path: &SimulatedPath, hedge: &HedgeResult) -> Result<Vec<f64>> {
        let n = path.n_steps();
        check_dim(n, hedge.n_steps())?;
        let grid = path.grid();
        let h = grid.step();
        let sqrt_a = self.impact.a_risk().sqrt();
        let alpha = self.impact.alpha();
        let sigma = self.model().sigma().entries();
        let drift = self.model().mu_sigma_inv();
        let phi0 = hedge.position(0);
        let mut wealth = 0.0;
        let mut out = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let phi = hedge.position(k);
            let phi_sigma = row_vec_mul(phi, sigma)?;
            let x: Vec<f64> = path.s(k).iter().zip(&phi_sigma).map(|(s, v)| s - sqrt_a * v).collect();
            let u = self.pricer.price_u(grid.time(k), &x)?;
            let log_m = alpha * (u + 0.5 * sqrt_a * dot(&phi_sigma, phi) - wealth);
            let moved: Vec<f64> = phi.iter().zip(phi0).map(|(a, b)| a - b).collect();
            let corrected = log_m - sqrt_a * dot(&moved, &drift);
            if !corrected.is_finite() {
                return Err(Error::OverflowGuard(format!("log M not finite at step {k}")));
            }
            out.push(corrected);
            if k < n {
                let ds: Vec<f64> = path.s(k + 1).iter().zip(path.s(k)).map(|(b, a)| b - a).collect();
                let r = hedge.rate(k);
                wealth += dot(phi, &ds) - 0.5 * self.lambda() * dot(r, r) * h;
            }
        }
        Ok(out)
    }
}

/// `V_T = Σ_k ⟨Φ(t_k), S(t_{k+1}) − S(t_k)⟩ − (Λ/2) Σ_k ‖φ_k‖² h`.
pub fn wealth(path: &SimulatedPath, positions: &[f64], rates: &[f64], lambda: f64) -> Result<f64> {
    let d = path.dim();
    let n = path.n_steps();
    check_dim((n + 1) * d, positions.len())?;
    check_dim(n * d, rates.len())?;
    let h = path.grid().step();
    let mut gains = 0.0;
    let mut cost = 0.0;
    for k in 0..n {
        let phi = &positions[k * d..(k + 1) * d];
        let r = &rates[k * d..(k + 1) * d];
        gains += phi.iter().zip(path.s(k + 1)).zip(path.s(k)).map(|((p, b), a)| p * (b - a)).sum::<f64>();
        cost += dot(r, r);
    }
    Ok(gains - 0.5 * lambda * cost * h)
}

/// `V_T = ⟨Φ0, S_T − s0⟩ + Σ_k (⟨φ_k, S_T − S(t_k)⟩ − (Λ/2)‖φ_k‖²) h`.
pub fn wealth_by_parts(path: &SimulatedPath, positions: &[f64], rates: &[f64], lambda: f64, phi0: &[f64]) -> Result<f64> {
    let d = path.dim();
    let n = path.n_steps();
    check_dim((n + 1) * d, positions.len())?;
    check_dim(n * d, rates.len())?;
    check_dim(d, phi0.len())?;
    let h = path.grid().step();
    let s_t = path.terminal_price();
    let mut v: f64 = phi0.iter().zip(s_t).zip(path.s(0)).map(|((p, b), a)| p * (b - a)).sum();
    for k in 0..n {
        let r = &rates[k * d..(k + 1) * d];
        let carry: f64 = r.iter().zip(s_t).zip(path.s(k)).map(|((p, b), a)| p * (b - a)).sum();
        v += (carry - 0.5 * lambda * dot(r, r)) * h;
    }
    Ok(v)
}

/// Largest position norm over a set of hedged paths.
pub fn bound_check(results: &[HedgeResult]) -> f64 {
    results.iter().map(|r| r.sup_position_norm).fold(0.0, f64::max)
}

/// Uniform-in-Λ bound `max(‖Φ0‖, L) + margin`: targets are gradients of
/// `u^A`, which inherits the Lipschitz constant `L` of the payoff.
pub fn position_bound(phi0: &[f64], payoff: &Payoff, margin: f64) -> f64 {
    norm(phi0).max(payoff.lipschitz()) + margin
}
