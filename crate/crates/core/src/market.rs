//! Bachelier market data, payoffs, path simulation and the sup-convolution
//! `g^A(x) = sup_y [f(x + y) − ⟨yσ⁻¹, y⟩ / (2√A)]`.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, norm, quad_form, row_vec_mul, SpdMatrix};

/// `S_t = s0 + μ t + W_t σ` with row-vector Brownian motion `W`.
#[derive(Debug, Clone, PartialEq)]
pub struct BachelierModel {
    s0: Vec<f64>,
    mu: Vec<f64>,
    sigma: SpdMatrix,
    sigma_inv: SpdMatrix,
    horizon: f64,
}

impl BachelierModel {
    pub fn new(s0: Vec<f64>, mu: Vec<f64>, sigma: SpdMatrix, horizon: f64) -> Result<Self> {
        let d = sigma.dim();
        check_dim(d, s0.len())?;
        check_dim(d, mu.len())?;
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidParameter(format!("horizon must be positive, got {horizon}")));
        }
        let sigma_inv = sigma.inverse();
        Ok(Self { s0, mu, sigma, sigma_inv, horizon })
    }

    pub fn dim(&self) -> usize {
        self.sigma.dim()
    }

    pub fn s0(&self) -> &[f64] {
        &self.s0
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma(&self) -> &SpdMatrix {
        &self.sigma
    }

    pub fn sigma_inv(&self) -> &SpdMatrix {
        &self.sigma_inv
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Market price of risk `μσ⁻¹`.
    pub fn mu_sigma_inv(&self) -> Vec<f64> {
        row_vec_mul(&self.mu, self.sigma_inv.entries()).expect("dimension checked at construction")
    }

    /// Price at time `t` on Brownian value `w`.
    pub fn price_at(&self, t: f64, w: &[f64]) -> Vec<f64> {
        let ws = row_vec_mul(w, self.sigma.entries()).expect("dimension checked at construction");
        self.s0.iter().zip(&self.mu).zip(ws).map(|((s, m), x)| s + m * t + x).collect()
    }
}

pub type PayoffFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// European payoff `f(S_T)`.
#[derive(Clone)]
pub enum Payoff {
    /// `(⟨a, x⟩ + b)⁺`.
    BasketCall { a: Vec<f64>, b: f64 },
    /// Arbitrary Lipschitz function with a declared Lipschitz constant.
    GenericLipschitz { name: String, evaluate: PayoffFn, lipschitz: f64 },
}

impl fmt::Debug for Payoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Payoff::BasketCall { a, b } => f.debug_struct("BasketCall").field("a", a).field("b", b).finish(),
            Payoff::GenericLipschitz { name, lipschitz, .. } => f
                .debug_struct("GenericLipschitz")
                .field("name", name)
                .field("lipschitz", lipschitz)
                .finish(),
        }
    }
}

impl Payoff {
    pub fn basket_call(a: Vec<f64>, b: f64) -> Self {
        Payoff::BasketCall { a, b }
    }

    /// `f ≡ 0`, represented as the degenerate basket call `a = 0, b = 0` so that
    /// all closed forms apply.
    pub fn zero(dim: usize) -> Self {
        Payoff::BasketCall { a: vec![0.0; dim], b: 0.0 }
    }

    pub fn generic<F>(name: impl Into<String>, lipschitz: f64, evaluate: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        if !(lipschitz >= 0.0 && lipschitz.is_finite()) {
            return Err(Error::InvalidParameter(format!("Lipschitz constant must be ≥ 0, got {lipschitz}")));
        }
        Ok(Payoff::GenericLipschitz { name: name.into(), evaluate: Arc::new(evaluate), lipschitz })
    }

    /// The basket call routed through the generic search, for cross-checks.
    pub fn basket_call_as_generic(a: Vec<f64>, b: f64) -> Self {
        let lipschitz = norm(&a);
        Payoff::GenericLipschitz {
            name: "basket_call_generic".into(),
            evaluate: Arc::new(move |x| (dot(&a, x) + b).max(0.0)),
            lipschitz,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Payoff::BasketCall { a, b } => (dot(a, x) + b).max(0.0),
            Payoff::GenericLipschitz { evaluate, .. } => evaluate(x),
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            Payoff::BasketCall { a, .. } => norm(a),
            Payoff::GenericLipschitz { lipschitz, .. } => *lipschitz,
        }
    }

    pub fn check_dim(&self, dim: usize) -> Result<()> {
        match self {
            Payoff::BasketCall { a, .. } => check_dim(dim, a.len()),
            Payoff::GenericLipschitz { .. } => Ok(()),
        }
    }
}

/// Uniform grid `t_k = kT/n`, `k = 0..=n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    n_steps: usize,
    horizon: f64,
}

impl TimeGrid {
    pub fn new(n_steps: usize, horizon: f64) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::InvalidParameter("time grid needs at least one step".into()));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidParameter(format!("horizon must be positive, got {horizon}")));
        }
        Ok(Self { n_steps, horizon })
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.horizon
        } else {
            k as f64 * self.horizon / self.n_steps as f64
        }
    }
}

/// One simulated trajectory on a [`TimeGrid`]; rows are knots.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPath {
    grid: TimeGrid,
    dim: usize,
    w: Vec<f64>,
    s: Vec<f64>,
}

impl SimulatedPath {
    /// Builds the path from Brownian values (row `k` of `w` at `t_k`); prices are
    /// derived from the model, so `s = s0 + μt + wσ` holds by construction.
    pub fn from_brownian(model: &BachelierModel, grid: TimeGrid, w: Vec<f64>) -> Result<Self> {
        let d = model.dim();
        check_dim((grid.n_steps() + 1) * d, w.len())?;
        let sigma = model.sigma().entries();
        let mut s = vec![0.0; w.len()];
        for (k, (wk, sk)) in w.chunks_exact(d).zip(s.chunks_exact_mut(d)).enumerate() {
            let t = grid.time(k);
            for j in 0..d {
                let ws: f64 = (0..d).map(|i| wk[i] * sigma[(i, j)]).sum();
                sk[j] = model.s0()[j] + model.mu()[j] * t + ws;
            }
        }
        Ok(Self { grid, dim: d, w, s })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_steps(&self) -> usize {
        self.grid.n_steps()
    }

    pub fn w(&self, k: usize) -> &[f64] {
        &self.w[k * self.dim..(k + 1) * self.dim]
    }

    pub fn s(&self, k: usize) -> &[f64] {
        &self.s[k * self.dim..(k + 1) * self.dim]
    }

    pub fn terminal_price(&self) -> &[f64] {
        self.s(self.n_steps())
    }
}

/// Per-path generator: ChaCha8 keyed by `seed`, stream selected by the path
/// index, so path `i` is the same no matter which worker produces it.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Exact Gaussian simulation of path number `index`.
pub fn simulate_path(model: &BachelierModel, grid: TimeGrid, seed: u64, index: u64) -> SimulatedPath {
    let d = model.dim();
    let n = grid.n_steps();
    let sqrt_h = grid.step().sqrt();
    let mut rng = path_rng(seed, index);
    let mut w = vec![0.0; (n + 1) * d];
    for k in 0..n {
        for j in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            w[(k + 1) * d + j] = w[k * d + j] + sqrt_h * z;
        }
    }
    SimulatedPath::from_brownian(model, grid, w).expect("shape fixed above")
}

pub fn simulate_paths(model: &BachelierModel, grid: TimeGrid, n_paths: usize, seed: u64) -> Result<Vec<SimulatedPath>> {
    if n_paths == 0 {
        return Err(Error::InvalidParameter("n_paths must be ≥ 1".into()));
    }
    Ok((0..n_paths as u64)
        .into_par_iter()
        .map(|i| simulate_path(model, grid, seed, i))
        .collect())
}

/// Linear impact `Λ` and the fixed product `A` of risk aversion and impact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpactParams {
    lambda: f64,
    a_risk: f64,
}

impl ImpactParams {
    pub fn new(lambda: f64, a_risk: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("impact Λ must be positive, got {lambda}")));
        }
        check_a(a_risk)?;
        Ok(Self { lambda, a_risk })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn a_risk(&self) -> f64 {
        self.a_risk
    }

    /// Risk aversion `α = A / Λ`.
    pub fn alpha(&self) -> f64 {
        self.a_risk / self.lambda
    }
}

pub(crate) fn check_a(a_risk: f64) -> Result<()> {
    if a_risk > 0.0 && a_risk.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("A must be positive, got {a_risk}")))
    }
}

/// Bounded-ball search used for generic payoffs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupConvSearch {
    /// Grid points per axis, both for the coarse pass and each refinement.
    pub grid_points: usize,
    pub refinement_rounds: usize,
    pub shrink: f64,
    /// Coordinate-descent sweeps after the grid passes.
    pub polish_sweeps: usize,
}

impl Default for SupConvSearch {
    fn default() -> Self {
        Self { grid_points: 41, refinement_rounds: 3, shrink: 0.2, polish_sweeps: 4 }
    }
}

/// Maximizer and value of `y ↦ f(x + y) − ⟨yσ⁻¹, y⟩ / (2√A)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SupConvolution {
    pub value: f64,
    pub argmax: Vec<f64>,
}

/// Evaluates `g^A(x)` together with a maximizer.
pub fn sup_convolution(
    payoff: &Payoff,
    a_risk: f64,
    sigma: &SpdMatrix,
    x: &[f64],
    search: &SupConvSearch,
) -> Result<SupConvolution> {
    check_a(a_risk)?;
    check_dim(sigma.dim(), x.len())?;
    payoff.check_dim(sigma.dim())?;
    let sqrt_a = a_risk.sqrt();
    match payoff {
        Payoff::BasketCall { a, b } => {
            // y* = √A aσ maximizes ⟨a, y⟩ − ⟨yσ⁻¹, y⟩/(2√A); penalty at y* is √A⟨aσ, a⟩/2
            let a_sigma = row_vec_mul(a, sigma.entries())?;
            let shifted = dot(a, x) + b + 0.5 * sqrt_a * dot(&a_sigma, a);
            if shifted > 0.0 {
                Ok(SupConvolution { value: shifted, argmax: a_sigma.iter().map(|v| sqrt_a * v).collect() })
            } else {
                Ok(SupConvolution { value: 0.0, argmax: vec![0.0; x.len()] })
            }
        }
        Payoff::GenericLipschitz { evaluate, lipschitz, .. } => {
            let sigma_inv = sigma.inverse();
            let objective = |y: &[f64]| -> f64 {
                let shifted: Vec<f64> = x.iter().zip(y).map(|(a, b)| a + b).collect();
                evaluate(&shifted) - quad_form(y, sigma_inv.entries()).expect("dims") / (2.0 * sqrt_a)
            };
            let radius = 2.0 * sqrt_a * sigma.max_eigenvalue() * lipschitz;
            let (argmax, value) = maximize_in_ball(&objective, x.len(), radius, search);
            Ok(SupConvolution { value, argmax })
        }
    }
}

/// `g^A(x)`.
pub fn sup_convolve_g(payoff: &Payoff, a_risk: f64, sigma: &SpdMatrix, x: &[f64], search: &SupConvSearch) -> Result<f64> {
    Ok(sup_convolution(payoff, a_risk, sigma, x, search)?.value)
}

/// A `y` with `f(x + y) − ⟨yσ⁻¹, y⟩/(2√A) ≥ g^A(x) − eps`.
///
/// For basket calls the closed-form branch is exact. For generic payoffs the
/// search tolerance is far below any practical `eps`; `eps` only has to be
/// positive.
pub fn g_argmax(
    payoff: &Payoff,
    a_risk: f64,
    sigma: &SpdMatrix,
    x: &[f64],
    eps: f64,
    search: &SupConvSearch,
) -> Result<Vec<f64>> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    Ok(sup_convolution(payoff, a_risk, sigma, x, search)?.argmax)
}

pub fn payoff_eval(payoff: &Payoff, x: &[f64]) -> f64 {
    payoff.eval(x)
}

/// Grid search over the cube `[−r, r]^d` followed by shrinking local grids and
/// golden-section coordinate descent. The origin is always a candidate, so
/// the result is never below `objective(0)`.
fn maximize_in_ball<F: Fn(&[f64]) -> f64>(objective: &F, dim: usize, radius: f64, search: &SupConvSearch) -> (Vec<f64>, f64) {
    let mut best = vec![0.0; dim];
    let mut best_val = objective(&best);
    if radius <= 0.0 {
        return (best, best_val);
    }
    let points = search.grid_points.max(3);

    let mut half_width = radius;
    let mut center = vec![0.0; dim];
    for round in 0..=search.refinement_rounds {
        if round > 0 {
            half_width *= search.shrink;
            center.clone_from(&best);
        }
        let spacing = 2.0 * half_width / (points - 1) as f64;
        let mut idx = vec![0usize; dim];
        let mut y = vec![0.0; dim];
        loop {
            for j in 0..dim {
                y[j] = center[j] - half_width + idx[j] as f64 * spacing;
            }
            let v = objective(&y);
            if v > best_val {
                best_val = v;
                best.copy_from_slice(&y);
            }
            // odometer increment
            let mut j = 0;
            while j < dim {
                idx[j] += 1;
                if idx[j] < points {
                    break;
                }
                idx[j] = 0;
                j += 1;
            }
            if j == dim {
                break;
            }
        }
    }

    let mut step = 2.0 * half_width / (points - 1) as f64;
    for _ in 0..search.polish_sweeps {
        let before = best_val;
        for j in 0..dim {
            let (yj, v) = golden_section(
                |t| {
                    let mut y = best.clone();
                    y[j] = t;
                    objective(&y)
                },
                best[j] - step,
                best[j] + step,
            );
            if v > best_val {
                best_val = v;
                best[j] = yj;
            }
        }
        if best_val - before <= 1e-15 * (1.0 + best_val.abs()) {
            break;
        }
        step *= 0.5;
    }
    (best, best_val)
}

fn golden_section<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..80 {
        if (hi - lo).abs() <= 1e-13 * (1.0 + lo.abs()) {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Named generic payoffs available to the CLI and bindings.
pub fn named_generic_payoff(name: &str, dim: usize, a: &[f64], b: f64) -> Result<Payoff> {
    let a = if a.is_empty() { vec![1.0; dim] } else { a.to_vec() };
    check_dim(dim, a.len())?;
    let l = norm(&a);
    match name {
        "zero" => Payoff::generic("zero", 0.0, |_| 0.0),
        "basket_call" | "basket_call_generic" => Ok(Payoff::basket_call_as_generic(a, b)),
        "basket_put" => Payoff::generic("basket_put", l, move |x| (-(dot(&a, x) + b)).max(0.0)),
        "straddle" => Payoff::generic("straddle", l, move |x| (dot(&a, x) + b).abs()),
        // long call spread, capped at 1: non-concave with two kinks
        "call_spread" => Payoff::generic("call_spread", l, move |x| (dot(&a, x) + b).clamp(0.0, 1.0)),
        other => Err(Error::InvalidParameter(format!("unknown generic payoff '{other}'"))),
    }
}
