//! Tensor quadrature rules for expectations under the standard normal law
//! `N(0, I_d)`.

use std::f64::consts::PI;

use crate::error::{Error, Result};

pub const DEFAULT_NODE_BUDGET: usize = 1_000_000;

/// Nodes `z_i ∈ ℝ^d` and positive weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    dim: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.nodes.chunks_exact(self.dim).zip(self.weights.iter().copied())
    }

    /// `Σ wᵢ f(zᵢ)`, summed in node order.
    pub fn expect<F: FnMut(&[f64]) -> f64>(&self, mut f: F) -> f64 {
        let mut acc = KahanSum::default();
        for (z, w) in self.iter() {
            acc.add(w * f(z));
        }
        acc.value()
    }

    /// Like [`expect`](Self::expect) but propagates errors from the integrand.
    pub fn try_expect<F: FnMut(&[f64]) -> Result<f64>>(&self, mut f: F) -> Result<f64> {
        let mut acc = KahanSum::default();
        for (z, w) in self.iter() {
            acc.add(w * f(z)?);
        }
        Ok(acc.value())
    }

    /// d-fold tensor product of a one-dimensional rule.
    fn tensor(nodes_1d: &[f64], weights_1d: &[f64], dim: usize, budget: usize) -> Result<Self> {
        let m = nodes_1d.len();
        let total = (m as u128).checked_pow(dim as u32).unwrap_or(u128::MAX);
        if total > budget as u128 {
            return Err(Error::BudgetExceeded { nodes: total.min(usize::MAX as u128) as usize, budget });
        }
        let total = total as usize;
        let mut nodes = Vec::with_capacity(total * dim);
        let mut weights = Vec::with_capacity(total);
        let mut idx = vec![0usize; dim];
        for _ in 0..total {
            let mut w = 1.0;
            for &i in &idx {
                nodes.push(nodes_1d[i]);
                w *= weights_1d[i];
            }
            weights.push(w);
            for slot in idx.iter_mut() {
                *slot += 1;
                if *slot < m {
                    break;
                }
                *slot = 0;
            }
        }
        Ok(Self { dim, nodes, weights })
    }
}

/// Tensorized Gauss–Hermite rule for `N(0, I_d)` with `m` points per axis.
pub fn build_gauss_hermite(m: usize, dim: usize) -> Result<QuadratureRule> {
    build_gauss_hermite_with_budget(m, dim, DEFAULT_NODE_BUDGET)
}

pub fn build_gauss_hermite_with_budget(m: usize, dim: usize, budget: usize) -> Result<QuadratureRule> {
    if m < 2 || dim == 0 {
        return Err(Error::InvalidParameter(format!("Gauss–Hermite needs m ≥ 2 and d ≥ 1, got m={m}, d={dim}")));
    }
    let (x, w) = hermite_physicists(m)?;
    // e^{-x²} weight → N(0,1): z = √2 x, w/√π
    let nodes: Vec<f64> = x.iter().map(|v| v * std::f64::consts::SQRT_2).collect();
    let weights: Vec<f64> = w.iter().map(|v| v / PI.sqrt()).collect();
    QuadratureRule::tensor(&nodes, &weights, dim, budget)
}

/// Composite Gauss–Legendre rule on `[−half_width, half_width]^d` against the
/// standard normal density, renormalized to unit mass. Converges much faster
/// than Gauss–Hermite for integrands with kinks, which global rules resolve
/// only at algebraic rates.
pub fn build_composite_normal(panels: usize, order: usize, half_width: f64, dim: usize) -> Result<QuadratureRule> {
    build_composite_normal_with_budget(panels, order, half_width, dim, DEFAULT_NODE_BUDGET)
}

pub fn build_composite_normal_with_budget(
    panels: usize,
    order: usize,
    half_width: f64,
    dim: usize,
    budget: usize,
) -> Result<QuadratureRule> {
    if panels == 0 || order == 0 || dim == 0 || !(half_width > 0.0) {
        return Err(Error::InvalidParameter("composite rule needs positive panels, order, width and dimension".into()));
    }
    let (gx, gw) = gauss_legendre(order)?;
    let h = 2.0 * half_width / panels as f64;
    let mut nodes = Vec::with_capacity(panels * order);
    let mut weights = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let mid = -half_width + (p as f64 + 0.5) * h;
        for (x, w) in gx.iter().zip(&gw) {
            let z = mid + 0.5 * h * x;
            nodes.push(z);
            weights.push(0.5 * h * w * (-0.5 * z * z).exp() / (2.0 * PI).sqrt());
        }
    }
    let mut total = KahanSum::default();
    for w in &weights {
        total.add(*w);
    }
    let total = total.value();
    for w in &mut weights {
        *w /= total;
    }
    QuadratureRule::tensor(&nodes, &weights, dim, budget)
}

/// Default pricing rule: `m = 64, 32, 16` for `d = 1, 2, 3`.
pub fn default_pricing_rule(dim: usize) -> Result<QuadratureRule> {
    let m = match dim {
        1 => 64,
        2 => 32,
        3 => 16,
        _ => {
            return Err(Error::BudgetExceeded { nodes: usize::MAX, budget: DEFAULT_NODE_BUDGET });
        }
    };
    build_gauss_hermite(m, dim)
}

/// Default rule for integrating kinked integrands (dual bounds): a composite
/// Gauss–Legendre rule filling most of the node budget.
pub fn default_kink_rule(dim: usize) -> Result<QuadratureRule> {
    let (panels, order) = match dim {
        1 => (20_000, 4),
        2 => (240, 4),
        3 => (24, 4),
        _ => {
            return Err(Error::BudgetExceeded { nodes: usize::MAX, budget: DEFAULT_NODE_BUDGET });
        }
    };
    build_composite_normal(panels, order, 10.0, dim)
}

/// Roots and weights of the physicists' Hermite polynomial `H_m` (weight `e^{-x²}`),
/// by Newton iteration on the orthonormal recurrence.
fn hermite_physicists(m: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let pim4 = PI.powf(-0.25);
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    let half = m.div_ceil(2);
    let mf = m as f64;
    let mut z = 0.0;
    for i in 0..half {
        z = match i {
            0 => (2.0 * mf + 1.0).sqrt() - 1.85575 * (2.0 * mf + 1.0).powf(-0.16667),
            1 => z - 1.14 * mf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        let mut converged = false;
        for _ in 0..100 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..m {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * mf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * (1.0 + z.abs()) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NonFiniteResult { eigenvalue: z });
        }
        x[i] = z;
        x[m - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[m - 1 - i] = w[i];
    }
    if m % 2 == 1 {
        x[half - 1] = 0.0;
    }
    // ascending order
    x.reverse();
    w.reverse();
    Ok((x, w))
}

/// Gauss–Legendre nodes and weights on `[−1, 1]`.
pub(crate) fn gauss_legendre(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut pp = 0.0;
        let mut converged = false;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
            }
            pp = nf * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NonFiniteResult { eigenvalue: z });
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    Ok((x, w))
}

/// Integral of `f` over `[lo, hi]` by composite Gauss–Legendre.
pub fn integrate_interval<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, panels: usize, order: usize) -> f64 {
    let (gx, gw) = gauss_legendre(order).expect("Gauss–Legendre converges for moderate orders");
    let h = (hi - lo) / panels as f64;
    let mut acc = KahanSum::default();
    for p in 0..panels {
        let mid = lo + (p as f64 + 0.5) * h;
        for (x, w) in gx.iter().zip(&gw) {
            acc.add(0.5 * h * w * f(mid + 0.5 * h * x));
        }
    }
    acc.value()
}

/// Compensated summation.
#[derive(Debug, Default, Clone, Copy)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, v: f64) {
        let y = v - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}
