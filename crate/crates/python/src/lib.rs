//! Python bindings: `import indiff`.
//!
//! Matrices cross the boundary as lists of rows and vectors as lists of
//! floats. Validation errors raise `ValueError`; overflow guards and
//! non-finite matrix functions raise `ArithmeticError`. Monte Carlo calls
//! release the GIL while they run.

use std::sync::Arc;

use indiff::asymptotics::{self, DualIntegration, DualSpec, KernelKind};
use indiff::hedger;
use indiff::market::{self, named_generic_payoff, SupConvSearch};
use indiff::quadrature::{default_kink_rule, default_pricing_rule};
use indiff::{special, Matrix, TimeGrid};
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: indiff::Error) -> PyErr {
    if e.is_numeric() {
        PyArithmeticError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

trait IntoPy<T> {
    fn py_err(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for indiff::Result<T> {
    fn py_err(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.rows()
}

fn chunked(v: &[f64], d: usize) -> Vec<Vec<f64>> {
    v.chunks(d).map(|c| c.to_vec()).collect()
}

/// Symmetric positive definite matrix with cached eigendecomposition.
#[pyclass(name = "SpdMatrix", frozen, from_py_object)]
#[derive(Clone)]
struct PySpdMatrix(indiff::SpdMatrix);

#[pymethods]
impl PySpdMatrix {
    #[new]
    fn new(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(Self(indiff::SpdMatrix::from_rows(&rows).py_err()?))
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn entries(&self) -> Vec<Vec<f64>> {
        rows(self.0.entries())
    }

    #[getter]
    fn eigenvalues(&self) -> Vec<f64> {
        self.0.eig_values().to_vec()
    }

    fn inverse(&self) -> Self {
        Self(self.0.inverse())
    }

    fn __repr__(&self) -> String {
        format!("SpdMatrix({:?})", self.0.entries().rows())
    }
}

/// Bachelier market `S_t = s0 + μt + W_t σ`.
#[pyclass(name = "BachelierModel", frozen, from_py_object)]
#[derive(Clone)]
struct PyModel(indiff::BachelierModel);

#[pymethods]
impl PyModel {
    #[new]
    fn new(s0: Vec<f64>, mu: Vec<f64>, sigma: Vec<Vec<f64>>, horizon: f64) -> PyResult<Self> {
        let sigma = indiff::SpdMatrix::from_rows(&sigma).py_err()?;
        Ok(Self(indiff::BachelierModel::new(s0, mu, sigma, horizon).py_err()?))
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.0.horizon()
    }

    #[getter]
    fn sigma(&self) -> PySpdMatrix {
        PySpdMatrix(self.0.sigma().clone())
    }

    /// Brownian values (`(n+1)×d`) and prices of one simulated path.
    fn simulate_path(&self, n_steps: usize, seed: u64, index: u64) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let grid = TimeGrid::new(n_steps, self.0.horizon()).py_err()?;
        let path = market::simulate_path(&self.0, grid, seed, index);
        let w = (0..=n_steps).map(|k| path.w(k).to_vec()).collect();
        let s = (0..=n_steps).map(|k| path.s(k).to_vec()).collect();
        Ok((w, s))
    }
}

/// European payoff: a closed-form basket call or a named Lipschitz payoff.
#[pyclass(name = "Payoff", frozen, from_py_object)]
#[derive(Clone)]
struct PyPayoff(indiff::Payoff);

#[pymethods]
impl PyPayoff {
    /// `(⟨a, x⟩ + b)⁺`.
    #[staticmethod]
    fn basket_call(a: Vec<f64>, b: f64) -> Self {
        Self(indiff::Payoff::basket_call(a, b))
    }

    #[staticmethod]
    fn zero(dim: usize) -> Self {
        Self(indiff::Payoff::zero(dim))
    }

    /// `basket_put`, `straddle`, `call_spread`, `basket_call_generic` or `zero`,
    /// all handled by the generic sup-convolution search.
    #[staticmethod]
    #[pyo3(signature = (name, dim, a = None, b = 0.0))]
    fn named(name: &str, dim: usize, a: Option<Vec<f64>>, b: f64) -> PyResult<Self> {
        Ok(Self(named_generic_payoff(name, dim, &a.unwrap_or_default(), b).py_err()?))
    }

    fn __call__(&self, x: Vec<f64>) -> PyResult<f64> {
        self.0.check_dim(x.len()).py_err()?;
        Ok(self.0.eval(&x))
    }

    #[getter]
    fn lipschitz(&self) -> f64 {
        self.0.lipschitz()
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.0)
    }
}

/// `g^A(x) = sup_y f(x + y) − ⟨yσ⁻¹, y⟩ / (2√A)`.
#[pyfunction]
fn sup_convolve_g(payoff: &PyPayoff, a_risk: f64, sigma: &PySpdMatrix, x: Vec<f64>) -> PyResult<f64> {
    market::sup_convolve_g(&payoff.0, a_risk, &sigma.0, &x, &SupConvSearch::default()).py_err()
}

/// Bachelier call value `m Φ(m/s) + s φ(m/s)`.
#[pyfunction]
fn normal_call(m: f64, s: f64) -> f64 {
    special::normal_call(m, s)
}

/// `u^A`: smoothed-claim price, gradient, PDE residual and Λ ↓ 0 limits.
#[pyclass(name = "Pricer", frozen, from_py_object)]
#[derive(Clone)]
struct PyPricer(indiff::Pricer);

#[pymethods]
impl PyPricer {
    #[new]
    fn new(a_risk: f64, model: &PyModel, payoff: &PyPayoff) -> PyResult<Self> {
        let rule = default_pricing_rule(model.0.dim()).py_err()?;
        Ok(Self(indiff::Pricer::new(a_risk, model.0.clone(), payoff.0.clone(), Arc::new(rule)).py_err()?))
    }

    #[getter]
    fn a_risk(&self) -> f64 {
        self.0.a_risk()
    }

    fn g(&self, x: Vec<f64>) -> PyResult<f64> {
        self.0.g(&x).py_err()
    }

    fn price(&self, t: f64, x: Vec<f64>) -> PyResult<f64> {
        self.0.price_u(t, &x).py_err()
    }

    fn delta(&self, t: f64, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.0.delta(t, &x).py_err()
    }

    #[pyo3(signature = (t, x, fd_step = None))]
    fn pde_residual(&self, t: f64, x: Vec<f64>, fd_step: Option<f64>) -> PyResult<f64> {
        let h = fd_step.unwrap_or_else(|| self.0.default_fd_step(t, &x));
        self.0.pde_residual(t, &x, h).py_err()
    }

    fn limit_value(&self, phi0: Vec<f64>) -> PyResult<f64> {
        self.0.limit_value(&phi0).py_err()
    }

    fn indifference_limit(&self, phi0: Vec<f64>) -> PyResult<f64> {
        self.0.indifference_limit(&phi0).py_err()
    }

    /// Dual lower bound for `Y ≡ 0` (`"zero"`), the limit-attaining `Y`
    /// (`"optimal"`) or a constant vector.
    #[pyo3(signature = (phi0, spec = "optimal", constant = None))]
    fn dual_lower_bound(&self, py: Python<'_>, phi0: Vec<f64>, spec: &str, constant: Option<Vec<f64>>) -> PyResult<f64> {
        let d = self.0.dim();
        let spec = match (spec, constant) {
            ("zero", _) => DualSpec::zero(d),
            ("optimal", _) => asymptotics::optimal_dual_y(&self.0, &phi0, 1e-9).py_err()?,
            ("constant", Some(y)) => DualSpec::constant(y),
            (other, _) => return Err(PyValueError::new_err(format!("unknown spec '{other}' (zero, optimal, constant)"))),
        };
        let pricer = self.0.clone();
        py.detach(move || {
            let method = if d <= 3 {
                DualIntegration::Quadrature(Arc::new(default_kink_rule(d)?))
            } else {
                DualIntegration::MonteCarlo { n_samples: 100_000, seed: 0 }
            };
            asymptotics::dual_lower_bound(&pricer, &phi0, &spec, &method).map(|b| b.value)
        })
        .py_err()
    }
}

/// Tracking hedge for one `(A, Λ)`.
#[pyclass(name = "Hedger", frozen)]
struct PyHedger(hedger::Hedger);

impl PyHedger {
    fn grid(&self, n_steps: Option<usize>) -> PyResult<TimeGrid> {
        TimeGrid::new(n_steps.unwrap_or_else(|| self.0.auto_steps()), self.0.pricer().model().horizon()).py_err()
    }
}

#[pymethods]
impl PyHedger {
    #[new]
    fn new(pricer: &PyPricer, lambda: f64) -> PyResult<Self> {
        Ok(Self(hedger::Hedger::new(pricer.0.clone(), lambda).py_err()?))
    }

    #[getter]
    fn auto_steps(&self) -> usize {
        self.0.auto_steps()
    }

    /// Full trajectory on simulated path `index` as a dict.
    #[pyo3(signature = (phi0, seed, index = 0, n_steps = None))]
    fn integrate_strategy<'py>(
        &self,
        py: Python<'py>,
        phi0: Vec<f64>,
        seed: u64,
        index: u64,
        n_steps: Option<usize>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let grid = self.grid(n_steps)?;
        let path = market::simulate_path(self.0.pricer().model(), grid, seed, index);
        let r = self.0.integrate_strategy(&path, &phi0).py_err()?;
        let d = r.dim();
        let out = PyDict::new(py);
        out.set_item("positions", chunked(&r.phi_positions, d))?;
        out.set_item("rates", chunked(&r.phi_rates, d))?;
        out.set_item("targets", chunked(&r.targets, d))?;
        out.set_item("terminal_wealth", r.terminal_wealth)?;
        out.set_item("payoff_value", r.payoff_value)?;
        out.set_item("utility_exponent", r.utility_exponent)?;
        out.set_item("cost_integral", r.cost_integral)?;
        out.set_item("sup_position_norm", r.sup_position_norm)?;
        Ok(out)
    }

    /// `(value, std_error)` of the certainty equivalent along the tracking strategy.
    #[pyo3(signature = (phi0, n_paths, seed, n_steps = None))]
    fn certainty_equivalent(&self, py: Python<'_>, phi0: Vec<f64>, n_paths: usize, seed: u64, n_steps: Option<usize>) -> PyResult<(f64, f64)> {
        let grid = self.grid(n_steps)?;
        let ce = py.detach(|| asymptotics::certainty_equivalent_mc(&self.0, &phi0, n_paths, grid, seed)).py_err()?;
        Ok((ce.value, ce.std_error))
    }

    #[pyo3(signature = (phi0, n_paths, seed, n_steps = None))]
    fn indifference_price(&self, py: Python<'_>, phi0: Vec<f64>, n_paths: usize, seed: u64, n_steps: Option<usize>) -> PyResult<(f64, f64)> {
        let grid = self.grid(n_steps)?;
        let ce = py.detach(|| asymptotics::indifference_price_mc(&self.0, &phi0, n_paths, grid, seed)).py_err()?;
        Ok((ce.value, ce.std_error))
    }

    /// `(mean, std_error)` of the drift-corrected `M_T / M_0`.
    #[pyo3(signature = (phi0, n_paths, seed, n_steps = None))]
    fn supermartingale_ratio(&self, py: Python<'_>, phi0: Vec<f64>, n_paths: usize, seed: u64, n_steps: Option<usize>) -> PyResult<(f64, f64)> {
        let grid = self.grid(n_steps)?;
        let r = py.detach(|| asymptotics::supermartingale_ratio_mc(&self.0, &phi0, n_paths, grid, seed)).py_err()?;
        Ok((r.mean, r.std_error))
    }
}

fn kernel_kind(which: &str) -> PyResult<KernelKind> {
    match which {
        "K" => Ok(KernelKind::K),
        "L" => Ok(KernelKind::L),
        other => Err(PyValueError::new_err(format!("kernel must be 'K' or 'L', got '{other}'"))),
    }
}

#[pyfunction]
fn kernel_k(a_risk: f64, lambda: f64, sigma: &PySpdMatrix, horizon: f64, t: f64, s: f64) -> PyResult<Vec<Vec<f64>>> {
    Ok(rows(&asymptotics::kernel_k(a_risk, lambda, &sigma.0, horizon, t, s).py_err()?))
}

#[pyfunction]
fn kernel_g(a_risk: f64, lambda: f64, sigma: &PySpdMatrix, horizon: f64, t: f64) -> PyResult<Vec<Vec<f64>>> {
    Ok(rows(&asymptotics::kernel_g(a_risk, lambda, &sigma.0, horizon, t).py_err()?))
}

#[pyfunction]
fn kernel_l(a_risk: f64, lambda: f64, sigma: &PySpdMatrix, horizon: f64, t: f64, s: f64) -> PyResult<Vec<Vec<f64>>> {
    Ok(rows(&asymptotics::kernel_l(a_risk, lambda, &sigma.0, horizon, t, s).py_err()?))
}

#[pyfunction]
#[pyo3(signature = (a_risk, lambda, sigma, horizon, s, which = "K"))]
fn kernel_limit_integral(a_risk: f64, lambda: f64, sigma: &PySpdMatrix, horizon: f64, s: f64, which: &str) -> PyResult<Vec<Vec<f64>>> {
    let kind = kernel_kind(which)?;
    Ok(rows(&asymptotics::kernel_limit_integral(a_risk, lambda, &sigma.0, horizon, s, kind).py_err()?))
}

#[pymodule]
#[pyo3(name = "indiff")]
fn indiff_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySpdMatrix>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyPayoff>()?;
    m.add_class::<PyPricer>()?;
    m.add_class::<PyHedger>()?;
    m.add_function(wrap_pyfunction!(sup_convolve_g, m)?)?;
    m.add_function(wrap_pyfunction!(normal_call, m)?)?;
    m.add_function(wrap_pyfunction!(kernel_k, m)?)?;
    m.add_function(wrap_pyfunction!(kernel_g, m)?)?;
    m.add_function(wrap_pyfunction!(kernel_l, m)?)?;
    m.add_function(wrap_pyfunction!(kernel_limit_integral, m)?)?;
    Ok(())
}
