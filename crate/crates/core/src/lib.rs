//! Exponential utility indifference pricing of European options in a
//! multi-dimensional Bachelier market with small linear price impact.
//!
//! The modules build on each other bottom-up:
//!
//! - [`linalg`]: SPD matrices and stable spectral functions (`exp`, `cosh/sinh` ratios).
//! - [`market`]: model, payoffs, exact path simulation and the sup-convolution `g^A`.
//! - [`pricer`]: the smoothed claim `u^A(t, x) = E[g^A(x + W_{T−t}σ)]`, its gradient,
//!   PDE residual and the high-risk-aversion limit values.
//! - [`hedger`]: the tracking strategy, wealth with quadratic impact costs and the
//!   exponential supermartingale diagnostics.
//! - [`asymptotics`]: Monte Carlo certainty equivalents, dual lower bounds and the
//!   `cosh/sinh` kernel family.

pub mod asymptotics;
pub mod error;
pub mod hedger;
pub mod linalg;
pub mod market;
pub mod pricer;
pub mod quadrature;
pub mod special;

pub use error::{Error, Result};
pub use linalg::{Matrix, SpdMatrix};
pub use market::{BachelierModel, ImpactParams, Payoff, SimulatedPath, SupConvSearch, TimeGrid};
pub use pricer::Pricer;
pub use quadrature::QuadratureRule;
