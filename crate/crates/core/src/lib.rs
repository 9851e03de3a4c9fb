//! Black-Scholes option pricing through a physics-informed neural network.
//!
//! The Black-Scholes PDE is reduced to the heat equation `u_tau = u_xx` by the
//! usual change of variables. A small tanh network is trained on the reduced
//! problem, with the payoff enforced exactly through a trial solution and
//! (optionally) market quotes entering as a soft data-fit term. Closed-form
//! Black-Scholes-Merton prices and a Crank-Nicolson solver act as references.
//!
//! Module map:
//!
//! - [`pricing`]: closed-form prices, payoffs and the normal CDF.
//! - [`heat`]: the `(S, t, c) <-> (x, tau, u)` change of variables.
//! - [`net`]: the 2-32-32-1 network, exact input derivatives, gradients, Adam.
//! - [`pinn`]: trial solution, residual loss, training and prediction.
//! - [`fd`]: analytic heat solution and Crank-Nicolson reference solver.
//! - [`market`]: series/contract parsing, option codes, volatility, day count.
//! - [`metrics`]: MAE, MSE, MAPE, POCID and ARV.

// `!(x > 0.0)` is used on purpose so NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fd;
pub mod heat;
pub mod market;
pub mod metrics;
pub mod net;
pub mod pinn;
pub mod pricing;

pub use error::{Error, Result};
