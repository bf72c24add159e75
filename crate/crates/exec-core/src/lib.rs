//! Optimal liquidation of a block of `k` units before a deadline `T` into
//! discrete order flow.
//!
//! A trader holds an integer inventory and may only trade when a matching
//! order arrives. Arrivals follow a Poisson process whose intensity is
//! modulated by a continuous-time Markov chain (the liquidity regime); each
//! arrival carries a random integer size. Executing a block of `a` units
//! walks the book and costs `F(a) = c·a^γ` with `γ > 1`; any leftover at the
//! deadline is liquidated as one final block. The value function `v(k, T)`
//! is the minimal expected total cost over adapted integer strategies, with
//! `T` measured as time *to maturity* throughout.
//!
//! The crate provides, in dependency order:
//!
//! - [`model`]: depth function, order-size distributions, the
//!   regime-switching order-flow model, and beliefs over regimes;
//! - [`base`]: single-regime dynamic-programming solver, action thresholds,
//!   small-inventory closed forms, and genie/constant-strategy bounds;
//! - [`markov`]: fully-observed regime-switching solver, with or without
//!   fill constraints (trades capped by the incoming order size);
//! - [`filter`]: the regime filter driven by arrival times and sizes,
//!   built on an in-module matrix exponential;
//! - [`mesh`]: simplex discretization of the belief space with barycentric
//!   interpolation;
//! - [`partial`]: partially-observed solver on the belief mesh;
//! - [`continuous`]: the large-inventory continuous limit;
//! - [`sim`]: exact path simulator, policy executor (optionally running the
//!   filter live), and Monte Carlo cost estimates.

#![warn(missing_docs)]

pub mod base;
pub mod continuous;
mod error;
pub mod filter;
pub mod markov;
pub mod mesh;
pub mod model;
pub mod partial;
pub mod sim;

pub use error::{Error, Result};

pub(crate) mod util;
