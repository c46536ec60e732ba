//! Markov chain sparse control (MCSC).
//!
//! The pipeline: discretize multivariate time series into `K` states,
//! estimate a column-stochastic transition matrix `A` from observed
//! transition events (with damping, weighting, kernel smoothing, and
//! resetting variants), then design a sparse controller `A'` that
//! suppresses a few transitions so that the stationary (or finite-horizon)
//! distribution of `A + A'` concentrates on high-reward states.
//!
//! Modules follow the pipeline stages:
//!
//! - [`geometry`] — partition `R^N` into labeled regions (per-axis bins or
//!   representative points) and assign labels to points.
//! - [`chain`] — transition events, matrix estimation, robustness
//!   transforms, distribution evolution, stationary distributions.
//! - [`transport`] — estimate a transition matrix from distribution
//!   snapshots via exact optimal transport, for independent-measures data.
//! - [`control`] — the sparse-control objective and the greedy suppression
//!   optimizer.
//! - [`models`] — seeded generators for the benchmark dynamical systems
//!   (double wells, branching flow, Lorenz, Rössler).
//! - [`io`] — CSV/JSON serialization of every interface type.
//!
//! State labels are 1-based (`1..=K`) in all public APIs and file formats;
//! raw `ndarray` indices are 0-based. Column `i-1` of a transition matrix
//! is the outgoing distribution of state `i`.

pub mod chain;
pub mod control;
pub mod error;
pub mod geometry;
pub mod io;
pub mod models;
pub mod transport;

mod linalg;

pub use error::{McscError, Result};
