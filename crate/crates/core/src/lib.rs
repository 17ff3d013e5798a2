//! Harris distribution `H1(m, k, 1/k)` and the two stochastic processes whose
//! time marginals follow it:
//!
//! * a pure-birth process on `{1, 1+k, 1+2k, ...}` with linear rates
//!   `(nk+1)λ` ([`birth`]), whose law at time `t` is Harris with `m = e^{tλk}`;
//! * a Poisson process with gamma-distributed intensity, mapped through
//!   `Z = kX + 1` ([`mixture`]), whose law at time `t` is Harris with
//!   `m = (a+t)/a`.
//!
//! Every closed form is paired with an independent numerical route: exact
//! event-driven simulation, integration of the forward equations
//! ([`ode`]), and adaptive quadrature of the mixing integral ([`quad`]).
//! [`validate`] provides the chi-square and moment checks used to compare
//! them.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod birth;
pub mod dist;
pub mod error;
pub mod mixture;
pub mod ode;
pub mod quad;
pub mod rng;
pub mod sampler;
pub mod validate;

pub use birth::{ProcessParams, Trajectory, TransientSolution};
pub use dist::{HarrisParams, PmfTable, SupportPoint};
pub use error::{HarrisError, Result};
pub use mixture::MixtureParams;
pub use rng::RngStream;
pub use validate::{GofResult, ValidationReport};
