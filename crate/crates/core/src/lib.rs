//! Simulation and verification toolkit for diffusions whose noise degenerates at
//! the boundary of the state space.
//!
//! The central model lives on the closed unit ball of `R^n`:
//!
//! ```text
//! dX = (1 - |X|^2)^r gamma(|X|) dB - g(|X|) X dt
//! ```
//!
//! Modules cover boundary-preserving path simulation ([`ball_sde`]), the
//! autonomous radial diffusion and its Feller classification ([`radial`]),
//! synchronous coupling diagnostics ([`coupling`]), numerical verification of
//! the supporting inequalities ([`inequalities`]), the boundary chart
//! ([`transform`]) and general domains with a defining function
//! ([`general_domain`]).

// `!(x > 0.0)` deliberately rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ball_sde;
pub mod coeffs;
pub mod coupling;
pub mod error;
pub mod general_domain;
pub mod inequalities;
pub mod quadrature;
pub mod radial;
pub mod seeding;
pub mod stats;
pub mod transform;

pub use coeffs::{BallModel, CoeffFn};
pub use error::{Error, Result};
