//! Solvers and diagnostics for the stationary obstacle problem
//!
//! ```text
//! min{ Au - f, u - psi } = 0   a.e. on O,      u = g on Gamma_1,
//! ```
//!
//! where `A` is the elliptic Heston operator
//!
//! ```text
//! Av = -(y/2)(v_xx + 2*rho*sigma*v_xy + sigma^2*v_yy)
//!      - (r - q - y/2)v_x - kappa*(theta - y)v_y + r*v,
//! ```
//!
//! degenerate along the boundary portion `Gamma_0 = {y = 0}` (where no
//! boundary condition is imposed) and Dirichlet along `Gamma_1`. Everything
//! is discretized with bilinear elements on tensor grids against the weight
//! `w(x,y) = y^(beta-1) e^(-gamma|x| - mu y)`, which makes the truncated
//! half-plane a finite-measure domain.
//!
//! The crate is `no_std` (alloc only); file formats, configuration and the
//! command-line front end live in the companion `heston-cli` crate.
//!
//! Module map:
//! - [`params`]: coefficient validation, derived constants, the affine
//!   change of variables that zeroes the drift combination `b1`.
//! - [`grid`]: domains, weighted tensor grids, quadrature of the weight,
//!   grid functions and discrete weighted Sobolev norms.
//! - [`analysis`]: Hardy-inequality and logarithmic-cutoff checks, slope
//!   fitting for rate studies.
//! - [`operator`]: pointwise strong/divergence forms of `A` and the
//!   first-order commutator `[A, phi]`.
//! - [`assembly`]: Galerkin assembly of the bilinear form, mass forms and
//!   the discrete energy-identity checks.
//! - [`envelopes`]: explicit sub/super-solution envelopes, admissibility
//!   and barrier checks.
//! - [`solvers`]: coercive solves, penalized semismooth Newton, the
//!   epsilon-continuation for the variational inequality, the monotone
//!   iterations for the non-coercive problems, and a projected-relaxation
//!   complementarity oracle.
//! - [`cir`]: Kummer confluent hypergeometric functions and the
//!   one-dimensional Cox-Ingersoll-Ross closed forms used as oracles.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod assembly;
pub mod cir;
pub mod envelopes;
pub mod field;
pub mod grid;
pub mod linalg;
pub mod operator;
pub mod params;
pub mod rng;
mod scalar;
pub mod solvers;

pub use field::Field2;
pub use grid::{Domain, GridFunction, WeightedGrid};
pub use params::{CoordinateChange, DerivedConstants, HestonParams};
