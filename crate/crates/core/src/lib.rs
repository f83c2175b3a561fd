//! Fractional integrals and derivatives with general analytic kernels,
//! their combined (two-sided) forms, and a Pontryagin-type toolkit for
//! optimal control problems driven by the combined Caputo operator.
//!
//! The crate is `no_std` and only needs `alloc`. Everything that touches
//! files, processes or the terminal lives in the `fkoc` companion crate.
//!
//! Module map:
//!
//! * [`special`]: complex Gamma function and complex powers.
//! * [`kernel`]: analytic kernels, Gamma-weighted series, reciprocal kernels,
//!   the semigroup coefficient condition and the sup bound `M`.
//! * [`grid`]: uniform meshes, sampled functions and product-integration
//!   weights for the weakly singular kernels.
//! * [`operators`]: dense matrices for the integral, Riemann–Liouville and
//!   Caputo operators and their combinations.
//! * [`identities`]: numerical checks of duality, integration by parts and
//!   the Gronwall bound.
//! * [`expr`]: the small expression language used for Lagrangians,
//!   dynamics, bounds and candidates.
//! * [`ocp`]: Hamiltonian, extremal residuals, forward–backward sweep,
//!   sufficiency and perturbation experiments.
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

extern crate alloc;

pub mod error;
pub mod expr;
pub mod grid;
pub mod identities;
pub mod kernel;
pub mod linalg;
pub mod ocp;
pub mod operators;
pub mod special;

pub use error::{Error, Result};
pub use grid::{GridFunction, Side, TimeGrid};
pub use kernel::{AnalyticKernel, GammaWeightedSeries};
pub use operators::{FracOperatorMatrix, OperatorKind};
pub use special::CScalar;
