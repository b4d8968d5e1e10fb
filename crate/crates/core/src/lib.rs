//! Maximum-likelihood quantum process tomography built around a projection
//! onto completely positive, trace-preserving (CPTP) maps.
//!
//! Processes are represented by their Choi matrix on `H_in ⊗ H_out` (input
//! factor first). The crate is organised bottom-up:
//!
//! * [`tensor`]: vectorisation, Kronecker products, partial traces and
//!   Hermitian eigen-machinery on dense complex matrices.
//! * [`channel`]: Choi matrices, tomography setups, the design matrix and the
//!   multinomial negative log-likelihood with its gradient.
//! * [`projections`]: CP, TP, TNI and uniform-success projections, and the
//!   composite CPTP projection by Dykstra's alternating projections.
//! * [`solvers`]: projected gradient descent with backtracking (pgdB), diluted
//!   iterations (DIA) and linear inversion with a final projection (LIFP).
//! * [`ensembles`]: random CPTP maps, the minimal preparation/measurement set,
//!   multinomial simulation and figures of merit.
//! * [`benchmark`]: seeded sweeps over dimension, sample size and method,
//!   run trial-parallel when the `parallel` feature is enabled.

// `!(x > 0.0)` is used on purpose so that NaN parameters are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmark;
pub mod channel;
pub mod ensembles;
mod error;
pub mod parallel;
pub mod projections;
pub mod solvers;
pub mod tensor;

pub use channel::{ChoiMatrix, CountsTable, DesignMatrix, TomographySetup};
pub use error::{Error, IterationFailure, Result};
pub use tensor::{CMatrix, CVector};
