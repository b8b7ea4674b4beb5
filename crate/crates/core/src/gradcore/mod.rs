//! Dense kernels, a reverse-mode tape, and finite-difference gradient checks.
//!
//! Kernels are pure functions over caller-owned buffers and can run on many
//! threads at once. A [`GradTape`] is single-threaded; use one per worker.

pub mod check;
pub mod dense;
pub mod tape;

pub use check::{check_gradient, Coords, FnObjective, Objective, Parameters, DEFAULT_STEP};
pub use dense::{dot, l2_norm, log_sum_exp, matvec, softmax, DenseMatrix, DenseVector};
pub use tape::{GradTape, TapeGradients, Var};
