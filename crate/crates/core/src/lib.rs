//! Kronecker-factored natural-gradient optimizers for fully connected networks.
//!
//! Three step rules share one training loop:
//!
//! * exact K-FAC, which eigendecomposes every exponential-average Kronecker
//!   factor,
//! * RS-KFAC, which replaces that decomposition by a randomized SVD and keeps
//!   the V-side basis,
//! * SRE-KFAC, which uses a symmetric randomized EVD instead.
//!
//! Low-rank factors are inverted with the damped identity
//! `(U D Uᵀ + λI)⁻¹ V = U[(D + λI)⁻¹ − I/λ]UᵀV + V/λ`, so no `d × d` inverse is
//! ever formed on the randomized paths.
//!
//! The [`harness`] module drives experiments (training runs, spectrum studies,
//! the eigenvalue-count bound, scaling benchmarks and method comparisons) and
//! writes CSV/JSON artifacts; the `rkfac` binary exposes it on the command line.

// `!(x > 0.0)` checks also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod harness;
pub mod kfactor;
pub mod linalg;
pub mod network;
pub mod optimizer;
pub mod rnla;

pub use error::{Error, Result};
pub use linalg::{DenseMatrix, RngState};
