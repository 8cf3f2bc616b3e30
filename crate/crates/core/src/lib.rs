//! Sectional solver and estimate checks for the coagulation-fragmentation
//! equation with balanced-growth coefficients
//!
//! ```text
//! K(x, y) = K0 (x^α y^(λ-α) + x^(λ-α) y^α),   a(x) = a0 x^(λ-1),   b(x, y) = B(x/y) / y
//! ```
//!
//! The crate is `no_std` (with `alloc`) when built without the default `std`
//! feature. File formats, configuration and the command-line front end live in
//! the companion `cofrag` crate.
//!
//! Layout:
//!
//! * [`kernel`]: coefficient family, validation and derived constants
//!   (fragmentation moments, critical mass, Young constants).
//! * [`grid`]: size grids, cell-average states, initial data and moments.
//! * [`operators`]: conservative discrete coagulation and fragmentation
//!   operators with truncation-flux bookkeeping.
//! * [`integrator`]: adaptive, positivity-preserving Heun time stepping.
//! * [`diagnostics`]: trajectory checks of the moment and Lyapunov estimates,
//!   gelation scans, stability distance and weak-form residuals.
//! * [`reference`]: closed-form oracles and a brute-force fine-grid solver.

#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` deliberately rejects NaN along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

mod error;
mod math;

pub mod diagnostics;
pub mod exact;
pub mod grid;
pub mod integrator;
pub mod kernel;
pub mod operators;
pub mod quad;
pub mod reference;

pub use error::{Assumption, Error};
pub use grid::{GridKind, InitialData, MomentReport, SizeGrid, State};
pub use integrator::{RunConfig, SnapshotPolicy, TimeSeries};
pub use kernel::{CoefficientSpec, DaughterSpec, DerivedConstants, ValidatedSpec};
pub use operators::{Discretization, Physics, StepLedger, TruncationMode, TruncationSpec};

pub type Result<T> = core::result::Result<T, Error>;
