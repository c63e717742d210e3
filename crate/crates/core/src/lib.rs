//! Multi-time Lagrangian 1-forms for the Toda lattice.
//!
//! * [`lattice`]: state types and the boundary convention shared by everything else.
//! * [`continuous`]: the two-time Lagrangian 1-form, its commuting Hamiltonian flows,
//!   actions along polylines and the closure check.
//! * [`backlund`]: Bäcklund maps `F_lambda`, edge Lagrangians, commutativity, closure
//!   constant, spectrality and symplecticity.
//! * [`zero_curvature`]: wave functions, transfer and evolution matrices, monodromy.
//! * [`harness`]: verification suite, trajectory and sweep drivers used by the CLI.

pub mod backlund;
pub mod continuous;
pub mod error;
pub mod harness;
pub mod lattice;
pub mod numerics;
pub mod zero_curvature;

pub use error::{Result, TodaError};
pub use lattice::{gap_exp, gap_exp_prev, validate_state, Boundary, LatticeState, Matrix2, TodaConfig};
