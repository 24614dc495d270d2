//! Numerical laboratory for Weinstein potentials `phi_eps = -log||s0 + eps h||^2`
//! near a degenerating normal-crossing divisor.
//!
//! Modules, bottom-up:
//! - [`jetcalc`]: AD 2-jets, `lambda`, `omega`, Liouville field.
//! - [`scenes`]: the built-in degeneration scenarios and their strata.
//! - [`critfinder`]: multistart Newton, classification, unstable planes.
//! - [`continuation`]: eps-ladders, index shift, eigenvalue rates.
//! - [`fibration`]: `pi = s0/h`, symplectic parallel transport, thimbles.
//! - [`gluing`]: the glued local-model structure and its checks.
//! - [`cli`]: JSON-configured orchestration and reports.

pub mod error;
pub mod jetcalc;
pub mod critfinder;
pub mod ode;
pub mod scenes;
pub mod continuation;
pub mod fibration;
pub mod gluing;
pub mod cli;

pub use error::{LabError, Result};
