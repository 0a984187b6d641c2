//! Simulation and analysis of a bidimensional nanomechanical oscillator
//! evolving in the optical force field of a tightly focused beam.
//!
//! The crate is organised as a pipeline:
//!
//! * [`model`]: modal parameters, force-field models and physical constants.
//! * [`dynamics`]: Langevin integration, static deflection, field linearisation
//!   and the analytic driven response.
//! * [`spectral`]: Welch PSD estimation, analytic projected spectra, doublet
//!   fitting and thermodynamic calibration.
//! * [`backaction`]: effective stiffness, exact eigenmodes, splitting, Pauli
//!   decomposition, work per cycle and instability maps.
//! * [`reconstruct`]: the driven-response force-mapping experiment and the
//!   direct-vs-predicted splitting comparison.
//!
//! All quantities are SI internally; frequencies are angular (rad/s) unless a
//! name says `hz`.

// `!(x > 0.0)` is used throughout to reject NaN along with the bound.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backaction;
pub mod dynamics;
pub mod error;
pub mod io;
pub mod model;
pub mod reconstruct;
pub mod seed;
pub mod spectral;

mod lm;

pub use error::{Error, Result};
pub use model::{Environment, ForceField, GaussianBeamField, ModalParams, TabulatedField, Vec2};
