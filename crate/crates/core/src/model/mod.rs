//! Domain types, constants and force-field models.

mod cantilever;
mod field;
mod params;
mod tabulated;
mod vec2;

pub use cantilever::{cantilever_eigenfrequencies, CLAMPED_FREE_ROOTS};
pub use field::{ForceField, GaussianBeamField, LinearField, NoField};
pub use params::{thermal_force_psd, thermal_force_psd_one_sided, Environment, ModalParams};
pub use tabulated::{RectGrid, TabulatedField, TransmissionMap};
pub use vec2::Vec2;

/// Boltzmann constant (J/K), exact SI value.
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// 1 micrometre in metres.
pub const UM: f64 = 1e-6;
