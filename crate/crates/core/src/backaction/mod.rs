//! Consequences of the force-gradient matrix: effective stiffness, exact
//! eigenmodes, the approximate splitting, Pauli and curl decompositions,
//! work per cycle, instability thresholds and maps.

mod modes;
mod pauli;
mod spectrum;
mod stability;

pub use modes::{
    effective_stiffness, exact_modes, modes_at_power, splitting_approx, EffectiveStiffness, Instability, ModeEllipse,
    StabilityReport, LINEAR_TOLERANCE,
};
pub use pauli::{pauli_decompose, work_per_cycle, PauliDecomposition};
pub use spectrum::{coupled_projected_psd, coupled_susceptibility};
pub use stability::{
    area_curve, stability_map, threshold_power, threshold_power_for_gradient, QuadraticOverlay, StabilityMap,
};
