//! The driven-response force-mapping experiment: readout gradients from
//! transmission maps, synthetic lock-in sweeps, force inversion, whole-map
//! reconstruction and the direct-vs-predicted splitting comparison.

mod map;
mod protocol;
mod readout;
mod splitting;

pub use map::{
    backaction_free_points, map_correlation, map_force_field, pauli_map, BackactionFreePoint, ErrorStats, ForceMap,
    MapNode, SNR_THRESHOLD,
};
pub use protocol::{
    fit_force, minimum_resolvable_force, synthesize_measurement, ForceMeasurement, ProtocolConfig,
    SyntheticMeasurement, MIN_OVERLAP,
};
pub use readout::{measurement_vector, MeasurementVector};
pub use splitting::{splitting_comparison, SplittingComparison, SplittingConfig, SplittingNode};
