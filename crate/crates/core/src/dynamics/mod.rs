//! Time-domain Langevin dynamics, static deflection, field linearisation and
//! analytic driven response.

mod gradient;
mod langevin;
mod response;

pub use gradient::{linearize, linearize_field, static_deflection, GradientMatrix};
pub use langevin::{max_time_step, simulate_langevin, LangevinConfig, SinusoidalDrive, Trajectory};
pub use response::{doublet_sweep, driven_response_analytic, susceptibility, ResponseSweep};
