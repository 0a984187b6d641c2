use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Clamped-free roots `beta_n L` of `1 + cos(x) cosh(x) = 0`.
pub const CLAMPED_FREE_ROOTS: [f64; 5] = [1.8751041, 4.6940911, 7.8547574, 10.995541, 14.137168];

/// Euler-Bernoulli flexural eigenfrequencies (Hz) of a singly clamped
/// cylindrical beam.
pub fn cantilever_eigenfrequencies(
    length: f64,
    diameter: f64,
    youngs: f64,
    density: f64,
    n_modes: usize,
) -> Result<Vec<f64>> {
    for (name, v) in [
        ("length", length),
        ("diameter", diameter),
        ("youngs", youngs),
        ("density", density),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::invalid(name, "must be finite and > 0"));
        }
    }
    if n_modes == 0 || n_modes > CLAMPED_FREE_ROOTS.len() {
        return Err(Error::invalid("n_modes", "must be in 1..=5"));
    }
    let area = PI * diameter * diameter / 4.0;
    let inertia = PI * diameter.powi(4) / 64.0;
    let wave = (youngs * inertia / (density * area)).sqrt() / (length * length);
    Ok(CLAMPED_FREE_ROOTS[..n_modes]
        .iter()
        .map(|b| b * b / (2.0 * PI) * wave)
        .collect())
}
