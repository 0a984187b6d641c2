use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::Vec2;
use crate::error::{Error, Result};

/// A static optical force field `F(r)` defined at a reference power and
/// scaling linearly with the incident power.
pub trait ForceField: Send + Sync {
    /// Force (N) at position `r` (m) for incident power `power` (W).
    fn force(&self, r: Vec2, power: f64) -> Result<Vec2>;

    /// Default central-difference step (m) for gradients of this field.
    fn gradient_step(&self) -> f64;

    fn contains(&self, _r: Vec2) -> bool {
        true
    }
}

impl<F: ForceField + ?Sized> ForceField for &F {
    fn force(&self, r: Vec2, power: f64) -> Result<Vec2> {
        (**self).force(r, power)
    }
    fn gradient_step(&self) -> f64 {
        (**self).gradient_step()
    }
    fn contains(&self, r: Vec2) -> bool {
        (**self).contains(r)
    }
}

impl<F: ForceField + ?Sized> ForceField for Box<F> {
    fn force(&self, r: Vec2, power: f64) -> Result<Vec2> {
        (**self).force(r, power)
    }
    fn gradient_step(&self) -> f64 {
        (**self).gradient_step()
    }
    fn contains(&self, r: Vec2) -> bool {
        (**self).contains(r)
    }
}

/// Scattering force of a focused Gaussian beam propagating along +z.
///
/// The magnitude follows the local intensity and the direction follows the
/// wavefront normal, so the flow converges upstream of the focus and diverges
/// downstream, with opposite vorticity on either side of the axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianBeamField {
    pub wavelength: f64,
    pub waist: f64,
    /// Rayleigh range `pi w0^2 / lambda`, kept consistent by the constructor.
    pub rayleigh: f64,
    /// |F| at the focus (N) at `ref_power`.
    pub peak_force: f64,
    pub ref_power: f64,
}

impl GaussianBeamField {
    pub fn new(wavelength: f64, waist: f64, peak_force: f64, ref_power: f64) -> Result<Self> {
        if !(wavelength > 0.0 && wavelength.is_finite()) {
            return Err(Error::invalid("wavelength", "must be finite and > 0"));
        }
        if !(waist > 0.0 && waist.is_finite()) {
            return Err(Error::invalid("waist", "must be finite and > 0"));
        }
        if !(peak_force >= 0.0 && peak_force.is_finite()) {
            return Err(Error::invalid("peak_force", "must be finite and >= 0"));
        }
        if !(ref_power > 0.0 && ref_power.is_finite()) {
            return Err(Error::invalid("ref_power", "must be finite and > 0"));
        }
        Ok(Self {
            wavelength,
            waist,
            rayleigh: PI * waist * waist / wavelength,
            peak_force,
            ref_power,
        })
    }

    /// 532 nm pump: 70 fN at the waist for 96 uW.
    pub fn green_532() -> Self {
        Self::new(532e-9, 550e-9, 70e-15, 96e-6).expect("valid preset")
    }

    /// 633 nm probe: 14 fN at the waist for 96 uW.
    pub fn red_633() -> Self {
        Self::new(633e-9, 550e-9, 14e-15, 96e-6).expect("valid preset")
    }

    pub fn beam_radius(&self, z: f64) -> f64 {
        self.waist * (1.0 + (z / self.rayleigh).powi(2)).sqrt()
    }

    /// Intensity relative to the focus.
    pub fn relative_intensity(&self, r: Vec2) -> f64 {
        let w = self.beam_radius(r.z);
        (self.waist / w).powi(2) * (-2.0 * r.x * r.x / (w * w)).exp()
    }

    /// Unit normal of the local wavefront.
    pub fn propagation_direction(&self, r: Vec2) -> Vec2 {
        let slope = r.x * r.z / (r.z * r.z + self.rayleigh * self.rayleigh);
        Vec2::new(slope, 1.0) * (1.0 / (1.0 + slope * slope).sqrt())
    }

    pub fn force_at(&self, r: Vec2, power: f64) -> Vec2 {
        let scale = self.peak_force * (power / self.ref_power) * self.relative_intensity(r);
        self.propagation_direction(r) * scale
    }
}

impl ForceField for GaussianBeamField {
    fn force(&self, r: Vec2, power: f64) -> Result<Vec2> {
        Ok(self.force_at(r, power))
    }

    fn gradient_step(&self) -> f64 {
        self.waist / 100.0
    }
}

/// Affine synthetic field `F(r) = F0 + (r - origin) . G`, with
/// `G[i][j] = dF_j/dr_i` in the lab frame, both given at `ref_power`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearField {
    pub offset: Vec2,
    pub gradient: [[f64; 2]; 2],
    pub origin: Vec2,
    pub ref_power: f64,
    /// Characteristic length used as the default gradient step (m).
    pub length_scale: f64,
}

impl LinearField {
    pub fn new(offset: Vec2, gradient: [[f64; 2]; 2], ref_power: f64) -> Self {
        Self {
            offset,
            gradient,
            origin: Vec2::ZERO,
            ref_power,
            length_scale: 1e-6,
        }
    }

    pub fn uniform(force: Vec2, ref_power: f64) -> Self {
        Self::new(force, [[0.0; 2]; 2], ref_power)
    }
}

impl ForceField for LinearField {
    fn force(&self, r: Vec2, power: f64) -> Result<Vec2> {
        let d = r - self.origin;
        let g = &self.gradient;
        let f = Vec2::new(
            self.offset.x + d.x * g[0][0] + d.z * g[1][0],
            self.offset.z + d.x * g[0][1] + d.z * g[1][1],
        );
        Ok(f * (power / self.ref_power))
    }

    fn gradient_step(&self) -> f64 {
        self.length_scale / 100.0
    }
}

/// No optical force at all.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NoField;

impl ForceField for NoField {
    fn force(&self, _r: Vec2, _power: f64) -> Result<Vec2> {
        Ok(Vec2::ZERO)
    }

    fn gradient_step(&self) -> f64 {
        1e-9
    }
}
