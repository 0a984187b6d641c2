use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use super::{Vec2, BOLTZMANN};
use crate::error::{Error, Result};

/// Identity of the fundamental polarisation doublet.
///
/// Both modes share the effective mass and the damping rate. The second
/// eigendirection is the first one rotated by +pi/2.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModalParams {
    /// Effective mass (kg).
    pub mass: f64,
    /// Eigenfrequency of mode 1 (rad/s).
    pub omega1: f64,
    /// Eigenfrequency of mode 2 (rad/s).
    pub omega2: f64,
    /// Damping rate (rad/s), shared by both modes.
    pub gamma: f64,
    /// Orientation of `e1` from the x-axis (rad).
    pub theta1: f64,
}

impl ModalParams {
    pub fn new(mass: f64, omega1: f64, omega2: f64, gamma: f64, theta1: f64) -> Result<Self> {
        let p = Self {
            mass,
            omega1,
            omega2,
            gamma,
            theta1,
        };
        p.validate()?;
        Ok(p)
    }

    /// Build from frequencies in Hz and a quality factor `Q = omega1 / gamma`.
    pub fn from_hz(mass: f64, f1_hz: f64, f2_hz: f64, quality: f64, theta1: f64) -> Result<Self> {
        if !(quality > 0.0) {
            return Err(Error::invalid("quality_factor", "must be > 0"));
        }
        Self::new(mass, TAU * f1_hz, TAU * f2_hz, TAU * f1_hz / quality, theta1)
    }

    /// The measured SiC nanowire: 376 fg, 113 kHz, Q = 2890, 0.5 % doublet
    /// splitting, eigendirections tilted by 20 degrees.
    pub fn paper_device() -> Self {
        Self::from_hz(376e-18, 113.0e3, 113.565e3, 2890.0, 20f64.to_radians()).expect("valid preset")
    }

    /// Paper-scale device with a 60 Hz bare splitting, close enough to
    /// degeneracy for the 532 nm beam to drive it unstable near 10^2 uW.
    pub fn instability_device() -> Self {
        Self::from_hz(376e-18, 113.0e3, 113.06e3, 2890.0, 20f64.to_radians()).expect("valid preset")
    }

    /// Frequency-scaled twin of [`ModalParams::paper_device`]: f1 = 1 kHz,
    /// f2 = 1.005 kHz, same Q, mass rescaled so that the stiffness `M*omega1^2`
    /// is unchanged. Force gradients therefore act on it exactly as on the
    /// real device, but time-domain runs are 113x shorter.
    pub fn scaled_test_device() -> Self {
        Self::paper_device().frequency_scaled(1.0e3)
    }

    /// Copy with `omega1` moved to `f1_hz`, keeping frequency ratios, Q and
    /// the mode-1 stiffness.
    pub fn frequency_scaled(&self, f1_hz: f64) -> Self {
        let factor = TAU * f1_hz / self.omega1;
        Self {
            mass: self.mass / (factor * factor),
            omega1: self.omega1 * factor,
            omega2: self.omega2 * factor,
            gamma: self.gamma * factor,
            theta1: self.theta1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("must be finite and > 0, got {v}")))
            }
        };
        positive("mass", self.mass)?;
        positive("omega1", self.omega1)?;
        positive("omega2", self.omega2)?;
        positive("gamma", self.gamma)?;
        if !self.theta1.is_finite() {
            return Err(Error::invalid("theta1", "must be finite"));
        }
        Ok(())
    }

    pub fn e1(&self) -> Vec2 {
        Vec2::from_angle(self.theta1)
    }

    pub fn e2(&self) -> Vec2 {
        self.e1().perp()
    }

    pub fn eigen_direction(&self, mode: usize) -> Vec2 {
        match mode {
            0 => self.e1(),
            _ => self.e2(),
        }
    }

    pub fn omega(&self, mode: usize) -> f64 {
        match mode {
            0 => self.omega1,
            _ => self.omega2,
        }
    }

    /// Lab-frame vector to `[e1 component, e2 component]`.
    pub fn to_modal(&self, v: Vec2) -> [f64; 2] {
        [v.dot(self.e1()), v.dot(self.e2())]
    }

    pub fn to_lab(&self, q: [f64; 2]) -> Vec2 {
        self.e1() * q[0] + self.e2() * q[1]
    }

    pub fn omega_bar(&self) -> f64 {
        0.5 * (self.omega1 + self.omega2)
    }

    pub fn quality_factor(&self) -> f64 {
        self.omega1 / self.gamma
    }

    /// Spring constant `M * omega_i^2` (N/m).
    pub fn stiffness(&self, mode: usize) -> f64 {
        self.mass * self.omega(mode).powi(2)
    }

    /// Thermal positional variance `k_B T / (M omega_i^2)` (m^2).
    pub fn equipartition_variance(&self, mode: usize, env: &Environment) -> f64 {
        BOLTZMANN * env.temperature / self.stiffness(mode)
    }

    /// Bare splitting `omega2 - omega1` expressed in Hz.
    pub fn bare_splitting_hz(&self) -> f64 {
        (self.omega2 - self.omega1) / (2.0 * PI)
    }
}

/// Thermal bath and readout noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    /// Bath temperature (K).
    pub temperature: f64,
    /// Flat displacement-equivalent readout noise, one-sided (m^2/Hz).
    pub detection_floor: f64,
}

impl Environment {
    pub fn new(temperature: f64, detection_floor: f64) -> Result<Self> {
        let env = Self {
            temperature,
            detection_floor,
        };
        env.validate()?;
        Ok(env)
    }

    pub fn room() -> Self {
        Self {
            temperature: 300.0,
            detection_floor: 0.0,
        }
    }

    /// `T = 0`, no readout noise: deterministic dynamics.
    pub fn zero() -> Self {
        Self {
            temperature: 0.0,
            detection_floor: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        // T = 0 is accepted as the deterministic limit.
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(Error::invalid("temperature", "must be finite and >= 0"));
        }
        if !(self.detection_floor >= 0.0 && self.detection_floor.is_finite()) {
            return Err(Error::invalid("detection_floor", "must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn thermal_energy(&self) -> f64 {
        BOLTZMANN * self.temperature
    }
}

/// Double-sided Langevin force PSD `2 M Gamma k_B T` (N^2 s), angular-frequency
/// convention: variance = integral of S dOmega / 2pi.
pub fn thermal_force_psd(params: &ModalParams, env: &Environment) -> f64 {
    2.0 * params.mass * params.gamma * env.thermal_energy()
}

/// One-sided per-Hz equivalent of [`thermal_force_psd`], `4 M Gamma k_B T` (N^2/Hz).
pub fn thermal_force_psd_one_sided(params: &ModalParams, env: &Environment) -> f64 {
    2.0 * thermal_force_psd(params, env)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thermal_force_limit_matches_measured_value() {
        let p = ModalParams::paper_device();
        let env = Environment::room();
        let amplitude = thermal_force_psd_one_sided(&p, &env).sqrt();
        assert!((amplitude - 38e-18).abs() / 38e-18 < 0.10, "{amplitude:e}");
        assert!((amplitude - 3.9e-17).abs() < 0.05e-17);
    }

    #[test]
    fn zero_temperature_has_no_drive() {
        let p = ModalParams::paper_device();
        assert_eq!(thermal_force_psd(&p, &Environment::zero()), 0.0);
    }

    #[test]
    fn force_psd_linear_in_gamma() {
        let p = ModalParams::paper_device();
        let mut q = p;
        q.gamma *= 2.0;
        let env = Environment::room();
        assert_eq!(thermal_force_psd(&q, &env), 2.0 * thermal_force_psd(&p, &env));
    }

    #[test]
    fn equipartition_rms_of_paper_device() {
        let p = ModalParams::paper_device();
        let rms = p.equipartition_variance(0, &Environment::room()).sqrt();
        assert!((rms - 4.7e-9).abs() < 0.05e-9, "{rms:e}");
    }

    #[test]
    fn scaled_twin_keeps_stiffness_and_q() {
        let p = ModalParams::paper_device();
        let s = ModalParams::scaled_test_device();
        assert!((s.stiffness(0) / p.stiffness(0) - 1.0).abs() < 1e-12);
        assert!((s.quality_factor() / p.quality_factor() - 1.0).abs() < 1e-12);
        assert!((s.omega2 / TAU - 1005.0).abs() < 1e-9);
    }

    #[test]
    fn eigendirections_are_perpendicular() {
        let p = ModalParams::paper_device();
        assert!(p.e1().dot(p.e2()).abs() < 1e-15);
        let v = Vec2::new(0.3, -1.7);
        let back = p.to_lab(p.to_modal(v));
        assert!((back - v).norm() < 1e-15);
    }

    #[test]
    fn rejects_nonpositive_inputs() {
        assert!(ModalParams::new(0.0, 1.0, 1.0, 1.0, 0.0).is_err());
        assert!(ModalParams::new(1.0, 1.0, -1.0, 1.0, 0.0).is_err());
        assert!(Environment::new(-1.0, 0.0).is_err());
        assert!(Environment::new(300.0, -1e-30).is_err());
    }
}
