use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::GradientMatrix;
use crate::model::{ModalParams, Vec2};

/// Effective stiffness per unit mass in the `e1/e2` frame (rad^2/s^2):
/// `[[w1^2 - g11, -g21], [-g12, w2^2 - g22]]` with `g_ij = e_i . G . e_j / M`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveStiffness {
    pub k: [[f64; 2]; 2],
}

impl EffectiveStiffness {
    pub fn trace(&self) -> f64 {
        self.k[0][0] + self.k[1][1]
    }

    pub fn determinant(&self) -> f64 {
        self.k[0][0] * self.k[1][1] - self.k[0][1] * self.k[1][0]
    }

    /// Discriminant of the characteristic polynomial, `tr^2 - 4 det`.
    pub fn discriminant(&self) -> f64 {
        let d = self.k[0][0] - self.k[1][1];
        d * d + 4.0 * self.k[0][1] * self.k[1][0]
    }

    pub fn is_symmetric(&self) -> bool {
        self.k[0][1] == self.k[1][0]
    }
}

/// Assemble the stiffness from a lab-frame gradient, rescaled to `power`.
pub fn effective_stiffness(params: &ModalParams, g: &GradientMatrix, power: f64) -> EffectiveStiffness {
    let m = g.at_power(power).in_modal_frame(params);
    let inv_m = 1.0 / params.mass;
    let (w1, w2) = (params.omega1, params.omega2);
    EffectiveStiffness {
        k: [
            [w1 * w1 - m[0][0] * inv_m, -m[1][0] * inv_m],
            [-m[0][1] * inv_m, w2 * w2 - m[1][1] * inv_m],
        ],
    }
}

/// Approximate complex splitting `sqrt((K11 - K22)^2 + 4 K12 K21) / (2 w_bar)`,
/// real for a non-negative radicand and purely imaginary otherwise.
pub fn splitting_approx(params: &ModalParams, k: &EffectiveStiffness) -> Complex64 {
    let disc = k.discriminant();
    let scale = 1.0 / (2.0 * params.omega_bar());
    if disc >= 0.0 {
        Complex64::new(disc.sqrt() * scale, 0.0)
    } else {
        Complex64::new(0.0, (-disc).sqrt() * scale)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Instability {
    Stable,
    /// Oscillatory growth: complex-conjugate stiffness eigenvalues.
    Flutter,
    /// Non-oscillatory growth: a negative real stiffness eigenvalue.
    Divergence,
}

/// Polarisation ellipse of one eigenmode, lab frame, unit-norm eigenvector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeEllipse {
    pub major: f64,
    pub minor: f64,
    /// Major-axis angle from x, in `(-pi/2, pi/2]`.
    pub orientation: f64,
    /// +1 counterclockwise in the (x, z) plane, -1 clockwise, 0 linear.
    pub handedness: i8,
}

/// Minor axes below this (relative to the unit eigenvector) count as linear.
pub const LINEAR_TOLERANCE: f64 = 1e-9;

impl ModeEllipse {
    pub fn from_eigenvector(vx: Complex64, vz: Complex64) -> Self {
        let n = (vx.norm_sqr() + vz.norm_sqr()).sqrt();
        let (vx, vz) = (vx / n, vz / n);
        let a = Vec2::new(vx.re, vz.re);
        let b = Vec2::new(vx.im, vz.im);
        // axes are the singular values of [a b]
        let sxx = a.x * a.x + b.x * b.x;
        let szz = a.z * a.z + b.z * b.z;
        let sxz = a.x * a.z + b.x * b.z;
        let half_tr = 0.5 * (sxx + szz);
        let r = (0.25 * (sxx - szz).powi(2) + sxz * sxz).sqrt();
        let major = (half_tr + r).sqrt();
        let minor = (a.cross(b).abs() / major).min(major);
        let mut orientation = 0.5 * (2.0 * sxz).atan2(sxx - szz);
        if orientation <= -std::f64::consts::FRAC_PI_2 {
            orientation += std::f64::consts::PI;
        }
        let handedness = if minor <= LINEAR_TOLERANCE {
            0
        } else {
            (vx * vz.conj()).im.signum() as i8
        };
        Self {
            major,
            minor,
            orientation,
            handedness,
        }
    }
}

/// Exact eigenmodes of the damped linearised dynamics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// Least-damped root of each mode `(plus, minus)`; the partners are the
    /// complex conjugates.
    pub lambda: [Complex64; 2],
    pub omega_plus: f64,
    pub omega_minus: f64,
    /// `-2 Re lambda` (rad/s).
    pub gamma_plus: f64,
    pub gamma_minus: f64,
    /// Approximate splitting for comparison (rad/s).
    pub splitting: Complex64,
    pub unstable: bool,
    pub kind: Instability,
    /// `(plus, minus)`.
    pub mode_ellipses: [ModeEllipse; 2],
}

struct Mode {
    lambda: Complex64,
    omega: f64,
    gamma: f64,
    vector: [Complex64; 2],
}

fn eigenvector(k: &EffectiveStiffness, mu: Complex64, fallback: usize) -> [Complex64; 2] {
    let a = [Complex64::new(k.k[0][1], 0.0), mu - k.k[0][0]];
    let b = [mu - k.k[1][1], Complex64::new(k.k[1][0], 0.0)];
    let na = a[0].norm_sqr() + a[1].norm_sqr();
    let nb = b[0].norm_sqr() + b[1].norm_sqr();
    let scale = k.trace().abs().max(f64::MIN_POSITIVE);
    if na.max(nb) <= (1e-14 * scale).powi(2) {
        // K proportional to the identity: any basis works
        let mut v = [Complex64::new(0.0, 0.0); 2];
        v[fallback] = Complex64::new(1.0, 0.0);
        return v;
    }
    if na >= nb {
        a
    } else {
        b
    }
}

/// Solve `lambda^2 + gamma lambda + mu = 0` for each eigenvalue `mu` of `K`.
///
/// Modes are labelled `plus` for the higher effective frequency; when the
/// frequencies coincide (past the exceptional point) `plus` is the more
/// damped one, so `gamma_minus < 0` is the instability criterion.
pub fn exact_modes(params: &ModalParams, k: &EffectiveStiffness) -> StabilityReport {
    let gamma = params.gamma;
    let q = 0.25 * gamma * gamma;
    let disc = k.discriminant();
    let half_tr = 0.5 * k.trace();
    let mut modes: Vec<Mode> = Vec::with_capacity(2);
    if disc >= 0.0 {
        let root = 0.5 * disc.sqrt();
        for (idx, mu) in [half_tr + root, half_tr - root].into_iter().enumerate() {
            let nu = mu - q;
            let (lambda, omega, g_eff) = if nu > 0.0 {
                let w = nu.sqrt();
                (Complex64::new(-0.5 * gamma, w), w, gamma)
            } else {
                let s = (-nu).sqrt();
                (Complex64::new(-0.5 * gamma + s, 0.0), 0.0, gamma - 2.0 * s)
            };
            // larger mu belongs to the stiffer bare mode when uncoupled
            let fallback = if params.omega1 >= params.omega2 { idx } else { 1 - idx };
            modes.push(Mode {
                lambda,
                omega,
                gamma: g_eff,
                vector: eigenvector(k, Complex64::new(mu, 0.0), fallback),
            });
        }
    } else {
        let mu = Complex64::new(half_tr, 0.5 * (-disc).sqrt());
        for mu in [mu, mu.conj()] {
            let w = (mu - q).sqrt();
            modes.push(Mode {
                lambda: Complex64::new(-0.5 * gamma, 0.0) + Complex64::i() * w,
                omega: w.re,
                gamma: gamma + 2.0 * w.im,
                vector: eigenvector(k, mu, 0),
            });
        }
    }
    modes.sort_by(|a, b| b.omega.total_cmp(&a.omega).then(b.gamma.total_cmp(&a.gamma)));

    let ellipse = |m: &Mode| {
        let e1 = params.e1();
        let e2 = params.e2();
        let vx = m.vector[0] * e1.x + m.vector[1] * e2.x;
        let vz = m.vector[0] * e1.z + m.vector[1] * e2.z;
        ModeEllipse::from_eigenvector(vx, vz)
    };
    let unstable = modes[1].gamma < 0.0;
    let kind = match (unstable, disc < 0.0) {
        (false, _) => Instability::Stable,
        (true, true) => Instability::Flutter,
        (true, false) => Instability::Divergence,
    };
    StabilityReport {
        lambda: [modes[0].lambda, modes[1].lambda],
        omega_plus: modes[0].omega,
        omega_minus: modes[1].omega,
        gamma_plus: modes[0].gamma,
        gamma_minus: modes[1].gamma,
        splitting: splitting_approx(params, k),
        unstable,
        kind,
        mode_ellipses: [ellipse(&modes[0]), ellipse(&modes[1])],
    }
}

/// Modes at `power` for a gradient recorded at any reference power.
pub fn modes_at_power(params: &ModalParams, g: &GradientMatrix, power: f64) -> StabilityReport {
    exact_modes(params, &effective_stiffness(params, g, power))
}
