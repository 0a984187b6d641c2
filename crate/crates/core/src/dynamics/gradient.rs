use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ForceField, ModalParams, Vec2};

/// Force-gradient tensor `dF_j/dr_i` at a point, lab frame, N/m.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GradientMatrix {
    pub d_xfx: f64,
    pub d_xfz: f64,
    pub d_zfx: f64,
    pub d_zfz: f64,
    /// Optical power (W) the entries were evaluated at.
    pub power: f64,
}

impl GradientMatrix {
    /// From `m[i][j] = dF_j/dr_i`.
    pub fn from_array(m: [[f64; 2]; 2], power: f64) -> Self {
        Self {
            d_xfx: m[0][0],
            d_xfz: m[0][1],
            d_zfx: m[1][0],
            d_zfz: m[1][1],
            power,
        }
    }

    pub fn as_array(&self) -> [[f64; 2]; 2] {
        [[self.d_xfx, self.d_xfz], [self.d_zfx, self.d_zfz]]
    }

    /// `dFz/dx - dFx/dz`; zero for a conservative field.
    pub fn curl(&self) -> f64 {
        self.d_xfz - self.d_zfx
    }

    pub fn divergence(&self) -> f64 {
        self.d_xfx + self.d_zfz
    }

    pub fn symmetric_part(&self) -> Self {
        let off = 0.5 * (self.d_xfz + self.d_zfx);
        Self {
            d_xfz: off,
            d_zfx: off,
            ..*self
        }
    }

    pub fn antisymmetric_part(&self) -> Self {
        let half = 0.5 * (self.d_xfz - self.d_zfx);
        Self {
            d_xfx: 0.0,
            d_xfz: half,
            d_zfx: -half,
            d_zfz: 0.0,
            power: self.power,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            d_xfx: self.d_xfx * factor,
            d_xfz: self.d_xfz * factor,
            d_zfx: self.d_zfx * factor,
            d_zfz: self.d_zfz * factor,
            power: self.power * factor,
        }
    }

    /// Rescale to `power` using linearity in the optical power. A matrix
    /// recorded at zero power carries no scale and is returned unchanged.
    pub fn at_power(&self, power: f64) -> Self {
        if self.power > 0.0 {
            let mut g = self.scaled(power / self.power);
            g.power = power;
            g
        } else {
            *self
        }
    }

    /// Entries `g_ij = e_i . G . e_j` in the eigenmode frame (N/m, not divided by M).
    pub fn in_modal_frame(&self, params: &ModalParams) -> [[f64; 2]; 2] {
        let e = [params.e1(), params.e2()];
        let m = self.as_array();
        let mut out = [[0.0; 2]; 2];
        for (i, ei) in e.iter().enumerate() {
            for (j, ej) in e.iter().enumerate() {
                let a = [ei.x, ei.z];
                let b = [ej.x, ej.z];
                out[i][j] = (0..2)
                    .flat_map(|p| (0..2).map(move |q| (p, q)))
                    .map(|(p, q)| a[p] * m[p][q] * b[q])
                    .sum();
            }
        }
        out
    }

    /// Inverse of [`in_modal_frame`](Self::in_modal_frame).
    pub fn from_modal_frame(params: &ModalParams, m: [[f64; 2]; 2], power: f64) -> Self {
        let e = [params.e1(), params.e2()];
        let mut out = [[0.0; 2]; 2];
        for (a, row) in out.iter_mut().enumerate() {
            for (b, v) in row.iter_mut().enumerate() {
                for (i, ei) in e.iter().enumerate() {
                    for (j, ej) in e.iter().enumerate() {
                        let ea = if a == 0 { ei.x } else { ei.z };
                        let eb = if b == 0 { ej.x } else { ej.z };
                        *v += ea * m[i][j] * eb;
                    }
                }
            }
        }
        Self::from_array(out, power)
    }

    /// Force change (N) for a displacement `dr`, `(dr . grad) F`.
    pub fn apply(&self, dr: Vec2) -> Vec2 {
        Vec2::new(
            dr.x * self.d_xfx + dr.z * self.d_zfx,
            dr.x * self.d_xfz + dr.z * self.d_zfz,
        )
    }

    pub fn max_abs(&self) -> f64 {
        [self.d_xfx, self.d_xfz, self.d_zfx, self.d_zfz]
            .iter()
            .fold(0.0f64, |a, v| a.max(v.abs()))
    }
}

/// Central-difference gradient of `field` at `r0` with step `h` (m).
pub fn linearize_field<F: ForceField + ?Sized>(field: &F, r0: Vec2, power: f64, h: f64) -> Result<GradientMatrix> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid("h", "step must be finite and > 0"));
    }
    let dx = Vec2::new(h, 0.0);
    let dz = Vec2::new(0.0, h);
    for p in [r0 + dx, r0 - dx, r0 + dz, r0 - dz] {
        if !field.contains(p) {
            return Err(Error::OutOfRange { x: p.x, z: p.z });
        }
    }
    let ddx = (field.force(r0 + dx, power)? - field.force(r0 - dx, power)?) * (0.5 / h);
    let ddz = (field.force(r0 + dz, power)? - field.force(r0 - dz, power)?) * (0.5 / h);
    Ok(GradientMatrix {
        d_xfx: ddx.x,
        d_xfz: ddx.z,
        d_zfx: ddz.x,
        d_zfz: ddz.z,
        power,
    })
}

/// [`linearize_field`] with the field's default step.
pub fn linearize<F: ForceField + ?Sized>(field: &F, r0: Vec2, power: f64) -> Result<GradientMatrix> {
    linearize_field(field, r0, power, field.gradient_step())
}

const STATIC_TOL: f64 = 1e-15;
const STATIC_MAX_ITER: usize = 100;

/// Static deflection `dr` solving `dr = C F(r0 + dr)` with the modal
/// compliance `C = diag(1/(M w1^2), 1/(M w2^2))`.
///
/// Plain fixed-point iteration, with the relaxation halved whenever a step
/// grows; non-convergence signals a multistable or statically unstable point.
pub fn static_deflection<F: ForceField + ?Sized>(
    params: &ModalParams,
    field: &F,
    r0: Vec2,
    power: f64,
) -> Result<Vec2> {
    let compliance = [1.0 / params.stiffness(0), 1.0 / params.stiffness(1)];
    let map = |dr: Vec2| -> Result<Vec2> {
        let f = params.to_modal(field.force(r0 + dr, power)?);
        Ok(params.to_lab([f[0] * compliance[0], f[1] * compliance[1]]))
    };
    let mut dr = Vec2::ZERO;
    let mut relax = 1.0;
    let mut last_step = f64::INFINITY;
    for _ in 0..STATIC_MAX_ITER {
        let target = map(dr)?;
        let step = (target - dr).norm();
        if step <= STATIC_TOL {
            return Ok(target);
        }
        if step > last_step {
            relax *= 0.5;
        }
        last_step = step;
        dr += (target - dr) * relax;
    }
    Err(Error::StaticNonConvergence {
        last: dr,
        step: last_step,
        iterations: STATIC_MAX_ITER,
    })
}
