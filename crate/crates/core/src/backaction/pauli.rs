use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dynamics::GradientMatrix;

/// Components of the force Jacobian `J = [[dFx/dx, dFx/dz], [dFz/dx, dFz/dz]]`
/// on the basis `1, sigma_x, i sigma_y = [[0, 1], [-1, 0]], sigma_z` (N/m).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PauliDecomposition {
    /// Half the divergence.
    pub c0: f64,
    /// Symmetric shear.
    pub cx: f64,
    /// Rotational part, `-curl / 2`.
    pub cy: f64,
    /// Normal shear.
    pub cz: f64,
}

impl PauliDecomposition {
    /// Reassembled Jacobian `J[i][j] = dF_i/dr_j`.
    pub fn jacobian(&self) -> [[f64; 2]; 2] {
        [
            [self.c0 + self.cz, self.cx + self.cy],
            [self.cx - self.cy, self.c0 - self.cz],
        ]
    }

    pub fn to_gradient(&self, power: f64) -> GradientMatrix {
        let j = self.jacobian();
        GradientMatrix {
            d_xfx: j[0][0],
            d_zfx: j[0][1],
            d_xfz: j[1][0],
            d_zfz: j[1][1],
            power,
        }
    }
}

pub fn pauli_decompose(g: &GradientMatrix) -> PauliDecomposition {
    PauliDecomposition {
        c0: 0.5 * (g.d_xfx + g.d_zfz),
        cz: 0.5 * (g.d_xfx - g.d_zfz),
        cx: 0.5 * (g.d_zfx + g.d_xfz),
        cy: 0.5 * (g.d_zfx - g.d_xfz),
    }
}

/// Work done by the linearised force over one turn of the ellipse
/// `(a cos t, b sin t)`; `sense = +1` runs it counterclockwise.
pub fn work_per_cycle(g: &GradientMatrix, a: f64, b: f64, sense: i8) -> f64 {
    f64::from(sense.signum()) * PI * a * b * g.curl()
}
