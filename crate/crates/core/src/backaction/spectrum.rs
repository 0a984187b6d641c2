use std::f64::consts::TAU;

use nalgebra::Matrix2;
use num_complex::Complex64;

use super::modes::EffectiveStiffness;
use crate::error::{Error, Result};
use crate::model::{thermal_force_psd, Environment, ModalParams, Vec2};
use crate::spectral::{SpectrumConvention, SpectrumEstimate};

/// Coupled susceptibility `[M (K - omega^2 - i omega gamma)]^-1` in the modal frame (m/N).
pub fn coupled_susceptibility(params: &ModalParams, k: &EffectiveStiffness, omega: f64) -> Option<Matrix2<Complex64>> {
    let diag = Complex64::new(-omega * omega, -omega * params.gamma);
    let m = Matrix2::new(
        Complex64::from(k.k[0][0]) + diag,
        Complex64::from(k.k[0][1]),
        Complex64::from(k.k[1][0]),
        Complex64::from(k.k[1][1]) + diag,
    ) * Complex64::from(params.mass);
    m.try_inverse()
}

/// Brownian spectrum of `dr . e_beta` for the coupled system, one-sided per
/// Hz, plus the readout floor. Reduces to `analytic_projected_psd` when `K`
/// is diagonal.
pub fn coupled_projected_psd(
    params: &ModalParams,
    k: &EffectiveStiffness,
    e_beta: Vec2,
    freqs_hz: &[f64],
    env: &Environment,
) -> Result<SpectrumEstimate> {
    if (e_beta.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("e_beta", "must be a unit vector"));
    }
    if freqs_hz.windows(2).any(|w| !(w[1] > w[0])) || freqs_hz.first().is_some_and(|f| *f < 0.0) {
        return Err(Error::invalid("freqs", "must be >= 0 and strictly increasing"));
    }
    let u = params.to_modal(e_beta);
    let s_f = thermal_force_psd(params, env);
    let psd = freqs_hz
        .iter()
        .map(|&f| {
            let chi = coupled_susceptibility(params, k, TAU * f)
                .ok_or(Error::invalid("K", "singular at a sample frequency"))?;
            let proj: f64 = (0..2)
                .map(|j| (chi[(0, j)] * u[0] + chi[(1, j)] * u[1]).norm_sqr())
                .sum();
            Ok(2.0 * s_f * proj + env.detection_floor)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(SpectrumEstimate {
        resolution_bw: if freqs_hz.len() > 1 {
            freqs_hz[1] - freqs_hz[0]
        } else {
            0.0
        },
        freqs: freqs_hz.to_vec(),
        psd,
        convention: SpectrumConvention::OneSidedHz,
        n_segments: 0,
    })
}
