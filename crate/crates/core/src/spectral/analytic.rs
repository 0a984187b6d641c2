use std::f64::consts::TAU;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use super::{SpectrumConvention, SpectrumEstimate};
use crate::dynamics::susceptibility;
use crate::error::{Error, Result};
use crate::model::{thermal_force_psd, Environment, ModalParams, Vec2};

/// Double-sided angular thermal spectrum of `dr . e_beta` (m^2 s), without
/// readout noise: `sum_i (e_i . e_beta)^2 |chi_i|^2 S_F`.
pub fn projected_psd_angular(params: &ModalParams, e_beta: Vec2, omega: f64, env: &Environment) -> f64 {
    let s_f = thermal_force_psd(params, env);
    (0..2)
        .map(|i| {
            let w = params.eigen_direction(i).dot(e_beta);
            w * w * susceptibility(params, i, omega).norm_sqr() * s_f
        })
        .sum()
}

/// Exact projected Brownian spectrum plus the flat readout floor, one-sided
/// per Hz, on `freqs_hz`.
pub fn analytic_projected_psd(
    params: &ModalParams,
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
    let psd = freqs_hz
        .iter()
        .map(|&f| 2.0 * projected_psd_angular(params, e_beta, TAU * f, env) + env.detection_floor)
        .collect();
    let resolution_bw = if freqs_hz.len() > 1 {
        freqs_hz[1] - freqs_hz[0]
    } else {
        0.0
    };
    Ok(SpectrumEstimate {
        freqs: freqs_hz.to_vec(),
        psd,
        convention: SpectrumConvention::OneSidedHz,
        n_segments: 0,
        resolution_bw,
    })
}

/// Multiply every bin by an independent `Gamma(n, 1/n)` variate: the
/// distribution of an `n`-segment averaged periodogram of Gaussian noise
/// around its expectation.
pub fn with_periodogram_noise(spec: &SpectrumEstimate, n_segments: usize, seed: u64) -> Result<SpectrumEstimate> {
    if n_segments == 0 {
        return Err(Error::invalid("n_segments", "must be >= 1"));
    }
    let shape = n_segments as f64;
    let gamma = Gamma::new(shape, 1.0 / shape).map_err(|e| Error::invalid("n_segments", e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(SpectrumEstimate {
        psd: spec.psd.iter().map(|p| p * gamma.sample(&mut rng)).collect(),
        n_segments,
        ..spec.clone()
    })
}
