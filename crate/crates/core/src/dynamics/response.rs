use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModalParams, Vec2};

/// Complex driven response `dr_beta[omega]` (m) on a frequency grid (rad/s).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponseSweep {
    pub freqs: Vec<f64>,
    pub response: Vec<Complex64>,
}

impl ResponseSweep {
    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    pub fn amplitudes(&self) -> impl Iterator<Item = f64> + '_ {
        self.response.iter().map(|c| c.norm())
    }
}

/// Mechanical susceptibility `1 / (M (omega_i^2 - omega^2 - i omega gamma))` (m/N).
pub fn susceptibility(params: &ModalParams, mode: usize, omega: f64) -> Complex64 {
    let wi = params.omega(mode);
    let denom = Complex64::new(wi * wi - omega * omega, -omega * params.gamma) * params.mass;
    denom.inv()
}

/// Deterministic driven response projected on `e_beta`:
/// `sum_i chi_i (dF . e_i)(e_i . e_beta) e^{i phase}`.
pub fn driven_response_analytic(
    params: &ModalParams,
    e_beta: Vec2,
    delta_f: Vec2,
    phase: f64,
    freqs: &[f64],
) -> Result<ResponseSweep> {
    if (e_beta.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("e_beta", "must be a unit vector"));
    }
    let rot = Complex64::from_polar(1.0, phase);
    let weights: Vec<f64> = (0..2)
        .map(|i| {
            let e = params.eigen_direction(i);
            delta_f.dot(e) * e.dot(e_beta)
        })
        .collect();
    let response = freqs
        .iter()
        .map(|&w| {
            (0..2)
                .map(|i| susceptibility(params, i, w) * weights[i])
                .sum::<Complex64>()
                * rot
        })
        .collect();
    Ok(ResponseSweep {
        freqs: freqs.to_vec(),
        response,
    })
}

/// Frequency grid (rad/s) covering both modes with `margin` linewidths on
/// either side and `points_per_linewidth` samples per `gamma`.
pub fn doublet_sweep(params: &ModalParams, margin: f64, points_per_linewidth: f64) -> Vec<f64> {
    let lo = params.omega1.min(params.omega2) - margin * params.gamma;
    let hi = params.omega1.max(params.omega2) + margin * params.gamma;
    let step = params.gamma / points_per_linewidth;
    let n = ((hi - lo) / step).ceil() as usize + 1;
    (0..n).map(|k| lo + step * k as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn on_resonance_response() {
        let p = ModalParams::paper_device();
        let df = p.e1() * 2e-15;
        let sweep = driven_response_analytic(&p, p.e1(), df, 0.3, &[p.omega1]).unwrap();
        let r = sweep.response[0];
        let expect = 2e-15 / (p.mass * p.omega1 * p.gamma);
        assert!((r.norm() - expect).abs() / expect < 1e-12);
        let phase = r.arg();
        assert!((phase - (0.3 + FRAC_PI_2)).abs() < 1e-9, "{phase}");
    }

    #[test]
    fn perpendicular_force_gives_no_signal() {
        let p = ModalParams::paper_device();
        let freqs = doublet_sweep(&p, 10.0, 10.0);
        let sweep = driven_response_analytic(&p, p.e1(), p.e2() * 1e-15, 0.0, &freqs).unwrap();
        assert!(sweep.amplitudes().all(|a| a == 0.0));
    }

    #[test]
    fn rejects_non_unit_readout() {
        let p = ModalParams::paper_device();
        assert!(driven_response_analytic(&p, Vec2::new(1.0, 0.1), Vec2::ZERO, 0.0, &[1.0]).is_err());
    }
}
