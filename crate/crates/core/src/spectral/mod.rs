//! Spectral estimation, analytic spectra, doublet fitting and thermodynamic
//! calibration.
//!
//! Internal formulas use the double-sided angular convention (variance equals
//! the integral of `S(omega) d omega / 2pi`). Every [`SpectrumEstimate`] is
//! one-sided per Hz: `S_hz(f) = 2 S(2 pi f)`.

mod analytic;
mod calibration;
mod doublet;
mod welch;

use serde::{Deserialize, Serialize};

pub use analytic::{analytic_projected_psd, projected_psd_angular, with_periodogram_noise};
pub use calibration::{equipartition_mass, orientation_fit, OrientationFit};
pub use doublet::{doublet_model, fit_doublet, DoubletFit};
pub use welch::{welch_psd, DEFAULT_OVERLAP};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpectrumConvention {
    /// One-sided, per Hz, argument in Hz.
    OneSidedHz,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEstimate {
    /// Hz, strictly increasing, starting at >= 0.
    pub freqs: Vec<f64>,
    /// m^2/Hz
    pub psd: Vec<f64>,
    pub convention: SpectrumConvention,
    /// Averaged periodograms; 0 for an exact (analytic) spectrum.
    pub n_segments: usize,
    /// Equivalent noise bandwidth of one bin (Hz).
    pub resolution_bw: f64,
}

impl SpectrumEstimate {
    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    /// `sum psd * df`, with `df` the local bin spacing.
    pub fn integrated_power(&self) -> f64 {
        self.integrate_between(f64::NEG_INFINITY, f64::INFINITY)
    }

    /// `sum psd * df` over bins with `lo <= f <= hi`.
    pub fn integrate_between(&self, lo: f64, hi: f64) -> f64 {
        let n = self.freqs.len();
        if n < 2 {
            return 0.0;
        }
        (0..n)
            .filter(|&k| self.freqs[k] >= lo && self.freqs[k] <= hi)
            .map(|k| {
                let left = if k > 0 {
                    self.freqs[k] - self.freqs[k - 1]
                } else {
                    self.freqs[1] - self.freqs[0]
                };
                let right = if k + 1 < n {
                    self.freqs[k + 1] - self.freqs[k]
                } else {
                    left
                };
                let width = if k == 0 {
                    right
                } else if k + 1 == n {
                    left
                } else {
                    0.5 * (left + right)
                };
                self.psd[k] * width
            })
            .sum()
    }

    /// Indices of bins with `lo <= f <= hi`.
    pub fn band(&self, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let a = self.freqs.partition_point(|&f| f < lo);
        let b = self.freqs.partition_point(|&f| f <= hi);
        a..b
    }
}
