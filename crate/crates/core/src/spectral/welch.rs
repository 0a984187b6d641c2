use std::f64::consts::PI;

use rustfft::{num_complex::Complex, FftPlanner};

use super::{SpectrumConvention, SpectrumEstimate};
use crate::error::{Error, Result};

pub const DEFAULT_OVERLAP: f64 = 0.5;

/// Welch estimate with a periodic Hann window, one-sided per Hz.
///
/// The series mean is removed first, so the integrated spectrum equals the
/// window-weighted variance of the signal.
pub fn welch_psd(series: &[f64], dt: f64, segment_len: usize, overlap: f64) -> Result<SpectrumEstimate> {
    if !segment_len.is_power_of_two() || segment_len < 2 {
        return Err(Error::invalid("segment_len", "must be a power of two >= 2"));
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::invalid("overlap", "must be in [0, 1)"));
    }
    if !(dt > 0.0) {
        return Err(Error::invalid("dt", "must be > 0"));
    }
    if series.len() < segment_len {
        return Err(Error::SeriesTooShort {
            len: series.len(),
            segment_len,
        });
    }

    let n = segment_len;
    let hop = (n - (n as f64 * overlap).round() as usize).max(1);
    let n_segments = (series.len() - n) / hop + 1;
    let mean = series.iter().sum::<f64>() / series.len() as f64;

    let window: Vec<f64> = (0..n)
        .map(|k| 0.5 * (1.0 - (2.0 * PI * k as f64 / n as f64).cos()))
        .collect();
    let w_sq: f64 = window.iter().map(|w| w * w).sum();
    let w_sum: f64 = window.iter().sum();

    let fft = FftPlanner::new().plan_fft_forward(n);
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let n_bins = n / 2 + 1;
    let mut acc = vec![0.0; n_bins];
    for s in 0..n_segments {
        let seg = &series[s * hop..s * hop + n];
        for ((b, x), w) in buf.iter_mut().zip(seg).zip(&window) {
            *b = Complex::new((x - mean) * w, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
    }

    let fs = 1.0 / dt;
    let scale = 1.0 / (fs * w_sq * n_segments as f64);
    let psd = acc
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let fold = if k == 0 || k == n / 2 { 1.0 } else { 2.0 };
            a * scale * fold
        })
        .collect();
    let freqs = (0..n_bins).map(|k| k as f64 * fs / n as f64).collect();

    Ok(SpectrumEstimate {
        freqs,
        psd,
        convention: SpectrumConvention::OneSidedHz,
        n_segments,
        resolution_bw: fs * w_sq / (w_sum * w_sum),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn tone_power() {
        let dt = 1e-3;
        let amp = 0.7;
        let f0 = 123.4;
        let x: Vec<f64> = (0..65536)
            .map(|k| amp * (2.0 * PI * f0 * k as f64 * dt).sin())
            .collect();
        let s = welch_psd(&x, dt, 4096, 0.5).unwrap();
        let p = s.integrate_between(f0 - 3.0, f0 + 3.0);
        assert!((p / (amp * amp / 2.0) - 1.0).abs() < 0.01, "{p}");
    }

    #[test]
    fn white_noise_level() {
        let dt = 1e-4;
        let sigma = 2.0;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let normal = Normal::new(0.0, sigma).unwrap();
        let seg = 1024;
        let x: Vec<f64> = (0..seg * 201 / 2 + seg).map(|_| normal.sample(&mut rng)).collect();
        let s = welch_psd(&x, dt, seg, 0.5).unwrap();
        assert!(s.n_segments >= 200);
        let expect = sigma * sigma * 2.0 * dt;
        let inner = &s.psd[1..s.psd.len() - 1];
        let mean = inner.iter().sum::<f64>() / inner.len() as f64;
        assert!((mean / expect - 1.0).abs() < 0.05);
        // each bin within a few percent of the flat level on average over 16-bin blocks
        for block in inner.chunks(16) {
            let m = block.iter().sum::<f64>() / block.len() as f64;
            assert!((m / expect - 1.0).abs() < 0.1);
        }
    }

    #[test]
    fn parseval() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let normal = Normal::new(0.0, 1.0).unwrap();
        // AR(1) coloured noise
        let mut y = 0.0;
        let x: Vec<f64> = (0..200_000)
            .map(|_| {
                y = 0.95 * y + normal.sample(&mut rng);
                y
            })
            .collect();
        let s = welch_psd(&x, 1e-3, 2048, 0.5).unwrap();
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / x.len() as f64;
        let sum: f64 = s.psd.iter().sum::<f64>() * (s.freqs[1] - s.freqs[0]);
        assert!((sum / var - 1.0).abs() < 0.01, "{sum} vs {var}");
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            welch_psd(&[0.0; 10], 1.0, 16, 0.5),
            Err(Error::SeriesTooShort { .. })
        ));
        assert!(welch_psd(&[0.0; 100], 1.0, 24, 0.5).is_err());
        assert!(welch_psd(&[0.0; 100], 1.0, 16, 1.0).is_err());
    }
}
