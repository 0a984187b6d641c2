use std::f64::consts::TAU;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::SpectrumEstimate;
use crate::error::{Error, Result};
use crate::lm::{minimize, LmProblem};
use crate::model::{Environment, BOLTZMANN};

const FIT_TOL: f64 = 1e-8;
const FIT_MAX_ITER: usize = 500;
/// Half-width of the fit window in linewidths.
const WINDOW_LINEWIDTHS: f64 = 20.0;

/// Two-Lorentzian description of a polarisation doublet.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoubletFit {
    /// rad/s, `omega_plus >= omega_minus`.
    pub omega_plus: f64,
    pub omega_minus: f64,
    /// rad/s
    pub gamma_plus: f64,
    pub gamma_minus: f64,
    /// Integrated peak powers (m^2).
    pub area_plus: f64,
    pub area_minus: f64,
    /// m^2/Hz
    pub floor: f64,
    /// Mean squared log-residual per degree of freedom.
    pub residual: f64,
    /// Both peaks within one resolution bandwidth.
    pub merged: bool,
    /// Mode temperatures `M omega^2 area / k_B` (K).
    pub temperature_plus: f64,
    pub temperature_minus: f64,
    pub iterations: usize,
}

impl DoubletFit {
    pub fn splitting(&self) -> f64 {
        self.omega_plus - self.omega_minus
    }
}

/// `sum a / ((W^2 - w^2)^2 + w^2 G^2) + floor` at `omega` (rad/s), per Hz.
pub fn doublet_model(params: &[f64; 7], omega: f64) -> f64 {
    let [w1, w2, lg1, lg2, la1, la2, floor] = *params;
    lorentz(w1, lg1.exp(), la1.exp(), omega) + lorentz(w2, lg2.exp(), la2.exp(), omega) + floor
}

fn lorentz(w0: f64, g: f64, a: f64, w: f64) -> f64 {
    let d = w0 * w0 - w * w;
    a / (d * d + w * w * g * g)
}

struct Guess {
    omegas: [f64; 2],
    gamma: f64,
    floor: f64,
    merged_init: bool,
}

fn estimate_floor(psd: &[f64], env: &Environment) -> f64 {
    if env.detection_floor > 0.0 {
        return env.detection_floor;
    }
    let mut sorted: Vec<f64> = psd.iter().copied().filter(|v| *v > 0.0).collect();
    sorted.sort_by(f64::total_cmp);
    sorted.get(sorted.len() / 10).copied().unwrap_or(0.0)
}

/// Half width at half maximum (rad/s) of the peak at `idx` above `floor`.
fn half_width(omega: &[f64], psd: &[f64], idx: usize, floor: f64) -> f64 {
    let half = floor + 0.5 * (psd[idx] - floor);
    let left = (0..idx).rev().find(|&k| psd[k] < half).unwrap_or(0);
    let right = (idx + 1..psd.len()).find(|&k| psd[k] < half).unwrap_or(psd.len() - 1);
    let step = omega[1.min(omega.len() - 1)] - omega[0];
    (0.5 * (omega[right] - omega[left])).max(step)
}

fn initial_guess(omega: &[f64], psd: &[f64], floor: f64, resolution: f64) -> Result<Guess> {
    let threshold = 3.0 * floor;
    let (i1, &peak) = psd
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .ok_or(Error::NoResonance { threshold })?;
    if !(peak > threshold) || peak <= 0.0 {
        return Err(Error::NoResonance { threshold });
    }
    let hwhm = half_width(omega, psd, i1, floor);

    // second resonance: the highest point clear of the main peak that
    // dominates its neighbourhood and is separated from the main peak by a dip
    let mut second: Option<usize> = None;
    for k in 0..psd.len() {
        if (omega[k] - omega[i1]).abs() <= 2.0 * hwhm || psd[k] <= threshold {
            continue;
        }
        let lo = omega[k] - hwhm;
        let hi = omega[k] + hwhm;
        let local_max = (0..psd.len())
            .filter(|&j| omega[j] >= lo && omega[j] <= hi)
            .all(|j| psd[j] <= psd[k]);
        if !local_max {
            continue;
        }
        let (a, b) = if k < i1 { (k, i1) } else { (i1, k) };
        let dip = psd[a..=b].iter().copied().fold(f64::INFINITY, f64::min);
        if dip > 0.8 * psd[k] {
            continue;
        }
        if second.is_none_or(|s| psd[k] > psd[s]) {
            second = Some(k);
        }
    }
    let gamma = 2.0 * hwhm;
    Ok(match second {
        Some(i2) => Guess {
            omegas: [omega[i1].max(omega[i2]), omega[i1].min(omega[i2])],
            gamma,
            floor,
            merged_init: false,
        },
        None => Guess {
            omegas: [omega[i1] + resolution, omega[i1] - resolution],
            gamma,
            floor,
            merged_init: true,
        },
    })
}

/// Least-squares fit of two Lorentzians plus a flat floor.
///
/// The fit minimises log-residuals, so every decade of the spectrum weighs
/// equally and the multiplicative periodogram noise does not bias the line
/// centres or widths. The window is restricted to +-20 linewidths around the
/// doublet. `mass` turns the fitted areas into mode temperatures; a nonzero
/// `env.detection_floor` is used as the floor prior.
pub fn fit_doublet(spec: &SpectrumEstimate, mass: f64, env: &Environment) -> Result<DoubletFit> {
    if spec.len() < 8 {
        return Err(Error::invalid("spectrum", "needs at least 8 bins"));
    }
    let omega_all: Vec<f64> = spec.freqs.iter().map(|f| TAU * f).collect();
    let floor0 = estimate_floor(&spec.psd, env);
    let grid_step = omega_all[1] - omega_all[0];
    let resolution = if spec.resolution_bw > 0.0 {
        TAU * spec.resolution_bw
    } else {
        grid_step
    };
    let guess = initial_guess(&omega_all, &spec.psd, floor0, resolution)?;

    let lo = guess.omegas[1] - WINDOW_LINEWIDTHS * guess.gamma;
    let hi = guess.omegas[0] + WINDOW_LINEWIDTHS * guess.gamma;
    let (omega, data): (Vec<f64>, Vec<f64>) = omega_all
        .iter()
        .zip(&spec.psd)
        .filter(|(w, p)| **w >= lo && **w <= hi && **p > 0.0)
        .map(|(w, p)| (*w, *p))
        .unzip();
    if omega.len() < 8 {
        return Err(Error::invalid(
            "spectrum",
            "fewer than 8 usable bins around the resonance",
        ));
    }
    let log_data: Vec<f64> = data.iter().map(|v| v.ln()).collect();

    // amplitude guesses from the peak heights: a = S_peak * w^2 * G^2
    let height = |w0: f64| {
        let k = omega.partition_point(|&w| w < w0).min(omega.len() - 1);
        (data[k] - guess.floor).max(data[k] * 0.1)
    };
    let amp = |w0: f64| {
        let h = if guess.merged_init {
            0.5 * height(w0)
        } else {
            height(w0)
        };
        (h * w0 * w0 * guess.gamma * guess.gamma).ln()
    };
    let x0 = [
        guess.omegas[0],
        guess.omegas[1],
        guess.gamma.ln(),
        guess.gamma.ln(),
        amp(guess.omegas[0]),
        amp(guess.omegas[1]),
        guess.floor,
    ];
    let peak = data.iter().copied().fold(0.0, f64::max);
    let omega_scale = guess.omegas[0];

    let eval = |p: &[f64]| {
        let mut r = Vec::with_capacity(omega.len());
        let mut j = DMatrix::zeros(omega.len(), 7);
        for (k, &w) in omega.iter().enumerate() {
            let mut total = p[6];
            for m in 0..2 {
                let (w0, g, a) = (p[m], p[2 + m].exp(), p[4 + m].exp());
                let d = w0 * w0 - w * w;
                let den = d * d + w * w * g * g;
                let l = a / den;
                total += l;
                j[(k, m)] = -a * 4.0 * d * w0 / (den * den);
                j[(k, 2 + m)] = -a * 2.0 * w * w * g * g / (den * den);
                j[(k, 4 + m)] = l;
            }
            j[(k, 6)] = 1.0;
            for c in 0..7 {
                j[(k, c)] /= total;
            }
            r.push(total.ln() - log_data[k]);
        }
        (r, j)
    };
    let project = |p: &mut [f64]| {
        if p[6] < 0.0 {
            p[6] = 0.0;
        }
    };
    let scale = |_: &[f64]| vec![omega_scale, omega_scale, 1.0, 1.0, 1.0, 1.0, peak];
    let outcome = minimize(
        &LmProblem {
            eval: &eval,
            project: &project,
            scale: &scale,
        },
        &x0,
        FIT_TOL,
        FIT_MAX_ITER,
    );
    let dof = (omega.len() - 7).max(1) as f64;
    let residual = outcome.cost / dof;
    if !outcome.converged {
        return Err(Error::FitNonConvergence {
            iterations: outcome.iterations,
            residual,
            last: outcome.params,
        });
    }

    let p = &outcome.params;
    let mut peaks = [(p[0], p[2].exp(), p[4].exp()), (p[1], p[3].exp(), p[5].exp())];
    peaks.sort_by(|a, b| b.0.total_cmp(&a.0));
    let area = |(w0, g, a): (f64, f64, f64)| a / (4.0 * w0 * w0 * g);
    let temperature = |pk: (f64, f64, f64)| mass * pk.0 * pk.0 * area(pk) / BOLTZMANN;
    Ok(DoubletFit {
        omega_plus: peaks[0].0,
        omega_minus: peaks[1].0,
        gamma_plus: peaks[0].1,
        gamma_minus: peaks[1].1,
        area_plus: area(peaks[0]),
        area_minus: area(peaks[1]),
        floor: p[6],
        residual,
        merged: (peaks[0].0 - peaks[1].0).abs() <= resolution,
        temperature_plus: temperature(peaks[0]),
        temperature_minus: temperature(peaks[1]),
        iterations: outcome.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModalParams, Vec2};
    use crate::spectral::{analytic_projected_psd, with_periodogram_noise};

    fn band(p: &ModalParams, n: usize) -> Vec<f64> {
        let lo = p.omega1.min(p.omega2) - 25.0 * p.gamma;
        let hi = p.omega1.max(p.omega2) + 25.0 * p.gamma;
        (0..n)
            .map(|k| (lo + (hi - lo) * k as f64 / (n - 1) as f64) / TAU)
            .collect()
    }

    fn diagonal(p: &ModalParams) -> Vec2 {
        Vec2::from_angle(p.theta1 + 0.7)
    }

    #[test]
    fn recovers_noiseless_doublet() {
        let p = ModalParams::scaled_test_device();
        let env = Environment::room();
        let s = analytic_projected_psd(&p, diagonal(&p), &band(&p, 3000), &env).unwrap();
        let fit = fit_doublet(&s, p.mass, &env).unwrap();
        let rel = |a: f64, b: f64| (a - b).abs() / b;
        assert!(rel(fit.omega_plus, p.omega2) < 1e-6);
        assert!(rel(fit.omega_minus, p.omega1) < 1e-6);
        assert!(rel(fit.gamma_plus, p.gamma) < 1e-6);
        assert!(rel(fit.gamma_minus, p.gamma) < 1e-6);
        assert!(!fit.merged);
        // areas carry the projected equipartition variance
        let w2 = p.e2().dot(diagonal(&p)).powi(2);
        assert!(rel(fit.area_plus, w2 * p.equipartition_variance(1, &env)) < 1e-6);
        assert!(rel(fit.temperature_plus, 300.0 * w2) < 1e-6);
    }

    #[test]
    fn refit_is_a_fixed_point() {
        let p = ModalParams::scaled_test_device();
        let env = Environment::new(300.0, 1e-24).unwrap();
        let s = analytic_projected_psd(&p, diagonal(&p), &band(&p, 2000), &env).unwrap();
        let a = fit_doublet(&s, p.mass, &env).unwrap();
        let model = [
            a.omega_plus,
            a.omega_minus,
            a.gamma_plus.ln(),
            a.gamma_minus.ln(),
            (a.area_plus * 4.0 * a.omega_plus.powi(2) * a.gamma_plus).ln(),
            (a.area_minus * 4.0 * a.omega_minus.powi(2) * a.gamma_minus).ln(),
            a.floor,
        ];
        let refit_spec = SpectrumEstimate {
            psd: s.freqs.iter().map(|f| doublet_model(&model, TAU * f)).collect(),
            ..s.clone()
        };
        let b = fit_doublet(&refit_spec, p.mass, &env).unwrap();
        for (x, y) in [
            (a.omega_plus, b.omega_plus),
            (a.omega_minus, b.omega_minus),
            (a.gamma_plus, b.gamma_plus),
            (a.gamma_minus, b.gamma_minus),
        ] {
            assert!((x - y).abs() / x < 1e-9, "{x} vs {y}");
        }
    }

    #[test]
    fn noisy_doublet_monte_carlo() {
        let p = ModalParams::scaled_test_device();
        let env = Environment::room();
        let s = analytic_projected_psd(&p, diagonal(&p), &band(&p, 1500), &env).unwrap();
        let mut ok = 0;
        for seed in 0..50 {
            let noisy = with_periodogram_noise(&s, 200, seed).unwrap();
            let Ok(fit) = fit_doublet(&noisy, p.mass, &env) else {
                continue;
            };
            let good = (fit.omega_plus - p.omega2).abs() < p.gamma / 10.0
                && (fit.omega_minus - p.omega1).abs() < p.gamma / 10.0
                && (fit.gamma_plus / p.gamma - 1.0).abs() < 0.15
                && (fit.gamma_minus / p.gamma - 1.0).abs() < 0.15;
            ok += good as usize;
        }
        assert!(ok as f64 / 50.0 >= 0.9, "{ok}/50");
    }

    #[test]
    fn merged_doublet_is_flagged() {
        let mut p = ModalParams::scaled_test_device();
        p.omega2 = p.omega1;
        let env = Environment::room();
        let s = analytic_projected_psd(&p, diagonal(&p), &band(&p, 2000), &env).unwrap();
        let fit = fit_doublet(&s, p.mass, &env).unwrap();
        assert!(fit.merged);
        assert!((fit.omega_plus - fit.omega_minus).abs() <= TAU * s.resolution_bw);
    }

    #[test]
    fn flat_spectrum_has_no_resonance() {
        let s = SpectrumEstimate {
            freqs: (0..100).map(|k| k as f64).collect(),
            psd: vec![1e-20; 100],
            convention: super::super::SpectrumConvention::OneSidedHz,
            n_segments: 1,
            resolution_bw: 1.0,
        };
        assert!(matches!(
            fit_doublet(&s, 1e-12, &Environment::new(300.0, 1e-20).unwrap()),
            Err(Error::NoResonance { .. })
        ));
    }
}
