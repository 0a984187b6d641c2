use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Environment;

/// Effective mass from the thermal variance of one mode: `k_B T / (var omega^2)`.
pub fn equipartition_mass(variance: f64, omega: f64, env: &Environment) -> Result<f64> {
    if !(variance > 0.0 && variance.is_finite()) {
        return Err(Error::invalid("variance", "must be finite and > 0"));
    }
    if !(omega > 0.0) {
        return Err(Error::invalid("omega", "must be > 0"));
    }
    Ok(env.thermal_energy() / (variance * omega * omega))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrientationFit {
    /// Mode orientations in `[0, pi)` (rad).
    pub theta1: f64,
    pub theta2: f64,
    /// Unprojected r.m.s. amplitudes (m).
    pub amp1: f64,
    pub amp2: f64,
    /// `theta2 - theta1` folded into `[0, pi)`.
    pub angle_between: f64,
}

impl OrientationFit {
    /// `|angle_between - pi/2|`.
    pub fn perpendicularity_error(&self) -> f64 {
        (self.angle_between - PI / 2.0).abs()
    }
}

fn fold_pi(a: f64) -> f64 {
    a.rem_euclid(PI)
}

/// Best `(amplitude, theta)` for `y = A |cos(angle - theta)|`.
fn fit_projection(angles: &[f64], y: &[f64]) -> (f64, f64) {
    // for fixed theta the optimal amplitude is linear; minimise the profile
    let profile = |theta: f64| {
        let (mut yc, mut cc) = (0.0, 0.0);
        for (a, v) in angles.iter().zip(y) {
            let c = (a - theta).cos().abs();
            yc += v * c;
            cc += c * c;
        }
        let amp = if cc > 0.0 { yc / cc } else { 0.0 };
        (-(yc * yc) / cc.max(f64::MIN_POSITIVE), amp)
    };
    let n = 3600;
    let best = (0..n)
        .map(|k| PI * k as f64 / n as f64)
        .min_by(|a, b| profile(*a).0.total_cmp(&profile(*b).0))
        .unwrap();
    // golden-section refinement inside the winning bracket
    let step = PI / n as f64;
    let (mut lo, mut hi) = (best - step, best + step);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    for _ in 0..80 {
        if profile(c).0 < profile(d).0 {
            hi = d;
        } else {
            lo = c;
        }
        c = hi - g * (hi - lo);
        d = lo + g * (hi - lo);
    }
    let theta = 0.5 * (lo + hi);
    (profile(theta).1, fold_pi(theta))
}

/// Recover both eigenmode orientations from projected r.m.s. amplitudes
/// `rms_pairs[k] = (dx1 |cos(angles[k] - theta1)|, dx2 |cos(angles[k] - theta2)|)`.
pub fn orientation_fit(angles: &[f64], rms_pairs: &[(f64, f64)]) -> Result<OrientationFit> {
    if angles.len() != rms_pairs.len() {
        return Err(Error::invalid("rms_pairs", "length must match angles"));
    }
    let mut folded: Vec<f64> = angles.iter().map(|a| fold_pi(*a)).collect();
    folded.sort_by(f64::total_cmp);
    folded.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    if folded.len() < 8 {
        return Err(Error::DegenerateSampling(format!(
            "{} distinct angles, need at least 8",
            folded.len()
        )));
    }
    // span on the circle of period pi: pi minus the largest gap
    let mut max_gap = folded[0] + PI - folded[folded.len() - 1];
    for w in folded.windows(2) {
        max_gap = max_gap.max(w[1] - w[0]);
    }
    if PI - max_gap <= PI / 2.0 {
        return Err(Error::DegenerateSampling("angles span less than pi/2".into()));
    }
    let y1: Vec<f64> = rms_pairs.iter().map(|p| p.0).collect();
    let y2: Vec<f64> = rms_pairs.iter().map(|p| p.1).collect();
    let (amp1, theta1) = fit_projection(angles, &y1);
    let (amp2, theta2) = fit_projection(angles, &y2);
    Ok(OrientationFit {
        theta1,
        theta2,
        amp1,
        amp2,
        angle_between: fold_pi(theta2 - theta1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BOLTZMANN;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn synthetic(theta1: f64, theta2: f64, n: usize) -> (Vec<f64>, Vec<(f64, f64)>) {
        let angles: Vec<f64> = (0..n).map(|k| PI * k as f64 / n as f64).collect();
        let pairs = angles
            .iter()
            .map(|a| (4.7e-9 * (a - theta1).cos().abs(), 4.6e-9 * (a - theta2).cos().abs()))
            .collect();
        (angles, pairs)
    }

    #[test]
    fn mass_inverts_equipartition() {
        let env = Environment::room();
        let omega = std::f64::consts::TAU * 113e3;
        let var = BOLTZMANN * 300.0 / (376e-18 * omega * omega);
        let m = equipartition_mass(var, omega, &env).unwrap();
        assert!((m / 376e-18 - 1.0).abs() < 1e-12);
        // doubling T at fixed mass doubles the variance target
        let hot = Environment::new(600.0, 0.0).unwrap();
        let m2 = equipartition_mass(2.0 * var, omega, &hot).unwrap();
        assert!((m2 / m - 1.0).abs() < 1e-12);
        assert!(equipartition_mass(0.0, omega, &env).is_err());
    }

    #[test]
    fn noiseless_orientations() {
        let (a, p) = synthetic(20f64.to_radians(), 110f64.to_radians(), 36);
        let fit = orientation_fit(&a, &p).unwrap();
        assert!((fit.theta1.to_degrees() - 20.0).abs() < 0.1);
        assert!((fit.theta2.to_degrees() - 110.0).abs() < 0.1);
        assert!((fit.amp1 - 4.7e-9).abs() / 4.7e-9 < 1e-3);
        assert!(fit.perpendicularity_error().to_degrees() < 0.1);
    }

    #[test]
    fn noisy_perpendicularity() {
        let (a, p) = synthetic(20f64.to_radians(), 110f64.to_radians(), 90);
        let noise = Normal::new(1.0, 0.05).unwrap();
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let noisy: Vec<(f64, f64)> = p
                .iter()
                .map(|(x, y)| (x * noise.sample(&mut rng), y * noise.sample(&mut rng)))
                .collect();
            let fit = orientation_fit(&a, &noisy).unwrap();
            assert!(fit.perpendicularity_error().to_degrees() <= 1.0, "seed {seed}");
        }
    }

    #[test]
    fn scale_invariance() {
        let (a, p) = synthetic(0.4, 0.4 + PI / 2.0, 24);
        let scaled: Vec<(f64, f64)> = p.iter().map(|(x, y)| (3.0 * x, 3.0 * y)).collect();
        let f1 = orientation_fit(&a, &p).unwrap();
        let f2 = orientation_fit(&a, &scaled).unwrap();
        assert!((f1.theta1 - f2.theta1).abs() < 1e-6);
        assert!((f1.theta2 - f2.theta2).abs() < 1e-6);
    }

    #[test]
    fn degenerate_sampling_rejected() {
        let a = vec![0.3; 12];
        let p = vec![(1.0, 1.0); 12];
        assert!(matches!(orientation_fit(&a, &p), Err(Error::DegenerateSampling(_))));
        let narrow: Vec<f64> = (0..12).map(|k| 0.1 * k as f64).collect();
        assert!(orientation_fit(&narrow, &p).is_err());
    }
}
