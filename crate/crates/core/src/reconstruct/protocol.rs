use std::f64::consts::{FRAC_PI_2, PI, TAU};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::readout::MeasurementVector;
use crate::dynamics::{doublet_sweep, driven_response_analytic, susceptibility, ResponseSweep};
use crate::error::{Error, Result};
use crate::model::{thermal_force_psd_one_sided, Environment, ForceField, ModalParams, Vec2};
use crate::spectral::{analytic_projected_psd, SpectrumEstimate};

/// Projections `|e_i . e_beta|` below this leave `dF . e_i` unconstrained.
pub const MIN_OVERLAP: f64 = 0.05;

/// Driven-response protocol settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolConfig {
    /// Mean optical power `P0` (W).
    pub power: f64,
    /// Modulation depth `dP / P0`, in `(0, 1]`.
    pub delta_p_over_p: f64,
    /// Sweep margin beyond the doublet, in linewidths.
    pub span_linewidths: f64,
    pub points_per_linewidth: f64,
    /// Demodulation bandwidth (Hz); `None` means `gamma / 20`.
    pub bandwidth_hz: Option<f64>,
    /// Multiplies the thermal noise; 0 gives the noiseless response.
    pub noise_scale: f64,
    /// Smallest usable `|beta|` (V/m).
    pub readout_floor: f64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            power: 96e-6,
            delta_p_over_p: 0.1,
            span_linewidths: 10.0,
            points_per_linewidth: 10.0,
            bandwidth_hz: None,
            noise_scale: 1.0,
            readout_floor: 0.0,
        }
    }
}

impl ProtocolConfig {
    pub fn noiseless() -> Self {
        Self {
            noise_scale: 0.0,
            ..Self::default()
        }
    }

    pub fn bandwidth(&self, params: &ModalParams) -> f64 {
        self.bandwidth_hz.unwrap_or(params.gamma / (TAU * 20.0))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.power > 0.0 && self.power.is_finite()) {
            return Err(Error::invalid("power", "must be finite and > 0"));
        }
        if !(self.delta_p_over_p > 0.0 && self.delta_p_over_p <= 1.0) {
            return Err(Error::invalid("delta_p_over_p", "must be in (0, 1]"));
        }
        if !(self.span_linewidths >= 0.0) {
            return Err(Error::invalid("span_linewidths", "must be >= 0"));
        }
        if !(self.points_per_linewidth >= 10.0) {
            return Err(Error::invalid("points_per_linewidth", "must be >= 10"));
        }
        if self.bandwidth_hz.is_some_and(|b| !(b > 0.0)) {
            return Err(Error::invalid("bandwidth_hz", "must be > 0"));
        }
        if !(self.noise_scale >= 0.0) {
            return Err(Error::invalid("noise_scale", "must be >= 0"));
        }
        Ok(())
    }
}

/// One simulated lock-in sweep and the Brownian spectrum at the same point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticMeasurement {
    /// Demodulated signal (V) versus drive frequency (rad/s).
    pub sweep: ResponseSweep,
    /// Thermal spectrum of `dr . e_beta` on the sweep frequencies (m^2/Hz).
    pub spectrum: SpectrumEstimate,
    /// Modulated force `F(r0) dP/P0` (N).
    pub delta_force: Vec2,
    pub bandwidth_hz: f64,
}

/// Simulate the modulated-intensity response at `r0`: the analytic driven
/// response to `dF = F(r0) dP/P0` (in phase with the modulation), read out
/// through `beta`, plus complex Gaussian thermal noise in the demodulation
/// bandwidth.
pub fn synthesize_measurement<F: ForceField + ?Sized>(
    params: &ModalParams,
    field: &F,
    r0: Vec2,
    beta: &MeasurementVector,
    protocol: &ProtocolConfig,
    env: &Environment,
    seed: u64,
) -> Result<SyntheticMeasurement> {
    protocol.validate()?;
    let delta_force = field.force(r0, protocol.power)? * protocol.delta_p_over_p;
    let e_beta = beta.direction();
    let b = beta.magnitude();
    let freqs = doublet_sweep(params, protocol.span_linewidths, protocol.points_per_linewidth);
    let clean = driven_response_analytic(params, e_beta, delta_force, 0.0, &freqs)?;
    let freqs_hz: Vec<f64> = freqs.iter().map(|w| w / TAU).collect();
    let spectrum = analytic_projected_psd(params, e_beta, &freqs_hz, env)?;
    let bandwidth = protocol.bandwidth(params);

    // thermal forces per mode and an isotropic readout noise, both seen
    // through e_beta so that flipping the readout flips the noise too
    let u = [params.e1().dot(e_beta), params.e2().dot(e_beta)];
    let force_sigma = protocol.noise_scale * (0.5 * thermal_force_psd_one_sided(params, env) * bandwidth).sqrt();
    let floor_sigma = protocol.noise_scale * (0.5 * env.detection_floor * bandwidth).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut draw = |sigma: f64| {
        if sigma > 0.0 {
            Complex64::new(unit.sample(&mut rng), unit.sample(&mut rng)) * sigma
        } else {
            Complex64::new(0.0, 0.0)
        }
    };
    let response = clean
        .response
        .iter()
        .zip(&freqs)
        .map(|(r, &w)| {
            let thermal: Complex64 = (0..2)
                .map(|i| susceptibility(params, i, w) * u[i] * draw(force_sigma))
                .sum();
            let readout = draw(floor_sigma) * e_beta.x + draw(floor_sigma) * e_beta.z;
            (r + thermal + readout) * b
        })
        .collect();
    Ok(SyntheticMeasurement {
        sweep: ResponseSweep { freqs, response },
        spectrum,
        delta_force,
        bandwidth_hz: bandwidth,
    })
}

/// Force at resonance that equals the thermal noise in `bandwidth_hz`:
/// `sqrt(4 M gamma k_B T B)` (N).
pub fn minimum_resolvable_force(params: &ModalParams, env: &Environment, bandwidth_hz: f64) -> f64 {
    (thermal_force_psd_one_sided(params, env) * bandwidth_hz).sqrt()
}

/// Force vector recovered from one sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForceMeasurement {
    /// Lab-frame force (N).
    pub force: Vec2,
    pub magnitude: f64,
    /// Lab-frame angle from x (rad).
    pub direction: f64,
    /// Delay of the force behind the modulation (rad), in `(-pi/2, pi/2]`.
    pub phase: f64,
    pub sigma_magnitude: f64,
    pub sigma_direction: f64,
    pub sigma_phase: f64,
    pub snr: f64,
    /// `dF . e_i` (N) and their 1-sigma errors.
    pub projections: [f64; 2],
    pub sigma_projections: [f64; 2],
    /// Largest deviation of either projection's phase from the common phase.
    pub phase_spread: f64,
}

impl ForceMeasurement {
    /// Rescale forces by `k > 0`, e.g. from `dF` to `F = dF P0 / dP`.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            force: self.force * k,
            magnitude: self.magnitude * k,
            sigma_magnitude: self.sigma_magnitude * k,
            projections: self.projections.map(|p| p * k),
            sigma_projections: self.sigma_projections.map(|s| s * k),
            ..*self
        }
    }
}

/// Fold an axial angle into `(-pi/2, pi/2]`.
fn fold_axial(a: f64) -> f64 {
    let mut x = a.rem_euclid(PI);
    if x > FRAC_PI_2 {
        x -= PI;
    }
    x
}

/// Invert the driven response: weighted linear least squares for the modal
/// amplitudes `C_i` in `y = sum_i chi_i C_i`, then
/// `dF . e_i = C_i / (|beta| e_i . e_beta)` and a common phase.
pub fn fit_force(sweep: &ResponseSweep, params: &ModalParams, beta: &MeasurementVector) -> Result<ForceMeasurement> {
    let n = sweep.len();
    if n < 4 || sweep.response.len() != n {
        return Err(Error::invalid("sweep", "needs at least 4 points"));
    }
    let (lo, hi) = sweep
        .freqs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), w| (a.min(*w), b.max(*w)));
    if lo > params.omega1.min(params.omega2) || hi < params.omega1.max(params.omega2) {
        return Err(Error::invalid("sweep", "must span both resonances"));
    }
    let max_step = sweep.freqs.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
    if max_step > params.gamma / 10.0 * (1.0 + 1e-9) {
        return Err(Error::invalid("sweep", "needs at least 10 points per linewidth"));
    }
    let b = beta.magnitude();
    let e_beta = beta.direction();
    let u = [params.e1().dot(e_beta), params.e2().dot(e_beta)];

    // weighted normal equations; thermal noise follows sum_i u_i^2 |chi_i|^2
    let cols: Vec<[Complex64; 2]> = sweep
        .freqs
        .iter()
        .map(|&w| [susceptibility(params, 0, w), susceptibility(params, 1, w)])
        .collect();
    let weights: Vec<f64> = cols
        .iter()
        .map(|a| 1.0 / (u[0] * u[0] * a[0].norm_sqr() + u[1] * u[1] * a[1].norm_sqr()))
        .collect();
    let mut nm = [[Complex64::new(0.0, 0.0); 2]; 2];
    let mut rhs = [Complex64::new(0.0, 0.0); 2];
    for ((a, y), wt) in cols.iter().zip(&sweep.response).zip(&weights) {
        for i in 0..2 {
            rhs[i] += a[i].conj() * y * *wt;
            for j in 0..2 {
                nm[i][j] += a[i].conj() * a[j] * *wt;
            }
        }
    }
    let det = nm[0][0] * nm[1][1] - nm[0][1] * nm[1][0];
    if det.norm() == 0.0 || !det.is_finite() {
        return Err(Error::DegenerateSampling("susceptibility columns are collinear".into()));
    }
    let inv = [[nm[1][1] / det, -nm[0][1] / det], [-nm[1][0] / det, nm[0][0] / det]];
    let c = [
        inv[0][0] * rhs[0] + inv[0][1] * rhs[1],
        inv[1][0] * rhs[0] + inv[1][1] * rhs[1],
    ];
    let rss: f64 = cols
        .iter()
        .zip(&sweep.response)
        .zip(&weights)
        .map(|((a, y), wt)| wt * (y - a[0] * c[0] - a[1] * c[1]).norm_sqr())
        .sum();
    let sigma2 = rss / (n - 2) as f64;

    let p: Vec<Complex64> = (0..2).map(|i| c[i] / (b * u[i])).collect();
    let weighted: Complex64 = (0..2)
        .filter(|&i| u[i].abs() >= MIN_OVERLAP && p[i].norm() > 0.0)
        .map(|i| p[i] * p[i] / p[i].norm())
        .sum();
    let phase = if weighted.norm() > 0.0 {
        fold_axial(0.5 * weighted.arg())
    } else {
        0.0
    };
    let rot = Complex64::from_polar(1.0, -phase);
    let f = [(p[0] * rot).re, (p[1] * rot).re];
    let cov = |i: usize, j: usize| 0.5 * sigma2 * inv[i][j].re / (b * b * u[i] * u[j]);

    for i in 0..2 {
        if u[i].abs() < MIN_OVERLAP {
            let other = 1 - i;
            return Err(Error::Unconstrained {
                mode: i + 1,
                overlap: u[i].abs(),
                partial: (u[other].abs() >= MIN_OVERLAP).then_some(f[other]),
            });
        }
    }

    let force = params.to_lab(f);
    let magnitude = force.norm();
    let quad = |g: [f64; 2]| -> f64 {
        (0..2)
            .flat_map(|i| (0..2).map(move |j| (i, j)))
            .map(|(i, j)| g[i] * g[j] * cov(i, j))
            .sum::<f64>()
            .max(0.0)
            .sqrt()
    };
    let (sigma_magnitude, sigma_direction) = if magnitude > 0.0 {
        (
            quad([f[0] / magnitude, f[1] / magnitude]),
            quad([-f[1] / (magnitude * magnitude), f[0] / (magnitude * magnitude)]),
        )
    } else {
        (quad([1.0, 0.0]).max(quad([0.0, 1.0])), PI)
    };
    let sigma_phase = if magnitude > 0.0 {
        sigma_magnitude / magnitude
    } else {
        PI
    };
    let phase_spread = p
        .iter()
        .filter(|z| z.norm() > 0.0)
        .map(|z| fold_axial(z.arg() - phase).abs())
        .fold(0.0, f64::max);
    Ok(ForceMeasurement {
        force,
        magnitude,
        direction: force.angle(),
        phase,
        sigma_magnitude,
        sigma_direction,
        sigma_phase,
        snr: if sigma_magnitude > 0.0 {
            magnitude / sigma_magnitude
        } else {
            f64::INFINITY
        },
        projections: f,
        sigma_projections: [cov(0, 0).max(0.0).sqrt(), cov(1, 1).max(0.0).sqrt()],
        phase_spread,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GaussianBeamField, LinearField, UM};

    fn readout(angle: f64) -> MeasurementVector {
        MeasurementVector {
            beta: Vec2::from_angle(angle) * 2.0e6,
            origin: Vec2::ZERO,
        }
    }

    fn sweep_for(p: &ModalParams, force: Vec2, phase: f64, beta: &MeasurementVector) -> ResponseSweep {
        let freqs = doublet_sweep(p, 10.0, 10.0);
        let mut s = driven_response_analytic(p, beta.direction(), force, phase, &freqs).unwrap();
        for r in &mut s.response {
            *r *= beta.magnitude();
        }
        s
    }

    #[test]
    fn noiseless_inversion() {
        let p = ModalParams::paper_device();
        let beta = readout(0.1);
        let force = Vec2::from_angle(30f64.to_radians()) * 7e-15;
        let m = fit_force(&sweep_for(&p, force, PI / 4.0, &beta), &p, &beta).unwrap();
        assert!((m.magnitude / 7e-15 - 1.0).abs() < 1e-6);
        assert!((m.direction - 30f64.to_radians()).abs() < 1e-6);
        assert!((m.phase - PI / 4.0).abs() < 1e-6);
        assert!(m.phase_spread < 1e-6);
    }

    #[test]
    fn noiseless_synthesis_equals_the_analytic_response() {
        let p = ModalParams::paper_device();
        let field = GaussianBeamField::green_532();
        let r0 = Vec2::new(0.2 * UM, 0.1 * UM);
        let beta = readout(0.3);
        let proto = ProtocolConfig::noiseless();
        let m = synthesize_measurement(&p, &field, r0, &beta, &proto, &Environment::room(), 1).unwrap();
        let df = field.force_at(r0, proto.power) * proto.delta_p_over_p;
        let expect = sweep_for(&p, df, 0.0, &beta);
        assert_eq!(m.sweep.response, expect.response);
    }

    #[test]
    fn thermal_limit_in_one_hertz() {
        let p = ModalParams::paper_device();
        let env = Environment::room();
        let f_min = minimum_resolvable_force(&p, &env, 1.0);
        assert!((f_min / 38e-18 - 1.0).abs() < 0.1, "{f_min}");
        // the synthesized noise at resonance corresponds to the same force
        let beta = MeasurementVector {
            beta: p.e1(),
            origin: Vec2::ZERO,
        };
        let field = LinearField::uniform(Vec2::ZERO, 96e-6);
        let proto = ProtocolConfig {
            bandwidth_hz: Some(1.0),
            ..ProtocolConfig::default()
        };
        let m = synthesize_measurement(&p, &field, Vec2::ZERO, &beta, &proto, &env, 2).unwrap();
        let k = m
            .sweep
            .freqs
            .iter()
            .position(|w| (w - p.omega1).abs() < 0.05 * p.gamma)
            .unwrap();
        let s = m.spectrum.psd[k];
        let chi = susceptibility(&p, 0, m.sweep.freqs[k]).norm();
        let implied = (s * 1.0).sqrt() / chi;
        assert!((implied / f_min - 1.0).abs() < 0.02, "{implied} {f_min}");
    }

    #[test]
    fn linear_in_modulation_depth() {
        let p = ModalParams::paper_device();
        let field = GaussianBeamField::green_532();
        let beta = readout(0.2);
        let env = Environment::room();
        let depths = [1e-3, 3e-3, 1e-2, 3e-2, 0.1, 0.3, 1.0];
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for (k, d) in depths.iter().enumerate() {
            let proto = ProtocolConfig {
                delta_p_over_p: *d,
                ..ProtocolConfig::default()
            };
            let m = synthesize_measurement(&p, &field, Vec2::ZERO, &beta, &proto, &env, 10 + k as u64).unwrap();
            let f = fit_force(&m.sweep, &p, &beta).unwrap();
            xs.push(d.ln());
            ys.push(f.magnitude.ln());
        }
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
            / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
        assert!((slope - 1.0).abs() <= 0.01, "{slope}");
    }

    #[test]
    fn monte_carlo_recovery() {
        let p = ModalParams::paper_device();
        let field = GaussianBeamField::green_532();
        let r0 = Vec2::new(0.15 * UM, -0.3 * UM);
        let beta = readout(0.4);
        let env = Environment::room();
        let proto = ProtocolConfig::default();
        let truth = field.force_at(r0, proto.power) * proto.delta_p_over_p;
        let mut pulls = Vec::new();
        for seed in 0..100 {
            let m = synthesize_measurement(&p, &field, r0, &beta, &proto, &env, seed).unwrap();
            let f = fit_force(&m.sweep, &p, &beta).unwrap();
            assert!(f.snr > 10.0);
            assert!((f.magnitude / truth.norm() - 1.0).abs() < 0.05);
            let mut d = (f.direction - truth.angle()).abs();
            d = d.min(TAU - d);
            assert!(d.to_degrees() < 3.0);
            pulls.push((f.magnitude - truth.norm()) / f.sigma_magnitude);
        }
        // the reported uncertainty is calibrated
        let n = pulls.len() as f64;
        let mean = pulls.iter().sum::<f64>() / n;
        let sd = (pulls.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!(mean.abs() < 0.4, "{mean}");
        assert!((sd - 1.0).abs() < 0.25, "{sd}");
    }

    #[test]
    fn selection_rule() {
        let p = ModalParams::paper_device();
        let beta = readout(0.4);
        let env = Environment::room();
        let field = LinearField::uniform(p.e2() * 70e-15, 96e-6);
        let mut inside = 0;
        for seed in 0..50 {
            let m =
                synthesize_measurement(&p, &field, Vec2::ZERO, &beta, &ProtocolConfig::default(), &env, seed).unwrap();
            let f = fit_force(&m.sweep, &p, &beta).unwrap();
            inside += (f.projections[0].abs() <= 2.0 * f.sigma_projections[0]) as usize;
        }
        assert!(inside >= 44, "{inside}/50");
    }

    #[test]
    fn unconstrained_projection() {
        let p = ModalParams::paper_device();
        let beta = MeasurementVector {
            beta: p.e1() * 1e6,
            origin: Vec2::ZERO,
        };
        let s = sweep_for(&p, Vec2::new(1e-15, 2e-15), 0.0, &beta);
        match fit_force(&s, &p, &beta) {
            Err(Error::Unconstrained { mode, partial, .. }) => {
                assert_eq!(mode, 2);
                let expect = Vec2::new(1e-15, 2e-15).dot(p.e1());
                assert!((partial.unwrap() / expect - 1.0).abs() < 1e-6);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sparse_sweep_is_rejected() {
        let p = ModalParams::paper_device();
        let beta = readout(0.4);
        let freqs = doublet_sweep(&p, 10.0, 5.0);
        let s = driven_response_analytic(&p, beta.direction(), Vec2::new(1e-15, 0.0), 0.0, &freqs).unwrap();
        assert!(fit_force(&s, &p, &beta).is_err());
    }
}
