use std::f64::consts::{FRAC_PI_4, TAU};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backaction::{coupled_projected_psd, effective_stiffness, exact_modes, splitting_approx};
use crate::dynamics::linearize;
use crate::error::Result;
use crate::model::{Environment, ForceField, ModalParams, RectGrid, Vec2};
use crate::seed::derive_seed;
use crate::spectral::{fit_doublet, with_periodogram_noise};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplittingConfig {
    /// Readout angle (rad); `None` reads out halfway between the eigenmodes.
    pub readout_angle: Option<f64>,
    /// Averaged periodograms per spectrum.
    pub n_segments: usize,
    pub points_per_linewidth: f64,
    /// Spectrum margin beyond the doublet, in linewidths.
    pub margin_linewidths: f64,
}

impl Default for SplittingConfig {
    fn default() -> Self {
        Self {
            readout_angle: None,
            n_segments: 200,
            points_per_linewidth: 8.0,
            margin_linewidths: 20.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplittingNode {
    pub position: Vec2,
    /// Fitted from the Brownian spectrum (rad/s).
    pub direct: Option<f64>,
    /// Real part of the approximate splitting (rad/s).
    pub predicted: f64,
    pub excluded: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplittingComparison {
    pub grid: RectGrid,
    pub power: f64,
    pub nodes: Vec<SplittingNode>,
    /// Bare splitting `omega2 - omega1` (rad/s).
    pub bare: f64,
    /// RMS of `(direct - predicted) / predicted` over compared nodes.
    pub rms_relative_deviation: f64,
    pub compared: usize,
    /// Compared nodes whose fitted splitting lies below the bare one.
    pub below_bare: usize,
}

/// Paired splitting maps: the doublet fitted to a simulated Brownian
/// spectrum of the coupled system against the closed-form approximation
/// from the linearised gradient. Unstable or merged nodes are excluded.
pub fn splitting_comparison<F: ForceField + ?Sized>(
    params: &ModalParams,
    field: &F,
    grid: &RectGrid,
    power: f64,
    env: &Environment,
    seed: u64,
    config: &SplittingConfig,
) -> Result<SplittingComparison> {
    params.validate()?;
    env.validate()?;
    let e_beta = Vec2::from_angle(config.readout_angle.unwrap_or(params.theta1 + FRAC_PI_4));
    let positions: Vec<Vec2> = (0..grid.nx())
        .flat_map(|ix| (0..grid.nz()).map(move |iz| (ix, iz)))
        .map(|(ix, iz)| grid.node(ix, iz))
        .collect();
    let nodes = positions
        .par_iter()
        .enumerate()
        .map(|(k, &r)| -> Result<SplittingNode> {
            let g = linearize(field, r, power)?;
            let stiff = effective_stiffness(params, &g, power);
            let report = exact_modes(params, &stiff);
            let approx = splitting_approx(params, &stiff);
            let mut node = SplittingNode {
                position: r,
                direct: None,
                predicted: approx.re,
                excluded: None,
            };
            if report.unstable {
                node.excluded = Some("unstable".into());
                return Ok(node);
            }
            if approx.re == 0.0 {
                node.excluded = Some("merged".into());
                return Ok(node);
            }
            let lo = report.omega_minus - config.margin_linewidths * params.gamma;
            let hi = report.omega_plus + config.margin_linewidths * params.gamma;
            let step = params.gamma / config.points_per_linewidth;
            let n = ((hi - lo) / step).ceil() as usize + 1;
            let freqs: Vec<f64> = (0..n).map(|i| (lo + step * i as f64) / TAU).collect();
            let clean = coupled_projected_psd(params, &stiff, e_beta, &freqs, env)?;
            let noisy = with_periodogram_noise(&clean, config.n_segments, derive_seed(seed, k as u64))?;
            match fit_doublet(&noisy, params.mass, env) {
                Ok(fit) if fit.merged => node.excluded = Some("merged".into()),
                Ok(fit) => node.direct = Some(fit.splitting()),
                Err(e) => node.excluded = Some(format!("fit failed: {e}")),
            }
            Ok(node)
        })
        .collect::<Result<Vec<_>>>()?;

    let deviations: Vec<f64> = nodes
        .iter()
        .filter_map(|n| n.direct.map(|d| (d - n.predicted) / n.predicted))
        .collect();
    let bare = params.omega2 - params.omega1;
    let below_bare = nodes
        .iter()
        .filter(|n| n.direct.is_some_and(|d| d < bare.abs()))
        .count();
    let rms_relative_deviation = if deviations.is_empty() {
        f64::NAN
    } else {
        (deviations.iter().map(|d| d * d).sum::<f64>() / deviations.len() as f64).sqrt()
    };
    Ok(SplittingComparison {
        grid: grid.clone(),
        power,
        compared: deviations.len(),
        nodes,
        bare,
        rms_relative_deviation,
        below_bare,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GaussianBeamField, LinearField, UM};

    #[test]
    fn zero_power_gives_the_bare_splitting() {
        let p = ModalParams::paper_device();
        let field = GaussianBeamField::green_532();
        let grid = RectGrid::uniform((-0.8 * UM, 0.8 * UM), 3, (-1.5 * UM, 1.5 * UM), 3).unwrap();
        let c = splitting_comparison(
            &p,
            &field,
            &grid,
            0.0,
            &Environment::room(),
            3,
            &SplittingConfig::default(),
        )
        .unwrap();
        assert_eq!(c.compared, 9);
        for n in &c.nodes {
            assert!((n.predicted - c.bare).abs() < 1e-9 * c.bare);
            assert!((n.direct.unwrap() / c.bare - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn unstable_nodes_are_excluded() {
        let p = ModalParams::paper_device();
        let delta = p.omega2.powi(2) - p.omega1.powi(2);
        let g = 2.0 * (0.25 * delta * delta + (p.omega_bar() * p.gamma).powi(2)).sqrt() * p.mass;
        let lab = crate::dynamics::GradientMatrix::from_modal_frame(&p, [[0.0, g], [-g, 0.0]], 1e-4);
        let field = LinearField::new(Vec2::ZERO, lab.as_array(), 1e-4);
        let grid = RectGrid::uniform((-UM, UM), 2, (-UM, UM), 2).unwrap();
        let c = splitting_comparison(
            &p,
            &field,
            &grid,
            1e-4,
            &Environment::room(),
            1,
            &SplittingConfig::default(),
        )
        .unwrap();
        assert_eq!(c.compared, 0);
        assert!(c.nodes.iter().all(|n| n.excluded.as_deref() == Some("unstable")));
    }
}
