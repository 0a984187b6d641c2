use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::protocol::{fit_force, synthesize_measurement, ForceMeasurement, ProtocolConfig};
use super::readout::measurement_vector;
use crate::backaction::{pauli_decompose, PauliDecomposition};
use crate::dynamics::GradientMatrix;
use crate::error::{Error, Result};
use crate::model::{Environment, ForceField, ModalParams, RectGrid, TransmissionMap, Vec2};
use crate::seed::derive_seed;

/// Nodes below this signal-to-noise ratio are left out of the error statistics.
pub const SNR_THRESHOLD: f64 = 10.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapNode {
    pub position: Vec2,
    /// Recovered `F(r0)` at the mean power.
    pub measurement: Option<ForceMeasurement>,
    pub truth: Option<Vec2>,
    /// Why the node has no measurement.
    pub gap: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub snr_threshold: f64,
    /// Nodes entering the RMS figures.
    pub nodes_used: usize,
    pub rms_magnitude_error: f64,
    /// Degrees.
    pub rms_angle_error_deg: f64,
    /// Worst `|F_rec - F_true| / |F_true|` over every measured node.
    pub max_relative_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForceMap {
    pub grid: RectGrid,
    pub power: f64,
    /// Row-major over `grid.index(ix, iz)`.
    pub nodes: Vec<MapNode>,
    pub stats: Option<ErrorStats>,
}

impl ForceMap {
    pub fn gaps(&self) -> usize {
        self.nodes.iter().filter(|n| n.measurement.is_none()).count()
    }

    pub fn recovered(&self) -> Vec<Option<Vec2>> {
        self.nodes.iter().map(|n| n.measurement.map(|m| m.force)).collect()
    }

    pub fn truth(&self) -> Vec<Option<Vec2>> {
        self.nodes.iter().map(|n| n.truth).collect()
    }
}

fn angle_between(a: Vec2, b: Vec2) -> f64 {
    let d = (a.angle() - b.angle()).rem_euclid(TAU);
    d.min(TAU - d)
}

fn error_stats(nodes: &[MapNode]) -> ErrorStats {
    let mut mag = Vec::new();
    let mut ang = Vec::new();
    let mut worst: f64 = 0.0;
    for n in nodes {
        let (Some(m), Some(t)) = (n.measurement, n.truth) else {
            continue;
        };
        let t_norm = t.norm();
        if t_norm == 0.0 {
            continue;
        }
        worst = worst.max((m.force - t).norm() / t_norm);
        if m.snr > SNR_THRESHOLD {
            mag.push((m.magnitude - t_norm) / t_norm);
            ang.push(angle_between(m.force, t));
        }
    }
    let rms = |v: &[f64]| {
        if v.is_empty() {
            0.0
        } else {
            (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
        }
    };
    ErrorStats {
        snr_threshold: SNR_THRESHOLD,
        nodes_used: mag.len(),
        rms_magnitude_error: rms(&mag),
        rms_angle_error_deg: rms(&ang).to_degrees(),
        max_relative_error: worst,
    }
}

/// Run the driven-response protocol at every grid node and recover
/// `F(r0)` at the mean power. Degenerate or unconstrained nodes become gaps.
/// With `compare`, the field doubles as ground truth for error statistics.
#[allow(clippy::too_many_arguments)]
pub fn map_force_field<F: ForceField + ?Sized>(
    params: &ModalParams,
    field: &F,
    tmap: &TransmissionMap,
    grid: &RectGrid,
    protocol: &ProtocolConfig,
    env: &Environment,
    seed: u64,
    compare: bool,
) -> Result<ForceMap> {
    params.validate()?;
    env.validate()?;
    protocol.validate()?;
    let positions: Vec<Vec2> = (0..grid.nx())
        .flat_map(|ix| (0..grid.nz()).map(move |iz| (ix, iz)))
        .map(|(ix, iz)| grid.node(ix, iz))
        .collect();
    let nodes = positions
        .par_iter()
        .enumerate()
        .map(|(k, &r)| -> Result<MapNode> {
            let truth = if compare {
                Some(field.force(r, protocol.power)?)
            } else {
                None
            };
            let gap = |reason: String| MapNode {
                position: r,
                measurement: None,
                truth,
                gap: Some(reason),
            };
            let beta = match measurement_vector(tmap, r, protocol.readout_floor) {
                Ok(b) => b,
                Err(e @ (Error::DegenerateReadout { .. } | Error::OutOfRange { .. })) => return Ok(gap(e.to_string())),
                Err(e) => return Err(e),
            };
            let m = synthesize_measurement(params, field, r, &beta, protocol, env, derive_seed(seed, k as u64))?;
            match fit_force(&m.sweep, params, &beta) {
                Ok(f) => Ok(MapNode {
                    position: r,
                    measurement: Some(f.scaled(1.0 / protocol.delta_p_over_p)),
                    truth,
                    gap: None,
                }),
                Err(e @ Error::Unconstrained { .. }) => Ok(gap(e.to_string())),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let stats = compare.then(|| error_stats(&nodes));
    Ok(ForceMap {
        grid: grid.clone(),
        power: protocol.power,
        nodes,
        stats,
    })
}

/// Pauli components of a sampled force map from central differences;
/// `None` at edges and next to gaps.
pub fn pauli_map(grid: &RectGrid, forces: &[Option<Vec2>], power: f64) -> Vec<Option<PauliDecomposition>> {
    let mut out = vec![None; grid.len()];
    for ix in 1..grid.nx().saturating_sub(1) {
        for iz in 1..grid.nz().saturating_sub(1) {
            let get = |i: usize, j: usize| forces[grid.index(i, j)];
            let (Some(xp), Some(xm), Some(zp), Some(zm)) =
                (get(ix + 1, iz), get(ix - 1, iz), get(ix, iz + 1), get(ix, iz - 1))
            else {
                continue;
            };
            let dx = grid.x[ix + 1] - grid.x[ix - 1];
            let dz = grid.z[iz + 1] - grid.z[iz - 1];
            let ddx = (xp - xm) * (1.0 / dx);
            let ddz = (zp - zm) * (1.0 / dz);
            let g = GradientMatrix {
                d_xfx: ddx.x,
                d_xfz: ddx.z,
                d_zfx: ddz.x,
                d_zfz: ddz.z,
                power,
            };
            out[grid.index(ix, iz)] = Some(pauli_decompose(&g));
        }
    }
    out
}

/// Pearson correlation over index pairs present in both maps.
pub fn map_correlation(a: &[Option<f64>], b: &[Option<f64>]) -> f64 {
    let pairs: Vec<(f64, f64)> = a.iter().zip(b).filter_map(|(x, y)| Some(((*x)?, (*y)?))).collect();
    let n = pairs.len() as f64;
    if n < 2.0 {
        return f64::NAN;
    }
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// A point where the force is perpendicular to `e1` yet `e1` is still read out.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackactionFreePoint {
    pub position: Vec2,
    /// `|e1 . e_beta|`.
    pub overlap: f64,
}

/// Zeros of `F . e1` along the grid rows (located by bisection) where the
/// readout overlap with `e1` exceeds `min_overlap`.
pub fn backaction_free_points<F: ForceField + ?Sized>(
    params: &ModalParams,
    field: &F,
    tmap: &TransmissionMap,
    grid: &RectGrid,
    power: f64,
    min_overlap: f64,
) -> Result<Vec<BackactionFreePoint>> {
    let e1 = params.e1();
    let proj = |r: Vec2| -> Result<f64> { Ok(field.force(r, power)?.dot(e1)) };
    let mut out = Vec::new();
    for iz in 0..grid.nz() {
        for ix in 0..grid.nx() - 1 {
            let (mut a, mut b) = (grid.node(ix, iz), grid.node(ix + 1, iz));
            let (fa, fb) = (proj(a)?, proj(b)?);
            if fa == 0.0 || (fa < 0.0) == (fb < 0.0) {
                continue;
            }
            let sa = fa < 0.0;
            for _ in 0..60 {
                let mid = (a + b) * 0.5;
                if (proj(mid)? < 0.0) == sa {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            let r = (a + b) * 0.5;
            let Ok(beta) = measurement_vector(tmap, r, 0.0) else {
                continue;
            };
            let overlap = beta.direction().dot(e1).abs();
            if overlap > min_overlap {
                out.push(BackactionFreePoint { position: r, overlap });
            }
        }
    }
    Ok(out)
}
