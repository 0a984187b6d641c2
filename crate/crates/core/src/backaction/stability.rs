use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::modes::{modes_at_power, StabilityReport};
use crate::dynamics::{linearize, GradientMatrix};
use crate::error::{Error, Result};
use crate::model::{ForceField, ModalParams, RectGrid, Vec2};

/// Coarse scan resolution before bisection.
const THRESHOLD_SCAN: usize = 400;
/// Relative bracket width at which the bisection stops.
const THRESHOLD_RTOL: f64 = 1e-6;

/// Smallest power in `(0, p_max]` at which the modes of `g` (scaled linearly
/// with power) become unstable.
pub fn threshold_power_for_gradient(params: &ModalParams, g: &GradientMatrix, p_max: f64) -> Result<Option<f64>> {
    if !(p_max > 0.0 && p_max.is_finite()) {
        return Err(Error::invalid("p_max", "must be finite and > 0"));
    }
    let g = if g.power > 0.0 { *g } else { g.at_power(p_max) };
    let unstable = |p: f64| modes_at_power(params, &g, p).unstable;
    let mut lo = 0.0;
    let mut hi = None;
    for k in 1..=THRESHOLD_SCAN {
        let p = p_max * k as f64 / THRESHOLD_SCAN as f64;
        if unstable(p) {
            hi = Some(p);
            break;
        }
        lo = p;
    }
    let Some(mut hi) = hi else { return Ok(None) };
    while hi - lo > THRESHOLD_RTOL * hi {
        let mid = 0.5 * (lo + hi);
        if unstable(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

/// Instability threshold of `field` linearised at `r0`.
pub fn threshold_power<F: ForceField + ?Sized>(
    params: &ModalParams,
    field: &F,
    r0: Vec2,
    p_max: f64,
) -> Result<Option<f64>> {
    if !(p_max > 0.0 && p_max.is_finite()) {
        return Err(Error::invalid("p_max", "must be finite and > 0"));
    }
    let g = linearize(field, r0, p_max)?;
    threshold_power_for_gradient(params, &g, p_max)
}

/// Second-order model of the unstable region around the minimum of
/// `gamma_minus`: an ellipse of area `2 pi s0 / sqrt(det H)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticOverlay {
    pub center: Vec2,
    /// Minimum of `gamma_minus` (rad/s); negative when the region exists.
    pub gamma_min: f64,
    /// Hessian of `gamma_minus` at the minimum, rad/s/m^2.
    pub hessian: [[f64; 2]; 2],
    pub area: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityMap {
    pub grid: RectGrid,
    pub power: f64,
    /// Row-major over `grid.index(ix, iz)`.
    pub reports: Vec<StabilityReport>,
    /// Unstable area (m^2).
    pub area: f64,
    /// Boundary polylines of the unstable region.
    pub contours: Vec<Vec<Vec2>>,
    pub overlay: Option<QuadraticOverlay>,
}

impl StabilityMap {
    pub fn unstable_nodes(&self) -> usize {
        self.reports.iter().filter(|r| r.unstable).count()
    }

    pub fn gamma_minus(&self) -> Vec<f64> {
        self.reports.iter().map(|r| r.gamma_minus).collect()
    }
}

fn gamma_minus_at<F: ForceField + ?Sized>(params: &ModalParams, field: &F, r: Vec2, power: f64) -> Result<f64> {
    Ok(modes_at_power(params, &linearize(field, r, power)?, power).gamma_minus)
}

/// Exact modes over `grid` at `power`, the unstable area, its contour and
/// the quadratic overlay.
pub fn stability_map<F: ForceField + ?Sized>(
    params: &ModalParams,
    field: &F,
    grid: &RectGrid,
    power: f64,
) -> Result<StabilityMap> {
    params.validate()?;
    let nodes: Vec<Vec2> = (0..grid.nx())
        .flat_map(|ix| (0..grid.nz()).map(move |iz| (ix, iz)))
        .map(|(ix, iz)| grid.node(ix, iz))
        .collect();
    let reports = nodes
        .par_iter()
        .map(|&r| Ok(modes_at_power(params, &linearize(field, r, power)?, power)))
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = reports.iter().map(|r| r.gamma_minus).collect();
    let eval = |r: Vec2| gamma_minus_at(params, field, r, power);
    let area = unstable_area(grid, &values, &eval)?;
    let contours = contour_lines(grid, &values);
    let overlay = quadratic_overlay(grid, &values, &eval)?;
    Ok(StabilityMap {
        grid: grid.clone(),
        power,
        reports,
        area,
        contours,
        overlay,
    })
}

/// Area fraction of the unit square where the linear interpolant of the
/// corner values `(00, 10, 11, 01)` is negative.
fn negative_fraction(v: [f64; 4]) -> f64 {
    let corners = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
    let mut poly: Vec<(f64, f64)> = Vec::with_capacity(8);
    for i in 0..4 {
        let j = (i + 1) % 4;
        if v[i] < 0.0 {
            poly.push(corners[i]);
        }
        if (v[i] < 0.0) != (v[j] < 0.0) {
            let t = v[i] / (v[i] - v[j]);
            let (a, b) = (corners[i], corners[j]);
            poly.push((a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1)));
        }
    }
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let twice: f64 = (0..n)
        .map(|k| {
            let (p, q) = (poly[k], poly[(k + 1) % n]);
            p.0 * q.1 - q.0 * p.1
        })
        .sum();
    (0.5 * twice.abs()).min(1.0)
}

/// Cell counting with one level of refinement on boundary cells.
fn unstable_area(grid: &RectGrid, values: &[f64], eval: &(dyn Fn(Vec2) -> Result<f64> + Sync)) -> Result<f64> {
    let cells: Vec<(usize, usize)> = (0..grid.nx() - 1)
        .flat_map(|ix| (0..grid.nz() - 1).map(move |iz| (ix, iz)))
        .collect();
    let parts = cells
        .par_iter()
        .map(|&(ix, iz)| -> Result<f64> {
            let v = [
                values[grid.index(ix, iz)],
                values[grid.index(ix + 1, iz)],
                values[grid.index(ix + 1, iz + 1)],
                values[grid.index(ix, iz + 1)],
            ];
            let (x0, x1) = (grid.x[ix], grid.x[ix + 1]);
            let (z0, z1) = (grid.z[iz], grid.z[iz + 1]);
            let cell = (x1 - x0) * (z1 - z0);
            let neg = v.iter().filter(|s| **s < 0.0).count();
            if neg == 0 {
                return Ok(0.0);
            }
            if neg == 4 {
                return Ok(cell);
            }
            let (xm, zm) = (0.5 * (x0 + x1), 0.5 * (z0 + z1));
            let c = eval(Vec2::new(xm, zm))?;
            let s = eval(Vec2::new(xm, z0))?;
            let e = eval(Vec2::new(x1, zm))?;
            let n = eval(Vec2::new(xm, z1))?;
            let w = eval(Vec2::new(x0, zm))?;
            let quarters = [[v[0], s, c, w], [s, v[1], e, c], [c, e, v[2], n], [w, c, n, v[3]]];
            Ok(0.25 * cell * quarters.iter().map(|q| negative_fraction(*q)).sum::<f64>())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(parts.iter().sum())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Edge {
    /// Between `(ix, iz)` and `(ix + 1, iz)`.
    H(usize, usize),
    /// Between `(ix, iz)` and `(ix, iz + 1)`.
    V(usize, usize),
}

/// Marching squares on the sign of `values`, joined into polylines.
fn contour_lines(grid: &RectGrid, values: &[f64]) -> Vec<Vec<Vec2>> {
    let at = |ix: usize, iz: usize| values[grid.index(ix, iz)];
    let crossing = |e: Edge| -> Vec2 {
        let (a, b) = match e {
            Edge::H(ix, iz) => ((ix, iz), (ix + 1, iz)),
            Edge::V(ix, iz) => ((ix, iz), (ix, iz + 1)),
        };
        let (va, vb) = (at(a.0, a.1), at(b.0, b.1));
        let t = va / (va - vb);
        let (ra, rb) = (grid.node(a.0, a.1), grid.node(b.0, b.1));
        ra + (rb - ra) * t
    };
    let mut segments: Vec<(Edge, Edge)> = Vec::new();
    for ix in 0..grid.nx() - 1 {
        for iz in 0..grid.nz() - 1 {
            // counterclockwise edge order: bottom, right, top, left
            let edges = [
                Edge::H(ix, iz),
                Edge::V(ix + 1, iz),
                Edge::H(ix, iz + 1),
                Edge::V(ix, iz),
            ];
            let ends = [
                ((ix, iz), (ix + 1, iz)),
                ((ix + 1, iz), (ix + 1, iz + 1)),
                ((ix, iz + 1), (ix + 1, iz + 1)),
                ((ix, iz), (ix, iz + 1)),
            ];
            let hits: Vec<Edge> = edges
                .iter()
                .zip(ends)
                .filter(|(_, (a, b))| (at(a.0, a.1) < 0.0) != (at(b.0, b.1) < 0.0))
                .map(|(e, _)| *e)
                .collect();
            match hits.len() {
                2 => segments.push((hits[0], hits[1])),
                4 => {
                    // saddle: the cell centre decides which corners connect
                    let centre = 0.25 * (at(ix, iz) + at(ix + 1, iz) + at(ix + 1, iz + 1) + at(ix, iz + 1));
                    if (centre < 0.0) == (at(ix, iz) < 0.0) {
                        segments.push((hits[0], hits[1]));
                        segments.push((hits[2], hits[3]));
                    } else {
                        segments.push((hits[0], hits[3]));
                        segments.push((hits[1], hits[2]));
                    }
                }
                _ => {}
            }
        }
    }

    let mut by_edge: HashMap<Edge, Vec<usize>> = HashMap::new();
    for (k, (a, b)) in segments.iter().enumerate() {
        by_edge.entry(*a).or_default().push(k);
        by_edge.entry(*b).or_default().push(k);
    }
    let mut used = vec![false; segments.len()];
    let mut lines = Vec::new();
    let next_from =
        |edge: Edge, used: &[bool]| -> Option<usize> { by_edge.get(&edge)?.iter().copied().find(|k| !used[*k]) };
    // open chains first start at edges touched once, then closed loops
    let mut starts: Vec<usize> = by_edge.values().filter(|v| v.len() == 1).map(|v| v[0]).collect();
    starts.sort_unstable();
    starts.extend(0..segments.len());
    for start in starts {
        if used[start] {
            continue;
        }
        used[start] = true;
        let (a, b) = segments[start];
        let (first, mut tip) = if by_edge[&b].len() == 1 && by_edge[&a].len() > 1 {
            (b, a)
        } else {
            (a, b)
        };
        let mut edges = vec![first, tip];
        while let Some(k) = next_from(tip, &used) {
            used[k] = true;
            let (p, q) = segments[k];
            tip = if p == tip { q } else { p };
            edges.push(tip);
        }
        lines.push(edges.into_iter().map(crossing).collect());
    }
    lines
}

fn quadratic_overlay(
    grid: &RectGrid,
    values: &[f64],
    eval: &(dyn Fn(Vec2) -> Result<f64> + Sync),
) -> Result<Option<QuadraticOverlay>> {
    let (imin, _) = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("grid has nodes");
    let ix = imin / grid.nz();
    let iz = imin % grid.nz();
    if ix == 0 || iz == 0 || ix + 1 == grid.nx() || iz + 1 == grid.nz() {
        return Ok(None);
    }
    let h = 0.25 * grid.min_step();
    let mut r = grid.node(ix, iz);
    let mut fit = None;
    for _ in 0..20 {
        let f = |dx: f64, dz: f64| eval(r + Vec2::new(dx, dz));
        let f0 = f(0.0, 0.0)?;
        let (fxp, fxm, fzp, fzm) = (f(h, 0.0)?, f(-h, 0.0)?, f(0.0, h)?, f(0.0, -h)?);
        let gx = (fxp - fxm) / (2.0 * h);
        let gz = (fzp - fzm) / (2.0 * h);
        let hxx = (fxp - 2.0 * f0 + fxm) / (h * h);
        let hzz = (fzp - 2.0 * f0 + fzm) / (h * h);
        let hxz = (f(h, h)? - f(h, -h)? - f(-h, h)? + f(-h, -h)?) / (4.0 * h * h);
        let det = hxx * hzz - hxz * hxz;
        if !(det > 0.0 && hxx > 0.0) {
            return Ok(None);
        }
        let step = Vec2::new(-(hzz * gx - hxz * gz) / det, -(hxx * gz - hxz * gx) / det);
        let gamma_min = f0 + 0.5 * (gx * step.x + gz * step.z);
        fit = Some((r + step, gamma_min, [[hxx, hxz], [hxz, hzz]], det));
        r += step;
        if step.norm() < 1e-3 * h {
            break;
        }
        if !grid.contains(r) {
            return Ok(None);
        }
    }
    Ok(fit.map(|(center, gamma_min, hessian, det)| QuadraticOverlay {
        center,
        gamma_min,
        hessian,
        area: if gamma_min < 0.0 {
            2.0 * std::f64::consts::PI * (-gamma_min) / det.sqrt()
        } else {
            0.0
        },
    }))
}

/// Unstable area at each power of `powers`.
pub fn area_curve<F: ForceField + ?Sized>(
    params: &ModalParams,
    field: &F,
    grid: &RectGrid,
    powers: &[f64],
) -> Result<Vec<f64>> {
    powers
        .iter()
        .map(|&p| stability_map(params, field, grid, p).map(|m| m.area))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GaussianBeamField, LinearField, UM};

    fn flutter_gradient(params: &ModalParams, p_star: f64) -> GradientMatrix {
        let delta = params.omega2.powi(2) - params.omega1.powi(2);
        let g = (0.25 * delta * delta + (params.omega_bar() * params.gamma).powi(2)).sqrt() * params.mass;
        GradientMatrix::from_modal_frame(params, [[0.0, g], [-g, 0.0]], p_star)
    }

    #[test]
    fn negative_fraction_cases() {
        assert_eq!(negative_fraction([1.0; 4]), 0.0);
        assert_eq!(negative_fraction([-1.0; 4]), 1.0);
        assert!((negative_fraction([-1.0, 1.0, 1.0, -1.0]) - 0.5).abs() < 1e-15);
        assert!((negative_fraction([-1.0, 1.0, 3.0, 1.0]) - 0.125).abs() < 1e-15);
    }

    #[test]
    fn antisymmetric_threshold_matches_closed_form() {
        let p = ModalParams::paper_device();
        let p_star = 150e-6;
        let g = flutter_gradient(&p, p_star);
        let t = threshold_power_for_gradient(&p, &g, 1e-3).unwrap().unwrap();
        assert!((t / p_star - 1.0).abs() < 1e-3, "{t}");
    }

    #[test]
    fn conservative_field_has_no_threshold() {
        let p = ModalParams::paper_device();
        let g = GradientMatrix::from_array([[1e-6, 3e-7], [3e-7, -2e-7]], 1e-4);
        assert_eq!(threshold_power_for_gradient(&p, &g, 1e-3).unwrap(), None);
        assert!(threshold_power_for_gradient(&p, &g, 0.0).is_err());
    }

    #[test]
    fn linear_field_map_is_uniform() {
        let p = ModalParams::paper_device();
        let g = flutter_gradient(&p, 100e-6);
        let field = LinearField::new(Vec2::ZERO, g.as_array(), 100e-6);
        let grid = RectGrid::uniform((-UM, UM), 5, (-UM, UM), 5).unwrap();
        let below = stability_map(&p, &field, &grid, 90e-6).unwrap();
        assert_eq!(below.area, 0.0);
        assert!(below.contours.is_empty());
        let above = stability_map(&p, &field, &grid, 110e-6).unwrap();
        assert_eq!(above.unstable_nodes(), 25);
        assert!((above.area - 4.0 * UM * UM).abs() < 1e-24);
    }

    #[test]
    fn threshold_field_wrapper() {
        let p = ModalParams::paper_device();
        let g = flutter_gradient(&p, 100e-6);
        let field = LinearField::new(Vec2::ZERO, g.as_array(), 100e-6);
        let t = threshold_power(&p, &field, Vec2::ZERO, 1e-3).unwrap().unwrap();
        assert!((t / 100e-6 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn contour_of_a_disc() {
        // gamma_minus = r^2 - R^2 sampled on a grid: one closed loop, area ~ pi R^2
        let grid = RectGrid::uniform((-1.0, 1.0), 81, (-1.0, 1.0), 81).unwrap();
        let radius = 0.6;
        let f = |r: Vec2| r.dot(r) - radius * radius;
        let values: Vec<f64> = (0..grid.nx())
            .flat_map(|ix| (0..grid.nz()).map(move |iz| (ix, iz)))
            .map(|(ix, iz)| f(grid.node(ix, iz)))
            .collect();
        let eval = |r: Vec2| Ok(f(r));
        let area = unstable_area(&grid, &values, &eval).unwrap();
        let exact = std::f64::consts::PI * radius * radius;
        assert!((area / exact - 1.0).abs() < 1e-3, "{area}");
        let lines = contour_lines(&grid, &values);
        assert_eq!(lines.len(), 1);
        let line = &lines[0];
        assert_eq!(line.first(), line.last());
        assert!(line.iter().all(|r| (r.norm() - radius).abs() < 1e-3));
        let overlay = quadratic_overlay(&grid, &values, &eval).unwrap().unwrap();
        assert!((overlay.area / exact - 1.0).abs() < 1e-6);
        assert!(overlay.center.norm() < 1e-9);
    }

    #[test]
    fn gaussian_beam_map_is_symmetric_at_zero_tilt() {
        let mut p = ModalParams::paper_device();
        p.theta1 = 0.0;
        let field = GaussianBeamField::green_532();
        let grid = RectGrid::uniform((-0.8 * UM, 0.8 * UM), 17, (-1.5 * UM, 1.5 * UM), 9).unwrap();
        let map = stability_map(&p, &field, &grid, 1e-3).unwrap();
        for ix in 0..grid.nx() {
            for iz in 0..grid.nz() {
                let a = map.reports[grid.index(ix, iz)].gamma_minus;
                let b = map.reports[grid.index(grid.nx() - 1 - ix, iz)].gamma_minus;
                assert!((a - b).abs() <= 1e-6 * p.gamma.max(a.abs()), "{a} {b}");
            }
        }
    }
}
