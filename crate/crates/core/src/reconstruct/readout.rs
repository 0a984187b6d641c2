use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{TransmissionMap, Vec2};

/// Readout gradient `beta = grad V` at a working point (V/m).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementVector {
    pub beta: Vec2,
    pub origin: Vec2,
}

impl MeasurementVector {
    pub fn magnitude(&self) -> f64 {
        self.beta.norm()
    }

    /// Unit readout direction `e_beta`.
    pub fn direction(&self) -> Vec2 {
        self.beta * (1.0 / self.beta.norm())
    }
}

/// Central-difference gradient of the map at `r0`, with the grid's smallest
/// step. `floor` (V/m) is the smallest usable `|beta|`.
pub fn measurement_vector(map: &TransmissionMap, r0: Vec2, floor: f64) -> Result<MeasurementVector> {
    let h = map.grid.min_step();
    let dx = Vec2::new(h, 0.0);
    let dz = Vec2::new(0.0, h);
    for p in [r0 + dx, r0 - dx, r0 + dz, r0 - dz] {
        if !map.grid.contains(p) {
            return Err(Error::OutOfRange { x: r0.x, z: r0.z });
        }
    }
    let beta = Vec2::new(
        (map.value(r0 + dx)? - map.value(r0 - dx)?) / (2.0 * h),
        (map.value(r0 + dz)? - map.value(r0 - dz)?) / (2.0 * h),
    );
    let magnitude = beta.norm();
    if !(magnitude > floor) {
        return Err(Error::DegenerateReadout { magnitude, floor });
    }
    Ok(MeasurementVector { beta, origin: r0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{RectGrid, UM};

    fn synthetic() -> TransmissionMap {
        let grid = RectGrid::uniform((-1.2 * UM, 1.2 * UM), 241, (-2.0 * UM, 2.0 * UM), 201).unwrap();
        TransmissionMap::synthetic(grid, 1.0, 0.55 * UM, 1.8 * UM).unwrap()
    }

    #[test]
    fn gradient_on_axis() {
        let map = synthetic();
        let m = measurement_vector(&map, Vec2::ZERO, 1e-3).unwrap();
        let expect = 1.0 / (0.55 * UM);
        assert!((m.beta.x / expect - 1.0).abs() < 2e-3, "{:?}", m.beta);
        assert!(m.beta.z.abs() < 1e-9 * expect);
    }

    #[test]
    fn uniform_map_is_degenerate() {
        let grid = RectGrid::uniform((-UM, UM), 11, (-UM, UM), 11).unwrap();
        let map = TransmissionMap::from_fn(grid, |_| 0.4).unwrap();
        assert!(matches!(
            measurement_vector(&map, Vec2::ZERO, 1.0),
            Err(Error::DegenerateReadout { .. })
        ));
    }

    #[test]
    fn edge_point_is_rejected() {
        let map = synthetic();
        assert!(matches!(
            measurement_vector(&map, Vec2::new(1.2 * UM, 0.0), 0.0),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn direction_turns_smoothly_around_the_axis() {
        let map = synthetic();
        let n = 360;
        let radius = 0.25 * UM;
        let angles: Vec<f64> = (0..=n)
            .map(|k| {
                let t = std::f64::consts::TAU * k as f64 / n as f64;
                measurement_vector(&map, Vec2::from_angle(t) * radius, 0.0)
                    .unwrap()
                    .beta
                    .angle()
            })
            .collect();
        for w in angles.windows(2) {
            let mut d = (w[1] - w[0]).abs();
            d = d.min(std::f64::consts::TAU - d);
            assert!(d.to_degrees() < 10.0, "{}", d.to_degrees());
        }
    }

    #[test]
    fn gauge_scaling() {
        let map = synthetic();
        let a = measurement_vector(&map, Vec2::new(0.2 * UM, 0.3 * UM), 0.0).unwrap();
        let b = measurement_vector(&map.scaled(-3.0), Vec2::new(0.2 * UM, 0.3 * UM), 0.0).unwrap();
        assert!((b.beta.x + 3.0 * a.beta.x).abs() < 1e-12 * a.magnitude());
        assert!((b.direction().dot(a.direction()) + 1.0).abs() < 1e-12);
    }
}
