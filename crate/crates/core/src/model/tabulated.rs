use std::io::Read;
use std::ops::{Add, Mul};

use serde::{Deserialize, Serialize};

use super::{ForceField, Vec2};
use crate::error::{Error, Result};

/// Rectilinear grid with strictly increasing axes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RectGrid {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
}

impl RectGrid {
    pub fn new(x: Vec<f64>, z: Vec<f64>) -> Result<Self> {
        for (name, axis) in [("x_grid", &x), ("z_grid", &z)] {
            if axis.len() < 2 {
                return Err(Error::invalid(name, "needs at least 2 nodes"));
            }
            if axis.windows(2).any(|w| !(w[1] > w[0])) || axis.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(name, "must be finite and strictly increasing"));
            }
        }
        Ok(Self { x, z })
    }

    /// Uniform grid with `nx * nz` nodes spanning the closed ranges.
    pub fn uniform(x_range: (f64, f64), nx: usize, z_range: (f64, f64), nz: usize) -> Result<Self> {
        let axis = |(a, b): (f64, f64), n: usize| -> Vec<f64> {
            (0..n).map(|i| a + (b - a) * i as f64 / (n.max(2) - 1) as f64).collect()
        };
        Self::new(axis(x_range, nx), axis(z_range, nz))
    }

    pub fn nx(&self) -> usize {
        self.x.len()
    }

    pub fn nz(&self) -> usize {
        self.z.len()
    }

    pub fn len(&self) -> usize {
        self.nx() * self.nz()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major index, x outer.
    pub fn index(&self, ix: usize, iz: usize) -> usize {
        ix * self.nz() + iz
    }

    pub fn node(&self, ix: usize, iz: usize) -> Vec2 {
        Vec2::new(self.x[ix], self.z[iz])
    }

    pub fn nodes(&self) -> impl Iterator<Item = Vec2> + '_ {
        self.x
            .iter()
            .flat_map(move |&x| self.z.iter().map(move |&z| Vec2::new(x, z)))
    }

    pub fn contains(&self, r: Vec2) -> bool {
        r.x >= self.x[0] && r.x <= *self.x.last().unwrap() && r.z >= self.z[0] && r.z <= *self.z.last().unwrap()
    }

    pub fn min_step(&self) -> f64 {
        self.x
            .windows(2)
            .chain(self.z.windows(2))
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn step_x(&self) -> f64 {
        (self.x.last().unwrap() - self.x[0]) / (self.nx() - 1) as f64
    }

    pub fn step_z(&self) -> f64 {
        (self.z.last().unwrap() - self.z[0]) / (self.nz() - 1) as f64
    }

    /// Cell indices and fractional offsets of `r`.
    fn locate(&self, r: Vec2) -> Result<(usize, usize, f64, f64)> {
        if !self.contains(r) || !r.is_finite() {
            return Err(Error::OutOfRange { x: r.x, z: r.z });
        }
        let cell = |axis: &[f64], v: f64| {
            let i = axis.partition_point(|&a| a <= v).saturating_sub(1).min(axis.len() - 2);
            let t = (v - axis[i]) / (axis[i + 1] - axis[i]);
            (i, t)
        };
        let (ix, tx) = cell(&self.x, r.x);
        let (iz, tz) = cell(&self.z, r.z);
        Ok((ix, iz, tx, tz))
    }

    /// Bilinear interpolation of `values` (row-major, x outer).
    pub fn interpolate<T>(&self, values: &[T], r: Vec2) -> Result<T>
    where
        T: Copy + Add<Output = T> + Mul<f64, Output = T>,
    {
        let (ix, iz, tx, tz) = self.locate(r)?;
        let v = |i, j| values[self.index(i, j)];
        Ok(v(ix, iz) * ((1.0 - tx) * (1.0 - tz))
            + v(ix + 1, iz) * (tx * (1.0 - tz))
            + v(ix, iz + 1) * ((1.0 - tx) * tz)
            + v(ix + 1, iz + 1) * (tx * tz))
    }
}

/// Force field tabulated on a grid at `ref_power`, bilinearly interpolated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabulatedField {
    pub grid: RectGrid,
    pub values: Vec<Vec2>,
    pub ref_power: f64,
}

impl TabulatedField {
    pub fn new(grid: RectGrid, values: Vec<Vec2>, ref_power: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::invalid(
                "force_values",
                format!("{} values for a {}x{} grid", values.len(), grid.nx(), grid.nz()),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("force_values", "must be finite"));
        }
        if !(ref_power > 0.0) {
            return Err(Error::invalid("ref_power", "must be > 0"));
        }
        Ok(Self {
            grid,
            values,
            ref_power,
        })
    }

    /// Sample any field on `grid` at `power`.
    pub fn sample<F: ForceField + ?Sized>(field: &F, grid: RectGrid, power: f64) -> Result<Self> {
        let values = grid
            .nodes()
            .map(|r| field.force(r, power))
            .collect::<Result<Vec<_>>>()?;
        Self::new(grid, values, power)
    }

    /// Load from CSV with header `x_um,z_um,Fx_<unit>,Fz_<unit>`, where the
    /// unit suffix is one of `N`, `pN`, `fN`, `aN`.
    pub fn from_csv<R: Read>(reader: R, ref_power: f64) -> Result<Self> {
        let table = read_grid_csv(reader, 2)?;
        let scales = table
            .value_headers
            .iter()
            .enumerate()
            .map(|(i, h)| {
                force_unit_scale(h).ok_or_else(|| Error::Grid {
                    line: 1,
                    reason: format!("column {} `{h}` has no recognised force unit suffix", i + 3),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let values = table
            .values
            .iter()
            .map(|v| Vec2::new(v[0] * scales[0], v[1] * scales[1]))
            .collect();
        Self::new(table.grid, values, ref_power)
    }

    pub fn force_at(&self, r: Vec2, power: f64) -> Result<Vec2> {
        Ok(self.grid.interpolate(&self.values, r)? * (power / self.ref_power))
    }
}

impl ForceField for TabulatedField {
    fn force(&self, r: Vec2, power: f64) -> Result<Vec2> {
        self.force_at(r, power)
    }

    fn gradient_step(&self) -> f64 {
        self.grid.min_step()
    }

    fn contains(&self, r: Vec2) -> bool {
        self.grid.contains(r)
    }
}

/// DC differential transmission `V(r0)` (V) on a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransmissionMap {
    pub grid: RectGrid,
    pub values: Vec<f64>,
}

impl TransmissionMap {
    pub fn new(grid: RectGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::invalid(
                "values",
                format!("{} values for a {}x{} grid", values.len(), grid.nx(), grid.nz()),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("values", "must be finite"));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: RectGrid, f: impl Fn(Vec2) -> f64) -> Result<Self> {
        let values = grid.nodes().map(f).collect();
        Self::new(grid, values)
    }

    /// Odd-in-x readout model `V0 (x/w0) exp(-x^2/w0^2 - z^2/(2 zR^2))`.
    pub fn synthetic(grid: RectGrid, v0: f64, waist: f64, rayleigh: f64) -> Result<Self> {
        Self::from_fn(grid, |r| {
            v0 * (r.x / waist) * (-(r.x * r.x) / (waist * waist) - r.z * r.z / (2.0 * rayleigh * rayleigh)).exp()
        })
    }

    /// Load from CSV with header `x_um,z_um,<value>`; values in volts.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let table = read_grid_csv(reader, 1)?;
        let values = table.values.into_iter().map(|v| v[0]).collect();
        Self::new(table.grid, values)
    }

    pub fn value(&self, r: Vec2) -> Result<f64> {
        self.grid.interpolate(&self.values, r)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }
}

fn force_unit_scale(header: &str) -> Option<f64> {
    let unit = header.rsplit('_').next()?;
    match unit {
        "N" => Some(1.0),
        "pN" => Some(1e-12),
        "fN" => Some(1e-15),
        "aN" => Some(1e-18),
        _ => None,
    }
}

struct GridTable {
    grid: RectGrid,
    value_headers: Vec<String>,
    values: Vec<Vec<f64>>,
}

/// Parse a row-major grid CSV (x outer, z inner, both in micrometres).
/// Lines starting with `#` are comments.
fn read_grid_csv<R: Read>(reader: R, n_values: usize) -> Result<GridTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let grid_err = |line: usize, reason: String| Error::Grid { line, reason };

    let headers = rdr.headers().map_err(|e| grid_err(1, e.to_string()))?.clone();
    let header_line = headers.position().map_or(1, |p| p.line() as usize);
    if headers.len() != 2 + n_values {
        return Err(grid_err(
            header_line,
            format!("expected {} columns, found {}", 2 + n_values, headers.len()),
        ));
    }
    if &headers[0] != "x_um" || &headers[1] != "z_um" {
        return Err(grid_err(header_line, "header must start with `x_um,z_um`".into()));
    }
    let value_headers = headers.iter().skip(2).map(str::to_owned).collect();

    let mut rows: Vec<(usize, f64, f64, Vec<f64>)> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            grid_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != 2 + n_values {
            return Err(grid_err(
                line,
                format!("expected {} fields, found {}", 2 + n_values, record.len()),
            ));
        }
        let parsed = record
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| grid_err(line, format!("`{s}` is not a finite number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push((line, parsed[0] * 1e-6, parsed[1] * 1e-6, parsed[2..].to_vec()));
    }
    if rows.is_empty() {
        return Err(grid_err(header_line, "no data rows".into()));
    }

    let x0 = rows[0].1;
    let nz = rows.iter().take_while(|r| r.1 == x0).count();
    if nz < 2 {
        return Err(grid_err(rows[0].0, "z axis needs at least 2 nodes".into()));
    }
    if !rows.len().is_multiple_of(nz) {
        return Err(grid_err(
            rows.last().unwrap().0,
            format!("{} rows is not a multiple of {nz} z nodes", rows.len()),
        ));
    }
    let nx = rows.len() / nz;
    if nx < 2 {
        return Err(grid_err(rows.last().unwrap().0, "x axis needs at least 2 nodes".into()));
    }
    let z_axis: Vec<f64> = rows[..nz].iter().map(|r| r.2).collect();
    let mut x_axis = Vec::with_capacity(nx);
    for (k, (line, x, z, _)) in rows.iter().enumerate() {
        let (ix, iz) = (k / nz, k % nz);
        if iz == 0 {
            if let Some(&prev) = x_axis.last() {
                if !(*x > prev) {
                    return Err(grid_err(*line, "x must be strictly increasing".into()));
                }
            }
            x_axis.push(*x);
        } else if *x != x_axis[ix] {
            return Err(grid_err(*line, format!("expected x = {} um", x_axis[ix] * 1e6)));
        }
        if ix == 0 {
            if iz > 0 && !(*z > z_axis[iz - 1]) {
                return Err(grid_err(*line, "z must be strictly increasing".into()));
            }
        } else if *z != z_axis[iz] {
            return Err(grid_err(*line, format!("expected z = {} um", z_axis[iz] * 1e6)));
        }
    }
    let grid = RectGrid::new(x_axis, z_axis).map_err(|e| grid_err(header_line, e.to_string()))?;
    Ok(GridTable {
        grid,
        value_headers,
        values: rows.into_iter().map(|r| r.3).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GaussianBeamField;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_grid() -> RectGrid {
        RectGrid::new(vec![0.0, 1e-6, 3e-6], vec![-1e-6, 0.0, 2e-6]).unwrap()
    }

    #[test]
    fn exact_at_nodes() {
        let grid = small_grid();
        let values: Vec<Vec2> = (0..9).map(|k| Vec2::new(k as f64, -(k as f64) * 2.0)).collect();
        let field = TabulatedField::new(grid.clone(), values.clone(), 1e-4).unwrap();
        for ix in 0..3 {
            for iz in 0..3 {
                let v = field.force_at(grid.node(ix, iz), 2e-4).unwrap();
                assert_eq!(v, values[grid.index(ix, iz)] * 2.0);
            }
        }
    }

    #[test]
    fn constant_table_is_constant() {
        let grid = small_grid();
        let c = Vec2::new(1.5e-15, -3e-15);
        let field = TabulatedField::new(grid, vec![c; 9], 1e-4).unwrap();
        let v = field.force_at(Vec2::new(2.2e-6, 0.7e-6), 1e-4).unwrap();
        assert!((v - c).norm() < 1e-30);
    }

    #[test]
    fn out_of_hull_is_an_error() {
        let field = TabulatedField::new(small_grid(), vec![Vec2::ZERO; 9], 1e-4).unwrap();
        assert!(matches!(
            field.force_at(Vec2::new(-1e-9, 0.0), 1e-4),
            Err(Error::OutOfRange { .. })
        ));
        assert!(field.force_at(Vec2::new(3e-6, 2e-6), 1e-4).is_ok());
    }

    #[test]
    fn sampled_gaussian_matches_analytic_model() {
        let beam = GaussianBeamField::green_532();
        let grid = RectGrid::uniform((-0.8e-6, 0.8e-6), 100, (-1.5e-6, 1.5e-6), 100).unwrap();
        let table = TabulatedField::sample(&beam, grid, beam.ref_power).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let r = Vec2::new(rng.random_range(-0.8e-6..0.8e-6), rng.random_range(-1.5e-6..1.5e-6));
            let a = beam.force_at(r, 50e-6);
            let b = table.force_at(r, 50e-6).unwrap();
            worst = worst.max((a - b).norm() / a.norm());
        }
        assert!(worst < 0.01, "worst relative error {worst}");
    }

    #[test]
    fn csv_round_trip_and_units() {
        let text = "# provenance\nx_um,z_um,Fx_fN,Fz_fN\n0,0,1,2\n0,1,3,4\n1,0,5,6\n1,1,7,8\n";
        let field = TabulatedField::from_csv(text.as_bytes(), 1e-4).unwrap();
        assert_eq!(field.grid.x, vec![0.0, 1e-6]);
        let v = field.force_at(Vec2::new(1e-6, 1e-6), 1e-4).unwrap();
        assert!((v.x - 7e-15).abs() < 1e-28 && (v.z - 8e-15).abs() < 1e-28);
    }

    #[test]
    fn malformed_csv_reports_line() {
        let text = "x_um,z_um,V\n0,0,1\n0,1,1\n1,0,1\n1,2,1\n";
        match TransmissionMap::from_csv(text.as_bytes()) {
            Err(Error::Grid { line, .. }) => assert_eq!(line, 5),
            other => panic!("unexpected {other:?}"),
        }
        let text = "x_um,z_um,V\n0,0,1\n0,1,abc\n";
        match TransmissionMap::from_csv(text.as_bytes()) {
            Err(Error::Grid { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let text = "x_um,z_um,V\n0,0,1\n0,1,1\n0,2,1\n1,0,1\n";
        assert!(matches!(
            TransmissionMap::from_csv(text.as_bytes()),
            Err(Error::Grid { .. })
        ));
    }
}
