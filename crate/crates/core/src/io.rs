//! CSV and JSON writers for simulation and analysis artifacts.
//!
//! Every file starts with a provenance record: a `# optomech ...` comment line
//! for CSV, a top-level `provenance` object for JSON. Numbers are written in
//! Rust's shortest round-trip form, so equal inputs give byte-identical files.

use std::f64::consts::TAU;
use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::backaction::StabilityMap;
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::model::{Vec2, UM};
use crate::reconstruct::{ForceMap, SplittingComparison};
use crate::spectral::SpectrumEstimate;

const FN: f64 = 1e-15;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    /// Hex digest of the normalised configuration.
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new(config_hash: impl Into<String>, seed: u64) -> Self {
        Self {
            tool: "optomech".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_hash: config_hash.into(),
            seed,
        }
    }

    /// CSV header line, without the newline.
    pub fn header_line(&self) -> String {
        format!(
            "# {} {} config_hash={} seed={}",
            self.tool, self.version, self.config_hash, self.seed
        )
    }
}

fn csv_writer<W: Write>(mut w: W, prov: &Provenance, columns: &[&str]) -> Result<csv::Writer<W>> {
    writeln!(w, "{}", prov.header_line())?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(columns).map_err(csv_error)?;
    Ok(out)
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

fn num(v: f64) -> String {
    v.to_string()
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// `t_s,x_m,z_m,vx_m_s,vz_m_s`, keeping one sample in `every`. Velocity
/// columns are empty when the trajectory has none.
pub fn write_trajectory_csv<W: Write>(w: W, prov: &Provenance, traj: &Trajectory, every: usize) -> Result<()> {
    if every == 0 {
        return Err(Error::invalid("export_every", "must be >= 1"));
    }
    let mut out = csv_writer(w, prov, &["t_s", "x_m", "z_m", "vx_m_s", "vz_m_s"])?;
    for k in (0..traj.len()).step_by(every) {
        let p = traj.positions[k];
        let v = traj.velocities.get(k);
        out.write_record([
            num(traj.time(k)),
            num(p.x),
            num(p.z),
            opt(v.map(|v| v.x)),
            opt(v.map(|v| v.z)),
        ])
        .map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

/// Sidecar describing a trajectory run, including where it halted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryInfo {
    pub samples: usize,
    pub sample_dt_s: f64,
    pub integration_dt_s: f64,
    pub export_every: usize,
    pub rest_position_m: Vec2,
    pub diverged: bool,
    pub halted_at_s: Option<f64>,
}

impl TrajectoryInfo {
    pub fn new(traj: &Trajectory, export_every: usize) -> Self {
        Self {
            samples: traj.len(),
            sample_dt_s: traj.dt,
            integration_dt_s: traj.integration_dt,
            export_every,
            rest_position_m: traj.r0,
            diverged: traj.diverged(),
            halted_at_s: traj.halted_at,
        }
    }
}

/// `freq_Hz,psd_m2_per_Hz` (one-sided).
pub fn write_spectrum_csv<W: Write>(w: W, prov: &Provenance, spec: &SpectrumEstimate) -> Result<()> {
    let mut out = csv_writer(w, prov, &["freq_Hz", "psd_m2_per_Hz"])?;
    for (f, s) in spec.freqs.iter().zip(&spec.psd) {
        out.write_record([num(*f), num(*s)]).map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

/// `x_um,z_um,omega_plus_Hz,omega_minus_Hz,gamma_plus_Hz,gamma_minus_Hz,unstable`.
/// Rates are divided by `2 pi`.
pub fn write_stability_csv<W: Write>(w: W, prov: &Provenance, map: &StabilityMap) -> Result<()> {
    let mut out = csv_writer(
        w,
        prov,
        &[
            "x_um",
            "z_um",
            "omega_plus_Hz",
            "omega_minus_Hz",
            "gamma_plus_Hz",
            "gamma_minus_Hz",
            "unstable",
        ],
    )?;
    for (r, rep) in map.grid.nodes().zip(&map.reports) {
        out.write_record([
            num(r.x / UM),
            num(r.z / UM),
            num(rep.omega_plus / TAU),
            num(rep.omega_minus / TAU),
            num(rep.gamma_plus / TAU),
            num(rep.gamma_minus / TAU),
            (rep.unstable as u8).to_string(),
        ])
        .map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

/// `x_um,z_um,F_fN,angle_deg,phase_deg,sigma_F_fN,sigma_angle_deg,snr`; gap
/// nodes have empty value fields.
pub fn write_force_map_csv<W: Write>(w: W, prov: &Provenance, map: &ForceMap) -> Result<()> {
    let mut out = csv_writer(
        w,
        prov,
        &[
            "x_um",
            "z_um",
            "F_fN",
            "angle_deg",
            "phase_deg",
            "sigma_F_fN",
            "sigma_angle_deg",
            "snr",
        ],
    )?;
    for node in &map.nodes {
        let r = node.position;
        let m = node.measurement;
        out.write_record([
            num(r.x / UM),
            num(r.z / UM),
            opt(m.map(|m| m.magnitude / FN)),
            opt(m.map(|m| m.direction.to_degrees())),
            opt(m.map(|m| m.phase.to_degrees())),
            opt(m.map(|m| m.sigma_magnitude / FN)),
            opt(m.map(|m| m.sigma_direction.to_degrees())),
            opt(m.map(|m| m.snr)),
        ])
        .map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

/// `x_um,z_um,Fx_fN,Fz_fN` for the ground-truth field of a force map.
pub fn write_truth_csv<W: Write>(w: W, prov: &Provenance, map: &ForceMap) -> Result<()> {
    let mut out = csv_writer(w, prov, &["x_um", "z_um", "Fx_fN", "Fz_fN"])?;
    for node in &map.nodes {
        let r = node.position;
        out.write_record([
            num(r.x / UM),
            num(r.z / UM),
            opt(node.truth.map(|t| t.x / FN)),
            opt(node.truth.map(|t| t.z / FN)),
        ])
        .map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

/// `x_um,z_um,direct_Hz,predicted_Hz,excluded` for a splitting comparison.
pub fn write_splitting_csv<W: Write>(w: W, prov: &Provenance, cmp: &SplittingComparison) -> Result<()> {
    let mut out = csv_writer(w, prov, &["x_um", "z_um", "direct_Hz", "predicted_Hz", "excluded"])?;
    for n in &cmp.nodes {
        out.write_record([
            num(n.position.x / UM),
            num(n.position.z / UM),
            opt(n.direct.map(|d| d / TAU)),
            num(n.predicted / TAU),
            n.excluded.clone().unwrap_or_default(),
        ])
        .map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

/// Two-column table with a free header, e.g. an area-versus-power curve.
pub fn write_table_csv<W: Write>(w: W, prov: &Provenance, columns: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut out = csv_writer(w, prov, columns)?;
    for row in rows {
        if row.len() != columns.len() {
            return Err(Error::invalid("rows", format!("expected {} columns", columns.len())));
        }
        out.write_record(row.iter().map(|v| num(*v))).map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

/// Pretty JSON object: `provenance` first, then the fields of `value`
/// (which must serialise to an object), followed by a newline.
pub fn write_json<W: Write, T: Serialize>(mut w: W, prov: &Provenance, value: &T) -> Result<()> {
    let body = serde_json::to_value(value)?;
    let Value::Object(fields) = body else {
        return Err(Error::invalid("value", "must serialise to a JSON object"));
    };
    let mut obj = Map::new();
    obj.insert("provenance".into(), serde_json::to_value(prov)?);
    obj.extend(fields);
    serde_json::to_writer_pretty(&mut w, &Value::Object(obj))?;
    writeln!(w)?;
    Ok(())
}

/// Contour polygons in micrometres, `[[[x, z], ...], ...]`.
pub fn contours_um(contours: &[Vec<Vec2>]) -> Vec<Vec<[f64; 2]>> {
    contours
        .iter()
        .map(|c| c.iter().map(|p| [p.x / UM, p.z / UM]).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Environment, ModalParams};
    use crate::spectral::analytic_projected_psd;

    fn prov() -> Provenance {
        Provenance::new("abc123", 7)
    }

    #[test]
    fn spectrum_csv_layout() {
        let p = ModalParams::paper_device();
        let s = analytic_projected_psd(&p, p.e1(), &[113e3, 113.1e3], &Environment::room()).unwrap();
        let mut buf = Vec::new();
        write_spectrum_csv(&mut buf, &prov(), &s).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            format!("# optomech {} config_hash=abc123 seed=7", env!("CARGO_PKG_VERSION"))
        );
        assert_eq!(lines[1], "freq_Hz,psd_m2_per_Hz");
        assert_eq!(lines.len(), 4);
        let v: f64 = lines[2].split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(v, s.psd[0]);
    }

    #[test]
    fn json_has_provenance_first() {
        #[derive(Serialize)]
        struct S {
            area: f64,
        }
        let mut buf = Vec::new();
        write_json(&mut buf, &prov(), &S { area: 1.5 }).unwrap();
        let v: Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v["provenance"]["seed"], 7);
        assert_eq!(v["area"], 1.5);
        assert!(String::from_utf8(buf)
            .unwrap()
            .trim_start()
            .starts_with("{\n  \"provenance\""));
        assert!(write_json(&mut Vec::new(), &prov(), &3.0).is_err());
    }

    #[test]
    fn table_rejects_ragged_rows() {
        let mut buf = Vec::new();
        assert!(write_table_csv(&mut buf, &prov(), &["a", "b"], &[vec![1.0]]).is_err());
    }
}
