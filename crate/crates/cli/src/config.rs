//! Run configuration: TOML with unit-suffixed keys, resolved to SI.

use std::f64::consts::{FRAC_PI_4, TAU};
use std::path::{Path, PathBuf};

use optomech::model::{RectGrid, UM};
use optomech::reconstruct::{ProtocolConfig, SplittingConfig};
use optomech::{Environment, GaussianBeamField, ModalParams};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

const FG: f64 = 1e-18;
const UW: f64 = 1e-6;
const NM: f64 = 1e-9;
const FN: f64 = 1e-15;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub device: DeviceSection,
    pub beam: BeamSection,
    pub environment: EnvironmentSection,
    pub simulation: SimulationSection,
    pub psd: PsdSection,
    pub grid: GridSection,
    pub readout: ReadoutSection,
    pub protocol: ProtocolSection,
    pub stability: StabilitySection,
    pub splitting: SplittingSection,
    pub assert: AssertSection,
    pub output: OutputSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeviceSection {
    /// `paper`, `instability` or `scaled`; explicit keys override it.
    pub preset: String,
    pub mass_fg: Option<f64>,
    pub f1_khz: Option<f64>,
    pub f2_khz: Option<f64>,
    pub quality: Option<f64>,
    pub theta1_deg: Option<f64>,
}

impl Default for DeviceSection {
    fn default() -> Self {
        Self {
            preset: "paper".into(),
            mass_fg: None,
            f1_khz: None,
            f2_khz: None,
            quality: None,
            theta1_deg: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BeamSection {
    /// `green_532`, `red_633` or `tabulated`.
    pub preset: String,
    pub wavelength_nm: Option<f64>,
    pub waist_um: Option<f64>,
    pub peak_force_fn: Option<f64>,
    pub ref_power_uw: Option<f64>,
    /// CSV `x_um,z_um,Fx_fN,Fz_fN`, relative to the config file.
    pub path: Option<PathBuf>,
}

impl Default for BeamSection {
    fn default() -> Self {
        Self {
            preset: "green_532".into(),
            wavelength_nm: None,
            waist_um: None,
            peak_force_fn: None,
            ref_power_uw: None,
            path: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvironmentSection {
    pub temperature_k: f64,
    pub detection_floor_m2_per_hz: f64,
}

impl Default for EnvironmentSection {
    fn default() -> Self {
        Self {
            temperature_k: 300.0,
            detection_floor_m2_per_hz: 0.0,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    pub seed: u64,
    pub dt_s: Option<f64>,
    pub duration_s: Option<f64>,
    /// Used when `duration_s` is absent, in units of `1 / gamma`.
    pub duration_damping_times: f64,
    pub decimation: usize,
    pub export_every: usize,
    pub power_uw: f64,
    pub x_um: f64,
    pub z_um: f64,
    pub initial_x_nm: f64,
    pub initial_z_nm: f64,
    /// Default: halfway between the eigendirections.
    pub readout_angle_deg: Option<f64>,
    pub segments: usize,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            seed: 1,
            dt_s: None,
            duration_s: None,
            duration_damping_times: 2000.0,
            decimation: 10,
            export_every: 100,
            power_uw: 0.0,
            x_um: 0.0,
            z_um: 0.0,
            initial_x_nm: 0.0,
            initial_z_nm: 0.0,
            readout_angle_deg: None,
            segments: 200,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PsdSection {
    pub margin_linewidths: f64,
    pub points_per_linewidth: f64,
}

impl Default for PsdSection {
    fn default() -> Self {
        Self {
            margin_linewidths: 20.0,
            points_per_linewidth: 20.0,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub x_min_um: f64,
    pub x_max_um: f64,
    pub nx: usize,
    pub z_min_um: f64,
    pub z_max_um: f64,
    pub nz: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            x_min_um: -1.0,
            x_max_um: 1.0,
            nx: 20,
            z_min_um: -2.0,
            z_max_um: 2.0,
            nz: 20,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReadoutSection {
    /// `synthetic` or `tabulated`.
    pub kind: String,
    pub v0_v: f64,
    /// Default: the beam waist and Rayleigh range.
    pub waist_um: Option<f64>,
    pub rayleigh_um: Option<f64>,
    /// Sampling step of the synthetic map.
    pub step_nm: f64,
    /// CSV `x_um,z_um,V`, relative to the config file.
    pub path: Option<PathBuf>,
}

impl Default for ReadoutSection {
    fn default() -> Self {
        Self {
            kind: "synthetic".into(),
            v0_v: 1.0,
            waist_um: None,
            rayleigh_um: None,
            step_nm: 10.0,
            path: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolSection {
    pub power_uw: f64,
    pub delta_p_over_p: f64,
    pub span_linewidths: f64,
    pub points_per_linewidth: f64,
    pub bandwidth_hz: Option<f64>,
    pub noise_scale: f64,
    pub readout_floor_v_per_m: f64,
    /// Compare against the configured field as ground truth.
    pub compare: bool,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        let p = ProtocolConfig::default();
        Self {
            power_uw: p.power / UW,
            delta_p_over_p: p.delta_p_over_p,
            span_linewidths: p.span_linewidths,
            points_per_linewidth: p.points_per_linewidth,
            bandwidth_hz: None,
            noise_scale: p.noise_scale,
            readout_floor_v_per_m: p.readout_floor,
            compare: true,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilitySection {
    pub power_uw: f64,
    /// Area-curve powers; empty means 11 steps over `[P*/2, 3 P*]`.
    pub powers_uw: Vec<f64>,
    pub p_max_uw: f64,
}

impl Default for StabilitySection {
    fn default() -> Self {
        Self {
            power_uw: 200.0,
            powers_uw: Vec::new(),
            p_max_uw: 5000.0,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplittingSection {
    pub power_uw: f64,
    pub readout_angle_deg: Option<f64>,
    pub n_segments: usize,
    pub points_per_linewidth: f64,
    pub margin_linewidths: f64,
}

impl Default for SplittingSection {
    fn default() -> Self {
        let c = SplittingConfig::default();
        Self {
            power_uw: 96.0,
            readout_angle_deg: None,
            n_segments: c.n_segments,
            points_per_linewidth: c.points_per_linewidth,
            margin_linewidths: c.margin_linewidths,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct AssertSection {
    /// Relative tolerance on the per-mode variance.
    pub equipartition_tol: f64,
    pub max_rms_angle_deg: f64,
    pub max_rms_magnitude_error: f64,
    pub max_splitting_rms: f64,
}

impl Default for AssertSection {
    fn default() -> Self {
        Self {
            equipartition_tol: 0.05,
            max_rms_angle_deg: 3.0,
            max_rms_magnitude_error: 0.05,
            max_splitting_rms: 0.05,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldSpec {
    Gaussian(GaussianBeamField),
    Tabulated { path: PathBuf, ref_power: f64 },
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReadoutSpec {
    Synthetic {
        v0: f64,
        waist: f64,
        rayleigh: f64,
        step: f64,
    },
    Tabulated {
        path: PathBuf,
    },
}

#[derive(Clone, Debug, Serialize)]
pub struct SimulationSpec {
    pub dt: f64,
    pub duration: f64,
    pub decimation: usize,
    pub export_every: usize,
    pub power: f64,
    pub position: [f64; 2],
    pub initial_displacement: [f64; 2],
    pub readout_angle: f64,
    pub segments: usize,
    pub psd_margin_linewidths: f64,
    pub psd_points_per_linewidth: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilitySpec {
    pub power: f64,
    pub powers: Vec<f64>,
    pub p_max: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SplittingSpec {
    pub power: f64,
    pub config: SplittingConfig,
}

/// Effective configuration in SI units (rad/s, W, m, kg) with defaults
/// resolved. Its JSON form is echoed next to the outputs and hashed.
#[derive(Clone, Debug, Serialize)]
pub struct Resolved {
    pub device: ModalParams,
    pub beam: FieldSpec,
    pub environment: Environment,
    pub simulation: SimulationSpec,
    pub grid: RectGrid,
    pub readout: ReadoutSpec,
    pub protocol: ProtocolConfig,
    pub compare: bool,
    pub stability: StabilitySpec,
    pub splitting: SplittingSpec,
    pub assert: AssertSection,
}

impl Resolved {
    /// Hex SHA-256 of the normalised JSON, truncated to 16 digits.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        let digest = Sha256::digest(&json);
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn check(ok: bool, path: &str, reason: &str) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Validation(format!("{path}: {reason}")))
    }
}

fn positive(v: f64, path: &str) -> Result<(), CliError> {
    check(v > 0.0 && v.is_finite(), path, "must be finite and > 0")
}

fn non_negative(v: f64, path: &str) -> Result<(), CliError> {
    check(v >= 0.0 && v.is_finite(), path, "must be finite and >= 0")
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    /// Validate every field and convert to SI. Relative paths are taken
    /// from `base`.
    pub fn resolve(&self, base: &Path) -> Result<Resolved, CliError> {
        let device = self.resolve_device()?;
        let beam = self.resolve_beam(base)?;

        let e = &self.environment;
        non_negative(e.temperature_k, "environment.temperature_k")?;
        non_negative(e.detection_floor_m2_per_hz, "environment.detection_floor_m2_per_hz")?;
        let environment = Environment {
            temperature: e.temperature_k,
            detection_floor: e.detection_floor_m2_per_hz,
        };

        let s = &self.simulation;
        if let Some(dt) = s.dt_s {
            positive(dt, "simulation.dt_s")?;
        }
        let duration = match s.duration_s {
            Some(d) => d,
            None => s.duration_damping_times / device.gamma,
        };
        let duration_key = if s.duration_s.is_some() {
            "simulation.duration_s"
        } else {
            "simulation.duration_damping_times"
        };
        positive(duration, duration_key)?;
        check(s.decimation >= 1, "simulation.decimation", "must be >= 1")?;
        check(s.export_every >= 1, "simulation.export_every", "must be >= 1")?;
        non_negative(s.power_uw, "simulation.power_uw")?;
        check(s.segments >= 1, "simulation.segments", "must be >= 1")?;
        positive(self.psd.margin_linewidths, "psd.margin_linewidths")?;
        check(
            self.psd.points_per_linewidth >= 2.0,
            "psd.points_per_linewidth",
            "must be >= 2",
        )?;
        let simulation = SimulationSpec {
            dt: s.dt_s.unwrap_or_else(|| optomech::dynamics::max_time_step(&device)),
            duration,
            decimation: s.decimation,
            export_every: s.export_every,
            power: s.power_uw * UW,
            position: [s.x_um * UM, s.z_um * UM],
            initial_displacement: [s.initial_x_nm * NM, s.initial_z_nm * NM],
            readout_angle: s
                .readout_angle_deg
                .map(f64::to_radians)
                .unwrap_or(device.theta1 + FRAC_PI_4),
            segments: s.segments,
            psd_margin_linewidths: self.psd.margin_linewidths,
            psd_points_per_linewidth: self.psd.points_per_linewidth,
        };

        let g = &self.grid;
        check(g.nx >= 2, "grid.nx", "must be >= 2")?;
        check(g.nz >= 2, "grid.nz", "must be >= 2")?;
        check(g.x_max_um > g.x_min_um, "grid.x_max_um", "must exceed grid.x_min_um")?;
        check(g.z_max_um > g.z_min_um, "grid.z_max_um", "must exceed grid.z_min_um")?;
        let grid = RectGrid::uniform(
            (g.x_min_um * UM, g.x_max_um * UM),
            g.nx,
            (g.z_min_um * UM, g.z_max_um * UM),
            g.nz,
        )
        .map_err(|e| CliError::Validation(format!("grid: {e}")))?;

        let readout = self.resolve_readout(base, &beam)?;

        let p = &self.protocol;
        positive(p.power_uw, "protocol.power_uw")?;
        check(
            p.delta_p_over_p > 0.0 && p.delta_p_over_p <= 1.0,
            "protocol.delta_p_over_p",
            "must be in (0, 1]",
        )?;
        non_negative(p.span_linewidths, "protocol.span_linewidths")?;
        check(
            p.points_per_linewidth >= 10.0,
            "protocol.points_per_linewidth",
            "must be >= 10",
        )?;
        if let Some(b) = p.bandwidth_hz {
            positive(b, "protocol.bandwidth_hz")?;
        }
        non_negative(p.noise_scale, "protocol.noise_scale")?;
        non_negative(p.readout_floor_v_per_m, "protocol.readout_floor_v_per_m")?;
        let protocol = ProtocolConfig {
            power: p.power_uw * UW,
            delta_p_over_p: p.delta_p_over_p,
            span_linewidths: p.span_linewidths,
            points_per_linewidth: p.points_per_linewidth,
            bandwidth_hz: Some(p.bandwidth_hz.unwrap_or(device.gamma / (TAU * 20.0))),
            noise_scale: p.noise_scale,
            readout_floor: p.readout_floor_v_per_m,
        };

        let st = &self.stability;
        positive(st.power_uw, "stability.power_uw")?;
        positive(st.p_max_uw, "stability.p_max_uw")?;
        for (i, v) in st.powers_uw.iter().enumerate() {
            non_negative(*v, &format!("stability.powers_uw[{i}]"))?;
        }
        check(
            st.powers_uw.windows(2).all(|w| w[1] > w[0]),
            "stability.powers_uw",
            "must be strictly increasing",
        )?;
        let stability = StabilitySpec {
            power: st.power_uw * UW,
            powers: st.powers_uw.iter().map(|p| p * UW).collect(),
            p_max: st.p_max_uw * UW,
        };

        let sp = &self.splitting;
        non_negative(sp.power_uw, "splitting.power_uw")?;
        check(sp.n_segments >= 1, "splitting.n_segments", "must be >= 1")?;
        check(
            sp.points_per_linewidth >= 2.0,
            "splitting.points_per_linewidth",
            "must be >= 2",
        )?;
        positive(sp.margin_linewidths, "splitting.margin_linewidths")?;
        let splitting = SplittingSpec {
            power: sp.power_uw * UW,
            config: SplittingConfig {
                readout_angle: sp.readout_angle_deg.map(f64::to_radians),
                n_segments: sp.n_segments,
                points_per_linewidth: sp.points_per_linewidth,
                margin_linewidths: sp.margin_linewidths,
            },
        };

        let a = &self.assert;
        positive(a.equipartition_tol, "assert.equipartition_tol")?;
        positive(a.max_rms_angle_deg, "assert.max_rms_angle_deg")?;
        positive(a.max_rms_magnitude_error, "assert.max_rms_magnitude_error")?;
        positive(a.max_splitting_rms, "assert.max_splitting_rms")?;

        Ok(Resolved {
            device,
            beam,
            environment,
            simulation,
            grid,
            readout,
            protocol,
            compare: p.compare,
            stability,
            splitting,
            assert: a.clone(),
        })
    }

    fn resolve_device(&self) -> Result<ModalParams, CliError> {
        let d = &self.device;
        let base = match d.preset.as_str() {
            "paper" => ModalParams::paper_device(),
            "instability" => ModalParams::instability_device(),
            "scaled" => ModalParams::scaled_test_device(),
            other => {
                return Err(CliError::Validation(format!(
                    "device.preset: unknown preset `{other}` (expected paper, instability or scaled)"
                )))
            }
        };
        let mass_fg = d.mass_fg.unwrap_or(base.mass / FG);
        let f1 = d.f1_khz.unwrap_or(base.omega1 / TAU / 1e3);
        let f2 = d.f2_khz.unwrap_or(base.omega2 / TAU / 1e3);
        let quality = d.quality.unwrap_or(base.quality_factor());
        let theta1 = d.theta1_deg.map(f64::to_radians).unwrap_or(base.theta1);
        positive(mass_fg, "device.mass_fg")?;
        positive(f1, "device.f1_khz")?;
        positive(f2, "device.f2_khz")?;
        positive(quality, "device.quality")?;
        check(theta1.is_finite(), "device.theta1_deg", "must be finite")?;
        if d.mass_fg.is_none() && d.f1_khz.is_none() && d.f2_khz.is_none() && d.quality.is_none() {
            return Ok(ModalParams { theta1, ..base });
        }
        ModalParams::from_hz(mass_fg * FG, f1 * 1e3, f2 * 1e3, quality, theta1)
            .map_err(|e| CliError::Validation(format!("device: {e}")))
    }

    fn resolve_beam(&self, base: &Path) -> Result<FieldSpec, CliError> {
        let b = &self.beam;
        let preset = match b.preset.as_str() {
            "green_532" => GaussianBeamField::green_532(),
            "red_633" => GaussianBeamField::red_633(),
            "tabulated" => {
                let path = b
                    .path
                    .as_ref()
                    .ok_or_else(|| CliError::Validation("beam.path: required for a tabulated field".into()))?;
                let ref_power = b
                    .ref_power_uw
                    .ok_or_else(|| CliError::Validation("beam.ref_power_uw: required for a tabulated field".into()))?;
                positive(ref_power, "beam.ref_power_uw")?;
                return Ok(FieldSpec::Tabulated {
                    path: base.join(path),
                    ref_power: ref_power * UW,
                });
            }
            other => {
                return Err(CliError::Validation(format!(
                    "beam.preset: unknown preset `{other}` (expected green_532, red_633 or tabulated)"
                )))
            }
        };
        check(b.path.is_none(), "beam.path", "only valid with preset = \"tabulated\"")?;
        let wavelength = b.wavelength_nm.map(|v| v * NM).unwrap_or(preset.wavelength);
        let waist = b.waist_um.map(|v| v * UM).unwrap_or(preset.waist);
        let peak = b.peak_force_fn.map(|v| v * FN).unwrap_or(preset.peak_force);
        let ref_power = b.ref_power_uw.map(|v| v * UW).unwrap_or(preset.ref_power);
        positive(wavelength, "beam.wavelength_nm")?;
        positive(waist, "beam.waist_um")?;
        non_negative(peak, "beam.peak_force_fn")?;
        positive(ref_power, "beam.ref_power_uw")?;
        GaussianBeamField::new(wavelength, waist, peak, ref_power)
            .map(FieldSpec::Gaussian)
            .map_err(|e| CliError::Validation(format!("beam: {e}")))
    }

    fn resolve_readout(&self, base: &Path, beam: &FieldSpec) -> Result<ReadoutSpec, CliError> {
        let r = &self.readout;
        match r.kind.as_str() {
            "synthetic" => {
                let (w0, zr) = match beam {
                    FieldSpec::Gaussian(g) => (g.waist, g.rayleigh),
                    FieldSpec::Tabulated { .. } => {
                        let g = GaussianBeamField::green_532();
                        (g.waist, g.rayleigh)
                    }
                };
                let waist = r.waist_um.map(|v| v * UM).unwrap_or(w0);
                let rayleigh = r.rayleigh_um.map(|v| v * UM).unwrap_or(zr);
                check(
                    r.v0_v != 0.0 && r.v0_v.is_finite(),
                    "readout.v0_v",
                    "must be finite and non-zero",
                )?;
                positive(waist, "readout.waist_um")?;
                positive(rayleigh, "readout.rayleigh_um")?;
                positive(r.step_nm, "readout.step_nm")?;
                Ok(ReadoutSpec::Synthetic {
                    v0: r.v0_v,
                    waist,
                    rayleigh,
                    step: r.step_nm * NM,
                })
            }
            "tabulated" => {
                let path = r
                    .path
                    .as_ref()
                    .ok_or_else(|| CliError::Validation("readout.path: required for a tabulated map".into()))?;
                Ok(ReadoutSpec::Tabulated { path: base.join(path) })
            }
            other => Err(CliError::Validation(format!(
                "readout.kind: unknown kind `{other}` (expected synthetic or tabulated)"
            ))),
        }
    }
}
