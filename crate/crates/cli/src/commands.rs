use std::f64::consts::TAU;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use optomech::backaction::{
    area_curve, coupled_projected_psd, effective_stiffness, exact_modes, stability_map, threshold_power,
    EffectiveStiffness, QuadraticOverlay, StabilityReport,
};
use optomech::dynamics::{linearize, simulate_langevin, static_deflection, LangevinConfig};
use optomech::io::{self, Provenance, TrajectoryInfo};
use optomech::model::{ForceField, RectGrid, TabulatedField, TransmissionMap, UM};
use optomech::reconstruct::{map_force_field, splitting_comparison, ErrorStats};
use optomech::spectral::{fit_doublet, welch_psd, DoubletFit, DEFAULT_OVERLAP};
use optomech::Vec2;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{FieldSpec, ReadoutSpec, Resolved};
use crate::error::CliError;

const UW: f64 = 1e-6;

pub struct Context {
    pub config: Resolved,
    pub prov: Provenance,
    pub out: PathBuf,
    pub seed: u64,
    pub assert: bool,
}

impl Context {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        let p = self.path(name);
        File::create(&p)
            .map(BufWriter::new)
            .map_err(|e| CliError::Io(format!("{}: {e}", p.display())))
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        io::write_json(self.create(name)?, &self.prov, value)?;
        Ok(())
    }

    pub fn write_config(&self) -> Result<(), CliError> {
        std::fs::create_dir_all(&self.out).map_err(|e| CliError::Io(format!("{}: {e}", self.out.display())))?;
        self.json("config.json", &self.config)
    }

    fn field(&self) -> Result<Box<dyn ForceField>, CliError> {
        Ok(match &self.config.beam {
            FieldSpec::Gaussian(g) => Box::new(*g),
            FieldSpec::Tabulated { path, ref_power } => {
                Box::new(TabulatedField::from_csv(open(path)?, *ref_power).map_err(|e| in_file(path, e))?)
            }
        })
    }

    fn transmission_map(&self) -> Result<TransmissionMap, CliError> {
        match &self.config.readout {
            ReadoutSpec::Synthetic {
                v0,
                waist,
                rayleigh,
                step,
            } => {
                // pad so that central differences at the grid edge stay inside
                let g = &self.config.grid;
                let axis = |a: &[f64]| {
                    let lo = a[0] - 3.0 * step;
                    let hi = a[a.len() - 1] + 3.0 * step;
                    let n = ((hi - lo) / step).ceil() as usize + 1;
                    (lo, lo + step * (n - 1) as f64, n)
                };
                let (x0, x1, nx) = axis(&g.x);
                let (z0, z1, nz) = axis(&g.z);
                let grid = RectGrid::uniform((x0, x1), nx, (z0, z1), nz)?;
                Ok(TransmissionMap::synthetic(grid, *v0, *waist, *rayleigh)?)
            }
            ReadoutSpec::Tabulated { path } => TransmissionMap::from_csv(open(path)?).map_err(|e| in_file(path, e)),
        }
    }
}

fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn in_file(path: &Path, e: optomech::Error) -> CliError {
    match CliError::from(e) {
        CliError::Validation(m) => CliError::Validation(format!("{}: {m}", path.display())),
        other => other,
    }
}

fn um(r: Vec2) -> [f64; 2] {
    [r.x / UM, r.z / UM]
}

fn mean_variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

/// Largest power of two that yields about `segments` half-overlapping
/// segments.
fn segment_length(len: usize, segments: usize) -> usize {
    let target = (2 * len / (segments + 1)).max(2);
    1 << (usize::BITS - 1 - target.leading_zeros())
}

#[derive(Serialize)]
struct DoubletSummary {
    omega_plus_hz: f64,
    omega_minus_hz: f64,
    gamma_plus_hz: f64,
    gamma_minus_hz: f64,
    splitting_hz: f64,
    fit: DoubletFit,
}

impl DoubletSummary {
    fn new(fit: DoubletFit) -> Self {
        Self {
            omega_plus_hz: fit.omega_plus / TAU,
            omega_minus_hz: fit.omega_minus / TAU,
            gamma_plus_hz: fit.gamma_plus / TAU,
            gamma_minus_hz: fit.gamma_minus / TAU,
            splitting_hz: fit.splitting() / TAU,
            fit,
        }
    }
}

#[derive(Serialize)]
struct Check {
    name: String,
    value: f64,
    limit: f64,
    pass: bool,
}

impl Check {
    fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            limit,
            pass: value <= limit,
        }
    }
}

fn enforce(ctx: &Context, checks: &[Check]) -> Result<(), CliError> {
    if !ctx.assert {
        return Ok(());
    }
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| format!("{} = {:.4e} exceeds {:.4e}", c.name, c.value, c.limit))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Assertion(failed.join("; ")))
    }
}

#[derive(Serialize)]
struct SimulateSummary {
    power_w: f64,
    rest_position_um: [f64; 2],
    static_deflection_m: Vec2,
    samples: usize,
    diverged: bool,
    halted_at_s: Option<f64>,
    variance_m2: [f64; 2],
    equipartition_m2: [f64; 2],
    relative_error: [f64; 2],
    projected_variance_m2: f64,
    spectrum_power_m2: f64,
    segment_len: usize,
    doublet: Option<DoubletSummary>,
    doublet_error: Option<String>,
    checks: Vec<Check>,
}

/// Langevin run at the configured rest position, then its Welch spectrum.
pub fn simulate(ctx: &Context) -> Result<(), CliError> {
    let c = &ctx.config;
    let s = &c.simulation;
    let params = &c.device;
    let field = ctx.field()?;
    let r0 = Vec2::new(s.position[0], s.position[1]);
    let deflection = if s.power > 0.0 {
        static_deflection(params, field.as_ref(), r0, s.power)?
    } else {
        Vec2::ZERO
    };
    let config = LangevinConfig {
        dt: s.dt,
        duration: s.duration,
        seed: ctx.seed,
        initial_position: deflection + Vec2::new(s.initial_displacement[0], s.initial_displacement[1]),
        initial_velocity: Vec2::ZERO,
        decimation: s.decimation,
        record_velocities: true,
        drive: None,
    };
    let active = (s.power > 0.0).then_some(field.as_ref());
    let traj = simulate_langevin(params, active, r0, s.power, &c.environment, &config)?;

    io::write_trajectory_csv(ctx.create("trajectory.csv")?, &ctx.prov, &traj, s.export_every)?;
    ctx.json("trajectory.json", &TrajectoryInfo::new(&traj, s.export_every))?;

    let modal = traj.modal_series(params);
    let variance = [mean_variance(&modal[0]), mean_variance(&modal[1])];
    let target = [
        params.equipartition_variance(0, &c.environment),
        params.equipartition_variance(1, &c.environment),
    ];
    let relative_error = [variance[0] / target[0] - 1.0, variance[1] / target[1] - 1.0];

    let series = traj.projected(Vec2::from_angle(s.readout_angle));
    let seg = segment_length(series.len(), s.segments);
    let spectrum = welch_psd(&series, traj.dt, seg, DEFAULT_OVERLAP)?;
    io::write_spectrum_csv(ctx.create("spectrum.csv")?, &ctx.prov, &spectrum)?;
    let (doublet, doublet_error) = match fit_doublet(&spectrum, params.mass, &c.environment) {
        Ok(f) => (Some(DoubletSummary::new(f)), None),
        Err(e) => (None, Some(e.to_string())),
    };

    let mut checks = Vec::new();
    if s.power == 0.0 && c.environment.temperature > 0.0 {
        for (i, err) in relative_error.iter().enumerate() {
            checks.push(Check::at_most(
                &format!("mode{}_variance_relative_error", i + 1),
                err.abs(),
                c.assert.equipartition_tol,
            ));
        }
    }
    let summary = SimulateSummary {
        power_w: s.power,
        rest_position_um: um(r0),
        static_deflection_m: deflection,
        samples: traj.len(),
        diverged: traj.diverged(),
        halted_at_s: traj.halted_at,
        variance_m2: variance,
        equipartition_m2: target,
        relative_error,
        projected_variance_m2: mean_variance(&series),
        spectrum_power_m2: spectrum.integrated_power(),
        segment_len: seg,
        doublet,
        doublet_error,
        checks,
    };
    ctx.json("summary.json", &summary)?;
    if let Some(t) = traj.halted_at {
        return Err(CliError::Numerical(format!("trajectory diverged at t = {t:.6e} s")));
    }
    enforce(ctx, &summary.checks)
}

#[derive(Serialize)]
struct PsdSummary {
    power_w: f64,
    rest_position_um: [f64; 2],
    static_deflection_m: Vec2,
    readout_angle_rad: f64,
    stiffness: EffectiveStiffness,
    modes: StabilityReport,
    doublet: Option<DoubletSummary>,
    doublet_error: Option<String>,
}

/// Exact projected spectrum of the coupled doublet at the working point.
pub fn psd(ctx: &Context) -> Result<(), CliError> {
    let c = &ctx.config;
    let s = &c.simulation;
    let params = &c.device;
    let r0 = Vec2::new(s.position[0], s.position[1]);
    let (deflection, stiffness) = if s.power > 0.0 {
        let field = ctx.field()?;
        let dr = static_deflection(params, field.as_ref(), r0, s.power)?;
        let g = linearize(field.as_ref(), r0 + dr, s.power)?;
        (dr, effective_stiffness(params, &g, s.power))
    } else {
        (
            Vec2::ZERO,
            EffectiveStiffness {
                k: [[params.omega1.powi(2), 0.0], [0.0, params.omega2.powi(2)]],
            },
        )
    };
    let modes = exact_modes(params, &stiffness);
    let lo = (modes.omega_minus - s.psd_margin_linewidths * params.gamma).max(params.gamma);
    let hi = modes.omega_plus + s.psd_margin_linewidths * params.gamma;
    let step = params.gamma / s.psd_points_per_linewidth;
    let n = ((hi - lo) / step).ceil() as usize + 1;
    let freqs: Vec<f64> = (0..n).map(|i| (lo + step * i as f64) / TAU).collect();
    let e_beta = Vec2::from_angle(s.readout_angle);
    let spectrum = coupled_projected_psd(params, &stiffness, e_beta, &freqs, &c.environment)?;
    io::write_spectrum_csv(ctx.create("spectrum.csv")?, &ctx.prov, &spectrum)?;
    let (doublet, doublet_error) = match fit_doublet(&spectrum, params.mass, &c.environment) {
        Ok(f) => (Some(DoubletSummary::new(f)), None),
        Err(e) => (None, Some(e.to_string())),
    };
    if let Some(d) = &doublet {
        ctx.json("doublet.json", d)?;
    }
    ctx.json(
        "summary.json",
        &PsdSummary {
            power_w: s.power,
            rest_position_um: um(r0),
            static_deflection_m: deflection,
            readout_angle_rad: s.readout_angle,
            stiffness,
            modes,
            doublet,
            doublet_error,
        },
    )
}

#[derive(Serialize)]
struct Gap {
    position_um: [f64; 2],
    reason: String,
}

#[derive(Serialize)]
struct MapSummary {
    power_w: f64,
    delta_p_over_p: f64,
    bandwidth_hz: Option<f64>,
    nodes: usize,
    recovered: usize,
    gaps: Vec<Gap>,
    #[serde(skip_serializing_if = "Option::is_none")]
    stats: Option<ErrorStats>,
    checks: Vec<Check>,
}

/// Driven-response force map over the grid.
pub fn map_force(ctx: &Context) -> Result<(), CliError> {
    let c = &ctx.config;
    let field = ctx.field()?;
    let tmap = ctx.transmission_map()?;
    let map = map_force_field(
        &c.device,
        field.as_ref(),
        &tmap,
        &c.grid,
        &c.protocol,
        &c.environment,
        ctx.seed,
        c.compare,
    )?;
    io::write_force_map_csv(ctx.create("force_map.csv")?, &ctx.prov, &map)?;
    if c.compare {
        io::write_truth_csv(ctx.create("force_truth.csv")?, &ctx.prov, &map)?;
    }
    let gaps: Vec<Gap> = map
        .nodes
        .iter()
        .filter_map(|n| {
            n.gap.as_ref().map(|g| Gap {
                position_um: um(n.position),
                reason: g.clone(),
            })
        })
        .collect();
    let checks = match &map.stats {
        Some(s) => vec![
            Check::at_most("rms_angle_error_deg", s.rms_angle_error_deg, c.assert.max_rms_angle_deg),
            Check::at_most(
                "rms_magnitude_error",
                s.rms_magnitude_error,
                c.assert.max_rms_magnitude_error,
            ),
        ],
        None => Vec::new(),
    };
    let summary = MapSummary {
        power_w: map.power,
        delta_p_over_p: c.protocol.delta_p_over_p,
        bandwidth_hz: c.protocol.bandwidth_hz,
        nodes: map.nodes.len(),
        recovered: map.nodes.len() - gaps.len(),
        gaps,
        stats: map.stats,
        checks,
    };
    ctx.json("summary.json", &summary)?;
    enforce(ctx, &summary.checks)
}

#[derive(Serialize)]
struct Threshold {
    power_w: f64,
    position_um: [f64; 2],
}

/// Per-node thresholds and the lowest one.
fn threshold_scan(ctx: &Context, field: &dyn ForceField) -> Result<(Vec<Option<f64>>, Option<Threshold>), CliError> {
    let c = &ctx.config;
    let nodes: Vec<Vec2> = c.grid.nodes().collect();
    let values = nodes
        .par_iter()
        .map(|&r| threshold_power(&c.device, field, r, c.stability.p_max))
        .collect::<optomech::Result<Vec<_>>>()?;
    let best = values
        .iter()
        .zip(&nodes)
        .filter_map(|(v, r)| v.map(|p| (p, *r)))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(p, r)| Threshold {
            power_w: p,
            position_um: um(r),
        });
    Ok((values, best))
}

#[derive(Serialize)]
struct ContourFile {
    power_w: f64,
    contours_um: Vec<Vec<[f64; 2]>>,
}

#[derive(Serialize)]
struct StabilitySummary {
    power_w: f64,
    area_um2: f64,
    unstable_nodes: usize,
    overlay: Option<QuadraticOverlay>,
    threshold: Option<Threshold>,
    p_max_w: f64,
    area_curve: Vec<[f64; 2]>,
    area_curve_monotone: bool,
    checks: Vec<Check>,
}

/// Stability map at one power, the threshold and the area-versus-power curve.
pub fn stability(ctx: &Context) -> Result<(), CliError> {
    let c = &ctx.config;
    let field = ctx.field()?;
    let map = stability_map(&c.device, field.as_ref(), &c.grid, c.stability.power)?;
    io::write_stability_csv(ctx.create("stability_map.csv")?, &ctx.prov, &map)?;
    ctx.json(
        "contours.json",
        &ContourFile {
            power_w: map.power,
            contours_um: io::contours_um(&map.contours),
        },
    )?;
    let (_, threshold) = threshold_scan(ctx, field.as_ref())?;
    let powers: Vec<f64> = if !c.stability.powers.is_empty() {
        c.stability.powers.clone()
    } else if let Some(t) = &threshold {
        (0..11).map(|k| t.power_w * (0.5 + 0.25 * k as f64)).collect()
    } else {
        Vec::new()
    };
    let areas = area_curve(&c.device, field.as_ref(), &c.grid, &powers)?;
    let rows: Vec<Vec<f64>> = powers
        .iter()
        .zip(&areas)
        .map(|(p, a)| vec![p / UW, a / (UM * UM)])
        .collect();
    io::write_table_csv(
        ctx.create("area_curve.csv")?,
        &ctx.prov,
        &["power_uW", "area_um2"],
        &rows,
    )?;
    let monotone = areas.windows(2).all(|w| w[1] >= w[0]);
    let checks = vec![Check {
        name: "area_curve_monotone".into(),
        value: monotone as u8 as f64,
        limit: 1.0,
        pass: monotone,
    }];
    let summary = StabilitySummary {
        power_w: map.power,
        area_um2: map.area / (UM * UM),
        unstable_nodes: map.unstable_nodes(),
        overlay: map.overlay,
        threshold,
        p_max_w: c.stability.p_max,
        area_curve: rows.iter().map(|r| [r[0], r[1]]).collect(),
        area_curve_monotone: monotone,
        checks,
    };
    ctx.json("summary.json", &summary)?;
    enforce(ctx, &summary.checks)
}

#[derive(Serialize)]
struct ThresholdSummary {
    p_max_w: f64,
    threshold: Option<Threshold>,
    stable_nodes: usize,
}

/// Instability threshold at every grid node.
pub fn threshold(ctx: &Context) -> Result<(), CliError> {
    let c = &ctx.config;
    let field = ctx.field()?;
    let (values, best) = threshold_scan(ctx, field.as_ref())?;
    let rows: Vec<Vec<f64>> = c
        .grid
        .nodes()
        .zip(&values)
        .map(|(r, v)| vec![r.x / UM, r.z / UM, v.map_or(f64::NAN, |p| p / UW)])
        .collect();
    io::write_table_csv(
        ctx.create("threshold_map.csv")?,
        &ctx.prov,
        &["x_um", "z_um", "threshold_uW"],
        &rows,
    )?;
    ctx.json(
        "summary.json",
        &ThresholdSummary {
            p_max_w: c.stability.p_max,
            threshold: best,
            stable_nodes: values.iter().filter(|v| v.is_none()).count(),
        },
    )
}

#[derive(Serialize)]
struct SplittingSummary {
    power_w: f64,
    bare_hz: f64,
    compared: usize,
    rms_relative_deviation: f64,
    below_bare: usize,
    excluded: Vec<Gap>,
    checks: Vec<Check>,
}

/// Fitted against predicted splitting over the grid.
pub fn splitting(ctx: &Context) -> Result<(), CliError> {
    let c = &ctx.config;
    let field = ctx.field()?;
    let cmp = splitting_comparison(
        &c.device,
        field.as_ref(),
        &c.grid,
        c.splitting.power,
        &c.environment,
        ctx.seed,
        &c.splitting.config,
    )?;
    io::write_splitting_csv(ctx.create("splitting_map.csv")?, &ctx.prov, &cmp)?;
    let excluded = cmp
        .nodes
        .iter()
        .filter_map(|n| {
            n.excluded.as_ref().map(|r| Gap {
                position_um: um(n.position),
                reason: r.clone(),
            })
        })
        .collect();
    let mut checks = Vec::new();
    if cmp.compared > 0 {
        checks.push(Check::at_most(
            "rms_relative_deviation",
            cmp.rms_relative_deviation,
            c.assert.max_splitting_rms,
        ));
    }
    let summary = SplittingSummary {
        power_w: cmp.power,
        bare_hz: cmp.bare / TAU,
        compared: cmp.compared,
        rms_relative_deviation: cmp.rms_relative_deviation,
        below_bare: cmp.below_bare,
        excluded,
        checks,
    };
    ctx.json("summary.json", &summary)?;
    enforce(ctx, &summary.checks)
}
