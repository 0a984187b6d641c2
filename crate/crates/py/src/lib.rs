//! Python bindings. Quantities are SI (kg, rad/s, W, m, N) as in the Rust
//! library; structured results come back as plain dicts and lists.

use std::f64::consts::TAU;
use std::sync::Arc;

use optomech::backaction::{self, PauliDecomposition};
use optomech::dynamics::{self, GradientMatrix, LangevinConfig};
use optomech::model::{self, LinearField, RectGrid, TabulatedField, TransmissionMap};
use optomech::reconstruct::{self, ProtocolConfig, SplittingConfig};
use optomech::spectral::{self, SpectrumConvention, SpectrumEstimate};
use optomech::{Environment as CoreEnvironment, Error, ForceField as CoreField, GaussianBeamField, Vec2};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pythonize::pythonize;
use serde::Serialize;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::StaticNonConvergence { .. } | Error::FitNonConvergence { .. } | Error::NoResonance { .. } => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn dict<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    Ok(pythonize(py, value)?)
}

/// Polarisation doublet: effective mass, eigenfrequencies, damping and
/// orientation of `e1` from the x-axis.
#[pyclass(name = "ModalParams", module = "pyoptomech", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyModalParams {
    inner: model::ModalParams,
}

#[pymethods]
impl PyModalParams {
    #[new]
    fn new(mass: f64, omega1: f64, omega2: f64, gamma: f64, theta1: f64) -> PyResult<Self> {
        model::ModalParams::new(mass, omega1, omega2, gamma, theta1)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    #[staticmethod]
    fn from_hz(mass: f64, f1_hz: f64, f2_hz: f64, quality: f64, theta1: f64) -> PyResult<Self> {
        model::ModalParams::from_hz(mass, f1_hz, f2_hz, quality, theta1)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    #[staticmethod]
    fn paper_device() -> Self {
        Self {
            inner: model::ModalParams::paper_device(),
        }
    }

    #[staticmethod]
    fn instability_device() -> Self {
        Self {
            inner: model::ModalParams::instability_device(),
        }
    }

    #[staticmethod]
    fn scaled_test_device() -> Self {
        Self {
            inner: model::ModalParams::scaled_test_device(),
        }
    }

    #[getter]
    fn mass(&self) -> f64 {
        self.inner.mass
    }

    #[getter]
    fn omega1(&self) -> f64 {
        self.inner.omega1
    }

    #[getter]
    fn omega2(&self) -> f64 {
        self.inner.omega2
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma
    }

    #[getter]
    fn theta1(&self) -> f64 {
        self.inner.theta1
    }

    fn quality_factor(&self) -> f64 {
        self.inner.quality_factor()
    }

    /// `k_B T / (M omega_i^2)` for mode 0 or 1.
    fn equipartition_variance(&self, mode: usize, env: &PyEnvironment) -> PyResult<f64> {
        if mode > 1 {
            return Err(PyValueError::new_err("mode must be 0 or 1"));
        }
        Ok(self.inner.equipartition_variance(mode, &env.inner))
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!(
            "ModalParams(mass={:e}, f1_hz={}, f2_hz={}, quality={}, theta1={})",
            p.mass,
            p.omega1 / TAU,
            p.omega2 / TAU,
            p.quality_factor(),
            p.theta1
        )
    }
}

#[pyclass(name = "Environment", module = "pyoptomech", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyEnvironment {
    inner: CoreEnvironment,
}

#[pymethods]
impl PyEnvironment {
    #[new]
    #[pyo3(signature = (temperature=300.0, detection_floor=0.0))]
    fn new(temperature: f64, detection_floor: f64) -> PyResult<Self> {
        CoreEnvironment::new(temperature, detection_floor)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    #[getter]
    fn temperature(&self) -> f64 {
        self.inner.temperature
    }

    #[getter]
    fn detection_floor(&self) -> f64 {
        self.inner.detection_floor
    }
}

fn env_or_room(env: Option<&PyEnvironment>) -> CoreEnvironment {
    env.map(|e| e.inner).unwrap_or_else(CoreEnvironment::room)
}

/// Optical force field scaling linearly with power.
#[pyclass(name = "ForceField", module = "pyoptomech", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyForceField {
    inner: Arc<dyn CoreField>,
    label: String,
    /// Beam geometry, used to shape a synthetic transmission readout.
    beam: Option<GaussianBeamField>,
}

#[pymethods]
impl PyForceField {
    /// Scattering force of a Gaussian beam: wavelength and waist (m), peak
    /// force (N) at `ref_power` (W).
    #[staticmethod]
    fn gaussian(wavelength: f64, waist: f64, peak_force: f64, ref_power: f64) -> PyResult<Self> {
        let f = GaussianBeamField::new(wavelength, waist, peak_force, ref_power).map_err(to_py)?;
        Ok(Self {
            inner: Arc::new(f),
            label: "gaussian".into(),
            beam: Some(f),
        })
    }

    #[staticmethod]
    fn green_532() -> Self {
        let f = GaussianBeamField::green_532();
        Self {
            inner: Arc::new(f),
            label: "green_532".into(),
            beam: Some(f),
        }
    }

    #[staticmethod]
    fn red_633() -> Self {
        let f = GaussianBeamField::red_633();
        Self {
            inner: Arc::new(f),
            label: "red_633".into(),
            beam: Some(f),
        }
    }

    /// `F(r) = offset + G^T r` with `gradient[i][j] = dF_j/dr_i` (N/m), at
    /// `ref_power`.
    #[staticmethod]
    fn linear(offset: (f64, f64), gradient: [[f64; 2]; 2], ref_power: f64) -> Self {
        Self {
            inner: Arc::new(LinearField::new(Vec2::new(offset.0, offset.1), gradient, ref_power)),
            label: "linear".into(),
            beam: None,
        }
    }

    /// Load `x_um,z_um,Fx_<unit>,Fz_<unit>` from a CSV file.
    #[staticmethod]
    fn tabulated(path: &str, ref_power: f64) -> PyResult<Self> {
        let file = std::fs::File::open(path).map_err(|e| PyValueError::new_err(format!("{path}: {e}")))?;
        let f = TabulatedField::from_csv(file, ref_power).map_err(to_py)?;
        Ok(Self {
            inner: Arc::new(f),
            label: "tabulated".into(),
            beam: None,
        })
    }

    /// Force `(Fx, Fz)` in N at `(x, z)` in m.
    fn force(&self, x: f64, z: f64, power: f64) -> PyResult<(f64, f64)> {
        let f = self.inner.force(Vec2::new(x, z), power).map_err(to_py)?;
        Ok((f.x, f.z))
    }

    /// Central-difference gradient `[[dFx/dx, dFz/dx], [dFx/dz, dFz/dz]]`.
    fn gradient(&self, x: f64, z: f64, power: f64) -> PyResult<[[f64; 2]; 2]> {
        let g = dynamics::linearize(self.inner.as_ref(), Vec2::new(x, z), power).map_err(to_py)?;
        Ok(g.as_array())
    }

    fn __repr__(&self) -> String {
        format!("ForceField({})", self.label)
    }
}

#[pyclass(name = "RectGrid", module = "pyoptomech", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyRectGrid {
    inner: RectGrid,
}

#[pymethods]
impl PyRectGrid {
    #[staticmethod]
    fn uniform(x_min: f64, x_max: f64, nx: usize, z_min: f64, z_max: f64, nz: usize) -> PyResult<Self> {
        RectGrid::uniform((x_min, x_max), nx, (z_min, z_max), nz)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    #[getter]
    fn x(&self) -> Vec<f64> {
        self.inner.x.clone()
    }

    #[getter]
    fn z(&self) -> Vec<f64> {
        self.inner.z.clone()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// `sqrt(4 M gamma k_B T B)` (N).
#[pyfunction]
#[pyo3(signature = (params, env=None, bandwidth_hz=1.0))]
fn thermal_force_limit(params: &PyModalParams, env: Option<&PyEnvironment>, bandwidth_hz: f64) -> f64 {
    reconstruct::minimum_resolvable_force(&params.inner, &env_or_room(env), bandwidth_hz)
}

#[derive(Serialize)]
struct TrajectoryOut {
    dt: f64,
    x: Vec<f64>,
    z: Vec<f64>,
    halted_at: Option<f64>,
}

/// Langevin trajectory of the deflection around `(x0, z0)`; returns
/// `{"dt", "x", "z", "halted_at"}`.
#[pyfunction]
#[pyo3(signature = (params, duration, seed, field=None, power=0.0, x0=0.0, z0=0.0, env=None, decimation=1, dt=None, initial=(0.0, 0.0)))]
#[allow(clippy::too_many_arguments)]
fn simulate_langevin<'py>(
    py: Python<'py>,
    params: &PyModalParams,
    duration: f64,
    seed: u64,
    field: Option<&PyForceField>,
    power: f64,
    x0: f64,
    z0: f64,
    env: Option<&PyEnvironment>,
    decimation: usize,
    dt: Option<f64>,
    initial: (f64, f64),
) -> PyResult<Bound<'py, PyAny>> {
    let mut config = LangevinConfig::new(&params.inner, duration, seed);
    config.decimation = decimation;
    config.record_velocities = false;
    config.initial_position = Vec2::new(initial.0, initial.1);
    if let Some(dt) = dt {
        config.dt = dt;
    }
    let env = env_or_room(env);
    let p = params.inner;
    let traj = py
        .detach(|| {
            dynamics::simulate_langevin(
                &p,
                field.map(|f| f.inner.as_ref()),
                Vec2::new(x0, z0),
                power,
                &env,
                &config,
            )
        })
        .map_err(to_py)?;
    dict(
        py,
        &TrajectoryOut {
            dt: traj.dt,
            x: traj.positions.iter().map(|r| r.x).collect(),
            z: traj.positions.iter().map(|r| r.z).collect(),
            halted_at: traj.halted_at,
        },
    )
}

/// Hann-windowed Welch PSD, one-sided per Hz.
#[pyfunction]
#[pyo3(signature = (series, dt, segment_len, overlap=0.5))]
fn welch_psd<'py>(
    py: Python<'py>,
    series: Vec<f64>,
    dt: f64,
    segment_len: usize,
    overlap: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let s = spectral::welch_psd(&series, dt, segment_len, overlap).map_err(to_py)?;
    dict(py, &s)
}

/// Thermal spectrum of `dr . e_beta` (m^2/Hz) with `e_beta` at
/// `readout_angle` from x.
#[pyfunction]
#[pyo3(signature = (params, readout_angle, freqs_hz, env=None))]
fn analytic_projected_psd<'py>(
    py: Python<'py>,
    params: &PyModalParams,
    readout_angle: f64,
    freqs_hz: Vec<f64>,
    env: Option<&PyEnvironment>,
) -> PyResult<Bound<'py, PyAny>> {
    let s = spectral::analytic_projected_psd(
        &params.inner,
        Vec2::from_angle(readout_angle),
        &freqs_hz,
        &env_or_room(env),
    )
    .map_err(to_py)?;
    dict(py, &s)
}

/// Two-Lorentzian fit of a one-sided spectrum sampled on `freqs_hz`.
#[pyfunction]
#[pyo3(signature = (freqs_hz, psd, mass, env=None, n_segments=0))]
fn fit_doublet<'py>(
    py: Python<'py>,
    freqs_hz: Vec<f64>,
    psd: Vec<f64>,
    mass: f64,
    env: Option<&PyEnvironment>,
    n_segments: usize,
) -> PyResult<Bound<'py, PyAny>> {
    if freqs_hz.len() != psd.len() || freqs_hz.len() < 2 {
        return Err(PyValueError::new_err("freqs_hz and psd must have the same length >= 2"));
    }
    let spec = SpectrumEstimate {
        resolution_bw: freqs_hz[1] - freqs_hz[0],
        freqs: freqs_hz,
        psd,
        convention: SpectrumConvention::OneSidedHz,
        n_segments,
    };
    let fit = spectral::fit_doublet(&spec, mass, &env_or_room(env)).map_err(to_py)?;
    dict(py, &fit)
}

#[derive(Serialize)]
struct ModesOut {
    report: backaction::StabilityReport,
    stiffness: backaction::EffectiveStiffness,
    splitting_approx: (f64, f64),
}

/// Exact eigenmodes for a lab-frame gradient `gradient[i][j] = dF_j/dr_i`
/// measured at `gradient_power` and rescaled to `power`.
#[pyfunction]
#[pyo3(signature = (params, gradient, gradient_power, power))]
fn modes<'py>(
    py: Python<'py>,
    params: &PyModalParams,
    gradient: [[f64; 2]; 2],
    gradient_power: f64,
    power: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let g = GradientMatrix::from_array(gradient, gradient_power);
    let k = backaction::effective_stiffness(&params.inner, &g, power);
    let s = backaction::splitting_approx(&params.inner, &k);
    dict(
        py,
        &ModesOut {
            report: backaction::exact_modes(&params.inner, &k),
            stiffness: k,
            splitting_approx: (s.re, s.im),
        },
    )
}

#[pyfunction]
fn pauli_decompose<'py>(py: Python<'py>, gradient: [[f64; 2]; 2]) -> PyResult<Bound<'py, PyAny>> {
    let p: PauliDecomposition = backaction::pauli_decompose(&GradientMatrix::from_array(gradient, 1.0));
    dict(py, &p)
}

/// Work (J) done by the linearised field over one elliptical orbit of
/// semi-axes `a`, `b`; `sense` is +1 counter-clockwise, -1 clockwise.
#[pyfunction]
fn work_per_cycle(gradient: [[f64; 2]; 2], a: f64, b: f64, sense: i8) -> f64 {
    backaction::work_per_cycle(&GradientMatrix::from_array(gradient, 1.0), a, b, sense)
}

/// Lowest power in `(0, p_max]` at which the point `(x, z)` goes unstable.
#[pyfunction]
fn threshold_power(params: &PyModalParams, field: &PyForceField, x: f64, z: f64, p_max: f64) -> PyResult<Option<f64>> {
    backaction::threshold_power(&params.inner, field.inner.as_ref(), Vec2::new(x, z), p_max).map_err(to_py)
}

#[pyfunction]
fn stability_map<'py>(
    py: Python<'py>,
    params: &PyModalParams,
    field: &PyForceField,
    grid: &PyRectGrid,
    power: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let (p, f, g) = (params.inner, field.inner.clone(), grid.inner.clone());
    let map = py
        .detach(|| backaction::stability_map(&p, f.as_ref(), &g, power))
        .map_err(to_py)?;
    dict(py, &map)
}

/// Synthetic transmission map covering `grid` with a margin, sampled at
/// `step`.
fn padded_transmission(grid: &RectGrid, field: &PyForceField, step: f64) -> optomech::Result<TransmissionMap> {
    let axis = |a: &[f64]| {
        let lo = a[0] - 3.0 * step;
        let hi = a[a.len() - 1] + 3.0 * step;
        let n = ((hi - lo) / step).ceil() as usize + 1;
        ((lo, lo + step * (n - 1) as f64), n)
    };
    let (xr, nx) = axis(&grid.x);
    let (zr, nz) = axis(&grid.z);
    let beam = field.beam.unwrap_or_else(GaussianBeamField::green_532);
    TransmissionMap::synthetic(RectGrid::uniform(xr, nx, zr, nz)?, 1.0, beam.waist, beam.rayleigh)
}

/// Driven-response force map with a synthetic transmission readout.
#[pyfunction]
#[pyo3(signature = (params, field, grid, power=96e-6, seed=1, noise_scale=1.0, delta_p_over_p=0.1, env=None, compare=true))]
#[allow(clippy::too_many_arguments)]
fn map_force_field<'py>(
    py: Python<'py>,
    params: &PyModalParams,
    field: &PyForceField,
    grid: &PyRectGrid,
    power: f64,
    seed: u64,
    noise_scale: f64,
    delta_p_over_p: f64,
    env: Option<&PyEnvironment>,
    compare: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let tmap = padded_transmission(&grid.inner, field, 10e-9).map_err(to_py)?;
    let protocol = ProtocolConfig {
        power,
        noise_scale,
        delta_p_over_p,
        ..ProtocolConfig::default()
    };
    let (p, f, g, env) = (params.inner, field.inner.clone(), grid.inner.clone(), env_or_room(env));
    let map = py
        .detach(|| reconstruct::map_force_field(&p, f.as_ref(), &tmap, &g, &protocol, &env, seed, compare))
        .map_err(to_py)?;
    dict(py, &map)
}

/// Fitted against predicted splitting over `grid`.
#[pyfunction]
#[pyo3(signature = (params, field, grid, power, seed=1, env=None))]
fn splitting_comparison<'py>(
    py: Python<'py>,
    params: &PyModalParams,
    field: &PyForceField,
    grid: &PyRectGrid,
    power: f64,
    seed: u64,
    env: Option<&PyEnvironment>,
) -> PyResult<Bound<'py, PyAny>> {
    let (p, f, g, env) = (params.inner, field.inner.clone(), grid.inner.clone(), env_or_room(env));
    let cmp = py
        .detach(|| {
            reconstruct::splitting_comparison(&p, f.as_ref(), &g, power, &env, seed, &SplittingConfig::default())
        })
        .map_err(to_py)?;
    dict(py, &cmp)
}

#[pymodule]
fn pyoptomech(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("BOLTZMANN", model::BOLTZMANN)?;
    m.add_class::<PyModalParams>()?;
    m.add_class::<PyEnvironment>()?;
    m.add_class::<PyForceField>()?;
    m.add_class::<PyRectGrid>()?;
    m.add_function(wrap_pyfunction!(thermal_force_limit, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_langevin, m)?)?;
    m.add_function(wrap_pyfunction!(welch_psd, m)?)?;
    m.add_function(wrap_pyfunction!(analytic_projected_psd, m)?)?;
    m.add_function(wrap_pyfunction!(fit_doublet, m)?)?;
    m.add_function(wrap_pyfunction!(modes, m)?)?;
    m.add_function(wrap_pyfunction!(pauli_decompose, m)?)?;
    m.add_function(wrap_pyfunction!(work_per_cycle, m)?)?;
    m.add_function(wrap_pyfunction!(threshold_power, m)?)?;
    m.add_function(wrap_pyfunction!(stability_map, m)?)?;
    m.add_function(wrap_pyfunction!(map_force_field, m)?)?;
    m.add_function(wrap_pyfunction!(splitting_comparison, m)?)?;
    Ok(())
}
