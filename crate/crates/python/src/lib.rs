//! Python module `hspr`.

use std::path::PathBuf;

use hspr_core::io::CubeFile;
use hspr_core::metrics;
use hspr_core::phantom::{self, DepthMap, WrapPolicy};
use hspr_core::pipeline::{self, PipelineConfig, Preset};
use hspr_core::retrieval;
use hspr_core::spectroscopy::{self, DelayLineConfig, InterferogramStack};
use hspr_core::{ComplexField, DispersionModel, Error, HyperCube, PropagationGeometry, SpectralAmplitudeCube};
use ndarray::{Array1, Array3, Axis};
use num_complex::Complex64;
use numpy::{IntoPyArray, PyArray1, PyArray2, PyArray3, PyReadonlyArray2, PyReadonlyArray3, ToPyArray};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for hspr_core::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn dispersion(n: Option<f64>) -> DispersionModel {
    match n {
        Some(n) => DispersionModel::Constant { n },
        None => DispersionModel::SellmeierFusedSilica,
    }
}

fn stack_cube(cube: &HyperCube) -> Array3<Complex64> {
    let (rows, cols) = cube.dim();
    let mut out = Array3::zeros((cube.len(), rows, cols));
    for (mut dst, s) in out.outer_iter_mut().zip(cube.slices()) {
        dst.assign(s.data());
    }
    out
}

/// Pipeline configuration; fields are reached through JSON.
#[pyclass(name = "Config", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: PipelineConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (preset=None))]
    fn new(preset: Option<&str>) -> PyResult<Self> {
        let inner = match preset {
            Some(p) => p.parse::<Preset>().py()?.config(),
            None => PipelineConfig::default(),
        };
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: PipelineConfig::load(&path).py()?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().py()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_seed(&mut self, v: u64) {
        self.inner.seed = v;
    }

    #[getter]
    fn noise_sigma(&self) -> f64 {
        self.inner.noise_sigma
    }

    #[setter]
    fn set_noise_sigma(&mut self, v: f64) {
        self.inner.noise_sigma = v;
    }

    #[getter]
    fn max_iterations(&self) -> usize {
        self.inner.solver.max_cube_iterations
    }

    #[setter]
    fn set_max_iterations(&mut self, v: usize) {
        self.inner.solver.max_cube_iterations = v;
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.inner.geometry.rows, self.inner.geometry.cols)
    }

    #[setter]
    fn set_shape(&mut self, v: (usize, usize)) {
        self.inner.geometry.rows = v.0;
        self.inner.geometry.cols = v.1;
    }

    /// Analysis wavelengths in meters, ascending.
    fn wavelengths<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyArray1<f64>>> {
        Ok(self.inner.analysis_grid().py()?.wavelengths().to_pyarray(py))
    }

    fn __repr__(&self) -> String {
        let g = &self.inner.geometry;
        format!(
            "Config({}x{}, N={}, dz={:e}, sigma={}, seed={})",
            g.rows, g.cols, self.inner.delay.n_steps, self.inner.delay.delta_z, self.inner.noise_sigma, self.inner.seed
        )
    }
}

/// Angular-spectrum propagator for one geometry.
#[pyclass(name = "Propagator", unsendable)]
struct PyPropagator {
    inner: hspr_core::Propagator,
}

#[pymethods]
impl PyPropagator {
    #[new]
    #[pyo3(signature = (distance, pixel_pitch, rows, cols, padding=1))]
    fn new(distance: f64, pixel_pitch: f64, rows: usize, cols: usize, padding: usize) -> PyResult<Self> {
        let geom = PropagationGeometry::new(distance, pixel_pitch, rows, cols)
            .and_then(|g| g.with_padding(padding))
            .py()?;
        Ok(Self {
            inner: hspr_core::Propagator::new(geom).py()?,
        })
    }

    fn forward<'py>(
        &mut self,
        py: Python<'py>,
        field: PyReadonlyArray2<'py, Complex64>,
        wavelength: f64,
    ) -> PyResult<Bound<'py, PyArray2<Complex64>>> {
        let pitch = self.inner.geometry().pixel_pitch;
        let f = ComplexField::new(field.as_array().to_owned(), wavelength, pitch).py()?;
        Ok(self.inner.forward(&f).py()?.into_data().into_pyarray(py))
    }

    fn backward<'py>(
        &mut self,
        py: Python<'py>,
        field: PyReadonlyArray2<'py, Complex64>,
        wavelength: f64,
    ) -> PyResult<Bound<'py, PyArray2<Complex64>>> {
        let pitch = self.inner.geometry().pixel_pitch;
        let f = ComplexField::new(field.as_array().to_owned(), wavelength, pitch).py()?;
        Ok(self.inner.backward(&f).py()?.into_data().into_pyarray(py))
    }
}

/// Output of `simulate`.
#[pyclass(name = "Simulation")]
struct PySimulation {
    inner: pipeline::Simulation,
}

#[pymethods]
impl PySimulation {
    /// Phantom heights in meters.
    #[getter]
    fn depth<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray2<f64>> {
        self.inner.depth.heights().to_pyarray(py)
    }

    /// Object transmittances, `(L, rows, cols)`.
    #[getter]
    fn truth<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray3<Complex64>> {
        stack_cube(&self.inner.truth).into_pyarray(py)
    }

    #[getter]
    fn wavelengths<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray1<f64>> {
        Array1::from(self.inner.truth.wavelengths()).into_pyarray(py)
    }

    /// Noiseless interferograms, `(rows, cols, N)`.
    #[getter]
    fn clean<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray3<f64>> {
        self.inner.clean.data().to_pyarray(py)
    }

    #[getter]
    fn noisy<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray3<f64>> {
        self.inner.noisy.data().to_pyarray(py)
    }
}

/// Spectral amplitudes `|V(lambda)|` on a wavelength grid.
#[pyclass(name = "SpectralCube", from_py_object)]
#[derive(Clone)]
struct PySpectralCube {
    inner: SpectralAmplitudeCube,
}

#[pymethods]
impl PySpectralCube {
    #[getter]
    fn amplitudes<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray3<f64>> {
        self.inner.amplitudes().to_pyarray(py)
    }

    #[getter]
    fn wavelengths<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray1<f64>> {
        self.inner.grid().wavelengths().to_pyarray(py)
    }

    #[getter]
    fn spectral_weights(&self) -> Vec<f64> {
        self.inner.spectral_weights().to_vec()
    }

    /// Per-wavelength spectral-domain PSNR in dB.
    fn psnr(&self, sigma_noise: f64) -> PyResult<Vec<f64>> {
        Ok(
            spectroscopy::psnr_spectral(&self.inner, sigma_noise, self.inner.grid().delay())
                .py()?
                .psnr_db,
        )
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        CubeFile::from_spectral(&self.inner).write(&path).py()
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: CubeFile::read(&path).py()?.to_spectral().py()?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Output of `retrieve`.
#[pyclass(name = "Retrieval")]
struct PyRetrieval {
    inner: pipeline::RetrievalReport,
}

#[pymethods]
impl PyRetrieval {
    /// Object-plane estimates, `(L, rows, cols)`.
    #[getter]
    fn objects<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray3<Complex64>> {
        stack_cube(&self.inner.result.object_cube).into_pyarray(py)
    }

    #[getter]
    fn wavelengths<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray1<f64>> {
        Array1::from(self.inner.result.object_cube.wavelengths()).into_pyarray(py)
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.result.iterations_run
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.result.converged
    }

    #[getter]
    fn phase_change(&self) -> Vec<f64> {
        self.inner.result.phase_change_history.clone()
    }

    /// Mean phase RRMSE per iteration, when a truth cube was given.
    #[getter]
    fn mean_rrmse(&self) -> Option<Vec<f64>> {
        self.inner.convergence.column("mean_rrmse")
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        CubeFile::from_hypercube(&self.inner.result.object_cube)
            .write(&path)
            .py()
    }
}

#[pyfunction]
fn simulate(config: &PyConfig) -> PyResult<PySimulation> {
    Ok(PySimulation {
        inner: pipeline::simulate(&config.inner).py()?,
    })
}

/// Spectral amplitudes from a `(rows, cols, N)` interferogram stack.
#[pyfunction]
#[pyo3(signature = (config, stack, delta_z=None))]
fn spectra(config: &PyConfig, stack: PyReadonlyArray3<'_, f64>, delta_z: Option<f64>) -> PyResult<PySpectralCube> {
    let data = stack.as_array().to_owned();
    let delay = DelayLineConfig::new(delta_z.unwrap_or(config.inner.delay.delta_z), data.len_of(Axis(2))).py()?;
    let stack = InterferogramStack::new(data, delay).py()?;
    Ok(PySpectralCube {
        inner: pipeline::spectra(&stack, &config.inner, config.inner.geometry.pixel_pitch).py()?,
    })
}

#[pyfunction]
#[pyo3(signature = (config, cube, truth=None))]
fn retrieve(config: &PyConfig, cube: &PySpectralCube, truth: Option<&PySimulation>) -> PyResult<PyRetrieval> {
    let report = pipeline::retrieve(&cube.inner, &config.inner, truth.map(|t| &t.inner.truth)).py()?;
    Ok(PyRetrieval { inner: report })
}

/// Single back-propagation of the amplitudes with zero phase.
#[pyfunction]
fn backpropagate<'py>(
    py: Python<'py>,
    config: &PyConfig,
    cube: &PySpectralCube,
) -> PyResult<Bound<'py, PyArray3<Complex64>>> {
    let out = retrieval::backpropagation_baseline(&cube.inner, &config.inner.geometry).py()?;
    Ok(stack_cube(&out).into_pyarray(py))
}

#[pyfunction]
fn rrmse(estimate: PyReadonlyArray2<'_, f64>, truth: PyReadonlyArray2<'_, f64>) -> PyResult<f64> {
    metrics::rrmse(&estimate.as_array().to_owned(), &truth.as_array().to_owned()).py()
}

/// RRMSE after removing the global phase offset.
#[pyfunction]
fn phase_rrmse(estimate: PyReadonlyArray2<'_, f64>, truth: PyReadonlyArray2<'_, f64>) -> PyResult<f64> {
    metrics::phase_rrmse(&estimate.as_array().to_owned(), &truth.as_array().to_owned()).py()
}

/// Phase scaling factor between two wavelengths; `n=None` uses fused silica.
#[pyfunction]
#[pyo3(signature = (lambda_prev, lambda_next, n=None))]
fn phase_scale_mu(lambda_prev: f64, lambda_next: f64, n: Option<f64>) -> PyResult<f64> {
    retrieval::phase_scale_mu(lambda_prev, lambda_next, &dispersion(n)).py()
}

#[pyfunction]
#[pyo3(signature = (depth, wavelength, n=None, pixel_pitch=3.45e-6))]
fn thickness_to_phase<'py>(
    py: Python<'py>,
    depth: PyReadonlyArray2<'py, f64>,
    wavelength: f64,
    n: Option<f64>,
    pixel_pitch: f64,
) -> PyResult<Bound<'py, PyArray2<f64>>> {
    let d = DepthMap::relative(depth.as_array().to_owned(), pixel_pitch).py()?;
    Ok(
        phantom::thickness_to_phase(&d, wavelength, &dispersion(n), WrapPolicy::Warn)
            .py()?
            .into_pyarray(py),
    )
}

#[pyfunction]
#[pyo3(signature = (phase, wavelength, n=None, pixel_pitch=3.45e-6))]
fn phase_to_thickness<'py>(
    py: Python<'py>,
    phase: PyReadonlyArray2<'py, f64>,
    wavelength: f64,
    n: Option<f64>,
    pixel_pitch: f64,
) -> PyResult<Bound<'py, PyArray2<f64>>> {
    let d = phantom::phase_to_thickness(&phase.as_array().to_owned(), wavelength, &dispersion(n), pixel_pitch).py()?;
    Ok(d.heights().to_pyarray(py))
}

#[pymodule]
fn hspr(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyPropagator>()?;
    m.add_class::<PySimulation>()?;
    m.add_class::<PySpectralCube>()?;
    m.add_class::<PyRetrieval>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(spectra, m)?)?;
    m.add_function(wrap_pyfunction!(retrieve, m)?)?;
    m.add_function(wrap_pyfunction!(backpropagate, m)?)?;
    m.add_function(wrap_pyfunction!(rrmse, m)?)?;
    m.add_function(wrap_pyfunction!(phase_rrmse, m)?)?;
    m.add_function(wrap_pyfunction!(phase_scale_mu, m)?)?;
    m.add_function(wrap_pyfunction!(thickness_to_phase, m)?)?;
    m.add_function(wrap_pyfunction!(phase_to_thickness, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
