//! Python bindings for `qoct-core`.
//!
//! Spectra cross the boundary as nested lists (row-major); reports come back
//! as plain dicts.

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyModule;
use serde::Serialize;

use qoct_core::domain::make_grid;
use qoct_core::forward::{simulate_joint_spectrum, simulate_time_domain, SimulationRequest};
use qoct_core::pipeline::format::{read_joint_spectrum, write_joint_spectrum};
use qoct_core::preprocess::{rotate45, RotatedSpectrum as CoreRotated};
use qoct_core::reconstruct::{
    ascan_2dft_diagonal, ascan_row_average, measure_peak, native_depth_bin, predict_artefacts,
};
use qoct_core::{DetectionSpec, Dispersion, Error, Interface, JointSpectrum as CoreJoint, LayeredObject};

fn to_py(err: Error) -> PyErr {
    match err {
        Error::ConfigParse { .. } | Error::Validation { .. } | Error::InvalidArgument(_) => {
            PyValueError::new_err(err.to_string())
        }
        Error::Io(_) => PyIOError::new_err(err.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// Serialises through JSON so reports arrive as ordinary Python objects.
fn to_python<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let json = PyModule::import(py, "json")?;
    Ok(json.call_method1("loads", (text,))?.unbind())
}

fn rows_of(m: &qoct_core::Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

/// Photon-pair source; defaults describe the single-frame configuration.
#[pyclass(name = "Source", from_py_object)]
#[derive(Clone)]
struct Source {
    inner: qoct_core::SourceSpec,
}

#[pymethods]
impl Source {
    #[new]
    #[pyo3(signature = (diagonal_fwhm = 6.3, antidiagonal_fwhm = 3.2, pump_fwhm = 10.0, center_wavelength = 1550.0, pair_rate = 2.0e5, hom_visibility = 1.0))]
    fn new(
        diagonal_fwhm: f64,
        antidiagonal_fwhm: f64,
        pump_fwhm: f64,
        center_wavelength: f64,
        pair_rate: f64,
        hom_visibility: f64,
    ) -> PyResult<Self> {
        let inner = qoct_core::SourceSpec {
            center_wavelength,
            diagonal_fwhm,
            antidiagonal_fwhm,
            pump_center: center_wavelength / 2.0,
            pump_fwhm,
            pair_rate,
            hom_visibility,
        };
        inner.validate().map_err(to_py)?;
        Ok(Source { inner })
    }

    /// Sum-frequency (anti-diagonal) FWHM in THz.
    #[getter]
    fn sum_frequency_fwhm(&self) -> f64 {
        self.inner.sum_frequency_fwhm()
    }

    fn __repr__(&self) -> String {
        let s = &self.inner;
        format!(
            "Source(diagonal_fwhm={}, antidiagonal_fwhm={}, pump_fwhm={})",
            s.diagonal_fwhm, s.antidiagonal_fwhm, s.pump_fwhm
        )
    }
}

/// Stack of reflecting interfaces at one-way optical depths (µm).
#[pyclass(name = "LayeredObject", from_py_object)]
#[derive(Clone)]
struct PyLayeredObject {
    inner: LayeredObject,
}

#[pymethods]
impl PyLayeredObject {
    #[new]
    #[pyo3(signature = (positions, reflectivities, beta2 = 0.0, beta3 = 0.0))]
    fn new(positions: Vec<f64>, reflectivities: Vec<f64>, beta2: f64, beta3: f64) -> PyResult<Self> {
        if positions.len() != reflectivities.len() {
            return Err(PyValueError::new_err("positions and reflectivities differ in length"));
        }
        let interfaces = positions
            .into_iter()
            .zip(reflectivities)
            .map(|(position, reflectivity)| Interface { position, reflectivity })
            .collect();
        let inner = LayeredObject::new(interfaces)
            .map_err(to_py)?
            .with_arm_imbalance(Dispersion::new(beta2, beta3));
        Ok(PyLayeredObject { inner })
    }

    #[staticmethod]
    fn mirror(position: f64) -> Self {
        PyLayeredObject {
            inner: LayeredObject::mirror(position),
        }
    }

    #[getter]
    fn positions(&self) -> Vec<f64> {
        self.inner.interfaces.iter().map(|i| i.position).collect()
    }
}

#[pyclass(name = "JointSpectrum")]
struct PyJointSpectrum {
    inner: CoreJoint,
}

#[pymethods]
impl PyJointSpectrum {
    #[getter]
    fn shape(&self) -> (usize, usize) {
        self.inner.values().shape()
    }

    #[getter]
    fn axis1(&self) -> Vec<f64> {
        self.inner.axis1.values()
    }

    #[getter]
    fn axis2(&self) -> Vec<f64> {
        self.inner.axis2.values()
    }

    #[getter]
    fn provenance(&self) -> Vec<String> {
        self.inner.provenance().to_vec()
    }

    fn total(&self) -> f64 {
        self.inner.total()
    }

    fn values(&self) -> Vec<Vec<f64>> {
        rows_of(self.inner.values())
    }

    fn save(&self, path: &str) -> PyResult<()> {
        write_joint_spectrum(&self.inner, path).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyJointSpectrum {
            inner: read_joint_spectrum(path).map_err(to_py)?,
        })
    }

    /// Resamples onto difference/sum frequency axes.
    fn rotate(&self) -> PyResult<PyRotated> {
        Ok(PyRotated {
            inner: rotate45(&self.inner).map_err(to_py)?,
        })
    }
}

#[pyclass(name = "RotatedSpectrum")]
struct PyRotated {
    inner: CoreRotated,
}

#[pymethods]
impl PyRotated {
    #[getter]
    fn shape(&self) -> (usize, usize) {
        self.inner.values.shape()
    }

    fn values(&self) -> Vec<Vec<f64>> {
        rows_of(&self.inner.values)
    }

    /// Depth resolved by one difference-frequency bin, µm.
    fn native_depth_bin(&self) -> f64 {
        native_depth_bin(&self.inner)
    }

    /// A-scan from the row-averaged spectrum, or from the central row of
    /// the 2D transform with `path="diagonal"`.
    #[pyo3(signature = (path = "row_average"))]
    fn ascan(&self, path: &str) -> PyResult<PyAScan> {
        let a = match path {
            "row_average" => ascan_row_average(&self.inner),
            "diagonal" => ascan_2dft_diagonal(&self.inner),
            other => return Err(PyValueError::new_err(format!("unknown path `{other}`"))),
        };
        Ok(PyAScan { inner: a.map_err(to_py)? })
    }
}

#[pyclass(name = "AScan")]
struct PyAScan {
    inner: qoct_core::AScan,
}

#[pymethods]
impl PyAScan {
    #[getter]
    fn depth(&self) -> Vec<f64> {
        self.inner.depth_axis.clone()
    }

    #[getter]
    fn amplitude(&self) -> Vec<f64> {
        self.inner.amplitude.clone()
    }

    /// Position, height, FWHM and asymmetry of the strongest peak in `[lo, hi]` µm.
    fn peak(&self, py: Python<'_>, lo: f64, hi: f64) -> PyResult<Py<PyAny>> {
        let p = measure_peak(&self.inner, (lo, hi)).map_err(to_py)?;
        to_python(py, &p)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Expected coincidence counts (or a Poisson sample with `seed`).
#[pyfunction]
#[pyo3(signature = (source, object, reference_delay = 0.0, center = 1550.0, span = 102.0, n_points = 512, integration_time = 1.0, seed = None, resolution_nm = 0.0))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    source: &Source,
    object: &PyLayeredObject,
    reference_delay: f64,
    center: f64,
    span: f64,
    n_points: usize,
    integration_time: f64,
    seed: Option<u64>,
    resolution_nm: f64,
) -> PyResult<PyJointSpectrum> {
    let req = SimulationRequest {
        source: source.inner,
        object: object.inner.clone(),
        detection: DetectionSpec::ideal().with_resolution(resolution_nm),
        reference_delay,
        grid: make_grid(center, span, n_points).map_err(to_py)?,
        integration_time,
        seed,
    };
    let sim = simulate_joint_spectrum(&req).map_err(to_py)?;
    Ok(PyJointSpectrum { inner: sim.spectrum })
}

/// Coincidence rate for each reference-stage position (µm).
#[pyfunction]
#[pyo3(signature = (source, object, stage_positions, span = 200.0, n_points = 256))]
fn time_domain(
    source: &Source,
    object: &PyLayeredObject,
    stage_positions: Vec<f64>,
    span: f64,
    n_points: usize,
) -> PyResult<Vec<f64>> {
    let req = SimulationRequest {
        source: source.inner,
        object: object.inner.clone(),
        detection: DetectionSpec::ideal(),
        reference_delay: 0.0,
        grid: make_grid(1550.0, span, n_points).map_err(to_py)?,
        integration_time: 1.0,
        seed: None,
    };
    Ok(simulate_time_domain(&req, &stage_positions).map_err(to_py)?.coincidence_rate)
}

/// Predicted structural peaks and pair artefacts.
#[pyfunction]
#[pyo3(signature = (source, object, reference_delay = 0.0))]
fn artefacts(py: Python<'_>, source: &Source, object: &PyLayeredObject, reference_delay: f64) -> PyResult<Py<PyAny>> {
    let report = predict_artefacts(&object.inner, &source.inner, reference_delay).map_err(to_py)?;
    to_python(py, &report)
}

#[pyfunction]
fn preset_names() -> Vec<&'static str> {
    qoct_core::pipeline::preset_names().collect()
}

/// Runs a built-in preset into `out_dir` and returns the run manifest.
#[pyfunction]
fn run_preset(py: Python<'_>, name: &str, out_dir: &str) -> PyResult<Py<PyAny>> {
    let config = qoct_core::pipeline::preset(name).map_err(to_py)?;
    let manifest = py.detach(|| qoct_core::pipeline::run(&config, out_dir)).map_err(to_py)?;
    to_python(py, &manifest)
}

/// Runs a TOML configuration file into `out_dir`.
#[pyfunction]
fn run_config(py: Python<'_>, path: &str, out_dir: &str) -> PyResult<Py<PyAny>> {
    let config = qoct_core::pipeline::load_config(path).map_err(to_py)?;
    let manifest = py.detach(|| qoct_core::pipeline::run(&config, out_dir)).map_err(to_py)?;
    to_python(py, &manifest)
}

#[pymodule]
fn qoct(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Source>()?;
    m.add_class::<PyLayeredObject>()?;
    m.add_class::<PyJointSpectrum>()?;
    m.add_class::<PyRotated>()?;
    m.add_class::<PyAScan>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(time_domain, m)?)?;
    m.add_function(wrap_pyfunction!(artefacts, m)?)?;
    m.add_function(wrap_pyfunction!(preset_names, m)?)?;
    m.add_function(wrap_pyfunction!(run_preset, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
