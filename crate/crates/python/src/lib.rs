//! Python bindings: phantoms, meshes, forward simulation, grid files,
//! metrics and the reconstruction methods of `eit-core`.

use std::path::PathBuf;

use eit_core::baselines::{lambda_sweep, BaselineSolver, ElementRaster, Prior, DEFAULT_LAMBDA_FACTOR};
use eit_core::cli_io::{config_hash, generate_dataset, DatasetOptions};
use eit_core::fem::{simulate_measurements, trig_patterns, MeasurementFrame, NoiseSpec, Protocol, TRIG_OMEGA};
use eit_core::gridfield::{grid_from_bytes, grid_to_bytes, read_grid_file, write_grid_file, GridField, GridSource, GridSpec};
use eit_core::mesh::{build_disk_mesh, TriMesh, REFERENCE_LEVEL};
use eit_core::metrics;
use eit_core::phantom::{rasterize_sigma, sample_phantom, Category, Phantom, Preset};
use eit_core::pinn::{train_inverse, InverseConfig, InverseProblem};
use eit_core::pipeline::fem_potential_grids;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyBytes;

pyo3::create_exception!(eit, EitError, PyValueError, "Error raised by the EIT toolkit.");

fn err(e: eit_core::EitError) -> PyErr {
    EitError::new_err(e.to_string())
}

fn usage(msg: String) -> PyErr {
    EitError::new_err(msg)
}

fn source_name(s: GridSource) -> &'static str {
    match s {
        GridSource::Fem => "fem",
        GridSource::Cnn => "cnn",
        GridSource::Sigma => "sigma",
        GridSource::Truth => "truth",
    }
}

/// Square grid over [-1, 1]² with values outside the unit disk stored as NaN.
#[pyclass(module = "eit", name = "Grid", frozen, from_py_object)]
#[derive(Clone)]
pub struct PyGrid {
    inner: GridField,
}

#[pymethods]
impl PyGrid {
    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        read_grid_file(&path).map(|inner| PyGrid { inner }).map_err(err)
    }

    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        grid_from_bytes(data).map(|inner| PyGrid { inner }).map_err(err)
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        write_grid_file(&path, &self.inner).map_err(err)
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &grid_to_bytes(&self.inner))
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.spec.n()
    }

    #[getter]
    fn source(&self) -> &'static str {
        source_name(self.inner.source)
    }

    #[getter]
    fn excitation_id(&self) -> u32 {
        self.inner.excitation_id
    }

    /// Row-major values; NaN outside the disk.
    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.values.clone()
    }

    /// `(min, max)` over the disk.
    fn range(&self) -> (f64, f64) {
        self.inner.range()
    }

    fn __repr__(&self) -> String {
        format!(
            "Grid(n={}, source={}, excitation_id={})",
            self.n(),
            self.source(),
            self.inner.excitation_id
        )
    }
}

/// Piecewise-constant conductivity: a background plus inclusions.
#[pyclass(module = "eit", name = "Phantom", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyPhantom {
    inner: Phantom,
}

#[pymethods]
impl PyPhantom {
    /// One of the named benchmark scenes, e.g. `"case1"`.
    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        let p = Preset::from_name(name).ok_or_else(|| usage(format!("unknown preset {name:?}")))?;
        Ok(PyPhantom { inner: p.phantom() })
    }

    /// A random phantom of the category with the given code (e.g. `"1T1C"`).
    #[staticmethod]
    fn sample(seed: u64, category: &str) -> PyResult<Self> {
        let c = Category::from_code(category).ok_or_else(|| usage(format!("unknown category {category:?}")))?;
        sample_phantom(seed, c).map(|inner| PyPhantom { inner }).map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = Phantom::from_json(text).map_err(|e| usage(e.to_string()))?;
        inner.validate().map_err(err)?;
        Ok(PyPhantom { inner })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    /// Distinct conductivity values the phantom takes.
    fn value_set(&self) -> Vec<f64> {
        self.inner.value_set()
    }

    fn sigma_at(&self, x: f64, y: f64) -> f64 {
        self.inner.sigma_at([x, y])
    }

    #[pyo3(signature = (n = 128))]
    fn rasterize(&self, n: usize) -> PyGrid {
        PyGrid {
            inner: rasterize_sigma(&self.inner, &GridSpec::new(n)),
        }
    }
}

/// Triangulated unit disk with 16 electrodes.
#[pyclass(module = "eit", name = "Mesh", frozen)]
pub struct PyMesh {
    inner: TriMesh,
}

#[pymethods]
impl PyMesh {
    #[new]
    #[pyo3(signature = (level = REFERENCE_LEVEL))]
    fn new(level: u32) -> PyResult<Self> {
        if level == 0 {
            return Err(usage("mesh level must be at least 1".into()));
        }
        Ok(PyMesh {
            inner: build_disk_mesh(level),
        })
    }

    #[getter]
    fn n_nodes(&self) -> usize {
        self.inner.n_nodes()
    }

    #[getter]
    fn n_elements(&self) -> usize {
        self.inner.n_elements()
    }
}

/// Scores of an estimate against a ground truth.
#[pyclass(module = "eit", name = "Report", frozen, get_all)]
pub struct PyReport {
    case: String,
    method: String,
    ssim: f64,
    cc: f64,
    rie: f64,
}

impl From<metrics::EvalReport> for PyReport {
    fn from(r: metrics::EvalReport) -> Self {
        PyReport {
            case: r.case,
            method: r.method,
            ssim: r.ssim,
            cc: r.cc,
            rie: r.rie,
        }
    }
}

#[pymethods]
impl PyReport {
    fn __repr__(&self) -> String {
        format!("Report(ssim={:.4}, cc={:.4}, rie={:.4})", self.ssim, self.cc, self.rie)
    }
}

fn protocol(name: &str) -> PyResult<Protocol> {
    Protocol::from_name(name).ok_or_else(|| usage(format!("unknown protocol {name:?}")))
}

/// Boundary voltage frame of `phantom`, optionally with Gaussian noise.
#[pyfunction]
#[pyo3(signature = (phantom, mesh, protocol_name = "adjacent_skip", snr_db = None, noise_seed = 0))]
fn simulate_frame(
    phantom: &PyPhantom,
    mesh: &PyMesh,
    protocol_name: &str,
    snr_db: Option<f64>,
    noise_seed: u64,
) -> PyResult<Vec<f64>> {
    let noise = snr_db.map(|snr_db| NoiseSpec { snr_db, seed: noise_seed });
    simulate_measurements(&phantom.inner, &mesh.inner, protocol(protocol_name)?, noise)
        .map(|f| f.values)
        .map_err(err)
}

/// FEM potential grids of `phantom` under `count` trigonometric excitations.
#[pyfunction]
#[pyo3(signature = (phantom, mesh, n = 128, omega = TRIG_OMEGA, count = 4))]
fn potential_grids(phantom: &PyPhantom, mesh: &PyMesh, n: usize, omega: f64, count: usize) -> PyResult<Vec<PyGrid>> {
    let grids = fem_potential_grids(&phantom.inner, &mesh.inner, &GridSpec::new(n), &trig_patterns(omega, count)).map_err(err)?;
    Ok(grids.into_iter().map(|inner| PyGrid { inner }).collect())
}

#[pyfunction]
#[pyo3(signature = (estimate, truth, case = "custom", method = "unknown"))]
fn evaluate(estimate: &PyGrid, truth: &PyGrid, case: &str, method: &str) -> PyResult<PyReport> {
    metrics::evaluate(&estimate.inner, &truth.inner, case, method)
        .map(PyReport::from)
        .map_err(err)
}

fn config_from(overrides: Option<Vec<(String, String)>>) -> PyResult<InverseConfig> {
    let mut config = InverseConfig::default();
    for (k, v) in overrides.unwrap_or_default() {
        if !config.set(&k, &v).map_err(err)? {
            return Err(usage(format!("unknown config key {k:?}")));
        }
    }
    config.validate().map_err(err)?;
    Ok(config)
}

/// Canonical `key = value` text of the default configuration with the given
/// overrides applied, and its hash.
#[pyfunction]
#[pyo3(signature = (overrides = None))]
fn inverse_config(overrides: Option<Vec<(String, String)>>) -> PyResult<(String, String)> {
    let text = config_from(overrides)?.to_kv();
    let hash = config_hash(&text);
    Ok((text, hash))
}

/// Trains the conductivity network on potential grids produced under
/// trigonometric excitations of frequency `omega`; returns the σ grid and
/// the total loss before each update.
#[pyfunction]
#[pyo3(signature = (grids, mesh, overrides = None, omega = TRIG_OMEGA))]
fn reconstruct_pinn(
    py: Python<'_>,
    grids: Vec<PyGrid>,
    mesh: &PyMesh,
    overrides: Option<Vec<(String, String)>>,
    omega: f64,
) -> PyResult<(PyGrid, Vec<f64>)> {
    let config = config_from(overrides)?;
    if let Some(g) = grids.iter().find(|g| !g.inner.source.is_potential()) {
        return Err(usage(format!("grid with source {} is not a potential", source_name(g.inner.source))));
    }
    let grids: Vec<GridField> = grids.into_iter().map(|g| g.inner).collect();
    let excitations = trig_patterns(omega, grids.len());
    let arcs = mesh.inner.arcs.clone();
    let res = py
        .detach(move || {
            let problem = InverseProblem::new(&grids, &excitations, &arcs)?;
            train_inverse(&problem, &config)
        })
        .map_err(err)?;
    let losses = res.loss_history.iter().map(|b| b.total).collect();
    Ok((PyGrid { inner: res.sigma_grid }, losses))
}

/// One-step linearized reconstruction with prior `"l2"`, `"noser"` or `"tv"`.
/// Without `lam` the weight is swept against `truth` when given, otherwise a
/// fixed fraction of the prior's natural scale is used.
#[pyfunction]
#[pyo3(signature = (frame, mesh, prior = "noser", lam = None, truth = None, n = 128, protocol_name = "adjacent_skip"))]
#[allow(clippy::too_many_arguments)]
fn reconstruct_baseline(
    frame: Vec<f64>,
    mesh: &PyMesh,
    prior: &str,
    lam: Option<f64>,
    truth: Option<&PyGrid>,
    n: usize,
    protocol_name: &str,
) -> PyResult<(PyGrid, f64)> {
    let prior = Prior::from_name(prior).ok_or_else(|| usage(format!("unknown prior {prior:?}")))?;
    let protocol = protocol(protocol_name)?;
    let frame = MeasurementFrame {
        protocol,
        values: frame,
        snr_db: None,
    };
    let solver = BaselineSolver::new(&mesh.inner, protocol, 1.0).map_err(err)?;
    let raster = ElementRaster::new(&mesh.inner, &GridSpec::new(n));
    let (grid, lambda) = match (lam, truth) {
        (Some(lambda), _) => {
            let rec = solver.reconstruct(&frame, prior, lambda).map_err(err)?;
            (raster.apply(&rec.element_sigma), lambda)
        }
        (None, Some(t)) => {
            let (mut points, best) = lambda_sweep(&solver, &raster, &frame, prior, &t.inner).map_err(err)?;
            let p = points.swap_remove(best);
            (p.sigma_grid, p.lambda)
        }
        (None, None) => {
            let lambda = DEFAULT_LAMBDA_FACTOR * solver.lambda_scale(prior);
            let rec = solver.reconstruct(&frame, prior, lambda).map_err(err)?;
            (raster.apply(&rec.element_sigma), lambda)
        }
    };
    Ok((PyGrid { inner: grid }, lambda))
}

/// Writes a simulated dataset to `out`; returns the number of records.
#[pyfunction]
#[pyo3(signature = (out, count_per_category = 50, seed = 0, snr_min = 40.0, snr_max = 60.0, mesh_level = REFERENCE_LEVEL))]
fn generate(
    py: Python<'_>,
    out: PathBuf,
    count_per_category: usize,
    seed: u64,
    snr_min: f64,
    snr_max: f64,
    mesh_level: u32,
) -> PyResult<usize> {
    let options = DatasetOptions {
        count_per_category,
        seed,
        snr_min,
        snr_max,
        mesh_level,
        ..DatasetOptions::default()
    };
    py.detach(move || generate_dataset(&options, &out))
        .map(|rows| rows.len())
        .map_err(err)
}

#[pymodule]
pub fn eit(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("EitError", m.py().get_type::<EitError>())?;
    m.add_class::<PyGrid>()?;
    m.add_class::<PyPhantom>()?;
    m.add_class::<PyMesh>()?;
    m.add_class::<PyReport>()?;
    m.add_function(wrap_pyfunction!(simulate_frame, m)?)?;
    m.add_function(wrap_pyfunction!(potential_grids, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(inverse_config, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruct_pinn, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruct_baseline, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    Ok(())
}
