//! Python bindings. Arrays cross the boundary as flat column-major lists of
//! floats; everything is 64-bit on the Python side.

use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use ctis_core::oracle::OracleLimits;
use ctis_core::{
    self as core, Backend, Datacube, FpaImage, Init, KernelSet, SceneKind, SolverConfig,
    SpectralProjector, SpotSpec, Storage, SystemGeometry,
};

create_exception!(ctis, CtisError, PyValueError);

fn err(e: core::Error) -> PyErr {
    CtisError::new_err(format!("{}: {}", e.category(), e))
}

fn parse<T: std::str::FromStr<Err = String>>(s: &str) -> PyResult<T> {
    s.parse().map_err(CtisError::new_err)
}

#[pyclass(name = "Geometry", module = "ctis", frozen, eq, skip_from_py_object)]
#[derive(Clone, PartialEq)]
struct PyGeometry(SystemGeometry);

#[pymethods]
impl PyGeometry {
    #[new]
    #[pyo3(signature = (a, alpha, gamma, xi, w, wavelengths=None))]
    fn new(
        a: usize,
        alpha: usize,
        gamma: usize,
        xi: usize,
        w: usize,
        wavelengths: Option<Vec<f64>>,
    ) -> PyResult<Self> {
        core::make_geometry(a, alpha, gamma, xi, w, wavelengths)
            .map(PyGeometry)
            .map_err(err)
    }

    #[getter]
    fn a(&self) -> usize {
        self.0.a()
    }

    #[getter]
    fn alpha(&self) -> usize {
        self.0.alpha()
    }

    #[getter]
    fn gamma(&self) -> usize {
        self.0.gamma()
    }

    #[getter]
    fn xi(&self) -> usize {
        self.0.xi()
    }

    #[getter]
    fn w(&self) -> usize {
        self.0.w()
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n()
    }

    #[getter]
    fn ell(&self) -> usize {
        self.0.ell()
    }

    #[getter]
    fn m(&self) -> usize {
        self.0.m()
    }

    #[getter]
    fn beta(&self) -> usize {
        self.0.beta()
    }

    #[getter]
    fn wavelengths(&self) -> Option<Vec<f64>> {
        self.0.wavelengths().map(<[f64]>::to_vec)
    }

    fn embed_index(&self, j: usize) -> PyResult<usize> {
        if j >= self.0.m() {
            return Err(CtisError::new_err(format!(
                "index {j} out of range for m={}",
                self.0.m()
            )));
        }
        Ok(core::embed_index(&self.0, j))
    }

    fn __repr__(&self) -> String {
        format!("Geometry({})", self.0)
    }
}

#[pyclass(name = "Cube", module = "ctis", frozen)]
struct PyCube(Datacube<f64>);

#[pymethods]
impl PyCube {
    #[new]
    fn new(geometry: &PyGeometry, data: Vec<f64>) -> PyResult<Self> {
        Datacube::new(&geometry.0, data).map(PyCube).map_err(err)
    }

    #[staticmethod]
    fn synth(geometry: &PyGeometry, kind: &str) -> PyResult<Self> {
        let kind = match kind.split_once(':') {
            Some(("constant", v)) => SceneKind::Constant(
                v.parse()
                    .map_err(|_| CtisError::new_err(format!("bad constant `{v}`")))?,
            ),
            Some(("random", v)) => SceneKind::Random(
                v.parse()
                    .map_err(|_| CtisError::new_err(format!("bad seed `{v}`")))?,
            ),
            Some(("rgb", path)) => SceneKind::Rgb(path.into()),
            _ => return Err(CtisError::new_err(format!("unknown scene kind `{kind}`"))),
        };
        core::synth_scene(&geometry.0, &kind)
            .map(PyCube)
            .map_err(err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        core::io::load_cube(path).map(PyCube).map_err(err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        core::io::save_cube(path, &self.0).map_err(err)
    }

    #[getter]
    fn geometry(&self) -> PyGeometry {
        PyGeometry(self.0.geometry().clone())
    }

    #[getter]
    fn data(&self) -> Vec<f64> {
        self.0.data().to_vec()
    }

    fn band(&self, band: usize) -> PyResult<Vec<f64>> {
        if band >= self.0.geometry().w() {
            return Err(CtisError::new_err(format!("band {band} out of range")));
        }
        Ok(self.0.band(band).to_vec())
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

#[pyclass(name = "Image", module = "ctis", frozen)]
struct PyImage(FpaImage<f64>);

#[pymethods]
impl PyImage {
    #[new]
    fn new(geometry: &PyGeometry, data: Vec<f64>) -> PyResult<Self> {
        FpaImage::new(&geometry.0, data).map(PyImage).map_err(err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        core::io::load_image(path).map(PyImage).map_err(err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        core::io::save_image(path, &self.0).map_err(err)
    }

    #[getter]
    fn geometry(&self) -> PyGeometry {
        PyGeometry(self.0.geometry().clone())
    }

    #[getter]
    fn data(&self) -> Vec<f64> {
        self.0.data().to_vec()
    }

    /// Row-major nested lists, `gamma` rows of `xi` values.
    fn rows(&self) -> Vec<Vec<f64>> {
        self.0.to_rows()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

#[pyclass(name = "Kernels", module = "ctis", frozen)]
struct PyKernels(KernelSet<f64>);

#[pymethods]
impl PyKernels {
    /// `w` spatial kernels of `n` values each, concatenated.
    #[new]
    fn new(geometry: &PyGeometry, spatial: Vec<f64>) -> PyResult<Self> {
        KernelSet::from_flat(&geometry.0, spatial)
            .map(PyKernels)
            .map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (geometry, seed=0, sigma=None, orders=None, jitter=None))]
    fn synth(
        geometry: &PyGeometry,
        seed: u64,
        sigma: Option<f64>,
        orders: Option<usize>,
        jitter: Option<f64>,
    ) -> PyResult<Self> {
        let mut spec = SpotSpec::fitted(&geometry.0);
        spec.sigma = sigma.unwrap_or(spec.sigma);
        spec.orders = orders.unwrap_or(spec.orders);
        spec.jitter = jitter.unwrap_or(spec.jitter);
        core::synth_kernels(&geometry.0, &spec, seed)
            .map(PyKernels)
            .map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (geometry, row=0, col=0))]
    fn impulse(geometry: &PyGeometry, row: usize, col: usize) -> PyResult<Self> {
        core::impulse_kernels(&geometry.0, row, col)
            .map(PyKernels)
            .map_err(err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        core::io::load_kernels(path).map(PyKernels).map_err(err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        core::io::save_kernels(path, &self.0).map_err(err)
    }

    #[getter]
    fn geometry(&self) -> PyGeometry {
        PyGeometry(self.0.geometry().clone())
    }

    fn spatial(&self, band: usize) -> PyResult<Vec<f64>> {
        if band >= self.0.geometry().w() {
            return Err(CtisError::new_err(format!("band {band} out of range")));
        }
        Ok(self.0.spatial(band).to_vec())
    }

    fn column_sums(&self) -> PyResult<Vec<f64>> {
        core::column_sums(&self.0)
            .map(|h| h.data().to_vec())
            .map_err(err)
    }
}

/// Forward projection `H f` (linear; may carry roundoff below zero).
#[pyfunction]
fn forward(py: Python<'_>, kernels: &PyKernels, cube: &PyCube) -> PyResult<PyImage> {
    let g = kernels.0.geometry();
    py.detach(|| core::forward(&kernels.0, &cube.0, &mut core::ProjectorWorkspace::new(g)))
        .map(PyImage)
        .map_err(err)
}

/// Backward projection `Hᵀ u`.
#[pyfunction]
fn backward(py: Python<'_>, kernels: &PyKernels, image: &PyImage) -> PyResult<PyCube> {
    let g = kernels.0.geometry();
    py.detach(|| core::backward(&kernels.0, &image.0, &mut core::ProjectorWorkspace::new(g)))
        .map(PyCube)
        .map_err(err)
}

/// Simulated measurement: `H f` clamped at zero, via `wbh` or `bf`.
#[pyfunction]
#[pyo3(signature = (kernels, cube, backend="wbh"))]
fn project(py: Python<'_>, kernels: &PyKernels, cube: &PyCube, backend: &str) -> PyResult<PyImage> {
    let backend: Backend = parse(backend)?;
    py.detach(|| match backend {
        Backend::Wbh => core::project(&mut SpectralProjector::new(&kernels.0), &cube.0),
        Backend::Bf => core::project(
            &mut core::build_system_matrix(&kernels.0, Storage::Auto, OracleLimits::default())?,
            &cube.0,
        ),
    })
    .map(PyImage)
    .map_err(err)
}

/// EM reconstruction. Returns `(cube, per-iteration seconds, residuals)`.
#[pyfunction]
#[pyo3(signature = (kernels, image, iterations=25, init="ones", epsilon=None, backend="wbh"))]
fn reconstruct(
    py: Python<'_>,
    kernels: &PyKernels,
    image: &PyImage,
    iterations: usize,
    init: &str,
    epsilon: Option<f64>,
    backend: &str,
) -> PyResult<(PyCube, Vec<f64>, Vec<f64>)> {
    let cfg = SolverConfig {
        iterations,
        init: parse::<Init>(init)?,
        epsilon,
        record_residuals: true,
    };
    let backend: Backend = parse(backend)?;
    let h = core::column_sums(&kernels.0).map_err(err)?;
    let report = py
        .detach(|| core::em_solve_with_backend(&kernels.0, &image.0, &h, &cfg, backend))
        .map_err(err)?;
    let residuals = report.residuals.unwrap_or_default();
    Ok((PyCube(report.cube), report.iteration_seconds, residuals))
}

#[pyfunction]
fn relative_error(estimate: &PyCube, reference: &PyCube) -> PyResult<f64> {
    core::relative_error(&estimate.0, &reference.0).map_err(err)
}

/// Returns `(mean, used, excluded)`.
#[pyfunction]
#[pyo3(signature = (a, b, threshold=0.0))]
fn avg_relative_pixel_error(
    a: &PyCube,
    b: &PyCube,
    threshold: f64,
) -> PyResult<(f64, usize, usize)> {
    core::avg_relative_pixel_error(&a.0, &b.0, threshold)
        .map(|p| (p.mean, p.used, p.excluded))
        .map_err(err)
}

/// `H f` through the explicit system matrix.
#[pyfunction]
fn oracle_forward(kernels: &PyKernels, cube: &PyCube) -> PyResult<PyImage> {
    let h = core::build_dense_h(&kernels.0).map_err(err)?;
    core::bf_forward(&h, &cube.0).map(PyImage).map_err(err)
}

#[pymodule]
fn ctis(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("CtisError", m.py().get_type::<CtisError>())?;
    m.add_class::<PyGeometry>()?;
    m.add_class::<PyCube>()?;
    m.add_class::<PyImage>()?;
    m.add_class::<PyKernels>()?;
    m.add_function(wrap_pyfunction!(forward, m)?)?;
    m.add_function(wrap_pyfunction!(backward, m)?)?;
    m.add_function(wrap_pyfunction!(project, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruct, m)?)?;
    m.add_function(wrap_pyfunction!(relative_error, m)?)?;
    m.add_function(wrap_pyfunction!(avg_relative_pixel_error, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_forward, m)?)?;
    Ok(())
}
