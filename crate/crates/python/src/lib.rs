//! Python bindings: graphs, obstacle clouds, killed spectra, Laplace
//! transforms, sausage Monte Carlo, fits and the experiment runner.

use std::path::PathBuf;
use std::sync::Arc;

use lab::error::LabError;
use lab::lab::{Command, ExperimentConfig};
use pyo3::exceptions::{PyFileNotFoundError, PyMemoryError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: LabError) -> PyErr {
    match e {
        LabError::InputNotFound(_) => PyFileNotFoundError::new_err(e.to_string()),
        LabError::Resource(_) => PyMemoryError::new_err(e.to_string()),
        LabError::Numeric(_) | LabError::Io(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for lab::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

/// Level-`m` graph of the blown-up gasket `G^(M)`.
#[pyclass(name = "LevelGraph", frozen)]
struct PyLevelGraph {
    inner: lab::graph::LevelGraph,
}

#[pymethods]
impl PyLevelGraph {
    #[new]
    fn new(blowup: u32, depth: u32) -> PyResult<Self> {
        Ok(Self { inner: lab::graph::build_graph(blowup, depth).py()? })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn blowup(&self) -> u32 {
        self.inner.blowup
    }

    #[getter]
    fn depth(&self) -> u32 {
        self.inner.depth
    }

    #[getter]
    fn side(&self) -> f64 {
        self.inner.side()
    }

    /// Vertex coordinates as `(x, y)` pairs.
    fn points(&self) -> Vec<(f64, f64)> {
        self.inner.points().iter().map(|p| (p.x, p.y)).collect()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights.clone()
    }

    fn index_of(&self, i: i64, j: i64) -> Option<usize> {
        self.inner.index_of(i, j)
    }

    /// Eigenvalues of the renormalized Laplacian, or of its `alpha/2` power.
    #[pyo3(signature = (alpha=None, count=None))]
    fn spectrum(&self, alpha: Option<f64>, count: Option<usize>) -> PyResult<Vec<f64>> {
        let h = lab::graph::laplacian(&self.inner);
        let op = match alpha {
            Some(a) => lab::graph::fractional_power(&h, a / 2.0).py()?,
            None => h,
        };
        lab::graph::spectrum(&op, count).py()
    }

    fn __repr__(&self) -> String {
        format!("LevelGraph(M={}, m={}, vertices={})", self.inner.blowup, self.inner.depth, self.inner.len())
    }
}

/// Poisson obstacle centers on `G^(M)`.
#[pyclass(name = "Cloud", frozen)]
struct PyCloud {
    inner: lab::obstacles::Cloud,
}

#[pymethods]
impl PyCloud {
    #[new]
    #[pyo3(signature = (blowup, nu, a, sample_depth, seed, count=None))]
    fn new(blowup: u32, nu: f64, a: f64, sample_depth: u32, seed: u64, count: Option<usize>) -> PyResult<Self> {
        let inner = match count {
            Some(n) => lab::obstacles::sample_cloud_with_count(blowup, nu, a, sample_depth, n, seed),
            None => lab::obstacles::sample_cloud(blowup, nu, a, sample_depth, seed),
        }
        .py()?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_csv(text: &str) -> PyResult<Self> {
        Ok(Self { inner: lab::obstacles::Cloud::from_csv(text).py()? })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn radius(&self) -> f64 {
        self.inner.radius
    }

    fn points(&self) -> Vec<(f64, f64)> {
        self.inner.points().iter().map(|p| (p.x, p.y)).collect()
    }

    fn thinned(&self, nu: f64) -> PyResult<Self> {
        Ok(Self { inner: self.inner.thinned(nu).py()? })
    }

    fn with_radius(&self, radius: f64) -> Self {
        Self { inner: self.inner.with_radius(radius) }
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv(None)
    }
}

/// Padded ambient generator used for killed spectra.
#[pyclass(name = "Ambient", frozen)]
struct PyAmbient {
    inner: Arc<lab::ids::Ambient>,
}

#[pymethods]
impl PyAmbient {
    #[new]
    #[pyo3(signature = (blowup, depth, pad, alpha))]
    fn new(py: Python<'_>, blowup: u32, depth: u32, pad: u32, alpha: f64) -> PyResult<Self> {
        let inner = py.detach(|| lab::ids::Ambient::cached(blowup, depth, pad, alpha)).py()?;
        Ok(Self { inner })
    }

    /// Eigenvalues of the stable generator killed on `cloud` and the
    /// attachment corners.
    fn killed_spectrum(&self, py: Python<'_>, cloud: &PyCloud) -> PyResult<Vec<f64>> {
        py.detach(|| lab::ids::killed_spectrum(&self.inner, &cloud.inner)).py().map(|s| s.values)
    }

    /// `3^-M Tr exp(-t F)` for one cloud at each time.
    fn laplace(&self, py: Python<'_>, cloud: &PyCloud, t_grid: Vec<f64>) -> PyResult<Vec<f64>> {
        py.detach(|| lab::ids::cloud_laplace_values(&self.inner, &cloud.inner, &t_grid)).py()
    }

    /// Cloud-averaged Laplace transform as `(t, value, stderr)` rows.
    #[pyo3(signature = (nu, a, sample_depth, t_grid, n_clouds, seed, stratified=true))]
    #[allow(clippy::too_many_arguments)]
    fn averaged_laplace(
        &self,
        py: Python<'_>,
        nu: f64,
        a: f64,
        sample_depth: u32,
        t_grid: Vec<f64>,
        n_clouds: usize,
        seed: u64,
        stratified: bool,
    ) -> PyResult<Vec<(f64, f64, f64)>> {
        let curve = py
            .detach(|| {
                if stratified {
                    lab::ids::stratified_ensemble(&self.inner, nu, a, sample_depth, n_clouds, seed)?.laplace(&t_grid)
                } else {
                    lab::ids::averaged_laplace(&self.inner, nu, a, sample_depth, &t_grid, n_clouds, seed)
                }
            })
            .py()?;
        Ok(curve.points.iter().map(|p| (p.t, p.value, p.stderr)).collect())
    }

    #[getter]
    fn vertices(&self) -> usize {
        self.inner.graph.len()
    }
}

/// `d_f`, `d_w`, `d_s`, `d_alpha` and the derived exponents.
#[pyfunction]
fn constants<'py>(py: Python<'py>, alpha: f64) -> PyResult<Bound<'py, PyDict>> {
    let c = lab::gasket::constants(alpha).py()?;
    let d = PyDict::new(py);
    d.set_item("d_f", c.d_f)?;
    d.set_item("d_w", c.d_w)?;
    d.set_item("d_s", c.d_s)?;
    d.set_item("d_alpha", c.d_alpha)?;
    d.set_item("time_exponent", c.time_exponent())?;
    d.set_item("intensity_exponent", c.intensity_exponent())?;
    d.set_item("lifschitz_exponent", c.lifschitz_exponent())?;
    Ok(d)
}

/// Draws of the `alpha/2`-stable subordinator at time `t`.
#[pyfunction]
fn subordinator_samples(alpha: f64, t: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = lab::rng::worker_rng(seed, 0);
    (0..n).map(|_| lab::stable::sample_subordinator_increment(alpha, t, &mut rng)).collect()
}

/// `E_x0 exp(-nu mu(sausage))` on a time grid as `(t, mean, stderr)` rows.
#[pyfunction]
#[pyo3(signature = (graph, x0, t_grid, nu, a, sample_depth, alpha, n_paths, seed, dt=None))]
#[allow(clippy::too_many_arguments)]
fn sausage_functional(
    py: Python<'_>,
    graph: &PyLevelGraph,
    x0: usize,
    t_grid: Vec<f64>,
    nu: f64,
    a: f64,
    sample_depth: u32,
    alpha: f64,
    n_paths: usize,
    seed: u64,
    dt: Option<f64>,
) -> PyResult<Vec<(f64, f64, f64)>> {
    let est = py
        .detach(|| {
            let table = lab::sausage::BallTable::new(&graph.inner, a, sample_depth)?;
            let walk = lab::stable::RandomWalk::new(&graph.inner);
            let mc = lab::sausage::McSettings { alpha, n_samples: n_paths, seed, dt };
            lab::sausage::sausage_functional_curve(&walk, &table, x0, &t_grid, nu, &mc)
        })
        .py()?;
    Ok(est.iter().map(|e| (e.t, e.mean, e.stderr)).collect())
}

/// Fit of `log value = -c t^gamma + b` on the upper half of the times.
#[pyfunction]
fn fit_stretched_exponential<'py>(
    py: Python<'py>,
    times: Vec<f64>,
    values: Vec<f64>,
    gamma: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let f = lab::fit::fit_stretched_exponential(&times, &values, gamma).py()?;
    let d = PyDict::new(py);
    d.set_item("gamma", f.gamma)?;
    d.set_item("c_hat", f.c_hat)?;
    d.set_item("c_stderr", f.c_stderr)?;
    d.set_item("intercept", f.intercept)?;
    d.set_item("r2", f.r2)?;
    d.set_item("t_range", f.t_range)?;
    Ok(d)
}

/// Slope of `log(-log l([0, lambda]))` against `log lambda` on `[lo, hi]`.
#[pyfunction]
fn lifschitz_slope(lambdas: Vec<f64>, cdf: Vec<f64>, lo: f64, hi: f64) -> PyResult<(f64, f64, f64)> {
    let r = lab::fit::lifschitz_slope(&lambdas, &cdf, lo, hi).py()?;
    Ok((r.slope, r.slope_stderr, r.r2))
}

#[pyfunction]
fn m0_scale(t: f64, nu: f64, alpha: f64) -> PyResult<i64> {
    lab::fit::m0_scale(t, nu, alpha).py()
}

#[pyfunction]
fn tauberian_convert(gamma: f64) -> PyResult<f64> {
    lab::fit::tauberian_convert(gamma).py()
}

/// Richardson-extrapolated Brownian Dirichlet eigenvalue of `G^(0)`.
#[pyfunction]
fn lambda_bm(depth: u32) -> PyResult<f64> {
    Ok(lab::fit::lambda_bm_estimate(depth).py()?.extrapolated)
}

/// Runs a lab command into `out` and returns the markdown report.
#[pyfunction]
#[pyo3(signature = (command, out, params=None))]
fn run(py: Python<'_>, command: &str, out: PathBuf, params: Option<Vec<(String, String)>>) -> PyResult<String> {
    let command: Command = command.parse().py()?;
    let mut cfg = ExperimentConfig::new(command);
    cfg.apply(params.unwrap_or_default());
    let outcome = py.detach(|| lab::lab::run(&mut cfg, &out)).py()?;
    if outcome.failures.is_empty() {
        Ok(outcome.report)
    } else {
        Err(PyRuntimeError::new_err(format!("failed checks: {}", outcome.failures.join(", "))))
    }
}

#[pymodule]
#[pyo3(name = "gasket_lab")]
fn gasket_lab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", lab::lab::config::VERSION)?;
    m.add_class::<PyLevelGraph>()?;
    m.add_class::<PyCloud>()?;
    m.add_class::<PyAmbient>()?;
    m.add_function(wrap_pyfunction!(constants, m)?)?;
    m.add_function(wrap_pyfunction!(subordinator_samples, m)?)?;
    m.add_function(wrap_pyfunction!(sausage_functional, m)?)?;
    m.add_function(wrap_pyfunction!(fit_stretched_exponential, m)?)?;
    m.add_function(wrap_pyfunction!(lifschitz_slope, m)?)?;
    m.add_function(wrap_pyfunction!(m0_scale, m)?)?;
    m.add_function(wrap_pyfunction!(tauberian_convert, m)?)?;
    m.add_function(wrap_pyfunction!(lambda_bm, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
