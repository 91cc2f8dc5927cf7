//! Python module `geocalc_py`: meshes, energy models, geodesic calculus,
//! curvature, and the experiment runner. Points and tangents are flat
//! lists of floats.

use std::path::PathBuf;
use std::sync::Arc;

use geocalc::curvature::{sectional_curvature, CurvatureQuery};
use geocalc::energy::{make_embedded_model, make_flat_model, EnergyModel, SphereChart, TorusChart};
use geocalc::experiments::{run, AnalyticOracle, ExperimentConfig};
use geocalc::geodesic::{discrete_exp, discrete_log, geodesic_bvp};
use geocalc::shells::{self, hessian_eigenmodes, shell_energy_model, GaugeSpec, ShellParams};
use geocalc::solver::NewtonConfig;
use geocalc::transport::{transport_step, CovOptions, Variant};
use nalgebra::DVector;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn err(e: geocalc::Error) -> PyErr {
    match e {
        geocalc::Error::InvalidInput(_) | geocalc::Error::DimensionMismatch { .. } | geocalc::Error::InvalidMesh(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn vec(x: Vec<f64>) -> DVector<f64> {
    DVector::from_vec(x)
}

fn list(x: &DVector<f64>) -> Vec<f64> {
    x.as_slice().to_vec()
}

fn variant(name: &str) -> PyResult<Variant> {
    name.parse().map_err(|e: geocalc::Error| PyValueError::new_err(e.to_string()))
}

/// Triangle mesh with stacked vertex positions.
#[pyclass(name = "Mesh", module = "geocalc_py")]
#[derive(Clone)]
struct Mesh(shells::ShellMesh);

#[pymethods]
impl Mesh {
    #[staticmethod]
    fn sphere(level: usize) -> PyResult<Self> {
        shells::make_sphere_shell(level).map(Mesh).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (resolution, zeta=0.0, eta=0.0))]
    fn bump_plate(resolution: usize, zeta: f64, eta: f64) -> PyResult<Self> {
        shells::make_bump_plate(resolution, zeta, eta).map(Mesh).map_err(err)
    }

    /// Returns the mesh and its foot vertices.
    #[staticmethod]
    fn three_branch(level: usize) -> PyResult<(Self, Vec<usize>)> {
        let (m, foot) = shells::make_three_branch(level).map_err(err)?;
        Ok((Mesh(m), foot))
    }

    #[staticmethod]
    fn read_obj(path: PathBuf) -> PyResult<Self> {
        shells::ShellMesh::read_obj(&path).map(Mesh).map_err(err)
    }

    fn write_obj(&self, path: PathBuf) -> PyResult<()> {
        self.0.write_obj(&path).map_err(err)
    }

    /// Same connectivity, new vertex positions.
    fn with_positions(&self, positions: Vec<f64>) -> PyResult<Self> {
        self.0.with_positions(vec(positions)).map(Mesh).map_err(err)
    }

    #[getter]
    fn positions(&self) -> Vec<f64> {
        list(&self.0.positions)
    }

    #[getter]
    fn triangles(&self) -> Vec<[usize; 3]> {
        self.0.topology.triangles().to_vec()
    }

    #[getter]
    fn boundary_vertices(&self) -> Vec<usize> {
        self.0.topology.boundary_vertices().to_vec()
    }

    fn vertex_count(&self) -> usize {
        self.0.vertex_count()
    }

    fn __repr__(&self) -> String {
        format!("Mesh(vertices={}, triangles={})", self.0.vertex_count(), self.0.topology.triangles().len())
    }
}

/// A deformation energy `W[a, b]` with the operations built on it.
#[pyclass(name = "Model", module = "geocalc_py", frozen)]
struct Model {
    inner: Arc<dyn EnergyModel>,
    shell: Option<(shells::ShellMesh, ShellParams, GaugeSpec)>,
}

impl Model {
    fn newton(&self) -> NewtonConfig {
        NewtonConfig::for_model(self.inner.as_ref())
    }
}

#[pymethods]
impl Model {
    /// `W[a, b] = |a − b|²` in `d` dimensions.
    #[staticmethod]
    fn flat(d: usize) -> PyResult<Self> {
        if d == 0 {
            return Err(PyValueError::new_err("dimension must be positive"));
        }
        Ok(Model { inner: Arc::new(make_flat_model(d)), shell: None })
    }

    /// Torus chart `(u, v)` with center-line radius `major` and tube radius `minor`.
    #[staticmethod]
    fn torus(major: f64, minor: f64) -> PyResult<Self> {
        if !(major > minor && minor > 0.0) {
            return Err(PyValueError::new_err("torus needs major > minor > 0"));
        }
        let m = make_embedded_model(TorusChart::new(major, minor)).map_err(err)?;
        Ok(Model { inner: Arc::new(m), shell: None })
    }

    /// Unit sphere chart `(θ, φ)`.
    #[staticmethod]
    fn sphere_chart() -> PyResult<Self> {
        Ok(Model { inner: Arc::new(make_embedded_model(SphereChart).map_err(err)?), shell: None })
    }

    /// Discrete shell energy relative to `mesh`. Rigid motions are
    /// projected out unless `fixed_vertices` is given.
    #[staticmethod]
    #[pyo3(signature = (mesh, bending_weight=1e-2, mu_mem=1.0, lambda_mem=1.0, fixed_vertices=None))]
    fn shell(
        mesh: &Mesh,
        bending_weight: f64,
        mu_mem: f64,
        lambda_mem: f64,
        fixed_vertices: Option<Vec<usize>>,
    ) -> PyResult<Self> {
        let params = ShellParams { mu_mem, lambda_mem, bending_weight };
        let gauge = fixed_vertices.map_or(GaugeSpec::ProjectRigid, GaugeSpec::FixedVertices);
        let m = shell_energy_model(&mesh.0, params, gauge.clone()).map_err(err)?;
        Ok(Model { inner: Arc::new(m), shell: Some((mesh.0.clone(), params, gauge)) })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn metric_scale(&self) -> f64 {
        self.inner.metric_scale()
    }

    fn energy(&self, a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
        self.inner.energy(&vec(a), &vec(b)).map_err(err)
    }

    fn grad1(&self, a: Vec<f64>, b: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.grad1(&vec(a), &vec(b)).map(|g| list(&g)).map_err(err)
    }

    fn grad2(&self, a: Vec<f64>, b: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.grad2(&vec(a), &vec(b)).map(|g| list(&g)).map_err(err)
    }

    /// Discrete `k`-geodesic from `ya` to `yb`: `(points, energy)`.
    fn geodesic(&self, py: Python<'_>, ya: Vec<f64>, yb: Vec<f64>, k: usize) -> PyResult<(Vec<Vec<f64>>, f64)> {
        let cfg = self.newton();
        let p = py
            .allow_threads(|| geodesic_bvp(self.inner.as_ref(), &vec(ya), &vec(yb), k, None, &cfg))
            .map_err(err)?;
        Ok((p.points.iter().map(list).collect(), p.energy))
    }

    fn log(&self, py: Python<'_>, ya: Vec<f64>, yb: Vec<f64>, k: usize) -> PyResult<Vec<f64>> {
        let cfg = self.newton();
        py.allow_threads(|| discrete_log(self.inner.as_ref(), &vec(ya), &vec(yb), k, &cfg))
            .map(|v| list(&v))
            .map_err(err)
    }

    fn exp(&self, py: Python<'_>, y: Vec<f64>, v: Vec<f64>, k: usize) -> PyResult<Vec<f64>> {
        let cfg = self.newton();
        py.allow_threads(|| discrete_exp(self.inner.as_ref(), &vec(y), &vec(v), k, &cfg))
            .map(|x| list(&x))
            .map_err(err)
    }

    /// Transport of `w` from `y` to `y + v` by one ladder step.
    fn transport(&self, py: Python<'_>, y: Vec<f64>, v: Vec<f64>, w: Vec<f64>) -> PyResult<Vec<f64>> {
        let cfg = self.newton();
        py.allow_threads(|| transport_step(self.inner.as_ref(), &vec(y), &vec(v), &vec(w), &cfg))
            .map(|x| list(&x))
            .map_err(err)
    }

    /// Discrete sectional curvature of the plane spanned by `v`, `w` at `y`.
    #[pyo3(signature = (y, v, w, tau=1e-2, variant="central", beta=None))]
    fn sectional_curvature(
        &self,
        py: Python<'_>,
        y: Vec<f64>,
        v: Vec<f64>,
        w: Vec<f64>,
        tau: f64,
        variant: &str,
        beta: Option<f64>,
    ) -> PyResult<f64> {
        let mut q = CurvatureQuery::new(vec(y), vec(v), vec(w), tau, self::variant(variant)?);
        q.beta = beta;
        let opts = CovOptions::for_model(self.inner.as_ref());
        py.allow_threads(|| sectional_curvature(self.inner.as_ref(), &q, &opts))
            .map(|r| r.sectional)
            .map_err(err)
    }

    /// Lowest `k` Hessian eigenpairs at the reference shape of a shell model.
    fn eigenmodes(&self, py: Python<'_>, k: usize) -> PyResult<Vec<(f64, Vec<f64>)>> {
        let (mesh, params, gauge) =
            self.shell.as_ref().ok_or_else(|| PyValueError::new_err("eigenmodes need a shell model"))?;
        let modes = py.allow_threads(|| hessian_eigenmodes(mesh, params, gauge, k)).map_err(err)?;
        Ok(modes.into_iter().map(|m| (m.eigenvalue, list(&m.vector))).collect())
    }
}

/// Gaussian curvature of the torus chart at `(u, v)`.
#[pyfunction]
fn torus_gaussian_curvature(major: f64, minor: f64, u: f64, v: f64) -> f64 {
    AnalyticOracle::torus(major, minor).gaussian_curvature([u, v])
}

/// Runs an experiment from a (possibly partial) JSON config and returns the
/// outcome as JSON.
#[pyfunction]
#[pyo3(signature = (config_json, out_dir=None))]
fn run_experiment(py: Python<'_>, config_json: &str, out_dir: Option<PathBuf>) -> PyResult<String> {
    let mut config = ExperimentConfig::from_json(config_json).map_err(err)?;
    if let Some(d) = out_dir {
        config.out_dir = d;
    }
    let outcome = py.allow_threads(|| run(&config)).map_err(err)?;
    serde_json::to_string(&outcome).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
fn geocalc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Mesh>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(torus_gaussian_curvature, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
