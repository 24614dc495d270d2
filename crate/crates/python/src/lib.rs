//! Python bindings. Structured reports cross the boundary as JSON and come
//! back as plain dicts and lists.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::Serialize;

use weinstein_lab::cli::{self, Command, Output, RunConfig};
use weinstein_lab::continuation::{run_ladder as ladder_run, DEFAULT_LADDER};
use weinstein_lab::critfinder::{find_critical_points as find_crit, CritRecord, SeedPlan};
use weinstein_lab::fibration::{build_thimble as thimble, fiber_samples, lefschetz_alignment, ThimbleOptions};
use weinstein_lab::gluing::{build_glued, verify_glued};
use weinstein_lab::jetcalc::{eval_jet2, symplectic_sample, ChartPoint};
use weinstein_lab::scenes::{builtin_scene, SceneParams, SceneSpec};
use weinstein_lab::LabError;

fn err(e: LabError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// A built-in scene: `local_nc`, `cpn_o2h` or `cpn_x_cpn`.
#[pyclass(frozen)]
struct Scene {
    inner: SceneSpec,
}

#[pymethods]
impl Scene {
    /// `params` is a JSON object with the keys of the config `params` block.
    #[new]
    #[pyo3(signature = (name, n=None, params=None))]
    fn new(name: &str, n: Option<usize>, params: Option<&str>) -> PyResult<Self> {
        let mut p: SceneParams = match params {
            Some(s) => serde_json::from_str(s).map_err(|e| PyValueError::new_err(e.to_string()))?,
            None => SceneParams::default(),
        };
        if n.is_some() {
            p.n = n;
        }
        Ok(Scene {
            inner: builtin_scene(name, &p).map_err(err)?,
        })
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    /// Real dimension of a chart.
    #[getter]
    fn real_dim(&self) -> usize {
        self.inner.real_dim()
    }

    #[getter]
    fn n_charts(&self) -> usize {
        self.inner.n_charts()
    }

    /// `phi_eps` at real chart coordinates.
    #[pyo3(signature = (coords, eps, chart=0))]
    fn phi(&self, coords: Vec<f64>, eps: f64, chart: usize) -> PyResult<f64> {
        let jet = eval_jet2(&self.inner, &ChartPoint::new(chart, coords), eps).map_err(err)?;
        Ok(jet.value)
    }

    /// `(value, gradient, hessian)` of `phi_eps`.
    #[pyo3(signature = (coords, eps, chart=0))]
    fn jet(&self, coords: Vec<f64>, eps: f64, chart: usize) -> PyResult<(f64, Vec<f64>, Vec<Vec<f64>>)> {
        let jet = eval_jet2(&self.inner, &ChartPoint::new(chart, coords), eps).map_err(err)?;
        let d = jet.dim();
        let hess = (0..d).map(|i| (0..d).map(|j| jet.hess[(i, j)]).collect()).collect();
        Ok((jet.value, jet.grad.iter().copied().collect(), hess))
    }

    /// Liouville vector field `Z_eps`.
    #[pyo3(signature = (coords, eps, chart=0))]
    fn liouville(&self, coords: Vec<f64>, eps: f64, chart: usize) -> PyResult<Vec<f64>> {
        let s = symplectic_sample(&self.inner, &ChartPoint::new(chart, coords), eps).map_err(err)?;
        Ok(s.liouville.iter().copied().collect())
    }

    fn __repr__(&self) -> String {
        format!("Scene({:?}, n={})", self.inner.name, self.inner.n)
    }
}

#[pyclass(frozen, get_all)]
struct CritPoint {
    chart: usize,
    coords: Vec<f64>,
    eps: f64,
    value: f64,
    grad_norm: f64,
    index: usize,
    nullity: usize,
    spectrum: Vec<f64>,
}

#[pymethods]
impl CritPoint {
    fn __repr__(&self) -> String {
        format!(
            "CritPoint(chart={}, index={}, nullity={}, value={:.6})",
            self.chart, self.index, self.nullity, self.value
        )
    }
}

impl From<CritRecord> for CritPoint {
    fn from(r: CritRecord) -> Self {
        CritPoint {
            chart: r.point.chart,
            coords: r.point.coords,
            eps: r.eps,
            value: r.value,
            grad_norm: r.grad_norm,
            index: r.index,
            nullity: r.nullity,
            spectrum: r.spectrum,
        }
    }
}

#[pyfunction]
#[pyo3(signature = (scene, eps, seed=0))]
fn find_critical_points(scene: &Scene, eps: f64, seed: u64) -> PyResult<Vec<CritPoint>> {
    let (recs, _) = find_crit(&scene.inner, eps, &SeedPlan::with_seed(seed)).map_err(err)?;
    Ok(recs.into_iter().map(CritPoint::from).collect())
}

/// Continuation over a descending `eps` ladder; returns the full run.
#[pyfunction]
#[pyo3(signature = (scene, ladder=None, seed=0))]
fn run_ladder(py: Python<'_>, scene: &Scene, ladder: Option<Vec<f64>>, seed: u64) -> PyResult<Py<PyAny>> {
    let ladder = ladder.unwrap_or_else(|| DEFAULT_LADDER.to_vec());
    let run = ladder_run(&scene.inner, &ladder, &SeedPlan::with_seed(seed)).map_err(err)?;
    to_py(py, &run)
}

/// Thimble mesh over `(0, eps]` from the origin of the local model.
#[pyfunction]
#[pyo3(signature = (scene, eps, angular=16))]
fn build_thimble(py: Python<'_>, scene: &Scene, eps: f64, angular: usize) -> PyResult<Py<PyAny>> {
    let p = ChartPoint::new(0, vec![0.0; scene.inner.real_dim()]);
    let opts = ThimbleOptions {
        angular,
        ..Default::default()
    };
    to_py(py, &thimble(&scene.inner, &p, eps, &opts).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (scene, eps, samples=100, seed=0))]
fn alignment(py: Python<'_>, scene: &Scene, eps: f64, samples: usize, seed: u64) -> PyResult<Py<PyAny>> {
    let pts = fiber_samples(&scene.inner, eps, 1e-3, samples, seed).map_err(err)?;
    to_py(py, &lefschetz_alignment(&scene.inner, eps, &pts).map_err(err)?)
}

/// Verification report of the glued structure on the two-dimensional local model.
#[pyfunction]
#[pyo3(signature = (eps=0.02, eps0=0.25, samples=1000, seed=0))]
fn glue(py: Python<'_>, eps: f64, eps0: f64, samples: usize, seed: u64) -> PyResult<Py<PyAny>> {
    let s = builtin_scene("local_nc", &SceneParams::with_n(2)).map_err(err)?;
    let gs = build_glued(&s, &ChartPoint::new(0, vec![0.0; 4]), eps0, eps).map_err(err)?;
    to_py(py, &verify_glued(&gs, samples, seed).map_err(err)?)
}

/// Runs a CLI command from a JSON config string; returns `(passed, rows)`.
#[pyfunction]
#[pyo3(signature = (command, config="{}", out_dir=None))]
fn run_command(py: Python<'_>, command: &str, config: &str, out_dir: Option<&str>) -> PyResult<(bool, Py<PyAny>)> {
    let cmd = match command {
        "crit" => Command::Crit,
        "ladder" => Command::Ladder,
        "thimble" => Command::Thimble,
        "glue" => Command::Glue,
        "checkall" => Command::Checkall,
        other => return Err(PyValueError::new_err(format!("unknown command {other:?}"))),
    };
    let cfg = RunConfig::from_json(config).and_then(|c| c.resolve(cmd, None)).map_err(err)?;
    let (dir, keep) = match out_dir {
        Some(d) => (std::path::PathBuf::from(d), true),
        None => (std::env::temp_dir().join(format!("weinstein-lab-py-{}", std::process::id())), false),
    };
    let out = Output {
        dir: dir.clone(),
        json: keep,
        csv: keep,
    };
    let outcome = cli::run(&cfg, &out).map_err(err)?;
    Ok((outcome.passed(), to_py(py, &outcome.rows)?))
}

#[pymodule]
fn weinstein_lab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Scene>()?;
    m.add_class::<CritPoint>()?;
    m.add_function(wrap_pyfunction!(find_critical_points, m)?)?;
    m.add_function(wrap_pyfunction!(run_ladder, m)?)?;
    m.add_function(wrap_pyfunction!(build_thimble, m)?)?;
    m.add_function(wrap_pyfunction!(alignment, m)?)?;
    m.add_function(wrap_pyfunction!(glue, m)?)?;
    m.add_function(wrap_pyfunction!(run_command, m)?)?;
    Ok(())
}
