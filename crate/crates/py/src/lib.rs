use fieldlab::config::ExperimentConfig;
use fieldlab::decomposition::{m_norm_l2, m_norm_l2_full};
use fieldlab::field::{CoefficientField, TruncationSpec};
use fieldlab::noise;
use fieldlab::runner;
use fieldlab::stats;
use fieldlab::tower;
use fieldlab::weights;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyBytes;

fn err(e: fieldlab::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py, T: serde::Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Centered law on {-v, 0, +v} with P(+v) = P(-v) = p.
#[pyclass(name = "ThreePointLaw", frozen, module = "fieldlab")]
struct PyThreePointLaw(noise::ThreePointLaw);

#[pymethods]
impl PyThreePointLaw {
    #[new]
    fn new(v: f64, p: f64) -> PyResult<Self> {
        noise::ThreePointLaw::new(v, p).map(Self).map_err(err)
    }

    #[getter]
    fn v(&self) -> f64 {
        self.0.v()
    }

    #[getter]
    fn p(&self) -> f64 {
        self.0.p()
    }

    /// (||e||_1, ||e||_2^2)
    fn moments(&self) -> (f64, f64) {
        let m = self.0.moments();
        (m.l1, m.l2sq)
    }

    fn __repr__(&self) -> String {
        format!("ThreePointLaw(v={}, p={})", self.0.v(), self.0.p())
    }
}

/// Coefficient field of a linear random field, truncated to scales
/// `k_min..=k_max` and lags `0..=lag_max`.
#[pyclass(name = "Field", frozen, module = "fieldlab")]
struct PyField {
    field: CoefficientField,
    trunc: TruncationSpec,
}

#[pymethods]
impl PyField {
    #[staticmethod]
    #[pyo3(signature = (alpha, k_max = 64, lag_max = 32))]
    fn superlinear(alpha: f64, k_max: u32, lag_max: u32) -> PyResult<Self> {
        Ok(Self::build(CoefficientField::superlinear(alpha).map_err(err)?, k_max, lag_max))
    }

    #[staticmethod]
    #[pyo3(signature = (k_max = 64, lag_max = 32))]
    fn l1_not_l2(k_max: u32, lag_max: u32) -> Self {
        Self::build(CoefficientField::l1_not_l2(), k_max, lag_max)
    }

    #[staticmethod]
    fn iid(v: f64, p: f64) -> PyResult<Self> {
        Ok(Self::build(CoefficientField::iid(v, p).map_err(err)?, 1, 0))
    }

    #[getter]
    fn family(&self) -> &'static str {
        self.field.tag()
    }

    #[getter]
    fn k_range(&self) -> (u32, u32) {
        (self.trunc.k_min, self.trunc.k_max)
    }

    fn coefficient(&self, k: u32, u: i64, v: i64) -> Option<f64> {
        self.field.coefficient(k, u, v)
    }

    /// ||m||_2 of the truncated decomposition and the bound on its squared tail.
    fn m_norm(&self) -> PyResult<(f64, f64)> {
        let terms = runner::decompose_field(&self.field, &self.trunc).map_err(err)?;
        let n = m_norm_l2(&terms);
        Ok((n.value, n.tail))
    }

    /// ||m||_2 with every lag kept, scales up to `k_max`.
    fn m_norm_full(&self, k_max: u32) -> PyResult<(f64, f64)> {
        let n = m_norm_l2_full(&self.field, k_max).map_err(err)?;
        Ok((n.value, n.tail))
    }

    /// E S^2 / (n1 n2) over the window.
    fn exact_variance(&self, py: Python<'_>, n1: u64, n2: u64) -> PyResult<f64> {
        py.detach(|| {
            let w = weights::window_weights(&self.field, n1, n2, &self.trunc)?;
            Ok(weights::exact_second_moment(&w, self.field.laws())? / (n1 * n2) as f64)
        })
        .map_err(err)
    }

    /// Normalized partial sums S / sqrt(n1 n2) for replications `0..reps`.
    fn sample(&self, py: Python<'_>, n1: u64, n2: u64, reps: u64, seed: u64) -> PyResult<Vec<f64>> {
        py.detach(|| {
            let w = weights::window_weights(&self.field, n1, n2, &self.trunc)?;
            Ok(weights::sample_partial_sums(&w, self.field.laws(), seed, 0, reps)?
                .into_iter()
                .map(|s| s.normalized)
                .collect())
        })
        .map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Field({}, k={}..={}, lag_max={})", self.field.tag(), self.trunc.k_min, self.trunc.k_max, self.trunc.lag_max)
    }
}

impl PyField {
    fn build(field: CoefficientField, k_max: u32, lag_max: u32) -> Self {
        let trunc = TruncationSpec::for_field(&field, k_max, lag_max);
        Self { field, trunc }
    }
}

#[pyfunction]
#[pyo3(signature = (samples, thresholds = vec![]))]
fn summarize<'py>(py: Python<'py>, samples: Vec<f64>, thresholds: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &stats::summarize(&samples, &thresholds).map_err(err)?)
}

#[pyfunction]
fn ks_distance(samples: Vec<f64>, sigma: f64) -> PyResult<f64> {
    stats::ks_distance_to_normal(&samples, sigma).map(|r| r.statistic).map_err(err)
}

/// (mean|x| / sigma, standard error)
#[pyfunction]
fn mean_abs_ratio(samples: Vec<f64>, sigma: f64) -> PyResult<(f64, f64)> {
    stats::mean_abs_ratio(&samples, sigma).map(|r| (r.ratio, r.stderr)).map_err(err)
}

/// Integer heights of the tower function g_k on its support.
#[pyfunction]
fn tower_heights(k: u32) -> PyResult<Vec<i64>> {
    Ok(tower::TowerFunction::new(tower::TowerScale::new(k).map_err(err)?).heights)
}

/// Nonzero (level, height) pairs of g_k - U^shift g_k.
#[pyfunction]
fn shifted_diff(k: u32, shift: u64) -> PyResult<Vec<(u64, i64)>> {
    let g = tower::TowerFunction::new(tower::TowerScale::new(k).map_err(err)?);
    Ok(tower::shifted_diff(&g, shift).map_err(err)?.entries)
}

#[pyfunction]
fn exceedance_exact<'py>(py: Python<'py>, k: u32) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &tower::exceedance_exact(tower::TowerScale::new(k).map_err(err)?))
}

#[pyfunction]
fn schedule_scales<'py>(py: Python<'py>, levels: u32) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &tower::schedule_scales(levels).map_err(err)?)
}

/// Column-model statistics of the counterexample, in replication order.
#[pyfunction]
fn simulate_counterexample(py: Python<'_>, k: u32, n1: u64, n2: u64, reps: u64, seed: u64) -> PyResult<Vec<f64>> {
    let spec = tower::ColumnSimSpec { k, n1, n2, replications: reps, master_seed: seed };
    py.detach(|| tower::simulate_counterexample(&spec)).map(|r| r.samples).map_err(err)
}

/// Runs a JSON experiment config in memory; returns {file name: bytes},
/// including `manifest.json`.
#[pyfunction]
fn run_experiment<'py>(py: Python<'py>, config_json: &str) -> PyResult<Vec<(String, Bound<'py, PyBytes>)>> {
    let cfg = ExperimentConfig::from_json(config_json).map_err(err)?;
    let run = py.detach(|| runner::run_experiment(&cfg)).map_err(err)?;
    let mut out: Vec<_> = run.files.iter().map(|f| (f.name.clone(), PyBytes::new(py, &f.bytes))).collect();
    out.push(("manifest.json".into(), PyBytes::new(py, run.manifest_json().as_bytes())));
    Ok(out)
}

/// [(check, passed, detail)] from the exact self-test.
#[pyfunction]
fn self_test() -> Vec<(String, bool, String)> {
    fieldlab::self_test::run_self_test().into_iter().map(|r| (r.name, r.passed, r.detail)).collect()
}

#[pymodule]
#[pyo3(name = "fieldlab")]
fn fieldlab_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyThreePointLaw>()?;
    m.add_class::<PyField>()?;
    m.add_function(wrap_pyfunction!(summarize, m)?)?;
    m.add_function(wrap_pyfunction!(ks_distance, m)?)?;
    m.add_function(wrap_pyfunction!(mean_abs_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(tower_heights, m)?)?;
    m.add_function(wrap_pyfunction!(shifted_diff, m)?)?;
    m.add_function(wrap_pyfunction!(exceedance_exact, m)?)?;
    m.add_function(wrap_pyfunction!(schedule_scales, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_counterexample, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(self_test, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
