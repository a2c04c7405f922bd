//! Python bindings: configuration, data generation, per-task datasets,
//! model training and prediction, and the metrics.

use std::path::PathBuf;

use hs::harness::{self, ExperimentConfig, Task};
use hs::metrics::{self, EvalReport};
use hs::model::{Family, Regressor, TrainedModel};
use hs::numerics::Matrix;
use hs::windows::Dataset;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: hs::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn task(n: u8) -> PyResult<Task> {
    Task::from_number(n).map_err(err)
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    Matrix::from_rows(&rows).map_err(err)
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

/// Experiment configuration. `Config()` gives the bundled defaults.
#[pyclass(name = "Config", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: ExperimentConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    fn new() -> Self {
        PyConfig {
            inner: ExperimentConfig::default(),
        }
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(PyConfig {
            inner: ExperimentConfig::from_toml(text).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyConfig {
            inner: ExperimentConfig::load(path).map_err(err)?,
        })
    }

    fn to_toml(&self) -> PyResult<String> {
        self.inner.to_toml().map_err(err)
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.seed = seed;
    }

    #[getter]
    fn output_dir(&self) -> PathBuf {
        self.inner.output_dir.clone()
    }

    #[setter]
    fn set_output_dir(&mut self, dir: PathBuf) {
        self.inner.output_dir = dir;
    }

    #[getter]
    fn families(&self) -> Vec<&'static str> {
        self.inner.families.iter().map(|f| f.name()).collect()
    }
}

/// Windowed train and test sets for one task, in physical units.
#[pyclass(name = "TaskData", frozen)]
struct PyTaskData {
    inner: harness::TaskData,
}

fn dataset_dict<'py>(py: Python<'py>, ds: &Dataset) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("timestamps", ds.timestamps.clone())?;
    d.set_item("x", rows(&ds.x))?;
    d.set_item("y", ds.y.clone())?;
    Ok(d)
}

#[pymethods]
impl PyTaskData {
    #[getter]
    fn task(&self) -> u8 {
        self.inner.task.number()
    }

    #[getter]
    fn window_hours(&self) -> usize {
        self.inner.train.window_hours
    }

    /// Dict with `timestamps`, `x` (rows of 2W values) and `y`.
    #[getter]
    fn train<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        dataset_dict(py, &self.inner.train)
    }

    #[getter]
    fn test<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        dataset_dict(py, &self.inner.test)
    }

    fn __len__(&self) -> usize {
        self.inner.train.len()
    }
}

/// A trained regressor of any family.
#[pyclass(name = "Model", frozen)]
struct PyModel {
    inner: TrainedModel,
}

#[pymethods]
impl PyModel {
    #[getter]
    fn family(&self) -> &'static str {
        self.inner.family().name()
    }

    /// Predicts from rows of 2W physical inputs (discharge block, then stage).
    fn predict(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        self.inner.predict(&matrix(x)?).map_err(err)
    }

    fn hyperparams(&self) -> Vec<(String, String)> {
        self.inner.hyperparams()
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyModel {
            inner: TrainedModel::from_json(text).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyModel {
            inner: TrainedModel::load(path).map_err(err)?,
        })
    }
}

fn report_dict<'py>(py: Python<'py>, r: &EvalReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("task", r.task)?;
    d.set_item("model", &r.model_name)?;
    d.set_item("n_samples", r.n_samples)?;
    d.set_item("mse", r.mse)?;
    d.set_item("rmse", r.rmse)?;
    d.set_item("fer", r.fer)?;
    d.set_item("max_error", r.max_error)?;
    d.set_item("max_error_timestamp", r.max_error_timestamp)?;
    d.set_item("bias", r.bias)?;
    d.set_item("error_std", r.error_std)?;
    Ok(d)
}

/// Synthetic observed records: name -> (timestamps, values).
#[pyfunction]
fn generate<'py>(py: Python<'py>, config: &PyConfig) -> PyResult<Bound<'py, PyDict>> {
    let data = py.detach(|| harness::generate(&config.inner)).map_err(err)?;
    let d = PyDict::new(py);
    for (name, ts) in [
        ("q_upstream", &data.q),
        ("h_downstream", &data.h),
        ("target_task1", &data.target_task1),
        ("target_task2", &data.target_task2),
    ] {
        d.set_item(name, (ts.timestamps().to_vec(), ts.values().to_vec()))?;
    }
    Ok(d)
}

/// Generates the records and builds the datasets of task 1 or 2.
#[pyfunction]
fn prepare_task(py: Python<'_>, config: &PyConfig, task_number: u8) -> PyResult<PyTaskData> {
    let t = task(task_number)?;
    let inner = py
        .detach(|| {
            let data = harness::generate(&config.inner)?;
            harness::prepare_task(&data, &config.inner, t)
        })
        .map_err(err)?;
    Ok(PyTaskData { inner })
}

/// Trains one family on a task's training set with the configured settings.
#[pyfunction]
fn train(py: Python<'_>, config: &PyConfig, data: &PyTaskData, family: &str) -> PyResult<PyModel> {
    let f = Family::parse(family).map_err(err)?;
    let d = &data.inner;
    let inner = py
        .detach(|| harness::train_family(f, &d.train, &config.inner, d.task))
        .map_err(err)?;
    Ok(PyModel { inner })
}

/// Runs every configured task end to end and writes the outputs.
#[pyfunction]
#[pyo3(signature = (config, tasks = vec![1, 2]))]
fn run_experiment<'py>(py: Python<'py>, config: &PyConfig, tasks: Vec<u8>) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let tasks = tasks.into_iter().map(task).collect::<PyResult<Vec<_>>>()?;
    let reports = py
        .detach(|| harness::run_tasks(&config.inner, &tasks))
        .map_err(err)?;
    reports.iter().map(|r| report_dict(py, r)).collect()
}

#[pyfunction]
fn mse(y_true: Vec<f64>, y_pred: Vec<f64>) -> PyResult<f64> {
    metrics::mse(&y_true, &y_pred).map_err(err)
}

#[pyfunction]
fn rmse(y_true: Vec<f64>, y_pred: Vec<f64>) -> PyResult<f64> {
    metrics::rmse(&y_true, &y_pred).map_err(err)
}

#[pyfunction]
fn fer(mse_model: f64, mse_reg: f64) -> PyResult<f64> {
    metrics::fer(mse_model, mse_reg).map_err(err)
}

/// Largest absolute error and its index.
#[pyfunction]
fn max_error(y_true: Vec<f64>, y_pred: Vec<f64>) -> PyResult<(f64, usize)> {
    metrics::max_error(&y_true, &y_pred).map_err(err)
}

#[pymodule]
fn hydrosurrogate(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyTaskData>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(prepare_task, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(mse, m)?)?;
    m.add_function(wrap_pyfunction!(rmse, m)?)?;
    m.add_function(wrap_pyfunction!(fer, m)?)?;
    m.add_function(wrap_pyfunction!(max_error, m)?)?;
    Ok(())
}
