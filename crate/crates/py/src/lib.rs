//! Python bindings for the surrogate toolkit.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use surrogate_core::analysis::welch_t_test;
use surrogate_core::config::CliConfig;
use surrogate_core::forest::{
    fit_forest, gini_impurity, load_forest, metrics_from_confusion, save_forest, ConfusionMatrix, FeatureMatrix,
    Forest, Hyperparams,
};
use surrogate_core::labeling::{compute_quantile, label_values, LabelSpec};
use surrogate_core::pipeline::{Pipeline, StageOutcome};
use surrogate_core::schema::{write_runs, ParameterSchema};
use surrogate_core::toyabm::{generate_corpus, ToyWorld, ToyWorldSpec, CALIBRATED_NOISE};
use surrogate_core::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } | Error::MissingArtifact(_) => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

#[pyclass(name = "Schema", module = "surrogate", frozen)]
struct PySchema {
    inner: ParameterSchema,
}

#[pymethods]
impl PySchema {
    /// The bundled housing-policy schema.
    #[staticmethod]
    fn default() -> Self {
        Self {
            inner: ParameterSchema::default_schema(),
        }
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        ParameterSchema::parse(text).map(|inner| Self { inner }).map_err(to_py)
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    fn names(&self) -> Vec<String> {
        self.inner.names().map(str::to_owned).collect()
    }

    fn regions(&self) -> Vec<String> {
        self.inner.region().alternatives.clone()
    }

    fn policies(&self) -> Vec<String> {
        self.inner.policy().alternatives.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "Schema({} continuous, {} discrete)",
            self.inner.continuous().len(),
            self.inner.discrete().len()
        )
    }
}

#[pyclass(name = "Forest", module = "surrogate", frozen)]
struct PyForest {
    inner: Forest,
}

#[pymethods]
impl PyForest {
    /// Fits a forest on a dense numeric matrix with 0/1 labels.
    #[staticmethod]
    #[allow(clippy::too_many_arguments)]
    #[pyo3(signature = (x, y, n_trees = 100, max_depth = 15, seed = 0, features_per_split = None, min_samples_leaf = 1))]
    fn fit(
        py: Python<'_>,
        x: Vec<Vec<f64>>,
        y: Vec<u8>,
        n_trees: usize,
        max_depth: usize,
        seed: u64,
        features_per_split: Option<usize>,
        min_samples_leaf: usize,
    ) -> PyResult<Self> {
        let params = Hyperparams {
            n_trees,
            max_depth,
            features_per_split,
            min_samples_leaf,
        };
        py.detach(|| {
            let matrix = FeatureMatrix::from_rows(&x)?;
            fit_forest(&matrix, &y, &params, seed)
        })
        .map(|inner| Self { inner })
        .map_err(to_py)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        load_forest(&path).map(|inner| Self { inner }).map_err(to_py)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_forest(&self.inner, &path).map_err(to_py)
    }

    /// `(class, vote_fraction)` per row.
    fn predict(&self, py: Python<'_>, x: Vec<Vec<f64>>) -> PyResult<Vec<(u8, f64)>> {
        py.detach(|| {
            let matrix = FeatureMatrix::from_rows(&x)?;
            if matrix.n_cols() != self.inner.n_cols() {
                return Err(Error::DimensionMismatch {
                    expected: self.inner.n_cols(),
                    actual: matrix.n_cols(),
                });
            }
            let matrix = FeatureMatrix::new(
                (0..matrix.n_rows()).flat_map(|i| matrix.row(i).to_vec()).collect(),
                self.inner.encoding().clone(),
            )?;
            self.inner.predict_matrix(&matrix)
        })
        .map(|ps| ps.into_iter().map(|p| (p.class, p.vote_fraction)).collect())
        .map_err(to_py)
    }

    #[getter]
    fn n_trees(&self) -> usize {
        self.inner.trees().len()
    }

    #[getter]
    fn n_features(&self) -> usize {
        self.inner.n_cols()
    }
}

/// Accuracy, precision, recall and F1 of a confusion matrix.
#[pyfunction]
#[pyo3(name = "metrics")]
fn py_metrics(tn: u64, fp: u64, fn_: u64, tp: u64) -> (Option<f64>, Option<f64>, Option<f64>, Option<f64>) {
    let m = metrics_from_confusion(&ConfusionMatrix { tn, fp, fn_, tp });
    (m.accuracy, m.precision, m.recall, m.f1)
}

/// `(t, df, p)` of Welch's unequal-variance t-test.
#[pyfunction]
#[pyo3(name = "welch")]
fn py_welch(a: Vec<f64>, b: Vec<f64>) -> PyResult<(f64, f64, f64)> {
    welch_t_test(&a, &b).map(|r| (r.t, r.df, r.p)).map_err(to_py)
}

#[pyfunction]
#[pyo3(name = "quantile")]
fn py_quantile(values: Vec<f64>, q: f64) -> PyResult<f64> {
    compute_quantile(&values, q).map_err(to_py)
}

#[pyfunction]
#[pyo3(name = "gini")]
fn py_gini(negative: u32, positive: u32) -> PyResult<f64> {
    gini_impurity([negative, positive]).map_err(to_py)
}

/// Optimal (1) when `high` reaches its upper quantile and `low` stays at or
/// below its lower quantile.
#[pyfunction]
#[pyo3(name = "label", signature = (high, low, high_quantile = 0.75, low_quantile = 0.25))]
fn py_label(high: Vec<f64>, low: Vec<f64>, high_quantile: f64, low_quantile: f64) -> PyResult<Vec<u32>> {
    let mut spec = LabelSpec::new("high", "low");
    spec.high_quantile = high_quantile;
    spec.low_quantile = low_quantile;
    label_values(&high, &low, &spec)
        .map(|v| v.into_iter().map(u32::from).collect())
        .map_err(to_py)
}

/// Writes a synthetic run corpus from the default toy world.
#[pyfunction]
#[pyo3(name = "toy_corpus", signature = (path, n, seed = 0, noise = None))]
fn py_toy_corpus(py: Python<'_>, path: PathBuf, n: usize, seed: u64, noise: Option<f64>) -> PyResult<usize> {
    py.detach(|| {
        let schema = ParameterSchema::default_schema();
        let spec = ToyWorldSpec::default_preset(&schema).with_noise(noise.unwrap_or(CALIBRATED_NOISE));
        let world = ToyWorld::new(&spec, &schema)?;
        let corpus = generate_corpus(&world, &schema, n, seed)?;
        let file = std::fs::File::create(&path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
        write_runs(std::io::BufWriter::new(file), &schema, &corpus.indicator_names, &corpus.records)?;
        Ok(corpus.records.len())
    })
    .map_err(to_py)
}

/// Runs every stage for a config file; returns `(stage, "ran" | "skipped")`.
#[pyfunction]
#[pyo3(name = "run_pipeline", signature = (config, seed = None, out = None, desk_scale = false))]
fn py_run_pipeline(
    py: Python<'_>,
    config: PathBuf,
    seed: Option<u64>,
    out: Option<PathBuf>,
    desk_scale: bool,
) -> PyResult<Vec<(String, String)>> {
    py.detach(|| {
        let mut c = CliConfig::load(&config)?;
        if let Some(s) = seed {
            c.seed = s;
        }
        if let Some(o) = out {
            c.out = o;
        }
        if desk_scale {
            c.desk_scale();
        }
        let mut p = Pipeline::open(c)?;
        p.run_all()
    })
    .map(|v| {
        v.into_iter()
            .map(|(s, o)| {
                let word = match o {
                    StageOutcome::Ran => "ran",
                    StageOutcome::Skipped => "skipped",
                };
                (s.name().to_string(), word.to_string())
            })
            .collect()
    })
    .map_err(to_py)
}

#[pymodule]
fn surrogate(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySchema>()?;
    m.add_class::<PyForest>()?;
    m.add_function(wrap_pyfunction!(py_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(py_welch, m)?)?;
    m.add_function(wrap_pyfunction!(py_quantile, m)?)?;
    m.add_function(wrap_pyfunction!(py_gini, m)?)?;
    m.add_function(wrap_pyfunction!(py_label, m)?)?;
    m.add_function(wrap_pyfunction!(py_toy_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(py_run_pipeline, m)?)?;
    Ok(())
}
