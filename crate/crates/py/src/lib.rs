//! Python bindings for fabula-core.

use std::collections::HashMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use fabula::corpus::{self, HedonometerLexicon};
use fabula::frames::{self as fr, FrameSeq};
use fabula::learn::{self, FeatureMatrix, TrainConfig};
use fabula::metrics;
use fabula::shapes::{self, ShapeParams};
use fabula::textsim;
use fabula::{AnalogyDimension, MoralTag};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Lowercased word tokens.
#[pyfunction]
fn tokenize(text: &str) -> Vec<String> {
    textsim::tokenize(text).tokens().to_vec()
}

#[pyfunction]
fn cosine(u: Vec<f64>, v: Vec<f64>) -> PyResult<f64> {
    textsim::cosine(&u, &v).map_err(value_err)
}

#[pyfunction]
fn hash_embedding(key: &str, dimension: usize, seed: u64) -> Vec<f64> {
    textsim::hash_embedding(key, dimension, seed)
}

#[pyfunction]
fn edit_distance(a: Vec<String>, b: Vec<String>) -> usize {
    fr::edit_distance(&a, &b)
}

/// Distance with `reference` as the reference story.
#[pyfunction]
fn scaled_frame_distance(reference: Vec<String>, candidate: Vec<String>) -> PyResult<f64> {
    let to_seq = |id: &str, labels: &[String]| FrameSeq {
        story_id: id.to_string(),
        frames: labels.to_vec(),
    };
    fr::scaled_frame_distance(&to_seq("reference", &reference), &to_seq("candidate", &candidate)).map_err(value_err)
}

/// Arc profile of `text` as a dict with averages, levels and arc name.
#[pyfunction]
#[pyo3(signature = (text, lexicon, window=30, neutral=5.4, band=0.2))]
fn arc_profile<'py>(
    py: Python<'py>,
    text: &str,
    lexicon: HashMap<String, f64>,
    window: usize,
    neutral: f64,
    band: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let mut entries: Vec<(String, f64)> = lexicon.into_iter().collect();
    entries.sort_by(|a, b| a.0.cmp(&b.0));
    let lex = HedonometerLexicon::from_entries(entries).map_err(value_err)?;
    let params = ShapeParams { window, neutral, band };
    let (profile, series) = shapes::arc_profile("text", text, &lex, params).map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("begin_avg", profile.begin_avg)?;
    d.set_item("mid_avg", profile.mid_avg)?;
    d.set_item("end_avg", profile.end_avg)?;
    d.set_item("levels", shapes::levels_string(&profile.levels))?;
    d.set_item("arc", profile.arc.to_string())?;
    d.set_item("coverage", profile.coverage)?;
    d.set_item("series", series.values)?;
    Ok(d)
}

/// Segment levels and arc for a precomputed hedonic series.
#[pyfunction]
#[pyo3(signature = (series, neutral=5.4, band=0.2))]
fn classify_series(series: Vec<f64>, neutral: f64, band: f64) -> PyResult<(String, String)> {
    let seg = shapes::segment_levels(&series, neutral, band).map_err(value_err)?;
    Ok((shapes::levels_string(&seg.levels), shapes::classify_arc(seg.levels).to_string()))
}

/// Cohen's kappa between two aligned boolean label lists.
#[pyfunction]
fn kappa(a: Vec<bool>, b: Vec<bool>) -> PyResult<f64> {
    metrics::kappa_from_labels(&a, &b).map_err(value_err)
}

#[pyfunction]
fn pearson(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    metrics::pearson(&x, &y).map_err(value_err)
}

#[pyfunction]
fn middle_window(text: &str, words: usize) -> String {
    learn::middle_window(text, words)
}

/// Stories as dicts with id, title, text, moral and tags.
#[pyfunction]
fn load_corpus<'py>(py: Python<'py>, path: PathBuf) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let stories = corpus::load_corpus(&path).map_err(|e| match e {
        corpus::CorpusError::Io { .. } => PyIOError::new_err(e.to_string()),
        other => value_err(other),
    })?;
    stories
        .into_iter()
        .map(|s| {
            let d = PyDict::new(py);
            d.set_item("id", s.id)?;
            d.set_item("title", s.title)?;
            d.set_item("text", s.text)?;
            d.set_item("moral", s.moral)?;
            d.set_item("tags", s.tags.iter().map(|t| t.as_str()).collect::<Vec<_>>())?;
            Ok(d)
        })
        .collect()
}

/// Logistic regression trained by full-batch gradient descent.
#[pyclass(name = "LogisticModel")]
struct PyLogisticModel {
    inner: learn::LogisticModel,
    losses: Vec<f64>,
}

#[pymethods]
impl PyLogisticModel {
    #[staticmethod]
    #[pyo3(signature = (x, y, learning_rate=0.1, epochs=200, l2=1e-3, threshold=0.5, seed=0))]
    fn train(
        x: Vec<Vec<f64>>,
        y: Vec<bool>,
        learning_rate: f64,
        epochs: usize,
        l2: f64,
        threshold: f64,
        seed: u64,
    ) -> PyResult<Self> {
        let m = FeatureMatrix::from_rows(&x).map_err(value_err)?;
        let config = TrainConfig {
            learning_rate,
            epochs,
            l2,
            seed,
            threshold,
        };
        let (inner, trace) = learn::train_logistic(&m, &y, config, None).map_err(value_err)?;
        Ok(PyLogisticModel {
            inner,
            losses: trace.records.iter().map(|r| r.train_loss).collect(),
        })
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights.clone()
    }

    #[getter]
    fn bias(&self) -> f64 {
        self.inner.bias
    }

    /// Training loss after each epoch.
    #[getter]
    fn losses(&self) -> Vec<f64> {
        self.losses.clone()
    }

    fn predict_proba(&self, x: Vec<f64>) -> PyResult<f64> {
        self.check_width(x.len())?;
        Ok(self.inner.predict_proba(&x))
    }

    fn predict(&self, x: Vec<f64>) -> PyResult<bool> {
        self.check_width(x.len())?;
        Ok(self.inner.predict(&x))
    }

    /// Largest relative error between analytic and numeric gradients.
    #[pyo3(signature = (x, y, epsilon=1e-5))]
    fn gradient_check(&self, x: Vec<Vec<f64>>, y: Vec<bool>, epsilon: f64) -> PyResult<f64> {
        let m = FeatureMatrix::from_rows(&x).map_err(value_err)?;
        self.check_width(m.cols())?;
        if y.len() != m.rows() {
            return Err(value_err("x and y lengths differ"));
        }
        Ok(learn::gradient_check(&m, &y, &self.inner, epsilon))
    }

    fn __repr__(&self) -> String {
        format!("LogisticModel(weights={:?}, bias={})", self.inner.weights, self.inner.bias)
    }
}

impl PyLogisticModel {
    fn check_width(&self, got: usize) -> PyResult<()> {
        if got != self.inner.weights.len() {
            return Err(value_err(format!("expected {} features, got {got}", self.inner.weights.len())));
        }
        Ok(())
    }
}

#[pymodule]
#[pyo3(name = "fabula")]
fn fabula_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(cosine, m)?)?;
    m.add_function(wrap_pyfunction!(hash_embedding, m)?)?;
    m.add_function(wrap_pyfunction!(edit_distance, m)?)?;
    m.add_function(wrap_pyfunction!(scaled_frame_distance, m)?)?;
    m.add_function(wrap_pyfunction!(arc_profile, m)?)?;
    m.add_function(wrap_pyfunction!(classify_series, m)?)?;
    m.add_function(wrap_pyfunction!(kappa, m)?)?;
    m.add_function(wrap_pyfunction!(pearson, m)?)?;
    m.add_function(wrap_pyfunction!(middle_window, m)?)?;
    m.add_function(wrap_pyfunction!(load_corpus, m)?)?;
    m.add_class::<PyLogisticModel>()?;
    m.add("MORAL_TAGS", MoralTag::ALL.iter().map(|t| t.as_str()).collect::<Vec<_>>())?;
    m.add("DIMENSIONS", AnalogyDimension::ALL.iter().map(|d| d.as_str()).collect::<Vec<_>>())?;
    Ok(())
}
