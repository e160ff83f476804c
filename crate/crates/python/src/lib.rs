//! Python bindings: the pipeline stages as plain functions over lists of
//! floats and strings, plus a driver for the staged on-disk pipeline.

use std::path::PathBuf;

use atlas_core::corpus::{self, DEFAULT_LANGUAGE_THRESHOLD};
use atlas_core::kmeans::{self, ElbowConfig, InitMethod, KMeansConfig, KMeansModel};
use atlas_core::matrix::DenseMatrix;
use atlas_core::pca::{self, PcaModel, PcaTarget, DEFAULT_VARIANCE_TARGET};
use atlas_core::pipeline::{self, PipelineConfig, Stage};
use atlas_core::synthetic::{planted_topic_corpus, PlantedTopics};
use atlas_core::text::{self, Stoplist};
use atlas_core::tsne::{self, TsneConfig, TsneInit};
use atlas_core::vectorize::{build_vocabulary, tfidf, DEFAULT_MAX_FEATURES};
use atlas_core::AtlasError;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: AtlasError) -> PyErr {
    match e.exit_code() {
        1 | 2 => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DenseMatrix> {
    DenseMatrix::from_rows(rows).map_err(to_py)
}

/// Lowercased word tokens, before stopword removal.
#[pyfunction]
fn tokenize(text: &str) -> Vec<String> {
    text::tokenize(text)
}

/// `(code, confidence)` where code is "en" or "other".
#[pyfunction]
#[pyo3(signature = (text, threshold = DEFAULT_LANGUAGE_THRESHOLD))]
fn detect_language(text: &str, threshold: f64) -> PyResult<(String, f64)> {
    let g = corpus::detect_language(text, threshold).map_err(to_py)?;
    Ok((g.code, g.confidence))
}

/// tf-idf over the given texts with the built-in stoplist. Returns the
/// vocabulary and one dense row per text.
#[pyfunction]
#[pyo3(signature = (texts, max_features = DEFAULT_MAX_FEATURES))]
fn vectorize(py: Python<'_>, texts: Vec<String>, max_features: usize) -> PyResult<(Vec<String>, Vec<Vec<f64>>)> {
    py.detach(|| {
        let stoplist = Stoplist::default();
        let docs: Vec<_> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| text::normalize_document(&i.to_string(), t, &stoplist))
            .collect();
        let vocab = build_vocabulary(&docs, max_features)?;
        let x = tfidf(&docs, &vocab)?;
        Ok((vocab.terms().to_vec(), x.to_dense().to_rows()))
    })
    .map_err(to_py)
}

#[pyclass(name = "Pca", frozen)]
struct PyPca {
    model: PcaModel,
}

#[pymethods]
impl PyPca {
    #[getter]
    fn n_components(&self) -> usize {
        self.model.n_components()
    }

    #[getter]
    fn explained_variance(&self) -> Vec<f64> {
        self.model.explained_variance.clone()
    }

    #[getter]
    fn explained_variance_ratio(&self) -> Vec<f64> {
        self.model.explained_variance_ratio.clone()
    }

    #[getter]
    fn components(&self) -> Vec<Vec<f64>> {
        self.model.components.to_rows()
    }

    fn transform(&self, py: Python<'_>, rows: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let x = matrix(&rows)?;
        py.detach(|| pca::transform(&x, &self.model))
            .map(|m| m.to_rows())
            .map_err(to_py)
    }
}

/// Keep the fewest components reaching `variance_target`, or exactly
/// `n_components` when given.
#[pyfunction]
#[pyo3(signature = (rows, variance_target = DEFAULT_VARIANCE_TARGET, n_components = None))]
fn fit_pca(py: Python<'_>, rows: Vec<Vec<f64>>, variance_target: f64, n_components: Option<usize>) -> PyResult<PyPca> {
    let x = matrix(&rows)?;
    let target = match n_components {
        Some(d) => PcaTarget::Components(d),
        None => PcaTarget::Variance(variance_target),
    };
    let model = py.detach(|| pca::fit_pca(&x, target)).map_err(to_py)?;
    Ok(PyPca { model })
}

#[pyclass(name = "KMeansResult", frozen, get_all)]
struct PyKMeans {
    k: usize,
    labels: Vec<usize>,
    centroids: Vec<Vec<f64>>,
    inertia: f64,
    inertia_history: Vec<f64>,
    n_iter: usize,
}

impl From<KMeansModel> for PyKMeans {
    fn from(m: KMeansModel) -> Self {
        PyKMeans {
            k: m.k,
            labels: m.labels,
            centroids: m.centroids.to_rows(),
            inertia: m.inertia,
            inertia_history: m.inertia_history,
            n_iter: m.n_iter_run,
        }
    }
}

fn kmeans_config(n_init: usize, max_iter: usize, tol: f64, init: &str) -> PyResult<KMeansConfig> {
    let init = match init {
        "k-means++" => InitMethod::KMeansPlusPlus,
        "random" => InitMethod::Random,
        other => return Err(PyValueError::new_err(format!("unknown init `{other}`"))),
    };
    Ok(KMeansConfig {
        n_init,
        max_iter,
        tol,
        init,
    })
}

#[pyfunction]
#[pyo3(signature = (rows, k, seed = 0, n_init = 10, max_iter = 300, tol = 1e-4, init = "k-means++"))]
#[allow(clippy::too_many_arguments)]
fn kmeans_fit(
    py: Python<'_>,
    rows: Vec<Vec<f64>>,
    k: usize,
    seed: u64,
    n_init: usize,
    max_iter: usize,
    tol: f64,
    init: &str,
) -> PyResult<PyKMeans> {
    let x = matrix(&rows)?;
    let config = kmeans_config(n_init, max_iter, tol, init)?;
    py.detach(|| kmeans::kmeans_fit(&x, k, seed, &config))
        .map(PyKMeans::from)
        .map_err(to_py)
}

/// `([(k, distortion), ...], chosen_k)`.
#[pyfunction]
#[pyo3(signature = (rows, k_min = 2, k_max = 40, step = 2, seed = 0, n_init = 10))]
fn elbow_sweep(
    py: Python<'_>,
    rows: Vec<Vec<f64>>,
    k_min: usize,
    k_max: usize,
    step: usize,
    seed: u64,
    n_init: usize,
) -> PyResult<(Vec<(usize, f64)>, usize)> {
    let x = matrix(&rows)?;
    let sweep = ElbowConfig { k_min, k_max, step };
    let config = KMeansConfig {
        n_init,
        ..KMeansConfig::default()
    };
    let curve = py.detach(|| kmeans::elbow_sweep(&x, &sweep, seed, &config)).map_err(to_py)?;
    Ok((curve.entries.iter().map(|e| (e.k, e.distortion)).collect(), curve.chosen_k))
}

/// 2-D t-SNE map. Returns `(coords, final_kl, [(iteration, kl), ...])`.
#[pyfunction]
#[pyo3(signature = (rows, perplexity = 30.0, n_iter = 1000, theta = 0.5, learning_rate = 200.0, seed = 0, init = "gaussian-1e-4"))]
#[allow(clippy::too_many_arguments, clippy::type_complexity)]
fn tsne_embed(
    py: Python<'_>,
    rows: Vec<Vec<f64>>,
    perplexity: f64,
    n_iter: usize,
    theta: f64,
    learning_rate: f64,
    seed: u64,
    init: &str,
) -> PyResult<(Vec<(f64, f64)>, f64, Vec<(usize, f64)>)> {
    let x = matrix(&rows)?;
    let init = match init {
        "gaussian-1e-4" => TsneInit::Gaussian,
        "pca-2d" => TsneInit::Pca2d,
        other => return Err(PyValueError::new_err(format!("unknown init `{other}`"))),
    };
    let config = TsneConfig {
        perplexity,
        n_iter,
        theta,
        learning_rate,
        seed,
        init,
        ..TsneConfig::default()
    };
    config.validate().map_err(to_py)?;
    let e = py.detach(|| tsne::embed(&x, &config)).map_err(to_py)?;
    let coords = (0..e.y.n_rows()).map(|i| (e.y.row(i)[0], e.y.row(i)[1])).collect();
    let trace = e.kl_trace.iter().map(|s| (s.iteration, s.kl)).collect();
    Ok((coords, e.final_kl, trace))
}

#[pyfunction]
fn adjusted_rand_index(a: Vec<usize>, b: Vec<usize>) -> PyResult<f64> {
    if a.len() != b.len() {
        return Err(PyValueError::new_err("labelings differ in length"));
    }
    Ok(atlas_core::metrics::adjusted_rand_index(&a, &b))
}

/// Synthetic corpus with known topics: `(body_texts, topic_labels)`.
#[pyfunction]
#[pyo3(signature = (n_topics = 5, docs_per_topic = 100, tokens_per_doc = 200, background_fraction = 0.1, seed = 0))]
fn planted_topics(
    n_topics: usize,
    docs_per_topic: usize,
    tokens_per_doc: usize,
    background_fraction: f64,
    seed: u64,
) -> (Vec<String>, Vec<usize>) {
    let spec = PlantedTopics {
        n_topics,
        docs_per_topic,
        tokens_per_doc,
        background_fraction,
        ..PlantedTopics::default()
    };
    let (records, labels) = planted_topic_corpus(&spec, seed);
    (records.into_iter().map(|r| r.body_text).collect(), labels)
}

/// Run a pipeline stage (or "all") from a config file, as the `atlas`
/// command does. Returns the paths written.
#[pyfunction]
#[pyo3(signature = (stage, config, k = None, seed = None, threads = None, out = None))]
fn run_pipeline(
    py: Python<'_>,
    stage: &str,
    config: PathBuf,
    k: Option<usize>,
    seed: Option<u64>,
    threads: Option<usize>,
    out: Option<PathBuf>,
) -> PyResult<Vec<String>> {
    let stage: Stage = stage.parse().map_err(to_py)?;
    let mut cfg = PipelineConfig::from_file(&config).map_err(to_py)?;
    if k.is_some() {
        cfg.k = k;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if threads.is_some() {
        cfg.threads = threads;
    }
    if let Some(o) = out {
        cfg.out_dir = std::path::absolute(o)?;
    }
    let outcomes = py.detach(|| pipeline::run(stage, &cfg)).map_err(to_py)?;
    Ok(outcomes
        .iter()
        .flat_map(|o| o.artifacts.iter().map(|p| p.display().to_string()))
        .collect())
}

#[pymodule]
fn atlas_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(detect_language, m)?)?;
    m.add_function(wrap_pyfunction!(vectorize, m)?)?;
    m.add_function(wrap_pyfunction!(fit_pca, m)?)?;
    m.add_function(wrap_pyfunction!(kmeans_fit, m)?)?;
    m.add_function(wrap_pyfunction!(elbow_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(tsne_embed, m)?)?;
    m.add_function(wrap_pyfunction!(adjusted_rand_index, m)?)?;
    m.add_function(wrap_pyfunction!(planted_topics, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add_class::<PyPca>()?;
    m.add_class::<PyKMeans>()?;
    Ok(())
}
