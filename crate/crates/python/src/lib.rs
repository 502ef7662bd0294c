//! Python bindings for the `abstain` toolkit.
//!
//! Errors from the core crate surface as `ValueError`.

use abstain::calibration::{self, CalibrationInput, CertaintyPredictor, Decision};
use abstain::evaluation::{self, LabeledScore};
use abstain::scores::{self, AnswerSample, ScoreFunction};
use abstain::shift::{self, ShiftConfig};
use abstain::simulation::{self, LawSpec, SyntheticWorld};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(err: abstain::Error) -> PyErr {
    PyValueError::new_err(err.to_string())
}

fn parse_function(name: &str) -> PyResult<ScoreFunction> {
    name.parse::<ScoreFunction>().map_err(to_py)
}

#[pyfunction]
fn vanilla_entropy(answers: Vec<String>) -> PyResult<f64> {
    scores::vanilla_entropy(&answers).map(|s| s.value).map_err(to_py)
}

/// Semantic entropy of sampled answers. `clusters` defaults to exact-match
/// clustering on the canonicalized text.
#[pyfunction]
#[pyo3(signature = (answers, clusters=None, log_probs=None))]
fn semantic_entropy(
    answers: Vec<String>,
    clusters: Option<Vec<usize>>,
    log_probs: Option<Vec<f64>>,
) -> PyResult<f64> {
    let clusters = clusters.unwrap_or_else(|| scores::exact_match_clusters(&answers));
    if clusters.len() != answers.len() {
        return Err(PyValueError::new_err("clusters and answers differ in length"));
    }
    if log_probs.as_ref().is_some_and(|l| l.len() != answers.len()) {
        return Err(PyValueError::new_err("log_probs and answers differ in length"));
    }
    let samples: Vec<AnswerSample> = answers
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let s = AnswerSample::new(a.as_str()).with_cluster(clusters[i]);
            match &log_probs {
                Some(l) => s.with_log_prob(l[i]),
                None => s,
            }
        })
        .collect();
    scores::semantic_entropy(&samples).map(|s| s.value).map_err(to_py)
}

/// Projects a raw similarity matrix onto unit-trace PSD matrices.
#[pyfunction]
fn normalize_kernel(raw: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    scores::normalize_kernel(&raw).map(|k| k.to_rows()).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (kernel, normalize=true))]
fn kernel_language_entropy(kernel: Vec<Vec<f64>>, normalize: bool) -> PyResult<f64> {
    let k = if normalize {
        scores::normalize_kernel(&kernel)
    } else {
        scores::SemanticKernel::new(&kernel)
    }
    .map_err(to_py)?;
    scores::kernel_language_entropy(&k).map(|s| s.value).map_err(to_py)
}

#[pyfunction]
fn binomial_tail_v(k: usize, n0: usize, alpha: f64) -> PyResult<f64> {
    calibration::binomial_tail_v(k, n0, alpha).map_err(to_py)
}

#[pyfunction]
fn select_k_hat(n0: usize, alpha: f64, delta: f64) -> PyResult<usize> {
    calibration::select_k_hat(n0, alpha, delta).map_err(to_py)
}

#[pyfunction]
fn canonicalize(text: &str) -> String {
    abstain::dataset::canonicalize(text)
}

#[pyfunction]
fn label_correctness(generated: &str, reference: Vec<String>) -> PyResult<bool> {
    abstain::dataset::label_correctness(generated, &reference).map_err(to_py)
}

/// Calibrated abstention threshold. Answers iff `eta > tau`.
#[pyclass(name = "Predictor", module = "abstain_py", frozen, from_py_object)]
#[derive(Clone)]
struct PyPredictor {
    inner: CertaintyPredictor,
}

#[pymethods]
impl PyPredictor {
    /// Calibrates on the scores of uncertain calibration questions.
    #[staticmethod]
    #[pyo3(signature = (scores, alpha, delta=calibration::DEFAULT_DELTA, function="ve"))]
    fn calibrate(scores: Vec<f64>, alpha: f64, delta: f64, function: &str) -> PyResult<Self> {
        let input = CalibrationInput::new(scores, alpha, delta).map_err(to_py)?;
        let inner = calibration::calibrate(&input, parse_function(function)?).map_err(to_py)?;
        Ok(PyPredictor { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        CertaintyPredictor::from_json(text)
            .map(|inner| PyPredictor { inner })
            .map_err(to_py)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    /// True when the question should be answered.
    fn predict(&self, eta: f64) -> PyResult<bool> {
        calibration::predict(&self.inner, eta)
            .map(Decision::is_certain)
            .map_err(to_py)
    }

    fn predict_many(&self, etas: Vec<f64>) -> PyResult<Vec<bool>> {
        etas.into_iter().map(|e| self.predict(e)).collect()
    }

    /// Report over `(eta, y)` pairs, `y` true for certain questions.
    fn evaluate<'py>(&self, py: Python<'py>, etas: Vec<f64>, labels: Vec<bool>) -> PyResult<Bound<'py, PyDict>> {
        evaluate(py, self, etas, labels)
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }

    #[getter]
    fn delta(&self) -> f64 {
        self.inner.delta
    }

    #[getter]
    fn n0(&self) -> usize {
        self.inner.n0
    }

    #[getter]
    fn k_hat(&self) -> usize {
        self.inner.k_hat
    }

    #[getter]
    fn tau(&self) -> f64 {
        self.inner.tau
    }

    #[getter]
    fn function(&self) -> &'static str {
        self.inner.function.as_str()
    }

    fn abstains_always(&self) -> bool {
        self.inner.abstains_always()
    }

    fn __repr__(&self) -> String {
        format!(
            "Predictor(alpha={}, delta={}, n0={}, k_hat={}, tau={})",
            self.inner.alpha, self.inner.delta, self.inner.n0, self.inner.k_hat, self.inner.tau
        )
    }
}

#[pyfunction]
fn evaluate<'py>(
    py: Python<'py>,
    predictor: &PyPredictor,
    etas: Vec<f64>,
    labels: Vec<bool>,
) -> PyResult<Bound<'py, PyDict>> {
    if etas.len() != labels.len() {
        return Err(PyValueError::new_err("etas and labels differ in length"));
    }
    let data: Vec<LabeledScore> = etas
        .iter()
        .zip(&labels)
        .map(|(&e, &y)| LabeledScore::new(e, y))
        .collect();
    let r = evaluation::evaluate(&predictor.inner, &data).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("n_total", r.n_total)?;
    d.set_item("n_answered", r.n_answered)?;
    d.set_item("accuracy_answered", r.accuracy_answered)?;
    d.set_item("fpr", r.fpr)?;
    d.set_item("fnr", r.fnr)?;
    d.set_item("answer_rate", r.answer_rate)?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (ratios, gamma=shift::DEFAULT_GAMMA))]
fn clip_bound_b(ratios: Vec<f64>, gamma: f64) -> PyResult<f64> {
    shift::clip_bound_b(&ratios, gamma).map_err(to_py)
}

/// Indices kept by rejection sampling with acceptance `w_i / B`.
#[pyfunction]
fn rejection_sample(ratios: Vec<f64>, bound_b: f64, seed: u64) -> PyResult<Vec<usize>> {
    shift::rejection_sample(&ratios, bound_b, seed).map_err(to_py)
}

/// Returns `(predictor, bound_b, accepted_indices)`.
#[pyfunction]
#[pyo3(signature = (scores, ratios, alpha, delta=calibration::DEFAULT_DELTA, gamma=shift::DEFAULT_GAMMA, bound_b=None, seed=42))]
fn calibrate_under_shift(
    scores: Vec<f64>,
    ratios: Vec<f64>,
    alpha: f64,
    delta: f64,
    gamma: f64,
    bound_b: Option<f64>,
    seed: u64,
) -> PyResult<(PyPredictor, f64, Vec<usize>)> {
    let cfg = ShiftConfig {
        ratios,
        gamma,
        bound_b,
        seed,
    };
    let out = shift::calibrate_under_shift(&scores, &cfg, alpha, delta, ScoreFunction::Ve).map_err(to_py)?;
    Ok((PyPredictor { inner: out.predictor }, out.bound_b, out.accepted))
}

/// Monte Carlo Type I certification. Laws use the CLI syntax, e.g.
/// `"uniform"`, `"beta:2,5"`, `"truncnormal:0,1"`. Returns the exceedance rate.
#[pyfunction]
#[pyo3(signature = (p0, n0, alpha, delta=calibration::DEFAULT_DELTA, trials=2000, seed=42))]
fn run_type1_trials(p0: &str, n0: usize, alpha: f64, delta: f64, trials: usize, seed: u64) -> PyResult<f64> {
    let p0: LawSpec = p0.parse().map_err(to_py)?;
    let world = SyntheticWorld::new(p0, LawSpec::uniform());
    simulation::run_type1_trials(&world, n0, alpha, delta, trials, seed)
        .map(|r| r.exceed_rate)
        .map_err(to_py)
}

#[pymodule]
fn abstain_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", abstain::TOOL_VERSION)?;
    m.add_class::<PyPredictor>()?;
    m.add_function(wrap_pyfunction!(vanilla_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(semantic_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(kernel_language_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(binomial_tail_v, m)?)?;
    m.add_function(wrap_pyfunction!(select_k_hat, m)?)?;
    m.add_function(wrap_pyfunction!(canonicalize, m)?)?;
    m.add_function(wrap_pyfunction!(label_correctness, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(clip_bound_b, m)?)?;
    m.add_function(wrap_pyfunction!(rejection_sample, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate_under_shift, m)?)?;
    m.add_function(wrap_pyfunction!(run_type1_trials, m)?)?;
    Ok(())
}
