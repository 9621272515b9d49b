//! Python bindings: the pure scoring, grammar and synthesis functions, plus
//! the fixture-site pipeline (crawl, generate, episode) for quick checks.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Duration;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyModule;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use cogweb_core::agent::{self, AgentTask, EpisodeConfig, FixturePredicate, RewardCheck, ScriptedPolicy};
use cogweb_core::browser::fake::{FakeBrowser, FakeSite, FIXTURE_ROOT};
use cogweb_core::browser::instrumentation::InstrumentationBundle;
use cogweb_core::crawler::{crawl_site, read_store, write_store, CrawlConfig};
use cogweb_core::eval::{self, BENCH_COUNTS};
use cogweb_core::geometry::Viewport;
use cogweb_core::observation::{self, AXTree as CoreTree};
use cogweb_core::popup::{self, JitterRanges, PopupAsset};
use cogweb_core::task::{TaskFamily, TaskInstance};
use cogweb_core::taskgen::{self, Dataset, GenOptions};

create_exception!(cogweb, CogwebError, PyException);

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    CogwebError::new_err(e.to_string())
}

/// Serde value to native Python objects, through the json module.
fn to_py<T: Serialize>(py: Python<'_>, v: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(v).map_err(runtime_err)?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn from_py<T: serde::de::DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(value_err)
}

fn family(name: &str) -> PyResult<TaskFamily> {
    name.parse().map_err(|_| PyValueError::new_err(format!("unknown task family '{name}'")))
}

#[pyclass(name = "RougeL", frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
struct PyRougeL {
    lcs: usize,
    precision: f64,
    recall: f64,
    f1: f64,
}

#[pymethods]
impl PyRougeL {
    fn __repr__(&self) -> String {
        format!("RougeL(lcs={}, precision={}, recall={}, f1={})", self.lcs, self.precision, self.recall, self.f1)
    }
}

/// ROUGE-L of `prediction` against `reference` over lowercase word tokens.
#[pyfunction]
fn rouge_l(prediction: &str, reference: &str) -> PyRougeL {
    let r = eval::rouge_l(prediction, reference);
    PyRougeL { lcs: r.lcs, precision: r.precision, recall: r.recall, f1: r.f1 }
}

#[pyfunction]
fn tokenize(text: &str) -> Vec<String> {
    eval::tokenize(text)
}

#[pyclass(name = "Action", frozen, eq, hash, skip_from_py_object)]
#[derive(Clone, PartialEq, Eq, Hash)]
struct PyAction(agent::Action);

#[pymethods]
impl PyAction {
    /// Parses one action line such as `click [12]` or `type [3] [hello]`.
    #[staticmethod]
    fn parse(line: &str) -> PyResult<Self> {
        agent::Action::parse(line).map(PyAction).map_err(value_err)
    }

    fn format(&self) -> String {
        self.0.format()
    }

    /// The action verb, lowercase.
    #[getter]
    fn kind(&self) -> String {
        self.0.format().split(' ').next().unwrap_or_default().to_string()
    }

    #[getter]
    fn target_id(&self) -> Option<u32> {
        self.0.target_id()
    }

    /// Typed text or the stop answer.
    #[getter]
    fn content(&self) -> Option<String> {
        match &self.0 {
            agent::Action::Type { content, .. } | agent::Action::Stop(content) => Some(content.clone()),
            _ => None,
        }
    }

    fn __str__(&self) -> String {
        self.0.format()
    }

    fn __repr__(&self) -> String {
        format!("Action({:?})", self.0.format())
    }
}

/// Splits a model response into (final summary, action).
#[pyfunction]
fn parse_model_output(text: &str) -> PyResult<(String, PyAction)> {
    let (thought, action) = agent::parse_model_output(text).map_err(value_err)?;
    Ok((thought.final_summary().to_string(), PyAction(action)))
}

#[pyclass(name = "AXTree", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyAXTree(CoreTree);

#[pymethods]
impl PyAXTree {
    /// Parses the indented `[id] role 'name'` text form.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        observation::parse_ax_text(text).map(PyAXTree).map_err(value_err)
    }

    fn serialize(&self) -> String {
        self.0.serialize()
    }

    /// (id, role, name, depth) per node, in document order.
    fn nodes(&self) -> Vec<(u32, String, String, u32)> {
        self.0.nodes().iter().map(|n| (n.id, n.role.clone(), n.name.clone(), n.depth)).collect()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __str__(&self) -> String {
        self.0.serialize()
    }
}

/// Splices `popup` into `page` at a seeded slot and renumbers. Returns the
/// merged tree and the new ids of the page and popup nodes.
#[pyfunction]
fn inject_popup_ax(page: &PyAXTree, popup: &PyAXTree, seed: u64) -> PyResult<(PyAXTree, Vec<u32>, Vec<u32>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inj = popup::inject_popup_ax(&page.0, &popup.0, &mut rng).map_err(value_err)?;
    Ok((PyAXTree(inj.tree), inj.page_ids, inj.popup_ids))
}

/// Every nonempty subset of `methods`, in ascending bitmask order.
#[pyfunction]
fn enumerate_close_subsets(methods: Vec<String>) -> PyResult<Vec<Vec<String>>> {
    popup::enumerate_close_subsets(&methods).map_err(value_err)
}

#[pyfunction]
fn infer_role(outer_html: &str) -> PyResult<String> {
    observation::infer_role(outer_html).map_err(value_err)
}

#[pyfunction]
fn infer_name(outer_html: &str) -> PyResult<String> {
    observation::infer_name(outer_html).map_err(value_err)
}

fn parse_task(line: &str) -> PyResult<TaskInstance> {
    serde_json::from_str(line).map_err(value_err)
}

/// Checks one manifest line; raises ValueError on any violation.
#[pyfunction]
#[pyo3(signature = (line, bench = false))]
fn validate_task(line: &str, bench: bool) -> PyResult<()> {
    let inst = parse_task(line)?;
    if bench { inst.validate_bench() } else { inst.validate() }.map_err(value_err)
}

/// Per-family counts, schema errors and flags for a JSONL manifest.
#[pyfunction]
#[pyo3(signature = (text, bench = false))]
fn validate_manifest(py: Python<'_>, text: &str, bench: bool) -> PyResult<Py<PyAny>> {
    to_py(py, &eval::validate_manifest(text, bench))
}

#[pyfunction]
fn bench_counts() -> BTreeMap<String, usize> {
    BENCH_COUNTS.iter().map(|(f, n)| (f.as_str().to_string(), *n)).collect()
}

/// Scores a prediction for one manifest line, in percent. Judge-scored
/// families need a judge endpoint and raise CogwebError here.
#[pyfunction]
fn score(line: &str, prediction: &str) -> PyResult<f64> {
    let inst = parse_task(line)?;
    eval::score_instance(&inst, prediction, None).map(|s| s.value).map_err(runtime_err)
}

/// Report from per-family mean scores: family, cognition and overall means.
#[pyfunction]
#[pyo3(signature = (means, rounded = true))]
fn aggregate_means(py: Python<'_>, means: BTreeMap<String, f64>, rounded: bool) -> PyResult<Py<PyAny>> {
    let means = means.iter().map(|(k, v)| Ok((family(k)?, *v))).collect::<PyResult<BTreeMap<_, _>>>()?;
    let report = eval::aggregate_means(&means).map_err(value_err)?;
    to_py(py, &if rounded { report.rounded() } else { report })
}

/// Report from individual (family, score) pairs.
#[pyfunction]
#[pyo3(signature = (scores, rounded = true))]
fn aggregate(py: Python<'_>, scores: Vec<(String, f64)>, rounded: bool) -> PyResult<Py<PyAny>> {
    let scores = scores.iter().map(|(f, v)| Ok(eval::Score::from_value(family(f)?, *v))).collect::<PyResult<Vec<_>>>()?;
    let report = eval::aggregate(&scores).map_err(value_err)?;
    to_py(py, &if rounded { report.rounded() } else { report })
}

#[pyfunction]
#[pyo3(signature = (x, decimals = 1))]
fn round_half_up(x: f64, decimals: u32) -> f64 {
    eval::round_half_up(x, decimals)
}

#[pyfunction]
fn derive_seed(seed: u64, key: &str) -> u64 {
    taskgen::derive_seed(seed, key)
}

/// Crawls the built-in fixture site into `out`; returns the site directory.
#[pyfunction]
#[pyo3(signature = (out, max_layers = 2))]
fn crawl_fixture(py: Python<'_>, out: PathBuf, max_layers: u32) -> PyResult<PathBuf> {
    py.detach(|| {
        let mut browser = FakeBrowser::fixture();
        let cfg = CrawlConfig { max_layers, input_settle: Duration::ZERO, ..Default::default() };
        let store = crawl_site(&mut browser, FIXTURE_ROOT, &InstrumentationBundle::from_source(""), &cfg).map_err(runtime_err)?;
        write_store(&out, &store).map_err(runtime_err)
    })
}

fn summary(py: Python<'_>, dataset: &Dataset) -> PyResult<Py<PyAny>> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for inst in dataset.instances() {
        *counts.entry(inst.family.as_str()).or_default() += 1;
    }
    to_py(py, &serde_json::json!({"counts": counts, "skipped": dataset.skipped.len()}))
}

/// Store-derived tasks that need no annotator, written to `out`.
#[pyfunction]
#[pyo3(signature = (store, out, seed = 0, families = None))]
fn generate_tasks(py: Python<'_>, store: PathBuf, out: PathBuf, seed: u64, families: Option<Vec<String>>) -> PyResult<Py<PyAny>> {
    let mut opts = GenOptions { seed, ..Default::default() };
    if let Some(f) = families {
        opts.families = f.iter().map(|s| family(s)).collect::<PyResult<_>>()?;
    }
    let dataset = py.detach(|| {
        let st = read_store(&store).map_err(runtime_err)?;
        let ds = taskgen::generate_from_store(&st, &opts, None).map_err(runtime_err)?;
        taskgen::write_dataset(&out, &ds).map_err(runtime_err)?;
        Ok::<_, PyErr>(ds)
    })?;
    summary(py, &dataset)
}

/// Popup-close tasks over a crawl store, using the built-in popup assets.
#[pyfunction]
#[pyo3(signature = (store, out, seed = 0))]
fn synth_popups(py: Python<'_>, store: PathBuf, out: PathBuf, seed: u64) -> PyResult<Py<PyAny>> {
    let dataset = py.detach(|| {
        let st = read_store(&store).map_err(runtime_err)?;
        let ds = taskgen::generate_popup_tasks(&st, &PopupAsset::builtin(), seed, &JitterRanges::default()).map_err(runtime_err)?;
        taskgen::write_dataset(&out, &ds).map_err(runtime_err)?;
        Ok::<_, PyErr>(ds)
    })?;
    summary(py, &dataset)
}

/// Runs one episode on the fixture site with canned model responses. `check`
/// is a predicate such as {"type": "answer_contains", "text": "..."}.
#[pyfunction]
#[pyo3(signature = (responses, query, start_url = FIXTURE_ROOT.to_string(), max_steps = 15, check = None))]
fn run_scripted_episode(
    py: Python<'_>,
    responses: Vec<String>,
    query: String,
    start_url: String,
    max_steps: usize,
    check: Option<Bound<'_, PyAny>>,
) -> PyResult<Py<PyAny>> {
    let check: Option<FixturePredicate> = check.map(|c| from_py(&c)).transpose()?;
    let task = AgentTask { task_id: "py".into(), query, start_url, check: check.clone() };
    let mut traj = py.detach(|| {
        let mut policy = ScriptedPolicy::new(responses);
        let mut browser = FakeBrowser::new(FakeSite::fixture(), Viewport::DEFAULT);
        let cfg = EpisodeConfig { max_steps, settle: Duration::from_millis(100), ..Default::default() };
        agent::run_episode(&task, &mut policy, &mut browser, &cfg)
    });
    if let Some(p) = check {
        traj.reward = agent::evaluate_reward(&traj, &RewardCheck::Fixture(p)).map_err(runtime_err)?;
    }
    to_py(
        py,
        &serde_json::json!({
            "termination": traj.termination,
            "reward": traj.reward,
            "steps": traj.steps.len(),
            "actions": traj.steps.iter().map(|s| s.action.format()).collect::<Vec<_>>(),
            "answer": traj.answer,
            "final_url": traj.final_observation().map(|o| o.url.clone()),
            "error": traj.error,
        }),
    )
}

#[pymodule]
#[pyo3(name = "cogweb")]
pub fn cogweb_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("CogwebError", m.py().get_type::<CogwebError>())?;
    m.add("FIXTURE_ROOT", FIXTURE_ROOT)?;
    m.add("TASK_SCHEMA", cogweb_core::task::TASK_SCHEMA)?;
    m.add_class::<PyRougeL>()?;
    m.add_class::<PyAction>()?;
    m.add_class::<PyAXTree>()?;
    m.add_function(wrap_pyfunction!(rouge_l, m)?)?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(parse_model_output, m)?)?;
    m.add_function(wrap_pyfunction!(inject_popup_ax, m)?)?;
    m.add_function(wrap_pyfunction!(enumerate_close_subsets, m)?)?;
    m.add_function(wrap_pyfunction!(infer_role, m)?)?;
    m.add_function(wrap_pyfunction!(infer_name, m)?)?;
    m.add_function(wrap_pyfunction!(validate_task, m)?)?;
    m.add_function(wrap_pyfunction!(validate_manifest, m)?)?;
    m.add_function(wrap_pyfunction!(bench_counts, m)?)?;
    m.add_function(wrap_pyfunction!(score, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate_means, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate, m)?)?;
    m.add_function(wrap_pyfunction!(round_half_up, m)?)?;
    m.add_function(wrap_pyfunction!(derive_seed, m)?)?;
    m.add_function(wrap_pyfunction!(crawl_fixture, m)?)?;
    m.add_function(wrap_pyfunction!(generate_tasks, m)?)?;
    m.add_function(wrap_pyfunction!(synth_popups, m)?)?;
    m.add_function(wrap_pyfunction!(run_scripted_episode, m)?)?;
    Ok(())
}
