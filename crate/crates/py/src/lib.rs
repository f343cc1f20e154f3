//! Python bindings. Structured results come back as plain dicts and lists.

use std::path::PathBuf;

use pyo3::exceptions::{PyKeyError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use trialrec_core::eval::{evaluate_split_with, EvalMode};
use trialrec_core::inductive::{NewEntity, RecommendationQuery, TextIndexScope, WeightMode};
use trialrec_core::ingest::{build_graph, collect_entity_texts, generate_with, read_jsonl, to_jsonl, training_texts, NormalizationTable, SynthConfig};
use trialrec_core::kg::{read_node_manifest, NodeType, RelationType, NODES_FILE};
use trialrec_core::kge::{train_kge, ModelKind, TrainConfig, TripleSplit};
use trialrec_core::snapshot::{load_snapshot, SnapshotPaths};
use trialrec_core::text::{train_text_space, TextSpaceParams};
use trialrec_core::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::UnknownNode(_) => PyKeyError::new_err(e.to_string()),
        e if e.is_validation() => PyValueError::new_err(e.to_string()),
        e => PyRuntimeError::new_err(e.to_string()),
    }
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.replace('-', "_").parse().map_err(py_err)
}

/// Round-trips a serializable value through `json.loads`.
fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Synthetic trial records as JSONL text.
#[pyfunction]
#[pyo3(signature = (seed, n_trials, first_id = 1, forced_structure = false))]
fn synth_corpus(seed: u64, n_trials: usize, first_id: u32, forced_structure: bool) -> String {
    to_jsonl(&generate_with(&SynthConfig {
        seed,
        n_trials,
        first_id,
        forced_structure,
    }))
}

#[pyfunction]
#[pyo3(signature = (ranks, ks = vec![1, 3, 10]))]
fn compute_metrics<'py>(py: Python<'py>, ranks: Vec<usize>, ks: Vec<usize>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &trialrec_core::eval::compute_metrics(&ranks, &ks).map_err(py_err)?)
}

#[pyfunction]
fn recommender_metrics<'py>(py: Python<'py>, best_positions: Vec<usize>, best_similarities: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &trialrec_core::inductive::recommender_metrics(&best_positions, &best_similarities).map_err(py_err)?)
}

#[pyclass(module = "trialrec", frozen)]
struct KnowledgeGraph {
    inner: trialrec_core::kg::KnowledgeGraph,
}

#[pymethods]
impl KnowledgeGraph {
    /// Builds a graph from a JSONL corpus file with exact text matching.
    #[staticmethod]
    fn from_corpus(path: PathBuf) -> PyResult<Self> {
        let records = read_jsonl(&path).map_err(py_err)?;
        let table = NormalizationTable::exact(&collect_entity_texts(&records));
        Ok(KnowledgeGraph {
            inner: build_graph(&records, &table).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn read_dir(path: PathBuf) -> PyResult<Self> {
        Ok(KnowledgeGraph {
            inner: trialrec_core::kg::KnowledgeGraph::read_dir(&path).map_err(py_err)?,
        })
    }

    fn write_dir(&self, path: PathBuf) -> PyResult<()> {
        self.inner.write_dir(&path).map_err(py_err)
    }

    fn node_count(&self) -> usize {
        self.inner.node_count()
    }

    fn triple_count(&self) -> usize {
        self.inner.triple_count()
    }

    fn stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.stats())
    }

    /// `(id, type tag, text)` of one node.
    fn node(&self, id: &str) -> PyResult<(String, String, Option<String>)> {
        let n = self.inner.node(id).ok_or_else(|| PyKeyError::new_err(id.to_string()))?;
        Ok((n.id.to_string(), n.node_type.tag().to_string(), n.attribute_text.clone()))
    }

    fn node_ids(&self, node_type: &str) -> PyResult<Vec<String>> {
        let t: NodeType = parse(node_type)?;
        Ok(self.inner.nodes_of_type(t).map(|n| n.id.to_string()).collect())
    }
}

#[pyclass(module = "trialrec", frozen)]
struct TextSpace {
    inner: trialrec_core::text::TextSpace,
}

#[pymethods]
impl TextSpace {
    #[staticmethod]
    #[pyo3(signature = (texts, dim = 100, epochs = 5, buckets = 1 << 18, seed = 1))]
    fn train(texts: Vec<String>, dim: usize, epochs: usize, buckets: u32, seed: u64) -> PyResult<Self> {
        let params = TextSpaceParams {
            dim,
            epochs,
            buckets,
            seed,
            ..Default::default()
        };
        Ok(TextSpace {
            inner: train_text_space(&texts, &params).map_err(py_err)?,
        })
    }

    /// Trains on the element texts of a JSONL corpus file.
    #[staticmethod]
    #[pyo3(signature = (path, dim = 100, epochs = 5, buckets = 1 << 18, seed = 1))]
    fn train_on_corpus(path: PathBuf, dim: usize, epochs: usize, buckets: u32, seed: u64) -> PyResult<Self> {
        let records = read_jsonl(&path).map_err(py_err)?;
        Self::train(training_texts(&records), dim, epochs, buckets, seed)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(TextSpace {
            inner: trialrec_core::text::TextSpace::load(&path).map_err(py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(py_err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn embed(&self, text: &str) -> Vec<f32> {
        self.inner.embed_sentence(text)
    }

    fn similarity(&self, a: &str, b: &str) -> f64 {
        self.inner.similarity(a, b)
    }
}

#[pyclass(module = "trialrec", frozen)]
struct KgeModel {
    inner: trialrec_core::kge::KgeModel,
}

#[pymethods]
impl KgeModel {
    /// Trains on the whole graph, or on the training part of a split directory.
    #[staticmethod]
    #[pyo3(signature = (graph, kind, dim = 100, epochs = 1000, seed = 1, split = None))]
    fn train(graph: &KnowledgeGraph, kind: &str, dim: usize, epochs: usize, seed: u64, split: Option<PathBuf>) -> PyResult<Self> {
        let kind: ModelKind = parse(kind)?;
        let split = split.map(|p| TripleSplit::read_dir(&p)).transpose().map_err(py_err)?;
        let config = TrainConfig {
            dim,
            epochs,
            seed,
            ..TrainConfig::new(kind)
        };
        Ok(KgeModel {
            inner: train_kge(&graph.inner, split.as_ref(), &config).map_err(py_err)?,
        })
    }

    /// Loads a bundle; the graph directory supplies the node manifest.
    #[staticmethod]
    fn load(bundle: PathBuf, graph_dir: PathBuf) -> PyResult<Self> {
        let nodes = read_node_manifest(&graph_dir.join(NODES_FILE)).map_err(py_err)?;
        Ok(KgeModel {
            inner: trialrec_core::kge::KgeModel::load(&bundle, nodes.into_iter().map(|n| (n.id, n.node_type))).map_err(py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(py_err)
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind().name()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn loss_trace(&self) -> Vec<f64> {
        self.inner.loss_trace().to_vec()
    }

    fn entity_vector(&self, id: &str) -> PyResult<Vec<f64>> {
        self.inner
            .entity_vector(id)
            .map(<[f64]>::to_vec)
            .ok_or_else(|| PyKeyError::new_err(id.to_string()))
    }

    fn score(&self, head: &str, relation: &str, tail: &str) -> PyResult<f64> {
        let r: RelationType = relation.parse().map_err(py_err)?;
        self.inner.score(head, r, tail).map_err(py_err)
    }

    /// Filtered link-prediction report for a split directory.
    #[pyo3(signature = (graph, split, mode = "set_aside", ks = vec![1, 3, 10]))]
    fn evaluate<'py>(&self, py: Python<'py>, graph: &KnowledgeGraph, split: PathBuf, mode: &str, ks: Vec<usize>) -> PyResult<Bound<'py, PyAny>> {
        let mode: EvalMode = parse(mode)?;
        let split = TripleSplit::read_dir(&split).map_err(py_err)?;
        to_py(py, &evaluate_split_with(&self.inner, &graph.inner, &split, mode, &ks).map_err(py_err)?)
    }
}

#[pyclass(module = "trialrec", frozen)]
struct Snapshot {
    inner: trialrec_core::snapshot::Snapshot,
}

#[pymethods]
impl Snapshot {
    #[staticmethod]
    #[pyo3(signature = (model_bundle, graph_dir, text_space, scope = "same_type"))]
    fn load(model_bundle: PathBuf, graph_dir: PathBuf, text_space: PathBuf, scope: &str) -> PyResult<Self> {
        let scope: TextIndexScope = parse(scope)?;
        let paths = SnapshotPaths {
            model_bundle,
            node_manifest: graph_dir.join(NODES_FILE),
            text_space,
        };
        Ok(Snapshot {
            inner: load_snapshot(&paths, scope).map_err(py_err)?,
        })
    }

    #[getter]
    fn snapshot_id(&self) -> String {
        self.inner.snapshot_id.clone()
    }

    fn info<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.info())
    }

    /// Recommendations and the neighbor trace for a draft title.
    #[pyo3(signature = (title, element_type, k, knn_k = 10, weight_mode = "similarity"))]
    fn recommend<'py>(&self, py: Python<'py>, title: &str, element_type: &str, k: usize, knn_k: usize, weight_mode: &str) -> PyResult<Bound<'py, PyAny>> {
        let query = RecommendationQuery {
            knn_k,
            weight_mode: parse::<WeightMode>(weight_mode)?,
            ..RecommendationQuery::new(title, parse(element_type)?, k)
        };
        to_py(py, &self.inner.recommender.recommend(&query).map_err(py_err)?)
    }

    #[pyo3(signature = (text, node_type = "NCT", knn_k = 10, weight_mode = "similarity"))]
    fn embed(&self, text: &str, node_type: &str, knn_k: usize, weight_mode: &str) -> PyResult<Vec<f64>> {
        let entity = NewEntity::new(parse(node_type)?, text);
        let trace = self.inner.recommender.estimate(&entity, knn_k, parse(weight_mode)?).map_err(py_err)?;
        Ok(trace.estimated_vector)
    }

    #[pyo3(signature = (node_id, k = 10))]
    fn neighbors<'py>(&self, py: Python<'py>, node_id: &str, k: usize) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.recommender.neighbors(node_id, k).map_err(py_err)?)
    }
}

#[pymodule]
fn trialrec(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(synth_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(compute_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(recommender_metrics, m)?)?;
    m.add_class::<KnowledgeGraph>()?;
    m.add_class::<TextSpace>()?;
    m.add_class::<KgeModel>()?;
    m.add_class::<Snapshot>()?;
    Ok(())
}
