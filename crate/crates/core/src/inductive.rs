//! Embeddings for unseen nodes from their text, and recommendation of
//! design elements for a draft trial.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::csv_field;
use crate::index::VectorIndex;
use crate::ingest::TrialRecord;
use crate::kg::{write_lines, Node, NodeId, NodeType};
use crate::kge::KgeModel;
use crate::text::{cosine_similarity, TextSpace};

pub const DEFAULT_KNN_K: usize = 10;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    /// `max(0, cos)`, averaged with `1/k`.
    #[default]
    Similarity,
    /// `1 - cos` clamped to `[0, 1]`, averaged with `1/k`.
    Distance,
    /// Similarity weights divided by their sum.
    NormalizedSimilarity,
}

impl WeightMode {
    pub const ALL: [WeightMode; 3] = [WeightMode::Similarity, WeightMode::Distance, WeightMode::NormalizedSimilarity];

    pub fn name(self) -> &'static str {
        match self {
            WeightMode::Similarity => "similarity",
            WeightMode::Distance => "distance",
            WeightMode::NormalizedSimilarity => "normalized_similarity",
        }
    }

    fn weight(self, similarity: f64) -> f64 {
        match self {
            WeightMode::Similarity | WeightMode::NormalizedSimilarity => similarity.max(0.0),
            WeightMode::Distance => (1.0 - similarity).clamp(0.0, 1.0),
        }
    }
}

impl fmt::Display for WeightMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WeightMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        WeightMode::ALL
            .into_iter()
            .find(|m| m.name() == s.replace('-', "_"))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown weight mode {s:?}")))
    }
}

/// Which indexed nodes may serve as text neighbors.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextIndexScope {
    /// Only nodes of the new entity's own type.
    #[default]
    SameType,
    /// Trials and every textual type.
    AllTextual,
}

impl FromStr for TextIndexScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "same_type" => Ok(TextIndexScope::SameType),
            "all_textual" => Ok(TextIndexScope::AllTextual),
            _ => Err(Error::InvalidArgument(format!("unknown text index scope {s:?}"))),
        }
    }
}

fn in_text_scope(t: NodeType) -> bool {
    t == NodeType::Nct || t.is_textual()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewEntity {
    pub node_type: NodeType,
    pub attribute_text: String,
}

impl NewEntity {
    pub fn new(node_type: NodeType, attribute_text: impl Into<String>) -> Self {
        NewEntity {
            node_type,
            attribute_text: attribute_text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub node_id: NodeId,
    /// Cosine in the text space.
    pub similarity: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationTrace {
    pub neighbors: Vec<Neighbor>,
    pub k: usize,
    pub weight_mode: WeightMode,
    pub estimated_vector: Vec<f64>,
}

/// Text-space vectors of nodes that have a KGE vector and attribute text.
#[derive(Debug, Clone, PartialEq)]
pub struct TextIndex {
    index: VectorIndex,
    scope: TextIndexScope,
}

impl TextIndex {
    /// Indexes every node of `nodes` in text scope that `model` knows and
    /// that has attribute text.
    pub fn build<'a>(text_space: &TextSpace, model: &KgeModel, nodes: impl IntoIterator<Item = &'a Node>, scope: TextIndexScope) -> Result<Self> {
        let entries: Vec<(NodeId, NodeType, Vec<f64>)> = nodes
            .into_iter()
            .filter(|n| in_text_scope(n.node_type) && model.contains(n.id.as_str()))
            .filter_map(|n| Some((n.id.clone(), n.node_type, n.attribute_text.as_deref()?)))
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|(id, t, text)| (id, t, text_space.embed_sentence(text).into_iter().map(f64::from).collect()))
            .collect();
        Ok(TextIndex {
            index: VectorIndex::build(text_space.dim(), entries)?,
            scope,
        })
    }

    pub fn scope(&self) -> TextIndexScope {
        self.scope
    }

    pub fn len(&self) -> usize {
        self.index.bucket_sizes().iter().map(|(_, n)| n).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn bucket_sizes(&self) -> Vec<(NodeType, usize)> {
        self.index.bucket_sizes()
    }

    /// The `k` nearest indexed nodes to `query`, similarity descending then
    /// id ascending.
    pub fn neighbors(&self, query: &[f64], k: usize, node_type: NodeType) -> Result<Vec<(NodeId, f64)>> {
        let mut hits = match self.scope {
            TextIndexScope::SameType => self.index.knn(query, k, node_type)?,
            TextIndexScope::AllTextual => {
                let mut all = Vec::new();
                for (t, _) in self.index.bucket_sizes() {
                    all.extend(self.index.knn(query, k, t)?);
                }
                all.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
                all.truncate(k);
                all
            }
        };
        for h in &mut hits {
            h.1 = h.1.clamp(-1.0, 1.0);
        }
        Ok(hits)
    }
}

/// Weighted combination of neighbor KGE vectors. Summation runs in id
/// order, so the result does not depend on the order of `neighbors`.
pub fn combine_neighbors(neighbors: &[(NodeId, f64)], model: &KgeModel, k: usize, mode: WeightMode) -> Result<(Vec<Neighbor>, Vec<f64>)> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let mut weighted: Vec<(&NodeId, f64, f64)> = neighbors.iter().map(|(id, s)| (id, *s, mode.weight(*s))).collect();
    weighted.sort_by(|a, b| a.0.cmp(b.0));
    let mut v = vec![0.0; model.width()];
    for (id, _, w) in &weighted {
        let e = model
            .entity_vector(id.as_str())
            .ok_or_else(|| Error::UnknownNode(id.to_string()))?;
        for (a, x) in v.iter_mut().zip(e) {
            *a += w * x;
        }
    }
    let scale = match mode {
        WeightMode::NormalizedSimilarity => {
            let total: f64 = weighted.iter().map(|w| w.2).sum();
            if total > 0.0 {
                1.0 / total
            } else {
                0.0
            }
        }
        _ => 1.0 / neighbors.len().max(1) as f64,
    };
    v.iter_mut().for_each(|x| *x *= scale);
    let mut out: Vec<Neighbor> = neighbors
        .iter()
        .map(|(id, s)| Neighbor {
            node_id: id.clone(),
            similarity: *s,
            weight: if mode == WeightMode::NormalizedSimilarity { mode.weight(*s) * scale } else { mode.weight(*s) },
        })
        .collect();
    out.sort_by(|a, b| b.similarity.total_cmp(&a.similarity).then_with(|| a.node_id.cmp(&b.node_id)));
    Ok((out, v))
}

fn query_vector(text_space: &TextSpace, text: &str) -> Result<Vec<f64>> {
    if text.trim().is_empty() {
        return Err(Error::EmptyQuery);
    }
    let v: Vec<f64> = text_space.embed_sentence(text).into_iter().map(f64::from).collect();
    if v.iter().all(|&x| x == 0.0) {
        return Err(Error::Untokenizable(text.to_string()));
    }
    Ok(v)
}

/// KGE vector for a node the model has never seen: the weighted mean of
/// the KGE vectors of its `k` nearest text-space neighbors.
pub fn estimate_embedding(entity: &NewEntity, text_space: &TextSpace, text_index: &TextIndex, model: &KgeModel, k: usize, mode: WeightMode) -> Result<EstimationTrace> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if !in_text_scope(entity.node_type) {
        return Err(Error::InvalidArgument(format!(
            "cannot estimate a {} node from text",
            entity.node_type
        )));
    }
    let q = query_vector(text_space, &entity.attribute_text)?;
    let hits = text_index.neighbors(&q, k, entity.node_type)?;
    if hits.is_empty() {
        return Err(Error::Data(format!("the text index has no {} entries", entity.node_type)));
    }
    let (neighbors, estimated_vector) = combine_neighbors(&hits, model, k, mode)?;
    Ok(EstimationTrace {
        neighbors,
        k,
        weight_mode: mode,
        estimated_vector,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationQuery {
    pub query_text: String,
    pub element_type: NodeType,
    pub top_n: usize,
    pub knn_k: usize,
    pub weight_mode: WeightMode,
}

impl RecommendationQuery {
    pub fn new(query_text: impl Into<String>, element_type: NodeType, top_n: usize) -> Self {
        RecommendationQuery {
            query_text: query_text.into(),
            element_type,
            top_n,
            knn_k: DEFAULT_KNN_K,
            weight_mode: WeightMode::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.query_text.trim().is_empty() {
            return Err(Error::EmptyQuery);
        }
        if self.top_n == 0 || self.knn_k == 0 {
            return Err(Error::InvalidArgument("k and knn_k must be at least 1".into()));
        }
        if !self.element_type.is_recommendable() {
            return Err(Error::InvalidArgument(format!(
                "{} is not a recommendable element type",
                self.element_type
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub node_id: NodeId,
    pub text: String,
    pub kg_similarity: f64,
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationSet {
    pub recommendations: Vec<Recommendation>,
    pub trace: EstimationTrace,
}

/// A text space, a KGE model and the indexes over them.
#[derive(Debug, Clone)]
pub struct Recommender {
    text_space: TextSpace,
    model: KgeModel,
    text_index: TextIndex,
    kg_index: VectorIndex,
    texts: BTreeMap<NodeId, String>,
}

impl Recommender {
    /// `nodes` must describe every model entity with its type.
    pub fn new(text_space: TextSpace, model: KgeModel, nodes: &[Node], scope: TextIndexScope) -> Result<Self> {
        let by_id: BTreeMap<&NodeId, &Node> = nodes.iter().map(|n| (&n.id, n)).collect();
        for (i, id) in model.entities().ids().iter().enumerate() {
            let node = by_id.get(id).ok_or_else(|| Error::Data(format!("model entity {id} is missing from the node manifest")))?;
            if node.node_type != model.entities().node_type(i) {
                return Err(Error::Data(format!("model entity {id} has a different type in the node manifest")));
            }
        }
        let text_index = TextIndex::build(&text_space, &model, nodes, scope)?;
        let ents = model.entities();
        let kg_index = VectorIndex::build(
            model.width(),
            (0..ents.len()).map(|i| (ents.id(i).clone(), ents.node_type(i), model.entity_row(i))),
        )?;
        let texts = nodes
            .iter()
            .filter(|n| model.contains(n.id.as_str()))
            .filter_map(|n| Some((n.id.clone(), n.attribute_text.clone()?)))
            .collect();
        Ok(Recommender {
            text_space,
            model,
            text_index,
            kg_index,
            texts,
        })
    }

    pub fn text_space(&self) -> &TextSpace {
        &self.text_space
    }

    pub fn model(&self) -> &KgeModel {
        &self.model
    }

    pub fn text_index(&self) -> &TextIndex {
        &self.text_index
    }

    pub fn kg_index(&self) -> &VectorIndex {
        &self.kg_index
    }

    /// Attribute text of a node, or its id when it has none.
    pub fn text_of(&self, id: &NodeId) -> String {
        self.texts.get(id).cloned().unwrap_or_else(|| id.to_string())
    }

    pub fn estimate(&self, entity: &NewEntity, k: usize, mode: WeightMode) -> Result<EstimationTrace> {
        estimate_embedding(entity, &self.text_space, &self.text_index, &self.model, k, mode)
    }

    fn to_recommendations(&self, hits: Vec<(NodeId, f64)>) -> Vec<Recommendation> {
        hits.into_iter()
            .enumerate()
            .map(|(i, (node_id, s))| Recommendation {
                text: self.text_of(&node_id),
                node_id,
                kg_similarity: s,
                position: i + 1,
            })
            .collect()
    }

    /// Estimates a trial node for the query text, then returns its nearest
    /// KGE neighbors of the requested element type.
    pub fn recommend(&self, query: &RecommendationQuery) -> Result<RecommendationSet> {
        query.validate()?;
        let trace = self.estimate(&NewEntity::new(NodeType::Nct, query.query_text.as_str()), query.knn_k, query.weight_mode)?;
        let hits = self.kg_index.knn(&trace.estimated_vector, query.top_n, query.element_type)?;
        Ok(RecommendationSet {
            recommendations: self.to_recommendations(hits),
            trace,
        })
    }

    /// KGE-space neighbors of an existing node among nodes of its own type,
    /// itself excluded.
    pub fn neighbors(&self, node_id: &str, k: usize) -> Result<Vec<Recommendation>> {
        let i = self.model.entity_index(node_id)?;
        let t = self.model.entities().node_type(i);
        let hits = self.kg_index.knn(self.model.entity_row(i), k + 1, t)?;
        let mut hits: Vec<(NodeId, f64)> = hits.into_iter().filter(|(id, _)| id.as_str() != node_id).collect();
        hits.truncate(k);
        Ok(self.to_recommendations(hits))
    }
}

pub fn recommend(query: &RecommendationQuery, recommender: &Recommender) -> Result<RecommendationSet> {
    recommender.recommend(query)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecMetrics {
    pub mean_rank: f64,
    pub mrr: f64,
    pub avg_best_similarity: f64,
}

pub fn recommender_metrics(best_positions: &[usize], best_similarities: &[f64]) -> Result<RecMetrics> {
    if best_positions.is_empty() {
        return Err(Error::InvalidArgument("no positions to aggregate".into()));
    }
    if best_positions.len() != best_similarities.len() {
        return Err(Error::InvalidArgument("positions and similarities differ in length".into()));
    }
    if best_positions.contains(&0) {
        return Err(Error::InvalidArgument("positions start at 1".into()));
    }
    let n = best_positions.len() as f64;
    Ok(RecMetrics {
        mean_rank: best_positions.iter().map(|&p| p as f64).sum::<f64>() / n,
        mrr: best_positions.iter().map(|&p| 1.0 / p as f64).sum::<f64>() / n,
        avg_best_similarity: best_similarities.iter().sum::<f64>() / n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementRecord {
    pub nct_id: String,
    pub element_type: NodeType,
    pub top_n: usize,
    pub text: String,
    /// `None` when no recommendation was produced.
    pub best_position: Option<usize>,
    pub best_similarity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecEvalReport {
    pub element_type: NodeType,
    pub top_n: usize,
    pub knn_k: usize,
    pub weight_mode: WeightMode,
    /// Trials with at least one element of the type.
    pub n_queries: usize,
    pub n_elements: usize,
    /// Elements whose trial got no recommendations.
    pub n_unanswered: usize,
    pub mean_rank: Option<f64>,
    pub mrr: Option<f64>,
    pub avg_best_similarity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlindSetReport {
    pub reports: Vec<RecEvalReport>,
    #[serde(skip)]
    pub records: Vec<ElementRecord>,
}

impl BlindSetReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.reports).expect("report serializes")
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let header = "nct_id,element_type,top_n,best_position,best_similarity".to_string();
        let rows = self.records.iter().map(|r| {
            format!(
                "{},{},{},{},{}",
                csv_field(&r.nct_id),
                r.element_type,
                r.top_n,
                r.best_position.map(|p| p.to_string()).unwrap_or_default(),
                r.best_similarity.map(|s| s.to_string()).unwrap_or_default()
            )
        });
        write_lines(path, std::iter::once(header).chain(rows))
    }
}

/// Position (1-based) and value of the highest similarity; the earliest
/// position wins ties.
pub fn best_match(similarities: &[f64]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in similarities.iter().enumerate() {
        if best.map_or(true, |(_, b)| s > b) {
            best = Some((i + 1, s));
        }
    }
    best
}

/// Recommends from each blind trial's title and scores the recommendations
/// against the trial's actual elements, per `(element_type, top_n)` config.
pub fn evaluate_blind_set(blind: &[TrialRecord], recommender: &Recommender, configs: &[(NodeType, usize)], knn_k: usize, mode: WeightMode) -> Result<BlindSetReport> {
    if let Some(r) = blind.iter().find(|r| recommender.model().contains(&r.nct_id)) {
        return Err(Error::Data(format!("blind trial {} is part of the trained model", r.nct_id)));
    }
    let space = recommender.text_space();
    let mut reports = Vec::with_capacity(configs.len());
    let mut records = Vec::new();
    for &(element_type, top_n) in configs {
        let per_trial: Vec<Vec<ElementRecord>> = blind
            .par_iter()
            .map(|trial| -> Result<Vec<ElementRecord>> {
                let elements = trial.elements(element_type);
                if elements.is_empty() {
                    return Ok(Vec::new());
                }
                let query = RecommendationQuery {
                    knn_k,
                    weight_mode: mode,
                    ..RecommendationQuery::new(trial.brief_title.as_str(), element_type, top_n)
                };
                let recs = recommender.recommend(&query)?.recommendations;
                let rec_vecs: Vec<Vec<f32>> = recs.iter().map(|r| space.embed_sentence(&r.text)).collect();
                elements
                    .iter()
                    .map(|e| {
                        let ev = space.embed_sentence(e);
                        let sims = rec_vecs.iter().map(|rv| cosine_similarity(&ev, rv)).collect::<Result<Vec<f64>>>()?;
                        let best = best_match(&sims);
                        Ok(ElementRecord {
                            nct_id: trial.nct_id.clone(),
                            element_type,
                            top_n,
                            text: e.to_string(),
                            best_position: best.map(|b| b.0),
                            best_similarity: best.map(|b| b.1),
                        })
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        let n_queries = per_trial.iter().filter(|v| !v.is_empty()).count();
        let batch: Vec<ElementRecord> = per_trial.into_iter().flatten().collect();
        let answered: Vec<(usize, f64)> = batch
            .iter()
            .filter_map(|r| Some((r.best_position?, r.best_similarity?)))
            .collect();
        let metrics = if answered.is_empty() {
            None
        } else {
            let (p, s): (Vec<usize>, Vec<f64>) = answered.iter().copied().unzip();
            Some(recommender_metrics(&p, &s)?)
        };
        reports.push(RecEvalReport {
            element_type,
            top_n,
            knn_k,
            weight_mode: mode,
            n_queries,
            n_elements: batch.len(),
            n_unanswered: batch.len() - answered.len(),
            mean_rank: metrics.map(|m| m.mean_rank),
            mrr: metrics.map(|m| m.mrr),
            avg_best_similarity: metrics.map(|m| m.avg_best_similarity),
        });
        records.extend(batch);
    }
    Ok(BlindSetReport { reports, records })
}
