//! Knowledge-graph embeddings: TransE, TransR, ComplEx and node2vec.

mod negatives;
mod split;
mod train;
mod walks;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::kg::{EntityTable, NodeId, NodeType, RelationType, Triple};
use crate::store::{read_vector_store, write_vector_store, VectorStoreHeader};

pub use negatives::{sample_negatives, Corruptor, NegativeSample};
pub use split::{split_triples, SplitRatios, StratumCounts, TripleSplit, UNASSIGNED_STRATUM};
pub use train::{train_kge, train_kge_with};
pub use walks::{generate_walks, train_node2vec, WalkCorpus, WalkParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Node2vec,
    Transe,
    Transr,
    Complex,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Node2vec, ModelKind::Transe, ModelKind::Transr, ModelKind::Complex];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Node2vec => "node2vec",
            ModelKind::Transe => "transe",
            ModelKind::Transr => "transr",
            ModelKind::Complex => "complex",
        }
    }

    pub fn is_translational(self) -> bool {
        matches!(self, ModelKind::Transe | ModelKind::Transr)
    }

    /// Stored floats per entity: complex coordinates are (re, im) pairs.
    pub fn width(self, dim: usize) -> usize {
        match self {
            ModelKind::Complex => 2 * dim,
            _ => dim,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown model kind {s:?}; expected one of node2vec, transe, transr, complex")))
    }
}

/// Which triples a model was trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainingScope {
    /// The training part of a split (plus validation for node2vec).
    Train,
    /// Every triple of the graph.
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub kind: ModelKind,
    pub dim: usize,
    pub epochs: usize,
    /// Defaults to 0.01 for the SGD-trained models and 0.025 for node2vec.
    pub learning_rate: Option<f64>,
    pub margin: f64,
    /// Defaults to 8 corruptions per positive, or 5 skip-gram negatives for node2vec.
    pub negatives: Option<usize>,
    pub batch_size: usize,
    pub seed: u64,
    pub walks_per_node: usize,
    pub walk_length: usize,
    pub p: f64,
    pub q: f64,
    pub window: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            kind: ModelKind::Transe,
            dim: 100,
            epochs: 1000,
            learning_rate: None,
            margin: 1.0,
            negatives: None,
            batch_size: 128,
            seed: 1,
            walks_per_node: 50,
            walk_length: 80,
            p: 1.0,
            q: 1.0,
            window: 5,
        }
    }
}

impl TrainConfig {
    pub fn new(kind: ModelKind) -> Self {
        TrainConfig {
            kind,
            ..Default::default()
        }
    }

    pub fn effective_learning_rate(&self) -> f64 {
        self.learning_rate.unwrap_or(match self.kind {
            ModelKind::Node2vec => 0.025,
            _ => 0.01,
        })
    }

    pub fn effective_negatives(&self) -> usize {
        self.negatives.unwrap_or(match self.kind {
            ModelKind::Node2vec => 5,
            _ => 8,
        })
    }

    pub fn walk_params(&self) -> WalkParams {
        WalkParams {
            walks_per_node: self.walks_per_node,
            walk_length: self.walk_length,
            p: self.p,
            q: self.q,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        let lr = self.effective_learning_rate();
        if self.epochs < 1 {
            return bad("epochs must be at least 1");
        }
        if self.dim < 2 {
            return bad("dim must be at least 2");
        }
        if !(lr.is_finite() && lr > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(self.margin.is_finite() && self.margin >= 0.0) {
            return bad("margin must be non-negative");
        }
        if self.effective_negatives() < 1 {
            return bad("negatives must be at least 1");
        }
        if self.batch_size < 1 {
            return bad("batch_size must be at least 1");
        }
        if self.kind == ModelKind::Node2vec {
            self.walk_params().validate()?;
            if self.window < 1 {
                return bad("window must be at least 1");
            }
        }
        Ok(())
    }
}

/// A triple over entity indices and relation slots of one model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IndexedTriple {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
}

/// Sparse gradient set keyed by entity index and relation slot.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradients {
    pub entities: BTreeMap<usize, Vec<f64>>,
    pub relations: BTreeMap<usize, Vec<f64>>,
    /// Row-major dim×dim per relation slot (TransR only).
    pub projections: BTreeMap<usize, Vec<f64>>,
}

fn accumulate(map: &mut BTreeMap<usize, Vec<f64>>, key: usize, scale: f64, g: &[f64]) {
    let slot = map.entry(key).or_insert_with(|| vec![0.0; g.len()]);
    for (a, b) in slot.iter_mut().zip(g) {
        *a += scale * b;
    }
}

impl Gradients {
    pub fn is_empty(&self) -> bool {
        self.entities.is_empty() && self.relations.is_empty() && self.projections.is_empty()
    }

    /// True when every stored component is exactly zero.
    pub fn is_zero(&self) -> bool {
        [&self.entities, &self.relations, &self.projections]
            .iter()
            .all(|m| m.values().flatten().all(|x| *x == 0.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KgeModel {
    kind: ModelKind,
    dim: usize,
    entities: EntityTable,
    entity_vecs: Vec<f64>,
    relations: Vec<RelationType>,
    relation_vecs: Vec<f64>,
    projections: Vec<f64>,
    config: TrainConfig,
    scope: TrainingScope,
    loss_trace: Vec<f64>,
}

pub(crate) fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn normalize_in_place(v: &mut [f64]) {
    let n = l2(v);
    if n > 0.0 && n.is_finite() {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// `M (h - t) + r`, the TransR residual.
fn transr_residual(m: &[f64], h: &[f64], r: &[f64], t: &[f64]) -> Vec<f64> {
    let dim = r.len();
    let diff: Vec<f64> = h.iter().zip(t).map(|(a, b)| a - b).collect();
    (0..dim)
        .map(|i| m[i * dim..(i + 1) * dim].iter().zip(&diff).map(|(a, b)| a * b).sum::<f64>() + r[i])
        .collect()
}

fn complex_score(h: &[f64], r: &[f64], t: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..h.len() / 2 {
        let (a, b) = (h[2 * i], h[2 * i + 1]);
        let (c, d) = (r[2 * i], r[2 * i + 1]);
        let (e, f) = (t[2 * i], t[2 * i + 1]);
        s += (a * c - b * d) * e + (a * d + b * c) * f;
    }
    s
}

fn cosine(u: &[f64], v: &[f64]) -> f64 {
    let (nu, nv) = (l2(u), l2(v));
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() / (nu * nv)
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl KgeModel {
    /// A freshly initialized model over `entities` and `relations`.
    pub(crate) fn initialize(
        config: &TrainConfig,
        entities: EntityTable,
        mut relations: Vec<RelationType>,
        scope: TrainingScope,
        rng: &mut impl rand::Rng,
    ) -> Self {
        let kind = config.kind;
        let dim = config.dim;
        let w = kind.width(dim);
        let bound = 6.0 / (dim as f64).sqrt();
        let mut entity_vecs: Vec<f64> = (0..entities.len() * w).map(|_| rng.gen_range(-bound..bound)).collect();
        if kind == ModelKind::Node2vec {
            relations.clear();
        }
        relations.sort();
        relations.dedup();
        let mut relation_vecs: Vec<f64> = (0..relations.len() * w).map(|_| rng.gen_range(-bound..bound)).collect();
        if kind.is_translational() {
            entity_vecs.chunks_exact_mut(w).for_each(normalize_in_place);
            relation_vecs.chunks_exact_mut(w).for_each(normalize_in_place);
        }
        let projections = if kind == ModelKind::Transr {
            let mut p = vec![0.0; relations.len() * dim * dim];
            for r in 0..relations.len() {
                for i in 0..dim {
                    p[r * dim * dim + i * dim + i] = 1.0;
                }
            }
            p
        } else {
            Vec::new()
        };
        KgeModel {
            kind,
            dim,
            entities,
            entity_vecs,
            relations,
            relation_vecs,
            projections,
            config: config.clone(),
            scope,
            loss_trace: Vec::new(),
        }
    }

    /// A model with explicit parameters; vectors are row-major in entity
    /// table and relation order. Mainly for fixtures and tests.
    pub fn from_parts(
        config: TrainConfig,
        entities: EntityTable,
        entity_vecs: Vec<f64>,
        relations: Vec<RelationType>,
        relation_vecs: Vec<f64>,
        projections: Vec<f64>,
    ) -> Result<Self> {
        let kind = config.kind;
        let dim = config.dim;
        let w = kind.width(dim);
        let check = |expected: usize, actual: usize| {
            if expected == actual {
                Ok(())
            } else {
                Err(Error::DimensionMismatch { expected, actual })
            }
        };
        let mut sorted = relations.clone();
        sorted.sort();
        sorted.dedup();
        if sorted != relations {
            return Err(Error::InvalidArgument("relations must be sorted and distinct".into()));
        }
        if kind == ModelKind::Node2vec && !relations.is_empty() {
            return Err(Error::InvalidArgument("node2vec models have no relation parameters".into()));
        }
        check(entities.len() * w, entity_vecs.len())?;
        check(relations.len() * w, relation_vecs.len())?;
        let proj = if kind == ModelKind::Transr { relations.len() * dim * dim } else { 0 };
        check(proj, projections.len())?;
        let model = KgeModel {
            kind,
            dim,
            entities,
            entity_vecs,
            relations,
            relation_vecs,
            projections,
            config,
            scope: TrainingScope::All,
            loss_trace: Vec::new(),
        };
        model.check_finite()?;
        Ok(model)
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Floats per stored entity vector.
    pub fn width(&self) -> usize {
        self.kind.width(self.dim)
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    pub fn training_scope(&self) -> TrainingScope {
        self.scope
    }

    pub(crate) fn set_training_scope(&mut self, scope: TrainingScope) {
        self.scope = scope;
    }

    pub fn loss_trace(&self) -> &[f64] {
        &self.loss_trace
    }

    pub(crate) fn set_loss_trace(&mut self, trace: Vec<f64>) {
        self.loss_trace = trace;
    }

    pub fn entities(&self) -> &EntityTable {
        &self.entities
    }

    /// Relations with parameters, ascending; empty for node2vec.
    pub fn relations(&self) -> &[RelationType] {
        &self.relations
    }

    pub fn relation_slot(&self, r: RelationType) -> Option<usize> {
        self.relations.binary_search(&r).ok()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.entities.get(id).is_some()
    }

    pub fn entity_index(&self, id: &str) -> Result<usize> {
        self.entities.lookup(id)
    }

    pub fn entity_row(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.entity_vecs[i * w..(i + 1) * w]
    }

    pub(crate) fn entity_row_mut(&mut self, i: usize) -> &mut [f64] {
        let w = self.width();
        &mut self.entity_vecs[i * w..(i + 1) * w]
    }

    pub fn entity_vector(&self, id: &str) -> Option<&[f64]> {
        self.entities.get(id).map(|i| self.entity_row(i))
    }

    pub fn set_entity_vector(&mut self, id: &str, v: &[f64]) -> Result<()> {
        let i = self.entities.lookup(id)?;
        self.check_width(v.len())?;
        self.entity_row_mut(i).copy_from_slice(v);
        Ok(())
    }

    pub fn relation_vector(&self, r: RelationType) -> Option<&[f64]> {
        let w = self.width();
        self.relation_slot(r).map(|s| &self.relation_vecs[s * w..(s + 1) * w])
    }

    pub fn set_relation_vector(&mut self, r: RelationType, v: &[f64]) -> Result<()> {
        let s = self.require_relation(r)?;
        self.check_width(v.len())?;
        let w = self.width();
        self.relation_vecs[s * w..(s + 1) * w].copy_from_slice(v);
        Ok(())
    }

    /// Row-major dim×dim projection (TransR only).
    pub fn projection(&self, r: RelationType) -> Option<&[f64]> {
        if self.kind != ModelKind::Transr {
            return None;
        }
        let d2 = self.dim * self.dim;
        self.relation_slot(r).map(|s| &self.projections[s * d2..(s + 1) * d2])
    }

    pub fn set_projection(&mut self, r: RelationType, m: &[f64]) -> Result<()> {
        if self.kind != ModelKind::Transr {
            return Err(Error::InvalidArgument(format!("{} models have no projections", self.kind)));
        }
        let s = self.require_relation(r)?;
        let d2 = self.dim * self.dim;
        if m.len() != d2 {
            return Err(Error::DimensionMismatch {
                expected: d2,
                actual: m.len(),
            });
        }
        self.projections[s * d2..(s + 1) * d2].copy_from_slice(m);
        Ok(())
    }

    fn check_width(&self, len: usize) -> Result<()> {
        if len != self.width() {
            return Err(Error::DimensionMismatch {
                expected: self.width(),
                actual: len,
            });
        }
        Ok(())
    }

    fn require_relation(&self, r: RelationType) -> Result<usize> {
        self.relation_slot(r)
            .ok_or_else(|| Error::UnknownRelation(format!("{r} has no parameters in this {} model", self.kind)))
    }

    /// Copies vectors of shared entity ids from `other`, which must have
    /// the same kind and dimension.
    pub fn warm_start_from(&mut self, other: &KgeModel) -> Result<usize> {
        if other.kind != self.kind || other.dim != self.dim {
            return Err(Error::InvalidArgument(format!(
                "warm start needs a {} model of dim {}, got {} of dim {}",
                self.kind, self.dim, other.kind, other.dim
            )));
        }
        let mut copied = 0;
        for i in 0..self.entities.len() {
            if let Some(v) = other.entity_vector(self.entities.id(i).as_str()) {
                let v = v.to_vec();
                self.entity_row_mut(i).copy_from_slice(&v);
                copied += 1;
            }
        }
        Ok(copied)
    }

    pub fn index_triple(&self, t: &Triple) -> Result<IndexedTriple> {
        let relation = if self.kind == ModelKind::Node2vec {
            0
        } else {
            self.require_relation(t.relation)?
        };
        Ok(IndexedTriple {
            head: self.entities.lookup(t.head.as_str())?,
            relation,
            tail: self.entities.lookup(t.tail.as_str())?,
        })
    }

    /// Plausibility of `(h, r, t)`; higher is more plausible.
    pub fn score(&self, h: &str, r: RelationType, t: &str) -> Result<f64> {
        let it = self.index_triple(&Triple::new(h, r, t))?;
        Ok(self.score_indexed(it))
    }

    pub fn score_indexed(&self, t: IndexedTriple) -> f64 {
        let h = self.entity_row(t.head);
        let tv = self.entity_row(t.tail);
        if self.kind == ModelKind::Node2vec {
            return cosine(h, tv);
        }
        let w = self.width();
        let r = &self.relation_vecs[t.relation * w..(t.relation + 1) * w];
        match self.kind {
            ModelKind::Transe => -h.iter().zip(r).zip(tv).map(|((a, b), c)| (a + b - c).powi(2)).sum::<f64>().sqrt(),
            ModelKind::Transr => {
                let d2 = self.dim * self.dim;
                let m = &self.projections[t.relation * d2..(t.relation + 1) * d2];
                -l2(&transr_residual(m, h, r, tv))
            }
            ModelKind::Complex => complex_score(h, r, tv),
            ModelKind::Node2vec => unreachable!(),
        }
    }

    /// Adds `scale * d(score)/d(params)` for one triple into `grads`.
    fn score_gradient(&self, t: IndexedTriple, scale: f64, grads: &mut Gradients) {
        let w = self.width();
        let h = self.entity_row(t.head);
        let tv = self.entity_row(t.tail);
        let r = &self.relation_vecs[t.relation * w..(t.relation + 1) * w];
        match self.kind {
            ModelKind::Transe => {
                let u: Vec<f64> = h.iter().zip(r).zip(tv).map(|((a, b), c)| a + b - c).collect();
                let n = l2(&u);
                if n == 0.0 {
                    return;
                }
                // score = -|u|, so d(score)/du = -u/|u|.
                let g: Vec<f64> = u.iter().map(|x| -x / n).collect();
                accumulate(&mut grads.entities, t.head, scale, &g);
                accumulate(&mut grads.relations, t.relation, scale, &g);
                accumulate(&mut grads.entities, t.tail, -scale, &g);
            }
            ModelKind::Transr => {
                let dim = self.dim;
                let d2 = dim * dim;
                let m = &self.projections[t.relation * d2..(t.relation + 1) * d2];
                let u = transr_residual(m, h, r, tv);
                let n = l2(&u);
                if n == 0.0 {
                    return;
                }
                let g: Vec<f64> = u.iter().map(|x| -x / n).collect();
                // d/dh = M^T g, d/dt = -M^T g, d/dM = g (h - t)^T.
                let mut mt_g = vec![0.0; dim];
                for i in 0..dim {
                    for j in 0..dim {
                        mt_g[j] += m[i * dim + j] * g[i];
                    }
                }
                let diff: Vec<f64> = h.iter().zip(tv).map(|(a, b)| a - b).collect();
                let mut gm = vec![0.0; d2];
                for i in 0..dim {
                    for j in 0..dim {
                        gm[i * dim + j] = g[i] * diff[j];
                    }
                }
                accumulate(&mut grads.entities, t.head, scale, &mt_g);
                accumulate(&mut grads.entities, t.tail, -scale, &mt_g);
                accumulate(&mut grads.relations, t.relation, scale, &g);
                accumulate(&mut grads.projections, t.relation, scale, &gm);
            }
            ModelKind::Complex => {
                let mut gh = vec![0.0; w];
                let mut gr = vec![0.0; w];
                let mut gt = vec![0.0; w];
                for i in 0..self.dim {
                    let (a, b) = (h[2 * i], h[2 * i + 1]);
                    let (c, d) = (r[2 * i], r[2 * i + 1]);
                    let (e, f) = (tv[2 * i], tv[2 * i + 1]);
                    gh[2 * i] = c * e + d * f;
                    gh[2 * i + 1] = c * f - d * e;
                    gr[2 * i] = a * e + b * f;
                    gr[2 * i + 1] = a * f - b * e;
                    gt[2 * i] = a * c - b * d;
                    gt[2 * i + 1] = a * d + b * c;
                }
                accumulate(&mut grads.entities, t.head, scale, &gh);
                accumulate(&mut grads.relations, t.relation, scale, &gr);
                accumulate(&mut grads.entities, t.tail, scale, &gt);
            }
            ModelKind::Node2vec => {}
        }
    }

    /// Batch loss and its gradient. Each positive is paired with its list of
    /// negatives. Translational kinds use the margin ranking loss
    /// `sum max(0, margin + d_pos - d_neg)` with `d = -score`; ComplEx uses
    /// the logistic loss `softplus(-score)` for positives and
    /// `softplus(score)` for negatives.
    pub fn loss_and_gradients_indexed(&self, batch: &[(IndexedTriple, Vec<IndexedTriple>)], margin: f64) -> Result<(f64, Gradients)> {
        let mut grads = Gradients::default();
        let mut loss = 0.0;
        match self.kind {
            ModelKind::Node2vec => {
                return Err(Error::InvalidArgument("node2vec is trained by skip-gram, not by triple loss".into()));
            }
            ModelKind::Transe | ModelKind::Transr => {
                for (pos, negs) in batch {
                    let d_pos = -self.score_indexed(*pos);
                    for neg in negs {
                        let d_neg = -self.score_indexed(*neg);
                        let l = margin + d_pos - d_neg;
                        if l > 0.0 {
                            loss += l;
                            // dL/d(score_pos) = -1, dL/d(score_neg) = +1.
                            self.score_gradient(*pos, -1.0, &mut grads);
                            self.score_gradient(*neg, 1.0, &mut grads);
                        }
                    }
                }
            }
            ModelKind::Complex => {
                for (pos, negs) in batch {
                    let s = self.score_indexed(*pos);
                    loss += softplus(-s);
                    self.score_gradient(*pos, -sigmoid(-s), &mut grads);
                    for neg in negs {
                        let s = self.score_indexed(*neg);
                        loss += softplus(s);
                        self.score_gradient(*neg, sigmoid(s), &mut grads);
                    }
                }
            }
        }
        Ok((loss, grads))
    }

    pub fn loss_and_gradients(&self, batch: &[(Triple, Vec<Triple>)], margin: f64) -> Result<(f64, Gradients)> {
        let indexed = batch
            .iter()
            .map(|(p, ns)| Ok((self.index_triple(p)?, ns.iter().map(|n| self.index_triple(n)).collect::<Result<Vec<_>>>()?)))
            .collect::<Result<Vec<_>>>()?;
        self.loss_and_gradients_indexed(&indexed, margin)
    }

    /// Plain SGD step; translational entity vectors touched by the step are
    /// projected back to unit norm.
    pub fn apply_gradients(&mut self, grads: &Gradients, lr: f64) {
        let w = self.width();
        for (&i, g) in &grads.entities {
            for (x, d) in self.entity_row_mut(i).iter_mut().zip(g) {
                *x -= lr * d;
            }
        }
        for (&s, g) in &grads.relations {
            for (x, d) in self.relation_vecs[s * w..(s + 1) * w].iter_mut().zip(g) {
                *x -= lr * d;
            }
        }
        let d2 = self.dim * self.dim;
        for (&s, g) in &grads.projections {
            for (x, d) in self.projections[s * d2..(s + 1) * d2].iter_mut().zip(g) {
                *x -= lr * d;
            }
        }
        if self.kind.is_translational() {
            for &i in grads.entities.keys() {
                normalize_in_place(self.entity_row_mut(i));
            }
        }
    }

    pub fn check_finite(&self) -> Result<()> {
        let ok = self
            .entity_vecs
            .iter()
            .chain(&self.relation_vecs)
            .chain(&self.projections)
            .all(|x| x.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Training("non-finite parameter".into()))
        }
    }

    /// Writes `header.json`, `entities.vec`, `relations.vec` (not for
    /// node2vec) and `projections.bin` (TransR only) into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let header = json!({
            "kind": self.kind,
            "dim": self.dim,
            "count_entities": self.entities.len(),
            "count_relations": self.relations.len(),
            "seed": self.config.seed,
            "config": self.config,
            "training_scope": self.scope,
            "loss_trace": self.loss_trace,
        });
        let path = dir.join("header.json");
        let text = serde_json::to_string_pretty(&header).expect("header serializes") + "\n";
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;

        let w = self.width();
        let eh = VectorStoreHeader::new("entities", w, self.entities.len());
        write_vector_store(
            &dir.join("entities.vec"),
            &eh,
            (0..self.entities.len()).map(|i| (self.entities.id(i).as_str(), self.entity_row(i))),
        )?;
        if self.kind != ModelKind::Node2vec {
            let rh = VectorStoreHeader::new("relations", w, self.relations.len());
            write_vector_store(
                &dir.join("relations.vec"),
                &rh,
                self.relations
                    .iter()
                    .enumerate()
                    .map(|(s, r)| (r.tag(), &self.relation_vecs[s * w..(s + 1) * w])),
            )?;
        }
        if self.kind == ModelKind::Transr {
            let path = dir.join("projections.bin");
            let mut bytes = Vec::with_capacity(8 + self.projections.len() * 4);
            bytes.extend_from_slice(PROJECTION_MAGIC);
            for x in &self.projections {
                bytes.extend_from_slice(&(*x as f32).to_le_bytes());
            }
            let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            f.write_all(&bytes).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    /// Loads a bundle written by [`KgeModel::save`]. `nodes` supplies the
    /// node types; its ids must be exactly the bundle's entity ids.
    pub fn load(dir: &Path, nodes: impl IntoIterator<Item = (NodeId, NodeType)>) -> Result<Self> {
        let hpath = dir.join("header.json");
        let text = fs::read_to_string(&hpath).map_err(|e| Error::io(&hpath, e))?;
        let header: Value = serde_json::from_str(&text).map_err(|e| Error::format(&hpath, e.line(), e.to_string()))?;
        let field = |k: &str| header.get(k).ok_or_else(|| Error::format(&hpath, 1, format!("missing field `{k}`")));
        let kind: ModelKind = serde_json::from_value(field("kind")?.clone()).map_err(|e| Error::format(&hpath, 1, e.to_string()))?;
        let dim = field("dim")?.as_u64().ok_or_else(|| Error::format(&hpath, 1, "`dim` is not an integer"))? as usize;
        let mut config: TrainConfig = match header.get("config") {
            Some(c) => serde_json::from_value(c.clone()).map_err(|e| Error::format(&hpath, 1, format!("config: {e}")))?,
            None => TrainConfig::new(kind),
        };
        config.kind = kind;
        config.dim = dim;
        let scope = match header.get("training_scope") {
            Some(s) => serde_json::from_value(s.clone()).map_err(|e| Error::format(&hpath, 1, e.to_string()))?,
            None => TrainingScope::All,
        };
        let loss_trace: Vec<f64> = match header.get("loss_trace") {
            Some(s) => serde_json::from_value(s.clone()).map_err(|e| Error::format(&hpath, 1, e.to_string()))?,
            None => Vec::new(),
        };
        let w = kind.width(dim);

        let epath = dir.join("entities.vec");
        let store = read_vector_store::<f64>(&epath)?;
        if store.header.dim != w {
            return Err(Error::format(&epath, 1, format!("width {} does not match a {kind} model of dim {dim}", store.header.dim)));
        }
        let entities = EntityTable::from_nodes(nodes);
        let mut entity_vecs = vec![f64::NAN; entities.len() * w];
        let mut seen = vec![false; entities.len()];
        for (key, v) in &store.rows {
            let i = entities
                .get(key)
                .ok_or_else(|| Error::Data(format!("{}: entity `{key}` is not in the graph manifest", epath.display())))?;
            entity_vecs[i * w..(i + 1) * w].copy_from_slice(v);
            seen[i] = true;
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::Data(format!(
                "{}: graph node `{}` has no entity vector",
                epath.display(),
                entities.id(i)
            )));
        }

        let mut relations = Vec::new();
        let mut relation_vecs = Vec::new();
        if kind != ModelKind::Node2vec {
            let rpath = dir.join("relations.vec");
            let store = read_vector_store::<f64>(&rpath)?;
            if store.header.dim != w {
                return Err(Error::format(&rpath, 1, format!("width {} does not match entity width {w}", store.header.dim)));
            }
            let mut rows: Vec<(RelationType, Vec<f64>)> = store
                .rows
                .into_iter()
                .map(|(k, v)| Ok((k.parse::<RelationType>()?, v)))
                .collect::<Result<_>>()?;
            rows.sort_by_key(|r| r.0);
            for (r, v) in rows {
                relations.push(r);
                relation_vecs.extend(v);
            }
        }
        let projections = if kind == ModelKind::Transr {
            let ppath = dir.join("projections.bin");
            let bytes = fs::read(&ppath).map_err(|e| Error::io(&ppath, e))?;
            if bytes.len() < 8 || &bytes[..8] != PROJECTION_MAGIC {
                return Err(Error::Data(format!("{}: bad magic", ppath.display())));
            }
            let expected = relations.len() * dim * dim * 4;
            if bytes.len() - 8 != expected {
                return Err(Error::Data(format!(
                    "{}: expected {expected} bytes of projections, found {}",
                    ppath.display(),
                    bytes.len() - 8
                )));
            }
            bytes[8..]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect()
        } else {
            Vec::new()
        };
        let mut model = KgeModel::from_parts(config, entities, entity_vecs, relations, relation_vecs, projections)?;
        model.scope = scope;
        model.loss_trace = loss_trace;
        Ok(model)
    }
}

const PROJECTION_MAGIC: &[u8; 8] = b"TRPROJ01";
