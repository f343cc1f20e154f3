//! Filtered-ranking link-prediction evaluation.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{write_lines, EntityTable, KnowledgeGraph, NodeId, RelationType, Triple};
use crate::kge::{IndexedTriple, KgeModel, TrainingScope, TripleSplit};

pub const DEFAULT_KS: [usize; 3] = [1, 3, 10];
pub const TIE_RULE: &str = "pessimistic";
pub const POOLING: &str = "head_and_tail_pooled";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Model trained on the train part only.
    SetAside,
    /// Model trained on every triple, test part included.
    TestOnTrain,
}

impl EvalMode {
    pub fn name(self) -> &'static str {
        match self {
            EvalMode::SetAside => "set_aside",
            EvalMode::TestOnTrain => "test_on_train",
        }
    }

    fn required_scope(self) -> TrainingScope {
        match self {
            EvalMode::SetAside => TrainingScope::Train,
            EvalMode::TestOnTrain => TrainingScope::All,
        }
    }
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "set_aside" => Ok(EvalMode::SetAside),
            "test_on_train" => Ok(EvalMode::TestOnTrain),
            _ => Err(Error::InvalidArgument(format!("unknown evaluation mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRecord {
    pub triple: Triple,
    pub head_rank: usize,
    pub tail_rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mrr: f64,
    /// Keyed by k.
    pub hits: BTreeMap<usize, f64>,
    pub n_ranks: usize,
}

/// MRR and Hits@k over `ranks`.
pub fn compute_metrics(ranks: &[usize], ks: &[usize]) -> Result<Metrics> {
    if ranks.is_empty() {
        return Err(Error::InvalidArgument("no ranks to aggregate".into()));
    }
    if ranks.contains(&0) || ks.contains(&0) {
        return Err(Error::InvalidArgument("ranks and k values start at 1".into()));
    }
    let n = ranks.len() as f64;
    let mrr = ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n;
    let hits = ks
        .iter()
        .map(|&k| (k, ranks.iter().filter(|&&r| r <= k).count() as f64 / n))
        .collect();
    Ok(Metrics {
        mrr,
        hits,
        n_ranks: ranks.len(),
    })
}

/// Sizes of the type-restricted candidate domains of one relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSizes {
    pub head: usize,
    pub tail: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub model: String,
    pub mrr: f64,
    /// Keyed by k as a string.
    pub hits: BTreeMap<String, f64>,
    pub n_ranks: usize,
    pub per_relation_pool_sizes: BTreeMap<String, PoolSizes>,
    pub tie_rule: String,
    pub pooling: String,
    #[serde(skip)]
    pub records: Vec<RankRecord>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One line per test triple: head, relation, tail, head_rank, tail_rank.
    pub fn write_ranks_csv(&self, path: &Path) -> Result<()> {
        let header = "head,relation,tail,head_rank,tail_rank".to_string();
        let rows = self.records.iter().map(|r| {
            format!(
                "{},{},{},{},{}",
                csv_field(r.triple.head.as_str()),
                r.triple.relation,
                csv_field(r.triple.tail.as_str()),
                r.head_rank,
                r.tail_rank
            )
        });
        write_lines(path, std::iter::once(header).chain(rows))
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Candidate domains and the filter set for ranking the test part of a
/// split. Pools come from the graph's nodes of the required type.
pub struct RankingContext<'m> {
    model: &'m KgeModel,
    entities: EntityTable,
    /// Graph entity index to model entity index.
    to_model: Vec<usize>,
    known: HashSet<(usize, RelationType, usize)>,
}

impl<'m> RankingContext<'m> {
    pub fn new(model: &'m KgeModel, graph: &KnowledgeGraph, split: &TripleSplit) -> Result<Self> {
        let entities = EntityTable::from_graph(graph);
        let to_model = entities.ids().iter().map(|id| model.entity_index(id.as_str())).collect::<Result<_>>()?;
        let mut known = HashSet::new();
        for t in split.train.iter().chain(&split.valid).chain(&split.test) {
            known.insert((entities.lookup(t.head.as_str())?, t.relation, entities.lookup(t.tail.as_str())?));
        }
        Ok(RankingContext {
            model,
            entities,
            to_model,
            known,
        })
    }

    fn score(&self, h: usize, slot: usize, t: usize) -> f64 {
        self.model.score_indexed(IndexedTriple {
            head: self.to_model[h],
            relation: slot,
            tail: self.to_model[t],
        })
    }

    fn rank(&self, triple: &Triple, corrupt_tail: bool) -> Result<usize> {
        let h = self.entities.lookup(triple.head.as_str())?;
        let t = self.entities.lookup(triple.tail.as_str())?;
        let r = triple.relation;
        let slot = self.model.index_triple(triple)?.relation;
        let (head_type, tail_type) = r.signature();
        let truth = self.score(h, slot, t);
        let mut rank = 1;
        if corrupt_tail {
            for &c in self.entities.of_type(tail_type) {
                if c != t && !self.known.contains(&(h, r, c)) && self.score(h, slot, c) >= truth {
                    rank += 1;
                }
            }
        } else {
            for &c in self.entities.of_type(head_type) {
                if c != h && !self.known.contains(&(c, r, t)) && self.score(c, slot, t) >= truth {
                    rank += 1;
                }
            }
        }
        Ok(rank)
    }

    /// Filtered rank of the true tail: one plus the candidates scoring at
    /// least as high (ties count against the truth).
    pub fn rank_tail(&self, triple: &Triple) -> Result<usize> {
        self.rank(triple, true)
    }

    pub fn rank_head(&self, triple: &Triple) -> Result<usize> {
        self.rank(triple, false)
    }

    /// Filtered tail candidates of `triple`, the true tail included.
    pub fn tail_pool(&self, triple: &Triple) -> Result<Vec<NodeId>> {
        let h = self.entities.lookup(triple.head.as_str())?;
        let t = self.entities.lookup(triple.tail.as_str())?;
        Ok(self
            .entities
            .of_type(triple.relation.signature().1)
            .iter()
            .filter(|&&c| c == t || !self.known.contains(&(h, triple.relation, c)))
            .map(|&c| self.entities.id(c).clone())
            .collect())
    }

    pub fn head_pool(&self, triple: &Triple) -> Result<Vec<NodeId>> {
        let h = self.entities.lookup(triple.head.as_str())?;
        let t = self.entities.lookup(triple.tail.as_str())?;
        Ok(self
            .entities
            .of_type(triple.relation.signature().0)
            .iter()
            .filter(|&&c| c == h || !self.known.contains(&(c, triple.relation, t)))
            .map(|&c| self.entities.id(c).clone())
            .collect())
    }

    fn pool_sizes(&self, r: RelationType) -> PoolSizes {
        let (h, t) = r.signature();
        PoolSizes {
            head: self.entities.of_type(h).len(),
            tail: self.entities.of_type(t).len(),
        }
    }
}

pub fn rank_tail(model: &KgeModel, triple: &Triple, graph: &KnowledgeGraph, split: &TripleSplit) -> Result<usize> {
    RankingContext::new(model, graph, split)?.rank_tail(triple)
}

pub fn rank_head(model: &KgeModel, triple: &Triple, graph: &KnowledgeGraph, split: &TripleSplit) -> Result<usize> {
    RankingContext::new(model, graph, split)?.rank_head(triple)
}

/// Ranks both ends of every test triple and pools the 2n ranks.
pub fn evaluate_split(model: &KgeModel, graph: &KnowledgeGraph, split: &TripleSplit, mode: EvalMode) -> Result<EvalReport> {
    evaluate_split_with(model, graph, split, mode, &DEFAULT_KS)
}

pub fn evaluate_split_with(model: &KgeModel, graph: &KnowledgeGraph, split: &TripleSplit, mode: EvalMode, ks: &[usize]) -> Result<EvalReport> {
    if model.training_scope() != mode.required_scope() {
        return Err(Error::InvalidArgument(format!(
            "{mode} evaluation needs a model trained on {}, this one was trained on {}",
            scope_name(mode.required_scope()),
            scope_name(model.training_scope())
        )));
    }
    if split.test.is_empty() {
        return Err(Error::Data("the split has no test triples".into()));
    }
    let ctx = RankingContext::new(model, graph, split)?;
    let mut test = split.test.clone();
    test.sort();
    let records: Vec<RankRecord> = test
        .par_iter()
        .map(|t| {
            Ok(RankRecord {
                triple: t.clone(),
                head_rank: ctx.rank_head(t)?,
                tail_rank: ctx.rank_tail(t)?,
            })
        })
        .collect::<Result<_>>()?;
    let ranks: Vec<usize> = records.iter().flat_map(|r| [r.head_rank, r.tail_rank]).collect();
    let m = compute_metrics(&ranks, ks)?;
    let per_relation_pool_sizes = test
        .iter()
        .map(|t| (t.relation.tag().to_string(), ctx.pool_sizes(t.relation)))
        .collect();
    Ok(EvalReport {
        mode,
        model: model.kind().name().to_string(),
        mrr: m.mrr,
        hits: m.hits.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        n_ranks: m.n_ranks,
        per_relation_pool_sizes,
        tie_rule: TIE_RULE.into(),
        pooling: POOLING.into(),
        records,
    })
}

fn scope_name(s: TrainingScope) -> &'static str {
    match s {
        TrainingScope::Train => "the train part",
        TrainingScope::All => "all triples",
    }
}
