//! Second-order biased random walks and skip-gram node embeddings.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{EntityTable, KnowledgeGraph, NodeId, Triple};
use crate::kge::{KgeModel, ModelKind, TrainConfig};
use crate::sgns::{self, NegativeSampler, Scratch};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkParams {
    pub walks_per_node: usize,
    pub walk_length: usize,
    /// Return parameter.
    pub p: f64,
    /// In-out parameter.
    pub q: f64,
    pub seed: u64,
}

impl Default for WalkParams {
    fn default() -> Self {
        WalkParams {
            walks_per_node: 50,
            walk_length: 80,
            p: 1.0,
            q: 1.0,
            seed: 1,
        }
    }
}

impl WalkParams {
    pub fn validate(&self) -> Result<()> {
        if self.walks_per_node < 1 || self.walk_length < 1 {
            return Err(Error::InvalidArgument("walks_per_node and walk_length must be at least 1".into()));
        }
        if !(self.p.is_finite() && self.p > 0.0 && self.q.is_finite() && self.q > 0.0) {
            return Err(Error::InvalidArgument("p and q must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WalkCorpus {
    entities: EntityTable,
    walks: Vec<Vec<u32>>,
    params: WalkParams,
}

impl WalkCorpus {
    pub fn entities(&self) -> &EntityTable {
        &self.entities
    }

    pub fn params(&self) -> &WalkParams {
        &self.params
    }

    /// Walks as entity indices; walks from one source are contiguous.
    pub fn walks(&self) -> &[Vec<u32>] {
        &self.walks
    }

    pub fn len(&self) -> usize {
        self.walks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.walks.is_empty()
    }

    pub fn walk_ids(&self, i: usize) -> Vec<&NodeId> {
        self.walks[i].iter().map(|&n| self.entities.id(n as usize)).collect()
    }
}

fn adjacency<'a>(entities: &EntityTable, triples: impl IntoIterator<Item = &'a Triple>) -> Result<Vec<Vec<u32>>> {
    let mut adj: Vec<Vec<u32>> = vec![Vec::new(); entities.len()];
    for t in triples {
        let h = entities.lookup(t.head.as_str())?;
        let tl = entities.lookup(t.tail.as_str())?;
        if h != tl {
            adj[h].push(tl as u32);
            adj[tl].push(h as u32);
        }
    }
    for n in &mut adj {
        n.sort_unstable();
        n.dedup();
    }
    Ok(adj)
}

fn walk_from(source: usize, adj: &[Vec<u32>], params: &WalkParams, rng: &mut ChaCha8Rng) -> Vec<u32> {
    let mut walk = Vec::with_capacity(params.walk_length);
    walk.push(source as u32);
    let max_w = (1.0 / params.p).max(1.0).max(1.0 / params.q);
    while walk.len() < params.walk_length {
        let cur = *walk.last().expect("nonempty") as usize;
        let nbrs = &adj[cur];
        if nbrs.is_empty() {
            break;
        }
        let next = if walk.len() == 1 {
            nbrs[rng.gen_range(0..nbrs.len())]
        } else {
            let prev = walk[walk.len() - 2];
            // Rejection sampling against the unnormalized node2vec weights.
            loop {
                let x = nbrs[rng.gen_range(0..nbrs.len())];
                let w = if x == prev {
                    1.0 / params.p
                } else if adj[prev as usize].binary_search(&x).is_ok() {
                    1.0
                } else {
                    1.0 / params.q
                };
                if rng.gen::<f64>() * max_w < w {
                    break x;
                }
            }
        };
        walk.push(next);
    }
    walk
}

pub(crate) fn walks_over<'a>(entities: EntityTable, triples: impl IntoIterator<Item = &'a Triple>, params: WalkParams) -> Result<WalkCorpus> {
    params.validate()?;
    if entities.is_empty() {
        return Err(Error::InvalidArgument("cannot walk an empty graph".into()));
    }
    let adj = adjacency(&entities, triples)?;
    // One stream per source node, so the corpus does not depend on threading.
    let walks: Vec<Vec<u32>> = (0..entities.len())
        .into_par_iter()
        .flat_map_iter(|source| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(source as u64);
            let adj = &adj;
            (0..params.walks_per_node).map(move |_| walk_from(source, adj, &params, &mut rng)).collect::<Vec<_>>()
        })
        .collect();
    Ok(WalkCorpus { entities, walks, params })
}

/// `walks_per_node` walks from every node, treating edges as undirected.
pub fn generate_walks(graph: &KnowledgeGraph, params: WalkParams) -> Result<WalkCorpus> {
    walks_over(EntityTable::from_graph(graph), graph.triples(), params)
}

/// Skip-gram with negative sampling over the walks. Uses `config.dim`,
/// `window`, `epochs`, the learning rate and the negative count.
pub fn train_node2vec(walks: &WalkCorpus, config: &TrainConfig) -> Result<KgeModel> {
    let config = TrainConfig {
        kind: ModelKind::Node2vec,
        ..config.clone()
    };
    config.validate()?;
    let n = walks.entities.len();
    let usable: Vec<&Vec<u32>> = walks.walks.iter().filter(|w| w.len() >= 2).collect();
    if usable.is_empty() {
        return Err(Error::Training("empty walk corpus: no walk visits two nodes".into()));
    }
    let mut counts = vec![0u64; n];
    for w in &usable {
        for &x in w.iter() {
            counts[x as usize] += 1;
        }
    }
    let dim = config.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let bound = 0.5 / dim as f32;
    let mut input: Vec<f32> = (0..n * dim).map(|_| rng.gen_range(-bound..bound)).collect();
    let mut output = vec![0.0f32; n * dim];
    // Nodes that never appear in a usable walk cannot be drawn as negatives.
    let sampler = NegativeSampler::new(&counts);
    let lr0 = config.effective_learning_rate() as f32;
    let n_neg = config.effective_negatives();
    let total_tokens: usize = usable.iter().map(|w| w.len()).sum();
    let total_steps = (total_tokens * config.epochs).max(1) as f32;
    let mut order: Vec<usize> = (0..usable.len()).collect();
    let mut scratch = Scratch::new(dim);
    let mut negatives = Vec::with_capacity(n_neg);
    let mut processed = 0usize;
    let mut trace = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss = 0.0f64;
        let mut predictions = 0usize;
        for &wi in &order {
            let walk = usable[wi];
            for pos in 0..walk.len() {
                let lr = lr0 * (1.0 - processed as f32 / total_steps).max(1e-4);
                processed += 1;
                let reach = rng.gen_range(1..=config.window);
                let lo = pos.saturating_sub(reach);
                let hi = (pos + reach).min(walk.len() - 1);
                let center = walk[pos] as usize;
                for ctx in lo..=hi {
                    if ctx == pos {
                        continue;
                    }
                    let target = walk[ctx] as usize;
                    negatives.clear();
                    for _ in 0..n_neg * 4 {
                        if negatives.len() == n_neg {
                            break;
                        }
                        let s = sampler.sample(&mut rng);
                        if s != target {
                            negatives.push(s);
                        }
                    }
                    loss += sgns::update(&mut input, &mut output, dim, &[center], target, &negatives, lr, &mut scratch);
                    predictions += 1;
                }
            }
        }
        let mean = loss / predictions.max(1) as f64;
        if !mean.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        trace.push(mean);
    }
    let vecs: Vec<f64> = input.iter().map(|&x| x as f64).collect();
    let mut model = KgeModel::from_parts(config, walks.entities.clone(), vecs, Vec::new(), Vec::new(), Vec::new())?;
    model.set_loss_trace(trace);
    Ok(model)
}
