//! SGD training of the triple-scoring models.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kg::{EntityTable, KnowledgeGraph, RelationType, Triple};
use crate::kge::negatives::Corruptor;
use crate::kge::walks::{train_node2vec, walks_over};
use crate::kge::{IndexedTriple, KgeModel, ModelKind, TrainConfig, TrainingScope, TripleSplit};

/// Trains a model on `split.train` (plus `split.valid` for node2vec), or on
/// every triple of `graph` when no split is given.
pub fn train_kge(graph: &KnowledgeGraph, split: Option<&TripleSplit>, config: &TrainConfig) -> Result<KgeModel> {
    train_kge_with(graph, split, config, None)
}

/// As [`train_kge`], starting from the entity vectors of `warm` where ids match.
pub fn train_kge_with(graph: &KnowledgeGraph, split: Option<&TripleSplit>, config: &TrainConfig, warm: Option<&KgeModel>) -> Result<KgeModel> {
    config.validate()?;
    let (positives, scope): (Vec<&Triple>, TrainingScope) = match split {
        Some(s) if config.kind == ModelKind::Node2vec => (s.train.iter().chain(&s.valid).collect(), TrainingScope::Train),
        Some(s) => (s.train.iter().collect(), TrainingScope::Train),
        None => (graph.triples().collect(), TrainingScope::All),
    };
    if positives.is_empty() {
        return Err(Error::Training("no training triples".into()));
    }
    let entities = EntityTable::from_graph(graph);
    for t in &positives {
        entities.lookup(t.head.as_str())?;
        entities.lookup(t.tail.as_str())?;
    }

    if config.kind == ModelKind::Node2vec {
        let walks = walks_over(entities, positives.iter().copied(), config.walk_params())?;
        let mut model = train_node2vec(&walks, config)?;
        model.set_training_scope(scope);
        return Ok(model);
    }

    let relations: Vec<RelationType> = graph
        .triples()
        .map(|t| t.relation)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = KgeModel::initialize(config, entities.clone(), relations, scope, &mut rng);
    if let Some(w) = warm {
        model.warm_start_from(w)?;
    }
    let mut order: Vec<IndexedTriple> = positives.iter().map(|t| model.index_triple(t)).collect::<Result<_>>()?;
    let corruptor = Corruptor::new(entities, positives.iter().copied());
    let n_neg = config.effective_negatives();
    let lr = config.effective_learning_rate();
    let mut trace = Vec::with_capacity(config.epochs);
    let mut pairs_buf = Vec::with_capacity(n_neg);
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut terms = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let mut batch = Vec::with_capacity(chunk.len());
            for &p in chunk {
                pairs_buf.clear();
                let r = model.relations()[p.relation];
                corruptor.sample_into(p.head, r, p.tail, n_neg, &mut rng, &mut pairs_buf);
                let negs: Vec<IndexedTriple> = pairs_buf
                    .iter()
                    .map(|&(head, tail)| IndexedTriple {
                        head,
                        relation: p.relation,
                        tail,
                    })
                    .collect();
                terms += match config.kind {
                    ModelKind::Complex => 1 + negs.len(),
                    _ => negs.len(),
                };
                batch.push((p, negs));
            }
            let (loss, grads) = model.loss_and_gradients_indexed(&batch, config.margin)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            model.apply_gradients(&grads, lr);
            total += loss;
        }
        if model.check_finite().is_err() {
            return Err(Error::Diverged { epoch });
        }
        trace.push(if terms > 0 { total / terms as f64 } else { 0.0 });
    }
    model.set_loss_trace(trace);
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{Node, NodeId, NodeType};
    use std::collections::BTreeMap;

    fn node(g: &mut KnowledgeGraph, id: &str, t: NodeType) {
        g.add_node(Node {
            id: NodeId::new(id),
            node_type: t,
            attribute_text: (t != NodeType::Ph).then(|| id.to_string()),
        })
        .unwrap();
    }

    fn toy() -> KnowledgeGraph {
        let mut g = KnowledgeGraph::new();
        for i in 1..=3 {
            node(&mut g, &format!("NCT0000000{i}"), NodeType::Nct);
        }
        for p in ["ph:phase_1", "ph:phase_2", "ph:phase_3"] {
            node(&mut g, p, NodeType::Ph);
        }
        g.upsert_triple(Triple::new("NCT00000001", RelationType::NctPh, "ph:phase_1")).unwrap();
        g.upsert_triple(Triple::new("NCT00000002", RelationType::NctPh, "ph:phase_2")).unwrap();
        g.upsert_triple(Triple::new("NCT00000003", RelationType::NctPh, "ph:phase_3")).unwrap();
        g
    }

    fn cfg(kind: ModelKind, epochs: usize) -> TrainConfig {
        TrainConfig {
            dim: 8,
            epochs,
            batch_size: 4,
            ..TrainConfig::new(kind)
        }
    }

    #[test]
    fn loss_decreases_on_toy_graph() {
        for kind in [ModelKind::Transe, ModelKind::Transr, ModelKind::Complex] {
            let m = train_kge(&toy(), None, &cfg(kind, 200)).unwrap();
            let trace = m.loss_trace();
            assert_eq!(trace.len(), 200);
            assert!(trace[199] < trace[0], "{kind}: {} !< {}", trace[199], trace[0]);
            assert_eq!(m.training_scope(), TrainingScope::All);
        }
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = train_kge(&toy(), None, &cfg(ModelKind::Transe, 20)).unwrap();
        let b = train_kge(&toy(), None, &cfg(ModelKind::Transe, 20)).unwrap();
        assert_eq!(a, b);
        let c = train_kge(&toy(), None, &TrainConfig { seed: 2, ..cfg(ModelKind::Transe, 20) }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn every_node_gets_a_vector_and_norms_stay_unit() {
        let mut g = toy();
        node(&mut g, "ph:isolated", NodeType::Ph);
        let m = train_kge(&g, None, &cfg(ModelKind::Transe, 5)).unwrap();
        assert_eq!(m.entities().len(), g.node_count());
        for i in 0..m.entities().len() {
            assert!((crate::kge::l2(m.entity_row(i)) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn star_graph_true_triples_outscore_corruptions() {
        // One relation, a hub trial per phase with several spokes each.
        let mut g = KnowledgeGraph::new();
        let phases = ["ph:a", "ph:b", "ph:c", "ph:d"];
        for p in phases {
            node(&mut g, p, NodeType::Ph);
        }
        for i in 0..24 {
            let id = format!("NCT{:08}", i + 1);
            node(&mut g, &id, NodeType::Nct);
            g.upsert_triple(Triple::new(id.as_str(), RelationType::NctPh, phases[i % 4])).unwrap();
        }
        let m = train_kge(&g, None, &TrainConfig { epochs: 300, learning_rate: Some(0.05), ..cfg(ModelKind::Transe, 300) }).unwrap();
        let mut wins = 0;
        let mut total = 0;
        for t in g.triples() {
            let pos = m.score(t.head.as_str(), t.relation, t.tail.as_str()).unwrap();
            for p in phases {
                if p != t.tail.as_str() {
                    total += 1;
                    wins += (pos > m.score(t.head.as_str(), t.relation, p).unwrap()) as usize;
                }
            }
        }
        assert!(wins as f64 >= 0.95 * total as f64, "{wins}/{total}");
    }

    #[test]
    fn split_scope_and_node2vec_merge() {
        let mut g = KnowledgeGraph::new();
        let phases = ["ph:a", "ph:b", "ph:c"];
        for p in phases {
            node(&mut g, p, NodeType::Ph);
        }
        for i in 0..30 {
            let id = format!("NCT{:08}", i + 1);
            node(&mut g, &id, NodeType::Nct);
            g.upsert_triple(Triple::new(id.as_str(), RelationType::NctPh, phases[i % 3])).unwrap();
        }
        let split = crate::kge::split_triples(&g, Default::default(), &BTreeMap::new(), 1).unwrap();
        let m = train_kge(&g, Some(&split), &cfg(ModelKind::Transe, 3)).unwrap();
        assert_eq!(m.training_scope(), TrainingScope::Train);
        let n2v = TrainConfig {
            walks_per_node: 2,
            walk_length: 5,
            ..cfg(ModelKind::Node2vec, 2)
        };
        let m = train_kge(&g, Some(&split), &n2v).unwrap();
        assert_eq!(m.training_scope(), TrainingScope::Train);
        assert!(m.relations().is_empty());
        assert_eq!(m.entities().len(), g.node_count());
    }

    #[test]
    fn warm_start_copies_vectors() {
        let a = train_kge(&toy(), None, &cfg(ModelKind::Transe, 1)).unwrap();
        let mut fresh = KgeModel::initialize(
            &TrainConfig { seed: 99, ..cfg(ModelKind::Transe, 1) },
            a.entities().clone(),
            vec![RelationType::NctPh],
            TrainingScope::All,
            &mut ChaCha8Rng::seed_from_u64(99),
        );
        assert_eq!(fresh.warm_start_from(&a).unwrap(), a.entities().len());
        assert_eq!(fresh.entity_vector("ph:phase_1"), a.entity_vector("ph:phase_1"));
        let other = train_kge(&toy(), None, &cfg(ModelKind::Complex, 1)).unwrap();
        assert!(fresh.warm_start_from(&other).is_err());
    }

    #[test]
    fn divergence_names_the_epoch() {
        let c = TrainConfig {
            learning_rate: Some(1e300),
            ..cfg(ModelKind::Complex, 5)
        };
        match train_kge(&toy(), None, &c) {
            Err(Error::Diverged { epoch }) => assert!(epoch >= 1),
            other => panic!("{other:?}"),
        }
    }
}
