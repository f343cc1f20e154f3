//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::Request;
use http_body_util::BodyExt;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tower::ServiceExt;

use trialrec::eval::{compute_metrics, evaluate_split, EvalMode, RankingContext};
use trialrec::index::VectorIndex;
use trialrec::inductive::{
    combine_neighbors, estimate_embedding, evaluate_blind_set, recommender_metrics, NewEntity, Recommender, TextIndex, TextIndexScope, WeightMode,
};
use trialrec::ingest::{build_graph, collect_entity_texts, generate_with, trial_strata, training_texts, NormalizationTable, SynthConfig};
use trialrec::kg::{content_hash, EntityTable, KnowledgeGraph, Node, NodeId, NodeType, RelationType, Triple, NODES_FILE};
use trialrec::kge::{split_triples, train_kge, KgeModel, ModelKind, SplitRatios, TrainConfig, TripleSplit};
use trialrec::snapshot::{load_snapshot, SnapshotPaths};
use trialrec::text::{train_text_space, TextSpaceParams};
use trialrec_service::{router, AppState, RecommendResponse};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn metric_oracles() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ks = [1, 3, 10];
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.gen_range(1..60);
        let ranks: Vec<usize> = (0..n).map(|_| rng.gen_range(1..40)).collect();
        let m = compute_metrics(&ranks, &ks).map_err(err)?;
        // Oracle: sort, then accumulate reciprocal ranks and a rank histogram.
        let mut sorted = ranks.clone();
        sorted.sort_unstable();
        let mut recip = 0.0;
        let mut below = BTreeMap::new();
        for (i, &r) in sorted.iter().enumerate() {
            recip += 1.0 / r as f64;
            below.insert(r, i + 1);
        }
        let mrr = recip / n as f64;
        worst = worst.max((m.mrr - mrr).abs());
        for k in ks {
            let hits = below.range(..=k).next_back().map_or(0, |(_, c)| *c) as f64 / n as f64;
            worst = worst.max((m.hits[&k] - hits).abs());
        }
        ensure(m.n_ranks == n, || "n_ranks differs".into())?;

        let positions: Vec<usize> = (0..n).map(|_| rng.gen_range(1..6)).collect();
        let sims: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let rm = recommender_metrics(&positions, &sims).map_err(err)?;
        let (mut p, mut rr, mut s) = (0.0, 0.0, 0.0);
        for i in 0..n {
            p += positions[i] as f64;
            rr += 1.0 / positions[i] as f64;
            s += sims[i];
        }
        let nf = n as f64;
        worst = worst.max((rm.mean_rank - p / nf).abs()).max((rm.mrr - rr / nf).abs()).max((rm.avg_best_similarity - s / nf).abs());
    }
    ensure(worst <= 1e-12, || format!("max deviation {worst:e}"))?;
    Ok(format!("2000 lists, max deviation {worst:e}"))
}

fn toy_node(t: NodeType, i: usize) -> Node {
    let (id, text) = match t {
        NodeType::Nct => (format!("NCT{:08}", i + 1), Some(format!("trial {i}"))),
        _ => {
            let text = format!("{} {i}", t.tag());
            (content_hash(&text), Some(text))
        }
    };
    Node {
        id: NodeId::new(id),
        node_type: t,
        attribute_text: text,
    }
}

/// A random graph over a few node types with at most `max_triples` triples.
fn toy_graph(rng: &mut ChaCha8Rng, max_triples: usize) -> KnowledgeGraph {
    let mut g = KnowledgeGraph::new();
    let mut by_type: BTreeMap<NodeType, Vec<NodeId>> = BTreeMap::new();
    for t in [NodeType::Nct, NodeType::Pep, NodeType::Int, NodeType::Moa] {
        for i in 0..rng.gen_range(2..7) {
            let n = toy_node(t, i);
            by_type.entry(t).or_default().push(n.id.clone());
            g.add_node(n).unwrap();
        }
    }
    let relations = [RelationType::NctPep, RelationType::NctInt, RelationType::IntMoa];
    let target = rng.gen_range(6..=max_triples);
    for _ in 0..target * 3 {
        if g.triple_count() >= target {
            break;
        }
        let r = *relations.choose(rng).unwrap();
        let (ht, tt) = r.signature();
        let h = by_type[&ht].choose(rng).unwrap().clone();
        let t = by_type[&tt].choose(rng).unwrap().clone();
        g.upsert_triple(Triple::new(h, r, t)).unwrap();
    }
    g
}

/// Parameters drawn from a small integer grid so that score ties happen.
fn grid_model(kind: ModelKind, dim: usize, entities: EntityTable, relations: Vec<RelationType>, rng: &mut ChaCha8Rng) -> KgeModel {
    let w = kind.width(dim);
    let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-2i32..=2) as f64).collect() };
    let ev = draw(entities.len() * w);
    let rv = draw(relations.len() * w);
    let pv = if kind == ModelKind::Transr { draw(relations.len() * dim * dim) } else { Vec::new() };
    let config = TrainConfig {
        dim,
        ..TrainConfig::new(kind)
    };
    KgeModel::from_parts(config, entities, ev, relations, rv, pv).unwrap()
}

fn ranking_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let kinds = [ModelKind::Transe, ModelKind::Transr, ModelKind::Complex];
    let mut checked = 0;
    for g_i in 0..100 {
        let g = toy_graph(&mut rng, 50);
        let mut triples: Vec<Triple> = g.triples().cloned().collect();
        triples.shuffle(&mut rng);
        let n_test = (triples.len() / 4).max(1);
        let test = triples.split_off(triples.len() - n_test);
        let valid = triples.split_off(triples.len() - triples.len() / 10);
        let split = TripleSplit {
            train: triples,
            valid,
            test,
            seed: 0,
            ratios: SplitRatios::default(),
            strata: BTreeMap::new(),
            attempt: 0,
            unseen_entities: 0,
        };
        let relations: Vec<RelationType> = g.triples().map(|t| t.relation).collect::<BTreeSet<_>>().into_iter().collect();
        let model = grid_model(kinds[g_i % 3], 3, EntityTable::from_graph(&g), relations, &mut rng);
        let known: HashSet<&Triple> = split.train.iter().chain(&split.valid).chain(&split.test).collect();
        let ctx = RankingContext::new(&model, &g, &split).map_err(err)?;
        for t in &split.test {
            for corrupt_tail in [true, false] {
                let (ht, tt) = t.relation.signature();
                let domain = if corrupt_tail { tt } else { ht };
                let candidate = |c: &NodeId| {
                    if corrupt_tail {
                        Triple::new(t.head.clone(), t.relation, c.clone())
                    } else {
                        Triple::new(c.clone(), t.relation, t.tail.clone())
                    }
                };
                // Oracle: every node of the domain type, known positives other
                // than the truth removed, sorted with the truth last among ties.
                let truth_id = if corrupt_tail { &t.tail } else { &t.head };
                let mut pool: Vec<(f64, bool, NodeId)> = g
                    .nodes_of_type(domain)
                    .filter(|n| &n.id == truth_id || !known.contains(&candidate(&n.id)))
                    .map(|n| {
                        let c = candidate(&n.id);
                        (model.score(c.head.as_str(), c.relation, c.tail.as_str()).unwrap(), &n.id == truth_id, n.id.clone())
                    })
                    .collect();
                pool.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
                let want = pool.iter().position(|p| p.1).ok_or("truth missing from oracle pool")? + 1;
                let (got, got_pool) = if corrupt_tail {
                    (ctx.rank_tail(t).map_err(err)?, ctx.tail_pool(t).map_err(err)?)
                } else {
                    (ctx.rank_head(t).map_err(err)?, ctx.head_pool(t).map_err(err)?)
                };
                ensure(got == want, || format!("graph {g_i}: {t:?} tail={corrupt_tail} rank {got}, oracle {want}"))?;
                ensure(got_pool.contains(truth_id), || format!("graph {g_i}: truth absent from pool"))?;
                ensure(got_pool.iter().all(|c| c == truth_id || !known.contains(&candidate(c))), || {
                    format!("graph {g_i}: known positive in pool")
                })?;
                let oracle_ids: BTreeSet<&NodeId> = pool.iter().map(|p| &p.2).collect();
                ensure(got_pool.iter().collect::<BTreeSet<_>>() == oracle_ids, || format!("graph {g_i}: pool differs"))?;
                checked += 1;
            }
        }
    }
    Ok(format!("100 graphs, {checked} ranks"))
}

fn gradient_points(kind: ModelKind, rng: &mut ChaCha8Rng) -> Result<f64, String> {
    let dim = 4;
    let entities = EntityTable::from_nodes((0..3).map(|i| toy_node(NodeType::Nct, i)).chain((0..3).map(|i| toy_node(NodeType::Pep, i))).map(|n| (n.id, n.node_type)));
    let ids: Vec<NodeId> = entities.ids().to_vec();
    let w = kind.width(dim);
    let relations = vec![RelationType::NctPep];
    let draw = |rng: &mut ChaCha8Rng, n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect() };
    let ev = draw(rng, entities.len() * w);
    let rv = draw(rng, w);
    let pv = if kind == ModelKind::Transr { draw(rng, dim * dim) } else { Vec::new() };
    let config = TrainConfig {
        dim,
        ..TrainConfig::new(kind)
    };
    let model = KgeModel::from_parts(config, entities, ev, relations, rv, pv).map_err(err)?;
    let nct = |i: usize| format!("NCT{:08}", i + 1);
    let pep = |i: usize| toy_node(NodeType::Pep, i).id.to_string();
    let batch = vec![
        (Triple::new(nct(0), RelationType::NctPep, pep(0)), vec![Triple::new(nct(0), RelationType::NctPep, pep(1)), Triple::new(nct(1), RelationType::NctPep, pep(0))]),
        (Triple::new(nct(2), RelationType::NctPep, pep(2)), vec![Triple::new(nct(2), RelationType::NctPep, pep(0))]),
    ];
    // A wide margin keeps every hinge active.
    let margin = 20.0;
    let (_, grads) = model.loss_and_gradients(&batch, margin).map_err(err)?;
    let loss = |m: &KgeModel| m.loss_and_gradients(&batch, margin).unwrap().0;
    let h = 1e-6;
    let mut worst = 0.0f64;
    let mut compare = |analytic: f64, numeric: f64| {
        let scale = analytic.abs().max(numeric.abs());
        if scale > 1e-7 {
            worst = worst.max((analytic - numeric).abs() / scale);
        }
    };
    for (i, id) in ids.iter().enumerate() {
        let base = model.entity_vector(id.as_str()).unwrap().to_vec();
        let zero = vec![0.0; w];
        let g = grads.entities.get(&i).unwrap_or(&zero);
        for k in 0..w {
            let (mut plus, mut minus) = (model.clone(), model.clone());
            let mut v = base.clone();
            v[k] += h;
            plus.set_entity_vector(id.as_str(), &v).unwrap();
            v[k] -= 2.0 * h;
            minus.set_entity_vector(id.as_str(), &v).unwrap();
            compare(g[k], (loss(&plus) - loss(&minus)) / (2.0 * h));
        }
    }
    let base = model.relation_vector(RelationType::NctPep).unwrap().to_vec();
    for k in 0..w {
        let (mut plus, mut minus) = (model.clone(), model.clone());
        let mut v = base.clone();
        v[k] += h;
        plus.set_relation_vector(RelationType::NctPep, &v).unwrap();
        v[k] -= 2.0 * h;
        minus.set_relation_vector(RelationType::NctPep, &v).unwrap();
        compare(grads.relations[&0][k], (loss(&plus) - loss(&minus)) / (2.0 * h));
    }
    if kind == ModelKind::Transr {
        let base = model.projection(RelationType::NctPep).unwrap().to_vec();
        for k in 0..dim * dim {
            let (mut plus, mut minus) = (model.clone(), model.clone());
            let mut v = base.clone();
            v[k] += h;
            plus.set_projection(RelationType::NctPep, &v).unwrap();
            v[k] -= 2.0 * h;
            minus.set_projection(RelationType::NctPep, &v).unwrap();
            compare(grads.projections[&0][k], (loss(&plus) - loss(&minus)) / (2.0 * h));
        }
    }
    Ok(worst)
}

fn gradients() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut report = Vec::new();
    for kind in [ModelKind::Transe, ModelKind::Transr, ModelKind::Complex] {
        let mut worst = 0.0f64;
        for _ in 0..20 {
            worst = worst.max(gradient_points(kind, &mut rng)?);
        }
        ensure(worst <= 1e-4, || format!("{kind}: relative error {worst:e}"))?;
        report.push(format!("{kind} {worst:.1e}"));
    }
    Ok(format!("20 points each, max relative error: {}", report.join(", ")))
}

fn split_contract() -> Check {
    let mut g = KnowledgeGraph::new();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for i in 0..40 {
        g.add_node(toy_node(NodeType::Pep, i)).unwrap();
    }
    let mut strata = BTreeMap::new();
    for i in 0..120 {
        let n = toy_node(NodeType::Nct, i);
        strata.insert(n.id.clone(), if i < 50 { "A".to_string() } else { "B".to_string() });
        let id = n.id.clone();
        g.add_node(n).unwrap();
        for _ in 0..rng.gen_range(4..12) {
            let t = toy_node(NodeType::Pep, rng.gen_range(0..40)).id;
            g.upsert_triple(Triple::new(id.clone(), RelationType::NctPep, t)).unwrap();
        }
    }
    let all: BTreeSet<&Triple> = g.triples().collect();
    let n = all.len() as f64;
    let ratios = SplitRatios::default();
    let mut worst_stratum = 0.0f64;
    for seed in 0..100 {
        let s = split_triples(&g, ratios, &strata, seed).map_err(err)?;
        let (tr, va, te): (BTreeSet<&Triple>, BTreeSet<&Triple>, BTreeSet<&Triple>) = (s.train.iter().collect(), s.valid.iter().collect(), s.test.iter().collect());
        ensure(tr.len() == s.train.len() && va.len() == s.valid.len() && te.len() == s.test.len(), || format!("seed {seed}: duplicates"))?;
        ensure(tr.is_disjoint(&va) && tr.is_disjoint(&te) && va.is_disjoint(&te), || format!("seed {seed}: parts overlap"))?;
        let union: BTreeSet<&Triple> = tr.iter().chain(&va).chain(&te).copied().collect();
        ensure(union == all, || format!("seed {seed}: parts do not cover the graph"))?;
        for (got, r, name) in [(tr.len(), ratios.train, "train"), (va.len(), ratios.valid, "valid"), (te.len(), ratios.test, "test")] {
            ensure((got as f64 - r * n).abs() <= 1.0 + 1e-9, || format!("seed {seed}: {name} {got} vs {}", r * n))?;
        }
        for stratum in ["A", "B"] {
            let c = s.strata.get(stratum).ok_or_else(|| format!("stratum {stratum} missing"))?;
            let total = c.total as f64;
            for (got, r) in [(c.train, ratios.train), (c.valid, ratios.valid), (c.test, ratios.test)] {
                worst_stratum = worst_stratum.max((got as f64 / total - r).abs());
            }
        }
    }
    ensure(worst_stratum <= 0.02, || format!("per-stratum deviation {worst_stratum:.4}"))?;
    Ok(format!("100 splits of {} triples, max per-stratum deviation {worst_stratum:.4}", all.len()))
}

fn generalization_gap() -> Check {
    let records = generate_with(&SynthConfig::new(7, 500));
    let table = NormalizationTable::exact(&collect_entity_texts(&records));
    let graph = build_graph(&records, &table).map_err(err)?;
    let split = split_triples(&graph, SplitRatios::default(), &trial_strata(&records), 7).map_err(err)?;
    let config = TrainConfig {
        dim: 32,
        epochs: 300,
        seed: 7,
        ..TrainConfig::new(ModelKind::Transe)
    };
    let on_all = train_kge(&graph, None, &config).map_err(err)?;
    let on_train = train_kge(&graph, Some(&split), &config).map_err(err)?;
    let tot = evaluate_split(&on_all, &graph, &split, EvalMode::TestOnTrain).map_err(err)?;
    let sa = evaluate_split(&on_train, &graph, &split, EvalMode::SetAside).map_err(err)?;
    let ratio = tot.mrr / sa.mrr;
    let msg = format!("test_on_train MRR {:.3}, set_aside MRR {:.3}, ratio {ratio:.2}", tot.mrr, sa.mrr);
    ensure(ratio >= 2.0, || msg.clone())?;
    Ok(msg)
}

const WORDS: [&str; 16] = [
    "asthma", "inhaled", "placebo", "fibrosis", "lung", "cancer", "safety", "efficacy", "trial", "dose", "weekly", "oral", "pilot", "phase", "lupus", "children",
];

fn method_one() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for f in 0..50 {
        let n = rng.gen_range(4..10);
        let mut titles = BTreeSet::new();
        while titles.len() < n {
            let len = rng.gen_range(3..7);
            titles.insert((0..len).map(|_| *WORDS.choose(&mut rng).unwrap()).collect::<Vec<_>>().join(" "));
        }
        let titles: Vec<String> = titles.into_iter().collect();
        let nodes: Vec<Node> = titles
            .iter()
            .enumerate()
            .map(|(i, t)| Node {
                id: NodeId::new(format!("NCT{:08}", i + 1)),
                node_type: NodeType::Nct,
                attribute_text: Some(t.clone()),
            })
            .collect();
        let params = TextSpaceParams {
            dim: 8,
            epochs: 2,
            buckets: 1 << 10,
            seed: f as u64,
            ..Default::default()
        };
        let space = train_text_space(&titles, &params).map_err(err)?;
        let dim = 6;
        let entities = EntityTable::from_nodes(nodes.iter().map(|n| (n.id.clone(), n.node_type)));
        let ev: Vec<f64> = (0..n * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let config = TrainConfig {
            dim,
            ..TrainConfig::new(ModelKind::Node2vec)
        };
        let model = KgeModel::from_parts(config, entities, ev, vec![], vec![], vec![]).map_err(err)?;
        let index = TextIndex::build(&space, &model, &nodes, TextIndexScope::SameType).map_err(err)?;

        // Copy property.
        let pick = rng.gen_range(0..n);
        let trace = estimate_embedding(&NewEntity::new(NodeType::Nct, titles[pick].as_str()), &space, &index, &model, 1, WeightMode::Similarity).map_err(err)?;
        ensure(trace.neighbors.len() == 1 && trace.neighbors[0].node_id == nodes[pick].id, || format!("fixture {f}: nearest is not the duplicate"))?;
        let want = model.entity_vector(nodes[pick].id.as_str()).unwrap();
        for (a, b) in trace.estimated_vector.iter().zip(want) {
            worst = worst.max((a - b).abs());
        }

        // Weighted-mean oracle and permutation invariance.
        let k = rng.gen_range(1..=n);
        let hits: Vec<(NodeId, f64)> = nodes.iter().take(k).map(|n| (n.id.clone(), rng.gen_range(-0.5..1.0))).collect();
        for mode in WeightMode::ALL {
            let (_, v) = combine_neighbors(&hits, &model, k, mode).map_err(err)?;
            let weights: Vec<f64> = hits
                .iter()
                .map(|(_, s)| match mode {
                    WeightMode::Distance => (1.0 - s).clamp(0.0, 1.0),
                    _ => s.max(0.0),
                })
                .collect();
            let denom = match mode {
                WeightMode::NormalizedSimilarity => weights.iter().sum::<f64>(),
                _ => hits.len() as f64,
            };
            for d in 0..dim {
                let mut acc = 0.0;
                for ((id, _), wt) in hits.iter().zip(&weights) {
                    acc += wt * model.entity_vector(id.as_str()).unwrap()[d];
                }
                let expect = if denom > 0.0 { acc / denom } else { 0.0 };
                worst = worst.max((v[d] - expect).abs());
            }
            let mut shuffled = hits.clone();
            shuffled.shuffle(&mut rng);
            let (_, v2) = combine_neighbors(&shuffled, &model, k, mode).map_err(err)?;
            ensure(v == v2, || format!("fixture {f}: {mode} depends on neighbor order"))?;
        }
    }
    ensure(worst <= 1e-9, || format!("max deviation {worst:e}"))?;
    Ok(format!("50 fixtures, max deviation {worst:e}"))
}

fn method_two() -> Check {
    let records = generate_with(&SynthConfig {
        forced_structure: true,
        ..SynthConfig::new(11, 360)
    });
    let (train, blind) = records.split_at(300);
    let table = NormalizationTable::exact(&collect_entity_texts(train));
    let graph = build_graph(train, &table).map_err(err)?;
    let config = TrainConfig {
        dim: 32,
        epochs: 1,
        walks_per_node: 10,
        walk_length: 40,
        ..TrainConfig::new(ModelKind::Node2vec)
    };
    let model = train_kge(&graph, None, &config).map_err(err)?;
    let params = TextSpaceParams {
        dim: 32,
        epochs: 5,
        buckets: 1 << 14,
        ..Default::default()
    };
    let space = train_text_space(&training_texts(train), &params).map_err(err)?;
    let nodes: Vec<Node> = graph.nodes().cloned().collect();
    let rec = Recommender::new(space, model, &nodes, TextIndexScope::SameType).map_err(err)?;
    let report = evaluate_blind_set(blind, &rec, &[(NodeType::Pep, 3)], 10, WeightMode::Similarity).map_err(err)?;
    let r = &report.reports[0];
    let (mean_rank, sim) = (r.mean_rank.unwrap_or(f64::INFINITY), r.avg_best_similarity.unwrap_or(0.0));
    let msg = format!("node2vec, PEP top 3 over {} blind trials: mean rank {mean_rank:.3}, MRR {:.3}, avg best similarity {sim:.3}", r.n_queries, r.mrr.unwrap_or(0.0));
    ensure(mean_rank <= 2.2 && sim >= 0.6 && r.n_unanswered == 0, || msg.clone())?;
    Ok(msg)
}

fn knn_exactness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let types = [NodeType::Pep, NodeType::Icr];
    for inst in 0..100 {
        let dim = rng.gen_range(2..6);
        let n = rng.gen_range(1..40);
        let entries: Vec<(NodeId, NodeType, Vec<f64>)> = (0..n)
            .map(|i| {
                let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2i32..=2) as f64).collect();
                (NodeId::new(format!("n{:03}", (i * 37) % 101)), *types.choose(&mut rng).unwrap(), v)
            })
            .collect();
        let index = VectorIndex::build(dim, entries.clone()).map_err(err)?;
        let query: Vec<f64> = loop {
            let q: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2i32..=2) as f64).collect();
            if q.iter().any(|x| *x != 0.0) {
                break q;
            }
        };
        let k = rng.gen_range(1..12);
        let t = *types.choose(&mut rng).unwrap();
        // Oracle: cosine on a 1e-9 grid, descending, ties by id.
        let qn = query.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut latest: BTreeMap<NodeId, (NodeType, Vec<f64>)> = BTreeMap::new();
        for (id, ty, v) in &entries {
            latest.insert(id.clone(), (*ty, v.clone()));
        }
        let mut scored: Vec<(i64, NodeId, f64)> = latest
            .into_iter()
            .filter(|(_, (ty, v))| *ty == t && v.iter().any(|x| *x != 0.0))
            .map(|(id, (_, v))| {
                let vn = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                let cos = v.iter().zip(&query).map(|(a, b)| a * b).sum::<f64>() / (vn * qn);
                ((cos * 1e9).round() as i64, id, cos)
            })
            .collect();
        scored.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        scored.truncate(k);
        let got = index.knn(&query, k, t).map_err(err)?;
        ensure(got.len() == scored.len(), || format!("instance {inst}: {} hits, oracle {}", got.len(), scored.len()))?;
        for ((id, s), (_, oid, os)) in got.iter().zip(&scored) {
            ensure(id == oid && (s - os).abs() <= 1e-12, || format!("instance {inst}: {id} {s} vs oracle {oid} {os}"))?;
        }
    }
    Ok("100 instances".into())
}

fn run_cli(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_trialrec")).args(args).current_dir(dir).output().map_err(err)?;
    ensure(out.status.success(), || format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr)))
}

fn collect_files(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            collect_files(root, &p, out);
        } else {
            out.insert(p.strip_prefix(root).unwrap().display().to_string(), fs::read(&p).unwrap());
        }
    }
}

fn pipeline_once(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let steps: &[&[&str]] = &[
        &["synth", "--seed", "21", "--n", "60", "--out", "corpus.jsonl"],
        &["synth", "--seed", "22", "--n", "10", "--first-id", "5000", "--out", "blind.jsonl"],
        &["ingest", "--input", "corpus.jsonl", "--out", "filtered.jsonl"],
        &["train-text", "--corpus", "filtered.jsonl", "--dim", "16", "--epochs", "2", "--buckets", "4096", "--out", "text.vec"],
        &["normalize", "--corpus", "filtered.jsonl", "--text-space", "text.vec", "--out", "norm.tsv"],
        &["build-graph", "--corpus", "filtered.jsonl", "--normalization", "norm.tsv", "--out", "graph"],
        &["stats", "--graph", "graph", "--out", "stats.json"],
        &["split", "--graph", "graph", "--seed", "3", "--out", "split"],
        &["train-kge", "--model", "transe", "--graph", "graph", "--split", "split", "--dim", "8", "--epochs", "10", "--out", "models/transe"],
        &["train-kge", "--model", "node2vec", "--graph", "graph", "--dim", "8", "--epochs", "1", "--walks-per-node", "4", "--walk-length", "10", "--out", "models/node2vec"],
        &["eval", "--model-bundle", "models/transe", "--split", "split", "--out", "eval.json", "--ranks-csv", "ranks.csv"],
        &["recommend", "--model-bundle", "models/node2vec", "--graph", "graph", "--text-space", "text.vec", "--title", "Inhaled therapy in adults with asthma", "--element-type", "PEP", "--k", "5", "--out", "rec.json"],
        &["eval-rec", "--model-bundle", "models/node2vec", "--graph", "graph", "--text-space", "text.vec", "--blind", "blind.jsonl", "--configs", "PEP:3,ICR:10", "--out", "eval_rec.json", "--csv", "eval_rec.csv"],
    ];
    for s in steps {
        run_cli(dir, s)?;
    }
    let mut files = BTreeMap::new();
    collect_files(dir, dir, &mut files);
    Ok(files)
}

fn pipeline_determinism() -> Check {
    let (a, b) = (tempfile::tempdir().map_err(err)?, tempfile::tempdir().map_err(err)?);
    let fa = pipeline_once(a.path())?;
    let fb = pipeline_once(b.path())?;
    let names_a: Vec<&String> = fa.keys().collect();
    ensure(names_a == fb.keys().collect::<Vec<_>>(), || "runs wrote different files".into())?;
    let differing: Vec<&String> = fa.iter().filter(|(k, v)| fb[*k] != **v).map(|(k, _)| k).collect();
    ensure(differing.is_empty(), || format!("differing artifacts: {differing:?}"))?;
    Ok(format!("{} artifacts byte-identical across two runs", fa.len()))
}

fn service_parity() -> Check {
    let dir = tempfile::tempdir().map_err(err)?;
    let d = dir.path();
    let records = generate_with(&SynthConfig::new(31, 60));
    let table = NormalizationTable::exact(&collect_entity_texts(&records));
    let graph = build_graph(&records, &table).map_err(err)?;
    graph.write_dir(&d.join("graph")).map_err(err)?;
    let config = TrainConfig {
        dim: 16,
        epochs: 20,
        ..TrainConfig::new(ModelKind::Transe)
    };
    train_kge(&graph, None, &config).map_err(err)?.save(&d.join("model")).map_err(err)?;
    let params = TextSpaceParams {
        dim: 16,
        epochs: 2,
        buckets: 1 << 12,
        ..Default::default()
    };
    train_text_space(&training_texts(&records), &params).map_err(err)?.save(&d.join("text.vec")).map_err(err)?;
    let paths = SnapshotPaths {
        model_bundle: d.join("model"),
        node_manifest: d.join("graph").join(NODES_FILE),
        text_space: d.join("text.vec"),
    };
    let snap = load_snapshot(&paths, TextIndexScope::SameType).map_err(err)?;
    let state = Arc::new(AppState::new(snap.clone()));
    let rt = tokio::runtime::Runtime::new().map_err(err)?;
    let queries = [
        ("A Phase 3 Study of Inhaled Therapy in Adults with Asthma", NodeType::Pep, 5, WeightMode::Similarity),
        ("Open-Label Study in Non-Small Cell Lung Cancer", NodeType::Icr, 10, WeightMode::Distance),
        ("Long-Term Safety in Systemic Lupus Erythematosus", NodeType::Sep, 3, WeightMode::NormalizedSimilarity),
        ("Tuberculosis treatment shortening", NodeType::Ecr, 7, WeightMode::Similarity),
    ];
    for (title, t, k, mode) in queries {
        let body = serde_json::json!({"title": title, "element_type": t.tag(), "k": k, "knn_k": 8, "weight_mode": mode.name()}).to_string();
        let req = Request::post("/recommend").header("content-type", "application/json").body(Body::from(body)).map_err(err)?;
        let (status, bytes) = rt.block_on(async {
            let resp = router(state.clone()).oneshot(req).await.unwrap();
            (resp.status(), resp.into_body().collect().await.unwrap().to_bytes())
        });
        ensure(status.is_success(), || format!("{title}: HTTP {status}"))?;
        let resp: RecommendResponse = serde_json::from_slice(&bytes).map_err(err)?;
        let query = trialrec::inductive::RecommendationQuery {
            knn_k: 8,
            weight_mode: mode,
            ..trialrec::inductive::RecommendationQuery::new(title, t, k)
        };
        let lib = snap.recommender.recommend(&query).map_err(err)?;
        ensure(resp.snapshot_id == snap.snapshot_id && resp.element_type == t, || format!("{title}: header fields differ"))?;
        ensure(resp.recommendations == lib.recommendations, || format!("{title}: recommendations differ"))?;
        ensure(resp.trace.k == lib.trace.k && resp.trace.weight_mode == lib.trace.weight_mode, || format!("{title}: trace header differs"))?;
        ensure(resp.trace.neighbors.len() == lib.trace.neighbors.len(), || format!("{title}: trace length differs"))?;
        for (a, b) in resp.trace.neighbors.iter().zip(&lib.trace.neighbors) {
            ensure(a.node_id == b.node_id.as_str() && a.similarity == b.similarity && a.weight == b.weight, || format!("{title}: trace differs"))?;
        }
    }
    Ok(format!("{} queries equal field-for-field", queries.len()))
}

fn main() {
    let checks: [(&str, fn() -> Check, Duration); 10] = [
        ("metric-oracle equivalence", metric_oracles, Duration::from_secs(5)),
        ("ranking-protocol oracle", ranking_oracle, Duration::from_secs(30)),
        ("gradient correctness", gradients, Duration::from_secs(30)),
        ("split contract", split_contract, Duration::from_secs(120)),
        ("generalization gap", generalization_gap, Duration::from_secs(15 * 60)),
        ("method 1.0 exactness", method_one, Duration::from_secs(120)),
        ("method 2.0 retrieval sanity", method_two, Duration::from_secs(10 * 60)),
        ("k-NN exactness", knn_exactness, Duration::from_secs(60)),
        ("pipeline determinism", pipeline_determinism, Duration::from_secs(10 * 60)),
        ("service/library parity", service_parity, Duration::from_secs(120)),
    ];
    let mut failed = 0;
    for (name, check, budget) in checks {
        let start = Instant::now();
        let result = check();
        let took = start.elapsed();
        let result = result.and_then(|m| if took <= budget { Ok(m) } else { Err(format!("{m}; took {took:.1?}, budget {budget:?}")) });
        match result {
            Ok(m) => println!("PASS {name}: {m} [{took:.1?}]"),
            Err(m) => {
                failed += 1;
                println!("FAIL {name}: {m} [{took:.1?}]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance check(s) failed");
        std::process::exit(1);
    }
}
