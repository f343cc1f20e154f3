//! Type-consistent, filtered corruption of triples.

use std::collections::HashSet;

use rand::Rng;

use crate::error::Result;
use crate::kg::{EntityTable, KnowledgeGraph, RelationType, Triple};

/// Pools at most this large are enumerated instead of rejection-sampled.
const ENUMERATE_BELOW: usize = 64;
const REJECTION_TRIES: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct NegativeSample {
    pub triples: Vec<Triple>,
    /// Fewer than the requested number could be drawn because no valid
    /// corruption exists.
    pub exhausted: bool,
}

/// Draws corruptions that replace the head or the tail with another entity
/// of the type the relation requires, skipping every known positive.
#[derive(Debug, Clone)]
pub struct Corruptor {
    entities: EntityTable,
    known: HashSet<(usize, RelationType, usize)>,
}

impl Corruptor {
    /// Positives naming unknown entities are ignored.
    pub fn new<'a>(entities: EntityTable, positives: impl IntoIterator<Item = &'a Triple>) -> Self {
        let known = positives
            .into_iter()
            .filter_map(|t| Some((entities.get(t.head.as_str())?, t.relation, entities.get(t.tail.as_str())?)))
            .collect();
        Corruptor { entities, known }
    }

    pub fn from_graph(graph: &KnowledgeGraph) -> Self {
        Self::new(EntityTable::from_graph(graph), graph.triples())
    }

    pub fn entities(&self) -> &EntityTable {
        &self.entities
    }

    pub fn is_known(&self, h: usize, r: RelationType, t: usize) -> bool {
        self.known.contains(&(h, r, t))
    }

    fn valid(&self, h: usize, r: RelationType, t: usize, corrupt_tail: bool, c: usize) -> bool {
        if corrupt_tail {
            c != t && !self.is_known(h, r, c)
        } else {
            c != h && !self.is_known(c, r, t)
        }
    }

    fn draw<R: Rng>(&self, h: usize, r: RelationType, t: usize, corrupt_tail: bool, rng: &mut R) -> Option<usize> {
        let (head_type, tail_type) = r.signature();
        let pool = self.entities.of_type(if corrupt_tail { tail_type } else { head_type });
        if pool.len() > ENUMERATE_BELOW {
            for _ in 0..REJECTION_TRIES {
                let c = pool[rng.gen_range(0..pool.len())];
                if self.valid(h, r, t, corrupt_tail, c) {
                    return Some(c);
                }
            }
        }
        let candidates: Vec<usize> = pool
            .iter()
            .copied()
            .filter(|&c| self.valid(h, r, t, corrupt_tail, c))
            .collect();
        if candidates.is_empty() {
            None
        } else {
            Some(candidates[rng.gen_range(0..candidates.len())])
        }
    }

    /// Appends up to `n` corruptions of `(h, r, t)` to `out` as
    /// `(head, tail)` index pairs. The side is chosen uniformly per draw and
    /// falls back to the other side when one has no valid replacement.
    /// Returns true when fewer than `n` were produced.
    pub fn sample_into<R: Rng>(&self, h: usize, r: RelationType, t: usize, n: usize, rng: &mut R, out: &mut Vec<(usize, usize)>) -> bool {
        for _ in 0..n {
            let tail_first = rng.gen_bool(0.5);
            let pick = self
                .draw(h, r, t, tail_first, rng)
                .map(|c| (tail_first, c))
                .or_else(|| self.draw(h, r, t, !tail_first, rng).map(|c| (!tail_first, c)));
            match pick {
                Some((true, c)) => out.push((h, c)),
                Some((false, c)) => out.push((c, t)),
                None => return true,
            }
        }
        false
    }

    pub fn sample<R: Rng>(&self, triple: &Triple, n: usize, rng: &mut R) -> Result<NegativeSample> {
        if n == 0 {
            return Err(crate::Error::InvalidArgument("n must be at least 1".into()));
        }
        let h = self.entities.lookup(triple.head.as_str())?;
        let t = self.entities.lookup(triple.tail.as_str())?;
        let mut pairs = Vec::with_capacity(n);
        let exhausted = self.sample_into(h, triple.relation, t, n, rng, &mut pairs);
        Ok(NegativeSample {
            triples: pairs
                .into_iter()
                .map(|(a, b)| Triple {
                    head: self.entities.id(a).clone(),
                    relation: triple.relation,
                    tail: self.entities.id(b).clone(),
                })
                .collect(),
            exhausted,
        })
    }
}

/// `n` filtered, type-consistent corruptions of `triple` against `graph`.
pub fn sample_negatives<R: Rng>(triple: &Triple, graph: &KnowledgeGraph, n: usize, rng: &mut R) -> Result<NegativeSample> {
    Corruptor::from_graph(graph).sample(triple, n, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{Node, NodeId, NodeType};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn graph(n_trials: usize, phases: &[&str], edges: &[(usize, usize)]) -> KnowledgeGraph {
        let mut g = KnowledgeGraph::new();
        for i in 0..n_trials {
            g.add_node(Node {
                id: NodeId::new(format!("NCT{:08}", i + 1)),
                node_type: NodeType::Nct,
                attribute_text: Some("t".into()),
            })
            .unwrap();
        }
        for p in phases {
            g.add_node(Node {
                id: NodeId::new(format!("ph:{p}")),
                node_type: NodeType::Ph,
                attribute_text: None,
            })
            .unwrap();
        }
        for &(t, p) in edges {
            g.upsert_triple(Triple::new(format!("NCT{:08}", t + 1), RelationType::NctPh, format!("ph:{}", phases[p])))
                .unwrap();
        }
        g
    }

    #[test]
    fn corruptions_are_typed_and_filtered() {
        let g = graph(4, &["a", "b", "c"], &[(0, 0), (1, 1), (2, 0), (3, 2)]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pos = Triple::new("NCT00000001", RelationType::NctPh, "ph:a");
        let s = sample_negatives(&pos, &g, 200, &mut rng).unwrap();
        assert!(!s.exhausted);
        assert_eq!(s.triples.len(), 200);
        for n in &s.triples {
            assert!(!g.contains_triple(n));
            assert!(n.head.as_str().starts_with("NCT"));
            assert!(n.tail.as_str().starts_with("ph:"));
            assert!((n.head == pos.head) != (n.tail == pos.tail), "exactly one side changes");
        }
    }

    #[test]
    fn two_tails_leave_one_tail_corruption() {
        let g = graph(1, &["a", "b"], &[(0, 0)]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pos = Triple::new("NCT00000001", RelationType::NctPh, "ph:a");
        let s = sample_negatives(&pos, &g, 5, &mut rng).unwrap();
        let distinct: std::collections::BTreeSet<_> = s.triples.iter().collect();
        assert_eq!(distinct.len(), 1);
    }

    #[test]
    fn singleton_pools_are_flagged() {
        let g = graph(1, &["a"], &[(0, 0)]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pos = Triple::new("NCT00000001", RelationType::NctPh, "ph:a");
        let s = sample_negatives(&pos, &g, 4, &mut rng).unwrap();
        assert!(s.exhausted);
        assert!(s.triples.is_empty());
        assert!(sample_negatives(&pos, &g, 0, &mut rng).is_err());
    }

    #[test]
    fn replacement_is_uniform() {
        // One trial and eleven phases: ten valid tail corruptions.
        let names: Vec<String> = (0..11).map(|i| format!("p{i:02}")).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let g = graph(1, &refs, &[(0, 0)]);
        let c = Corruptor::from_graph(&g);
        let pos = Triple::new("NCT00000001", RelationType::NctPh, "ph:p00");
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut counts: BTreeMap<NodeId, usize> = BTreeMap::new();
        for _ in 0..1000 {
            for n in c.sample(&pos, 10, &mut rng).unwrap().triples {
                *counts.entry(n.tail).or_default() += 1;
            }
        }
        assert_eq!(counts.len(), 10);
        for (_, k) in counts {
            let f = k as f64 / 10_000.0;
            assert!((f - 0.10).abs() <= 0.012, "{f}");
        }
    }

    #[test]
    fn large_pools_use_rejection_and_stay_filtered() {
        let names: Vec<String> = (0..100).map(|i| format!("p{i:03}")).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        // The trial is linked to all but one phase.
        let edges: Vec<(usize, usize)> = (0..99).map(|p| (0, p)).collect();
        let g = graph(1, &refs, &edges);
        let pos = Triple::new("NCT00000001", RelationType::NctPh, "ph:p000");
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = sample_negatives(&pos, &g, 20, &mut rng).unwrap();
        assert!(s.triples.iter().all(|t| t.tail.as_str() == "ph:p099"));
    }
}
