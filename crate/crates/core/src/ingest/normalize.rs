//! Per-type single-link clustering of entity texts in the text space, with
//! each cluster's medoid as its normalized value.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kg::{normalize_text, read_lines, write_lines, NodeType};
use crate::text::TextSpace;

pub const DEFAULT_THRESHOLD: f64 = 0.90;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormEntry {
    pub cluster_id: usize,
    pub normalized_text: String,
}

/// Keys are pre-normalized texts (see [`normalize_text`]).
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationTable {
    pub threshold: f64,
    entries: BTreeMap<NodeType, BTreeMap<String, NormEntry>>,
}

impl NormalizationTable {
    /// Exact-match table: every distinct pre-normalized text is its own cluster.
    pub fn exact(texts_by_type: &BTreeMap<NodeType, Vec<String>>) -> Self {
        let entries = texts_by_type
            .iter()
            .map(|(t, texts)| {
                let uniq: BTreeSet<String> = texts
                    .iter()
                    .map(|s| normalize_text(s))
                    .filter(|s| !s.is_empty())
                    .collect();
                let map = uniq
                    .into_iter()
                    .enumerate()
                    .map(|(i, s)| {
                        (
                            s.clone(),
                            NormEntry {
                                cluster_id: i,
                                normalized_text: s,
                            },
                        )
                    })
                    .collect();
                (*t, map)
            })
            .collect();
        NormalizationTable {
            threshold: f64::INFINITY,
            entries,
        }
    }

    pub fn get(&self, node_type: NodeType, raw: &str) -> Option<&NormEntry> {
        self.entries.get(&node_type)?.get(&normalize_text(raw))
    }

    /// The normalized text for `raw`; texts absent from the table normalize
    /// to their own pre-normalized form.
    pub fn normalize(&self, node_type: NodeType, raw: &str) -> String {
        let key = normalize_text(raw);
        match self.entries.get(&node_type).and_then(|m| m.get(&key)) {
            Some(e) => e.normalized_text.clone(),
            None => key,
        }
    }

    pub fn types(&self) -> impl Iterator<Item = NodeType> + '_ {
        self.entries.keys().copied()
    }

    pub fn entries(&self, node_type: NodeType) -> impl Iterator<Item = (&String, &NormEntry)> {
        self.entries.get(&node_type).into_iter().flatten()
    }

    pub fn cluster_count(&self, node_type: NodeType) -> usize {
        self.entries(node_type)
            .map(|(_, e)| e.cluster_id)
            .collect::<BTreeSet<_>>()
            .len()
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `<type_tag>\t<raw_text>\t<cluster_id>\t<normalized_text>` per line.
    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let lines = self.entries.iter().flat_map(|(t, m)| {
            m.iter()
                .map(move |(raw, e)| format!("{}\t{}\t{}\t{}", t.tag(), raw, e.cluster_id, e.normalized_text))
        });
        write_lines(path, lines)
    }

    pub fn read_tsv(path: &Path, threshold: f64) -> Result<Self> {
        let mut entries: BTreeMap<NodeType, BTreeMap<String, NormEntry>> = BTreeMap::new();
        for (i, line) in read_lines(path)?.into_iter().enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [tag, raw, cluster, normalized] = fields[..] else {
                return Err(Error::format(path, i + 1, "expected 4 tab-separated fields"));
            };
            let t: NodeType = tag
                .parse()
                .map_err(|e: Error| Error::format(path, i + 1, e.to_string()))?;
            let cluster_id = cluster
                .parse()
                .map_err(|_| Error::format(path, i + 1, "cluster id is not an integer"))?;
            entries.entry(t).or_default().insert(
                raw.to_string(),
                NormEntry {
                    cluster_id,
                    normalized_text: normalized.to_string(),
                },
            );
        }
        Ok(NormalizationTable { threshold, entries })
    }
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Keeps the smaller index as root so roots are each cluster's first member.
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn cluster_texts(texts: &[String], space: &TextSpace, threshold: f64) -> Vec<(usize, String)> {
    let vectors: Vec<Vec<f64>> = texts
        .par_iter()
        .map(|t| space.embed_sentence(t).into_iter().map(f64::from).collect())
        .collect();
    let zero: Vec<bool> = vectors.iter().map(|v| v.iter().all(|&x| x == 0.0)).collect();
    let edges: Vec<(usize, usize)> = (0..texts.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let (vectors, zero) = (&vectors, &zero);
            ((i + 1)..texts.len())
                .filter(move |&j| !zero[i] && !zero[j] && dot(&vectors[i], &vectors[j]) >= threshold)
                .map(move |j| (i, j))
        })
        .collect();
    let mut ds = DisjointSet::new(texts.len());
    for (i, j) in edges {
        ds.union(i, j);
    }
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..texts.len() {
        let r = ds.find(i);
        members.entry(r).or_default().push(i);
    }
    let mut out = vec![(0usize, String::new()); texts.len()];
    for (cluster_id, group) in members.values().enumerate() {
        // Medoid by summed cosine distance; members are in bytewise order, so
        // the strict comparison keeps the smallest text on ties.
        let mut best = group[0];
        let mut best_cost = f64::INFINITY;
        for &m in group {
            let cost: f64 = group.iter().map(|&o| 1.0 - dot(&vectors[m], &vectors[o])).sum();
            if cost < best_cost {
                best_cost = cost;
                best = m;
            }
        }
        for &m in group {
            out[m] = (cluster_id, texts[best].clone());
        }
    }
    out
}

/// Clusters each type's texts by single link at cosine `threshold` in the
/// text space. Texts are pre-normalized and deduplicated first.
pub fn normalize_entity_texts(
    texts_by_type: &BTreeMap<NodeType, Vec<String>>,
    space: &TextSpace,
    threshold: f64,
) -> Result<NormalizationTable> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "similarity threshold must lie in (0, 1], got {threshold}"
        )));
    }
    let mut entries = BTreeMap::new();
    for (t, texts) in texts_by_type {
        let uniq: Vec<String> = texts
            .iter()
            .map(|s| normalize_text(s))
            .filter(|s| !s.is_empty())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let assigned = cluster_texts(&uniq, space, threshold);
        let map: BTreeMap<String, NormEntry> = uniq
            .into_iter()
            .zip(assigned)
            .map(|(raw, (cluster_id, normalized_text))| {
                (
                    raw,
                    NormEntry {
                        cluster_id,
                        normalized_text,
                    },
                )
            })
            .collect();
        entries.insert(*t, map);
    }
    Ok(NormalizationTable { threshold, entries })
}
