//! Exact, type-bucketed cosine k-NN.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::kg::{NodeId, NodeType};

const TIE_GRID: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
struct Bucket {
    ids: Vec<NodeId>,
    /// Row-major unit vectors; zero rows for zero inputs.
    matrix: Vec<f64>,
    zero: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    dim: usize,
    buckets: BTreeMap<NodeType, Bucket>,
}

impl VectorIndex {
    /// Builds an index from `(id, type, vector)` entries. Duplicate ids keep
    /// the last vector given.
    pub fn build<I, V>(dim: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (NodeId, NodeType, V)>,
        V: AsRef<[f64]>,
    {
        let mut grouped: BTreeMap<NodeType, BTreeMap<NodeId, Vec<f64>>> = BTreeMap::new();
        for (id, t, v) in entries {
            let v = v.as_ref();
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: v.len(),
                });
            }
            grouped.entry(t).or_default().insert(id, v.to_vec());
        }
        let buckets = grouped
            .into_iter()
            .map(|(t, rows)| {
                let mut bucket = Bucket {
                    ids: Vec::with_capacity(rows.len()),
                    matrix: Vec::with_capacity(rows.len() * dim),
                    zero: Vec::with_capacity(rows.len()),
                };
                for (id, v) in rows {
                    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    let is_zero = norm == 0.0 || !norm.is_finite();
                    bucket.ids.push(id);
                    bucket.zero.push(is_zero);
                    if is_zero {
                        bucket.matrix.extend(std::iter::repeat(0.0).take(dim));
                    } else {
                        bucket.matrix.extend(v.iter().map(|x| x / norm));
                    }
                }
                (t, bucket)
            })
            .collect();
        Ok(VectorIndex { dim, buckets })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.buckets.is_empty()
    }

    /// `(type, size)` per bucket, in type order.
    pub fn bucket_sizes(&self) -> Vec<(NodeType, usize)> {
        self.buckets.iter().map(|(t, b)| (*t, b.ids.len())).collect()
    }

    pub fn ids(&self, node_type: NodeType) -> &[NodeId] {
        self.buckets.get(&node_type).map(|b| b.ids.as_slice()).unwrap_or(&[])
    }

    /// Stored unit vector for `id` within `node_type`.
    pub fn vector(&self, node_type: NodeType, id: &str) -> Option<&[f64]> {
        let b = self.buckets.get(&node_type)?;
        let i = b.ids.binary_search_by(|x| x.as_str().cmp(id)).ok()?;
        Some(&b.matrix[i * self.dim..(i + 1) * self.dim])
    }

    /// The `k` most cosine-similar entries of `node_type`, ordered by
    /// similarity descending then id ascending. Similarities within about
    /// 1e-12 of each other count as tied. A type with no entries and a
    /// zero query both yield an empty list.
    pub fn knn(&self, query: &[f64], k: usize, node_type: NodeType) -> Result<Vec<(NodeId, f64)>> {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        if query.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: query.len(),
            });
        }
        let Some(bucket) = self.buckets.get(&node_type) else {
            return Ok(Vec::new());
        };
        let qn = query.iter().map(|x| x * x).sum::<f64>().sqrt();
        if qn == 0.0 || !qn.is_finite() {
            return Ok(Vec::new());
        }
        let q: Vec<f64> = query.iter().map(|x| x / qn).collect();
        let mut scored: Vec<(usize, f64)> = bucket
            .matrix
            .chunks_exact(self.dim)
            .enumerate()
            .filter(|(i, _)| !bucket.zero[*i])
            .map(|(i, row)| (i, row.iter().zip(&q).map(|(a, b)| a * b).sum::<f64>()))
            .collect();
        // Similarities are compared on a 1e-12 grid so rounding noise cannot
        // split an exact tie. Ids are sorted within the bucket, so index order
        // is id order.
        let key = |s: f64| (s * TIE_GRID).round() as i64;
        let cmp = |a: &(usize, f64), b: &(usize, f64)| key(b.1).cmp(&key(a.1)).then(a.0.cmp(&b.0));
        if scored.len() > k {
            scored.select_nth_unstable_by(k - 1, cmp);
            scored.truncate(k);
        }
        scored.sort_by(cmp);
        Ok(scored
            .into_iter()
            .map(|(i, s)| (bucket.ids[i].clone(), s))
            .collect())
    }
}
