//! Subword skip-gram text space.
//!
//! A token's vector is the mean of its word row and the rows of its hashed
//! character n-grams (computed over `<token>`). Sentences embed as the
//! re-normalized mean of their L2-normalized token vectors.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::sgns::{self, NegativeSampler, Scratch};
use crate::store::{self, VectorStoreHeader};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TextSpaceParams {
    pub dim: usize,
    pub min_n: usize,
    pub max_n: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f32,
    pub min_count: u64,
    pub buckets: u32,
    pub seed: u64,
}

impl Default for TextSpaceParams {
    fn default() -> Self {
        TextSpaceParams {
            dim: 100,
            min_n: 3,
            max_n: 6,
            window: 5,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.05,
            min_count: 1,
            buckets: 1 << 18,
            seed: 1,
        }
    }
}

impl TextSpaceParams {
    fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::InvalidArgument("text dimension must be at least 2".into()));
        }
        if self.min_n == 0 || self.max_n < self.min_n {
            return Err(Error::InvalidArgument(format!(
                "invalid n-gram range {}..={}",
                self.min_n, self.max_n
            )));
        }
        if self.epochs == 0 || self.buckets == 0 || self.window == 0 {
            return Err(Error::InvalidArgument(
                "epochs, buckets and window must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Lowercased alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn fnv1a(bytes: &[u8]) -> u32 {
    let mut h: u32 = 0x811c_9dc5;
    for &b in bytes {
        h ^= b as u32;
        h = h.wrapping_mul(0x0100_0193);
    }
    h
}

/// Hash buckets of the character n-grams of `<token>`, excluding the
/// bracketed token itself.
pub fn ngram_buckets(token: &str, min_n: usize, max_n: usize, buckets: u32) -> Vec<u32> {
    let chars: Vec<char> = std::iter::once('<')
        .chain(token.chars())
        .chain(std::iter::once('>'))
        .collect();
    let mut out = Vec::new();
    let mut buf = String::new();
    for start in 0..chars.len() {
        for n in min_n..=max_n {
            let end = start + n;
            if end > chars.len() || n == chars.len() {
                continue;
            }
            buf.clear();
            buf.extend(&chars[start..end]);
            out.push(fnv1a(buf.as_bytes()) % buckets);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextSpace {
    params: TextSpaceParams,
    vocab: Vec<String>,
    word_index: HashMap<String, usize>,
    /// Word rows, `vocab.len() × dim`.
    word_rows: Vec<f32>,
    /// Trained n-gram buckets, ascending, parallel to `bucket_rows`.
    bucket_ids: Vec<u32>,
    bucket_rows: Vec<f32>,
    loss_trace: Vec<f64>,
}

impl TextSpace {
    pub fn params(&self) -> &TextSpaceParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.params.dim
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn trained_buckets(&self) -> usize {
        self.bucket_ids.len()
    }

    /// Mean skip-gram loss per prediction, one entry per epoch.
    pub fn loss_trace(&self) -> &[f64] {
        &self.loss_trace
    }

    fn bucket_row(&self, bucket: u32) -> Option<&[f32]> {
        let dim = self.params.dim;
        self.bucket_ids
            .binary_search(&bucket)
            .ok()
            .map(|i| &self.bucket_rows[i * dim..(i + 1) * dim])
    }

    /// Raw (unnormalized) token vector. Untrained n-gram buckets count as zero
    /// rows; a token with no trained rows is the zero vector.
    pub fn token_vector(&self, token: &str) -> Vec<f32> {
        let dim = self.params.dim;
        let mut v = vec![0.0f32; dim];
        let mut n = 0usize;
        if let Some(&w) = self.word_index.get(token) {
            for (a, b) in v.iter_mut().zip(&self.word_rows[w * dim..(w + 1) * dim]) {
                *a += b;
            }
            n += 1;
        }
        for b in ngram_buckets(token, self.params.min_n, self.params.max_n, self.params.buckets) {
            if let Some(row) = self.bucket_row(b) {
                for (a, x) in v.iter_mut().zip(row) {
                    *a += x;
                }
            }
            n += 1;
        }
        if n > 0 {
            let inv = 1.0 / n as f32;
            v.iter_mut().for_each(|x| *x *= inv);
        }
        v
    }

    /// Unit-norm sentence vector, or the zero vector when no token embeds.
    pub fn embed_sentence(&self, text: &str) -> Vec<f32> {
        let dim = self.params.dim;
        let mut acc = vec![0.0f64; dim];
        let mut used = 0usize;
        for token in tokenize(text) {
            let v = self.token_vector(&token);
            let norm = l2_norm(&v);
            if norm == 0.0 || !norm.is_finite() {
                continue;
            }
            for (a, x) in acc.iter_mut().zip(&v) {
                *a += *x as f64 / norm;
            }
            used += 1;
        }
        if used == 0 {
            return vec![0.0; dim];
        }
        let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return vec![0.0; dim];
        }
        acc.iter().map(|x| (x / norm) as f32).collect()
    }

    pub fn similarity(&self, a: &str, b: &str) -> f64 {
        cosine_similarity(&self.embed_sentence(a), &self.embed_sentence(b)).unwrap_or(0.0)
    }

    /// Writes the word rows followed by the trained n-gram buckets (keyed
    /// `#<bucket>`) in vector-store format.
    pub fn save(&self, path: &Path) -> Result<()> {
        let dim = self.params.dim;
        let mut header = VectorStoreHeader::new("text", dim, self.vocab.len() + self.bucket_ids.len());
        header.extra.insert("words".into(), Value::from(self.vocab.len()));
        header.extra.insert(
            "params".into(),
            serde_json::to_value(&self.params).expect("params serialize"),
        );
        header.extra.insert(
            "loss_trace".into(),
            serde_json::to_value(&self.loss_trace).expect("loss serialize"),
        );
        let bucket_keys: Vec<String> = self.bucket_ids.iter().map(|b| format!("#{b}")).collect();
        let rows = self
            .vocab
            .iter()
            .map(String::as_str)
            .zip(self.word_rows.chunks_exact(dim))
            .chain(
                bucket_keys
                    .iter()
                    .map(String::as_str)
                    .zip(self.bucket_rows.chunks_exact(dim)),
            );
        store::write_vector_store(path, &header, rows)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let vs = store::read_vector_store::<f32>(path)?;
        if vs.header.kind != "text" {
            return Err(Error::format(path, 1, format!("expected kind \"text\", found {:?}", vs.header.kind)));
        }
        let params: TextSpaceParams = vs
            .header
            .extra
            .get("params")
            .cloned()
            .map(serde_json::from_value)
            .transpose()
            .map_err(|e| Error::format(path, 1, format!("bad params: {e}")))?
            .ok_or_else(|| Error::format(path, 1, "header field `params` missing"))?;
        if params.dim != vs.header.dim {
            return Err(Error::format(path, 1, "params.dim disagrees with dim"));
        }
        let loss_trace = vs
            .header
            .extra
            .get("loss_trace")
            .cloned()
            .map(serde_json::from_value)
            .transpose()
            .map_err(|e| Error::format(path, 1, format!("bad loss_trace: {e}")))?
            .unwrap_or_default();
        let mut vocab = Vec::new();
        let mut word_rows = Vec::new();
        let mut bucket_ids = Vec::new();
        let mut bucket_rows = Vec::new();
        for (i, (key, row)) in vs.rows.into_iter().enumerate() {
            if let Some(b) = key.strip_prefix('#') {
                let b: u32 = b
                    .parse()
                    .map_err(|_| Error::format(path, i + 2, format!("bad bucket key {key:?}")))?;
                if bucket_ids.last().is_some_and(|&last| last >= b) || b >= params.buckets {
                    return Err(Error::format(path, i + 2, "bucket keys must ascend within range"));
                }
                bucket_ids.push(b);
                bucket_rows.extend(row);
            } else {
                if !bucket_ids.is_empty() {
                    return Err(Error::format(path, i + 2, "word row after bucket rows"));
                }
                vocab.push(key);
                word_rows.extend(row);
            }
        }
        let word_index = vocab.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Ok(TextSpace {
            params,
            vocab,
            word_index,
            word_rows,
            bucket_ids,
            bucket_rows,
            loss_trace,
        })
    }
}

pub(crate) fn l2_norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt()
}

/// Cosine similarity in `[-1, 1]`; 0 when either vector is zero.
pub fn cosine_similarity<T: Copy + Into<f64>>(u: &[T], v: &[T]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            actual: v.len(),
        });
    }
    let (mut dot, mut nu, mut nv) = (0.0f64, 0.0f64, 0.0f64);
    for (&a, &b) in u.iter().zip(v) {
        let (a, b) = (a.into(), b.into());
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

/// Trains a text space on `corpus` (one string per entry). Single worker,
/// deterministic given `params.seed`.
pub fn train_text_space<S: AsRef<str>>(corpus: &[S], params: &TextSpaceParams) -> Result<TextSpace> {
    params.validate()?;
    let sentences: Vec<Vec<String>> = corpus.iter().map(|s| tokenize(s.as_ref())).collect();
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for s in &sentences {
        for t in s {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut kept: Vec<(&str, u64)> = counts
        .into_iter()
        .filter(|&(_, c)| c >= params.min_count)
        .collect();
    if kept.is_empty() {
        return Err(Error::Training("empty corpus: no tokens to train on".into()));
    }
    // Frequency descending, then bytewise.
    kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let vocab: Vec<String> = kept.iter().map(|(w, _)| w.to_string()).collect();
    let word_counts: Vec<u64> = kept.iter().map(|&(_, c)| c).collect();
    let word_index: HashMap<String, usize> = vocab.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();

    // Input rows: words first, then the buckets any vocabulary word touches.
    let word_buckets: Vec<Vec<u32>> = vocab
        .iter()
        .map(|w| ngram_buckets(w, params.min_n, params.max_n, params.buckets))
        .collect();
    let mut bucket_ids: Vec<u32> = word_buckets.iter().flatten().copied().collect();
    bucket_ids.sort_unstable();
    bucket_ids.dedup();
    let nwords = vocab.len();
    let input_rows: Vec<Vec<usize>> = word_buckets
        .iter()
        .enumerate()
        .map(|(w, bs)| {
            std::iter::once(w)
                .chain(bs.iter().map(|b| nwords + bucket_ids.binary_search(b).expect("bucket present")))
                .collect()
        })
        .collect();

    let dim = params.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let bound = 1.0 / dim as f32;
    let mut input = vec![0.0f32; (nwords + bucket_ids.len()) * dim];
    for x in &mut input[..nwords * dim] {
        *x = rng.gen_range(-bound..bound);
    }
    let mut output = vec![0.0f32; nwords * dim];
    let sampler = NegativeSampler::new(&word_counts);

    let encoded: Vec<Vec<usize>> = sentences
        .iter()
        .map(|s| s.iter().filter_map(|t| word_index.get(t).copied()).collect())
        .filter(|s: &Vec<usize>| !s.is_empty())
        .collect();
    let total_tokens: usize = encoded.iter().map(Vec::len).sum();
    let total_steps = (total_tokens * params.epochs).max(1) as f32;

    let mut order: Vec<usize> = (0..encoded.len()).collect();
    let mut scratch = Scratch::new(dim);
    let mut negatives = Vec::with_capacity(params.negatives);
    let mut processed = 0usize;
    let mut loss_trace = Vec::with_capacity(params.epochs);
    for epoch in 0..params.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0f64;
        let mut predictions = 0usize;
        for &si in &order {
            let sentence = &encoded[si];
            for (pos, &word) in sentence.iter().enumerate() {
                let lr = params.learning_rate * (1.0 - processed as f32 / total_steps).max(1e-4);
                processed += 1;
                let reach = rng.gen_range(1..=params.window);
                let lo = pos.saturating_sub(reach);
                let hi = (pos + reach).min(sentence.len() - 1);
                for ctx in lo..=hi {
                    if ctx == pos {
                        continue;
                    }
                    let target = sentence[ctx];
                    negatives.clear();
                    while negatives.len() < params.negatives {
                        let n = sampler.sample(&mut rng);
                        if n != target {
                            negatives.push(n);
                        } else if nwords == 1 {
                            break;
                        }
                    }
                    epoch_loss += sgns::update(
                        &mut input,
                        &mut output,
                        dim,
                        &input_rows[word],
                        target,
                        &negatives,
                        lr,
                        &mut scratch,
                    );
                    predictions += 1 + negatives.len();
                }
            }
        }
        let mean = if predictions == 0 { 0.0 } else { epoch_loss / predictions as f64 };
        if !mean.is_finite() || input.iter().any(|x| !x.is_finite()) {
            return Err(Error::Diverged { epoch: epoch + 1 });
        }
        loss_trace.push(mean);
    }

    let bucket_rows = input.split_off(nwords * dim);
    Ok(TextSpace {
        params: params.clone(),
        vocab,
        word_index,
        word_rows: input,
        bucket_ids,
        bucket_rows,
        loss_trace,
    })
}
