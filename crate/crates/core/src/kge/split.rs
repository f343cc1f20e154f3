//! Stratified train/validation/test split of a graph's triples.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{read_triples, write_triples, KnowledgeGraph, NodeId, NodeType, Triple};

/// Stratum of triples that do not involve a trial.
pub const UNASSIGNED_STRATUM: &str = "unassigned";
const ATTEMPTS: u64 = 50;
const MIN_TRIPLES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.80,
            valid: 0.05,
            test: 0.15,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.valid, self.test];
        if parts.iter().any(|r| !r.is_finite() || *r < 0.0) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "split ratios must be non-negative and sum to 1, got {}/{}/{}",
                self.train, self.valid, self.test
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StratumCounts {
    pub total: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripleSplit {
    #[serde(skip)]
    pub train: Vec<Triple>,
    #[serde(skip)]
    pub valid: Vec<Triple>,
    #[serde(skip)]
    pub test: Vec<Triple>,
    pub seed: u64,
    pub ratios: SplitRatios,
    pub strata: BTreeMap<String, StratumCounts>,
    /// Which reseeded attempt was kept.
    pub attempt: u64,
    /// Entities of valid or test triples that no train triple mentions.
    pub unseen_entities: usize,
}

fn stratum_of<'a>(t: &Triple, strata: &'a BTreeMap<NodeId, String>) -> &'a str {
    if t.relation.signature().0 == NodeType::Nct {
        if let Some(s) = strata.get(&t.head) {
            return s;
        }
    }
    UNASSIGNED_STRATUM
}

/// Rounds the per-stratum demands `demand[s][j]` (rows summing to the
/// integer stratum sizes) so that every row keeps its size, column `j` sums
/// to `targets[j]`, and each cell is the floor or ceiling of its demand.
/// Which cells round up is a bipartite flow from strata to parts.
fn controlled_rounding(demand: &[[f64; 3]], sizes: &[usize], targets: [usize; 3]) -> Vec<[usize; 3]> {
    let floor = |x: f64| (x + 1e-9).floor().max(0.0);
    let mut counts: Vec<[usize; 3]> = demand
        .iter()
        .map(|row| [floor(row[0]) as usize, floor(row[1]) as usize, floor(row[2]) as usize])
        .collect();
    let frac = |s: usize, j: usize| (demand[s][j] - floor(demand[s][j])).max(0.0);
    let row_need: Vec<usize> = counts.iter().zip(sizes).map(|(c, n)| n - c.iter().sum::<usize>()).collect();
    let mut col_need = [0usize; 3];
    for j in 0..3 {
        let floors: usize = counts.iter().map(|c| c[j]).sum();
        col_need[j] = targets[j].saturating_sub(floors);
    }
    // Columns a row may round up, largest fraction first.
    let options: Vec<Vec<usize>> = (0..sizes.len())
        .map(|s| {
            let mut js: Vec<usize> = (0..3).filter(|&j| frac(s, j) > 1e-9).collect();
            js.sort_by(|&a, &b| frac(s, b).total_cmp(&frac(s, a)).then(a.cmp(&b)));
            js
        })
        .collect();
    let mut up = vec![[false; 3]; sizes.len()];
    let mut col_used = [0usize; 3];

    // Augmenting path from row `s` to a column with spare capacity.
    fn augment(s: usize, options: &[Vec<usize>], up: &mut [[bool; 3]], col_used: &mut [usize; 3], col_need: &[usize; 3], visited: &mut [bool; 3]) -> bool {
        for &j in &options[s] {
            if up[s][j] || visited[j] {
                continue;
            }
            visited[j] = true;
            if col_used[j] < col_need[j] {
                up[s][j] = true;
                col_used[j] += 1;
                return true;
            }
            // Reroute another row's unit away from column j.
            for other in 0..up.len() {
                if other != s && up[other][j] {
                    up[other][j] = false;
                    col_used[j] -= 1;
                    if augment(other, options, up, col_used, col_need, visited) {
                        up[s][j] = true;
                        col_used[j] += 1;
                        return true;
                    }
                    up[other][j] = true;
                    col_used[j] += 1;
                }
            }
        }
        false
    }

    for s in 0..sizes.len() {
        for _ in 0..row_need[s] {
            let mut visited = [false; 3];
            if !augment(s, &options, &mut up, &mut col_used, &col_need, &mut visited) {
                // No consistent rounding: take the largest unused fraction.
                if let Some(&j) = options[s].iter().find(|&&j| !up[s][j]) {
                    up[s][j] = true;
                    col_used[j] += 1;
                }
            }
        }
    }
    for (c, u) in counts.iter_mut().zip(&up) {
        for j in 0..3 {
            c[j] += u[j] as usize;
        }
    }
    counts
}

/// Splits `graph`'s triples into train, validation and test parts,
/// stratified by the disease area of the trial each triple hangs off.
/// Global part sizes are `round(ratio * n)` for validation and test; each
/// stratum's share of every part is the floor or ceiling of its exact
/// proportion (see `controlled_rounding`). Up to 50 reseeded shuffles
/// are tried and the one leaving the fewest validation/test entities unseen
/// in training is kept.
pub fn split_triples(graph: &KnowledgeGraph, ratios: SplitRatios, strata: &BTreeMap<NodeId, String>, seed: u64) -> Result<TripleSplit> {
    split_triple_list(graph.triples().cloned().collect(), ratios, strata, seed)
}

pub(crate) fn split_triple_list(mut triples: Vec<Triple>, ratios: SplitRatios, strata: &BTreeMap<NodeId, String>, seed: u64) -> Result<TripleSplit> {
    ratios.validate()?;
    triples.sort();
    triples.dedup();
    let n = triples.len();
    if n < MIN_TRIPLES {
        return Err(Error::Data(format!("cannot split {n} triples: at least {MIN_TRIPLES} are needed")));
    }
    let mut groups: BTreeMap<&str, Vec<&Triple>> = BTreeMap::new();
    for t in &triples {
        groups.entry(stratum_of(t, strata)).or_default().push(t);
    }
    let names: Vec<&str> = groups.keys().copied().collect();
    let sizes: Vec<usize> = groups.values().map(Vec::len).collect();
    let n_test = (ratios.test * n as f64).round() as usize;
    let mut n_valid = ((ratios.valid * n as f64).round() as usize).min(n - n_test);
    // Rounding two parts half-up can leave train outside floor/ceil of its
    // own share, which no per-stratum rounding can satisfy.
    let train_share = ratios.train * n as f64;
    let (lo, hi) = ((train_share + 1e-9).floor() as usize, (train_share - 1e-9).ceil() as usize);
    let train = n - n_test - n_valid;
    if train < lo {
        n_valid -= (lo - train).min(n_valid);
    } else if train > hi {
        n_valid += train - hi;
    }
    let demand: Vec<[f64; 3]> = sizes
        .iter()
        .map(|&s| {
            let (t, v) = (ratios.test * s as f64, ratios.valid * s as f64);
            [s as f64 - t - v, v, t]
        })
        .collect();
    let counts = controlled_rounding(&demand, &sizes, [n - n_test - n_valid, n_valid, n_test]);
    let valid_counts: Vec<usize> = counts.iter().map(|c| c[1]).collect();
    let test_counts: Vec<usize> = counts.iter().map(|c| c[2]).collect();

    let mut best: Option<(usize, u64, [Vec<Triple>; 3])> = None;
    for attempt in 0..ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(attempt);
        let mut parts: [Vec<Triple>; 3] = Default::default();
        for (i, members) in groups.values().enumerate() {
            let mut order = members.clone();
            order.shuffle(&mut rng);
            let (test, rest) = order.split_at(test_counts[i]);
            let (valid, train) = rest.split_at(valid_counts[i]);
            parts[0].extend(train.iter().map(|t| (*t).clone()));
            parts[1].extend(valid.iter().map(|t| (*t).clone()));
            parts[2].extend(test.iter().map(|t| (*t).clone()));
        }
        let seen: BTreeSet<&NodeId> = parts[0].iter().flat_map(|t| [&t.head, &t.tail]).collect();
        let unseen: BTreeSet<&NodeId> = parts[1]
            .iter()
            .chain(&parts[2])
            .flat_map(|t| [&t.head, &t.tail])
            .filter(|e| !seen.contains(e))
            .collect();
        let score = unseen.len();
        if best.as_ref().map_or(true, |b| score < b.0) {
            best = Some((score, attempt, parts));
            if score == 0 {
                break;
            }
        }
    }
    let (unseen_entities, attempt, [mut train, mut valid, mut test]) = best.expect("at least one attempt");
    train.sort();
    valid.sort();
    test.sort();
    let strata_counts = names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            (
                name.to_string(),
                StratumCounts {
                    total: sizes[i],
                    train: sizes[i] - test_counts[i] - valid_counts[i],
                    valid: valid_counts[i],
                    test: test_counts[i],
                },
            )
        })
        .collect();
    Ok(TripleSplit {
        train,
        valid,
        test,
        seed,
        ratios,
        strata: strata_counts,
        attempt,
        unseen_entities,
    })
}

impl TripleSplit {
    pub fn len(&self) -> usize {
        self.train.len() + self.valid.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `train.tsv`, `valid.tsv`, `test.tsv` and a `split.json` summary.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_triples(&dir.join("train.tsv"), &self.train)?;
        write_triples(&dir.join("valid.tsv"), &self.valid)?;
        write_triples(&dir.join("test.tsv"), &self.test)?;
        let path = dir.join("split.json");
        let text = serde_json::to_string_pretty(self).expect("split summary serializes") + "\n";
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let path = dir.join("split.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut split: TripleSplit = serde_json::from_str(&text).map_err(|e| Error::format(&path, e.line(), e.to_string()))?;
        let read = |name: &str| -> Result<Vec<Triple>> { Ok(read_triples(&dir.join(name))?.into_iter().map(|(_, t)| t).collect()) };
        split.train = read("train.tsv")?;
        split.valid = read("valid.tsv")?;
        split.test = read("test.tsv")?;
        Ok(split)
    }
}
