//! Skip-gram with negative sampling: the update kernel shared by the subword
//! text space and node2vec.

use rand::Rng;

/// Unigram^0.75 sampling distribution over output ids.
#[derive(Debug, Clone)]
pub(crate) struct NegativeSampler {
    cumulative: Vec<f64>,
}

impl NegativeSampler {
    pub(crate) fn new(counts: &[u64]) -> Self {
        let mut acc = 0.0;
        let cumulative = counts
            .iter()
            .map(|&c| {
                acc += (c as f64).powf(0.75);
                acc
            })
            .collect();
        NegativeSampler { cumulative }
    }

    pub(crate) fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().expect("sampler over an empty vocabulary");
        let x = rng.gen::<f64>() * total;
        self.cumulative
            .partition_point(|&c| c <= x)
            .min(self.cumulative.len() - 1)
    }
}

#[inline]
fn sigmoid(x: f32) -> f32 {
    if x > 30.0 {
        1.0
    } else if x < -30.0 {
        0.0
    } else {
        1.0 / (1.0 + (-x).exp())
    }
}

#[inline]
fn log_clamped(p: f32) -> f64 {
    (p.max(1e-7) as f64).ln()
}

/// Scratch buffers for [`update`].
pub(crate) struct Scratch {
    hidden: Vec<f32>,
    grad: Vec<f32>,
}

impl Scratch {
    pub(crate) fn new(dim: usize) -> Self {
        Scratch {
            hidden: vec![0.0; dim],
            grad: vec![0.0; dim],
        }
    }
}

/// One positive target plus its negatives. The hidden vector is the mean of
/// `rows` of `input`; every input row receives the full accumulated gradient.
/// Returns the summed logistic loss.
#[allow(clippy::too_many_arguments)]
pub(crate) fn update(
    input: &mut [f32],
    output: &mut [f32],
    dim: usize,
    rows: &[usize],
    target: usize,
    negatives: &[usize],
    lr: f32,
    scratch: &mut Scratch,
) -> f64 {
    let Scratch { hidden, grad } = scratch;
    hidden.iter_mut().for_each(|h| *h = 0.0);
    grad.iter_mut().for_each(|g| *g = 0.0);
    for &r in rows {
        for (h, x) in hidden.iter_mut().zip(&input[r * dim..(r + 1) * dim]) {
            *h += x;
        }
    }
    let inv = 1.0 / rows.len() as f32;
    hidden.iter_mut().for_each(|h| *h *= inv);

    let mut loss = 0.0;
    let targets = std::iter::once((target, 1.0f32)).chain(negatives.iter().map(|&n| (n, 0.0)));
    for (id, label) in targets {
        let out = &mut output[id * dim..(id + 1) * dim];
        let score: f32 = out.iter().zip(hidden.iter()).map(|(a, b)| a * b).sum();
        let p = sigmoid(score);
        loss -= if label > 0.5 { log_clamped(p) } else { log_clamped(1.0 - p) };
        let alpha = lr * (label - p);
        for ((g, o), h) in grad.iter_mut().zip(out.iter_mut()).zip(hidden.iter()) {
            *g += alpha * *o;
            *o += alpha * h;
        }
    }
    for &r in rows {
        for (x, g) in input[r * dim..(r + 1) * dim].iter_mut().zip(grad.iter()) {
            *x += g;
        }
    }
    loss
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sampler_follows_smoothed_unigram() {
        let sampler = NegativeSampler::new(&[1, 16]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 20_000;
        let hits = (0..n).filter(|_| sampler.sample(&mut rng) == 1).count();
        // 16^0.75 = 8, so P(1) = 8/9.
        let p = hits as f64 / n as f64;
        assert!((p - 8.0 / 9.0).abs() < 0.01, "{p}");
    }

    #[test]
    fn update_lowers_loss_on_repeat() {
        let dim = 4;
        let mut input = vec![0.1, -0.2, 0.05, 0.3, 0.2, 0.1, -0.1, 0.0];
        let mut output = vec![0.0; 8];
        let mut scratch = Scratch::new(dim);
        let first = update(&mut input, &mut output, dim, &[0], 1, &[0], 0.5, &mut scratch);
        let mut last = first;
        for _ in 0..50 {
            last = update(&mut input, &mut output, dim, &[0], 1, &[0], 0.5, &mut scratch);
        }
        assert!(last < first);
    }
}
