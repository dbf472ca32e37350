use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Independent consumers of randomness. Each gets its own ChaCha stream so
/// that changing how often one consumer draws never shifts another.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Substream {
    Split,
    Init,
    Batches,
    Negatives,
    Generator,
    Aggregate,
    Eval,
    Classify,
    Mapper,
    PostTrain,
    Validation,
}

impl Substream {
    fn id(self) -> u64 {
        match self {
            Substream::Split => 1,
            Substream::Init => 2,
            Substream::Batches => 3,
            Substream::Negatives => 4,
            Substream::Generator => 5,
            Substream::Aggregate => 6,
            Substream::Eval => 7,
            Substream::Classify => 8,
            Substream::Mapper => 9,
            Substream::PostTrain => 10,
            Substream::Validation => 11,
        }
    }
}

/// Serializable position of an [`RngStream`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub stream: u64,
    pub word_pos: u128,
}

/// A seeded, platform-independent random stream.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, sub: Substream) -> Self {
        Self::with_stream(seed, sub.id())
    }

    /// A stream with an explicit numeric id, e.g. one per evaluation repetition.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        RngStream {
            seed,
            stream,
            inner,
        }
    }

    /// Derives a child stream, e.g. `sub.child(rep)` per repetition.
    pub fn derive(seed: u64, sub: Substream, index: u64) -> Self {
        Self::with_stream(seed, (sub.id() << 32) | (index & 0xffff_ffff))
    }

    pub fn state(&self) -> RngState {
        RngState {
            seed: self.seed,
            stream: self.stream,
            word_pos: self.inner.get_word_pos(),
        }
    }

    pub fn restore(state: RngState) -> Self {
        let mut s = Self::with_stream(state.seed, state.stream);
        s.inner.set_word_pos(state.word_pos);
        s
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    pub fn coin(&mut self) -> bool {
        self.inner.gen::<bool>()
    }

    /// In-place Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        use rand::seq::SliceRandom;
        items.shuffle(&mut self.inner);
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}

/// Inverse-CDF draw from a probability vector.
pub fn categorical_sample(probs: &[f64], rng: &mut RngStream) -> Result<usize> {
    if probs.is_empty() {
        return Err(Error::invalid("categorical_sample: empty distribution"));
    }
    if let Some(i) = probs.iter().position(|&p| p < 0.0 || !p.is_finite()) {
        return Err(Error::invalid(format!(
            "categorical_sample: invalid probability {} at {i}",
            probs[i]
        )));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "categorical_sample: probabilities sum to {total}"
        )));
    }
    Ok(inverse_cdf(probs, rng.uniform() * total))
}

fn inverse_cdf(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Draws nodes with probability proportional to `degree^{3/4}`.
#[derive(Clone, Debug)]
pub struct DegreeSampler {
    cumulative: Vec<f64>,
}

impl DegreeSampler {
    pub fn new(degrees: &[usize]) -> Result<Self> {
        let mut cumulative = Vec::with_capacity(degrees.len());
        let mut acc = 0.0;
        for &d in degrees {
            acc += (d as f64).powf(0.75);
            cumulative.push(acc);
        }
        if acc <= 0.0 {
            return Err(Error::invalid(
                "degree sampler: every node has degree zero",
            ));
        }
        Ok(DegreeSampler { cumulative })
    }

    pub fn len(&self) -> usize {
        self.cumulative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cumulative.is_empty()
    }

    /// Normalized sampling probabilities.
    pub fn probs(&self) -> Vec<f64> {
        let total = *self.cumulative.last().unwrap();
        let mut prev = 0.0;
        self.cumulative
            .iter()
            .map(|&c| {
                let p = (c - prev) / total;
                prev = c;
                p
            })
            .collect()
    }

    pub fn sample(&self, rng: &mut RngStream) -> usize {
        let total = *self.cumulative.last().unwrap();
        let u = rng.uniform() * total;
        // first index with cumulative > u; zero-degree nodes have an empty interval
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.cumulative.len() - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_hot_always_selected() {
        let mut rng = RngStream::new(1, Substream::Generator);
        for _ in 0..100 {
            assert_eq!(categorical_sample(&[0.0, 0.0, 1.0, 0.0], &mut rng).unwrap(), 2);
        }
    }

    #[test]
    fn uniform_frequencies() {
        let mut rng = RngStream::new(7, Substream::Generator);
        let mut counts = [0usize; 4];
        let n = 100_000;
        for _ in 0..n {
            counts[categorical_sample(&[0.25; 4], &mut rng).unwrap()] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 0.25).abs() < 0.01, "{counts:?}");
        }
    }

    #[test]
    fn same_state_same_draw() {
        let mut a = RngStream::new(3, Substream::Eval);
        a.uniform();
        let st = a.state();
        let x = categorical_sample(&[0.2, 0.3, 0.5], &mut a).unwrap();
        let mut b = RngStream::restore(st);
        assert_eq!(categorical_sample(&[0.2, 0.3, 0.5], &mut b).unwrap(), x);
    }

    #[test]
    fn rejects_bad_distributions() {
        let mut rng = RngStream::new(0, Substream::Eval);
        assert!(categorical_sample(&[-0.1, 1.1], &mut rng).is_err());
        assert!(categorical_sample(&[0.2, 0.2], &mut rng).is_err());
        assert!(categorical_sample(&[], &mut rng).is_err());
    }

    #[test]
    fn substreams_are_independent() {
        let mut a = RngStream::new(5, Substream::Negatives);
        let mut b = RngStream::new(5, Substream::Generator);
        assert_ne!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn degree_sampler_probabilities() {
        let s = DegreeSampler::new(&[1, 16]).unwrap();
        let p = s.probs();
        assert!((p[0] - 1.0 / 9.0).abs() < 1e-12);
        assert!((p[1] - 8.0 / 9.0).abs() < 1e-12);
        let eq = DegreeSampler::new(&[3, 3, 3]).unwrap().probs();
        assert!(eq.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-12));
        assert!(DegreeSampler::new(&[0, 0]).is_err());
    }

    #[test]
    fn zero_degree_never_drawn() {
        let s = DegreeSampler::new(&[0, 2, 0, 5, 0]).unwrap();
        let mut rng = RngStream::new(9, Substream::Negatives);
        for _ in 0..10_000 {
            let v = s.sample(&mut rng);
            assert!(v == 1 || v == 3);
        }
    }
}
