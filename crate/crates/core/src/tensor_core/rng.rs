use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Scalar, Tensor};

const U_MIN: f64 = 1e-20;
const U_MAX: f64 = 1.0 - 1e-7;

/// Seeded, platform-independent random stream.
#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent stream derived from this generator's seed.
    pub fn fork(&self, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(self.seed);
        inner.set_stream(stream.wrapping_add(1));
        Self { seed: self.seed, inner }
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn normal(&mut self, mean: f64, std: f64) -> f64 {
        Normal::new(mean, std).expect("finite std").sample(&mut self.inner)
    }

    /// Standard Gumbel(0, 1) draw.
    pub fn gumbel(&mut self) -> f64 {
        gumbel_from_uniform(self.uniform())
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        // Fisher-Yates, spelled out so the permutation depends only on our stream.
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// Inverse-CDF Gumbel transform `-ln(-ln u)` with `u` clamped into
/// `[1e-20, 1 - 1e-7]`.
pub fn gumbel_from_uniform(u: f64) -> f64 {
    let u = u.clamp(U_MIN, U_MAX);
    -(-u.ln()).ln()
}

/// `n` independent Gumbel(0, 1) draws.
pub fn sample_gumbel<F: Scalar>(rng: &mut Rng, n: usize) -> Tensor<F> {
    Tensor::vector((0..n).map(|_| F::from_f64(rng.gumbel())).collect())
}

/// Supplier of Gumbel noise for the relaxed cluster assignments.
pub trait NoiseSource {
    fn gumbel(&mut self, n: usize) -> Vec<f64>;
}

impl NoiseSource for Rng {
    fn gumbel(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| Rng::gumbel(self)).collect()
    }
}

/// Noise that replays the same sequence after [`FrozenNoise::rewind`].
///
/// Used to hold the relaxation fixed while probing a loss by finite
/// differences.
#[derive(Clone, Debug)]
pub struct FrozenNoise {
    rng: Rng,
    drawn: Vec<f64>,
    cursor: usize,
}

impl FrozenNoise {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: Rng::new(seed),
            drawn: Vec::new(),
            cursor: 0,
        }
    }

    pub fn rewind(&mut self) {
        self.cursor = 0;
    }
}

impl NoiseSource for FrozenNoise {
    fn gumbel(&mut self, n: usize) -> Vec<f64> {
        while self.drawn.len() < self.cursor + n {
            let g = self.rng.gumbel();
            self.drawn.push(g);
        }
        let out = self.drawn[self.cursor..self.cursor + n].to_vec();
        self.cursor += n;
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_quantile_maps_to_zero() {
        let u = (-1.0f64).exp();
        assert!(gumbel_from_uniform(u).abs() < 1e-15);
    }

    #[test]
    fn extreme_uniforms_stay_finite() {
        assert!(gumbel_from_uniform(0.0).is_finite());
        assert!(gumbel_from_uniform(1.0).is_finite());
    }

    #[test]
    fn same_seed_same_sequence() {
        let a: Tensor<f32> = sample_gumbel(&mut Rng::new(11), 64);
        let b: Tensor<f32> = sample_gumbel(&mut Rng::new(11), 64);
        assert_eq!(a, b);
        let c: Tensor<f32> = sample_gumbel(&mut Rng::new(12), 64);
        assert_ne!(a, c);
    }

    #[test]
    fn empirical_mean_is_euler_mascheroni() {
        const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
        let mut rng = Rng::new(2024);
        let n = 1_000_000;
        let mean = (0..n).map(|_| rng.gumbel()).sum::<f64>() / n as f64;
        assert!((mean - EULER_GAMMA).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn frozen_noise_replays() {
        let mut noise = FrozenNoise::new(5);
        let first = noise.gumbel(7);
        let more = noise.gumbel(3);
        noise.rewind();
        assert_eq!(noise.gumbel(7), first);
        assert_eq!(noise.gumbel(3), more);
    }

    #[test]
    fn forks_are_distinct_and_reproducible() {
        let base = Rng::new(9);
        let mut a = base.fork(1);
        let mut b = base.fork(2);
        let mut a2 = base.fork(1);
        let xa = a.uniform();
        assert_ne!(xa, b.uniform());
        assert_eq!(xa, a2.uniform());
    }
}
