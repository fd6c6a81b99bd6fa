use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;

/// Seedable PRNG that counts every draw handed out to inference code.
///
/// One call to any `draw_*` method is one RNG call, regardless of how many
/// words the underlying sampler consumes.
pub struct CountingRng {
    inner: ChaCha8Rng,
    calls: u64,
}

impl CountingRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        CountingRng { inner, calls: 0 }
    }

    pub fn calls(&self) -> u64 {
        self.calls
    }

    pub fn uniform(&mut self) -> f64 {
        self.calls += 1;
        self.inner.random::<f64>()
    }

    /// Uniform index in `0..n`. `n` must be positive.
    pub fn index(&mut self, n: usize) -> usize {
        self.calls += 1;
        self.inner.random_range(0..n)
    }

    pub fn int_range(&mut self, lo: i64, hi: i64) -> i64 {
        self.calls += 1;
        self.inner.random_range(lo..=hi)
    }

    pub fn draw<T, D: Distribution<T>>(&mut self, d: &D) -> T {
        self.calls += 1;
        d.sample(&mut self.inner)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = CountingRng::new(7, 0);
        let mut b = CountingRng::new(7, 0);
        let xs: Vec<f64> = (0..5).map(|_| a.uniform()).collect();
        let ys: Vec<f64> = (0..5).map(|_| b.uniform()).collect();
        assert_eq!(xs, ys);
        assert_eq!(a.calls(), 5);
    }

    #[test]
    fn streams_differ() {
        let mut a = CountingRng::new(7, 0);
        let mut b = CountingRng::new(7, 1);
        assert_ne!(a.uniform(), b.uniform());
    }

    #[test]
    fn every_draw_counts_once() {
        let mut r = CountingRng::new(1, 0);
        r.index(10);
        r.int_range(1, 20);
        r.draw(&rand_distr::Normal::new(0.0, 1.0).unwrap());
        assert_eq!(r.calls(), 3);
    }
}
