//! Seeded randomness.
//!
//! ChaCha8 is a counter-mode stream cipher, so a generator is fully described
//! by its 256-bit key and a block counter. Keys are expanded from a 64-bit seed
//! with SplitMix64, and child generators hash their path into a fresh seed, so
//! `Rng::new(s).child(&[d, m, i])` is the same stream regardless of how many
//! draws the parent has made or which thread asks.

use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::matcore::Mat;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Order-sensitive hash of a seed and a path of integers.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    let mut h = splitmix64(seed);
    for &p in path {
        h = splitmix64(h ^ splitmix64(p.wrapping_add(GOLDEN)));
    }
    h
}

#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Rng {
        let mut key = [0u8; 32];
        let mut s = seed;
        for chunk in key.chunks_mut(8) {
            s = splitmix64(s);
            chunk.copy_from_slice(&s.to_le_bytes());
        }
        Rng {
            seed,
            inner: ChaCha8Rng::from_seed(key),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent generator for a sub-task; does not advance `self`.
    pub fn child(&self, path: &[u64]) -> Rng {
        Rng::new(derive_seed(self.seed, path))
    }

    /// Fresh seed drawn from this stream (advances it).
    pub fn split(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn sign(&mut self) -> f64 {
        if self.inner.random::<bool>() {
            1.0
        } else {
            -1.0
        }
    }

    /// Uniform in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn normal_vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.normal()).collect()
    }

    /// Uniformly random `k`-subset of `0..n`, sorted.
    pub fn subset(&mut self, n: usize, k: usize) -> Vec<usize> {
        let mut idx = rand::seq::index::sample(&mut self.inner, n, k).into_vec();
        idx.sort_unstable();
        idx
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        use rand::seq::SliceRandom;
        items.shuffle(&mut self.inner);
    }
}

impl RngCore for Rng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// i.i.d. N(0,1) entries.
pub fn gaussian(rng: &mut Rng, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.normal())
}

/// i.i.d. uniform signs.
pub fn rademacher(rng: &mut Rng, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.sign())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn determinism() {
        let a = gaussian(&mut Rng::new(0), 5, 7);
        let b = gaussian(&mut Rng::new(0), 5, 7);
        assert_eq!(a.as_slice(), b.as_slice());
        let c = gaussian(&mut Rng::new(1), 5, 7);
        assert_ne!(a.as_slice(), c.as_slice());
    }

    #[test]
    fn children_ignore_parent_position() {
        let mut parent = Rng::new(42);
        let before = parent.child(&[3, 4]).normal();
        parent.normal();
        parent.normal();
        assert_eq!(parent.child(&[3, 4]).normal(), before);
        assert_ne!(parent.child(&[4, 3]).normal(), before);
    }

    #[test]
    fn derive_seed_is_order_sensitive() {
        assert_ne!(derive_seed(1, &[2, 3]), derive_seed(1, &[3, 2]));
        assert_ne!(derive_seed(1, &[]), derive_seed(1, &[0]));
        assert_eq!(derive_seed(9, &[1, 2, 3]), derive_seed(9, &[1, 2, 3]));
    }

    #[test]
    fn normal_moments() {
        let mut rng = Rng::new(7);
        let n = 100_000;
        let xs = rng.normal_vec(n);
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn rademacher_signs() {
        let r = rademacher(&mut Rng::new(3), 20, 20);
        assert!(r.as_slice().iter().all(|&v| v == 1.0 || v == -1.0));
        let plus = r.as_slice().iter().filter(|&&v| v > 0.0).count();
        assert!((150..250).contains(&plus));
    }

    #[test]
    fn subset_is_sorted_and_distinct() {
        let mut rng = Rng::new(11);
        let s = rng.subset(50, 10);
        assert_eq!(s.len(), 10);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        assert!(s.iter().all(|&i| i < 50));
    }
}
