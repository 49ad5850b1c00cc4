//! Seeded, splittable random streams.
//!
//! A stream is a ChaCha8 generator keyed by a 64-bit seed. Child streams are
//! keyed by mixing the parent seed with a label through SplitMix64, so the
//! draws a worker sees depend only on `(seed, label path)` and never on
//! scheduling order.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    rng: ChaCha8Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn label_hash(label: &str) -> u64 {
    // FNV-1a; stable across platforms and releases, unlike `DefaultHasher`.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream identified by a text label.
    pub fn derive(&self, label: &str) -> RngStream {
        RngStream::new(splitmix64(self.seed ^ splitmix64(label_hash(label))))
    }

    /// Independent child stream identified by a label and an index, e.g.
    /// `("individual", 17)`.
    pub fn derive_indexed(&self, label: &str, index: u64) -> RngStream {
        RngStream::new(splitmix64(
            self.seed ^ splitmix64(label_hash(label) ^ splitmix64(index)),
        ))
    }

    /// Uniform draw in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.unit() < p
    }

    /// Uniform index in `0..n`. Panics if `n == 0`.
    pub fn below(&mut self, n: usize) -> usize {
        self.rng.gen_range(0..n)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.gen()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.rng);
    }

    /// Standard normal draw (Box–Muller).
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.unit();
        let u2 = self.unit();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_sequence() {
        let mut a = RngStream::new(42);
        let mut b = RngStream::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn derived_streams_are_reproducible_and_distinct() {
        let p = RngStream::new(1);
        let mut a1 = p.derive("split");
        let mut a2 = p.derive("split");
        let mut b = p.derive("inject");
        let x: Vec<u64> = (0..4).map(|_| a1.next_u64()).collect();
        let y: Vec<u64> = (0..4).map(|_| a2.next_u64()).collect();
        let z: Vec<u64> = (0..4).map(|_| b.next_u64()).collect();
        assert_eq!(x, y);
        assert_ne!(x, z);
        assert_ne!(p.derive_indexed("ind", 0).seed(), p.derive_indexed("ind", 1).seed());
    }

    #[test]
    fn derivation_ignores_parent_draw_position() {
        let mut p = RngStream::new(9);
        let before = p.derive("x").seed();
        p.next_u64();
        assert_eq!(before, p.derive("x").seed());
    }

    #[test]
    fn frozen_first_draws() {
        // Pinned so a silent change of generator or seeding breaks loudly.
        let mut r = RngStream::new(0);
        assert_eq!(r.next_u64(), 13080132717333068652);
        assert_eq!(RngStream::new(0).derive("split").seed(), 12960832747649093366);
    }
}
