//! Counter-based deterministic random number generator.
//!
//! State is exactly `(seed, counter)`, so it serializes into checkpoints and
//! restores bit-for-bit. Independent streams are derived from a parent seed
//! plus a tag list, which lets training code key a fresh stream off
//! `(purpose, step, item)` instead of threading one long-lived stream through
//! everything — that is what makes resume-from-checkpoint exactly reproducible.

use serde::{Deserialize, Serialize};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rng {
    seed: u64,
    counter: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { seed, counter: 0 }
    }

    pub fn state(&self) -> (u64, u64) {
        (self.seed, self.counter)
    }

    pub fn from_state(seed: u64, counter: u64) -> Self {
        Rng { seed, counter }
    }

    /// Derive an independent stream from this generator's seed and a tag list.
    /// Does not consume any state of `self`.
    pub fn derive(&self, tags: &[u64]) -> Rng {
        let mut s = self.seed;
        for (i, &t) in tags.iter().enumerate() {
            s = mix(s ^ t.wrapping_add(GOLDEN.wrapping_mul(i as u64 + 1)));
        }
        Rng::new(s)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix(self.seed.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, n). `n` must be nonzero.
    pub fn next_below(&mut self, n: usize) -> usize {
        assert!(n > 0, "next_below(0)");
        (self.next_u64() % n as u64) as usize
    }

    /// Standard normal via Box-Muller (cosine branch only, stateless).
    pub fn next_normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64(); // (0, 1]
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.next_below(i + 1);
            xs.swap(i, j);
        }
    }

    /// Sample `k` distinct indices from 0..n, returned in ascending order.
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "sample_indices: k={k} > n={n}");
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.next_below(n - i);
            pool.swap(i, j);
        }
        let mut out = pool[..k].to_vec();
        out.sort_unstable();
        out
    }
}
