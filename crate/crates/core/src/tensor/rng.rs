//! Seeded randomness.
//!
//! Every stream is a ChaCha8 generator seeded through
//! `rand_core::SeedableRng::seed_from_u64`, which is specified to be
//! portable across platforms. Gaussian draws use `rand_distr::StandardNormal`
//! and Dirichlet vectors are `k` independent `Gamma(alpha, 1)` draws
//! normalized to sum 1.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

/// Role constants mixed into sub-seeds so that independent purposes never
/// share a stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamRole {
    ModelInit = 0x6d6f_6465_6c00_0000,
    ClientInit = 0x636c_6e74_0000_0000,
    Shuffle = 0x7368_7566_0000_0000,
    Partition = 0x7061_7274_0000_0000,
    Participation = 0x7061_7263_0000_0000,
    Dataset = 0x6461_7461_0000_0000,
}

/// `root ⊕ role ⊕ id`. Client and round ids stay below 2³², where the role
/// constants are all zero, so distinct (role, id) pairs never collide.
pub fn derive_seed(root: u64, role: StreamRole, id: u64) -> u64 {
    root ^ (role as u64) ^ id
}

/// Resumable position of a [`SeededRng`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct RngState {
    pub key: [u8; 32],
    /// Stream position in 32-bit words, stored as a decimal string in JSON.
    #[serde(with = "u128_string")]
    pub word_pos: u128,
}

mod u128_string {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u128, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u128, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeededRng {
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn for_role(root: u64, role: StreamRole, id: u64) -> Self {
        Self::new(derive_seed(root, role, id))
    }

    pub fn state(&self) -> RngState {
        RngState {
            key: self.inner.get_seed(),
            word_pos: self.inner.get_word_pos(),
        }
    }

    pub fn from_state(state: &RngState) -> Self {
        let mut inner = ChaCha8Rng::from_seed(state.key);
        inner.set_word_pos(state.word_pos);
        SeededRng { inner }
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.uniform()
    }

    pub fn gaussian(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut self.inner);
        idx
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }

    /// Index drawn with probability proportional to `weights`.
    pub fn categorical(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        let mut target = self.uniform() * total;
        for (i, &w) in weights.iter().enumerate() {
            if target < w {
                return i;
            }
            target -= w;
        }
        weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
    }

    pub fn gamma(&mut self, shape: f64) -> f64 {
        Gamma::new(shape, 1.0)
            .expect("gamma shape must be positive and finite")
            .sample(&mut self.inner)
    }

    /// Symmetric Dirichlet over `k` categories.
    pub fn dirichlet(&mut self, alpha: f64, k: usize) -> Vec<f64> {
        let mut draws: Vec<f64> = (0..k).map(|_| self.gamma(alpha)).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 && total.is_finite() {
            draws.iter_mut().for_each(|v| *v /= total);
        } else {
            // Every gamma draw underflowed (tiny alpha): put all mass on the largest.
            let argmax = draws
                .iter()
                .enumerate()
                .fold(0, |best, (i, &v)| if v > draws[best] { i } else { best });
            draws.iter_mut().for_each(|v| *v = 0.0);
            draws[argmax] = 1.0;
        }
        draws
    }
}
