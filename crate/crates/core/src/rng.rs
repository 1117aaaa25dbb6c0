//! Counter-based random streams.
//!
//! Every random quantity in the crate is drawn from a [`Stream`] identified by
//! a 64-bit key. Keys are derived from a master seed and a path of indices
//! (cell, replication, purpose, asset, ...) with [`derive_key`], so any draw can
//! be reproduced from its coordinates alone and streams can be evaluated on any
//! thread in any order.
//!
//! Construction:
//!
//! * `mix64` is the SplitMix64 finalizer (multipliers `0xBF58476D1CE4E5B9`,
//!   `0x94D049BB133111EB`, shifts 30/27/31).
//! * `derive_key(k, i) = mix64(k ^ mix64(i + 0x9E3779B97F4A7C15))`; the root key
//!   of a master seed is `mix64(seed ^ 0x5A45524F414C5048)`.
//! * the `c`-th output (c = 1, 2, ...) of stream `k` is
//!   `mix64(mix64(c * 0x9E3779B97F4A7C15 ^ k) + k)`.
//!
//! Uniforms use the top 53 bits, normals use the Marsaglia polar method, gamma
//! variates use Marsaglia-Tsang and Student-t variates are normal / chi ratios.

use crate::error::{Error, Result};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const ROOT_DOMAIN: u64 = 0x5A45_524F_414C_5048;

/// Purpose tags used as path components so that independent uses of one seed
/// never share a stream.
pub mod purpose {
    pub const OMEGA: u64 = 1;
    pub const DERAND: u64 = 2;
    pub const LOADINGS: u64 = 10;
    pub const OMITTED_LOADINGS: u64 = 11;
    pub const ALPHAS: u64 = 12;
    pub const FACTOR_INNOVATIONS: u64 = 13;
    pub const OMITTED_INNOVATIONS: u64 = 14;
    pub const IDIOSYNCRATIC: u64 = 15;
    pub const GARCH_PARAMS: u64 = 16;
    pub const RISK_PREMIA: u64 = 17;
    pub const SUBSETS: u64 = 18;
    pub const DGP: u64 = 30;
    pub const TEST: u64 = 31;
    pub const WINDOW: u64 = 32;
}

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Root key for a master seed.
#[inline]
pub fn root_key(master: u64) -> u64 {
    mix64(master ^ ROOT_DOMAIN)
}

/// Key of child `index` under `parent`.
#[inline]
pub fn derive_key(parent: u64, index: u64) -> u64 {
    mix64(parent ^ mix64(index.wrapping_add(GOLDEN_GAMMA)))
}

/// Seed derived from a master seed and a path; the same function backs
/// replication, cell and window sub-seeds.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    StreamKey::new(master, path).key()
}

/// A master seed together with the path that selects one stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamKey {
    master: u64,
    path: Vec<u64>,
    key: u64,
}

impl StreamKey {
    pub fn new(master: u64, path: &[u64]) -> Self {
        let key = path.iter().fold(root_key(master), |k, &i| derive_key(k, i));
        Self {
            master,
            path: path.to_vec(),
            key,
        }
    }

    pub fn child(&self, index: u64) -> Self {
        let mut path = self.path.clone();
        path.push(index);
        Self {
            master: self.master,
            path,
            key: derive_key(self.key, index),
        }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    pub fn path(&self) -> &[u64] {
        &self.path
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    pub fn stream(&self) -> Stream {
        Stream::from_key(self.key)
    }
}

/// Counter-mode generator over one key.
#[derive(Debug, Clone)]
pub struct Stream {
    key: u64,
    counter: u64,
    spare: Option<f64>,
}

impl Stream {
    pub fn from_key(key: u64) -> Self {
        Self {
            key,
            counter: 0,
            spare: None,
        }
    }

    /// Number of 64-bit words consumed so far.
    pub fn offset(&self) -> u64 {
        self.counter
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(mix64(self.counter.wrapping_mul(GOLDEN_GAMMA) ^ self.key).wrapping_add(self.key))
    }

    /// Uniform on the open interval (0, 1).
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on (lo, hi).
    #[inline]
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Unbiased integer in `0..bound` (bound > 0), by rejection.
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "empty range");
        let zone = u64::MAX - (u64::MAX - bound + 1) % bound;
        loop {
            let x = self.next_u64();
            if x <= zone {
                return x % bound;
            }
        }
    }

    /// Standard normal via the polar method. The second variate of each
    /// accepted pair is kept for the next call.
    #[inline]
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let (a, b) = self.polar_pair();
        self.spare = Some(b);
        a
    }

    /// One normal from a fresh pair, discarding the partner. Used where each
    /// stream yields a single draw.
    #[inline]
    pub fn single_normal(&mut self) -> f64 {
        self.polar_pair().0
    }

    #[inline]
    fn polar_pair(&mut self) -> (f64, f64) {
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let m = (-2.0 * s.ln() / s).sqrt();
                return (u * m, v * m);
            }
        }
    }

    /// Gamma(shape, 1) by Marsaglia-Tsang; shapes below one use the
    /// `U^(1/shape)` boost.
    pub fn gamma(&mut self, shape: f64) -> f64 {
        debug_assert!(shape > 0.0);
        if shape < 1.0 {
            let g = self.gamma(shape + 1.0);
            return g * self.uniform().powf(1.0 / shape);
        }
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / (9.0 * d).sqrt();
        loop {
            let x = self.normal();
            let v = 1.0 + c * x;
            if v <= 0.0 {
                continue;
            }
            let v = v * v * v;
            let u = self.uniform();
            let x2 = x * x;
            if u < 1.0 - 0.0331 * x2 * x2 || u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
                return d * v;
            }
        }
    }

    /// Student-t with `df` degrees of freedom and unit scale.
    pub fn student_t(&mut self, df: f64) -> f64 {
        let z = self.normal();
        let chi2 = 2.0 * self.gamma(0.5 * df);
        z / (chi2 / df).sqrt()
    }
}

/// `count` i.i.d. standard normals from `stream`.
pub fn gaussian(stream: &mut Stream, count: usize) -> Vec<f64> {
    (0..count).map(|_| stream.normal()).collect()
}

/// `count` i.i.d. t(df) draws (unit scale) from `stream`.
pub fn student_t(stream: &mut Stream, df: f64, count: usize) -> Result<Vec<f64>> {
    if !(df > 2.0) || !df.is_finite() {
        return Err(Error::InvalidDf(df));
    }
    Ok((0..count).map(|_| stream.student_t(df)).collect())
}

/// The perturbation `omega_i`, i = 0..n, for one randomized test.
///
/// Draw `i` comes from its own stream `derive_key(derive_key(root(seed), OMEGA), i)`,
/// so the vector can be evaluated index by index in any order.
pub fn omega(seed: u64, n: usize) -> Vec<f64> {
    let base = derive_key(root_key(seed), purpose::OMEGA);
    (0..n)
        .map(|i| Stream::from_key(derive_key(base, i as u64)).single_normal())
        .collect()
}

/// Running maximum of `psi[i] + omega_i` without materializing the vectors.
/// Returns `(max, argmax)`; the first index wins ties.
pub fn perturbed_max<F: Fn(usize) -> f64>(seed: u64, n: usize, psi: F) -> (f64, usize) {
    let base = derive_key(root_key(seed), purpose::OMEGA);
    let mut best = f64::NEG_INFINITY;
    let mut arg = 0;
    for i in 0..n {
        let z = psi(i) + Stream::from_key(derive_key(base, i as u64)).single_normal();
        if z > best {
            best = z;
            arg = i;
        }
    }
    (best, arg)
}
