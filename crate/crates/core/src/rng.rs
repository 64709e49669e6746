//! Counter-based random numbers: every draw is a pure function of a key and a
//! counter, so lattice sites can be sampled lazily and in any order.

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline]
fn absorb(h: u64, word: u64) -> u64 {
    mix(h ^ mix(word.wrapping_add(GOLDEN)))
}

/// Address of one noise atom `e_{k,i,j}` in replication `r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub master_seed: u64,
    pub k: u32,
    pub i: i64,
    pub j: i64,
    pub replication: u64,
}

impl StreamKey {
    pub fn new(master_seed: u64, k: u32, i: i64, j: i64, replication: u64) -> Self {
        Self { master_seed, k, i, j, replication }
    }

    pub fn hash(&self) -> u64 {
        let mut h = mix(self.master_seed ^ 0x5851_f42d_4c95_7f2d);
        h = absorb(h, self.k as u64);
        h = absorb(h, self.i as u64);
        h = absorb(h, self.j as u64);
        absorb(h, self.replication)
    }

    /// Uniform draw in `[0, 1)` attached to this key.
    pub fn uniform(&self) -> f64 {
        to_unit(self.hash())
    }
}

#[inline]
pub fn to_unit(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// A stream of uniforms indexed by a counter (SplitMix64 over a keyed state).
#[derive(Debug, Clone)]
pub struct CounterStream {
    key: u64,
    counter: u64,
}

impl CounterStream {
    pub fn new(key: u64) -> Self {
        Self { key, counter: 0 }
    }

    /// Stream derived from an arbitrary list of words.
    pub fn from_words(words: &[u64]) -> Self {
        let mut h = mix(0x2545_f491_4f6c_dd1d);
        for &w in words {
            h = absorb(h, w);
        }
        Self::new(h)
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform in `[0, 1)`.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        to_unit(self.next_u64())
    }

    /// Uniform in `(0, 1]`.
    #[inline]
    pub fn next_open(&mut self) -> f64 {
        1.0 - self.next_f64()
    }

    /// Uniform integer in `[0, n)` by rejection.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        let zone = u64::MAX - u64::MAX % n;
        loop {
            let x = self.next_u64();
            if x < zone {
                return x % n;
            }
        }
    }

    /// Standard normal via Box-Muller (cosine branch only).
    pub fn next_normal(&mut self) -> f64 {
        let u1 = self.next_open();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}
