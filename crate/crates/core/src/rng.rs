//! Deterministic, platform-independent pseudo-random numbers.
//!
//! All randomness in this crate flows through [`Rng`], an implementation of
//! xoshiro256++ (Blackman & Vigna) seeded through SplitMix64. Both algorithms
//! are fixed by their published reference constants, so a given seed produces
//! the same stream on every platform, which is what makes subsets, training
//! runs, and Monte-Carlo estimates reproducible byte-for-byte.

/// SplitMix64 step; used for seeding and for deriving per-task streams.
#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// xoshiro256++ generator.
#[derive(Clone, Debug)]
pub struct Rng {
    s: [u64; 4],
}

impl Rng {
    /// Seed the full 256-bit state from a single word via SplitMix64,
    /// as recommended in the xoshiro reference implementation.
    pub fn seed_from_u64(seed: u64) -> Self {
        let mut sm = seed;
        let s = [
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
        ];
        Rng { s }
    }

    /// Derive an independent stream for a subtask. The ids are folded into
    /// the seed word through SplitMix64 before state expansion, so
    /// `(seed, ids)` fully determines the stream regardless of scheduling.
    pub fn stream(seed: u64, ids: &[u64]) -> Self {
        let mut sm = seed;
        let mut word = splitmix64(&mut sm);
        for &id in ids {
            let mut mix = word ^ id;
            word = splitmix64(&mut mix);
        }
        Rng::seed_from_u64(word)
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[0]
            .wrapping_add(self.s[3])
            .rotate_left(23)
            .wrapping_add(self.s[0]);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    #[inline]
    pub fn range_f64(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in [0, n) by rejection sampling (unbiased).
    #[inline]
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0) is undefined");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }

    /// Uniform integer in [lo, hi] inclusive.
    #[inline]
    pub fn range_usize(&mut self, lo: usize, hi: usize) -> usize {
        lo + self.below(hi - lo + 1)
    }

    /// A Rademacher sign, +1.0 or -1.0 with equal probability.
    #[inline]
    pub fn next_sign(&mut self) -> f64 {
        if self.next_u64() & 1 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Standard normal deviate via the Box-Muller transform. One uniform
    /// pair per call; the sine branch is discarded to keep the
    /// call-to-stream mapping simple.
    pub fn next_normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64(); // (0, 1]; avoids ln(0)
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i + 1);
            xs.swap(i, j);
        }
    }

    /// `k` distinct indices sampled without replacement from `[0, pool)`,
    /// by partial Fisher-Yates over the index array. The returned order is
    /// part of the contract: it is the draw order.
    pub fn sample_indices(&mut self, pool: usize, k: usize) -> Vec<usize> {
        assert!(k <= pool, "cannot sample {k} from pool of {pool}");
        let mut idx: Vec<usize> = (0..pool).collect();
        for i in 0..k {
            let j = self.range_usize(i, pool - 1);
            idx.swap(i, j);
        }
        idx.truncate(k);
        idx
    }
}
