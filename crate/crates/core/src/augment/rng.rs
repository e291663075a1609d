//! Deterministic 64-bit PRNG for the augmentation suite.
//!
//! All draws come from xorshift64* seeded through one splitmix64 step, so a
//! reimplementation in any language reproduces identical byte streams. No
//! platform or process entropy is consulted anywhere in this module.

/// One splitmix64 step (Steele, Lea & Flood constants).
#[inline]
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// xorshift64* stream: shifts 12/25/27, output multiplier
/// 0x2545F4914F6CDD1D (Vigna).
#[derive(Debug, Clone)]
pub struct Xorshift64Star {
    state: u64,
}

impl Xorshift64Star {
    /// Seeds through splitmix64 so nearby seeds produce unrelated streams.
    pub fn seeded(seed: u64) -> Self {
        let mut state = splitmix64(seed);
        if state == 0 {
            state = 0x9E37_79B9_7F4A_7C15;
        }
        Self { state }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    /// Uniform draw in `[0, bound)`. Modulo bias is negligible for the
    /// small bounds used here (< 2^32).
    #[inline]
    pub fn next_below(&mut self, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        self.next_u64() % bound
    }

    /// Uniform draw in `[lo, hi]`.
    #[inline]
    pub fn next_in_range(&mut self, lo: i64, hi: i64) -> i64 {
        debug_assert!(lo <= hi);
        lo + self.next_below((hi - lo + 1) as u64) as i64
    }

    /// Approximately Gaussian integer delta with standard deviation
    /// `sigma`, built from twelve 16-bit uniforms (Irwin-Hall), so the
    /// whole pipeline stays in integer arithmetic.
    #[inline]
    pub fn next_gauss_delta(&mut self, sigma: u32) -> i32 {
        let mut sum: i64 = 0;
        for _ in 0..12 {
            sum += (self.next_u64() >> 48) as i64;
        }
        // Sum of 12 uniforms over 0..=65535: mean 393210, stddev ~65536.
        let centered = sum - 393_210;
        let scaled = centered * i64::from(sigma);
        let rounded = if scaled >= 0 {
            (scaled + 32_768) >> 16
        } else {
            -((-scaled + 32_768) >> 16)
        };
        rounded as i32
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible() {
        let mut a = Xorshift64Star::seeded(7);
        let mut b = Xorshift64Star::seeded(7);
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn zero_seed_is_usable() {
        let mut rng = Xorshift64Star::seeded(0);
        let first = rng.next_u64();
        let second = rng.next_u64();
        assert_ne!(first, second);
    }

    #[test]
    fn range_draws_stay_in_bounds() {
        let mut rng = Xorshift64Star::seeded(42);
        for _ in 0..10_000 {
            let v = rng.next_in_range(-300, 300);
            assert!((-300..=300).contains(&v));
        }
    }

    #[test]
    fn gauss_delta_moments_are_plausible() {
        let mut rng = Xorshift64Star::seeded(9);
        let n = 100_000;
        let mut sum = 0i64;
        let mut sum_sq = 0i64;
        for _ in 0..n {
            let d = i64::from(rng.next_gauss_delta(15));
            sum += d;
            sum_sq += d * d;
        }
        let mean = sum as f64 / n as f64;
        let var = sum_sq as f64 / n as f64 - mean * mean;
        assert!(mean.abs() < 0.5, "mean {mean}");
        assert!((var.sqrt() - 15.0).abs() < 0.5, "stddev {}", var.sqrt());
    }
}
