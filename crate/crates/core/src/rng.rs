//! Seeded random streams.
//!
//! Every random quantity in the crate is drawn from [`SeededRng`], a PCG32
//! generator (64-bit state, XSH-RR output) with a fixed stream constant. The
//! conversions on top of the raw `u32` stream are fixed here so that any port
//! reproduces identical sequences:
//!
//! * `next_f64`: the 53-bit integer `((a << 32) | b) >> 11` times `2^-53`,
//!   where `a` then `b` are consecutive `u32` draws.
//! * `normal`: Box–Muller on two uniforms `u1, u2` (in that order),
//!   `sqrt(-2 ln(1 - u1)) * cos(2π u2)`; the paired sine value is cached and
//!   returned by the next call.
//! * `derive_seed`: SplitMix64 finalizer applied to `seed ^ (tag * golden)`.

use rand_core::Rng;
use rand_pcg::Pcg32;

const STREAM: u64 = 0x0a02_bdbf_7bb3_c0a7;

/// Deterministic random stream used for initialization, point offsets and scale draws.
#[derive(Clone, Debug)]
pub struct SeededRng {
    inner: Pcg32,
    spare_normal: Option<f64>,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: Pcg32::new(seed, STREAM),
            spare_normal: None,
        }
    }

    pub fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        let hi = self.inner.next_u32() as u64;
        let lo = self.inner.next_u32() as u64;
        ((hi << 32 | lo) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `[low, high]`.
    pub fn uniform(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.next_f64()
    }

    /// Standard normal variate.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.next_f64();
        let u2 = self.next_f64();
        let radius = (-2.0 * (1.0 - u1).ln()).sqrt();
        let angle = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(radius * angle.sin());
        radius * angle.cos()
    }

    /// Uniform integer in `0..n` (n > 0), by rejection on the 32-bit stream.
    pub fn below(&mut self, n: u32) -> u32 {
        assert!(n > 0);
        let zone = u32::MAX - (u32::MAX % n);
        loop {
            let x = self.next_u32();
            if x < zone {
                return x % n;
            }
        }
    }
}

/// Derives an independent sub-seed for a named purpose.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
