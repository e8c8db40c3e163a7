//! Counter-based deterministic generator.
//!
//! Output `i` is a pure function of `(key, i)`, so streams can be forked
//! and replayed without carrying hidden state across machines.

use crate::hash::{hash64_pair, mix64};
use crate::math;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(key: u64) -> Self {
        Self { key, counter: 0 }
    }

    /// Independent child stream.
    pub fn fork(&self, stream: u64) -> Self {
        Self::new(hash64_pair(self.key, stream))
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    pub fn next_u64(&mut self) -> u64 {
        let c = self.counter;
        self.counter = self.counter.wrapping_add(1);
        let z = mix64(c.wrapping_mul(GOLDEN) ^ self.key);
        mix64(z ^ self.key.rotate_left(32))
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f32(&mut self) -> f32 {
        (self.next_u64() >> 40) as f32 * (1.0 / (1u32 << 24) as f32)
    }

    pub fn uniform(&mut self, lo: f32, hi: f32) -> f32 {
        lo + (hi - lo) * self.next_f32()
    }

    pub fn bernoulli(&mut self, p: f32) -> bool {
        self.next_f32() < p
    }

    /// Unbiased integer in `[0, n)`. Panics if `n == 0`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        // Lemire's multiply-shift with rejection.
        let mut m = u128::from(self.next_u64()) * u128::from(n);
        let mut low = m as u64;
        if low < n {
            let threshold = n.wrapping_neg() % n;
            while low < threshold {
                m = u128::from(self.next_u64()) * u128::from(n);
                low = m as u64;
            }
        }
        (m >> 64) as u64
    }

    pub fn below_usize(&mut self, n: usize) -> usize {
        self.below(n as u64) as usize
    }

    /// Standard normal via Box-Muller (one draw per call, the pair is not cached
    /// so the stream position stays a simple function of the call count).
    pub fn normal(&mut self) -> f32 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let r = libm::sqrt(-2.0 * libm::log(u1));
        (r * libm::cos(core::f64::consts::TAU * u2)) as f32
    }

    /// Gamma(shape, 1) by Marsaglia-Tsang.
    pub fn gamma(&mut self, shape: f32) -> f32 {
        if shape < 1.0 {
            let u = self.next_f32().max(f32::MIN_POSITIVE);
            return self.gamma(shape + 1.0) * math::pow(u, 1.0 / shape);
        }
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / math::sqrt(9.0 * d);
        loop {
            let x = self.normal();
            let v = 1.0 + c * x;
            if v <= 0.0 {
                continue;
            }
            let v = v * v * v;
            let u = self.next_f32();
            if u < 1.0 - 0.0331 * x * x * x * x
                || math::ln(u.max(f32::MIN_POSITIVE)) < 0.5 * x * x + d * (1.0 - v + math::ln(v))
            {
                return d * v;
            }
        }
    }

    pub fn beta(&mut self, a: f32, b: f32) -> f32 {
        let x = self.gamma(a);
        let y = self.gamma(b);
        if x + y == 0.0 {
            return 0.5;
        }
        x / (x + y)
    }

    /// Fisher-Yates shuffle of the first `prefix` positions: after the call
    /// `items[..prefix]` is a uniform sample without replacement, in random order.
    pub fn partial_shuffle<T>(&mut self, items: &mut [T], prefix: usize) {
        let n = items.len();
        for i in 0..prefix.min(n) {
            let j = i + self.below_usize(n - i);
            items.swap(i, j);
        }
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        let n = items.len();
        self.partial_shuffle(items, n);
    }
}
