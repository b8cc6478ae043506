//! Seeded random streams and the samplers used by the benchmark.
//!
//! Every repetition gets its own ChaCha8 stream keyed by a hash of the
//! master seed and the repetition index, so draws never depend on which
//! thread runs which repetition.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed for repetition `rep` under `master`.
pub fn child_seed(master: u64, rep: u64) -> u64 {
    mix64(mix64(master.wrapping_add(0x9e37_79b9_7f4a_7c15)) ^ rep.wrapping_mul(0xd1b5_4a32_d192_ed03))
}

pub struct Stream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    pub fn for_rep(master: u64, rep: u64) -> Self {
        Self::new(child_seed(master, rep))
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal by the Box–Muller transform; the second value of
    /// each pair is kept for the next call.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let t = std::f64::consts::TAU * u2;
        self.spare = Some(r * t.sin());
        r * t.cos()
    }

    /// Gamma(shape, scale) by the Marsaglia–Tsang method without the
    /// squeeze step; shapes below one use the `U^{1/a}` boost.
    pub fn gamma(&mut self, shape: f64, scale: f64) -> f64 {
        if shape < 1.0 {
            let g = self.gamma(shape + 1.0, 1.0);
            return scale * g * self.uniform().powf(1.0 / shape);
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
            if u.ln() < 0.5 * x * x + d - d * v + d * v.ln() {
                return scale * d * v;
            }
        }
    }

    /// Weibull(shape, scale) by the inverse CDF.
    pub fn weibull(&mut self, shape: f64, scale: f64) -> f64 {
        scale * (-(1.0 - self.uniform()).ln()).powf(1.0 / shape)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible() {
        let mut a = Stream::for_rep(42, 7);
        let mut b = Stream::for_rep(42, 7);
        for _ in 0..100 {
            assert_eq!(a.normal().to_bits(), b.normal().to_bits());
        }
        assert_ne!(child_seed(42, 7), child_seed(42, 8));
        assert_ne!(child_seed(42, 7), child_seed(43, 7));
    }

    #[test]
    fn uniform_is_open() {
        let mut s = Stream::new(1);
        for _ in 0..10_000 {
            let u = s.uniform();
            assert!(u > 0.0 && u < 1.0);
        }
    }

    #[test]
    fn gamma_moments() {
        let mut s = Stream::new(9);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| s.gamma(0.5, 2.0)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.02);
    }
}
