//! Deterministic random number generation.
//!
//! Everything randomized in this crate draws from [`Prng`], a thin wrapper
//! over the ChaCha8 stream cipher. The derived distributions (uniform via the
//! top 53 bits, Gaussian via Box-Muller, Poisson via Knuth's product method,
//! Fisher-Yates shuffling) are written out explicitly so a reimplementation in
//! another language can reproduce byte-identical datasets from the same seed.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Seeded deterministic generator; identical seeds yield identical streams on
/// every platform.
#[derive(Debug, Clone)]
pub struct Prng {
    rng: ChaCha8Rng,
    /// Cached second output of the last Box-Muller draw.
    spare_normal: Option<f64>,
}

impl Prng {
    pub fn seed_from_u64(seed: u64) -> Self {
        Prng {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare_normal: None,
        }
    }

    /// Derive an independent generator for a labelled sub-task. Streams with
    /// different labels never overlap and are insensitive to draw order on the
    /// parent.
    pub fn derive(&self, label: u64) -> Prng {
        let mut child = self.rng.clone();
        child.set_stream(label);
        child.set_word_pos(0);
        Prng {
            rng: child,
            spare_normal: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform draw in [0, 1) with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in [lo, hi).
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Unbiased integer draw in [0, n) by rejection on the top bits.
    pub fn uniform_usize(&mut self, n: usize) -> usize {
        assert!(n > 0, "uniform_usize requires n > 0");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX - n + 1) % n;
        loop {
            let x = self.next_u64();
            if x <= zone {
                return (x % n) as usize;
            }
        }
    }

    /// Standard normal draw via Box-Muller; one trig pair yields two values.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        // u1 in (0, 1] so the log is finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Normal draw with the given mean and standard deviation.
    pub fn normal_scaled(&mut self, mean: f64, std_dev: f64) -> f64 {
        mean + std_dev * self.normal()
    }

    /// Poisson draw by Knuth's product-of-uniforms method; adequate for the
    /// small rates used here.
    pub fn poisson(&mut self, lambda: f64) -> u64 {
        assert!(lambda >= 0.0, "poisson rate must be non-negative");
        if lambda == 0.0 {
            return 0;
        }
        let limit = (-lambda).exp();
        let mut k = 0u64;
        let mut p = 1.0;
        loop {
            p *= self.uniform();
            if p <= limit {
                return k;
            }
            k += 1;
        }
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.uniform_usize(i + 1);
            items.swap(i, j);
        }
    }
}
