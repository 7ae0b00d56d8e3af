//! Counter-based Gaussian noise.
//!
//! Every draw is a pure function of `(seed, replica, step, coordinate, stream)`, so
//! trajectories can be replayed bit-for-bit and different methods can share the
//! same noise realisation (common random numbers) without threading RNG state
//! through the integrators.

use serde::{Deserialize, Serialize};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finaliser.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn hash(words: &[u64]) -> u64 {
    let mut h = 0x6A09_E667_F3BC_C909u64;
    for &w in words {
        h = mix64(h ^ w.wrapping_add(GOLDEN));
    }
    h
}

/// Child seed for the sub-experiment `tag` of a run seeded with `seed`.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    hash(&[seed, tag, 0xD1B5_4A32_D192_ED03])
}

/// Uniform on the open interval (0, 1).
#[inline]
fn to_open_unit(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Stream tags separating independent uses of the same counters.
pub mod stream {
    pub const GRADIENT: u64 = 0;
    pub const BRIDGE: u64 = 1;
    pub const AUXILIARY: u64 = 2;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    #[default]
    GaussianIid,
    /// Every draw is zero; turns SGD into GD and the SDE into gradient flow.
    Zero,
}

/// Source of the gradient noise and Brownian increments of one replica.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseModel {
    #[serde(default)]
    pub kind: NoiseKind,
    pub seed: u64,
    pub replica: u64,
}

impl NoiseModel {
    pub fn new(seed: u64, replica: u64) -> Self {
        Self { kind: NoiseKind::GaussianIid, seed, replica }
    }

    pub fn zero() -> Self {
        Self { kind: NoiseKind::Zero, seed: 0, replica: 0 }
    }

    /// Standard normal draw at `(step, coord)` on the given stream.
    #[inline]
    pub fn normal_on(&self, stream: u64, step: u64, coord: u64) -> f64 {
        if self.kind == NoiseKind::Zero {
            return 0.0;
        }
        let h1 = hash(&[self.seed, self.replica, stream, step, coord, 0]);
        let h2 = mix64(h1 ^ GOLDEN);
        let u1 = to_open_unit(h1);
        let u2 = to_open_unit(h2);
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Standard normal draw on the gradient-noise stream.
    #[inline]
    pub fn normal(&self, step: u64, coord: u64) -> f64 {
        self.normal_on(stream::GRADIENT, step, coord)
    }

    /// Uniform draw in (0, 1) at `(step, coord)` on the given stream.
    #[inline]
    pub fn uniform_on(&self, stream: u64, step: u64, coord: u64) -> f64 {
        to_open_unit(hash(&[self.seed, self.replica, stream, step, coord, 1]))
    }

    /// Fill `out` with the noise vector for `step`.
    #[inline]
    pub fn fill(&self, step: u64, out: &mut [f64]) {
        for (c, v) in out.iter_mut().enumerate() {
            *v = self.normal(step, c as u64);
        }
    }
}

/// Deterministic sampler used for probes, random test functions and start vectors.
///
/// Unlike [`NoiseModel`] it is sequential, but each value is still a pure
/// function of `(seed, counter)`.
#[derive(Debug, Clone)]
pub struct Sampler {
    seed: u64,
    counter: u64,
}

impl Sampler {
    pub fn new(seed: u64) -> Self {
        Self { seed, counter: 0 }
    }

    pub fn uniform(&mut self) -> f64 {
        self.counter += 1;
        to_open_unit(hash(&[self.seed, 0xA5A5, self.counter]))
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replay_is_exact() {
        let a = NoiseModel::new(7, 3);
        let b = NoiseModel::new(7, 3);
        for step in 0..100 {
            assert_eq!(a.normal(step, 1).to_bits(), b.normal(step, 1).to_bits());
        }
        assert_ne!(a.normal(0, 0), NoiseModel::new(7, 4).normal(0, 0));
        assert_ne!(a.normal(0, 0), a.normal(0, 1));
        assert_ne!(a.normal(0, 0), a.normal_on(stream::BRIDGE, 0, 0));
    }

    #[test]
    fn first_two_moments() {
        let n = 100_000u64;
        let noise = NoiseModel::new(2024, 0);
        for coord in 0..2 {
            let (mut sum, mut sq) = (0.0, 0.0);
            for k in 0..n {
                let z = noise.normal(k, coord);
                sum += z;
                sq += z * z;
            }
            let mean = sum / n as f64;
            let var = sq / n as f64 - mean * mean;
            assert!(mean.abs() < 3.0 / (n as f64).sqrt(), "mean {mean}");
            assert!((var - 1.0).abs() < 0.05, "var {var}");
        }
    }

    #[test]
    fn zero_kind_is_silent() {
        let z = NoiseModel::zero();
        assert!((0..100).all(|k| z.normal(k, 0) == 0.0));
    }

    #[test]
    fn uniform_is_open_interval() {
        let noise = NoiseModel::new(0, 0);
        for k in 0..10_000 {
            let u = noise.uniform_on(stream::BRIDGE, k, 0);
            assert!(u > 0.0 && u < 1.0);
        }
    }
}
