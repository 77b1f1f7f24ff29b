//! Random variate kernels and seeded stream derivation.
//!
//! Every sampler draws from a [`SamplerRng`] (ChaCha8). Streams for
//! independent runs are derived from a base seed by SplitMix64 mixing, so a
//! run's randomness depends only on its identifying tuple.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::special::ln_factorial;

pub type SamplerRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SamplerRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the stream identified by `parts` under `base`.
pub fn stream_seed(base: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn sample_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub fn fill_normal<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    for v in out {
        *v = StandardNormal.sample(rng);
    }
}

/// Gamma with the given shape and scale (mean `shape·scale`).
pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> Result<f64> {
    if !(shape > 0.0 && scale > 0.0) || !shape.is_finite() || !scale.is_finite() {
        return Err(Error::argument(format!(
            "gamma needs positive shape and scale, got ({shape}, {scale})"
        )));
    }
    let g = Gamma::new(shape, scale).map_err(|e| Error::argument(e.to_string()))?;
    Ok(g.sample(rng))
}

/// Inverse gamma with density `∝ x^{−shape−1} e^{−scale/x}`, drawn as
/// `scale / Gamma(shape, 1)`.
pub fn sample_invgamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> Result<f64> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::argument(format!(
            "inverse gamma needs a positive scale, got {scale}"
        )));
    }
    Ok(scale / sample_gamma(shape, 1.0, rng)?)
}

/// Standard half-Cauchy, `|tan(π(u − ½))|`.
pub fn sample_halfcauchy<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    (PI * (u - 0.5)).tan().abs()
}

const POISSON_INVERSION_LIMIT: f64 = 30.0;

/// Poisson variate: sequential inversion below mean 30, Hörmann's
/// transformed rejection with squeeze (PTRS) above.
pub fn sample_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> Result<u64> {
    if !(mean > 0.0) || !mean.is_finite() {
        return Err(Error::argument(format!(
            "poisson mean must be positive and finite, got {mean}"
        )));
    }
    if mean < POISSON_INVERSION_LIMIT {
        Ok(poisson_inversion(mean, rng))
    } else {
        Ok(poisson_ptrs(mean, rng))
    }
}

fn poisson_inversion<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    let u: f64 = rng.random();
    let mut k = 0u64;
    let mut pk = (-mean).exp();
    let mut cdf = pk;
    while u > cdf && k < 1000 {
        k += 1;
        pk *= mean / k as f64;
        cdf += pk;
        if pk == 0.0 {
            break;
        }
    }
    k
}

fn poisson_ptrs<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    let slam = mean.sqrt();
    let loglam = mean.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u: f64 = rng.random::<f64>() - 0.5;
        let v: f64 = rng.random();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + mean + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
        let rhs = -mean + k * loglam - ln_factorial(k as u64);
        if lhs <= rhs {
            return k as u64;
        }
    }
}
