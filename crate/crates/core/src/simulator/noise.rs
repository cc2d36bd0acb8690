//! Measurement noise.
//!
//! Poisson variates come from a fixed algorithm, `kh-poisson-v1`, so that
//! streams are reproducible across implementations given the same uniform
//! source: sequential inverse-transform search for means below 10 and the
//! PTRS transformed-rejection method (Hörmann 1993) above.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::TransientHistogram;

pub const POISSON_ALGORITHM: &str = "kh-poisson-v1";

const INVERSION_LIMIT: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    PoissonSnr,
    Gaussian,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    #[serde(default = "default_snr")]
    pub target_snr: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_snr() -> f64 {
    15.0
}

impl NoiseModel {
    pub fn none() -> Self {
        Self {
            kind: NoiseKind::None,
            target_snr: default_snr(),
            seed: 0,
        }
    }

    pub fn poisson(target_snr: f64, seed: u64) -> Self {
        Self {
            kind: NoiseKind::PoissonSnr,
            target_snr,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind != NoiseKind::None && !(self.target_snr > 0.0 && self.target_snr.is_finite()) {
            return Err(Error::invalid(format!(
                "target SNR must be positive, got {}",
                self.target_snr
            )));
        }
        Ok(())
    }

    /// Independent generator for measurement `index`.
    pub fn stream(&self, index: u64) -> ChaCha8Rng {
        measurement_rng(self.seed, index)
    }

    /// Applies the configured noise to one clean histogram.
    pub fn apply(
        &self,
        clean: &TransientHistogram,
        rng: &mut impl RngCore,
    ) -> Result<TransientHistogram> {
        match self.kind {
            NoiseKind::None => Ok(clean.clone()),
            NoiseKind::PoissonSnr => apply_poisson_snr(clean, self.target_snr, rng),
            NoiseKind::Gaussian => apply_gaussian_snr(clean, self.target_snr, rng),
        }
    }
}

/// Counter-based split of a master seed: one ChaCha stream per measurement.
pub fn measurement_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Scales the histogram so its peak bin has mean `target_snr^2`, draws Poisson
/// counts and rescales back to the clean units.
pub fn apply_poisson_snr(
    clean: &TransientHistogram,
    target_snr: f64,
    rng: &mut impl RngCore,
) -> Result<TransientHistogram> {
    if !(target_snr > 0.0 && target_snr.is_finite()) {
        return Err(Error::invalid(format!(
            "target SNR must be positive, got {target_snr}"
        )));
    }
    if clean.counts.iter().any(|&c| !(c >= 0.0) || !c.is_finite()) {
        return Err(Error::invalid(
            "clean histogram must be finite and non-negative",
        ));
    }
    let peak = clean.peak();
    if peak <= 0.0 {
        return Err(Error::invalid(
            "cannot set the SNR of an all-zero histogram",
        ));
    }
    let scale = target_snr * target_snr / peak;
    let counts = clean
        .counts
        .iter()
        .map(|&c| sample_poisson(scale * c, rng) / scale)
        .collect();
    Ok(TransientHistogram {
        counts,
        bin_width: clean.bin_width,
        t0: clean.t0,
    })
}

/// Additive white Gaussian noise with standard deviation `peak / target_snr`.
pub fn apply_gaussian_snr(
    clean: &TransientHistogram,
    target_snr: f64,
    rng: &mut impl RngCore,
) -> Result<TransientHistogram> {
    if !(target_snr > 0.0 && target_snr.is_finite()) {
        return Err(Error::invalid(format!(
            "target SNR must be positive, got {target_snr}"
        )));
    }
    let peak = clean.peak();
    if peak <= 0.0 {
        return Err(Error::invalid(
            "cannot set the SNR of an all-zero histogram",
        ));
    }
    let std = peak / target_snr;
    let counts = clean
        .counts
        .iter()
        .map(|&c| {
            let z: f64 = StandardNormal.sample(rng);
            c + std * z
        })
        .collect();
    Ok(TransientHistogram {
        counts,
        bin_width: clean.bin_width,
        t0: clean.t0,
    })
}

/// Draws one Poisson variate with the given mean.
pub fn sample_poisson(mean: f64, rng: &mut impl RngCore) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    if mean < INVERSION_LIMIT {
        poisson_inversion(mean, rng)
    } else {
        poisson_ptrs(mean, rng)
    }
}

fn poisson_inversion(mean: f64, rng: &mut impl RngCore) -> f64 {
    let u: f64 = rng.random();
    let mut k = 0u32;
    let mut p = (-mean).exp();
    let mut cdf = p;
    while u > cdf && k < 1000 {
        k += 1;
        p *= mean / k as f64;
        cdf += p;
        if p == 0.0 {
            break;
        }
    }
    k as f64
}

fn poisson_ptrs(mean: f64, rng: &mut impl RngCore) -> f64 {
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
            return k;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
        let rhs = -mean + k * loglam - ln_factorial(k as u64);
        if lhs <= rhs {
            return k;
        }
    }
}

/// `ln(k!)`, exact table below 16 and a Stirling series above.
pub fn ln_factorial(k: u64) -> f64 {
    if k < 16 {
        return (1..=k).map(|i| (i as f64).ln()).sum();
    }
    let n = k as f64 + 1.0;
    let inv = 1.0 / n;
    let inv2 = inv * inv;
    (n - 0.5) * n.ln() - n
        + 0.5 * (2.0 * std::f64::consts::PI).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)))
}
