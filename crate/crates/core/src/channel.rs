//! Complex-baseband AWGN channel.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Noise variance `sigma^2` is the total over both components; each of the
/// real and imaginary parts has variance `sigma^2 / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    noise_variance: f64,
}

impl ChannelParams {
    pub fn new(noise_variance: f64) -> Result<Self> {
        if !(noise_variance >= 0.0 && noise_variance.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "noise variance must be finite and non-negative, got {noise_variance}"
            )));
        }
        Ok(Self { noise_variance })
    }

    /// From an average power constraint and a linear SNR.
    pub fn from_snr(p_a: f64, snr: f64) -> Result<Self> {
        Self::new(snr_to_variance(p_a, snr)?)
    }

    pub fn noiseless() -> Self {
        Self { noise_variance: 0.0 }
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn component_std(&self) -> f64 {
        (self.noise_variance / 2.0).sqrt()
    }

    /// One noise sample.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Complex64 {
        let s = self.component_std();
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(s * re, s * im)
    }
}

/// `sigma^2 = p_a / snr`, with `snr` a linear power ratio.
pub fn snr_to_variance(p_a: f64, snr: f64) -> Result<f64> {
    if !(p_a > 0.0 && p_a.is_finite()) {
        return Err(Error::InvalidConfig(format!("power budget must be positive, got {p_a}")));
    }
    if !(snr > 0.0) {
        return Err(Error::InvalidConfig(format!("snr must be positive, got {snr}")));
    }
    Ok(p_a / snr)
}

/// Adds circularly symmetric Gaussian noise in place. With zero variance the
/// batch is left untouched.
pub fn apply_awgn<R: Rng + ?Sized>(batch: &mut [Complex64], params: &ChannelParams, rng: &mut R) {
    if params.noise_variance == 0.0 {
        return;
    }
    for x in batch.iter_mut() {
        *x += params.sample(rng);
    }
}
