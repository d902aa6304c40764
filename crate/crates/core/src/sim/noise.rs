use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result};

fn default_snr_db() -> f64 {
    40.0
}

/// White Gaussian measurement noise at a target signal-to-noise ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub enabled: bool,
    #[serde(default = "default_snr_db")]
    pub snr_db: f64,
    /// RMS of the clean voltage per channel. When absent it is measured on a
    /// noiseless run of the same experiment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_rms: Option<Vec<f64>>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            enabled: true,
            snr_db: default_snr_db(),
            reference_rms: None,
        }
    }
}

impl NoiseConfig {
    pub fn off() -> Self {
        NoiseConfig {
            enabled: false,
            ..Default::default()
        }
    }

    /// Per-channel standard deviation `rms_ref * 10^(-snr_db / 20)`.
    pub fn noise_std(&self, n_v: usize) -> Result<Vec<f64>> {
        if !self.enabled {
            return Ok(vec![0.0; n_v]);
        }
        let rms = self.reference_rms.as_deref().unwrap_or(&[]);
        check_len("noise reference rms", n_v, rms.len())?;
        let scale = 10f64.powf(-self.snr_db / 20.0);
        Ok(rms.iter().map(|r| r * scale).collect())
    }
}

/// `v + e` with `e_i ~ N(0, std_i^2)`; `v` unchanged when noise is disabled.
pub fn make_measurement<R: Rng + ?Sized>(
    v: &[f64],
    noise: &NoiseConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let std = noise.noise_std(v.len())?;
    let mut out = v.to_vec();
    if noise.enabled {
        add_noise(&mut out, &std, rng);
    }
    Ok(out)
}

#[inline]
pub(crate) fn add_noise<R: Rng + ?Sized>(v: &mut [f64], std: &[f64], rng: &mut R) {
    for (x, s) in v.iter_mut().zip(std) {
        let z: f64 = rng.sample(StandardNormal);
        *x += s * z;
    }
}
