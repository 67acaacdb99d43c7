use crate::hisa::HisaError;
use serde::{Deserialize, Serialize};

/// Whether the simulator perturbs results like a real scheme would.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimMode {
    /// Values are exact rationals; the only rounding is `encode`
    /// snapping onto the fixed-point grid. Noise bounds stay zero.
    Exact,
    /// Mantissas stay integers, rescales round, and encrypt/rescale
    /// inject a small seeded perturbation tracked by a per-ciphertext
    /// noise bound.
    Noisy,
}

/// Simulator parameters, loadable from JSON.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SimConfig {
    /// Ring-degree exponent; slot count is `2^(logN - 1)`.
    pub log_n: u32,
    /// Total modulus budget in bits.
    pub log_q: u32,
    pub mode: SimMode,
    /// Noise growth factor exponent applied by relinearisation:
    /// each relinearised multiply scales the bound by `2^noiseFactorLog`.
    #[serde(default)]
    pub noise_factor_log: i32,
    /// Constant `c` in the fresh-noise bound `(0.5 + c * sqrt(N)) * 2^-k`.
    #[serde(default = "default_encoding_error_const")]
    pub encoding_error_const: f64,
    #[serde(default)]
    pub seed: u64,
    /// Injected perturbations stay `2^noiseSlackLog` below the
    /// tracked bound, so the bound survives error accumulation across
    /// additions with headroom.
    #[serde(default = "default_noise_slack_log")]
    pub noise_slack_log: i32,
}

fn default_encoding_error_const() -> f64 {
    1.0
}

fn default_noise_slack_log() -> i32 {
    5
}

impl SimConfig {
    pub fn new(log_n: u32, log_q: u32, mode: SimMode) -> Self {
        SimConfig {
            log_n,
            log_q,
            mode,
            noise_factor_log: 0,
            encoding_error_const: default_encoding_error_const(),
            seed: 0,
            noise_slack_log: default_noise_slack_log(),
        }
    }

    pub fn exact(log_n: u32, log_q: u32) -> Self {
        Self::new(log_n, log_q, SimMode::Exact)
    }

    pub fn slot_count(&self) -> usize {
        1usize << (self.log_n - 1)
    }

    pub fn validate(&self) -> Result<(), HisaError> {
        if self.log_n == 0 || self.log_n > 30 {
            return Err(HisaError::InvalidConfig(format!(
                "logN {} out of range",
                self.log_n
            )));
        }
        if self.log_q == 0 {
            return Err(HisaError::InvalidConfig("logQ must be positive".into()));
        }
        Ok(())
    }
}
