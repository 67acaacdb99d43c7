use super::HisaError;
use serde::{Deserialize, Serialize};

/// Parameters shared by every backend kind: cipher geometry, total
/// modulus budget in bits, and the default fixed-point scales used when
/// a caller does not specify one.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct BackendConfig {
    /// Slots per ciphertext; always a power of two (half the ring degree).
    pub slot_count: usize,
    /// Total modulus budget in bits available to a fresh ciphertext.
    pub log_q: u32,
    /// Default scale exponent for encrypted values.
    pub cipher_scale_log: i32,
    /// Default scale exponent for plaintext constants and weights.
    pub plain_scale_log: i32,
}

impl BackendConfig {
    pub fn new(slot_count: usize, log_q: u32) -> Self {
        BackendConfig {
            slot_count,
            log_q,
            cipher_scale_log: 30,
            plain_scale_log: 16,
        }
    }

    /// Slot count from the ring-degree exponent: 2^(log_n - 1).
    pub fn with_log_n(log_n: u32, log_q: u32) -> Self {
        Self::new(1usize << (log_n - 1), log_q)
    }

    pub fn validate(&self) -> Result<(), HisaError> {
        if self.slot_count == 0 || !self.slot_count.is_power_of_two() {
            return Err(HisaError::InvalidConfig(format!(
                "slot count {} is not a power of two",
                self.slot_count
            )));
        }
        Ok(())
    }
}
