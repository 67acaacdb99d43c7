//! Value-carrying simulation of the instruction set: slot vectors of
//! exact rationals plus the scale, budget and noise accounting a real
//! leveled scheme would impose. No cryptography is involved, so tests
//! can inspect every intermediate slot.

mod backend;
mod config;

pub use backend::SimBackend;
pub use config::{SimConfig, SimMode};
