use crate::hisa::HisaError;
use thiserror::Error;

#[derive(Clone, PartialEq, Debug, Error)]
pub enum TensorError {
    #[error(transparent)]
    Backend(#[from] HisaError),

    #[error("layout padding too small: need {need} slots of margin, have {have}")]
    InsufficientPadding { need: usize, have: usize },

    #[error("tensor needs {need} slots per ciphertext but only {slots} exist")]
    CipherCapacity { need: usize, slots: usize },

    #[error(
        "value scale 2^-{value_scale} has diverged from cipher scale 2^-{cipher_scale}; \
         this operation needs them equal"
    )]
    ScaleDivergence { value_scale: i32, cipher_scale: i32 },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("layout error: {0}")]
    Layout(String),
}
