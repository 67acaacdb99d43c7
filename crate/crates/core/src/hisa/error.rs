use super::{Handle, Opcode, Profile};
use thiserror::Error;

#[derive(Clone, PartialEq, Eq, Debug, Error)]
pub enum HisaError {
    #[error("{opcode} is in the {profile:?} profile, which this backend does not declare")]
    UnsupportedProfile { opcode: Opcode, profile: Profile },

    #[error("unknown handle {handle}")]
    UnknownHandle { handle: Handle },

    #[error("handle {handle} was freed and may not be used again")]
    UseAfterFree { handle: Handle },

    #[error("{handle} is a plaintext where a ciphertext was expected, or vice versa")]
    WrongHandleKind { handle: Handle },

    #[error("{count} values exceed the {slots} available slots")]
    SlotCapacity { count: usize, slots: usize },

    #[error("operand scales differ ({left} vs {right}); rescale explicitly first")]
    ScaleMismatch { left: i32, right: i32 },

    #[error("{divisor} is not a valid divisor (divisors are powers of two >= 1)")]
    InvalidDivisor { divisor: i64 },

    #[error("rescale by 2^{requested} exceeds the remaining modulus budget of {remaining} bits")]
    ModulusExhausted { requested: u32, remaining: u32 },

    #[error("backend returned {got} where {expected} was expected")]
    WrongOutputKind {
        expected: &'static str,
        got: &'static str,
    },

    #[error("trace replay diverged at entry {index}: recorded {recorded:?}, got {got:?}")]
    ReplayMismatch {
        index: usize,
        recorded: Option<Handle>,
        got: Option<Handle>,
    },

    #[error("malformed trace line {line}: {reason}")]
    TraceParse { line: usize, reason: String },

    #[error("{0}")]
    InvalidConfig(String),
}
