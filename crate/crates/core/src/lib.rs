//! Compiler and runtime for evaluating tensor programs under leveled
//! homomorphic encryption semantics, without any actual cryptography.
//!
//! The crate is organised around a small homomorphic instruction set
//! (the `hisa` module). Everything else is either an implementation of
//! that instruction set or a client of it:
//!
//! * [`sim`] executes instructions over plaintext slot vectors while
//!   modelling scale, modulus budget and (optionally) noise.
//! * [`analysis`] holds a value-less backend plus trace analyses for
//!   modulus depth, rotation sets and instruction cost.
//! * [`tensor`] packs tensors into slot vectors and lowers tensor
//!   operations (convolution, matmul, pooling, activation) to
//!   instructions.
//! * [`compiler`] selects data layout, padding, encryption parameters
//!   and rotation keys for a whole circuit by symbolic execution.
//! * [`fixtures`] provides deterministic example circuits used by the
//!   test suite and shipped as files for the command line tool.

pub mod analysis;
pub mod circuit;
pub mod compiler;
pub mod fixtures;
pub mod hisa;
pub mod sim;
pub mod tensor;

pub use circuit::{Circuit, CircuitNode, OpKind, Schema};
pub use compiler::{compile, CompilationPlan, SecurityTable, StrategyKind};
pub use hisa::{
    BackendConfig, CtHandle, FixedScalar, Handle, HisaBackend, HisaError, HisaInstruction,
    HisaTrace, Opcode, Profile, PtHandle, TraceEntry,
};
pub use sim::{SimBackend, SimConfig, SimMode};
pub use tensor::{CipherTensor, CipherTensorMeta, LayoutFamily, Padding, PlainTensor};

/// Exact rational used for slot values everywhere outside noisy-mode sampling.
pub type Rat = num::BigRational;

/// Exact conversion from an `f64`; panics on NaN or infinity.
pub fn rat_from_f64(x: f64) -> Rat {
    Rat::from_float(x).expect("finite float")
}

/// Nearest `f64`; saturates to infinity far outside the float range.
pub fn rat_to_f64(x: &Rat) -> f64 {
    use num::ToPrimitive;
    x.to_f64().unwrap_or(f64::NAN)
}

/// 2^k as a rational, for any sign of `k`.
pub fn pow2(k: i32) -> Rat {
    use num::{BigInt, One};
    let one = BigInt::one();
    if k >= 0 {
        Rat::from_integer(one << k as usize)
    } else {
        Rat::new(one.clone(), one << (-k) as usize)
    }
}
