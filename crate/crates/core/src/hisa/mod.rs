//! The homomorphic instruction set: typed handles, the instruction and
//! opcode enums, profiles, traces, and the backend trait every
//! execution or analysis engine implements.
//!
//! Backends implement [`HisaBackend::execute_instruction`]; the trait's
//! provided methods add profile gating, trace recording and one typed
//! wrapper per instruction. Consumers (tensor kernels, the compiler)
//! only ever talk to the trait, so the same kernel code runs against
//! the value-carrying simulator and the value-less analyzers.

mod backend;
mod config;
mod error;
mod handle;
mod instr;
mod scalar;
mod trace;

pub use backend::{replay, HisaBackend, InstrOutput};
pub use config::BackendConfig;
pub use error::HisaError;
pub use handle::{CtHandle, Handle, PtHandle};
pub use instr::{HisaInstruction, Opcode, Profile};
pub use scalar::FixedScalar;
pub use trace::{HisaTrace, TraceEntry};
