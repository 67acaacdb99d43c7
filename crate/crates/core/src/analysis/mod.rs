//! Value-less execution and trace analyses.
//!
//! [`SymbolicBackend`] runs the same kernels as the simulator without
//! carrying slot values, so the compiler can measure a circuit (depth,
//! rotations, cost) before encryption parameters are fixed. The
//! analyses themselves operate on recorded traces and work on traces
//! from any backend.

mod cost;
mod depth;
mod rotation;
mod symbolic;

pub use cost::{cost_analyze, op_counts, CostTable};
pub use depth::{depth_analyze, multiplicative_depth};
pub use rotation::rotation_analyze;
pub use symbolic::SymbolicBackend;
