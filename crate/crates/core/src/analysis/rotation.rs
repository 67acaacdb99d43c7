use crate::hisa::{HisaTrace, Opcode};
use std::collections::BTreeSet;

/// Distinct rotation amounts a trace needs keys for, as left rotations.
/// Trace entries already store amounts left-normalised modulo the slot
/// count; zero rotations need no key and are dropped.
pub fn rotation_analyze(trace: &HisaTrace) -> BTreeSet<u64> {
    trace
        .iter()
        .filter(|e| matches!(e.opcode, Opcode::RotLeft | Opcode::RotRight))
        .filter_map(|e| e.scalars.first())
        .map(|&a| a as u64)
        .filter(|&a| a != 0)
        .collect()
}
