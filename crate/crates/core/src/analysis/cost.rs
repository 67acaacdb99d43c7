use crate::hisa::{HisaError, HisaTrace, Opcode};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Per-opcode execution cost in abstract units, keyed by opcode name.
/// Loadable from JSON so targets with different cost ratios can swap
/// the table without a rebuild; in-place forms cost the same as their
/// base opcode.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CostTable {
    entries: BTreeMap<String, u64>,
}

impl CostTable {
    pub fn from_json(text: &str) -> Result<Self, HisaError> {
        let table: CostTable = serde_json::from_str(text)
            .map_err(|e| HisaError::InvalidConfig(format!("cost table: {e}")))?;
        for key in table.entries.keys() {
            if Opcode::from_name(key).is_none() {
                return Err(HisaError::InvalidConfig(format!(
                    "cost table names unknown opcode {key:?}"
                )));
            }
        }
        Ok(table)
    }

    pub fn get(&self, opcode: Opcode) -> Option<u64> {
        self.entries.get(opcode.name()).copied()
    }
}

impl Default for CostTable {
    fn default() -> Self {
        let entries = Opcode::ALL
            .iter()
            .map(|&op| {
                let cost = match op {
                    Opcode::Add
                    | Opcode::AddPlain
                    | Opcode::AddScalar
                    | Opcode::Sub
                    | Opcode::SubPlain
                    | Opcode::SubScalar => 1,
                    Opcode::Mul => 12,
                    Opcode::MulNoRelin => 11,
                    Opcode::MulPlain => 10,
                    Opcode::MulScalar => 2,
                    Opcode::RotLeft | Opcode::RotRight => 8,
                    Opcode::DivScalar => 2,
                    Opcode::Relinearize => 1,
                    _ => 0,
                };
                (op.name().to_string(), cost)
            })
            .collect();
        CostTable { entries }
    }
}

/// Total abstract cost of a trace. Every opcode that appears must have
/// a table entry.
pub fn cost_analyze(trace: &HisaTrace, table: &CostTable) -> Result<u64, HisaError> {
    let mut total = 0u64;
    for e in trace.iter() {
        let cost = table.get(e.opcode).ok_or_else(|| {
            HisaError::InvalidConfig(format!("cost table has no entry for {}", e.opcode))
        })?;
        total += cost;
    }
    Ok(total)
}

/// Instruction counts per opcode name; in-place forms count with their
/// base opcode.
pub fn op_counts(trace: &HisaTrace) -> BTreeMap<String, u64> {
    let mut counts = BTreeMap::new();
    for e in trace.iter() {
        *counts.entry(e.opcode.name().to_string()).or_insert(0) += 1;
    }
    counts
}
