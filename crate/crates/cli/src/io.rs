//! File plumbing shared by the subcommands. Anything the user got wrong
//! (unreadable file, bad JSON, missing tensor) is a usage failure and
//! exits 2; anything that breaks while doing the work exits 1.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use hisa_core::analysis::CostTable;
use hisa_core::circuit::TensorSpec;
use hisa_core::compiler::CompileOptions;
use hisa_core::{Circuit, CompilationPlan, PlainTensor, Schema, SecurityTable, StrategyKind};

pub enum Failure {
    Usage(String),
    Exec(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Exec(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Exec(m) => m,
        }
    }
}

pub fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))
}

pub fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text)
        .map_err(|e| Failure::Exec(format!("cannot write {}: {e}", path.display())))
}

pub fn to_pretty(value: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn bad_json(path: &Path, err: impl std::fmt::Display) -> Failure {
    Failure::Usage(format!("{}: {err}", path.display()))
}

pub fn parse_circuit(path: &Path) -> Result<Circuit, Failure> {
    Circuit::from_json(&read(path)?).map_err(|e| bad_json(path, e))
}

pub fn parse_schema(path: &Path) -> Result<Schema, Failure> {
    Schema::from_json(&read(path)?).map_err(|e| bad_json(path, e))
}

pub fn parse_plan(path: &Path) -> Result<CompilationPlan, Failure> {
    CompilationPlan::from_json(&read(path)?).map_err(|e| bad_json(path, e))
}

/// Value files are flat maps, `{"name": [v, v, ...]}`; shapes come from
/// the circuit, not the file.
pub fn parse_values(path: &Path) -> Result<BTreeMap<String, Vec<f64>>, Failure> {
    serde_json::from_str(&read(path)?).map_err(|e| bad_json(path, e))
}

/// Pair every spec with its values. Extra names in the file are
/// ignored; missing ones are an error naming the tensor.
pub fn tensors_for(
    specs: &BTreeMap<String, TensorSpec>,
    values: &BTreeMap<String, Vec<f64>>,
    path: &Path,
) -> Result<BTreeMap<String, PlainTensor>, Failure> {
    let mut out = BTreeMap::new();
    for (name, spec) in specs {
        let flat = values.get(name).ok_or_else(|| {
            Failure::Usage(format!("{}: no values for tensor {name}", path.display()))
        })?;
        let tensor = PlainTensor::from_f64(spec.shape.clone(), flat)
            .map_err(|e| Failure::Usage(format!("{}: tensor {name}: {e}", path.display())))?;
        out.insert(name.clone(), tensor);
    }
    Ok(out)
}

pub fn build_options(
    layouts: &[StrategyKind],
    cost_table: &Option<PathBuf>,
    security_table: &Option<PathBuf>,
) -> Result<CompileOptions, Failure> {
    let mut options = CompileOptions::default();
    if !layouts.is_empty() {
        let mut seen = Vec::new();
        for &kind in layouts {
            if !seen.contains(&kind) {
                seen.push(kind);
            }
        }
        options.strategies = seen;
    }
    if let Some(path) = cost_table {
        options.cost_table = CostTable::from_json(&read(path)?).map_err(|e| bad_json(path, e))?;
    }
    if let Some(path) = security_table {
        options.security = SecurityTable::from_json(&read(path)?).map_err(|e| bad_json(path, e))?;
    }
    Ok(options)
}
