//! Circuit compilation: choose a data layout strategy, input padding,
//! ring degree and modulus size by symbolically executing the circuit,
//! then package the result as a plan the runtime can replay.
//!
//! The symbolic run uses zero-valued inputs and weights; instruction
//! structure depends only on shapes and layouts, never on values, so
//! the trace it produces is the trace the real run will produce.

mod executor;
mod padding;
mod plan;

pub use executor::{execute_circuit, ExecOutcome, NodeSpan};
pub use padding::{edge_margins, input_margins};
pub use plan::{circuit_hash, CompilationPlan, SecurityTable, StrategyKind};

use crate::analysis::{
    cost_analyze, depth_analyze, op_counts, rotation_analyze, CostTable, SymbolicBackend,
};
use crate::circuit::{Circuit, CircuitError, Schema};
use crate::hisa::{BackendConfig, HisaBackend, HisaError};
use crate::tensor::{PlainTensor, TensorError};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Clone, PartialEq, Debug, Error)]
pub enum CompileError {
    #[error(transparent)]
    Circuit(#[from] CircuitError),

    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error("missing {0}")]
    MissingTensor(String),

    #[error("no feasible parameters: {0}")]
    Infeasible(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub struct CompileOptions {
    pub strategies: Vec<StrategyKind>,
    pub security: SecurityTable,
    pub cost_table: CostTable,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions {
            strategies: StrategyKind::ALL.to_vec(),
            security: SecurityTable::default(),
            cost_table: CostTable::default(),
        }
    }
}

/// One layout strategy's outcome, feasible or not.
#[derive(Clone, PartialEq, Debug)]
pub struct StrategyRow {
    pub strategy: StrategyKind,
    pub feasible: bool,
    pub log_n: u32,
    pub log_q: u32,
    pub cost: u64,
    pub rotation_keys: Vec<u64>,
    pub op_counts: BTreeMap<String, u64>,
    /// Why the strategy was skipped, when it was.
    pub note: String,
    layouts: BTreeMap<String, crate::tensor::CipherTensorMeta>,
}

pub struct CompileOutcome {
    pub plan: CompilationPlan,
    pub rows: Vec<StrategyRow>,
}

/// Smallest scale that represents every activation coefficient in the
/// circuit exactly, capped so pathological floats cannot blow up the
/// budget. The plaintext scale must reach at least this, or the
/// coefficients round away.
fn coefficient_scale_log(circuit: &Circuit) -> i32 {
    use crate::circuit::OpKind;
    use num::Zero;
    let mut need = 0i32;
    for n in &circuit.nodes {
        if let OpKind::PolyAct { a, b } = n.op {
            for x in [a, b] {
                let r = crate::rat_from_f64(x);
                if r.is_zero() {
                    continue;
                }
                // f64 values are dyadic, so the reduced denominator is
                // a power of two.
                let bits = r.denom().bits().saturating_sub(1) as i32;
                need = need.max(bits.min(24));
            }
        }
    }
    need
}

/// Pools whose window area is not a power of two divide by a rounded
/// reciprocal, so the plaintext scale is floored at the input scale to
/// keep that rounding below the data grid. Power-of-two areas divide
/// exactly once the scale holds the area's bits.
fn reciprocal_scale_log(circuit: &Circuit, cipher_log_p: i32) -> i32 {
    use crate::circuit::OpKind;
    let mut need = 0i32;
    for n in &circuit.nodes {
        if let OpKind::AvgPool { window, .. } = n.op {
            let area = window * window;
            need = need.max(if area.is_power_of_two() {
                area.ilog2() as i32
            } else {
                cipher_log_p
            });
        }
    }
    need
}

/// True for the failures that a larger ring might fix.
fn is_capacity(err: &CompileError) -> bool {
    matches!(
        err,
        CompileError::Tensor(
            TensorError::CipherCapacity { .. }
                | TensorError::InsufficientPadding { .. }
                | TensorError::Backend(HisaError::SlotCapacity { .. })
        )
    )
}

fn plan_strategy(
    circuit: &Circuit,
    strategy: StrategyKind,
    cipher_log_p: i32,
    plain_log_p: i32,
    inputs: &BTreeMap<String, PlainTensor>,
    weights: &BTreeMap<String, PlainTensor>,
    options: &CompileOptions,
) -> Result<StrategyRow, CompileError> {
    let infeasible = |note: String| StrategyRow {
        strategy,
        feasible: false,
        log_n: 0,
        log_q: 0,
        cost: u64::MAX,
        rotation_keys: Vec::new(),
        op_counts: BTreeMap::new(),
        note,
        layouts: BTreeMap::new(),
    };
    let mut last_note = String::new();
    for &(log_n, max_log_q) in options.security.candidates() {
        let mut config = BackendConfig::with_log_n(log_n, max_log_q);
        config.cipher_scale_log = cipher_log_p;
        config.plain_scale_log = plain_log_p;
        let mut sym = SymbolicBackend::new(config);
        let outcome = match execute_circuit(&mut sym, circuit, strategy, inputs, weights) {
            Ok(o) => o,
            Err(e) if is_capacity(&e) => {
                last_note = format!("logN {log_n}: {e}");
                continue;
            }
            Err(e) => return Err(e),
        };
        let depth = depth_analyze(sym.trace());
        let log_q = depth + circuit.output_precision_log.max(0) as u32;
        if log_q > max_log_q {
            last_note = format!("logN {log_n}: needs logQ {log_q}, ceiling is {max_log_q}");
            continue;
        }
        let trace = sym.trace();
        let cost = cost_analyze(trace, &options.cost_table)
            .map_err(|e| CompileError::InvalidConfig(e.to_string()))?;
        return Ok(StrategyRow {
            strategy,
            feasible: true,
            log_n,
            log_q,
            cost,
            rotation_keys: rotation_analyze(trace).into_iter().collect(),
            op_counts: op_counts(trace),
            note: String::new(),
            layouts: outcome.layouts,
        });
    }
    Ok(infeasible(if last_note.is_empty() {
        "no ring degree candidates".into()
    } else {
        last_note
    }))
}

pub fn compile(
    circuit: &Circuit,
    schema: &Schema,
    options: &CompileOptions,
) -> Result<CompileOutcome, CompileError> {
    circuit.validate()?;
    circuit.check_schema(schema)?;
    if options.strategies.is_empty() {
        return Err(CompileError::InvalidConfig(
            "no strategies requested".into(),
        ));
    }
    let cipher_log_p = circuit.cipher_scale_log();
    let plain_log_p = schema
        .plain_scale_log()
        .max(coefficient_scale_log(circuit))
        .max(reciprocal_scale_log(circuit, cipher_log_p));
    if !(1..=60).contains(&cipher_log_p) || !(0..=60).contains(&plain_log_p) {
        return Err(CompileError::InvalidConfig(format!(
            "precisions out of range: inputs 2^-{cipher_log_p}, weights 2^-{plain_log_p}"
        )));
    }

    let zero_inputs: BTreeMap<String, PlainTensor> = circuit
        .inputs
        .iter()
        .map(|(k, s)| (k.clone(), PlainTensor::zeros(s.shape.clone())))
        .collect();
    let zero_weights: BTreeMap<String, PlainTensor> = schema
        .weights
        .iter()
        .map(|(k, s)| (k.clone(), PlainTensor::zeros(s.shape.clone())))
        .collect();

    let mut rows = Vec::with_capacity(options.strategies.len());
    for &strategy in &options.strategies {
        rows.push(plan_strategy(
            circuit,
            strategy,
            cipher_log_p,
            plain_log_p,
            &zero_inputs,
            &zero_weights,
            options,
        )?);
    }

    let mut best: Option<&StrategyRow> = None;
    for row in rows.iter().filter(|r| r.feasible) {
        if best.is_none_or(|b| row.cost < b.cost) {
            best = Some(row);
        }
    }
    let best = best.ok_or_else(|| {
        let notes: Vec<String> = rows
            .iter()
            .map(|r| format!("{}: {}", r.strategy, r.note))
            .collect();
        CompileError::Infeasible(notes.join("; "))
    })?;

    let plan = CompilationPlan {
        strategy: best.strategy,
        log_n: best.log_n,
        log_q: best.log_q,
        cipher_log_p,
        plain_log_p,
        output_precision_log: circuit.output_precision_log,
        padding: input_margins(circuit)
            .into_iter()
            .map(|(k, (mh, mw))| (k, [mh, mw]))
            .collect(),
        layouts: best.layouts.clone(),
        rotation_keys: best.rotation_keys.clone(),
        circuit_hash: circuit_hash(&circuit.to_json()),
    };
    Ok(CompileOutcome { plan, rows })
}
