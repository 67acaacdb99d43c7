use std::collections::BTreeMap;
use std::path::PathBuf;

use hisa_core::analysis::SymbolicBackend;
use hisa_core::compiler::{execute_circuit, CompileOutcome};
use hisa_core::{BackendConfig, HisaBackend, PlainTensor, StrategyKind};
use serde::Serialize;

use crate::io::{self, Failure};

#[derive(clap::Args)]
pub struct Args {
    /// Circuit description (JSON).
    #[arg(long)]
    circuit: PathBuf,
    /// Weight names, shapes and precisions (JSON).
    #[arg(long)]
    schema: PathBuf,
    /// Comma-separated layout strategies to compare (default: all).
    #[arg(long, value_delimiter = ',')]
    layouts: Vec<StrategyKind>,
    /// Instruction cost table override (JSON).
    #[arg(long)]
    cost_table: Option<PathBuf>,
    /// Ring security ceiling override (JSON).
    #[arg(long)]
    security_table: Option<PathBuf>,
    /// Write the winning strategy's instruction trace to this file.
    #[arg(long)]
    dump_trace: Option<PathBuf>,
    /// Write the table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// One row per strategy tried; the cheapest feasible one is flagged.
#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Table {
    chosen: String,
    rows: Vec<Row>,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Row {
    strategy: String,
    feasible: bool,
    chosen: bool,
    log_n: u32,
    log_q: u32,
    depth_bits: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    total_cost: Option<u64>,
    rotation_keys: usize,
    op_counts: BTreeMap<String, u64>,
    #[serde(skip_serializing_if = "String::is_empty")]
    note: String,
}

pub fn exec(args: Args) -> Result<(), Failure> {
    let circuit = io::parse_circuit(&args.circuit)?;
    let schema = io::parse_schema(&args.schema)?;
    let options = io::build_options(&args.layouts, &args.cost_table, &args.security_table)?;
    let outcome = hisa_core::compile(&circuit, &schema, &options)
        .map_err(|e| Failure::Exec(e.to_string()))?;

    if let Some(path) = &args.dump_trace {
        let plan = &outcome.plan;
        let mut config = BackendConfig::with_log_n(plan.log_n, plan.log_q);
        config.cipher_scale_log = plan.cipher_log_p;
        config.plain_scale_log = plan.plain_log_p;
        let mut sym = SymbolicBackend::new(config);
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
        execute_circuit(
            &mut sym,
            &circuit,
            plan.strategy,
            &zero_inputs,
            &zero_weights,
        )
        .map_err(|e| Failure::Exec(e.to_string()))?;
        io::write(path, &sym.trace().to_text())?;
    }

    let text = io::to_pretty(&table_of(&outcome, circuit.output_precision_log));
    match &args.out {
        Some(path) => io::write(path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn table_of(outcome: &CompileOutcome, output_precision_log: i32) -> Table {
    let chosen = outcome.plan.strategy;
    let rows = outcome
        .rows
        .iter()
        .map(|r| Row {
            strategy: r.strategy.name().into(),
            feasible: r.feasible,
            chosen: r.feasible && r.strategy == chosen,
            log_n: r.log_n,
            log_q: r.log_q,
            depth_bits: if r.feasible {
                r.log_q - output_precision_log.max(0) as u32
            } else {
                0
            },
            total_cost: r.feasible.then_some(r.cost),
            rotation_keys: r.rotation_keys.len(),
            op_counts: r.op_counts.clone(),
            note: r.note.clone(),
        })
        .collect();
    Table {
        chosen: chosen.name().into(),
        rows,
    }
}
