use std::collections::BTreeMap;
use std::path::PathBuf;

use hisa_core::{CipherTensorMeta, Circuit, CompilationPlan, StrategyKind};
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
    /// Directory receiving plan.json, encryptor.json and decryptor.json.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Comma-separated layout strategies to consider (default: all).
    #[arg(long, value_delimiter = ',')]
    layouts: Vec<StrategyKind>,
    /// Instruction cost table override (JSON).
    #[arg(long)]
    cost_table: Option<PathBuf>,
    /// Ring security ceiling override (JSON).
    #[arg(long)]
    security_table: Option<PathBuf>,
}

/// What the encrypting party needs: ring and modulus sizes, the two
/// fixed-point scales, which rotation keys to generate, and the exact
/// slot layout each input must be packed into (margins included).
#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Encryptor<'a> {
    log_n: u32,
    log_q: u32,
    cipher_log_p: i32,
    plain_log_p: i32,
    rotation_keys: &'a [u64],
    padding: &'a BTreeMap<String, [usize; 2]>,
    inputs: BTreeMap<&'a str, &'a CipherTensorMeta>,
}

/// What the decrypting party needs to read the result back out of the
/// slots.
#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Decryptor<'a> {
    output: &'a str,
    shape: &'a [usize],
    scale_log: i32,
    cipher_scale_log: i32,
    output_precision_log: i32,
    layout: &'a CipherTensorMeta,
}

pub fn exec(args: Args) -> Result<(), Failure> {
    let circuit = io::parse_circuit(&args.circuit)?;
    let schema = io::parse_schema(&args.schema)?;
    let options = io::build_options(&args.layouts, &args.cost_table, &args.security_table)?;
    let outcome = hisa_core::compile(&circuit, &schema, &options)
        .map_err(|e| Failure::Exec(e.to_string()))?;
    let plan = &outcome.plan;

    std::fs::create_dir_all(&args.out)
        .map_err(|e| Failure::Exec(format!("cannot create {}: {e}", args.out.display())))?;
    io::write(&args.out.join("plan.json"), &plan.to_json())?;
    io::write(
        &args.out.join("encryptor.json"),
        &io::to_pretty(&encryptor(plan, &circuit)),
    )?;
    io::write(
        &args.out.join("decryptor.json"),
        &io::to_pretty(&decryptor(plan, &circuit)?),
    )?;

    println!(
        "plan: strategy {} logN {} logQ {} rotation keys {} -> {}",
        plan.strategy,
        plan.log_n,
        plan.log_q,
        plan.rotation_keys.len(),
        args.out.display()
    );
    Ok(())
}

fn encryptor<'a>(plan: &'a CompilationPlan, circuit: &'a Circuit) -> Encryptor<'a> {
    let inputs = circuit
        .inputs
        .keys()
        .filter_map(|name| plan.layouts.get(name).map(|meta| (name.as_str(), meta)))
        .collect();
    Encryptor {
        log_n: plan.log_n,
        log_q: plan.log_q,
        cipher_log_p: plan.cipher_log_p,
        plain_log_p: plan.plain_log_p,
        rotation_keys: &plan.rotation_keys,
        padding: &plan.padding,
        inputs,
    }
}

fn decryptor<'a>(
    plan: &'a CompilationPlan,
    circuit: &'a Circuit,
) -> Result<Decryptor<'a>, Failure> {
    let output = circuit
        .output_node()
        .map_err(|e| Failure::Exec(e.to_string()))?;
    let layout = plan
        .layouts
        .get(&output.id)
        .ok_or_else(|| Failure::Exec(format!("plan has no layout for output {}", output.id)))?;
    Ok(Decryptor {
        output: &output.id,
        shape: &layout.logical_dims,
        scale_log: layout.scale_log,
        cipher_scale_log: layout.cipher_scale_log,
        output_precision_log: plan.output_precision_log,
        layout,
    })
}
