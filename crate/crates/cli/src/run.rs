use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use hisa_core::analysis::{op_counts, rotation_analyze};
use hisa_core::compiler::{circuit_hash, execute_circuit};
use hisa_core::{fixtures, rat_to_f64, HisaBackend, SimBackend, SimConfig, SimMode};
use serde::Serialize;

use crate::io::{self, Failure};

#[derive(clap::Args)]
pub struct Args {
    /// Compiled plan (JSON), as written by `compile`.
    #[arg(long)]
    plan: PathBuf,
    /// Circuit description (JSON); must be the one the plan was built
    /// from.
    #[arg(long)]
    circuit: PathBuf,
    /// Input values, `{"name": [v, ...]}` (JSON).
    #[arg(long)]
    input: PathBuf,
    /// Weight values, same shape of file as the inputs.
    #[arg(long)]
    weights: PathBuf,
    /// Also evaluate the circuit in the clear and report the largest
    /// elementwise deviation.
    #[arg(long)]
    check: bool,
    #[arg(long, value_enum, default_value_t = Mode::Exact)]
    mode: Mode,
    /// Noise sampling seed (noisy mode).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the report here instead of stdout. The file leaves out the
    /// wall time so identical runs produce identical bytes; the time
    /// goes to stderr instead.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
pub enum Mode {
    Exact,
    Noisy,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct RunReport {
    op_counts: BTreeMap<String, u64>,
    depth_bits: u32,
    rotations_used: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_time_ms: Option<u128>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_deviation: Option<f64>,
    output: TensorOut,
}

#[derive(Serialize)]
struct TensorOut {
    shape: Vec<usize>,
    values: Vec<f64>,
}

pub fn exec(args: Args) -> Result<(), Failure> {
    let circuit = io::parse_circuit(&args.circuit)?;
    let plan = io::parse_plan(&args.plan)?;
    let hash = circuit_hash(&circuit.to_json());
    if hash != plan.circuit_hash {
        return Err(Failure::Exec(format!(
            "plan {} was compiled from a different circuit ({}... vs {}...)",
            args.plan.display(),
            &plan.circuit_hash[..12],
            &hash[..12],
        )));
    }

    let inputs = io::tensors_for(
        &circuit.inputs,
        &io::parse_values(&args.input)?,
        &args.input,
    )?;
    let schema = circuit.schema(plan.plain_log_p);
    let weights = io::tensors_for(
        &schema.weights,
        &io::parse_values(&args.weights)?,
        &args.weights,
    )?;

    let mut config = match args.mode {
        Mode::Exact => SimConfig::exact(plan.log_n, plan.log_q),
        Mode::Noisy => SimConfig::new(plan.log_n, plan.log_q, SimMode::Noisy),
    };
    config.seed = args.seed;
    let mut backend = SimBackend::new(config)
        .map_err(|e| Failure::Exec(e.to_string()))?
        .with_scales(plan.cipher_log_p, plan.plain_log_p);

    let started = Instant::now();
    let outcome = execute_circuit(&mut backend, &circuit, plan.strategy, &inputs, &weights)
        .map_err(|e| Failure::Exec(e.to_string()))?;
    let elapsed = started.elapsed();

    let max_deviation = args.check.then(|| {
        let want = fixtures::reference_run(&circuit, &inputs, &weights);
        outcome
            .output
            .data()
            .iter()
            .zip(want.data())
            .map(|(g, w)| rat_to_f64(&(g - w)).abs())
            .fold(0.0f64, f64::max)
    });

    let report = RunReport {
        op_counts: op_counts(backend.trace()),
        depth_bits: backend.consumed_bits(),
        rotations_used: rotation_analyze(backend.trace()).into_iter().collect(),
        wall_time_ms: None,
        max_deviation,
        output: TensorOut {
            shape: outcome.output.shape().to_vec(),
            values: outcome.output.data().iter().map(rat_to_f64).collect(),
        },
    };

    match &args.out {
        Some(path) => {
            io::write(path, &io::to_pretty(&report))?;
            eprintln!(
                "run: {} ms, report -> {}",
                elapsed.as_millis(),
                path.display()
            );
        }
        None => {
            let report = RunReport {
                wall_time_ms: Some(elapsed.as_millis()),
                ..report
            };
            print!("{}", io::to_pretty(&report));
        }
    }
    Ok(())
}
