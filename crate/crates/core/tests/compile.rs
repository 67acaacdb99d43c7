use std::collections::BTreeSet;

use hisa_core::analysis::{depth_analyze, rotation_analyze};
use hisa_core::compiler::{execute_circuit, CompileOptions};
use hisa_core::fixtures::{self, Fixture};
use hisa_core::{compile, pow2, CompilationPlan, HisaBackend, Rat, SimBackend, SimConfig};
use num::{Signed, Zero};

fn plan_for(f: &Fixture) -> CompilationPlan {
    compile(&f.circuit, &f.schema, &CompileOptions::default())
        .unwrap_or_else(|e| panic!("{} failed to compile: {e}", f.name))
        .plan
}

/// Run under the simulator with the planned parameters and check the
/// plan's promises: output within `tol` of the reference (zero means
/// bit equality), every rotation keyed, no key dead, and the modulus
/// spend equal to the analysis.
fn run_and_audit(f: &Fixture, plan: &CompilationPlan, tol: &Rat) {
    let mut backend = SimBackend::new(SimConfig::exact(plan.log_n, plan.log_q))
        .unwrap()
        .with_scales(plan.cipher_log_p, plan.plain_log_p);
    let outcome = execute_circuit(
        &mut backend,
        &f.circuit,
        plan.strategy,
        &f.inputs,
        &f.weights,
    )
    .unwrap_or_else(|e| panic!("{} failed to run: {e}", f.name));

    let want = fixtures::reference_run(&f.circuit, &f.inputs, &f.weights);
    assert_eq!(outcome.output.shape(), want.shape(), "{}", f.name);
    for (i, (g, w)) in outcome.output.data().iter().zip(want.data()).enumerate() {
        let dev = (g - w).abs();
        assert!(&dev <= tol, "{}: slot {i} off by {dev}", f.name);
    }

    let used = rotation_analyze(backend.trace());
    let keys: BTreeSet<u64> = plan.rotation_keys.iter().copied().collect();
    assert_eq!(
        used, keys,
        "{}: keyset must match the rotations used",
        f.name
    );

    let depth = depth_analyze(backend.trace());
    assert_eq!(depth, backend.consumed_bits(), "{}", f.name);
    assert_eq!(
        plan.log_q,
        depth + f.circuit.output_precision_log.max(0) as u32,
        "{}",
        f.name
    );
}

#[test]
fn lenet_small_plans_a_deep_ring() {
    let f = fixtures::lenet_small();
    let plan = plan_for(&f);
    assert_eq!(plan.log_n, 14);
    assert!((180..=300).contains(&plan.log_q), "logQ {}", plan.log_q);
    run_and_audit(&f, &plan, &Rat::zero());
}

#[test]
fn chained_activations_spend_their_exact_depth() {
    let f = fixtures::activation_chain();
    let plan = plan_for(&f);
    // Three activations, each one multiply at the coefficient scale
    // plus a rescale back to the input scale, then the output scale.
    assert_eq!(plan.log_q, 3 * (20 + 2) + 30);
    assert_eq!(plan.log_n, 13);
    run_and_audit(&f, &plan, &Rat::zero());
}

#[test]
fn passthrough_spends_only_the_output_precision() {
    let f = fixtures::passthrough();
    let plan = plan_for(&f);
    assert_eq!(plan.log_q, 30);
    assert!(plan.rotation_keys.is_empty());
    run_and_audit(&f, &plan, &Rat::zero());
}

#[test]
fn conv_and_fc_fixtures_compile_and_run() {
    for f in [fixtures::conv_heavy(), fixtures::fc_heavy()] {
        let plan = plan_for(&f);
        run_and_audit(&f, &plan, &Rat::zero());
    }
}

#[test]
fn random_circuits_stay_on_grid() {
    // Pooling over non-power-of-two windows rounds the reciprocal
    // onto the plaintext grid; everything else is exact.
    let tol = pow2(-20);
    for seed in 0..10 {
        let f = fixtures::random_circuit(seed);
        let plan = plan_for(&f);
        run_and_audit(&f, &plan, &tol);
    }
}

#[test]
fn plan_serialises_and_round_trips() {
    let f = fixtures::fc_heavy();
    let plan = plan_for(&f);
    let text = plan.to_json();
    let back = CompilationPlan::from_json(&text).unwrap();
    assert_eq!(back.to_json(), text);
    assert_eq!(back.strategy, plan.strategy);
    assert_eq!(back.circuit_hash, plan.circuit_hash);
}
