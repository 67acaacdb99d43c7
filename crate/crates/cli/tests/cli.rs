//! Drives the installed binary end to end over the shipped fixtures.
//! Each test gets its own directory under the cargo-provided tmpdir.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hisa_core::fixtures::{self, Fixture};
use hisa_core::CompilationPlan;
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hisac"))
}

fn work_dir(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn export(fixture: &Fixture, dir: &Path) -> PathBuf {
    fixtures::write_files(fixture, dir).unwrap()
}

fn succeed(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "exit {:?}, stderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Compile `fx/{circuit,schema}.json` into `fx/build/` and hand back
/// the plan path.
fn compile(fx: &Path) -> PathBuf {
    let build = fx.join("build");
    succeed(bin().args([
        "compile",
        "--circuit",
        fx.join("circuit.json").to_str().unwrap(),
        "--schema",
        fx.join("schema.json").to_str().unwrap(),
        "--out",
        build.to_str().unwrap(),
    ]));
    build.join("plan.json")
}

fn run_args(fx: &Path, plan: &Path) -> Vec<String> {
    [
        "run",
        "--plan",
        plan.to_str().unwrap(),
        "--circuit",
        fx.join("circuit.json").to_str().unwrap(),
        "--input",
        fx.join("input.json").to_str().unwrap(),
        "--weights",
        fx.join("weights.json").to_str().unwrap(),
    ]
    .map(String::from)
    .to_vec()
}

fn json(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).unwrap()
}

#[test]
fn compile_emits_plan_and_descriptors() {
    let dir = work_dir("compile_emits");
    let fx = export(&fixtures::passthrough(), &dir);
    let plan_path = compile(&fx);

    let plan = CompilationPlan::from_json(&fs::read_to_string(&plan_path).unwrap()).unwrap();
    assert!(plan.rotation_keys.is_empty());

    let enc = json(&fs::read(fx.join("build/encryptor.json")).unwrap());
    assert_eq!(enc["logN"], plan.log_n);
    assert!(enc["inputs"]["image"]["innerDims"].is_array());

    let dec = json(&fs::read(fx.join("build/decryptor.json")).unwrap());
    assert_eq!(dec["shape"], serde_json::json!([1, 16]));
    assert_eq!(dec["outputPrecisionLog"], 30);
}

#[test]
fn compile_is_byte_deterministic() {
    let dir = work_dir("compile_determinism");
    let a = export(&fixtures::conv_heavy(), &dir.join("a"));
    let b = export(&fixtures::conv_heavy(), &dir.join("b"));
    let plan_a = compile(&a);
    let plan_b = compile(&b);
    assert_eq!(fs::read(plan_a).unwrap(), fs::read(plan_b).unwrap());
}

#[test]
fn missing_schema_file_exits_2() {
    let dir = work_dir("missing_schema");
    let fx = export(&fixtures::passthrough(), &dir);
    let out = bin()
        .args([
            "compile",
            "--circuit",
            fx.join("circuit.json").to_str().unwrap(),
            "--schema",
            fx.join("no_such_schema.json").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("no_such_schema.json"), "stderr: {stderr}");
}

#[test]
fn malformed_circuit_exits_2() {
    let dir = work_dir("malformed_circuit");
    let fx = export(&fixtures::passthrough(), &dir);
    let broken = dir.join("broken.json");
    fs::write(&broken, "{]").unwrap();
    let out = bin()
        .args([
            "compile",
            "--circuit",
            broken.to_str().unwrap(),
            "--schema",
            fx.join("schema.json").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_identity_returns_the_input_exactly() {
    let dir = work_dir("run_identity");
    let fx = export(&fixtures::passthrough(), &dir);
    let plan = compile(&fx);
    let out = succeed(bin().args(run_args(&fx, &plan)));

    let report = json(&out.stdout);
    let input = json(&fs::read(fx.join("input.json")).unwrap());
    assert_eq!(report["output"]["values"], input["image"]);
    assert_eq!(report["rotationsUsed"], serde_json::json!([]));
    assert!(report["wallTimeMs"].is_number());
    assert!(report.get("maxDeviation").is_none());
}

#[test]
fn run_report_files_are_byte_identical_given_the_seed() {
    let dir = work_dir("run_determinism");
    let fx = export(&fixtures::activation_chain(), &dir);
    let plan = compile(&fx);
    let mut reports = Vec::new();
    for name in ["r1.json", "r2.json"] {
        let path = dir.join(name);
        let mut args = run_args(&fx, &plan);
        args.extend(
            [
                "--mode",
                "noisy",
                "--seed",
                "7",
                "--out",
                path.to_str().unwrap(),
            ]
            .map(String::from),
        );
        succeed(bin().args(&args));
        reports.push(fs::read(&path).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    // The file form trades the wall time for reproducible bytes.
    assert!(json(&reports[0]).get("wallTimeMs").is_none());
}

#[test]
fn run_check_stays_under_the_output_precision() {
    let dir = work_dir("run_check");
    let fx = export(&fixtures::lenet_small(), &dir);
    let plan_path = compile(&fx);
    let plan = CompilationPlan::from_json(&fs::read_to_string(&plan_path).unwrap()).unwrap();

    let mut args = run_args(&fx, &plan_path);
    args.push("--check".into());
    let report = json(&succeed(bin().args(&args)).stdout);

    let bound = (2.0f64).powi(-plan.output_precision_log);
    let dev = report["maxDeviation"].as_f64().unwrap();
    assert!(dev <= bound, "deviation {dev} over bound {bound}");
}

#[test]
fn a_foreign_plan_is_rejected() {
    let dir = work_dir("foreign_plan");
    let pt = export(&fixtures::passthrough(), &dir);
    let act = export(&fixtures::activation_chain(), &dir);
    let foreign = compile(&pt);

    let out = bin().args(run_args(&act, &foreign)).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("different circuit"), "stderr: {stderr}");
}

#[test]
fn analyze_emits_one_row_per_strategy() {
    let dir = work_dir("analyze_rows");
    let fx = export(&fixtures::conv_heavy(), &dir);
    let out = succeed(bin().args([
        "analyze",
        "--circuit",
        fx.join("circuit.json").to_str().unwrap(),
        "--schema",
        fx.join("schema.json").to_str().unwrap(),
    ]));

    let table = json(&out.stdout);
    let rows = table["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    let chosen: Vec<&Value> = rows.iter().filter(|r| r["chosen"] == true).collect();
    assert_eq!(chosen.len(), 1);
    assert_eq!(chosen[0]["strategy"], table["chosen"]);
    // The flagged row is the cheapest feasible one.
    let best = rows
        .iter()
        .filter(|r| r["feasible"] == true)
        .min_by_key(|r| r["totalCost"].as_u64().unwrap())
        .unwrap();
    assert_eq!(best["strategy"], table["chosen"]);
}

#[test]
fn analyze_single_layout_dumps_the_trace() {
    let dir = work_dir("analyze_trace");
    let fx = export(&fixtures::passthrough(), &dir);
    let trace_path = dir.join("trace.txt");
    let table_path = dir.join("table.json");
    succeed(bin().args([
        "analyze",
        "--circuit",
        fx.join("circuit.json").to_str().unwrap(),
        "--schema",
        fx.join("schema.json").to_str().unwrap(),
        "--layouts",
        "hw",
        "--dump-trace",
        trace_path.to_str().unwrap(),
        "--out",
        table_path.to_str().unwrap(),
    ]));

    let table = json(&fs::read(&table_path).unwrap());
    assert_eq!(table["rows"].as_array().unwrap().len(), 1);
    assert_eq!(
        fs::read_to_string(&trace_path).unwrap(),
        "encode 30 -> pt0\n\
         encrypt pt0 -> ct1\n\
         free pt0 -> _\n\
         decrypt ct1 -> pt2\n\
         decode pt2 -> _\n\
         free pt2 -> _\n\
         free ct1 -> _\n"
    );
}

#[test]
fn an_unknown_layout_name_exits_2() {
    let out = bin()
        .args([
            "analyze",
            "--circuit",
            "c.json",
            "--schema",
            "s.json",
            "--layouts",
            "diagonal",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
