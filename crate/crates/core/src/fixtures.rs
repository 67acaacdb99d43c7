//! Deterministic circuits with bound data, used across the test suite
//! and exportable as files for the command line tool. All values sit
//! on a coarse power-of-two grid so exact-mode runs are reproducible
//! down to the last bit.

use crate::circuit::{Circuit, CircuitNode, OpKind, Schema, TensorSpec};
use crate::tensor::{
    avg_pool_plain, conv2d_plain, matmul_plain, poly_act_plain, Padding, PlainTensor,
};
use crate::{rat_from_f64, Rat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

/// A circuit together with everything needed to run it.
#[derive(Clone, PartialEq, Debug)]
pub struct Fixture {
    pub name: String,
    pub circuit: Circuit,
    pub schema: Schema,
    pub inputs: BTreeMap<String, PlainTensor>,
    pub weights: BTreeMap<String, PlainTensor>,
}

/// Values on the 2^-12 grid in [-1, 1].
fn grid_tensor(rng: &mut ChaCha12Rng, shape: Vec<usize>) -> PlainTensor {
    let len: usize = shape.iter().product();
    let data: Vec<Rat> = (0..len)
        .map(|_| Rat::new(rng.gen_range(-4096i64..=4096).into(), 4096.into()))
        .collect();
    PlainTensor::new(shape, data).expect("shape matches data")
}

fn bind(fixture_seed: u64, name: &str, circuit: Circuit, weight_precision: i32) -> Fixture {
    let mut rng = ChaCha12Rng::seed_from_u64(fixture_seed);
    let schema = circuit.schema(weight_precision);
    let inputs = circuit
        .inputs
        .iter()
        .map(|(k, s)| (k.clone(), grid_tensor(&mut rng, s.shape.clone())))
        .collect();
    let weights = schema
        .weights
        .iter()
        .map(|(k, s)| (k.clone(), grid_tensor(&mut rng, s.shape.clone())))
        .collect();
    Fixture {
        name: name.into(),
        circuit,
        schema,
        inputs,
        weights,
    }
}

fn conv(id: &str, input: &str, f: [usize; 4], padding: Padding) -> CircuitNode {
    CircuitNode {
        id: id.into(),
        op: OpKind::Conv2d {
            filter_shape: f,
            padding,
            weights: format!("w_{id}"),
        },
        input: input.into(),
    }
}

fn fc(id: &str, input: &str, k: usize, m: usize) -> CircuitNode {
    CircuitNode {
        id: id.into(),
        op: OpKind::Matmul {
            shape: [k, m],
            weights: format!("w_{id}"),
        },
        input: input.into(),
    }
}

fn act(id: &str, input: &str) -> CircuitNode {
    CircuitNode {
        id: id.into(),
        op: OpKind::PolyAct { a: 0.25, b: 0.5 },
        input: input.into(),
    }
}

fn square(id: &str, input: &str) -> CircuitNode {
    CircuitNode {
        id: id.into(),
        op: OpKind::PolyAct { a: 1.0, b: 0.0 },
        input: input.into(),
    }
}

fn pool(id: &str, input: &str, window: usize) -> CircuitNode {
    CircuitNode {
        id: id.into(),
        op: OpKind::AvgPool {
            window,
            stride: window,
        },
        input: input.into(),
    }
}

fn reshape_node(id: &str, input: &str, shape: Vec<usize>) -> CircuitNode {
    CircuitNode {
        id: id.into(),
        op: OpKind::Reshape { shape },
        input: input.into(),
    }
}

fn single_input(shape: Vec<usize>, precision_log: i32) -> BTreeMap<String, TensorSpec> {
    BTreeMap::from([(
        "image".to_string(),
        TensorSpec {
            shape,
            precision_log,
        },
    )])
}

/// Small image classifier: two valid 5x5 conv blocks with squaring
/// activation and 2x2 pooling, then two fully connected layers.
pub fn lenet_small() -> Fixture {
    let circuit = Circuit {
        nodes: vec![
            conv("conv1", "image", [5, 5, 1, 4], Padding::Valid),
            square("act1", "conv1"),
            pool("pool1", "act1", 2),
            conv("conv2", "pool1", [5, 5, 4, 8], Padding::Valid),
            square("act2", "conv2"),
            pool("pool2", "act2", 2),
            reshape_node("flat", "pool2", vec![1, 128]),
            fc("fc1", "flat", 128, 32),
            square("act3", "fc1"),
            fc("fc2", "act3", 32, 10),
        ],
        inputs: single_input(vec![1, 1, 28, 28], 30),
        output_precision_log: 20,
    };
    bind(101, "lenet_small", circuit, 16)
}

/// Convolution-dominated network: three same-padded conv layers on a
/// wide image, one token fully connected layer at the end.
pub fn conv_heavy() -> Fixture {
    let circuit = Circuit {
        nodes: vec![
            conv("conv1", "image", [3, 3, 2, 8], Padding::Same),
            act("act1", "conv1"),
            conv("conv2", "act1", [3, 3, 8, 8], Padding::Same),
            act("act2", "conv2"),
            conv("conv3", "act2", [3, 3, 8, 8], Padding::Same),
            pool("pool1", "conv3", 2),
            reshape_node("flat", "pool1", vec![1, 8 * 8 * 8]),
            fc("fc1", "flat", 8 * 8 * 8, 4),
        ],
        inputs: single_input(vec![1, 2, 16, 16], 30),
        output_precision_log: 20,
    };
    bind(202, "conv_heavy", circuit, 16)
}

/// Fully-connected-dominated network: one small conv, then a deep
/// stack of wide dense layers.
pub fn fc_heavy() -> Fixture {
    let circuit = Circuit {
        nodes: vec![
            conv("conv1", "image", [3, 3, 4, 4], Padding::Valid),
            pool("pool1", "conv1", 2),
            reshape_node("flat", "pool1", vec![1, 4 * 3 * 3]),
            fc("fc1", "flat", 36, 32),
            act("act1", "fc1"),
            fc("fc2", "act1", 32, 32),
            act("act2", "fc2"),
            fc("fc3", "act2", 32, 16),
            act("act3", "fc3"),
            fc("fc4", "act3", 16, 8),
        ],
        inputs: single_input(vec![1, 4, 8, 8], 30),
        output_precision_log: 20,
    };
    bind(303, "fc_heavy", circuit, 16)
}

/// Three chained activations on a flat vector; the modulus arithmetic
/// for this one is easy to check by hand.
pub fn activation_chain() -> Fixture {
    let circuit = Circuit {
        nodes: vec![
            act("act1", "image"),
            act("act2", "act1"),
            act("act3", "act2"),
        ],
        inputs: BTreeMap::from([(
            "image".to_string(),
            TensorSpec {
                shape: vec![1, 8],
                precision_log: 20,
            },
        )]),
        output_precision_log: 30,
    };
    bind(404, "activation_chain", circuit, 10)
}

/// A circuit that moves data without consuming any modulus.
pub fn passthrough() -> Fixture {
    let circuit = Circuit {
        nodes: vec![reshape_node("out", "image", vec![1, 16])],
        inputs: BTreeMap::from([(
            "image".to_string(),
            TensorSpec {
                shape: vec![1, 16],
                precision_log: 30,
            },
        )]),
        output_precision_log: 30,
    };
    bind(505, "passthrough", circuit, 16)
}

/// Activation whose coefficients sit on the coarse grid; with an
/// integer quadratic term the rescale stays at the squaring cost.
fn grid_act(rng: &mut ChaCha12Rng, id: &str, input: &str) -> CircuitNode {
    let (a, b) = [(1.0, 0.0), (1.0, 0.5), (2.0, -0.5), (1.0, 0.25)][rng.gen_range(0..4)];
    CircuitNode {
        id: id.into(),
        op: OpKind::PolyAct { a, b },
        input: input.into(),
    }
}

/// Random small network. Shapes stay within an 8x8 image and 8
/// channels; one to four layers, optionally ending fully connected.
pub fn random_circuit(seed: u64) -> Fixture {
    let mut rng = ChaCha12Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let b = 1usize;
    let mut c = [1usize, 2, 4][rng.gen_range(0..3)];
    let mut h = [4usize, 6, 8][rng.gen_range(0..3)];
    let mut w = h;
    let input_shape = vec![b, c, h, w];

    let mut nodes: Vec<CircuitNode> = Vec::new();
    let mut edge = "image".to_string();
    let mut flat: Option<usize> = None;
    let layers = rng.gen_range(1..=4);
    for i in 0..layers {
        let id = format!("n{i}");
        if let Some(k) = flat {
            // Once flattened, only dense layers and activations fit.
            let node = if rng.gen_bool(0.5) {
                let m = rng.gen_range(1..=8);
                let n = fc(&id, &edge, k, m);
                flat = Some(m);
                n
            } else {
                grid_act(&mut rng, &id, &edge)
            };
            nodes.push(node);
            edge = id;
            continue;
        }
        let choice = rng.gen_range(0..5);
        let node = match choice {
            0 => {
                let f = if h >= 3 && w >= 3 && rng.gen_bool(0.7) {
                    3
                } else {
                    1
                };
                let oc = rng.gen_range(1..=8);
                let padding = if f > 1 && rng.gen_bool(0.5) {
                    Padding::Same
                } else {
                    Padding::Valid
                };
                let n = conv(&id, &edge, [f, f, c, oc], padding);
                let (oh, ow) = crate::tensor::conv_output_hw(h, w, f, f, padding);
                c = oc;
                h = oh;
                w = ow;
                n
            }
            1 if h >= 2 && w >= 2 => {
                let window = if h >= 3 && w >= 3 && rng.gen_bool(0.3) {
                    3
                } else {
                    2
                };
                let n = pool(&id, &edge, window);
                h = (h - window) / window + 1;
                w = (w - window) / window + 1;
                n
            }
            2 => grid_act(&mut rng, &id, &edge),
            _ => {
                let k = c * h * w;
                let n = reshape_node(&id, &edge, vec![b, k]);
                flat = Some(k);
                n
            }
        };
        nodes.push(node);
        edge = id;
    }

    let circuit = Circuit {
        nodes,
        inputs: BTreeMap::from([(
            "image".to_string(),
            TensorSpec {
                shape: input_shape,
                precision_log: 30,
            },
        )]),
        output_precision_log: 20,
    };
    // Weight precision well above the output precision keeps the only
    // rounding source (non-dyadic pooling reciprocals) far below the
    // comparison tolerance even after amplification by later layers.
    bind(seed ^ 0xabcd, &format!("random_{seed}"), circuit, 40)
}

/// Evaluate the circuit over exact plaintext arithmetic.
pub fn reference_run(
    circuit: &Circuit,
    inputs: &BTreeMap<String, PlainTensor>,
    weights: &BTreeMap<String, PlainTensor>,
) -> PlainTensor {
    let mut edges: BTreeMap<&str, PlainTensor> = BTreeMap::new();
    for (k, v) in inputs {
        edges.insert(k, v.clone());
    }
    for n in &circuit.nodes {
        let x = edges[n.input.as_str()].clone();
        let out = match &n.op {
            OpKind::Conv2d {
                padding,
                weights: wn,
                ..
            } => conv2d_plain(&x, &weights[wn], *padding).expect("reference conv"),
            OpKind::Matmul { weights: wn, .. } => {
                matmul_plain(&x, &weights[wn]).expect("reference matmul")
            }
            OpKind::AvgPool { window, stride } => {
                avg_pool_plain(&x, *window, *stride).expect("reference pool")
            }
            OpKind::PolyAct { a, b } => poly_act_plain(&x, &rat_from_f64(*a), &rat_from_f64(*b)),
            OpKind::Reshape { shape } => x.reshape(shape.clone()).expect("reference reshape"),
        };
        edges.insert(&n.id, out);
    }
    let out = circuit.output_node().expect("validated circuit");
    edges.remove(out.id.as_str()).expect("output computed")
}

fn values_json(map: &BTreeMap<String, PlainTensor>) -> String {
    let flat: BTreeMap<&str, Vec<f64>> = map
        .iter()
        .map(|(k, t)| (k.as_str(), t.data().iter().map(crate::rat_to_f64).collect()))
        .collect();
    let mut s = serde_json::to_string_pretty(&flat).expect("values serialize");
    s.push('\n');
    s
}

/// Write `circuit.json`, `schema.json`, `input.json` and
/// `weights.json` for a fixture under `dir/<name>/`.
pub fn write_files(fixture: &Fixture, dir: &Path) -> std::io::Result<PathBuf> {
    let root = dir.join(&fixture.name);
    std::fs::create_dir_all(&root)?;
    let write = |name: &str, text: &str| -> std::io::Result<()> {
        let mut f = std::fs::File::create(root.join(name))?;
        f.write_all(text.as_bytes())
    };
    write("circuit.json", &fixture.circuit.to_json())?;
    write("schema.json", &fixture.schema.to_json())?;
    write("input.json", &values_json(&fixture.inputs))?;
    write("weights.json", &values_json(&fixture.weights))?;
    Ok(root)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_validate_and_are_deterministic() {
        for f in [
            lenet_small(),
            conv_heavy(),
            fc_heavy(),
            activation_chain(),
            passthrough(),
        ] {
            f.circuit.validate().expect("fixture circuit is valid");
            f.circuit.check_schema(&f.schema).expect("schema matches");
        }
        assert_eq!(lenet_small(), lenet_small());
        assert_eq!(random_circuit(7), random_circuit(7));
        assert_ne!(random_circuit(7), random_circuit(8));
    }

    #[test]
    fn random_circuits_validate() {
        for seed in 0..50 {
            let f = random_circuit(seed);
            f.circuit
                .validate()
                .unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        }
    }

    #[test]
    fn reference_run_matches_hand_computation() {
        let f = passthrough();
        let out = reference_run(&f.circuit, &f.inputs, &f.weights);
        assert_eq!(out.shape(), &[1, 16]);
        assert_eq!(out.data(), f.inputs["image"].data());
    }
}
