//! Tensor circuits: a DAG of unary operations over named edges. Nodes
//! consume either a circuit input or another node's output by name;
//! weights are not edges, they are referenced by name and bound to
//! values only at run time. The compiler works on the circuit alone.

use crate::tensor::{conv_output_hw, Padding, PoolPath};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Clone, PartialEq, Debug, Error)]
pub enum CircuitError {
    #[error("circuit parse error: {0}")]
    Parse(String),

    #[error("invalid circuit: {0}")]
    Validation(String),

    #[error("shape error at node {node}: {reason}")]
    Shape { node: String, reason: String },
}

#[derive(Clone, PartialEq, Debug)]
pub enum OpKind {
    Conv2d {
        filter_shape: [usize; 4],
        padding: Padding,
        weights: String,
    },
    Matmul {
        shape: [usize; 2],
        weights: String,
    },
    AvgPool {
        window: usize,
        stride: usize,
    },
    PolyAct {
        a: f64,
        b: f64,
    },
    Reshape {
        shape: Vec<usize>,
    },
}

impl OpKind {
    pub fn name(&self) -> &'static str {
        match self {
            OpKind::Conv2d { .. } => "conv2d",
            OpKind::Matmul { .. } => "matmul",
            OpKind::AvgPool { .. } => "avgPool",
            OpKind::PolyAct { .. } => "polyAct",
            OpKind::Reshape { .. } => "reshape",
        }
    }

    /// Name of the weight tensor this op reads, if any.
    pub fn weights_name(&self) -> Option<&str> {
        match self {
            OpKind::Conv2d { weights, .. } | OpKind::Matmul { weights, .. } => Some(weights),
            _ => None,
        }
    }

    pub fn weights_shape(&self) -> Option<Vec<usize>> {
        match self {
            OpKind::Conv2d { filter_shape, .. } => Some(filter_shape.to_vec()),
            OpKind::Matmul { shape, .. } => Some(shape.to_vec()),
            _ => None,
        }
    }

    fn attrs(&self) -> Value {
        match self {
            OpKind::Conv2d {
                filter_shape,
                padding,
                weights,
            } => json!({
                "filterShape": filter_shape,
                "padding": padding,
                "weights": weights,
            }),
            OpKind::Matmul { shape, weights } => json!({
                "shape": shape,
                "weights": weights,
            }),
            OpKind::AvgPool { window, stride } => json!({
                "window": window,
                "stride": stride,
            }),
            OpKind::PolyAct { a, b } => json!({ "a": a, "b": b }),
            OpKind::Reshape { shape } => json!({ "shape": shape }),
        }
    }

    fn from_raw(op: &str, attrs: Value) -> Result<OpKind, CircuitError> {
        let bad = |e: serde_json::Error| CircuitError::Parse(format!("{op} attrs: {e}"));
        match op {
            "conv2d" => {
                #[derive(Deserialize)]
                #[serde(rename_all = "camelCase", deny_unknown_fields)]
                struct A {
                    filter_shape: [usize; 4],
                    padding: Padding,
                    weights: String,
                }
                let a: A = serde_json::from_value(attrs).map_err(bad)?;
                Ok(OpKind::Conv2d {
                    filter_shape: a.filter_shape,
                    padding: a.padding,
                    weights: a.weights,
                })
            }
            "matmul" => {
                #[derive(Deserialize)]
                #[serde(deny_unknown_fields)]
                struct A {
                    shape: [usize; 2],
                    weights: String,
                }
                let a: A = serde_json::from_value(attrs).map_err(bad)?;
                Ok(OpKind::Matmul {
                    shape: a.shape,
                    weights: a.weights,
                })
            }
            "avgPool" => {
                #[derive(Deserialize)]
                #[serde(deny_unknown_fields)]
                struct A {
                    window: usize,
                    stride: usize,
                }
                let a: A = serde_json::from_value(attrs).map_err(bad)?;
                Ok(OpKind::AvgPool {
                    window: a.window,
                    stride: a.stride,
                })
            }
            "polyAct" => {
                #[derive(Deserialize)]
                #[serde(deny_unknown_fields)]
                struct A {
                    a: f64,
                    b: f64,
                }
                let a: A = serde_json::from_value(attrs).map_err(bad)?;
                Ok(OpKind::PolyAct { a: a.a, b: a.b })
            }
            "reshape" => {
                #[derive(Deserialize)]
                #[serde(deny_unknown_fields)]
                struct A {
                    shape: Vec<usize>,
                }
                let a: A = serde_json::from_value(attrs).map_err(bad)?;
                Ok(OpKind::Reshape { shape: a.shape })
            }
            other => Err(CircuitError::Parse(format!("unknown op {other:?}"))),
        }
    }
}

#[derive(Clone, PartialEq, Debug)]
pub struct CircuitNode {
    pub id: String,
    pub op: OpKind,
    /// The single tensor edge this node consumes: a circuit input name
    /// or another node's id.
    pub input: String,
}

/// Declared shape and fixed-point precision of a named tensor.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct TensorSpec {
    pub shape: Vec<usize>,
    pub precision_log: i32,
}

#[derive(Clone, PartialEq, Debug)]
pub struct Circuit {
    pub nodes: Vec<CircuitNode>,
    pub inputs: BTreeMap<String, TensorSpec>,
    pub output_precision_log: i32,
}

/// What an execution environment must provide: the encrypted inputs
/// and the plaintext weight tensors, with shapes and precisions.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Schema {
    pub inputs: BTreeMap<String, TensorSpec>,
    pub weights: BTreeMap<String, TensorSpec>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    id: String,
    op: String,
    attrs: Value,
    inputs: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct RawCircuit {
    nodes: Vec<RawNode>,
    inputs: BTreeMap<String, TensorSpec>,
    output_precision_log: i32,
}

impl Circuit {
    pub fn from_json(text: &str) -> Result<Circuit, CircuitError> {
        let raw: RawCircuit =
            serde_json::from_str(text).map_err(|e| CircuitError::Parse(e.to_string()))?;
        let mut nodes = Vec::with_capacity(raw.nodes.len());
        for n in raw.nodes {
            if n.inputs.len() != 1 {
                return Err(CircuitError::Parse(format!(
                    "node {} must have exactly one input, has {}",
                    n.id,
                    n.inputs.len()
                )));
            }
            nodes.push(CircuitNode {
                op: OpKind::from_raw(&n.op, n.attrs)?,
                input: n.inputs.into_iter().next().unwrap(),
                id: n.id,
            });
        }
        let c = Circuit {
            nodes,
            inputs: raw.inputs,
            output_precision_log: raw.output_precision_log,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        let raw = RawCircuit {
            nodes: self
                .nodes
                .iter()
                .map(|n| RawNode {
                    id: n.id.clone(),
                    op: n.op.name().to_string(),
                    attrs: n.op.attrs(),
                    inputs: vec![n.input.clone()],
                })
                .collect(),
            inputs: self.inputs.clone(),
            output_precision_log: self.output_precision_log,
        };
        let mut s = serde_json::to_string_pretty(&raw).expect("circuit serializes");
        s.push('\n');
        s
    }

    pub fn node(&self, id: &str) -> Option<&CircuitNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// Node order is required to be topological: every edge must refer
    /// to a circuit input or an earlier node.
    pub fn validate(&self) -> Result<(), CircuitError> {
        if self.inputs.is_empty() {
            return Err(CircuitError::Validation("no inputs declared".into()));
        }
        if self.nodes.is_empty() {
            return Err(CircuitError::Validation("no nodes".into()));
        }
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        for n in &self.nodes {
            if self.inputs.contains_key(&n.id) || !seen.insert(&n.id) {
                return Err(CircuitError::Validation(format!("duplicate id {:?}", n.id)));
            }
            let known = self.inputs.contains_key(&n.input) || seen.contains(n.input.as_str());
            if !known {
                return Err(CircuitError::Validation(format!(
                    "node {:?} reads {:?} which is not an input or an earlier node",
                    n.id, n.input
                )));
            }
        }
        self.output_node()?;
        self.shapes()?;
        Ok(())
    }

    /// The unique node no other node consumes.
    pub fn output_node(&self) -> Result<&CircuitNode, CircuitError> {
        let consumed: BTreeSet<&str> = self.nodes.iter().map(|n| n.input.as_str()).collect();
        let mut sinks = self
            .nodes
            .iter()
            .filter(|n| !consumed.contains(n.id.as_str()));
        let first = sinks
            .next()
            .ok_or_else(|| CircuitError::Validation("circuit has no sink".into()))?;
        if let Some(second) = sinks.next() {
            return Err(CircuitError::Validation(format!(
                "two sinks: {:?} and {:?}; exactly one output is required",
                first.id, second.id
            )));
        }
        Ok(first)
    }

    /// Shape of every edge (inputs and node outputs) by name.
    pub fn shapes(&self) -> Result<BTreeMap<String, Vec<usize>>, CircuitError> {
        let mut shapes: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (name, spec) in &self.inputs {
            if spec.shape.is_empty() || spec.shape.contains(&0) {
                return Err(CircuitError::Validation(format!(
                    "input {name:?} has degenerate shape {:?}",
                    spec.shape
                )));
            }
            shapes.insert(name.clone(), spec.shape.clone());
        }
        for n in &self.nodes {
            let err = |reason: String| CircuitError::Shape {
                node: n.id.clone(),
                reason,
            };
            let input = shapes[&n.input].clone();
            let out = match &n.op {
                OpKind::Conv2d {
                    filter_shape,
                    padding,
                    ..
                } => {
                    let [fh, fw, ic, oc] = *filter_shape;
                    if input.len() != 4 {
                        return Err(err(format!("conv2d needs rank 4, got {input:?}")));
                    }
                    if input[1] != ic {
                        return Err(err(format!(
                            "filter expects {ic} channels, input has {}",
                            input[1]
                        )));
                    }
                    if *padding == Padding::Valid && (fh > input[2] || fw > input[3]) {
                        return Err(err(format!(
                            "filter {fh}x{fw} exceeds image {}x{}",
                            input[2], input[3]
                        )));
                    }
                    let (oh, ow) = conv_output_hw(input[2], input[3], fh, fw, *padding);
                    vec![input[0], oc, oh, ow]
                }
                OpKind::Matmul { shape, .. } => {
                    let [k, m] = *shape;
                    if input.len() != 2 {
                        return Err(err(format!("matmul needs rank 2, got {input:?}")));
                    }
                    if input[1] != k {
                        return Err(err(format!(
                            "weights expect {k} inputs, edge has {}",
                            input[1]
                        )));
                    }
                    vec![input[0], m]
                }
                OpKind::AvgPool { window, stride } => {
                    if input.len() != 4 {
                        return Err(err(format!("avgPool needs rank 4, got {input:?}")));
                    }
                    if *window == 0 || *stride == 0 || *window > input[2] || *window > input[3] {
                        return Err(err(format!(
                            "window {window} stride {stride} on {}x{}",
                            input[2], input[3]
                        )));
                    }
                    let oh = (input[2] - window) / stride + 1;
                    let ow = (input[3] - window) / stride + 1;
                    vec![input[0], input[1], oh, ow]
                }
                OpKind::PolyAct { .. } => input.clone(),
                OpKind::Reshape { shape } => {
                    let have: usize = input.iter().product();
                    let want: usize = shape.iter().product();
                    if have != want || shape.is_empty() || shape.contains(&0) {
                        return Err(err(format!("cannot reshape {input:?} to {shape:?}")));
                    }
                    shape.clone()
                }
            };
            shapes.insert(n.id.clone(), out);
        }
        Ok(shapes)
    }

    /// Derive the run-time schema, giving every weight tensor the same
    /// precision.
    pub fn schema(&self, weight_precision_log: i32) -> Schema {
        let mut weights = BTreeMap::new();
        for n in &self.nodes {
            if let (Some(name), Some(shape)) = (n.op.weights_name(), n.op.weights_shape()) {
                weights.insert(
                    name.to_string(),
                    TensorSpec {
                        shape,
                        precision_log: weight_precision_log,
                    },
                );
            }
        }
        Schema {
            inputs: self.inputs.clone(),
            weights,
        }
    }

    /// Check a schema against the circuit: every weight an op reads
    /// must be declared with the right shape, and inputs must agree.
    pub fn check_schema(&self, schema: &Schema) -> Result<(), CircuitError> {
        for (name, spec) in &self.inputs {
            match schema.inputs.get(name) {
                Some(s) if s.shape == spec.shape => {}
                Some(s) => {
                    return Err(CircuitError::Validation(format!(
                        "schema input {name:?} has shape {:?}, circuit expects {:?}",
                        s.shape, spec.shape
                    )))
                }
                None => {
                    return Err(CircuitError::Validation(format!(
                        "schema is missing input {name:?}"
                    )))
                }
            }
        }
        for n in &self.nodes {
            if let (Some(name), Some(shape)) = (n.op.weights_name(), n.op.weights_shape()) {
                match schema.weights.get(name) {
                    Some(s) if s.shape == shape => {}
                    Some(s) => {
                        return Err(CircuitError::Validation(format!(
                            "schema weight {name:?} has shape {:?}, node {:?} expects {shape:?}",
                            s.shape, n.id
                        )))
                    }
                    None => {
                        return Err(CircuitError::Validation(format!(
                            "schema is missing weight {name:?} for node {:?}",
                            n.id
                        )))
                    }
                }
            }
        }
        Ok(())
    }

    /// Pick the rescale path for every pooling node. The direct
    /// divisor is preferred (it costs fewer bits) but is only exact
    /// for power-of-two window areas, and it leaves the value scale
    /// ahead of the cipher scale, which a polynomial activation
    /// anywhere downstream cannot absorb.
    pub fn pool_paths(&self) -> BTreeMap<String, PoolPath> {
        let mut consumers: BTreeMap<&str, Vec<&CircuitNode>> = BTreeMap::new();
        for n in &self.nodes {
            consumers.entry(n.input.as_str()).or_default().push(n);
        }
        let mut out = BTreeMap::new();
        for n in &self.nodes {
            if let OpKind::AvgPool { window, .. } = n.op {
                let area = window * window;
                let mut act_downstream = false;
                let mut queue: Vec<&str> = vec![n.id.as_str()];
                while let Some(id) = queue.pop() {
                    for c in consumers.get(id).into_iter().flatten() {
                        if matches!(c.op, OpKind::PolyAct { .. }) {
                            act_downstream = true;
                        }
                        queue.push(c.id.as_str());
                    }
                }
                let path = if area.is_power_of_two() && !act_downstream {
                    PoolPath::Divisor
                } else {
                    PoolPath::Reciprocal
                };
                out.insert(n.id.clone(), path);
            }
        }
        out
    }

    /// Largest declared input precision; the cipher scale the whole
    /// pipeline runs at.
    pub fn cipher_scale_log(&self) -> i32 {
        self.inputs
            .values()
            .map(|s| s.precision_log)
            .max()
            .unwrap_or(0)
    }
}

impl Schema {
    pub fn from_json(text: &str) -> Result<Schema, CircuitError> {
        serde_json::from_str(text).map_err(|e| CircuitError::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("schema serializes");
        s.push('\n');
        s
    }

    /// Largest weight precision, or zero when the circuit is weightless.
    pub fn plain_scale_log(&self) -> i32 {
        self.weights
            .values()
            .map(|s| s.precision_log)
            .max()
            .unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_layer() -> Circuit {
        Circuit {
            nodes: vec![
                CircuitNode {
                    id: "c1".into(),
                    op: OpKind::Conv2d {
                        filter_shape: [3, 3, 1, 4],
                        padding: Padding::Same,
                        weights: "w1".into(),
                    },
                    input: "image".into(),
                },
                CircuitNode {
                    id: "p1".into(),
                    op: OpKind::AvgPool {
                        window: 2,
                        stride: 2,
                    },
                    input: "c1".into(),
                },
                CircuitNode {
                    id: "a1".into(),
                    op: OpKind::PolyAct { a: 1.0, b: 0.5 },
                    input: "p1".into(),
                },
            ],
            inputs: BTreeMap::from([(
                "image".to_string(),
                TensorSpec {
                    shape: vec![1, 1, 8, 8],
                    precision_log: 30,
                },
            )]),
            output_precision_log: 20,
        }
    }

    #[test]
    fn json_round_trip_preserves_everything() {
        let c = two_layer();
        let text = c.to_json();
        let back = Circuit::from_json(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn shapes_follow_the_ops() {
        let c = two_layer();
        let shapes = c.shapes().unwrap();
        assert_eq!(shapes["c1"], vec![1, 4, 8, 8]);
        assert_eq!(shapes["p1"], vec![1, 4, 4, 4]);
        assert_eq!(shapes["a1"], vec![1, 4, 4, 4]);
        assert_eq!(c.output_node().unwrap().id, "a1");
    }

    #[test]
    fn dangling_reference_is_rejected() {
        let mut c = two_layer();
        c.nodes[1].input = "ghost".into();
        assert!(matches!(c.validate(), Err(CircuitError::Validation(_))));
    }

    #[test]
    fn two_sinks_are_rejected() {
        let mut c = two_layer();
        c.nodes.push(CircuitNode {
            id: "extra".into(),
            op: OpKind::PolyAct { a: 0.0, b: 1.0 },
            input: "c1".into(),
        });
        assert!(matches!(c.validate(), Err(CircuitError::Validation(_))));
    }

    #[test]
    fn pool_before_activation_takes_the_reciprocal_path() {
        let c = two_layer();
        let paths = c.pool_paths();
        assert_eq!(paths["p1"], PoolPath::Reciprocal);

        let mut no_act = two_layer();
        no_act.nodes.pop();
        let paths = no_act.pool_paths();
        assert_eq!(paths["p1"], PoolPath::Divisor);
    }

    #[test]
    fn schema_check_catches_shape_drift() {
        let c = two_layer();
        let mut schema = c.schema(16);
        assert!(c.check_schema(&schema).is_ok());
        schema.weights.get_mut("w1").unwrap().shape = vec![5, 5, 1, 4];
        assert!(c.check_schema(&schema).is_err());
    }
}
