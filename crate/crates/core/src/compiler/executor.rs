//! Drives a circuit over any backend: packs the inputs according to
//! the layout strategy and padding requirements, runs each node
//! through its kernel (inserting layout conversions where the plan
//! switches family or a channel-blocked conv no longer fits), and
//! unpacks the output. Handles are freed as soon as their last
//! consumer has run; shared handles (reshape, identity conversion) are
//! reference counted.

use super::padding::edge_margins;
use super::plan::StrategyKind;
use super::CompileError;
use crate::circuit::{Circuit, CircuitNode, OpKind};
use crate::hisa::HisaBackend;
use crate::rat_from_f64;
use crate::tensor::{
    avg_pool, conv2d_chw, conv2d_chw_fits, conv2d_hw, convert_layout, matmul, pack,
    poly_activation, reshape, unpack, CipherTensor, CipherTensorMeta, LayoutFamily, PlainTensor,
    TensorError,
};
use std::collections::{BTreeMap, BTreeSet};

/// Half-open range of trace entries a node produced.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct NodeSpan {
    pub id: String,
    pub start: usize,
    pub end: usize,
}

pub struct ExecOutcome {
    pub output: PlainTensor,
    /// Layout of every edge as produced, keyed by input name or node id.
    pub layouts: BTreeMap<String, CipherTensorMeta>,
    pub spans: Vec<NodeSpan>,
}

/// Edges that feed a flatten; the mixed strategies repack exactly
/// these.
fn pre_flatten_edges(circuit: &Circuit) -> BTreeSet<String> {
    let shapes = match circuit.shapes() {
        Ok(s) => s,
        Err(_) => return BTreeSet::new(),
    };
    let mut set = BTreeSet::new();
    for n in &circuit.nodes {
        if let OpKind::Reshape { shape } = &n.op {
            if shape.len() <= 2 && shapes[&n.input].len() == 4 {
                set.insert(n.input.clone());
            }
        }
    }
    set
}

fn family_for(strategy: StrategyKind, edge: &str, pre_flatten: &BTreeSet<String>) -> LayoutFamily {
    let at_switch = pre_flatten.contains(edge);
    match strategy {
        StrategyKind::Hw => LayoutFamily::Hw,
        StrategyKind::Chw => LayoutFamily::Chw,
        StrategyKind::HwConv => {
            if at_switch {
                LayoutFamily::Chw
            } else {
                LayoutFamily::Hw
            }
        }
        StrategyKind::ChwFc => {
            if at_switch {
                LayoutFamily::Hw
            } else {
                LayoutFamily::Chw
            }
        }
    }
}

/// Canonical meta for packing or repacking a rank-4 tensor, given the
/// zero margin the edge must reserve. Spatial strides are kept when
/// repacking (rotations cannot restride), so `hs`/`ws` come from the
/// current layout if there is one.
fn canonical_meta(
    shape: [usize; 4],
    family: LayoutFamily,
    margins: (usize, usize),
    spatial: Option<(usize, usize)>,
    scale_log: i32,
    slots: usize,
) -> Result<CipherTensorMeta, TensorError> {
    let [_, _, h, w] = shape;
    let (hs, ws) = spatial.unwrap_or((w + 2 * margins.1, 1));
    match family {
        LayoutFamily::Hw => Ok(CipherTensorMeta::hw(shape, hs, ws, scale_log)),
        LayoutFamily::Chw => {
            let cs = (h + 2 * margins.0) * hs;
            CipherTensorMeta::chw(shape, cs, hs, ws, scale_log, slots)
        }
    }
}

struct Executor<'a, B: HisaBackend> {
    backend: &'a mut B,
    refcount: BTreeMap<u64, usize>,
}

impl<'a, B: HisaBackend> Executor<'a, B> {
    fn retain(&mut self, t: &CipherTensor) {
        for h in &t.handles {
            *self.refcount.entry(h.0).or_insert(0) += 1;
        }
    }

    fn release(&mut self, t: &CipherTensor) -> Result<(), TensorError> {
        for h in &t.handles {
            let rc = self
                .refcount
                .get_mut(&h.0)
                .expect("released handle was retained");
            *rc -= 1;
            if *rc == 0 {
                self.refcount.remove(&h.0);
                self.backend.free(*h)?;
            }
        }
        Ok(())
    }
}

pub fn execute_circuit<B: HisaBackend>(
    backend: &mut B,
    circuit: &Circuit,
    strategy: StrategyKind,
    inputs: &BTreeMap<String, PlainTensor>,
    weights: &BTreeMap<String, PlainTensor>,
) -> Result<ExecOutcome, CompileError> {
    circuit.validate()?;
    circuit.shapes()?;
    let margins = edge_margins(circuit);
    let pre_flatten = pre_flatten_edges(circuit);
    let pool_paths = circuit.pool_paths();
    let sigma = circuit.cipher_scale_log();
    let slots = backend.config().slot_count;
    let output_edge = circuit.output_node()?.id.clone();

    let mut consumers_left: BTreeMap<&str, usize> = BTreeMap::new();
    for n in &circuit.nodes {
        *consumers_left.entry(n.input.as_str()).or_insert(0) += 1;
    }

    let mut exec = Executor {
        backend,
        refcount: BTreeMap::new(),
    };
    let mut store: BTreeMap<String, CipherTensor> = BTreeMap::new();
    let mut layouts: BTreeMap<String, CipherTensorMeta> = BTreeMap::new();
    let mut spans = Vec::with_capacity(circuit.nodes.len());

    for (name, spec) in &circuit.inputs {
        let values = inputs
            .get(name)
            .ok_or_else(|| CompileError::MissingTensor(format!("input {name:?}")))?;
        if values.shape() != spec.shape {
            return Err(CompileError::MissingTensor(format!(
                "input {name:?} has shape {:?}, circuit expects {:?}",
                values.shape(),
                spec.shape
            )));
        }
        let meta = match spec.shape.len() {
            4 => {
                let family = family_for(strategy, name, &pre_flatten);
                let shape = [spec.shape[0], spec.shape[1], spec.shape[2], spec.shape[3]];
                canonical_meta(shape, family, margins[name], None, sigma, slots)?
            }
            2 => CipherTensorMeta::flat(spec.shape[0], spec.shape[1], sigma),
            r => {
                return Err(CompileError::Infeasible(format!(
                    "rank-{r} input {name:?} is not packable"
                )))
            }
        };
        let t = pack(exec.backend, values, &meta)?;
        exec.retain(&t);
        layouts.insert(name.clone(), t.meta.clone());
        store.insert(name.clone(), t);
    }

    for node in &circuit.nodes {
        let t_in = store[&node.input].clone();
        let used = ensure_for_consumer(
            &mut exec,
            &t_in,
            node,
            strategy,
            &pre_flatten,
            &margins,
            slots,
        )?;
        exec.retain(&used);
        // The span covers the node's own lowering; a layout conversion
        // demanded by a mixed strategy sits between spans.
        let start = exec.backend.trace().len();

        let get_weights = |name: &str| -> Result<&PlainTensor, CompileError> {
            weights
                .get(name)
                .ok_or_else(|| CompileError::MissingTensor(format!("weights {name:?}")))
        };
        let out = match &node.op {
            OpKind::Conv2d {
                padding,
                weights: wname,
                ..
            } => {
                let w = get_weights(wname)?;
                match used.meta.family() {
                    LayoutFamily::Hw => conv2d_hw(exec.backend, &used, w, *padding)?,
                    LayoutFamily::Chw => conv2d_chw(exec.backend, &used, w, *padding)?,
                }
            }
            OpKind::Matmul { weights: wname, .. } => {
                let w = get_weights(wname)?;
                matmul(exec.backend, &used, w, None)?
            }
            OpKind::AvgPool { window, stride } => {
                avg_pool(exec.backend, &used, *window, *stride, pool_paths[&node.id])?
            }
            OpKind::PolyAct { a, b } => {
                poly_activation(exec.backend, &used, &rat_from_f64(*a), &rat_from_f64(*b))?
            }
            OpKind::Reshape { shape } => reshape(&used, shape)?,
        };
        exec.retain(&out);
        exec.release(&used)?;
        layouts.insert(node.id.clone(), out.meta.clone());
        store.insert(node.id.clone(), out);
        spans.push(NodeSpan {
            id: node.id.clone(),
            start,
            end: exec.backend.trace().len(),
        });

        let left = consumers_left
            .get_mut(node.input.as_str())
            .expect("consumer counted");
        *left -= 1;
        if *left == 0 && node.input != output_edge {
            let done = store.remove(&node.input).expect("edge stored");
            exec.release(&done)?;
        }
    }

    let out_tensor = store.remove(&output_edge).expect("output edge stored");
    // Inputs nothing consumed are still live; drop them before the
    // output so the trace ends tidy.
    let leftovers: Vec<String> = store.keys().cloned().collect();
    for name in leftovers {
        let t = store.remove(&name).expect("listed edge");
        exec.release(&t)?;
    }
    let output = unpack(exec.backend, &out_tensor)?;
    exec.release(&out_tensor)?;
    Ok(ExecOutcome {
        output,
        layouts,
        spans,
    })
}

fn ensure_for_consumer<B: HisaBackend>(
    exec: &mut Executor<'_, B>,
    t: &CipherTensor,
    node: &CircuitNode,
    strategy: StrategyKind,
    pre_flatten: &BTreeSet<String>,
    margins: &BTreeMap<String, (usize, usize)>,
    slots: usize,
) -> Result<CipherTensor, CompileError> {
    let share = |t: &CipherTensor| CipherTensor::new(t.handles.clone(), t.meta.clone());
    if t.meta.logical_dims.len() != 4 {
        return Ok(share(t)?);
    }
    let desired = family_for(strategy, &node.input, pre_flatten);
    let shape = [
        t.meta.logical_dims[0],
        t.meta.logical_dims[1],
        t.meta.logical_dims[2],
        t.meta.logical_dims[3],
    ];
    let margin = margins[&node.input];
    let spatial = {
        let s = &t.meta.inner_strides;
        Some((s[s.len() - 2], s[s.len() - 1]))
    };
    let mut cur = if t.meta.family() != desired {
        let target = canonical_meta(shape, desired, margin, spatial, t.meta.scale_log, slots)?;
        convert_layout(exec.backend, t, &target)?
    } else {
        share(t)?
    };
    // A channel-blocked conv may have outgrown the block the producer
    // chose (replication doubles the span); repack compactly and
    // retry before giving up.
    if let OpKind::Conv2d {
        filter_shape,
        padding,
        ..
    } = &node.op
    {
        let [fh, fw, _, oc] = *filter_shape;
        if desired == LayoutFamily::Chw && !conv2d_chw_fits(&cur.meta, fh, fw, oc, *padding, slots)
        {
            let refit = canonical_meta(shape, desired, margin, spatial, t.meta.scale_log, slots)?;
            if refit != cur.meta {
                let repacked = convert_layout(exec.backend, &cur, &refit)?;
                // The first conversion's handles may be orphaned here;
                // retain/release them so they are freed unless shared.
                exec.retain(&cur);
                exec.release(&cur)?;
                cur = repacked;
            }
            if !conv2d_chw_fits(&cur.meta, fh, fw, oc, *padding, slots) {
                let block = cur.meta.inner_dims[0] * cur.meta.inner_strides[0];
                return Err(CompileError::Tensor(TensorError::CipherCapacity {
                    need: 2 * block,
                    slots,
                }));
            }
        }
    }
    Ok(cur)
}
