//! Input padding selection. Rotations cannot grow a ciphertext, so
//! every zero slot a same-padded convolution will ever read must be
//! reserved when the input is first packed. The pass walks the circuit
//! backwards and accumulates, per edge, the margin (in pixels per
//! side) that downstream ops need; pooling scales the requirement by
//! its stride because a margin of one output pixel spans `stride`
//! input pixels.

use crate::circuit::{Circuit, OpKind};
use crate::tensor::Padding;
use std::collections::BTreeMap;

/// `(rows, cols)` of zero margin required on each side of every edge.
pub fn edge_margins(circuit: &Circuit) -> BTreeMap<String, (usize, usize)> {
    let mut req: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for name in circuit.inputs.keys() {
        req.insert(name.clone(), (0, 0));
    }
    for n in &circuit.nodes {
        req.insert(n.id.clone(), (0, 0));
    }
    // Node order is topological, so a reverse walk sees every consumer
    // of an edge before the edge's producer.
    for n in circuit.nodes.iter().rev() {
        let out = req[&n.id];
        let need = match &n.op {
            OpKind::Conv2d {
                filter_shape,
                padding,
                ..
            } => {
                let own = match padding {
                    Padding::Same => (filter_shape[0] / 2, filter_shape[1] / 2),
                    Padding::Valid => (0, 0),
                };
                (own.0.max(out.0), own.1.max(out.1))
            }
            OpKind::AvgPool { stride, .. } => (out.0 * stride, out.1 * stride),
            OpKind::PolyAct { .. } => out,
            // Margins are a spatial notion; nothing propagates through
            // a flatten or a fully connected layer.
            OpKind::Reshape { .. } | OpKind::Matmul { .. } => (0, 0),
        };
        let e = req.get_mut(&n.input).expect("validated edge");
        e.0 = e.0.max(need.0);
        e.1 = e.1.max(need.1);
    }
    req
}

/// The subset of [`edge_margins`] for the circuit inputs.
pub fn input_margins(circuit: &Circuit) -> BTreeMap<String, (usize, usize)> {
    let all = edge_margins(circuit);
    circuit.inputs.keys().map(|k| (k.clone(), all[k])).collect()
}
