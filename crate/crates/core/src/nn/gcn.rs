//! GCN text projector: `H⁽ˡ⁺¹⁾ = σ(D⁻¹A H⁽ˡ⁾ W⁽ˡ⁾)`, ReLU on all but the
//! last layer, rows L2-normalized at the output.

use crate::error::{Error, Result};
use crate::graph::SemanticGraph;
use crate::linalg::{normalize_rows, normalize_rows_backward, Matrix};

#[derive(Debug, Clone)]
pub struct GcnTrace {
    propagation: Matrix,
    /// `D⁻¹A H⁽ˡ⁾` per layer.
    aggregated: Vec<Matrix>,
    /// `D⁻¹A H⁽ˡ⁾ W⁽ˡ⁾` per layer.
    pre_activations: Vec<Matrix>,
    weights: Vec<Matrix>,
    output: Matrix,
    output_norms: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct GcnGrads {
    pub weights: Vec<Matrix>,
    pub h0: Matrix,
}

pub fn gcn_forward(graph: &SemanticGraph, h0: &Matrix, weights: &[Matrix]) -> Result<(Matrix, GcnTrace)> {
    let nodes = graph.node_count();
    if h0.rows() != nodes {
        return Err(Error::shape("gcn_forward h0 rows", nodes, h0.rows()));
    }
    let mut width = h0.cols();
    for (l, w) in weights.iter().enumerate() {
        if w.rows() != width {
            return Err(Error::shape(&format!("gcn_forward W{l} rows"), width, w.rows()));
        }
        width = w.cols();
    }

    let a = &graph.norm_adjacency;
    let mut h = h0.clone();
    let mut aggregated = Vec::with_capacity(weights.len());
    let mut pre_activations = Vec::with_capacity(weights.len());
    for (l, w) in weights.iter().enumerate() {
        let agg = a.matmul(&h)?;
        let pre = agg.matmul(w)?;
        h = if l + 1 < weights.len() {
            pre.map(|v| v.max(0.0))
        } else {
            pre.clone()
        };
        aggregated.push(agg);
        pre_activations.push(pre);
    }
    let (output, output_norms) = normalize_rows(&h)?;
    let trace = GcnTrace {
        propagation: a.clone(),
        aggregated,
        pre_activations,
        weights: weights.to_vec(),
        output: output.clone(),
        output_norms,
    };
    Ok((output, trace))
}

pub fn gcn_backward(trace: &GcnTrace, grad_ybar: &Matrix) -> Result<GcnGrads> {
    if grad_ybar.shape() != trace.output.shape() {
        return Err(Error::shape(
            "gcn_backward grad_ybar",
            format!("{:?}", trace.output.shape()),
            format!("{:?}", grad_ybar.shape()),
        ));
    }
    let layers = trace.weights.len();
    let mut g = normalize_rows_backward(&trace.output, &trace.output_norms, grad_ybar);
    let mut weight_grads = vec![Matrix::zeros(0, 0); layers];
    for l in (0..layers).rev() {
        if l + 1 < layers {
            let pre = &trace.pre_activations[l];
            for (gv, &p) in g.as_mut_slice().iter_mut().zip(pre.as_slice()) {
                if p <= 0.0 {
                    *gv = 0.0;
                }
            }
        }
        weight_grads[l] = trace.aggregated[l].t_matmul(&g)?;
        let d_agg = g.matmul_t(&trace.weights[l])?;
        g = trace.propagation.t_matmul(&d_agg)?;
    }
    Ok(GcnGrads {
        weights: weight_grads,
        h0: g,
    })
}
