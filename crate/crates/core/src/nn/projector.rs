//! Two-layer visual projector with ReLU and output L2 normalization.

use super::ProjectorWeights;
use crate::error::{Error, Result};
use crate::linalg::{normalize_rows, normalize_rows_backward, Matrix};

#[derive(Debug, Clone)]
pub struct ProjectorTrace {
    input: Matrix,
    pre_hidden: Matrix,
    hidden: Matrix,
    w1: Matrix,
    w2: Matrix,
    output: Matrix,
    output_norms: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ProjectorGrads {
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
    pub x: Matrix,
}

fn add_bias(m: &mut Matrix, bias: &Matrix) {
    for r in 0..m.rows() {
        for (v, b) in m.row_mut(r).iter_mut().zip(bias.row(0)) {
            *v += b;
        }
    }
}

pub fn projector_forward(x: &Matrix, w: &ProjectorWeights) -> Result<(Matrix, ProjectorTrace)> {
    if let Some(i) = x.first_non_finite() {
        return Err(Error::NonFiniteValue {
            context: "projector input".into(),
            index: i,
        });
    }
    let hidden_width = w.w1.cols();
    let out_width = w.w2.cols();
    if x.cols() != w.w1.rows() {
        return Err(Error::shape("projector input width", w.w1.rows(), x.cols()));
    }
    if w.b1.shape() != (1, hidden_width) || w.w2.rows() != hidden_width || w.b2.shape() != (1, out_width) {
        return Err(Error::shape(
            "projector weights",
            format!("b1 1x{hidden_width}, w2 {hidden_width}xN, b2 1xN"),
            format!("b1 {:?}, w2 {:?}, b2 {:?}", w.b1.shape(), w.w2.shape(), w.b2.shape()),
        ));
    }
    let mut pre_hidden = x.matmul(&w.w1)?;
    add_bias(&mut pre_hidden, &w.b1);
    let hidden = pre_hidden.map(|v| v.max(0.0));
    let mut out = hidden.matmul(&w.w2)?;
    add_bias(&mut out, &w.b2);
    let (z, norms) = normalize_rows(&out)?;
    let trace = ProjectorTrace {
        input: x.clone(),
        pre_hidden,
        hidden,
        w1: w.w1.clone(),
        w2: w.w2.clone(),
        output: z.clone(),
        output_norms: norms,
    };
    Ok((z, trace))
}

pub fn projector_backward(trace: &ProjectorTrace, grad_z: &Matrix) -> Result<ProjectorGrads> {
    if grad_z.shape() != trace.output.shape() {
        return Err(Error::shape(
            "projector_backward grad_z",
            format!("{:?}", trace.output.shape()),
            format!("{:?}", grad_z.shape()),
        ));
    }
    let g_out = normalize_rows_backward(&trace.output, &trace.output_norms, grad_z);
    let w2 = trace.hidden.t_matmul(&g_out)?;
    let b2 = Matrix::from_vec(1, g_out.cols(), g_out.column_sums())?;
    let mut g_hidden = g_out.matmul_t(&trace.w2)?;
    for (g, &p) in g_hidden.as_mut_slice().iter_mut().zip(trace.pre_hidden.as_slice()) {
        if p <= 0.0 {
            *g = 0.0;
        }
    }
    let w1 = trace.input.t_matmul(&g_hidden)?;
    let b1 = Matrix::from_vec(1, g_hidden.cols(), g_hidden.column_sums())?;
    let x = g_hidden.matmul_t(&trace.w1)?;
    Ok(ProjectorGrads { w1, b1, w2, b2, x })
}
