//! Trainable tensors, forward/backward passes and the Adam optimizer.
//!
//! Parameters are held in `f64` for exact gradient checks, but every value
//! written by [`adam_step`] is rounded through `f32`, so checkpoints store
//! them without loss.

mod adam;
mod gcn;
mod projector;

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use gcn::{gcn_backward, gcn_forward, GcnGrads, GcnTrace};
pub use projector::{projector_backward, projector_forward, ProjectorGrads, ProjectorTrace};

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Visual projector `z = norm(ReLU(x·W1 + b1)·W2 + b2)`. Biases are `1 × width`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectorWeights {
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
}

/// Every trainable tensor. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    /// `W^(l)`, shape `d_l × d_{l+1}`.
    pub gcn: Vec<Matrix>,
    pub proj: ProjectorWeights,
    /// Learnable per-class prompt features, `|C_kwn| × d_out`.
    pub prompts: Matrix,
}

pub type Gradients = Weights;

impl Weights {
    /// Stable tensor names, in serialization order.
    pub fn named(&self) -> Vec<(String, &Matrix)> {
        let mut out: Vec<(String, &Matrix)> = self
            .gcn
            .iter()
            .enumerate()
            .map(|(l, w)| (format!("gcn.{l}"), w))
            .collect();
        out.push(("proj.w1".into(), &self.proj.w1));
        out.push(("proj.b1".into(), &self.proj.b1));
        out.push(("proj.w2".into(), &self.proj.w2));
        out.push(("proj.b2".into(), &self.proj.b2));
        out.push(("prompts".into(), &self.prompts));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out: Vec<&mut Matrix> = self.gcn.iter_mut().collect();
        out.push(&mut self.proj.w1);
        out.push(&mut self.proj.b1);
        out.push(&mut self.proj.w2);
        out.push(&mut self.proj.b2);
        out.push(&mut self.prompts);
        out
    }

    pub fn zeros_like(&self) -> Self {
        let z = |m: &Matrix| Matrix::zeros(m.rows(), m.cols());
        Self {
            gcn: self.gcn.iter().map(z).collect(),
            proj: ProjectorWeights {
                w1: z(&self.proj.w1),
                b1: z(&self.proj.b1),
                w2: z(&self.proj.w2),
                b2: z(&self.proj.b2),
            },
            prompts: z(&self.prompts),
        }
    }

    pub fn same_shapes(&self, other: &Weights) -> bool {
        let a = self.named();
        let b = other.named();
        a.len() == b.len()
            && a.iter()
                .zip(&b)
                .all(|((na, ma), (nb, mb))| na == nb && ma.shape() == mb.shape())
    }

    pub fn is_finite(&self) -> bool {
        self.named().iter().all(|(_, m)| m.is_finite())
    }
}

/// Network dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelShape {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub gcn_layers: usize,
    pub classes: usize,
}

impl ModelShape {
    /// `(in, out)` of each GCN layer.
    pub fn gcn_dims(&self) -> Vec<(usize, usize)> {
        (0..self.gcn_layers)
            .map(|l| {
                let fan_in = if l == 0 { self.input_dim } else { self.hidden_dim };
                let fan_out = if l + 1 == self.gcn_layers {
                    self.output_dim
                } else {
                    self.hidden_dim
                };
                (fan_in, fan_out)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub shape: ModelShape,
    pub weights: Weights,
    pub adam: AdamState,
}

impl ModelParams {
    /// Glorot-uniform weights, zero biases. Values are f32-representable.
    pub fn init<R: Rng>(shape: ModelShape, rng: &mut R) -> Result<Self> {
        if shape.input_dim == 0 || shape.hidden_dim == 0 || shape.output_dim == 0 {
            return Err(Error::InvalidArgument(format!(
                "model dimensions must be positive: {shape:?}"
            )));
        }
        if shape.gcn_layers == 0 && shape.input_dim != shape.output_dim {
            return Err(Error::InvalidArgument(format!(
                "without GCN layers the output dim must equal the input dim ({} != {})",
                shape.output_dim, shape.input_dim
            )));
        }
        let gcn = shape.gcn_dims().into_iter().map(|(i, o)| glorot(i, o, rng)).collect();
        let proj = ProjectorWeights {
            w1: glorot(shape.input_dim, shape.hidden_dim, rng),
            b1: Matrix::zeros(1, shape.hidden_dim),
            w2: glorot(shape.hidden_dim, shape.output_dim, rng),
            b2: Matrix::zeros(1, shape.output_dim),
        };
        let prompts = glorot(shape.classes, shape.output_dim, rng);
        let weights = Weights { gcn, proj, prompts };
        let adam = AdamState::new(&weights);
        Ok(Self { shape, weights, adam })
    }
}

fn glorot<R: Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> Matrix {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Matrix::from_fn(fan_in, fan_out, |_, _| {
        let u: f64 = rng.random_range(-limit..limit);
        u as f32 as f64
    })
}
