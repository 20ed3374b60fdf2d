//! Minibatch training over the labeled split, plus GVLP checkpoints.
//!
//! # GVLP layout (little-endian)
//!
//! ```text
//! "GVLP" | version u32 | config_len u32 | config (UTF-8 key=value)
//! | epoch u32 | rng seed [u8; 32] | rng stream u64 | rng word_pos u128
//! | adam_step u64 | input_dim, hidden_dim, output_dim, gcn_layers, classes: u32
//! | tensor_count u32
//! | tensor_count × (name_len u32 | name | rank u32 | dims u32 × rank | f32 payload)
//! ```
//!
//! Tensors are the parameters, then `adam.m.*` and `adam.v.*` moments, then
//! `loss_trace` with one `[epoch, l_cma, l_sdp, l_cs, l_tot]` row per epoch.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::embed_io::{ByteCursor, EmbeddingSet, RunConfig};
use crate::error::{Error, Result};
use crate::graph::{build_knn_graph, Fnv, SemanticGraph};
use crate::linalg::{normalize_rows, normalize_rows_backward, Matrix};
use crate::losses::{loss_total, sample_triplets, Batch, LossBreakdown, LossVariant};
use crate::nn::{
    adam_step, gcn_backward, gcn_forward, projector_backward, projector_forward, AdamState, Gradients, ModelParams,
    ModelShape, ProjectorWeights, Weights,
};

pub const GVLP_MAGIC: [u8; 4] = *b"GVLP";
const GVLP_VERSION: u32 = 1;

/// Mean loss components over the steps of one epoch, stored at f32 precision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub epoch: usize,
    pub l_cma: f64,
    pub l_sdp: f64,
    pub l_cs: f64,
    pub l_tot: f64,
}

impl LossRecord {
    fn from_parts(epoch: usize, p: LossBreakdown) -> Self {
        let r = |v: f64| v as f32 as f64;
        Self {
            epoch,
            l_cma: r(p.cma),
            l_sdp: r(p.sdp),
            l_cs: r(p.cs),
            l_tot: r(p.total),
        }
    }
}

/// `epoch,l_cma,l_sdp,l_cs,l_tot` with a header row.
pub fn loss_trace_csv(trace: &[LossRecord]) -> String {
    let mut s = String::from("epoch,l_cma,l_sdp,l_cs,l_tot\n");
    for r in trace {
        let _ = writeln!(s, "{},{},{},{},{}", r.epoch, r.l_cma, r.l_sdp, r.l_cs, r.l_tot);
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub config: RunConfig,
    pub params: ModelParams,
    /// Epochs completed.
    pub epoch: usize,
    pub rng: ChaCha8Rng,
    pub trace: Vec<LossRecord>,
}

impl TrainState {
    /// Fresh parameters for the given data shapes, seeded from the config.
    pub fn new(config: RunConfig, input_dim: usize, known_classes: usize) -> Result<Self> {
        config.validate(Some(known_classes))?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let hidden = config.hidden_dim.unwrap_or(input_dim);
        let shape = ModelShape {
            input_dim,
            hidden_dim: hidden,
            output_dim: input_dim,
            gcn_layers: config.gcn_layers,
            classes: known_classes,
        };
        let params = ModelParams::init(shape, &mut rng)?;
        Ok(Self {
            config,
            params,
            epoch: 0,
            rng,
            trace: Vec::new(),
        })
    }
}

/// Static inputs of a training run: never modified once built.
#[derive(Debug, Clone)]
pub struct TrainingData {
    pub x: Matrix,
    pub y: Vec<usize>,
    pub h0: Matrix,
    pub graph: SemanticGraph,
}

impl TrainingData {
    pub fn new(labeled: &EmbeddingSet, class_embeddings: &EmbeddingSet, knn_k: usize) -> Result<Self> {
        if labeled.dim() != class_embeddings.dim() {
            return Err(Error::shape(
                "labeled vs class embedding dim",
                class_embeddings.dim(),
                labeled.dim(),
            ));
        }
        let known = class_embeddings.len();
        let labels = labeled
            .labels()
            .ok_or_else(|| Error::InvalidArgument("labeled set has no labels".into()))?;
        let mut y = Vec::with_capacity(labels.len());
        for (i, &l) in labels.iter().enumerate() {
            if l < 0 || l as usize >= known {
                return Err(Error::LabelOutOfRange {
                    offset: i,
                    label: l.into(),
                });
            }
            y.push(l as usize);
        }
        let h0 = class_embeddings.to_matrix();
        let graph = build_knn_graph(&h0, knn_k)?;
        Ok(Self {
            x: labeled.to_matrix(),
            y,
            h0,
            graph,
        })
    }

    fn checksum(&self) -> u64 {
        let mut h = Fnv(self.graph.checksum());
        for v in self.h0.as_slice() {
            h.write(&v.to_bits().to_le_bytes());
        }
        h.0
    }
}

/// Trains from scratch for `config.epochs` epochs.
pub fn train(labeled: &EmbeddingSet, class_embeddings: &EmbeddingSet, config: &RunConfig) -> Result<TrainState> {
    let data = TrainingData::new(labeled, class_embeddings, config.knn_k)?;
    let mut state = TrainState::new(config.clone(), labeled.dim(), class_embeddings.len())?;
    let target = config.epochs;
    run_epochs(&mut state, &data, target)?;
    Ok(state)
}

/// Continues a (possibly restored) state until `total_epochs` are done.
pub fn resume(
    mut state: TrainState,
    labeled: &EmbeddingSet,
    class_embeddings: &EmbeddingSet,
    total_epochs: usize,
) -> Result<TrainState> {
    let data = TrainingData::new(labeled, class_embeddings, state.config.knn_k)?;
    if class_embeddings.len() != state.params.shape.classes || labeled.dim() != state.params.shape.input_dim {
        return Err(Error::shape(
            "resume data vs checkpoint",
            format!("{:?}", state.params.shape),
            format!("classes={} dim={}", class_embeddings.len(), labeled.dim()),
        ));
    }
    state.config.epochs = total_epochs;
    run_epochs(&mut state, &data, total_epochs)?;
    Ok(state)
}

pub fn run_epochs(state: &mut TrainState, data: &TrainingData, until_epoch: usize) -> Result<()> {
    let before = data.checksum();
    let variant = if state.config.losses_as_printed {
        LossVariant::AsPrinted
    } else {
        LossVariant::MarginConsistent
    };
    let n = data.x.rows();
    let mut order: Vec<usize> = (0..n).collect();
    while state.epoch < until_epoch {
        order.sort_unstable();
        order.shuffle(&mut state.rng);
        let mut sum = LossBreakdown::default();
        let mut steps = 0usize;
        for chunk in order.chunks(state.config.batch_size) {
            let parts = train_step(state, data, chunk, variant)?;
            sum.cma += parts.cma;
            sum.sdp += parts.sdp;
            sum.cs += parts.cs;
            sum.total += parts.total;
            steps += 1;
        }
        let k = 1.0 / steps.max(1) as f64;
        let mean = LossBreakdown {
            cma: sum.cma * k,
            sdp: sum.sdp * k,
            cs: sum.cs * k,
            total: sum.total * k,
        };
        if !mean.total.is_finite() {
            return Err(Error::Divergence {
                epoch: state.epoch,
                loss: mean.total,
            });
        }
        state.trace.push(LossRecord::from_parts(state.epoch, mean));
        log::debug!("epoch {} l_tot {:.6}", state.epoch, mean.total);
        state.epoch += 1;
    }
    if data.checksum() != before {
        return Err(Error::Invariant("semantic graph or h0 changed during training".into()));
    }
    Ok(())
}

fn train_step(
    state: &mut TrainState,
    data: &TrainingData,
    rows: &[usize],
    variant: LossVariant,
) -> Result<LossBreakdown> {
    let w = &state.params.weights;
    let (ybar, gcn_trace) = gcn_forward(&data.graph, &data.h0, &w.gcn)?;
    let xb = data.x.select_rows(rows);
    let yb: Vec<usize> = rows.iter().map(|&i| data.y[i]).collect();
    let (z, proj_trace) = projector_forward(&xb, &w.proj)?;
    let (prompts, prompt_norms) = normalize_rows(&w.prompts)?;
    let triplets = sample_triplets(&yb, &mut state.rng);
    let cfg = &state.config;
    let out = loss_total(
        Batch {
            z: &z,
            y_idx: &yb,
            ybar: &ybar,
            prompts: &prompts,
        },
        &triplets,
        cfg.margin_alpha,
        cfg.temperature,
        variant,
    )?;
    if !out.parts.total.is_finite() {
        return Err(Error::Divergence {
            epoch: state.epoch,
            loss: out.parts.total,
        });
    }
    let g_gcn = gcn_backward(&gcn_trace, &out.grad_ybar)?;
    let g_proj = projector_backward(&proj_trace, &out.grad_z)?;
    let grads = Gradients {
        gcn: g_gcn.weights,
        proj: ProjectorWeights {
            w1: g_proj.w1,
            b1: g_proj.b1,
            w2: g_proj.w2,
            b2: g_proj.b2,
        },
        prompts: normalize_rows_backward(&prompts, &prompt_norms, &out.grad_prompts),
    };
    let lr = cfg.learn_rate;
    let params = &mut state.params;
    adam_step(&mut params.weights, &mut params.adam, &grads, lr)?;
    if !params.weights.is_finite() {
        return Err(Error::Divergence {
            epoch: state.epoch,
            loss: f64::NAN,
        });
    }
    Ok(out.parts)
}

fn push_u32(out: &mut Vec<u8>, v: usize, what: &str) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::InvalidArgument(format!("{what}={v} exceeds u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn push_tensor(out: &mut Vec<u8>, name: &str, m: &Matrix) -> Result<()> {
    push_u32(out, name.len(), "tensor name length")?;
    out.extend_from_slice(name.as_bytes());
    push_u32(out, 2, "rank")?;
    push_u32(out, m.rows(), "rows")?;
    push_u32(out, m.cols(), "cols")?;
    for &v in m.as_slice() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(())
}

pub fn checkpoint_to_bytes(state: &TrainState) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(&GVLP_MAGIC);
    out.extend_from_slice(&GVLP_VERSION.to_le_bytes());
    let cfg = state.config.to_kv_string();
    push_u32(&mut out, cfg.len(), "config length")?;
    out.extend_from_slice(cfg.as_bytes());
    push_u32(&mut out, state.epoch, "epoch")?;
    out.extend_from_slice(&state.rng.get_seed());
    out.extend_from_slice(&state.rng.get_stream().to_le_bytes());
    out.extend_from_slice(&state.rng.get_word_pos().to_le_bytes());
    out.extend_from_slice(&state.params.adam.step.to_le_bytes());
    let s = state.params.shape;
    for v in [s.input_dim, s.hidden_dim, s.output_dim, s.gcn_layers, s.classes] {
        push_u32(&mut out, v, "shape")?;
    }

    let params = state.params.weights.named();
    let first = state.params.adam.first_moment.named();
    let second = state.params.adam.second_moment.named();
    let trace = Matrix::from_rows(
        &state
            .trace
            .iter()
            .map(|r| [r.epoch as f64, r.l_cma, r.l_sdp, r.l_cs, r.l_tot])
            .collect::<Vec<_>>(),
    );
    let trace = if state.trace.is_empty() {
        Matrix::zeros(0, 5)
    } else {
        trace
    };
    push_u32(&mut out, params.len() * 3 + 1, "tensor count")?;
    for (name, m) in &params {
        push_tensor(&mut out, name, m)?;
    }
    for (name, m) in &first {
        push_tensor(&mut out, &format!("adam.m.{name}"), m)?;
    }
    for (name, m) in &second {
        push_tensor(&mut out, &format!("adam.v.{name}"), m)?;
    }
    push_tensor(&mut out, "loss_trace", &trace)?;
    Ok(out)
}

fn read_tensor(cur: &mut ByteCursor<'_>, expected_name: &str) -> Result<Matrix> {
    let name_offset = cur.offset();
    let len = cur.u32()? as usize;
    let name = cur.take(len)?;
    if name != expected_name.as_bytes() {
        return Err(Error::InvalidArgument(format!(
            "tensor at offset {name_offset}: expected {expected_name:?}, found {:?}",
            String::from_utf8_lossy(name)
        )));
    }
    let rank_offset = cur.offset();
    let rank = cur.u32()?;
    if rank != 2 {
        return Err(Error::InvalidArgument(format!(
            "tensor {expected_name} at offset {rank_offset}: rank {rank}, expected 2"
        )));
    }
    let rows = cur.u32()? as usize;
    let cols = cur.u32()? as usize;
    let count = rows.saturating_mul(cols);
    cur.require(count.saturating_mul(4))?;
    let mut data = Vec::with_capacity(count);
    for _ in 0..count {
        let offset = cur.offset();
        let v = cur.f32()?;
        if !v.is_finite() {
            return Err(Error::NonFiniteValue {
                context: format!("tensor {expected_name} at offset {offset}"),
                index: data.len(),
            });
        }
        data.push(f64::from(v));
    }
    Matrix::from_vec(rows, cols, data)
}

fn read_weights(cur: &mut ByteCursor<'_>, prefix: &str, like: &Weights) -> Result<Weights> {
    let mut out = like.clone();
    let names: Vec<String> = like.named().into_iter().map(|(n, _)| n).collect();
    for (name, slot) in names.iter().zip(out.tensors_mut()) {
        let m = read_tensor(cur, &format!("{prefix}{name}"))?;
        if m.shape() != slot.shape() {
            return Err(Error::shape(
                &format!("checkpoint tensor {prefix}{name}"),
                format!("{:?}", slot.shape()),
                format!("{:?}", m.shape()),
            ));
        }
        *slot = m;
    }
    Ok(out)
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<TrainState> {
    let mut cur = ByteCursor::new(bytes);
    let magic = cur.array::<4>()?;
    if magic != GVLP_MAGIC {
        return Err(Error::BadMagic {
            expected: GVLP_MAGIC,
            found: magic,
        });
    }
    let version = cur.u32()?;
    if version != GVLP_VERSION {
        return Err(Error::InvalidArgument(format!("unsupported GVLP version {version}")));
    }
    let cfg_len = cur.u32()? as usize;
    let cfg_bytes = cur.take(cfg_len)?;
    let cfg_text = std::str::from_utf8(cfg_bytes)
        .map_err(|e| Error::InvalidConfig(format!("checkpoint config is not UTF-8: {e}")))?;
    let config = RunConfig::from_kv_str(cfg_text)?;
    let epoch = cur.u32()? as usize;
    let seed = cur.array::<32>()?;
    let stream = cur.u64()?;
    let word_pos = cur.u128()?;
    let adam_steps = cur.u64()?;
    let mut dims = [0usize; 5];
    for d in &mut dims {
        *d = cur.u32()? as usize;
    }
    let shape = ModelShape {
        input_dim: dims[0],
        hidden_dim: dims[1],
        output_dim: dims[2],
        gcn_layers: dims[3],
        classes: dims[4],
    };
    let count_offset = cur.offset();
    let count = cur.u32()? as usize;

    // Template with the right shapes; values are overwritten below.
    let template = template_weights(&shape);
    let expected = template.named().len() * 3 + 1;
    if count != expected {
        return Err(Error::InvalidArgument(format!(
            "tensor count at offset {count_offset}: expected {expected}, found {count}"
        )));
    }
    let weights = read_weights(&mut cur, "", &template)?;
    let first_moment = read_weights(&mut cur, "adam.m.", &template)?;
    let second_moment = read_weights(&mut cur, "adam.v.", &template)?;
    let trace_m = read_tensor(&mut cur, "loss_trace")?;
    if trace_m.rows() > 0 && trace_m.cols() != 5 {
        return Err(Error::shape("loss_trace columns", 5, trace_m.cols()));
    }
    if cur.remaining() != 0 {
        return Err(Error::InvalidArgument(format!(
            "{} trailing bytes at offset {}",
            cur.remaining(),
            cur.offset()
        )));
    }
    let trace = trace_m
        .row_iter()
        .map(|r| LossRecord {
            epoch: r[0] as usize,
            l_cma: r[1],
            l_sdp: r[2],
            l_cs: r[3],
            l_tot: r[4],
        })
        .collect();

    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(stream);
    rng.set_word_pos(word_pos);
    Ok(TrainState {
        config,
        params: ModelParams {
            shape,
            weights,
            adam: AdamState {
                step: adam_steps,
                first_moment,
                second_moment,
            },
        },
        epoch,
        rng,
        trace,
    })
}

fn template_weights(shape: &ModelShape) -> Weights {
    Weights {
        gcn: shape.gcn_dims().into_iter().map(|(i, o)| Matrix::zeros(i, o)).collect(),
        proj: ProjectorWeights {
            w1: Matrix::zeros(shape.input_dim, shape.hidden_dim),
            b1: Matrix::zeros(1, shape.hidden_dim),
            w2: Matrix::zeros(shape.hidden_dim, shape.output_dim),
            b2: Matrix::zeros(1, shape.output_dim),
        },
        prompts: Matrix::zeros(shape.classes, shape.output_dim),
    }
}

pub fn save_checkpoint(state: &TrainState, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = checkpoint_to_bytes(state)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<TrainState> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_bytes(&bytes)
}
