//! Cross-modal margin alignment, semantic distinction penalty and
//! contextual similarity losses, with exact gradients.
//!
//! All similarities are cosine similarities computed from the raw rows, so
//! every loss is invariant to positive rescaling of its inputs and the
//! returned gradients are with respect to the rows as passed in.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, normalize_rows, normalize_rows_backward, Matrix, NORM_EPS};

/// Sign convention of the alignment and triplet terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossVariant {
    /// Hinge `[δ(z,ȳ_c) − δ(z,ȳ_y) + α]₊` over wrong classes; triplet term
    /// `(1 − δ(a,p)) + [δ(a,n)]₊`.
    #[default]
    MarginConsistent,
    /// Signs as typeset: hinge `[δ(z,ȳ_y) − δ(z,ȳ_c) − α]₊` over all classes;
    /// triplet term `(δ(a,p) − 1) + δ(a,n)`.
    AsPrinted,
}

/// Cosine similarity with the norm floor of row normalization, so a zero
/// vector has similarity 0 to everything.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::shape("cosine", u.len(), v.len()));
    }
    let (nu, nv) = (norm(u).max(NORM_EPS), norm(v).max(NORM_EPS));
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Cosine and its gradients with respect to both arguments.
fn cosine_grad(u: &[f64], v: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    if u.len() != v.len() {
        return Err(Error::shape("cosine", u.len(), v.len()));
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu <= NORM_EPS || nv <= NORM_EPS {
        let n = u.len();
        return Ok((0.0, vec![0.0; n], vec![0.0; n]));
    }
    let c = dot(u, v) / (nu * nv);
    let du = u.iter().zip(v).map(|(&a, &b)| (b / nv - c * a / nu) / nu).collect();
    let dv = u.iter().zip(v).map(|(&a, &b)| (a / nu - c * b / nv) / nv).collect();
    Ok((c, du, dv))
}

#[derive(Debug, Clone)]
pub struct CmaOutput {
    pub loss: f64,
    pub grad_z: Matrix,
    pub grad_ybar: Matrix,
}

/// Mean over the batch of softmax cross-entropy on `δ(z, ȳ_c)/τ` plus the
/// margin hinge.
pub fn loss_cma(
    z: &Matrix,
    y_idx: &[usize],
    ybar: &Matrix,
    alpha: f64,
    temperature: f64,
    variant: LossVariant,
) -> Result<CmaOutput> {
    let b = z.rows();
    let classes = ybar.rows();
    if y_idx.len() != b {
        return Err(Error::shape("loss_cma labels", b, y_idx.len()));
    }
    if z.cols() != ybar.cols() {
        return Err(Error::shape("loss_cma embedding width", ybar.cols(), z.cols()));
    }
    if b == 0 {
        return Err(Error::EmptyInput("loss_cma batch".into()));
    }
    if let Some((i, &bad)) = y_idx.iter().enumerate().find(|(_, &y)| y >= classes) {
        return Err(Error::LabelOutOfRange {
            offset: i,
            label: bad as i64,
        });
    }
    if temperature.is_nan() || temperature <= 0.0 {
        return Err(Error::InvalidArgument(format!("temperature {temperature} must be > 0")));
    }

    let (zn, z_norms) = normalize_rows(z)?;
    let (yn, y_norms) = normalize_rows(ybar)?;
    let sims = zn.matmul_t(&yn)?;
    let mut grad_sims = Matrix::zeros(b, classes);
    let mut total = 0.0;
    let inv_b = 1.0 / b as f64;

    for (i, &y) in y_idx.iter().enumerate() {
        let s = sims.row(i);
        let g = grad_sims.row_mut(i);

        // cross-entropy via log-sum-exp
        let logits: Vec<f64> = s.iter().map(|v| v / temperature).collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        let lse = max + sum_exp.ln();
        total += lse - logits[y];
        for c in 0..classes {
            let p = (logits[c] - lse).exp();
            let indicator = if c == y { 1.0 } else { 0.0 };
            g[c] += (p - indicator) / temperature * inv_b;
        }

        match variant {
            LossVariant::MarginConsistent => {
                for c in (0..classes).filter(|&c| c != y) {
                    let h = s[c] - s[y] + alpha;
                    if h > 0.0 {
                        total += h;
                        g[c] += inv_b;
                        g[y] -= inv_b;
                    }
                }
            }
            LossVariant::AsPrinted => {
                for c in 0..classes {
                    let h = s[y] - s[c] - alpha;
                    if h > 0.0 {
                        total += h;
                        g[y] += inv_b;
                        g[c] -= inv_b;
                    }
                }
            }
        }
    }

    let grad_zn = grad_sims.matmul(&yn)?;
    let grad_yn = grad_sims.t_matmul(&zn)?;
    Ok(CmaOutput {
        loss: total * inv_b,
        grad_z: normalize_rows_backward(&zn, &z_norms, &grad_zn),
        grad_ybar: normalize_rows_backward(&yn, &y_norms, &grad_yn),
    })
}

#[derive(Debug, Clone)]
pub struct SdpOutput {
    pub loss: f64,
    pub grad_anchors: Matrix,
    pub grad_positives: Matrix,
    pub grad_negatives: Matrix,
}

/// Mean over row-aligned triplets of the positive-pull / negative-push term.
pub fn loss_sdp(anchors: &Matrix, positives: &Matrix, negatives: &Matrix, variant: LossVariant) -> Result<SdpOutput> {
    let m = anchors.rows();
    if positives.shape() != anchors.shape() || negatives.shape() != anchors.shape() {
        return Err(Error::shape(
            "loss_sdp triplets",
            format!("{:?}", anchors.shape()),
            format!("{:?} / {:?}", positives.shape(), negatives.shape()),
        ));
    }
    if m == 0 {
        return Err(Error::EmptyInput("loss_sdp triplets".into()));
    }
    let w = 1.0 / m as f64;
    let d = anchors.cols();
    let mut ga = Matrix::zeros(m, d);
    let mut gp = Matrix::zeros(m, d);
    let mut gn = Matrix::zeros(m, d);
    let mut total = 0.0;
    for i in 0..m {
        let (cp, dap, dp) = cosine_grad(anchors.row(i), positives.row(i))?;
        let (cn, dan, dn) = cosine_grad(anchors.row(i), negatives.row(i))?;
        // d(loss)/d(cp), d(loss)/d(cn)
        let (coef_p, coef_n) = match variant {
            LossVariant::MarginConsistent => {
                total += 1.0 - cp;
                let coef_n = if cn > 0.0 {
                    total += cn;
                    1.0
                } else {
                    0.0
                };
                (-1.0, coef_n)
            }
            LossVariant::AsPrinted => {
                total += cp - 1.0 + cn;
                (1.0, 1.0)
            }
        };
        for k in 0..d {
            ga[(i, k)] = w * (coef_p * dap[k] + coef_n * dan[k]);
            gp[(i, k)] = w * coef_p * dp[k];
            gn[(i, k)] = w * coef_n * dn[k];
        }
    }
    Ok(SdpOutput {
        loss: total * w,
        grad_anchors: ga,
        grad_positives: gp,
        grad_negatives: gn,
    })
}

/// `½ Σᵢ ‖tᵢ − μᵢ‖²`. Centers are constants; the gradient is `t − μ`.
pub fn loss_cs(prompts: &Matrix, centers: &Matrix) -> Result<(f64, Matrix)> {
    if prompts.shape() != centers.shape() {
        return Err(Error::shape(
            "loss_cs",
            format!("{:?}", centers.shape()),
            format!("{:?}", prompts.shape()),
        ));
    }
    let mut grad = prompts.clone();
    for (g, c) in grad.as_mut_slice().iter_mut().zip(centers.as_slice()) {
        *g -= c;
    }
    Ok((0.5 * grad.frobenius_sq(), grad))
}

/// Anchor/positive/negative row indices into a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

/// For every anchor with a same-class peer and an other-class sample, draws
/// one of each uniformly. Anchors are visited in index order.
pub fn sample_triplets<R: Rng>(batch_labels: &[usize], rng: &mut R) -> Vec<Triplet> {
    let mut out = Vec::new();
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for (a, &la) in batch_labels.iter().enumerate() {
        positives.clear();
        negatives.clear();
        for (j, &lj) in batch_labels.iter().enumerate() {
            if j == a {
                continue;
            }
            if lj == la {
                positives.push(j);
            } else {
                negatives.push(j);
            }
        }
        if positives.is_empty() || negatives.is_empty() {
            continue;
        }
        let positive = positives[rng.random_range(0..positives.len())];
        let negative = negatives[rng.random_range(0..negatives.len())];
        out.push(Triplet {
            anchor: a,
            positive,
            negative,
        });
    }
    out
}

/// Per-component values of the total loss.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub cma: f64,
    pub sdp: f64,
    pub cs: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct TotalOutput {
    pub parts: LossBreakdown,
    pub grad_z: Matrix,
    pub grad_ybar: Matrix,
    pub grad_prompts: Matrix,
}

/// Everything one training step needs to evaluate the objective.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    /// Projected visual features, `b × d_out`.
    pub z: &'a Matrix,
    /// Known-class index per row of `z`.
    pub y_idx: &'a [usize],
    /// GCN class embeddings, `|C_kwn| × d_out`.
    pub ybar: &'a Matrix,
    /// Prompt features, `|C_kwn| × d_out`.
    pub prompts: &'a Matrix,
}

/// `L_CMA + L_SDP + L_CS` with unit weights. `ybar` doubles as the centers
/// for the contextual term and receives no gradient from it.
pub fn loss_total(
    batch: Batch<'_>,
    triplets: &[Triplet],
    alpha: f64,
    temperature: f64,
    variant: LossVariant,
) -> Result<TotalOutput> {
    let cma = loss_cma(batch.z, batch.y_idx, batch.ybar, alpha, temperature, variant)?;
    let mut grad_z = cma.grad_z;

    let mut sdp_loss = 0.0;
    if !triplets.is_empty() {
        let pick = |f: fn(&Triplet) -> usize| {
            let idx: Vec<usize> = triplets.iter().map(f).collect();
            batch.z.select_rows(&idx)
        };
        if let Some(t) = triplets
            .iter()
            .find(|t| t.anchor.max(t.positive).max(t.negative) >= batch.z.rows())
        {
            return Err(Error::InvalidArgument(format!("triplet {t:?} outside batch")));
        }
        let sdp = loss_sdp(
            &pick(|t| t.anchor),
            &pick(|t| t.positive),
            &pick(|t| t.negative),
            variant,
        )?;
        sdp_loss = sdp.loss;
        for (i, t) in triplets.iter().enumerate() {
            for (row, grads) in [
                (t.anchor, &sdp.grad_anchors),
                (t.positive, &sdp.grad_positives),
                (t.negative, &sdp.grad_negatives),
            ] {
                for (g, v) in grad_z.row_mut(row).iter_mut().zip(grads.row(i)) {
                    *g += v;
                }
            }
        }
    }

    let (cs_loss, grad_prompts) = loss_cs(batch.prompts, batch.ybar)?;
    let parts = LossBreakdown {
        cma: cma.loss,
        sdp: sdp_loss,
        cs: cs_loss,
        total: cma.loss + sdp_loss + cs_loss,
    };
    Ok(TotalOutput {
        parts,
        grad_z,
        grad_ybar: cma.grad_ybar,
        grad_prompts,
    })
}
