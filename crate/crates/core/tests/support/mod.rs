//! Independent oracles shared by the property and acceptance suites.
#![allow(dead_code)]

use novelcat_core::Matrix;
use rand::Rng;

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale))
}

/// Best agreement over every injective map between the smaller and larger
/// of the cluster and class id sets.
pub fn brute_force_correct(assignment: &[usize], truth: &[usize], k: usize, c: usize) -> usize {
    let mut counts = vec![vec![0usize; c]; k];
    for (&a, &t) in assignment.iter().zip(truth) {
        counts[a][t] += 1;
    }
    fn go(row: usize, counts: &[Vec<usize>], used: &mut Vec<bool>, rows_first: bool) -> usize {
        let (rows, cols) = if rows_first {
            (counts.len(), counts.first().map_or(0, Vec::len))
        } else {
            (counts.first().map_or(0, Vec::len), counts.len())
        };
        if row == rows {
            return 0;
        }
        let cell = |r: usize, col: usize| if rows_first { counts[r][col] } else { counts[col][r] };
        let mut best = 0;
        for col in 0..cols {
            if !used[col] {
                used[col] = true;
                best = best.max(cell(row, col) + go(row + 1, counts, used, rows_first));
                used[col] = false;
            }
        }
        best
    }
    // Enumerate over the shorter side so every row gets a distinct column.
    if k <= c {
        go(0, &counts, &mut vec![false; c], true)
    } else {
        go(0, &counts, &mut vec![false; k], false)
    }
}

pub struct OracleKmeans {
    pub assignment: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn mean_of(points: &[Vec<f64>], members: impl Iterator<Item = usize>, dim: usize) -> Option<Vec<f64>> {
    let mut sum = vec![0.0; dim];
    let mut n = 0;
    for i in members {
        n += 1;
        for (s, v) in sum.iter_mut().zip(&points[i]) {
            *s += v;
        }
    }
    (n > 0).then(|| sum.into_iter().map(|s| s / n as f64).collect())
}

/// Textbook Lloyd iterations from fixed centroids. An empty cluster takes
/// the point farthest from its own centroid among clusters with two or more
/// members, lowest index first.
pub fn plain_kmeans(points: &[Vec<f64>], init: Vec<Vec<f64>>, max_iter: usize) -> OracleKmeans {
    let n = points.len();
    let k = init.len();
    let dim = points.first().map_or(0, Vec::len);
    let mut centroids = init;
    let mut assignment: Vec<usize> = vec![usize::MAX; n];
    for _ in 0..max_iter {
        let next: Vec<usize> = points
            .iter()
            .map(|p| {
                let mut best = 0;
                for c in 1..k {
                    if dist2(p, &centroids[c]) < dist2(p, &centroids[best]) {
                        best = c;
                    }
                }
                best
            })
            .collect();
        if next == assignment {
            break;
        }
        assignment = next;
        for (c, centroid) in centroids.iter_mut().enumerate() {
            if let Some(m) = mean_of(points, (0..n).filter(|&i| assignment[i] == c), dim) {
                *centroid = m;
            }
        }
        for c in 0..k {
            if assignment.contains(&c) {
                continue;
            }
            let size = |cl: usize| assignment.iter().filter(|&&a| a == cl).count();
            let mut far: Option<(usize, f64)> = None;
            for i in 0..n {
                if size(assignment[i]) < 2 {
                    continue;
                }
                let d = dist2(&points[i], &centroids[assignment[i]]);
                if far.is_none() || d > far.unwrap().1 {
                    far = Some((i, d));
                }
            }
            if let Some((i, _)) = far {
                let donor = assignment[i];
                assignment[i] = c;
                centroids[c] = points[i].clone();
                centroids[donor] = mean_of(points, (0..n).filter(|&j| assignment[j] == donor), dim).unwrap();
            }
        }
    }
    OracleKmeans { assignment, centroids }
}

/// Central difference of a scalar function along every entry of `at`.
pub fn numeric_grad(at: &Matrix, h: f64, mut f: impl FnMut(&Matrix) -> f64) -> Matrix {
    let mut grad = Matrix::zeros(at.rows(), at.cols());
    let mut probe = at.clone();
    for idx in 0..at.as_slice().len() {
        let orig = probe.as_slice()[idx];
        probe.as_mut_slice()[idx] = orig + h;
        let up = f(&probe);
        probe.as_mut_slice()[idx] = orig - h;
        let down = f(&probe);
        probe.as_mut_slice()[idx] = orig;
        grad.as_mut_slice()[idx] = (up - down) / (2.0 * h);
    }
    grad
}

/// Largest entrywise error relative to the larger of the two magnitudes,
/// with an absolute floor so near-zero entries do not dominate.
pub fn max_rel_error(analytic: &Matrix, numeric: &Matrix) -> f64 {
    const FLOOR: f64 = 1e-6;
    analytic
        .as_slice()
        .iter()
        .zip(numeric.as_slice())
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(FLOOR))
        .fold(0.0, f64::max)
}

pub mod gradcheck {
    //! Randomized analytic-vs-central-difference checks. Each returns the
    //! worst relative error over every input tensor of one random instance.
    //! Instances that land within `KINK` of a ReLU or hinge switch point are
    //! redrawn, since the derivative is undefined there.

    use super::{max_rel_error, numeric_grad, random_matrix};
    use novelcat_core::graph::build_knn_graph;
    use novelcat_core::losses::{loss_cma, loss_cs, loss_sdp, loss_total, Batch, LossVariant, Triplet};
    use novelcat_core::nn::{gcn_backward, gcn_forward, projector_backward, projector_forward, ProjectorWeights};
    use novelcat_core::Matrix;
    use rand::Rng;

    pub const H: f64 = 1e-5;
    const KINK: f64 = 1e-3;

    fn cos(u: &[f64], v: &[f64]) -> f64 {
        let d: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
        let nu: f64 = u.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nv: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        d / (nu * nv)
    }

    fn weighted_sum(g: &Matrix, m: &Matrix) -> f64 {
        g.as_slice().iter().zip(m.as_slice()).map(|(a, b)| a * b).sum()
    }

    fn near_kink(values: impl IntoIterator<Item = f64>) -> bool {
        values.into_iter().any(|v| v.abs() < KINK)
    }

    pub fn cma<R: Rng>(rng: &mut R, variant: LossVariant) -> f64 {
        loop {
            let b = rng.random_range(1..=5);
            let classes = rng.random_range(2..=4);
            let d = rng.random_range(2..=5);
            let z = random_matrix(rng, b, d, 1.0);
            let ybar = random_matrix(rng, classes, d, 1.0);
            let y: Vec<usize> = (0..b).map(|_| rng.random_range(0..classes)).collect();
            let alpha = rng.random_range(0.0..1.0);
            let tau = rng.random_range(0.2..2.0);
            let hinges = (0..b).flat_map(|i| {
                let s: Vec<f64> = (0..classes).map(|c| cos(z.row(i), ybar.row(c))).collect();
                let yi = y[i];
                (0..classes).map(move |c| match variant {
                    LossVariant::MarginConsistent => s[c] - s[yi] + alpha,
                    LossVariant::AsPrinted => s[yi] - s[c] - alpha,
                })
            });
            if near_kink(hinges.collect::<Vec<_>>()) {
                continue;
            }
            let out = loss_cma(&z, &y, &ybar, alpha, tau, variant).unwrap();
            let nz = numeric_grad(&z, H, |m| loss_cma(m, &y, &ybar, alpha, tau, variant).unwrap().loss);
            let ny = numeric_grad(&ybar, H, |m| loss_cma(&z, &y, m, alpha, tau, variant).unwrap().loss);
            return max_rel_error(&out.grad_z, &nz).max(max_rel_error(&out.grad_ybar, &ny));
        }
    }

    pub fn sdp<R: Rng>(rng: &mut R, variant: LossVariant) -> f64 {
        loop {
            let m = rng.random_range(1..=5);
            let d = rng.random_range(2..=5);
            let a = random_matrix(rng, m, d, 1.0);
            let p = random_matrix(rng, m, d, 1.0);
            let n = random_matrix(rng, m, d, 1.0);
            if variant == LossVariant::MarginConsistent
                && near_kink((0..m).map(|i| cos(a.row(i), n.row(i))).collect::<Vec<_>>())
            {
                continue;
            }
            let out = loss_sdp(&a, &p, &n, variant).unwrap();
            let na = numeric_grad(&a, H, |x| loss_sdp(x, &p, &n, variant).unwrap().loss);
            let np = numeric_grad(&p, H, |x| loss_sdp(&a, x, &n, variant).unwrap().loss);
            let nn = numeric_grad(&n, H, |x| loss_sdp(&a, &p, x, variant).unwrap().loss);
            return max_rel_error(&out.grad_anchors, &na)
                .max(max_rel_error(&out.grad_positives, &np))
                .max(max_rel_error(&out.grad_negatives, &nn));
        }
    }

    pub fn cs<R: Rng>(rng: &mut R) -> f64 {
        let c = rng.random_range(1..=5);
        let d = rng.random_range(1..=6);
        let t = random_matrix(rng, c, d, 2.0);
        let mu = random_matrix(rng, c, d, 2.0);
        let (_, g) = loss_cs(&t, &mu).unwrap();
        let n = numeric_grad(&t, H, |x| loss_cs(x, &mu).unwrap().0);
        max_rel_error(&g, &n)
    }

    /// The total treats `ȳ` as a constant inside the contextual term, so its
    /// reference gradient for `ȳ` subtracts that term's contribution.
    pub fn total<R: Rng>(rng: &mut R) -> f64 {
        loop {
            let b = rng.random_range(3..=6);
            let classes = rng.random_range(2..=3);
            let d = rng.random_range(2..=4);
            let z = random_matrix(rng, b, d, 1.0);
            let ybar = random_matrix(rng, classes, d, 1.0);
            let prompts = random_matrix(rng, classes, d, 1.0);
            let y: Vec<usize> = (0..b).map(|i| i % classes).collect();
            let mut triplets = Vec::new();
            for a in 0..b {
                let pos: Vec<usize> = (0..b).filter(|&j| j != a && y[j] == y[a]).collect();
                let neg: Vec<usize> = (0..b).filter(|&j| y[j] != y[a]).collect();
                if !pos.is_empty() && !neg.is_empty() {
                    triplets.push(Triplet {
                        anchor: a,
                        positive: pos[rng.random_range(0..pos.len())],
                        negative: neg[rng.random_range(0..neg.len())],
                    });
                }
            }
            let alpha = 0.3;
            let mut kinks: Vec<f64> = triplets
                .iter()
                .map(|t| cos(z.row(t.anchor), z.row(t.negative)))
                .collect();
            for (i, &yi) in y.iter().enumerate() {
                for c in 0..classes {
                    kinks.push(cos(z.row(i), ybar.row(c)) - cos(z.row(i), ybar.row(yi)) + alpha);
                }
            }
            if near_kink(kinks) {
                continue;
            }
            let v = LossVariant::MarginConsistent;
            let eval = |z: &Matrix, ybar: &Matrix, prompts: &Matrix| {
                let batch = Batch {
                    z,
                    y_idx: &y,
                    ybar,
                    prompts,
                };
                loss_total(batch, &triplets, alpha, 1.0, v).unwrap()
            };
            let out = eval(&z, &ybar, &prompts);
            let nz = numeric_grad(&z, H, |m| eval(m, &ybar, &prompts).parts.total);
            let np = numeric_grad(&prompts, H, |m| eval(&z, &ybar, m).parts.total);
            let ny = numeric_grad(&ybar, H, |m| {
                eval(&z, m, &prompts).parts.total - loss_cs(&prompts, m).unwrap().0
            });
            return max_rel_error(&out.grad_z, &nz)
                .max(max_rel_error(&out.grad_prompts, &np))
                .max(max_rel_error(&out.grad_ybar, &ny));
        }
    }

    pub fn gcn<R: Rng>(rng: &mut R) -> f64 {
        loop {
            let nodes = rng.random_range(2..=5);
            let d = rng.random_range(2..=4);
            let layers = rng.random_range(0..=3);
            let h0 = random_matrix(rng, nodes, d, 1.0);
            let graph = build_knn_graph(&h0, rng.random_range(1..=nodes)).unwrap();
            let mut dims = vec![d];
            for _ in 0..layers {
                dims.push(rng.random_range(2..=4));
            }
            let weights: Vec<Matrix> = dims.windows(2).map(|w| random_matrix(rng, w[0], w[1], 1.0)).collect();

            let mut h = h0.clone();
            let mut pre_hidden = Vec::new();
            for (l, w) in weights.iter().enumerate() {
                let pre = graph.norm_adjacency.matmul(&h).unwrap().matmul(w).unwrap();
                if l + 1 < weights.len() {
                    pre_hidden.extend_from_slice(pre.as_slice());
                    h = pre.map(|v| v.max(0.0));
                } else {
                    h = pre;
                }
            }
            if near_kink(pre_hidden) || h.row_iter().any(|r| r.iter().map(|v| v * v).sum::<f64>() < 1e-4) {
                continue;
            }

            let (out, trace) = gcn_forward(&graph, &h0, &weights).unwrap();
            let g = random_matrix(rng, out.rows(), out.cols(), 1.0);
            let grads = gcn_backward(&trace, &g).unwrap();
            let objective = |h0: &Matrix, ws: &[Matrix]| weighted_sum(&g, &gcn_forward(&graph, h0, ws).unwrap().0);
            let mut worst = max_rel_error(&grads.h0, &numeric_grad(&h0, H, |m| objective(m, &weights)));
            for l in 0..weights.len() {
                let n = numeric_grad(&weights[l], H, |m| {
                    let mut ws = weights.clone();
                    ws[l] = m.clone();
                    objective(&h0, &ws)
                });
                worst = worst.max(max_rel_error(&grads.weights[l], &n));
            }
            return worst;
        }
    }

    pub fn projector<R: Rng>(rng: &mut R) -> f64 {
        loop {
            let b = rng.random_range(1..=4);
            let d = rng.random_range(2..=4);
            let h = rng.random_range(2..=5);
            let d_out = rng.random_range(2..=4);
            let x = random_matrix(rng, b, d, 1.0);
            let w = ProjectorWeights {
                w1: random_matrix(rng, d, h, 1.0),
                b1: random_matrix(rng, 1, h, 0.5),
                w2: random_matrix(rng, h, d_out, 1.0),
                b2: random_matrix(rng, 1, d_out, 0.5),
            };
            let mut pre = x.matmul(&w.w1).unwrap();
            for r in 0..b {
                for (v, bias) in pre.row_mut(r).iter_mut().zip(w.b1.row(0)) {
                    *v += bias;
                }
            }
            if near_kink(pre.as_slice().to_vec()) {
                continue;
            }
            let Ok((z, trace)) = projector_forward(&x, &w) else {
                continue;
            };
            let g = random_matrix(rng, z.rows(), z.cols(), 1.0);
            let grads = projector_backward(&trace, &g).unwrap();
            let obj = |x: &Matrix, w: &ProjectorWeights| weighted_sum(&g, &projector_forward(x, w).unwrap().0);
            let with = |f: &dyn Fn(&mut ProjectorWeights, &Matrix), m: &Matrix| {
                let mut w2 = w.clone();
                f(&mut w2, m);
                obj(&x, &w2)
            };
            let pairs = [
                (&grads.x, numeric_grad(&x, H, |m| obj(m, &w))),
                (&grads.w1, numeric_grad(&w.w1, H, |m| with(&|p, m| p.w1 = m.clone(), m))),
                (&grads.b1, numeric_grad(&w.b1, H, |m| with(&|p, m| p.b1 = m.clone(), m))),
                (&grads.w2, numeric_grad(&w.w2, H, |m| with(&|p, m| p.w2 = m.clone(), m))),
                (&grads.b2, numeric_grad(&w.b2, H, |m| with(&|p, m| p.b2 = m.clone(), m))),
            ];
            return pairs.iter().map(|(a, n)| max_rel_error(a, n)).fold(0.0, f64::max);
        }
    }
}
