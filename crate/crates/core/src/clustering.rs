//! Similarity-distribution features and label-constrained k-means.
//!
//! Cluster ids `0..|C_kwn|` are reserved for the known classes: a labeled
//! sample of class `c` sits in cluster `c` for the whole run. The remaining
//! ids are free clusters for unlabeled samples only.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::embed_io::{EmbeddingSet, UNLABELED};
use crate::error::{Error, Result};
use crate::graph::SemanticGraph;
use crate::linalg::{squared_distance, Matrix};
use crate::nn::{gcn_forward, projector_forward, ModelParams};

pub const MAX_LLOYD_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub assignment: Vec<usize>,
    pub centroids: Matrix,
    pub constrained_mask: Vec<bool>,
    pub iterations_run: usize,
    /// Sum of squared distances to the assigned centroid, after the last update.
    pub inertia: f64,
    /// Inertia after each iteration.
    pub inertia_history: Vec<f64>,
}

impl ClusterAssignment {
    /// `sample_index,cluster_id,is_constrained` with a header row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("sample_index,cluster_id,is_constrained\n");
        for (i, (&c, &m)) in self.assignment.iter().zip(&self.constrained_mask).enumerate() {
            let _ = writeln!(s, "{i},{c},{}", u8::from(m));
        }
        s
    }
}

/// Parses the output of [`ClusterAssignment::to_csv`] into
/// `(cluster_id, is_constrained)` per sample.
pub fn parse_assignments_csv(text: &str) -> Result<Vec<(usize, bool)>> {
    let mut lines = text.lines();
    match lines.next() {
        Some("sample_index,cluster_id,is_constrained") => {}
        other => {
            return Err(Error::InvalidArgument(format!(
                "assignments csv: unexpected header {other:?}"
            )))
        }
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let bad = || Error::InvalidArgument(format!("assignments csv: bad row {}: {line:?}", i + 1));
        let fields: Vec<&str> = line.split(',').collect();
        let [idx, cluster, constrained] = fields[..] else {
            return Err(bad());
        };
        if idx.parse::<usize>().map_err(|_| bad())? != i {
            return Err(bad());
        }
        let cluster = cluster.parse::<usize>().map_err(|_| bad())?;
        let constrained = match constrained {
            "0" => false,
            "1" => true,
            _ => return Err(bad()),
        };
        out.push((cluster, constrained));
    }
    Ok(out)
}

/// State handed to an iteration observer after each centroid update.
#[derive(Debug)]
pub struct IterationSnapshot<'a> {
    pub iteration: usize,
    pub assignment: &'a [usize],
    pub centroids: &'a Matrix,
    pub inertia: f64,
}

/// `Q(x)`: cosine similarity of each projected sample to every GCN class
/// embedding. Output is `n × |C_kwn|`.
pub fn similarity_features(
    samples: &EmbeddingSet,
    params: &ModelParams,
    graph: &SemanticGraph,
    class_embeddings: &EmbeddingSet,
) -> Result<Matrix> {
    similarity_features_from(&samples.to_matrix(), params, graph, &class_embeddings.to_matrix())
}

pub fn similarity_features_from(
    x: &Matrix,
    params: &ModelParams,
    graph: &SemanticGraph,
    h0: &Matrix,
) -> Result<Matrix> {
    let (ybar, _) = gcn_forward(graph, h0, &params.weights.gcn)?;
    let (z, _) = projector_forward(x, &params.weights.proj)?;
    let q = z.matmul_t(&ybar)?;
    Ok(q.map(|v| v.clamp(-1.0, 1.0)))
}

fn check_inputs(features: &Matrix, labels: &[i32], k: usize) -> Result<()> {
    let n = features.rows();
    if labels.len() != n {
        return Err(Error::shape("k-means labels", n, labels.len()));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    if k > n {
        return Err(Error::InvalidArgument(format!("k={k} exceeds sample count {n}")));
    }
    if let Some(i) = features.first_non_finite() {
        return Err(Error::NonFiniteValue {
            context: "clustering features".into(),
            index: i,
        });
    }
    for (i, &l) in labels.iter().enumerate() {
        if l < UNLABELED || (l >= 0 && l as usize >= k) {
            return Err(Error::LabelOutOfRange {
                offset: i,
                label: l.into(),
            });
        }
    }
    Ok(())
}

/// Reserved centroids are the labeled class means; the free ones are drawn
/// by distance-squared-proportional sampling over unlabeled points.
pub fn kmeans_pp_init(features: &Matrix, labels: &[i32], k: usize, seed: u64) -> Result<Matrix> {
    check_inputs(features, labels, k)?;
    let dim = features.cols();
    let mut centroids = Matrix::zeros(k, dim);

    let reserved: BTreeSet<usize> = labels.iter().filter(|&&l| l >= 0).map(|&l| l as usize).collect();
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        if l >= 0 {
            let c = l as usize;
            counts[c] += 1;
            for (acc, v) in centroids.row_mut(c).iter_mut().zip(features.row(i)) {
                *acc += v;
            }
        }
    }
    for &c in &reserved {
        let inv = 1.0 / counts[c] as f64;
        centroids.row_mut(c).iter_mut().for_each(|v| *v *= inv);
    }

    let free_ids: Vec<usize> = (0..k).filter(|c| !reserved.contains(c)).collect();
    let free_points: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == UNLABELED).collect();
    if free_ids.len() > free_points.len() {
        return Err(Error::InvalidArgument(format!(
            "{} free clusters but only {} unlabeled points",
            free_ids.len(),
            free_points.len()
        )));
    }
    if free_ids.is_empty() {
        return Ok(centroids);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<usize> = reserved.iter().copied().collect();
    let mut nearest: Vec<f64> = free_points
        .iter()
        .map(|&p| {
            chosen
                .iter()
                .map(|&c| squared_distance(features.row(p), centroids.row(c)))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();

    for &cid in &free_ids {
        let total: f64 = if chosen.is_empty() { 0.0 } else { nearest.iter().sum() };
        let pick = if total > 0.0 && total.is_finite() {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            // Fallback covers rounding at the tail: last point with weight.
            let mut pick = nearest.iter().rposition(|&d| d > 0.0).unwrap_or(0);
            for (j, &d) in nearest.iter().enumerate() {
                acc += d;
                if target < acc {
                    pick = j;
                    break;
                }
            }
            pick
        } else {
            rng.random_range(0..free_points.len())
        };
        let point = free_points[pick];
        centroids.row_mut(cid).copy_from_slice(features.row(point));
        chosen.push(cid);
        for (d, &p) in nearest.iter_mut().zip(&free_points) {
            *d = d.min(squared_distance(features.row(p), features.row(point)));
        }
    }
    Ok(centroids)
}

/// Label-constrained k-means with k-means++ seeding.
pub fn semisup_kmeans(features: &Matrix, labels: &[i32], k: usize, seed: u64) -> Result<ClusterAssignment> {
    let init = kmeans_pp_init(features, labels, k, seed)?;
    semisup_kmeans_from(features, labels, init, |_| Ok(()))
}

/// Lloyd iterations from the given centroids. `observer` runs after every
/// iteration; an error from it aborts the run.
pub fn semisup_kmeans_from<F>(
    features: &Matrix,
    labels: &[i32],
    init: Matrix,
    mut observer: F,
) -> Result<ClusterAssignment>
where
    F: FnMut(&IterationSnapshot<'_>) -> Result<()>,
{
    let k = init.rows();
    check_inputs(features, labels, k)?;
    if init.cols() != features.cols() {
        return Err(Error::shape("initial centroids width", features.cols(), init.cols()));
    }
    let n = features.rows();
    let mut centroids = init;
    let mut assignment = vec![usize::MAX; n];
    let constrained_mask: Vec<bool> = labels.iter().map(|&l| l >= 0).collect();
    let mut history = Vec::new();
    let mut iterations = 0;

    while iterations < MAX_LLOYD_ITERATIONS {
        let targets: Vec<usize> = (0..n)
            .into_par_iter()
            .map(|i| {
                if labels[i] >= 0 {
                    labels[i] as usize
                } else {
                    nearest_centroid(features.row(i), &centroids)
                }
            })
            .collect();
        if targets == assignment {
            break;
        }
        assignment = targets;
        let mut counts = update_centroids(features, &assignment, &mut centroids);
        repair_empty_clusters(features, labels, &mut assignment, &mut centroids, &mut counts);
        iterations += 1;
        let inertia = inertia_of(features, &assignment, &centroids);
        history.push(inertia);
        observer(&IterationSnapshot {
            iteration: iterations,
            assignment: &assignment,
            centroids: &centroids,
            inertia,
        })?;
    }

    let inertia = history.last().copied().unwrap_or(0.0);
    Ok(ClusterAssignment {
        assignment,
        centroids,
        constrained_mask,
        iterations_run: iterations,
        inertia,
        inertia_history: history,
    })
}

fn nearest_centroid(x: &[f64], centroids: &Matrix) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for c in 0..centroids.rows() {
        let d = squared_distance(x, centroids.row(c));
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

/// Means of the assigned points; empty clusters keep their old centroid.
fn update_centroids(features: &Matrix, assignment: &[usize], centroids: &mut Matrix) -> Vec<usize> {
    let k = centroids.rows();
    let mut sums = Matrix::zeros(k, features.cols());
    let mut counts = vec![0usize; k];
    for (i, &c) in assignment.iter().enumerate() {
        counts[c] += 1;
        for (s, v) in sums.row_mut(c).iter_mut().zip(features.row(i)) {
            *s += v;
        }
    }
    for (c, &count) in counts.iter().enumerate() {
        if count > 0 {
            let inv = 1.0 / count as f64;
            for (dst, s) in centroids.row_mut(c).iter_mut().zip(sums.row(c)) {
                *dst = s * inv;
            }
        }
    }
    counts
}

/// Moves the free point farthest from its centroid (lowest index on ties,
/// never emptying its donor cluster) into each empty cluster.
fn repair_empty_clusters(
    features: &Matrix,
    labels: &[i32],
    assignment: &mut [usize],
    centroids: &mut Matrix,
    counts: &mut [usize],
) {
    for empty in 0..counts.len() {
        if counts[empty] > 0 {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for i in 0..assignment.len() {
            if labels[i] >= 0 || counts[assignment[i]] < 2 {
                continue;
            }
            let d = squared_distance(features.row(i), centroids.row(assignment[i]));
            if best.is_none_or(|(_, bd)| d > bd) {
                best = Some((i, d));
            }
        }
        let Some((point, _)) = best else {
            continue;
        };
        let donor = assignment[point];
        assignment[point] = empty;
        counts[donor] -= 1;
        counts[empty] = 1;
        centroids.row_mut(empty).copy_from_slice(features.row(point));
        recompute_centroid(features, assignment, centroids, donor);
    }
}

fn recompute_centroid(features: &Matrix, assignment: &[usize], centroids: &mut Matrix, c: usize) {
    let mut sum = vec![0.0; features.cols()];
    let mut count = 0usize;
    for (i, &a) in assignment.iter().enumerate() {
        if a == c {
            count += 1;
            for (s, v) in sum.iter_mut().zip(features.row(i)) {
                *s += v;
            }
        }
    }
    if count > 0 {
        let inv = 1.0 / count as f64;
        for (dst, s) in centroids.row_mut(c).iter_mut().zip(&sum) {
            *dst = s * inv;
        }
    }
}

pub fn inertia_of(features: &Matrix, assignment: &[usize], centroids: &Matrix) -> f64 {
    assignment
        .iter()
        .enumerate()
        .map(|(i, &c)| squared_distance(features.row(i), centroids.row(c)))
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElbowEstimate {
    pub k: usize,
    /// `(K, inertia(K))` for every scanned K, ascending.
    pub curve: Vec<(usize, f64)>,
}

impl ElbowEstimate {
    /// `k,inertia` with a header row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,inertia\n");
        for (k, v) in &self.curve {
            let _ = writeln!(s, "{k},{v}");
        }
        s
    }
}

/// Scans `K ∈ [k_min, k_max]` and returns the K farthest from the chord
/// joining the two ends of the inertia curve.
pub fn estimate_k(features: &Matrix, labels: &[i32], k_min: usize, k_max: usize, seed: u64) -> Result<ElbowEstimate> {
    if k_min > k_max {
        return Err(Error::InvalidArgument(format!("k_min {k_min} > k_max {k_max}")));
    }
    if k_min == 0 {
        return Err(Error::InvalidArgument("k_min must be >= 1".into()));
    }
    let curve = (k_min..=k_max)
        .map(|k| semisup_kmeans(features, labels, k, seed).map(|a| (k, a.inertia)))
        .collect::<Result<Vec<_>>>()?;
    let k = elbow_point(&curve);
    Ok(ElbowEstimate { k, curve })
}

/// Index-free elbow rule on an ascending `(K, value)` curve. Distances that
/// vanish relative to the chord length count as ties, won by the lowest K.
pub fn elbow_point(curve: &[(usize, f64)]) -> usize {
    let Some(&(x1, y1)) = curve.first() else {
        return 0;
    };
    let &(x2, y2) = curve.last().expect("non-empty");
    let (x1, x2) = (x1 as f64, x2 as f64);
    let dx = x2 - x1;
    let dy = y2 - y1;
    let chord = (dx * dx + dy * dy).sqrt();
    if chord == 0.0 {
        return curve[0].0;
    }
    let tol = 1e-9 * chord.max(y1.abs()).max(y2.abs());
    let mut best = (curve[0].0, 0.0);
    for &(k, y) in curve {
        let dist = (dy * (k as f64 - x1) - dx * (y - y1)).abs() / chord;
        if dist > best.1 + tol {
            best = (k, dist);
        }
    }
    best.0
}
