//! End-to-end composition: train, featurize `D_S ∪ D_U`, cluster, score.

use crate::clustering::{estimate_k, semisup_kmeans, similarity_features_from, ClusterAssignment, ElbowEstimate};
use crate::embed_io::{EmbeddingSet, RunConfig, UNLABELED};
use crate::error::{Error, Result};
use crate::evaluation::{split_accuracy, EvalReport};
use crate::graph::SemanticGraph;
use crate::linalg::Matrix;
use crate::trainer::{train, TrainState, TrainingData};

/// How the total cluster count is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClusterCount {
    /// Use the number of classes present in the unlabeled ground truth.
    #[default]
    FromTruth,
    Fixed(usize),
    /// Elbow scan over `[k_min, k_max]`.
    Elbow {
        k_min: usize,
        k_max: usize,
    },
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub state: TrainState,
    pub graph: SemanticGraph,
    /// `Q` features for the labeled rows followed by the unlabeled rows.
    pub features: Matrix,
    /// Constraint labels aligned with `features`.
    pub constraint_labels: Vec<i32>,
    pub clusters: ClusterAssignment,
    pub k: usize,
    pub elbow: Option<ElbowEstimate>,
    /// Present when the unlabeled set carries ground truth.
    pub report: Option<EvalReport>,
}

impl PipelineOutput {
    /// Cluster ids of the unlabeled rows only.
    pub fn unlabeled_assignment(&self) -> &[usize] {
        let labeled = self.constraint_labels.iter().filter(|&&l| l != UNLABELED).count();
        &self.clusters.assignment[labeled..]
    }
}

/// Stacks labeled then unlabeled rows and builds the matching constraint
/// vector (labels for `D_S`, -1 for `D_U`).
pub fn stack_for_clustering(labeled: &EmbeddingSet, unlabeled: &EmbeddingSet) -> Result<(Matrix, Vec<i32>)> {
    if labeled.dim() != unlabeled.dim() {
        return Err(Error::shape("labeled vs unlabeled dim", labeled.dim(), unlabeled.dim()));
    }
    let labels = labeled
        .labels()
        .ok_or_else(|| Error::InvalidArgument("labeled set has no labels".into()))?;
    let rows = labeled.len() + unlabeled.len();
    let mut data = Vec::with_capacity(rows * labeled.dim());
    data.extend(labeled.data().iter().map(|&v| f64::from(v)));
    data.extend(unlabeled.data().iter().map(|&v| f64::from(v)));
    let x = Matrix::from_vec(rows, labeled.dim(), data)?;
    let mut constraint = labels.to_vec();
    constraint.extend(std::iter::repeat_n(UNLABELED, unlabeled.len()));
    Ok((x, constraint))
}

fn truth_of(unlabeled: &EmbeddingSet) -> Option<Vec<usize>> {
    let labels = unlabeled.labels()?;
    labels.iter().map(|&l| (l >= 0).then_some(l as usize)).collect()
}

/// Clusters already-trained features and scores them.
pub fn cluster_and_score(
    features: &Matrix,
    constraint_labels: &[i32],
    unlabeled: &EmbeddingSet,
    known_classes: usize,
    count: ClusterCount,
    seed: u64,
) -> Result<(ClusterAssignment, usize, Option<ElbowEstimate>, Option<EvalReport>)> {
    let truth = truth_of(unlabeled);
    let (k, elbow) = match count {
        ClusterCount::Fixed(k) => (k, None),
        ClusterCount::FromTruth => {
            let t = truth.as_ref().ok_or_else(|| {
                Error::InvalidArgument("no ground truth in the unlabeled set; pass a cluster count".into())
            })?;
            let k = t.iter().max().map_or(0, |m| m + 1).max(known_classes);
            (k, None)
        }
        ClusterCount::Elbow { k_min, k_max } => {
            let est = estimate_k(features, constraint_labels, k_min, k_max, seed)?;
            (est.k, Some(est))
        }
    };
    let clusters = semisup_kmeans(features, constraint_labels, k, seed)?;
    let labeled = constraint_labels.iter().filter(|&&l| l != UNLABELED).count();
    let report = match truth {
        Some(t) => {
            let r = split_accuracy(&clusters.assignment[labeled..], &t, known_classes)?;
            r.check_invariants()?;
            Some(r)
        }
        None => None,
    };
    Ok((clusters, k, elbow, report))
}

pub fn run_all(
    labeled: &EmbeddingSet,
    unlabeled: &EmbeddingSet,
    class_embeddings: &EmbeddingSet,
    config: &RunConfig,
    count: ClusterCount,
) -> Result<PipelineOutput> {
    let known = class_embeddings.len();
    let state = train(labeled, class_embeddings, config)?;
    let data = TrainingData::new(labeled, class_embeddings, config.knn_k)?;
    let (x, constraint_labels) = stack_for_clustering(labeled, unlabeled)?;
    let features = similarity_features_from(&x, &state.params, &data.graph, &data.h0)?;
    let (clusters, k, elbow, report) =
        cluster_and_score(&features, &constraint_labels, unlabeled, known, count, config.seed)?;
    Ok(PipelineOutput {
        state,
        graph: data.graph,
        features,
        constraint_labels,
        clusters,
        k,
        elbow,
        report,
    })
}

/// Restarts used by [`raw_kmeans_baseline`].
pub const BASELINE_RESTARTS: u64 = 10;

/// Unconstrained k-means on the raw unlabeled embeddings, best inertia over
/// [`BASELINE_RESTARTS`] seeds, scored the same way as the pipeline.
pub fn raw_kmeans_baseline(unlabeled: &EmbeddingSet, k: usize, known_classes: usize, seed: u64) -> Result<EvalReport> {
    let truth =
        truth_of(unlabeled).ok_or_else(|| Error::InvalidArgument("baseline needs ground-truth labels".into()))?;
    let x = unlabeled.to_matrix();
    let labels = vec![UNLABELED; x.rows()];
    let mut best: Option<ClusterAssignment> = None;
    for r in 0..BASELINE_RESTARTS {
        let run = semisup_kmeans(&x, &labels, k, seed.wrapping_add(r))?;
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    let best = best.expect("at least one restart");
    split_accuracy(&best.assignment, &truth, known_classes)
}
