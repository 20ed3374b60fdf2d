//! Category discovery over pre-extracted vision/text embeddings.
//!
//! A GCN over a kNN graph of class text embeddings and a two-layer visual
//! projector are trained on labeled samples of the known classes with three
//! metric losses. Every sample is then described by its cosine similarities
//! to the learned class embeddings, and those features are clustered with
//! label-constrained k-means. Accuracy is scored with Hungarian matching.
//!
//! Module map:
//!
//! - [`embed_io`]: embedding sets, GVLE files, [`RunConfig`], synthetic data
//! - [`graph`]: kNN semantic graph and `D⁻¹A`
//! - [`nn`]: GCN and projector forward/backward, Adam
//! - [`losses`]: alignment, triplet and contextual losses
//! - [`trainer`]: training loop and GVLP checkpoints
//! - [`clustering`]: similarity features, constrained k-means, elbow
//! - [`evaluation`]: Hungarian accuracy and the All/Known/New report
//! - [`pipeline`]: the composed run

pub mod clustering;
pub mod embed_io;
pub mod error;
pub mod evaluation;
pub mod graph;
pub mod linalg;
pub mod losses;
pub mod nn;
pub mod pipeline;
pub mod trainer;

pub use clustering::{estimate_k, semisup_kmeans, similarity_features, ClusterAssignment, ElbowEstimate};
pub use embed_io::{
    generate_synthetic, read_embedding_file, write_embedding_file, EmbeddingSet, RunConfig, SyntheticData,
};
pub use error::{Error, ErrorKind, Result};
pub use evaluation::{hungarian_accuracy, split_accuracy, EvalReport};
pub use graph::{build_knn_graph, SemanticGraph};
pub use linalg::Matrix;
pub use nn::ModelParams;
pub use pipeline::{run_all, ClusterCount, PipelineOutput};
pub use trainer::{load_checkpoint, save_checkpoint, train, LossRecord, TrainState};
