//! Class-level kNN graph and its row-normalized propagation matrix.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::linalg::{norm, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct SemanticGraph {
    /// Binary adjacency with self-loops; row `i` lists the out-neighbors of `i`.
    pub adjacency: Vec<Vec<bool>>,
    /// `D⁻¹A`.
    pub norm_adjacency: Matrix,
    pub k: usize,
}

impl SemanticGraph {
    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    /// One row per line, comma separated 0/1 values.
    pub fn adjacency_csv(&self) -> String {
        let mut s = String::new();
        for row in &self.adjacency {
            let line: Vec<&str> = row.iter().map(|&b| if b { "1" } else { "0" }).collect();
            let _ = writeln!(s, "{}", line.join(","));
        }
        s
    }

    /// Order-sensitive FNV-1a digest of both matrices, used to assert the
    /// graph is left untouched by training.
    pub fn checksum(&self) -> u64 {
        let mut h = Fnv::default();
        for row in &self.adjacency {
            for &b in row {
                h.write(&[u8::from(b)]);
            }
        }
        for v in self.norm_adjacency.as_slice() {
            h.write(&v.to_bits().to_le_bytes());
        }
        h.0
    }
}

pub(crate) struct Fnv(pub u64);

impl Default for Fnv {
    fn default() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }
}

impl Fnv {
    pub(crate) fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }
}

/// Directed kNN graph over cosine similarity: node `i` links to the `k`
/// classes most similar to it (ties to the lower index) and to itself.
/// With `k >= nodes` the graph is complete.
pub fn build_knn_graph(class_embeddings: &Matrix, k: usize) -> Result<SemanticGraph> {
    let n = class_embeddings.rows();
    if n == 0 {
        return Err(Error::EmptyInput("class embeddings".into()));
    }
    if k < 1 {
        return Err(Error::InvalidArgument("knn k must be >= 1".into()));
    }
    if let Some(i) = class_embeddings.first_non_finite() {
        return Err(Error::NonFiniteValue {
            context: "class embeddings".into(),
            index: i,
        });
    }
    if k >= n {
        log::warn!("knn k={k} >= {n} class nodes; using the complete graph");
    }

    let norms: Vec<f64> = class_embeddings.row_iter().map(norm).collect();
    if let Some(i) = norms.iter().position(|&v| v == 0.0) {
        return Err(Error::InvalidArgument(format!("class embedding row {i} has zero norm")));
    }
    let cosine = |a: usize, b: usize| {
        crate::linalg::dot(class_embeddings.row(a), class_embeddings.row(b)) / (norms[a] * norms[b])
    };

    let mut adjacency = vec![vec![false; n]; n];
    for (i, row) in adjacency.iter_mut().enumerate() {
        row[i] = true;
        let mut others: Vec<(usize, f64)> = (0..n).filter(|&j| j != i).map(|j| (j, cosine(i, j))).collect();
        // Descending similarity, ascending index on ties.
        others.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        for &(j, _) in others.iter().take(k) {
            row[j] = true;
        }
    }
    let norm_adjacency = row_normalize(&adjacency)?;
    Ok(SemanticGraph {
        adjacency,
        norm_adjacency,
        k,
    })
}

/// `D⁻¹A` for a binary adjacency matrix.
pub fn row_normalize(adjacency: &[Vec<bool>]) -> Result<Matrix> {
    let n = adjacency.len();
    let mut out = Matrix::zeros(n, n);
    for (i, row) in adjacency.iter().enumerate() {
        if row.len() != n {
            return Err(Error::shape("adjacency row", n, row.len()));
        }
        let degree = row.iter().filter(|&&b| b).count();
        if degree == 0 {
            return Err(Error::Invariant(format!("adjacency row {i} is empty")));
        }
        let w = 1.0 / degree as f64;
        for (j, &b) in row.iter().enumerate() {
            if b {
                out[(i, j)] = w;
            }
        }
    }
    Ok(out)
}
