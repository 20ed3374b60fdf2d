//! Embedding sets, the GVLE file format, run configuration and the
//! synthetic data generator.
//!
//! # GVLE layout (little-endian)
//!
//! | Offset        | Size      | Field                          |
//! |---------------|-----------|--------------------------------|
//! | 0             | 4         | magic `"GVLE"`                 |
//! | 4             | 4         | `n: u32`                       |
//! | 8             | 4         | `d: u32`                       |
//! | 12            | 1         | `has_labels: u8` (0 or 1)      |
//! | 13            | 4·n·d     | `f32` payload, row-major       |
//! | 13 + 4·n·d    | 4·n       | `i32` labels, if `has_labels`  |
//!
//! Label `-1` marks an unlabeled row. Class names and the known-class count
//! are not persisted; callers attach them from context.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const GVLE_MAGIC: [u8; 4] = *b"GVLE";
const GVLE_HEADER_LEN: usize = 13;

/// Label value for rows without a class.
pub const UNLABELED: i32 = -1;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    rows: usize,
    dim: usize,
    data: Vec<f32>,
    labels: Option<Vec<i32>>,
    pub class_names: Option<Vec<String>>,
    pub known_class_count: Option<usize>,
}

impl EmbeddingSet {
    pub fn new(rows: usize, dim: usize, data: Vec<f32>, labels: Option<Vec<i32>>) -> Result<Self> {
        let set = Self {
            rows,
            dim,
            data,
            labels,
            class_names: None,
            known_class_count: None,
        };
        set.validate()?;
        Ok(set)
    }

    /// Converts a double-precision matrix, rounding each value to f32.
    pub fn from_matrix(m: &Matrix, labels: Option<Vec<i32>>) -> Result<Self> {
        let data = m.as_slice().iter().map(|&v| v as f32).collect();
        Self::new(m.rows(), m.cols(), data, labels)
    }

    pub fn with_known_class_count(mut self, known: usize) -> Result<Self> {
        self.known_class_count = Some(known);
        self.validate()?;
        Ok(self)
    }

    pub fn with_class_names(mut self, names: Vec<String>) -> Result<Self> {
        self.class_names = Some(names);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.dim == 0 {
            return Err(Error::EmptyInput(format!(
                "embedding set must have n >= 1 and d >= 1, got {}x{}",
                self.rows, self.dim
            )));
        }
        if self.data.len() != self.rows * self.dim {
            return Err(Error::shape("EmbeddingSet data", self.rows * self.dim, self.data.len()));
        }
        if let Some(i) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue {
                context: "embedding payload".into(),
                index: i,
            });
        }
        if let Some(labels) = &self.labels {
            if labels.len() != self.rows {
                return Err(Error::shape("EmbeddingSet labels", self.rows, labels.len()));
            }
            let class_limit = self.class_names.as_ref().map(|c| c.len() as i64);
            for (i, &l) in labels.iter().enumerate() {
                let out_of_range = l < UNLABELED || class_limit.is_some_and(|limit| i64::from(l) >= limit);
                if out_of_range {
                    return Err(Error::LabelOutOfRange {
                        offset: i,
                        label: l.into(),
                    });
                }
            }
        }
        if let (Some(known), Some(names)) = (self.known_class_count, &self.class_names) {
            if known > names.len() {
                return Err(Error::InvalidArgument(format!(
                    "known_class_count {known} exceeds class count {}",
                    names.len()
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn labels(&self) -> Option<&[i32]> {
        self.labels.as_deref()
    }

    /// One past the largest label, or 0 without labels.
    pub fn class_count(&self) -> usize {
        if let Some(names) = &self.class_names {
            return names.len();
        }
        self.labels
            .as_ref()
            .and_then(|l| l.iter().copied().max())
            .map_or(0, |m| (m + 1).max(0) as usize)
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_vec(self.rows, self.dim, self.data.iter().map(|&v| f64::from(v)).collect())
            .expect("validated shape")
    }

    /// Rows whose label is set (not -1), with their labels.
    pub fn labeled_rows(&self) -> Vec<(usize, usize)> {
        match &self.labels {
            Some(labels) => labels
                .iter()
                .enumerate()
                .filter(|(_, &l)| l >= 0)
                .map(|(i, &l)| (i, l as usize))
                .collect(),
            None => Vec::new(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let n = u32::try_from(self.rows).map_err(|_| Error::InvalidArgument(format!("n={} exceeds u32", self.rows)))?;
        let d = u32::try_from(self.dim).map_err(|_| Error::InvalidArgument(format!("d={} exceeds u32", self.dim)))?;
        let label_bytes = self.labels.as_ref().map_or(0, |l| 4 * l.len());
        let mut out = Vec::with_capacity(GVLE_HEADER_LEN + 4 * self.data.len() + label_bytes);
        out.extend_from_slice(&GVLE_MAGIC);
        out.extend_from_slice(&n.to_le_bytes());
        out.extend_from_slice(&d.to_le_bytes());
        out.push(u8::from(self.labels.is_some()));
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        if let Some(labels) = &self.labels {
            for l in labels {
                out.extend_from_slice(&l.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = ByteCursor::new(bytes);
        let magic = cur.array::<4>()?;
        if magic != GVLE_MAGIC {
            return Err(Error::BadMagic {
                expected: GVLE_MAGIC,
                found: magic,
            });
        }
        let n = cur.u32()? as usize;
        let d = cur.u32()? as usize;
        let flag_offset = cur.offset();
        let has_labels = match cur.u8()? {
            0 => false,
            1 => true,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "has_labels flag at offset {flag_offset} must be 0 or 1, found {other}"
                )))
            }
        };
        let count = n
            .checked_mul(d)
            .ok_or_else(|| Error::InvalidArgument(format!("n*d overflows: {n}x{d}")))?;
        cur.require(count.saturating_mul(4))?;
        let mut data = Vec::with_capacity(count);
        for _ in 0..count {
            let offset = cur.offset();
            let v = cur.f32()?;
            if !v.is_finite() {
                return Err(Error::NonFiniteValue {
                    context: format!("GVLE payload at offset {offset}"),
                    index: data.len(),
                });
            }
            data.push(v);
        }
        let labels = if has_labels {
            cur.require(n.saturating_mul(4))?;
            let mut labels = Vec::with_capacity(n);
            for _ in 0..n {
                let offset = cur.offset();
                let l = cur.i32()?;
                if l < UNLABELED {
                    return Err(Error::LabelOutOfRange {
                        offset,
                        label: l.into(),
                    });
                }
                labels.push(l);
            }
            Some(labels)
        } else {
            None
        };
        if cur.remaining() != 0 {
            return Err(Error::InvalidArgument(format!(
                "{} trailing bytes at offset {}",
                cur.remaining(),
                cur.offset()
            )));
        }
        Self::new(n, d, data, labels)
    }
}

pub fn read_embedding_file(path: impl AsRef<Path>) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    EmbeddingSet::from_bytes(&bytes)
}

pub fn write_embedding_file(set: &EmbeddingSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = set.to_bytes()?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Little-endian reader that reports the failing offset. Shared with the
/// checkpoint codec.
pub(crate) struct ByteCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteCursor<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn offset(&self) -> usize {
        self.pos
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub(crate) fn require(&self, needed: usize) -> Result<()> {
        if self.remaining() < needed {
            return Err(Error::Truncated {
                offset: self.pos,
                needed,
                available: self.remaining(),
            });
        }
        Ok(())
    }

    pub(crate) fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        self.require(len)?;
        let s = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    pub(crate) fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut out = [0u8; N];
        out.copy_from_slice(self.take(N)?);
        Ok(out)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.array::<1>()?[0])
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    pub(crate) fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.array()?))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    pub(crate) fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.array()?))
    }

    pub(crate) fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.array()?))
    }
}

/// Hyperparameters for one training + clustering run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub knn_k: usize,
    pub gcn_layers: usize,
    pub margin_alpha: f64,
    pub learn_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub hidden_dim: Option<usize>,
    pub context_vectors_m: usize,
    pub temperature: f64,
    /// Use the loss signs exactly as typeset instead of the margin-consistent ones.
    pub losses_as_printed: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            knn_k: 3,
            gcn_layers: 2,
            margin_alpha: 0.3,
            learn_rate: 1e-3,
            batch_size: 128,
            epochs: 100,
            seed: 0,
            hidden_dim: None,
            context_vectors_m: 16,
            temperature: 1.0,
            losses_as_printed: false,
        }
    }
}

impl RunConfig {
    /// Checks the field invariants. `known_classes` is |C_kwn| when known.
    pub fn validate(&self, known_classes: Option<usize>) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.knn_k < 1 {
            return bad("knn_k must be >= 1".into());
        }
        if let Some(known) = known_classes {
            if self.knn_k >= known {
                return bad(format!(
                    "knn_k={} must be smaller than the known class count {known}",
                    self.knn_k
                ));
            }
        }
        if self.gcn_layers > 3 {
            return bad(format!("gcn_layers={} not in 0..=3", self.gcn_layers));
        }
        if !(0.0..=1.0).contains(&self.margin_alpha) {
            return bad(format!("margin_alpha={} not in [0,1]", self.margin_alpha));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad(format!("temperature={} must be > 0", self.temperature));
        }
        if !(self.learn_rate > 0.0 && self.learn_rate.is_finite()) {
            return bad(format!("learn_rate={} must be > 0", self.learn_rate));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if self.hidden_dim == Some(0) {
            return bad("hidden_dim must be >= 1".into());
        }
        Ok(())
    }

    /// `key=value` lines, one per field, in declaration order.
    pub fn to_kv_string(&self) -> String {
        let mut s = String::new();
        let hidden = self.hidden_dim.map_or_else(|| "auto".to_string(), |h| h.to_string());
        let _ = writeln!(s, "knn_k={}", self.knn_k);
        let _ = writeln!(s, "gcn_layers={}", self.gcn_layers);
        let _ = writeln!(s, "margin_alpha={}", self.margin_alpha);
        let _ = writeln!(s, "learn_rate={}", self.learn_rate);
        let _ = writeln!(s, "batch_size={}", self.batch_size);
        let _ = writeln!(s, "epochs={}", self.epochs);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "hidden_dim={hidden}");
        let _ = writeln!(s, "context_vectors_m={}", self.context_vectors_m);
        let _ = writeln!(s, "temperature={}", self.temperature);
        let _ = writeln!(s, "losses_as_printed={}", self.losses_as_printed);
        s
    }

    /// Parses `key=value` lines. Blank lines and `#` comments are skipped;
    /// missing keys keep their defaults, unknown keys are rejected.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("line {}: expected key=value", lineno + 1)))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        let mut cfg = RunConfig::default();
        for (k, v) in &map {
            let parse_err = |e: &dyn std::fmt::Display| Error::InvalidConfig(format!("{k}={v}: {e}"));
            match k.as_str() {
                "knn_k" => cfg.knn_k = v.parse().map_err(|e| parse_err(&e))?,
                "gcn_layers" => cfg.gcn_layers = v.parse().map_err(|e| parse_err(&e))?,
                "margin_alpha" => cfg.margin_alpha = v.parse().map_err(|e| parse_err(&e))?,
                "learn_rate" => cfg.learn_rate = v.parse().map_err(|e| parse_err(&e))?,
                "batch_size" => cfg.batch_size = v.parse().map_err(|e| parse_err(&e))?,
                "epochs" => cfg.epochs = v.parse().map_err(|e| parse_err(&e))?,
                "seed" => cfg.seed = v.parse().map_err(|e| parse_err(&e))?,
                "hidden_dim" => {
                    cfg.hidden_dim = if v == "auto" {
                        None
                    } else {
                        Some(v.parse().map_err(|e| parse_err(&e))?)
                    }
                }
                "context_vectors_m" => cfg.context_vectors_m = v.parse().map_err(|e| parse_err(&e))?,
                "temperature" => cfg.temperature = v.parse().map_err(|e| parse_err(&e))?,
                "losses_as_printed" => cfg.losses_as_printed = v.parse().map_err(|e| parse_err(&e))?,
                _ => return Err(Error::InvalidConfig(format!("unknown key {k:?}"))),
            }
        }
        Ok(cfg)
    }
}

/// Output of [`generate_synthetic`].
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    /// Known classes only, every row labeled.
    pub labeled: EmbeddingSet,
    /// All classes; labels hold ground truth for scoring only.
    pub unlabeled: EmbeddingSet,
    /// One row per known class.
    pub class_embeddings: EmbeddingSet,
}

/// Minimum pairwise angle between synthetic class centers.
pub const MIN_CENTER_ANGLE: f64 = std::f64::consts::FRAC_PI_3;
const CENTER_ATTEMPTS: usize = 10_000;

/// Draws well-separated class centers on the unit sphere and samples noisy,
/// re-normalized points around them. Per-coordinate noise has standard
/// deviation `1 / separation`.
pub fn generate_synthetic(
    class_count: usize,
    known_count: usize,
    per_class: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> Result<SyntheticData> {
    if class_count == 0 || known_count == 0 || known_count > class_count {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= known_count ({known_count}) <= class_count ({class_count})"
        )));
    }
    if per_class < 2 {
        return Err(Error::InvalidArgument(format!(
            "per_class must be >= 2, got {per_class}"
        )));
    }
    if dim == 0 {
        return Err(Error::InvalidArgument("dim must be >= 1".into()));
    }
    if !(separation > 0.0 && separation.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "separation must be > 0, got {separation}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_cos = MIN_CENTER_ANGLE.cos();
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(class_count);
    for _ in 0..class_count {
        let mut placed = false;
        for _ in 0..CENTER_ATTEMPTS {
            let cand = unit_gaussian(&mut rng, dim);
            let ok = centers.iter().all(|c| crate::linalg::dot(c, &cand) <= max_cos);
            if ok {
                centers.push(cand);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::InfeasibleSeparation {
                classes: class_count,
                dim,
                attempts: CENTER_ATTEMPTS,
            });
        }
    }

    let sigma = 1.0 / separation;
    let noisy = |rng: &mut ChaCha8Rng, center: &[f64]| -> Vec<f32> {
        let mut v: Vec<f64> = center
            .iter()
            .map(|&c| {
                let z: f64 = StandardNormal.sample(rng);
                c + sigma * z
            })
            .collect();
        let n = crate::linalg::norm(&v);
        if n > 0.0 {
            v.iter_mut().for_each(|x| *x /= n);
        } else {
            v.clone_from_slice(center);
        }
        v.into_iter().map(|x| x as f32).collect()
    };

    let names: Vec<String> = (0..class_count).map(|c| format!("class_{c}")).collect();

    let mut data = Vec::with_capacity(known_count * per_class * dim);
    let mut labels = Vec::with_capacity(known_count * per_class);
    for (c, center) in centers.iter().enumerate().take(known_count) {
        for _ in 0..per_class {
            data.extend(noisy(&mut rng, center));
            labels.push(c as i32);
        }
    }
    let labeled = EmbeddingSet::new(known_count * per_class, dim, data, Some(labels))?
        .with_class_names(names.clone())?
        .with_known_class_count(known_count)?;

    let mut data = Vec::with_capacity(class_count * per_class * dim);
    let mut labels = Vec::with_capacity(class_count * per_class);
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..per_class {
            data.extend(noisy(&mut rng, center));
            labels.push(c as i32);
        }
    }
    let unlabeled = EmbeddingSet::new(class_count * per_class, dim, data, Some(labels))?
        .with_class_names(names.clone())?
        .with_known_class_count(known_count)?;

    let mut data = Vec::with_capacity(known_count * dim);
    for center in centers.iter().take(known_count) {
        data.extend(noisy(&mut rng, center));
    }
    let class_embeddings = EmbeddingSet::new(known_count, dim, data, Some((0..known_count as i32).collect()))?
        .with_class_names(names[..known_count].to_vec())?
        .with_known_class_count(known_count)?;

    Ok(SyntheticData {
        labeled,
        unlabeled,
        class_embeddings,
    })
}

fn unit_gaussian<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = crate::linalg::norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_set() -> EmbeddingSet {
        EmbeddingSet::new(2, 3, vec![0.5, -1.0, 2.0, 0.0, 1e-3, 7.0], Some(vec![0, -1])).unwrap()
    }

    #[test]
    fn single_value_file_is_17_bytes() {
        let set = EmbeddingSet::new(1, 1, vec![0.0], None).unwrap();
        let bytes = set.to_bytes().unwrap();
        assert_eq!(bytes.len(), 17);
        assert_eq!(&bytes[..4], b"GVLE");
        assert_eq!(bytes[12], 0);
    }

    #[test]
    fn bytes_round_trip() {
        let set = small_set();
        let back = EmbeddingSet::from_bytes(&set.to_bytes().unwrap()).unwrap();
        assert_eq!(back, set);
    }

    #[test]
    fn writing_twice_is_deterministic() {
        let set = small_set();
        assert_eq!(set.to_bytes().unwrap(), set.to_bytes().unwrap());
    }

    #[test]
    fn bad_magic_is_reported() {
        let mut bytes = small_set().to_bytes().unwrap();
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(
            EmbeddingSet::from_bytes(&bytes),
            Err(Error::BadMagic { found, .. }) if &found == b"XXXX"
        ));
    }

    #[test]
    fn truncated_payload_is_reported() {
        // n=2, d=3 needs 24 payload bytes; give 20.
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"GVLE");
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&3u32.to_le_bytes());
        bytes.push(0);
        bytes.extend_from_slice(&[0u8; 20]);
        match EmbeddingSet::from_bytes(&bytes) {
            Err(Error::Truncated {
                offset,
                needed,
                available,
            }) => {
                assert_eq!((offset, needed, available), (13, 24, 20));
            }
            other => panic!("expected Truncated, got {other:?}"),
        }
    }

    #[test]
    fn label_below_minus_one_names_its_offset() {
        let mut bytes = small_set().to_bytes().unwrap();
        let label_start = 13 + 24;
        bytes[label_start + 4..label_start + 8].copy_from_slice(&(-7i32).to_le_bytes());
        assert!(matches!(
            EmbeddingSet::from_bytes(&bytes),
            Err(Error::LabelOutOfRange { offset, label: -7 }) if offset == label_start + 4
        ));
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = read_embedding_file("/definitely/not/here.gvle").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
        assert!(err.to_string().contains("/definitely/not/here.gvle"));
    }

    #[test]
    fn nan_is_rejected_on_write() {
        let set = EmbeddingSet {
            rows: 1,
            dim: 2,
            data: vec![0.0, f32::NAN],
            labels: None,
            class_names: None,
            known_class_count: None,
        };
        assert!(matches!(set.to_bytes(), Err(Error::NonFiniteValue { index: 1, .. })));
    }

    #[test]
    fn config_kv_round_trip_and_unknown_keys() {
        let cfg = RunConfig {
            seed: 99,
            hidden_dim: Some(12),
            margin_alpha: 0.25,
            ..RunConfig::default()
        };
        let back = RunConfig::from_kv_str(&cfg.to_kv_string()).unwrap();
        assert_eq!(back, cfg);
        assert!(RunConfig::from_kv_str("bogus=1").is_err());
        assert!(RunConfig::from_kv_str("knn_k=abc").is_err());
    }

    #[test]
    fn config_validation() {
        let cfg = RunConfig::default();
        assert!(cfg.validate(Some(5)).is_ok());
        assert!(cfg.validate(Some(3)).is_err());
        let cfg = RunConfig {
            gcn_layers: 4,
            ..RunConfig::default()
        };
        assert!(cfg.validate(None).is_err());
        let cfg = RunConfig {
            margin_alpha: 1.5,
            ..RunConfig::default()
        };
        assert!(cfg.validate(None).is_err());
        let cfg = RunConfig {
            temperature: 0.0,
            ..RunConfig::default()
        };
        assert!(cfg.validate(None).is_err());
    }

    #[test]
    fn synthetic_counts() {
        let s = generate_synthetic(2, 1, 2, 4, 5.0, 7).unwrap();
        assert_eq!(s.labeled.len(), 2);
        assert_eq!(s.labeled.labels().unwrap(), &[0, 0]);
        assert_eq!(s.unlabeled.len(), 4);
        assert_eq!(s.class_embeddings.len(), 1);
    }

    #[test]
    fn synthetic_is_deterministic_and_unit_norm() {
        let a = generate_synthetic(5, 3, 10, 16, 4.0, 11).unwrap();
        let b = generate_synthetic(5, 3, 10, 16, 4.0, 11).unwrap();
        assert_eq!(a, b);
        for set in [&a.labeled, &a.unlabeled, &a.class_embeddings] {
            for i in 0..set.len() {
                let n: f64 = set.row(i).iter().map(|&v| f64::from(v).powi(2)).sum();
                assert!((n.sqrt() - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn infeasible_centers_error() {
        // Three directions 60 degrees apart cannot fit on a line.
        assert!(matches!(
            generate_synthetic(3, 1, 2, 1, 1.0, 0),
            Err(Error::InfeasibleSeparation { .. })
        ));
    }
}
