//! Fixtures shared by the benchmarks.

use novelcat_core::{generate_synthetic, Matrix, SyntheticData};

/// Deterministic pseudo-random matrix with entries in `[-scale, scale)`.
pub fn filler(rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |r, c| {
        let h = (r as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (c as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        let unit = (h >> 11) as f64 / (1u64 << 53) as f64;
        scale * (2.0 * unit - 1.0)
    })
}

/// The default synthetic benchmark: 10 classes, 5 known, 100 per class, d = 32.
pub fn benchmark_data(seed: u64) -> SyntheticData {
    generate_synthetic(10, 5, 100, 32, 6.0, seed).expect("valid synthetic parameters")
}
