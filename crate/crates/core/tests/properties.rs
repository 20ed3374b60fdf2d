mod support;

use novelcat_core::clustering::{kmeans_pp_init, semisup_kmeans_from, similarity_features_from};
use novelcat_core::embed_io::UNLABELED;
use novelcat_core::evaluation::hungarian_accuracy;
use novelcat_core::graph::build_knn_graph;
use novelcat_core::linalg::normalize_rows;
use novelcat_core::losses::LossVariant;
use novelcat_core::nn::{gcn_forward, projector_forward, ModelParams, ModelShape, ProjectorWeights};
use novelcat_core::trainer::{checkpoint_from_bytes, checkpoint_to_bytes};
use novelcat_core::{estimate_k, semisup_kmeans, EmbeddingSet, Matrix, RunConfig, TrainState};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::{brute_force_correct, gradcheck, plain_kmeans, random_matrix};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Unit norm, or exactly zero where every ReLU feeding the row is dead.
fn unit_rows(m: &Matrix) -> bool {
    m.row_iter().all(|r| {
        let n = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        (n - 1.0).abs() < 1e-6 || n == 0.0
    })
}

fn embedding_set() -> impl Strategy<Value = EmbeddingSet> {
    (1usize..6, 1usize..5, any::<bool>()).prop_flat_map(|(n, d, labeled)| {
        let data = prop::collection::vec(-1e6f32..1e6, n * d);
        let labels = prop::collection::vec(-1i32..50, n);
        (data, labels).prop_map(move |(data, labels)| EmbeddingSet::new(n, d, data, labeled.then_some(labels)).unwrap())
    })
}

/// Tie-free class embeddings: random directions with distinct pairwise
/// cosines.
fn tie_free(seed: u64, n: usize, d: usize) -> Matrix {
    let mut r = rng(seed);
    random_matrix(&mut r, n, d, 1.0)
}

fn permute_rows(m: &Matrix, perm: &[usize]) -> Matrix {
    m.select_rows(perm)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn gvle_round_trip(set in embedding_set()) {
        let back = EmbeddingSet::from_bytes(&set.to_bytes().unwrap()).unwrap();
        prop_assert_eq!(back, set);
    }

    #[test]
    fn config_round_trip(k in 1usize..10, layers in 0usize..4, alpha in 0.0f64..1.0, seed: u64,
                         hidden in prop::option::of(1usize..64), printed: bool) {
        let cfg = RunConfig { knn_k: k, gcn_layers: layers, margin_alpha: alpha, seed,
                              hidden_dim: hidden, losses_as_printed: printed, ..RunConfig::default() };
        prop_assert_eq!(RunConfig::from_kv_str(&cfg.to_kv_string()).unwrap(), cfg);
    }

    #[test]
    fn knn_graph_rows_and_normalization(seed: u64, n in 1usize..8, d in 1usize..5, k in 1usize..8) {
        let x = tie_free(seed, n, d);
        prop_assume!(x.row_iter().all(|r| r.iter().any(|&v| v != 0.0)));
        let g = build_knn_graph(&x, k).unwrap();
        for i in 0..n {
            prop_assert!(g.adjacency[i][i]);
            let ones = g.adjacency[i].iter().filter(|&&b| b).count();
            prop_assert_eq!(ones, if n <= k { n } else { k + 1 });
            let s: f64 = g.norm_adjacency.row(i).iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn knn_graph_permutation_and_rescaling(seed: u64, n in 2usize..7, k in 1usize..4, scales in prop::collection::vec(0.1f64..10.0, 7)) {
        let x = tie_free(seed, n, 4);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.rotate_left(1 + (seed as usize % n));
        let g = build_knn_graph(&x, k).unwrap();
        let gp = build_knn_graph(&permute_rows(&x, &perm), k).unwrap();
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(gp.adjacency[i][j], g.adjacency[perm[i]][perm[j]]);
            }
        }
        let mut scaled = x.clone();
        for (r, &s) in scales.iter().enumerate().take(n) {
            scaled.row_mut(r).iter_mut().for_each(|v| *v *= s);
        }
        prop_assert_eq!(build_knn_graph(&scaled, k).unwrap().adjacency, g.adjacency);
    }

    #[test]
    fn gcn_is_permutation_equivariant_with_unit_rows(seed: u64, n in 2usize..6, layers in 0usize..4) {
        let mut r = rng(seed);
        let h0 = random_matrix(&mut r, n, 3, 1.0);
        let weights: Vec<Matrix> = (0..layers).map(|_| random_matrix(&mut r, 3, 3, 1.0)).collect();
        let g = build_knn_graph(&h0, 2).unwrap();
        let Ok((y, _)) = gcn_forward(&g, &h0, &weights) else { return Ok(()); };
        prop_assert!(unit_rows(&y));
        let perm: Vec<usize> = (0..n).rev().collect();
        let hp = permute_rows(&h0, &perm);
        let gp = build_knn_graph(&hp, 2).unwrap();
        let (yp, _) = gcn_forward(&gp, &hp, &weights).unwrap();
        for i in 0..n {
            for c in 0..3 {
                prop_assert!((yp[(i, c)] - y[(perm[i], c)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn projector_outputs_unit_rows(seed: u64, b in 1usize..6) {
        let mut r = rng(seed);
        let w = ProjectorWeights {
            w1: random_matrix(&mut r, 4, 5, 1.0),
            b1: random_matrix(&mut r, 1, 5, 0.5),
            w2: random_matrix(&mut r, 5, 3, 1.0),
            b2: random_matrix(&mut r, 1, 3, 0.5),
        };
        let x = random_matrix(&mut r, b, 4, 1.0);
        if let Ok((z, _)) = projector_forward(&x, &w) {
            prop_assert!(unit_rows(&z));
        }
    }

    #[test]
    fn similarity_features_match_naive_cosines(seed: u64, n in 1usize..6, classes in 2usize..5) {
        let mut r = rng(seed);
        let d = 4;
        let cfg = RunConfig { knn_k: 1, ..RunConfig::default() };
        let mut state = TrainState::new(cfg, d, classes).unwrap();
        state.params = ModelParams::init(state.params.shape, &mut r).unwrap();
        let h0 = random_matrix(&mut r, classes, d, 1.0);
        let g = build_knn_graph(&h0, 1).unwrap();
        let x = random_matrix(&mut r, n, d, 1.0);
        let q = similarity_features_from(&x, &state.params, &g, &h0).unwrap();
        let (ybar, _) = gcn_forward(&g, &h0, &state.params.weights.gcn).unwrap();
        let (z, _) = projector_forward(&x, &state.params.weights.proj).unwrap();
        prop_assert_eq!(q.shape(), (n, classes));
        for i in 0..n {
            for c in 0..classes {
                let (a, b) = (z.row(i), ybar.row(c));
                let dot: f64 = a.iter().zip(b).map(|(u, v)| u * v).sum();
                let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
                let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
                // Dead ReLU layers can zero a row; its similarities are 0.
                let expected = if na == 0.0 || nb == 0.0 { 0.0 } else { dot / (na * nb) };
                prop_assert!((q[(i, c)] - expected).abs() < 1e-12);
                prop_assert!((-1.0..=1.0).contains(&q[(i, c)]));
            }
        }
    }

    #[test]
    fn hungarian_matches_brute_force(seed: u64, k in 1usize..6, c in 1usize..6, n in 1usize..30) {
        let mut r = rng(seed);
        use rand::Rng;
        let assignment: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
        let truth: Vec<usize> = (0..n).map(|_| r.random_range(0..c)).collect();
        let m = hungarian_accuracy(&assignment, &truth, k, c).unwrap();
        prop_assert_eq!(m.correct, brute_force_correct(&assignment, &truth, k, c));
        let mut targets: Vec<usize> = m.permutation.values().copied().collect();
        targets.sort_unstable();
        targets.dedup();
        prop_assert_eq!(targets.len(), m.permutation.len());
    }

    #[test]
    fn kmeans_label_consistency_and_monotone_inertia(seed: u64, n in 4usize..40, k in 1usize..5, frac in 0.0f64..0.6) {
        use rand::Rng;
        let mut r = rng(seed);
        prop_assume!(k <= n);
        let x = random_matrix(&mut r, n, 3, 1.0);
        let labels: Vec<i32> = (0..n)
            .map(|_| if r.random::<f64>() < frac { r.random_range(0..k as i32) } else { UNLABELED })
            .collect();
        let free_clusters = (0..k as i32).filter(|c| !labels.contains(c)).count();
        prop_assume!(labels.iter().filter(|&&l| l == UNLABELED).count() >= free_clusters);
        let init = kmeans_pp_init(&x, &labels, k, seed).unwrap();
        let mut last = f64::INFINITY;
        let out = semisup_kmeans_from(&x, &labels, init, |snap| {
            for (i, &l) in labels.iter().enumerate() {
                if l >= 0 && snap.assignment[i] != l as usize {
                    return Err(novelcat_core::Error::Invariant(format!("sample {i} left its class")));
                }
            }
            if snap.inertia > last + 1e-9 {
                return Err(novelcat_core::Error::Invariant("inertia rose".into()));
            }
            last = snap.inertia;
            Ok(())
        });
        prop_assert!(out.is_ok(), "{:?}", out.err());
    }

    #[test]
    fn unlabeled_kmeans_matches_plain_oracle(seed: u64, n in 2usize..=30, k in 1usize..6) {
        prop_assume!(k <= n);
        let mut r = rng(seed);
        let x = random_matrix(&mut r, n, 2, 1.0);
        let labels = vec![UNLABELED; n];
        let init = kmeans_pp_init(&x, &labels, k, seed).unwrap();
        let points: Vec<Vec<f64>> = x.row_iter().map(<[f64]>::to_vec).collect();
        let init_rows: Vec<Vec<f64>> = init.row_iter().map(<[f64]>::to_vec).collect();
        let ours = semisup_kmeans_from(&x, &labels, init, |_| Ok(())).unwrap();
        let oracle = plain_kmeans(&points, init_rows, novelcat_core::clustering::MAX_LLOYD_ITERATIONS);
        prop_assert_eq!(&ours.assignment, &oracle.assignment);
        for (c, row) in oracle.centroids.iter().enumerate() {
            for (a, b) in ours.centroids.row(c).iter().zip(row) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gvlp_round_trip(seed: u64, d in 1usize..5, classes in 2usize..5, layers in 0usize..4) {
        let cfg = RunConfig { seed, gcn_layers: layers, knn_k: 1, ..RunConfig::default() };
        let state = TrainState::new(cfg, d, classes).unwrap();
        let bytes = checkpoint_to_bytes(&state).unwrap();
        let back = checkpoint_from_bytes(&bytes).unwrap();
        prop_assert_eq!(checkpoint_to_bytes(&back).unwrap(), bytes);
        prop_assert_eq!(back, state);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn grad_cma(seed: u64) {
        prop_assert!(gradcheck::cma(&mut rng(seed), LossVariant::MarginConsistent) < 1e-4);
    }

    #[test]
    fn grad_cma_as_printed(seed: u64) {
        prop_assert!(gradcheck::cma(&mut rng(seed), LossVariant::AsPrinted) < 1e-4);
    }

    #[test]
    fn grad_sdp(seed: u64) {
        prop_assert!(gradcheck::sdp(&mut rng(seed), LossVariant::MarginConsistent) < 1e-4);
        prop_assert!(gradcheck::sdp(&mut rng(seed), LossVariant::AsPrinted) < 1e-4);
    }

    #[test]
    fn grad_cs(seed: u64) {
        prop_assert!(gradcheck::cs(&mut rng(seed)) < 1e-4);
    }

    #[test]
    fn grad_total(seed: u64) {
        prop_assert!(gradcheck::total(&mut rng(seed)) < 1e-4);
    }

    #[test]
    fn grad_gcn(seed: u64) {
        prop_assert!(gradcheck::gcn(&mut rng(seed)) < 1e-4);
    }

    #[test]
    fn grad_projector(seed: u64) {
        prop_assert!(gradcheck::projector(&mut rng(seed)) < 1e-4);
    }
}

#[test]
fn estimate_k_is_deterministic_and_scan_order_free() {
    let s = novelcat_core::generate_synthetic(4, 2, 20, 8, 8.0, 5).unwrap();
    let (x, _) = normalize_rows(&s.unlabeled.to_matrix()).unwrap();
    let labels = vec![UNLABELED; x.rows()];
    let a = estimate_k(&x, &labels, 2, 8, 1).unwrap();
    let b = estimate_k(&x, &labels, 2, 8, 1).unwrap();
    assert_eq!(a, b);
    // Each K is an independent run, so a narrower scan sees the same values.
    let sub = estimate_k(&x, &labels, 3, 6, 1).unwrap();
    for (k, v) in &sub.curve {
        let full = a.curve.iter().find(|(kk, _)| kk == k).unwrap().1;
        assert_eq!(*v, full);
    }
    let _ = semisup_kmeans(&x, &labels, a.k, 1).unwrap();
    let _ = ModelShape {
        input_dim: 1,
        hidden_dim: 1,
        output_dim: 1,
        gcn_layers: 0,
        classes: 1,
    };
}
