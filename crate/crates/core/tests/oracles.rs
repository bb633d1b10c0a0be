//! Independent oracles for the geometric building blocks.

use mmsj::datasets::{euclidean_distances, scale_unit_frobenius, swiss_roll, DissimilarityMatrix, PointCloud};
use mmsj::embedding::classical_mds;
use mmsj::graph::{joint_knn, knn_directed, separate_knn, NeighborGraph};
use mmsj::linalg::{orthonormality_error, svd, Matrix};
use mmsj::matching::procrustes;
use mmsj::paths::{all_pairs_shortest_paths, floyd_shortest_paths, PathAlgorithm};
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let n = intervals + intervals % 2;
    let h = (b - a) / n as f64;
    let mut sum = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + i as f64 * h);
    }
    sum * h / 3.0
}

#[test]
fn flat_sheet_is_an_isometric_unrolling() {
    let (roll, flat) = swiss_roll(60, 17).unwrap();
    let speed = |t: f64| (1.0 + t * t).sqrt();
    for i in 0..59 {
        let (a, b) = (i, i + 1);
        let t = |p: usize| roll.coords[[p, 0]].hypot(roll.coords[[p, 2]]);
        let (ta, tb) = (t(a), t(b));
        let along_spiral = simpson(speed, ta.min(tb), ta.max(tb), 4000);
        let flat_gap = (flat.coords[[a, 0]] - flat.coords[[b, 0]]).abs();
        assert!((along_spiral - flat_gap).abs() <= 1e-6, "pair {i}: {along_spiral} vs {flat_gap}");
        assert_eq!(roll.coords[[a, 1]], flat.coords[[a, 1]]);
    }
}

fn random_points(n: usize, dim: usize, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PointCloud::new(Matrix::from_shape_fn((n, dim), |_| rng.random_range(-1.0..1.0)), "random").unwrap()
}

fn random_graph(n: usize, p: f64, rng: &mut ChaCha8Rng) -> NeighborGraph {
    let mut adj = Array2::from_elem((n, n), false);
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random_bool(p) {
                adj[[i, j]] = true;
                adj[[j, i]] = true;
            }
        }
    }
    NeighborGraph::from_adjacency(adj, 0).unwrap()
}

fn random_weights(n: usize, integer: bool, rng: &mut ChaCha8Rng) -> DissimilarityMatrix {
    let mut w = Matrix::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let v = if integer { rng.random_range(1..100) as f64 } else { rng.random_range(0.01..1.0) };
            w[[i, j]] = v;
            w[[j, i]] = v;
        }
    }
    DissimilarityMatrix::new(w).unwrap()
}

/// Shortest simple path by exhaustive depth-first enumeration.
fn brute_force_shortest(w: &Matrix, g: &NeighborGraph, from: usize, to: usize) -> f64 {
    fn go(w: &Matrix, g: &NeighborGraph, at: usize, to: usize, seen: &mut Vec<bool>, len: f64, best: &mut f64) {
        if at == to {
            *best = best.min(len);
            return;
        }
        for next in 0..g.n() {
            if g.has_edge(at, next) && !seen[next] {
                seen[next] = true;
                go(w, g, next, to, seen, len + w[[at, next]], best);
                seen[next] = false;
            }
        }
    }
    let mut seen = vec![false; g.n()];
    seen[from] = true;
    let mut best = f64::INFINITY;
    go(w, g, from, to, &mut seen, 0.0, &mut best);
    if from == to {
        0.0
    } else {
        best
    }
}

#[test]
fn shortest_paths_match_exhaustive_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for trial in 0..60 {
        let n = rng.random_range(2..=8);
        let g = random_graph(n, 0.45, &mut rng);
        let d = random_weights(n, false, &mut rng);
        let floyd = floyd_shortest_paths(&d, &g).unwrap();
        let dijkstra = all_pairs_shortest_paths(&d, &g, PathAlgorithm::Dijkstra).unwrap();
        for i in 0..n {
            for j in 0..n {
                let oracle = brute_force_shortest(d.values(), &g, i, j);
                for (name, got) in [("floyd", floyd.values()[[i, j]]), ("dijkstra", dijkstra.values()[[i, j]])] {
                    if oracle.is_infinite() {
                        assert!(got.is_infinite(), "trial {trial} {name} ({i},{j})");
                    } else {
                        assert!((got - oracle).abs() <= 1e-12, "trial {trial} {name} ({i},{j}): {got} vs {oracle}");
                    }
                }
            }
        }
    }
}

#[test]
fn floyd_equals_dijkstra_on_random_graphs() {
    // Integer weights keep every path sum exact, so equality is bitwise.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..200 {
        let n = rng.random_range(2..=50);
        let p = rng.random_range(0.02..0.5);
        let g = random_graph(n, p, &mut rng);
        let d = random_weights(n, true, &mut rng);
        let a = all_pairs_shortest_paths(&d, &g, PathAlgorithm::Floyd).unwrap();
        let b = all_pairs_shortest_paths(&d, &g, PathAlgorithm::Dijkstra).unwrap();
        assert_eq!(a.values(), b.values(), "trial {trial}, n = {n}");
    }
}

#[test]
fn floyd_and_dijkstra_agree_with_real_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..50 {
        let n = rng.random_range(2..=40);
        let g = random_graph(n, 0.2, &mut rng);
        let d = random_weights(n, false, &mut rng);
        let a = all_pairs_shortest_paths(&d, &g, PathAlgorithm::Floyd).unwrap();
        let b = all_pairs_shortest_paths(&d, &g, PathAlgorithm::Dijkstra).unwrap();
        for (x, y) in a.values().iter().zip(b.values().iter()) {
            assert!(x == y || (x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }
}

#[test]
fn mds_reproduces_euclidean_distances() {
    let pc = random_points(10, 3, 1);
    let d = euclidean_distances(&pc);
    let (e, _) = classical_mds(&d, 3).unwrap();
    let back = euclidean_distances(&PointCloud::new(e.coords.clone(), "mds").unwrap());
    let err = (back.values() - d.values()).mapv(f64::abs).fold(0.0f64, |a, &b| a.max(b));
    assert!(err <= 1e-8, "max distance error {err}");
}

fn random_orthogonal(d: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let a = Matrix::from_shape_fn((d, d), |_| rng.sample::<f64, _>(StandardNormal));
    let s = svd(a.view()).unwrap();
    s.u.dot(&s.v.t())
}

#[test]
fn triangle_recovered_up_to_rigid_motion() {
    let original = ndarray::array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
    let pc = PointCloud::new(original.clone(), "triangle").unwrap();
    let (e, _) = classical_mds(&euclidean_distances(&pc), 2).unwrap();
    let centered = &original - &original.mean_axis(ndarray::Axis(0)).unwrap();
    let target = mmsj::embedding::Embedding {
        coords: centered,
        eigenvalues: vec![],
        centered: true,
    };
    let map = procrustes(&e, &target).unwrap();
    let aligned = e.coords.dot(&map.transform1.t());
    let residual = (&aligned - &target.coords).mapv(|x| x * x).sum().sqrt();
    assert!(residual <= 1e-8, "residual {residual}");
}

fn embedding(coords: Matrix) -> mmsj::embedding::Embedding {
    mmsj::embedding::Embedding {
        coords,
        eigenvalues: vec![],
        centered: false,
    }
}

#[test]
fn procrustes_recovers_a_known_rotation_and_beats_random_ones() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for d in [2, 3, 5] {
        let x1 = Matrix::from_shape_fn((40, d), |_| rng.sample::<f64, _>(StandardNormal));
        let q = random_orthogonal(d, &mut rng);
        let x2 = x1.dot(&q.t());
        let map = procrustes(&embedding(x1.clone()), &embedding(x2.clone())).unwrap();
        let p = &map.transform1;
        assert!(orthonormality_error(p.view()) <= 1e-10);
        let err = (p - &q).mapv(f64::abs).fold(0.0f64, |a, &b| a.max(b));
        assert!(err <= 1e-8, "d = {d}: rotation error {err}");

        // With noise the exact rotation is unknown, but no orthogonal matrix
        // should do better than the Procrustes solution.
        let noisy = &x2 + &Matrix::from_shape_fn(x2.raw_dim(), |_| 0.3 * rng.sample::<f64, _>(StandardNormal));
        let map = procrustes(&embedding(x1.clone()), &embedding(noisy.clone())).unwrap();
        let cost = |r: &Matrix| (x1.dot(&r.t()) - &noisy).mapv(|v| v * v).sum();
        let best = cost(&map.transform1);
        for _ in 0..1000 {
            let r = random_orthogonal(d, &mut rng);
            assert!(best <= cost(&r) + 1e-12);
        }
    }
}

fn random_dissimilarities(n: usize, seed: u64) -> DissimilarityMatrix {
    scale_unit_frobenius(&euclidean_distances(&random_points(n, 3, seed))).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn directed_knn_has_exactly_k_out_edges(n in 3usize..40, k_frac in 0.0f64..1.0, seed in 0u64..1000) {
        let k = 1 + ((n - 2) as f64 * k_frac) as usize;
        let d = random_dissimilarities(n, seed);
        let g = knn_directed(d.values().view(), k).unwrap();
        for i in 0..n {
            prop_assert_eq!(g.degree(i), k);
            prop_assert!(!g.has_edge(i, i));
        }
        let s = separate_knn(&d, k).unwrap();
        prop_assert!(s.is_symmetrized());
        for i in 0..n {
            prop_assert!(s.degree(i) >= k);
        }
    }

    #[test]
    fn joint_knn_ignores_argument_order(n in 3usize..40, k in 1usize..5, seed in 0u64..1000) {
        let k = k.min(n - 1);
        let d1 = random_dissimilarities(n, seed);
        let d2 = random_dissimilarities(n, seed + 7919);
        let a = joint_knn(&d1, &d2, k).unwrap();
        let b = joint_knn(&d2, &d1, k).unwrap();
        prop_assert_eq!(a.adjacency(), b.adjacency());
    }

    #[test]
    fn neighborhoods_grow_with_k(n in 4usize..40, seed in 0u64..1000) {
        let d1 = random_dissimilarities(n, seed);
        let d2 = random_dissimilarities(n, seed + 1);
        let mut prev = joint_knn(&d1, &d2, 1).unwrap();
        for k in 2..n {
            let g = joint_knn(&d1, &d2, k).unwrap();
            for i in 0..n {
                for j in 0..n {
                    prop_assert!(!prev.has_edge(i, j) || g.has_edge(i, j));
                }
            }
            prev = g;
        }
    }

    #[test]
    fn geodesics_are_a_shortcut_free_metric(n in 3usize..30, k in 1usize..6, seed in 0u64..1000) {
        let d = random_dissimilarities(n, seed);
        let g = separate_knn(&d, k.min(n - 1)).unwrap();
        let gm = all_pairs_shortest_paths(&d, &g, PathAlgorithm::Dijkstra).unwrap();
        let v = gm.values();
        for i in 0..n {
            prop_assert_eq!(v[[i, i]], 0.0);
            for j in 0..n {
                prop_assert_eq!(v[[i, j]], v[[j, i]]);
                if g.has_edge(i, j) {
                    prop_assert!(v[[i, j]] <= d.values()[[i, j]]);
                }
                for m in 0..n {
                    prop_assert!(v[[i, j]] <= v[[i, m]] + v[[m, j]] + 1e-12);
                }
            }
        }
    }
}
