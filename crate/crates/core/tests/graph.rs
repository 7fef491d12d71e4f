mod common;

use std::collections::HashSet;

use common::*;
use lccd::graph::{
    build_k_matrix, build_topology, edge_sampler, k_dual_norm, r0_proxy, CommGraph, EdgeSampler,
    Topology, Weighting,
};
use lccd::model::Objective;
use lccd::problems::synthetic_quadratic;
use lccd::reduction::reduce_problem;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;

fn edge_set(g: &CommGraph) -> HashSet<(usize, usize)> {
    g.edges().iter().map(|&(i, j)| (i.min(j), i.max(j))).collect()
}

#[test]
fn ring_of_four() {
    let g = build_topology(Topology::Ring, 4, Weighting::Uniform).unwrap();
    let want: HashSet<_> = [(0, 1), (1, 2), (2, 3), (0, 3)].into_iter().collect();
    assert_eq!(edge_set(&g), want);
    assert!(g.probabilities().iter().all(|&p| p == 0.25));
}

#[test]
fn clique_of_four() {
    let g = build_topology(Topology::Clique, 4, Weighting::Uniform).unwrap();
    assert_eq!(g.num_edges(), 6);
    let p = 2.0 / (4.0 * 3.0);
    assert!(g.probabilities().iter().all(|&q| (q - p).abs() < 1e-15));
}

#[test]
fn star_ring_of_four_merges_overlap() {
    let g = build_topology(Topology::StarRing, 4, Weighting::Uniform).unwrap();
    let mut brute = HashSet::new();
    for k in 1..4 {
        brute.insert((0, k));
    }
    for k in 0..4usize {
        let (a, b) = (k, (k + 1) % 4);
        brute.insert((a.min(b), a.max(b)));
    }
    assert_eq!(brute.len(), 5);
    assert_eq!(edge_set(&g), brute);
    assert!(g.probabilities().iter().all(|&p| (p - 0.2).abs() < 1e-15));
}

#[test]
fn tree_ring_contains_tree_and_ring() {
    let b = 9;
    let g = build_topology(Topology::TreeRing, b, Weighting::Uniform).unwrap();
    let set = edge_set(&g);
    for k in 1..b {
        assert!(set.contains(&((k - 1) / 2, k)));
    }
    for k in 0..b {
        let (a, c) = (k, (k + 1) % b);
        assert!(set.contains(&(a.min(c), a.max(c))));
    }
}

#[test]
fn small_node_counts_rejected() {
    for kind in Topology::ALL {
        assert!(matches!(
            build_topology(kind, 2, Weighting::Uniform),
            Err(lccd::Error::Topology(_))
        ));
    }
}

#[test]
fn invalid_graphs_rejected() {
    assert!(CommGraph::new(3, vec![(0, 1)], vec![1.0]).is_err());
    assert!(CommGraph::new(2, vec![(0, 1)], vec![0.5]).is_err());
    assert!(CommGraph::new(2, vec![(0, 0)], vec![1.0]).is_err());
}

#[test]
fn single_edge_sampler() {
    let g = CommGraph::uniform(2, vec![(0, 1)]).unwrap();
    assert!(edge_sampler(&g, 9).take(100).all(|e| e == (0, 1)));
}

fn frequencies(g: &CommGraph, draws: usize, seed: u64) -> Vec<f64> {
    let mut counts = vec![0usize; g.num_edges()];
    let mut s = EdgeSampler::new(g, seed);
    for _ in 0..draws {
        counts[s.next_index()] += 1;
    }
    counts.iter().map(|&c| c as f64 / draws as f64).collect()
}

#[test]
fn clique_three_frequencies() {
    let g = build_topology(Topology::Clique, 3, Weighting::Uniform).unwrap();
    for f in frequencies(&g, 60_000, 11) {
        assert!((f - 1.0 / 3.0).abs() <= 0.02);
    }
}

#[test]
fn skewed_two_edge_frequencies() {
    let g = CommGraph::new(3, vec![(0, 1), (1, 2)], vec![0.9, 0.1]).unwrap();
    let f = frequencies(&g, 100_000, 12);
    assert!((f[0] - 0.9).abs() <= 0.01 && (f[1] - 0.1).abs() <= 0.01);
}

#[test]
fn sampler_is_reproducible() {
    let g = build_topology(Topology::TreeRing, 7, Weighting::Uniform).unwrap();
    let a: Vec<_> = edge_sampler(&g, 5).take(500).collect();
    let b: Vec<_> = edge_sampler(&g, 5).take(500).collect();
    let c: Vec<_> = edge_sampler(&g, 6).take(500).collect();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn two_node_laplacian() {
    let g = CommGraph::uniform(2, vec![(0, 1)]).unwrap();
    let l = 3.0;
    let k = build_k_matrix(&g, l, 1, 0).unwrap();
    let want = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]) / (2.0 * l);
    assert!((k.laplacian() - want).abs().max() < 1e-15);
}

#[test]
fn two_node_dual_norm() {
    let g = CommGraph::uniform(2, vec![(0, 1)]).unwrap();
    let l = 3.0;
    let k = build_k_matrix(&g, l, 1, 0).unwrap();
    // nonzero eigenvalue of 𝓛 is 1/L with eigenvector (1,-1)/√2, so 𝓛⁺ = L·[[.5,-.5],[-.5,.5]]
    let eig = SymmetricEigen::new(k.laplacian().clone());
    let y = DVector::from_vec(vec![1.0, -1.0]);
    let mut q = 0.0;
    for (c, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam > 1e-12 {
            q += eig.eigenvectors.column(c).dot(&y).powi(2) / lam;
        }
    }
    let got = k_dual_norm(&[1.0, -1.0], &k).unwrap();
    assert!((got - q.sqrt()).abs() < 1e-12);
    assert!((got - (2.0 * l).sqrt()).abs() < 1e-12);
    assert_eq!(k_dual_norm(&[0.0, 0.0], &k).unwrap(), 0.0);
}

#[test]
fn clique_three_spectrum() {
    let g = build_topology(Topology::Clique, 3, Weighting::Uniform).unwrap();
    let l = 2.0;
    let k = build_k_matrix(&g, l, 1, 1).unwrap();
    let mut ev: Vec<f64> = SymmetricEigen::new(k.laplacian().clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    let p = 1.0 / 3.0;
    let want = [0.0, 3.0 * p / (2.0 * l), 3.0 * p / (2.0 * l)];
    for (a, b) in ev.iter().zip(want) {
        assert!((a - b).abs() < 1e-12);
    }
    for i in 0..3 {
        assert!((k.diagonal()[i] - 2.0 * p / l).abs() < 1e-15);
    }
}

#[test]
fn disconnected_graph_rejected() {
    let g = CommGraph::new(4, vec![(0, 1), (2, 3)], vec![0.5, 0.5]);
    match g {
        Err(e) => assert!(matches!(e, lccd::Error::Topology(_))),
        Ok(g) => assert!(matches!(build_k_matrix(&g, 1.0, 1, 0), Err(lccd::Error::Topology(_)))),
    }
}

/// Dense `(𝓛⊗I_ny) ⊕ (𝓓⊗I_nz)` and its pseudo-inverse from an eigensolve.
fn dense_k(k: &lccd::graph::KMatrix) -> (DMatrix<f64>, DMatrix<f64>) {
    let b = k.num_blocks();
    let (ny, nz) = (k.n_y(), k.n_z());
    let n = k.stacked_len();
    let mut m = DMatrix::zeros(n, n);
    for r in 0..b {
        for c in 0..b {
            for t in 0..ny {
                m[(r * ny + t, c * ny + t)] = k.laplacian()[(r, c)];
            }
        }
        for t in 0..nz {
            let idx = b * ny + r * nz + t;
            m[(idx, idx)] = k.diagonal()[r];
        }
    }
    let eig = SymmetricEigen::new(m.clone());
    let max = eig.eigenvalues.amax();
    let mut pinv = DMatrix::zeros(n, n);
    for (c, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam > 1e-12 * max {
            let v = eig.eigenvectors.column(c);
            pinv += v * v.transpose() / lam;
        }
    }
    (m, pinv)
}

#[test]
fn r0_proxy_matches_dense_quadratic_form() {
    let p = synthetic_quadratic(4, 3, 2, 50.0, 21).unwrap();
    let (x_star, _) = kkt_quadratic(p.objective.scale(), p.objective.centers(), &p.constraints);
    let l = p.objective.block_lipschitz().iter().copied().fold(0.0, f64::max);
    let reduced = reduce_problem(p.objective.clone(), &p.constraints).unwrap();
    let v0 = reduced.project(&p.constraints, &p.x0);
    let vs = reduced.project(&p.constraints, &x_star);
    // reduced coordinates are (y_i, z_i) per block; restack as (y; z)
    let (m, n) = (2, 3);
    let stack = |v: &[f64]| -> Vec<f64> {
        let mut out = Vec::new();
        for i in 0..4 {
            out.extend_from_slice(&v[i * n..i * n + m]);
        }
        for i in 0..4 {
            out.extend_from_slice(&v[i * n + m..(i + 1) * n]);
        }
        out
    };
    let (s0, ss) = (stack(&v0), stack(&vs));
    let g = build_topology(Topology::Ring, 4, Weighting::Uniform).unwrap();
    let k = build_k_matrix(&g, l, m, n - m).unwrap();
    let got = r0_proxy(&s0, &ss, &k).unwrap();
    let (_, pinv) = dense_k(&k);
    let diff = DVector::from_iterator(s0.len(), s0.iter().zip(&ss).map(|(a, b)| a - b));
    let want = diff.dot(&(&pinv * &diff)).sqrt();
    assert!((got - want).abs() <= 1e-9 * (1.0 + want), "{got} vs {want}");
    assert_eq!(r0_proxy(&s0, &s0, &k).unwrap(), 0.0);
    let doubled: Vec<f64> = s0.iter().zip(&ss).map(|(a, b)| b + 2.0 * (a - b)).collect();
    assert!((r0_proxy(&doubled, &ss, &k).unwrap() - 2.0 * got).abs() <= 1e-9 * (1.0 + got));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn topologies_are_valid(b in 3usize..40, kind in 0usize..4) {
        let g = build_topology(Topology::ALL[kind], b, Weighting::Uniform).unwrap();
        let total: f64 = g.probabilities().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        let set = edge_set(&g);
        prop_assert_eq!(set.len(), g.num_edges());
        prop_assert!(g.edges().iter().all(|&(i, j)| i != j && i < b && j < b));
        prop_assert!(build_k_matrix(&g, 1.0, 1, 0).is_ok());
    }

    #[test]
    fn laplacian_structure(b in 3usize..25, kind in 0usize..4, l in 0.1f64..10.0) {
        let g = build_topology(Topology::ALL[kind], b, Weighting::Uniform).unwrap();
        let k = build_k_matrix(&g, l, 1, 1).unwrap();
        let lap = k.laplacian();
        prop_assert!((lap - lap.transpose()).amax() < 1e-15);
        for r in 0..b {
            prop_assert!(lap.row(r).sum().abs() < 1e-14);
        }
        let eig = SymmetricEigen::new(lap.clone());
        prop_assert!(eig.eigenvalues.min() >= -1e-10);
        // connected: exactly one zero eigenvalue
        let zeros = eig.eigenvalues.iter().filter(|v| v.abs() < 1e-12 * eig.eigenvalues.amax().max(1.0)).count();
        prop_assert_eq!(zeros, 1);
    }

    #[test]
    fn sampler_within_five_stderr(seed in 0u64..1000, b in 3usize..8) {
        let g = build_topology(Topology::StarRing, b, Weighting::Uniform).unwrap();
        let draws = 100_000;
        let f = frequencies(&g, draws, seed);
        for (q, p) in f.iter().zip(g.probabilities()) {
            let stderr = (p * (1.0 - p) / draws as f64).sqrt();
            prop_assert!((q - p).abs() <= 5.0 * stderr);
        }
    }

    #[test]
    fn norm_duality(seed in 0u64..1000, b in 3usize..8) {
        let g = build_topology(Topology::TreeRing, b, Weighting::Uniform).unwrap();
        let k = build_k_matrix(&g, 1.5, 2, 1).unwrap();
        let mut r = rng(seed);
        let x = normal_vec(&mut r, k.stacked_len());
        let (m, pinv) = dense_k(&k);
        let xv = DVector::from_column_slice(&x);
        let proj = xv.dot(&(&pinv * &m * &xv));
        let lhs = k.norm(&x).unwrap() * k_dual_norm(&x, &k).unwrap();
        prop_assert!(lhs >= proj - 1e-9 * (1.0 + proj.abs()));
        let dual = xv.dot(&(&pinv * &xv)).sqrt();
        prop_assert!((k_dual_norm(&x, &k).unwrap() - dual).abs() <= 1e-9 * (1.0 + dual));
    }
}
