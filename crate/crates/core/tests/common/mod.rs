#![allow(dead_code)]

use std::path::PathBuf;

use linkexplain::graph::{Pair, SparseGraph};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Erdős–Rényi graph with uniform features in `[-1, 1]`; a ring is added so
/// every node has at least two neighbors.
pub fn random_graph(n: usize, p: f64, d0: usize, seed: u64) -> SparseGraph {
    let mut r = rng(seed);
    let mut edges: Vec<Pair> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    for i in 0..n {
        for j in (i + 2)..n {
            if r.random_bool(p) {
                edges.push((i, j));
            }
        }
    }
    let x = Array2::from_shape_fn((n, d0), |_| r.random_range(-1.0..1.0));
    SparseGraph::from_edges(n, &edges, x).unwrap()
}

/// Two dense communities with community-indicating features.
pub fn two_communities(n_per: usize, p_in: f64, p_out: f64, seed: u64) -> SparseGraph {
    let n = 2 * n_per;
    let mut r = rng(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if (i < n_per) == (j < n_per) { p_in } else { p_out };
            if r.random_bool(p) {
                edges.push((i, j));
            }
        }
    }
    let x = Array2::from_shape_fn((n, 4), |(i, k)| {
        let home = if i < n_per { 0 } else { 2 };
        let noise: f64 = r.random_range(-0.3..0.3);
        if k == home || k == home + 1 {
            1.0 + noise
        } else {
            noise
        }
    });
    SparseGraph::from_edges(n, &edges, x).unwrap()
}

/// `γ (I - (1-γ) A D^{-1})^{-1}` by Gauss–Jordan elimination.
pub fn dense_ppr(g: &SparseGraph, gamma: f64) -> Array2<f64> {
    let n = g.num_nodes();
    let mut m = Array2::<f64>::eye(n);
    for r in 0..n {
        for &c in g.neighbors(r) {
            m[[r, c]] -= (1.0 - gamma) / g.degree(c) as f64;
        }
    }
    let mut inv = Array2::<f64>::eye(n);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&a, &b| m[[a, col]].abs().total_cmp(&m[[b, col]].abs()))
            .unwrap();
        for k in 0..n {
            m.swap([col, k], [pivot, k]);
            inv.swap([col, k], [pivot, k]);
        }
        let d = m[[col, col]];
        for k in 0..n {
            m[[col, k]] /= d;
            inv[[col, k]] /= d;
        }
        for r in 0..n {
            if r != col {
                let f = m[[r, col]];
                if f != 0.0 {
                    for k in 0..n {
                        m[[r, k]] -= f * m[[col, k]];
                        inv[[r, k]] -= f * inv[[col, k]];
                    }
                }
            }
        }
    }
    inv.mapv(|v| gamma * v)
}

pub fn workspace_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn cora_dir() -> Option<PathBuf> {
    let dir = std::env::var_os("LINKEXPLAIN_CORA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| workspace_root().join("data/cora"));
    dir.join("edges.txt").exists().then_some(dir)
}
