//! Personalized-PageRank diffusion and structure similarity.
//!
//! The series `S = Σ_{k=0..k_max} γ(1-γ)^k T^k` with `T = A D^{-1}` is
//! evaluated column block by column block with sparse-dense products, entries
//! below `drop_tol` are pruned, and the result is normalized symmetrically by
//! the row sums of the truncated series.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::sparse::CsrMatrix;

pub const DEFAULT_GAMMA: f64 = 0.05;
pub const DEFAULT_K_MAX: usize = 128;
pub const DEFAULT_DROP_TOL: f64 = 1e-4;

const BLOCK: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionMatrix {
    scores: CsrMatrix,
    pub gamma: f64,
    pub k_max: usize,
    pub drop_tol: f64,
    pub source_seed: Option<u64>,
}

/// Column-stochastic random-walk matrix `A D^{-1}`; isolated nodes get a unit
/// self-column.
pub fn transition_matrix(g: &SparseGraph) -> CsrMatrix {
    let deg = g.degrees();
    let rows = (0..g.num_nodes())
        .map(|r| {
            if deg[r] == 0 {
                vec![(r, 1.0)]
            } else {
                g.neighbors(r).iter().map(|&c| (c, 1.0 / deg[c] as f64)).collect()
            }
        })
        .collect();
    CsrMatrix::from_rows(g.num_nodes(), rows)
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("teleport probability {gamma} outside (0, 1)")))
    }
}

/// Unnormalized truncated series `S` together with its exact row sums
/// (taken before pruning).
/// Per-block sparse columns and their truncation residuals.
type BlockColumns = (Vec<Vec<(usize, f64)>>, Vec<f64>);

pub fn truncated_ppr(g: &SparseGraph, gamma: f64, k_max: usize, drop_tol: f64) -> Result<(CsrMatrix, Vec<f64>)> {
    check_gamma(gamma)?;
    let n = g.num_nodes();
    let t = transition_matrix(g);
    let blocks: Vec<(usize, usize)> = (0..n).step_by(BLOCK).map(|s| (s, (s + BLOCK).min(n))).collect();

    let results: Vec<BlockColumns> = blocks
        .par_iter()
        .map(|&(start, end)| {
            let width = end - start;
            // walk = (1-γ)^k T^k E_block
            let mut walk = Array2::<f64>::zeros((n, width));
            for (k, col) in (start..end).enumerate() {
                walk[[col, k]] = 1.0;
            }
            let mut acc = walk.mapv(|v| gamma * v);
            for _ in 0..k_max {
                walk = t.mul_dense(walk.view());
                walk.mapv_inplace(|v| v * (1.0 - gamma));
                acc.scaled_add(gamma, &walk);
            }
            let row_sums = acc.sum_axis(Axis(1)).to_vec();
            let columns = (0..width)
                .map(|k| {
                    acc.column(k)
                        .iter()
                        .enumerate()
                        .filter(|(_, v)| **v > 0.0 && **v >= drop_tol)
                        .map(|(r, v)| (r, *v))
                        .collect()
                })
                .collect();
            (columns, row_sums)
        })
        .collect();

    let mut columns = Vec::with_capacity(n);
    let mut row_sums = vec![0.0; n];
    for (cols, sums) in results {
        columns.extend(cols);
        for (acc, s) in row_sums.iter_mut().zip(sums) {
            *acc += s;
        }
    }
    // rows of S^T are the columns of S
    let s_t = CsrMatrix::from_rows(n, columns);
    Ok((s_t.transpose(), row_sums))
}

/// Normalized diffusion `D_S^{-1/2} S D_S^{-1/2}`.
pub fn compute_ppr(g: &SparseGraph, gamma: f64, k_max: usize, drop_tol: f64) -> Result<DiffusionMatrix> {
    let (mut s, row_sums) = truncated_ppr(g, gamma, k_max, drop_tol)?;
    let inv_sqrt: Vec<f64> = row_sums.iter().map(|d| 1.0 / d.sqrt()).collect();
    s.map_values(|r, c, v| v * inv_sqrt[r] * inv_sqrt[c]);
    Ok(DiffusionMatrix {
        scores: s,
        gamma,
        k_max,
        drop_tol,
        source_seed: None,
    })
}

impl DiffusionMatrix {
    pub fn num_nodes(&self) -> usize {
        self.scores.nrows()
    }

    pub fn nnz(&self) -> usize {
        self.scores.nnz()
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.scores
    }

    /// Raw normalized entry, exactly zero when absent.
    pub fn raw(&self, c: usize, j: usize) -> f64 {
        self.scores.get(c, j)
    }

    /// Structure similarity of `c` to `j`, clamped to `[0, 1]`.
    pub fn structure_score(&self, c: usize, j: usize) -> f64 {
        self.scores.get(c, j).clamp(0.0, 1.0)
    }

    pub fn with_source_seed(mut self, seed: u64) -> Self {
        self.source_seed = Some(seed);
        self
    }

    /// Sparse triplet file with a `#` header of the generation parameters.
    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "# linkexplain diffusion v1").map_err(io)?;
        writeln!(w, "# num_nodes={}", self.num_nodes()).map_err(io)?;
        writeln!(w, "# gamma={}", self.gamma).map_err(io)?;
        writeln!(w, "# k_max={}", self.k_max).map_err(io)?;
        writeln!(w, "# drop_tol={}", self.drop_tol).map_err(io)?;
        match self.source_seed {
            Some(s) => writeln!(w, "# seed={s}").map_err(io)?,
            None => writeln!(w, "# seed=none").map_err(io)?,
        }
        for (i, j, v) in self.scores.triplets() {
            writeln!(w, "{i} {j} {v}").map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let bad = |msg: String| Error::MalformedInput(format!("{}: {msg}", path.display()));
        let mut n = None;
        let (mut gamma, mut k_max, mut drop_tol, mut seed) = (None, None, None, None);
        let mut triplets = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if let Some(header) = line.strip_prefix('#') {
                if let Some((key, value)) = header.trim().split_once('=') {
                    match key {
                        "num_nodes" => n = value.parse::<usize>().ok(),
                        "gamma" => gamma = value.parse::<f64>().ok(),
                        "k_max" => k_max = value.parse::<usize>().ok(),
                        "drop_tol" => drop_tol = value.parse::<f64>().ok(),
                        "seed" => seed = Some(value.parse::<u64>().ok()),
                        _ => {}
                    }
                }
                continue;
            }
            let mut parts = line.split_whitespace();
            let (Some(i), Some(j), Some(v)) = (parts.next(), parts.next(), parts.next()) else {
                return Err(bad(format!("bad triplet line '{line}'")));
            };
            let i: usize = i.parse().map_err(|_| bad(format!("bad row '{i}'")))?;
            let j: usize = j.parse().map_err(|_| bad(format!("bad column '{j}'")))?;
            let v: f64 = v.parse().map_err(|_| bad(format!("bad value '{v}'")))?;
            triplets.push((i, j, v));
        }
        let n = n.ok_or_else(|| bad("missing num_nodes header".into()))?;
        if triplets.iter().any(|&(i, j, _)| i >= n || j >= n) {
            return Err(bad("triplet index out of range".into()));
        }
        Ok(Self {
            scores: CsrMatrix::from_triplets(n, n, triplets),
            gamma: gamma.ok_or_else(|| bad("missing gamma header".into()))?,
            k_max: k_max.ok_or_else(|| bad("missing k_max header".into()))?,
            drop_tol: drop_tol.ok_or_else(|| bad("missing drop_tol header".into()))?,
            source_seed: seed.flatten(),
        })
    }
}
