//! Synthetic graphs with known explanations.
//!
//! Nodes draw features from a Gaussian mixture. A base graph `G1` links pairs
//! with probability increasing in feature cosine similarity. The final graph
//! `G2` adds edges whose endpoints have neighbors that are similar to each
//! other in features and in short-path structure; each added edge is
//! annotated with the `K` neighbors of each endpoint that explain it.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::TruthRecord;
use crate::graph::{
    allocate, read_edge_list, read_features, sample_negative_edges, shuffle, write_edge_list, write_features_bin,
    EdgeSplit, Pair, SparseGraph,
};
use crate::rng::{self, streams};

pub const NOISE_BOUND: f64 = 0.1;
pub const MEAN_VARIANCE: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthParams {
    pub num_nodes: usize,
    pub components: usize,
    pub feature_dim: usize,
    pub alpha: f64,
    pub k: usize,
    pub seed: u64,
    /// Expected edge count of the final graph.
    pub target_edges: usize,
    /// Share of `target_edges` placed in the base graph.
    pub base_fraction: f64,
}

impl SynthParams {
    pub fn preset(name: &str, seed: u64) -> Result<Self> {
        let (k, target_edges) = match name {
            "syn-sparse" => (2, 4243),
            "syn-medium" => (3, 9576),
            "syn-dense" => (4, 19826),
            other => return Err(Error::Parameter(format!("unknown synthetic preset {other:?}"))),
        };
        Ok(Self {
            num_nodes: 1000,
            components: 10,
            feature_dim: 128,
            alpha: 0.3,
            k,
            seed,
            target_edges,
            base_fraction: 0.5,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_nodes;
        if n < 2 || self.components == 0 || self.feature_dim == 0 || self.k == 0 {
            return Err(Error::Parameter("synthetic sizes must be positive".into()));
        }
        if !n.is_multiple_of(self.components) {
            return Err(Error::Parameter(format!(
                "{} components do not divide {n} nodes",
                self.components
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha) || !(self.base_fraction > 0.0 && self.base_fraction < 1.0) {
            return Err(Error::Parameter(
                "alpha must be in [0, 1] and base_fraction in (0, 1)".into(),
            ));
        }
        if self.target_edges == 0 || self.target_edges > n * (n - 1) / 2 {
            return Err(Error::Parameter(format!(
                "target of {} edges is infeasible",
                self.target_edges
            )));
        }
        Ok(())
    }

    fn base_target(&self) -> f64 {
        self.target_edges as f64 * self.base_fraction
    }
}

/// Fitted sharpening exponents and the expected counts they produce.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub base_exponent: f64,
    pub base_expected: f64,
    pub expansion_exponent: f64,
    pub expansion_expected: f64,
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub graph: SparseGraph,
    pub g1_edges: Vec<Pair>,
    pub explained_edges: Vec<Pair>,
    pub ground_truth: Vec<TruthRecord>,
    pub params: SynthParams,
    pub calibration: Calibration,
}

/// Home component of node `i` with equal-size contiguous groups.
pub fn component_of(i: usize, n: usize, m: usize) -> usize {
    i / (n / m)
}

/// Mixture weights `normalize(one_hot + U(0, 0.1))` for every node.
pub fn mixture_weights(n: usize, m: usize, seed: u64) -> Result<Array2<f64>> {
    if m == 0 || !n.is_multiple_of(m) {
        return Err(Error::Parameter(format!("{m} components do not divide {n} nodes")));
    }
    let mut r = rng::stream_at(seed, streams::FEATURES, &[0]);
    let mut phi = Array2::from_shape_simple_fn((n, m), || r.random_range(0.0..NOISE_BOUND));
    for (i, mut row) in phi.axis_iter_mut(Axis(0)).enumerate() {
        row[component_of(i, n, m)] += 1.0;
        let total = row.sum();
        row /= total;
    }
    Ok(phi)
}

/// Node features `x_i = Σ_j φ_ij μ_j + ζ_i` with `μ_j ~ N(0, 4I)` and
/// `ζ_i ~ N(0, I)`, rounded to `f32` so the binary feature file is exact.
pub fn generate_features(n: usize, m: usize, d0: usize, seed: u64) -> Result<Array2<f64>> {
    let phi = mixture_weights(n, m, seed)?;
    let mean_dist = Normal::new(0.0, MEAN_VARIANCE.sqrt()).expect("valid normal");
    let mut r = rng::stream_at(seed, streams::FEATURES, &[1]);
    let mu = Array2::from_shape_simple_fn((m, d0), || mean_dist.sample(&mut r));
    let mut r = rng::stream_at(seed, streams::FEATURES, &[2]);
    let noise: Array2<f64> = Array2::from_shape_simple_fn((n, d0), || StandardNormal.sample(&mut r));
    Ok((phi.dot(&mu) + noise).mapv(|v| v as f32 as f64))
}

/// Pairwise cosine similarity.
pub fn cosine_matrix(x: &Array2<f64>) -> Array2<f64> {
    let norms: Array1<f64> = x.map_axis(Axis(1), |r| r.dot(&r).sqrt().max(f64::MIN_POSITIVE));
    let unit = x / &norms.insert_axis(Axis(1));
    unit.dot(&unit.t())
}

/// Exponent `τ` with `Σ p^τ = target`, found by bisection on `log τ`.
pub fn fit_exponent(probs: &[f64], target: f64) -> Result<f64> {
    let logs: Vec<f64> = probs.iter().map(|p| p.max(f64::MIN_POSITIVE).ln()).collect();
    let expected = |tau: f64| logs.par_iter().map(|l| (tau * l).exp()).sum::<f64>();
    let (mut lo, mut hi) = (-20.0f64, 20.0f64);
    if expected(hi.exp()) > target || expected(lo.exp()) < target {
        return Err(Error::Parameter(format!(
            "cannot calibrate {} candidate pairs to {target} expected edges",
            probs.len()
        )));
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if expected(mid.exp()) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

/// One Bernoulli draw per upper-triangle entry of `prob` restricted to
/// `allowed`, with a separate stream per row.
fn sample_upper(
    prob: &Array2<f64>,
    tau: f64,
    seed: u64,
    stream: &str,
    allowed: impl Fn(usize, usize) -> bool + Sync,
) -> Vec<Pair> {
    let n = prob.nrows();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream_at(seed, stream, &[i as u64]);
            let mut row = Vec::new();
            for j in (i + 1)..n {
                if !allowed(i, j) {
                    continue;
                }
                let p = prob[[i, j]].powf(tau);
                if r.random::<f64>() < p {
                    row.push((i, j));
                }
            }
            row
        })
        .flatten()
        .collect()
}

/// Base graph: `Bern(((cos + 1) / 2)^τ)` per pair, with `τ` fitted to the
/// expected edge count `target`.
pub fn generate_g1(x: &Array2<f64>, seed: u64, target: f64) -> Result<(Vec<Pair>, f64, f64)> {
    let prob = cosine_matrix(x).mapv(|c| ((c + 1.0) / 2.0).clamp(0.0, 1.0));
    let n = prob.nrows();
    let upper: Vec<f64> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .map(|(i, j)| prob[[i, j]])
        .collect();
    let tau = fit_exponent(&upper, target)?;
    let expected = upper.iter().map(|p| p.powf(tau)).sum();
    Ok((sample_upper(&prob, tau, seed, streams::G1, |_, _| true), tau, expected))
}

fn dense_adjacency(n: usize, edges: &[Pair]) -> Array2<f64> {
    let mut a = Array2::zeros((n, n));
    for &(i, j) in edges {
        a[[i, j]] = 1.0;
        a[[j, i]] = 1.0;
    }
    a
}

/// `(A + A²/2 + A³/3)` scaled so its largest entry is one.
pub fn path_structure(a: &Array2<f64>) -> Array2<f64> {
    let a2 = a.dot(a);
    let a3 = a2.dot(a);
    let s = a + &(a2 / 2.0) + &(a3 / 3.0);
    let max = s.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        s / max
    } else {
        s
    }
}

/// Ground-truth neighbors of `i` for an edge to `j`: the top `k` neighbors
/// of `i` in `g` by `(1 - α) S[c, j] + α cos(c, j)`, ties to the smaller id.
pub fn truth_neighbors(
    g: &SparseGraph,
    structure: &Array2<f64>,
    cosine: &Array2<f64>,
    alpha: f64,
    i: usize,
    j: usize,
    k: usize,
) -> Vec<usize> {
    let mut scored: Vec<(f64, usize)> = g
        .neighbors(i)
        .iter()
        .filter(|&&c| c != j)
        .map(|&c| ((1.0 - alpha) * structure[[c, j]] + alpha * cosine[[c, j]], c))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    scored.into_iter().take(k).map(|(_, c)| c).collect()
}

/// Add explained edges to `g1` and annotate each with its ground truth.
pub fn expand_to_g2(
    g1_edges: &[Pair],
    x: &Array2<f64>,
    params: &SynthParams,
    base_calibration: (f64, f64),
) -> Result<SyntheticDataset> {
    if g1_edges.is_empty() {
        return Err(Error::Parameter("base graph has no edges".into()));
    }
    let n = x.nrows();
    let alpha = params.alpha;
    let g1 = SparseGraph::from_edges(n, g1_edges, Array2::zeros((n, 0)))?;
    let a = dense_adjacency(n, g1_edges);
    let structure = path_structure(&a);
    let cosine = cosine_matrix(x);
    let similarity = cosine.mapv(|c| (c + 1.0) / 2.0);

    // mean over c ∈ N_i of the score between c and j
    let deg: Array1<f64> = a.sum_axis(Axis(1)).mapv(|d| d.max(1.0));
    let row_mean = |m: &Array2<f64>| a.dot(m) / deg.view().insert_axis(Axis(1));
    let s_no = row_mean(&similarity);
    let s_st = row_mean(&structure);
    let combined = |i: usize, j: usize| {
        let no = 0.5 * (s_no[[i, j]] + s_no[[j, i]]);
        let st = 0.5 * (s_st[[i, j]] + s_st[[j, i]]);
        alpha * st + (1.0 - alpha) * no
    };
    let prob = Array2::from_shape_fn((n, n), |(i, j)| combined(i, j).clamp(0.0, 1.0));

    let k = params.k;
    let eligible = |i: usize, j: usize| g1.degree(i) >= k && g1.degree(j) >= k && !g1.has_edge(i, j);
    let candidates: Vec<f64> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .filter(|&(i, j)| eligible(i, j))
        .map(|(i, j)| prob[[i, j]])
        .collect();
    let target = params.target_edges as f64 - g1_edges.len() as f64;
    if target <= 0.0 {
        return Err(Error::Parameter(format!(
            "base graph already has {} of {} target edges",
            g1_edges.len(),
            params.target_edges
        )));
    }
    let tau = fit_exponent(&candidates, target)?;
    let expected = candidates.iter().map(|p| p.powf(tau)).sum();
    let explained = sample_upper(&prob, tau, params.seed, streams::G2, eligible);

    let mut all = g1_edges.to_vec();
    all.extend(&explained);
    let graph = SparseGraph::from_edges(n, &all, x.clone())?;
    let ground_truth: Vec<TruthRecord> = explained
        .par_iter()
        .map(|&(i, j)| TruthRecord {
            i,
            j,
            truth_i: truth_neighbors(&graph, &structure, &cosine, alpha, i, j, k),
            truth_j: truth_neighbors(&graph, &structure, &cosine, alpha, j, i, k),
        })
        .collect();
    Ok(SyntheticDataset {
        graph,
        g1_edges: g1_edges.to_vec(),
        explained_edges: explained,
        ground_truth,
        params: *params,
        calibration: Calibration {
            base_exponent: base_calibration.0,
            base_expected: base_calibration.1,
            expansion_exponent: tau,
            expansion_expected: expected,
        },
    })
}

pub fn generate(params: &SynthParams) -> Result<SyntheticDataset> {
    params.validate()?;
    let x = generate_features(params.num_nodes, params.components, params.feature_dim, params.seed)?;
    let (g1, tau, expected) = generate_g1(&x, params.seed, params.base_target())?;
    log::info!(
        "base graph: {} edges (expected {expected:.0}, exponent {tau:.3})",
        g1.len()
    );
    let ds = expand_to_g2(&g1, &x, params, (tau, expected))?;
    log::info!(
        "expanded graph: {} edges, {} explained (exponent {:.3})",
        ds.graph.num_edges(),
        ds.explained_edges.len(),
        ds.calibration.expansion_exponent
    );
    Ok(ds)
}

/// 40% of the explained edges to test, 10% to validation, everything else
/// (including the whole base graph) to training.
pub fn split_synthetic(ds: &SyntheticDataset, seed: u64) -> Result<EdgeSplit> {
    if ds.explained_edges.is_empty() {
        return Err(Error::SplitInfeasible("no explained edges".into()));
    }
    let mut explained = ds.explained_edges.clone();
    let mut r = rng::stream(seed, streams::SPLIT);
    shuffle(&mut explained, &mut r);
    let counts = allocate(explained.len(), &[0.4, 0.1, 0.5]);
    let test_pos = explained[..counts[0]].to_vec();
    let val_pos = explained[counts[0]..counts[0] + counts[1]].to_vec();
    let mut train_pos = ds.g1_edges.clone();
    train_pos.extend_from_slice(&explained[counts[0] + counts[1]..]);

    let total = test_pos.len() + val_pos.len() + train_pos.len();
    let negatives = sample_negative_edges(
        &ds.graph,
        total,
        &Default::default(),
        rng::derive_seed(seed, streams::NEGATIVES, &[]),
    )?;
    let (t, v) = (test_pos.len(), val_pos.len());
    Ok(EdgeSplit {
        seed,
        ratios: [
            train_pos.len() as f64 / total as f64,
            v as f64 / total as f64,
            t as f64 / total as f64,
        ],
        test_neg: negatives[..t].to_vec(),
        val_neg: negatives[t..t + v].to_vec(),
        train_neg: negatives[t + v..].to_vec(),
        train_pos,
        val_pos,
        test_pos,
    })
}

#[derive(Serialize, Deserialize)]
struct SynthManifest {
    params: SynthParams,
    calibration: Calibration,
    num_edges: usize,
    base_edges: usize,
    explained_edges: usize,
    truth_score: String,
}

const TRUTH_SCORE_NOTE: &str = "(1 - alpha) * paths[c, j] + alpha * cos(x_c, x_j); alpha weights the cosine term here, the reverse of the model's mixing convention";

impl SyntheticDataset {
    /// `edges.txt`, `base_edges.txt`, `features.bin`, `truth.jsonl`, `synth.json`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_edge_list(&dir.join("edges.txt"), &self.graph.edges())?;
        write_edge_list(&dir.join("base_edges.txt"), &self.g1_edges)?;
        write_features_bin(&dir.join("features.bin"), self.graph.features())?;
        let truth_path = dir.join("truth.jsonl");
        let file = File::create(&truth_path).map_err(|e| Error::io(&truth_path, e))?;
        let mut w = BufWriter::new(file);
        for rec in &self.ground_truth {
            writeln!(w, "{}", serde_json::to_string(rec)?).map_err(|e| Error::io(&truth_path, e))?;
        }
        w.flush().map_err(|e| Error::io(&truth_path, e))?;
        let manifest = SynthManifest {
            params: self.params,
            calibration: self.calibration,
            num_edges: self.graph.num_edges(),
            base_edges: self.g1_edges.len(),
            explained_edges: self.explained_edges.len(),
            truth_score: TRUTH_SCORE_NOTE.into(),
        };
        let path = dir.join("synth.json");
        fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let path = dir.join("synth.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: SynthManifest = serde_json::from_str(&text)?;
        let x = read_features(&dir.join("features.bin"))?;
        let to_pairs = |raw: Vec<(u64, u64)>| {
            raw.into_iter()
                .map(|(a, b)| (a as usize, b as usize))
                .collect::<Vec<_>>()
        };
        let edges = to_pairs(read_edge_list(&dir.join("edges.txt"))?);
        let g1_edges = to_pairs(read_edge_list(&dir.join("base_edges.txt"))?);
        let ground_truth = read_truth(&dir.join("truth.jsonl"))?;
        let explained_edges = ground_truth.iter().map(|t| (t.i, t.j)).collect();
        let graph = SparseGraph::from_edges(x.nrows(), &edges, x)?;
        Ok(Self {
            graph,
            g1_edges,
            explained_edges,
            ground_truth,
            params: manifest.params,
            calibration: manifest.calibration,
        })
    }

    pub fn truth_for(&self, i: usize, j: usize) -> Option<&TruthRecord> {
        self.ground_truth
            .iter()
            .find(|t| (t.i, t.j) == (i, j) || (t.j, t.i) == (i, j))
    }
}

pub fn read_truth(path: &Path) -> Result<Vec<TruthRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::MalformedInput(format!("{}:{}: {e}", path.display(), lineno + 1)))?,
        );
    }
    Ok(out)
}
