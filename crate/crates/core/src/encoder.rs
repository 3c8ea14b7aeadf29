//! Node encoder: `H^m = ReLU(X W_mlp + b)` followed by the skip-connected
//! convolution `H^r = ReLU(Ã [H^m ‖ X] W) + H^m`, with exact reverse-mode
//! gradients.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{s, Array1, Array2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::rng::{self, streams};
use crate::sparse::CsrMatrix;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"LXCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    /// `d0 × d`
    pub w_mlp: Array2<f64>,
    /// `d`
    pub b_mlp: Array1<f64>,
    /// `(d + d0) × d`; rows `0..d` act on `H^m`, rows `d..` on `X`.
    pub w_conv: Array2<f64>,
    pub seed: u64,
    version: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGrads {
    pub w_mlp: Array2<f64>,
    pub b_mlp: Array1<f64>,
    pub w_conv: Array2<f64>,
}

pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Xavier-uniform weights and zero bias, deterministic per seed.
pub fn init_params(d0: usize, d: usize, seed: u64) -> Result<EncoderParams> {
    if d0 == 0 || d == 0 {
        return Err(Error::Parameter(format!(
            "encoder dims must be positive, got d0={d0} d={d}"
        )));
    }
    let mut rng = rng::stream(seed, streams::INIT);
    let mut uniform = |rows: usize, cols: usize| {
        let bound = xavier_bound(rows, cols);
        Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..=bound))
    };
    let w_mlp = uniform(d0, d);
    let w_conv = uniform(d + d0, d);
    Ok(EncoderParams {
        w_mlp,
        b_mlp: Array1::zeros(d),
        w_conv,
        seed,
        version: 0,
    })
}

impl EncoderParams {
    pub fn zeros(d0: usize, d: usize) -> Self {
        Self {
            w_mlp: Array2::zeros((d0, d)),
            b_mlp: Array1::zeros(d),
            w_conv: Array2::zeros((d + d0, d)),
            seed: 0,
            version: 0,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_mlp.nrows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_mlp.ncols()
    }

    pub fn num_params(&self) -> usize {
        self.w_mlp.len() + self.b_mlp.len() + self.w_conv.len()
    }

    /// Bumped by every mutation through [`EncoderParams::tensors_mut`].
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn tensors(&self) -> [&[f64]; 3] {
        [
            self.w_mlp.as_slice().expect("standard layout"),
            self.b_mlp.as_slice().expect("standard layout"),
            self.w_conv.as_slice().expect("standard layout"),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 3] {
        self.version += 1;
        [
            self.w_mlp.as_slice_mut().expect("standard layout"),
            self.b_mlp.as_slice_mut().expect("standard layout"),
            self.w_conv.as_slice_mut().expect("standard layout"),
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    fn check_shapes(&self) -> Result<()> {
        let (d0, d) = self.w_mlp.dim();
        if self.b_mlp.len() != d || self.w_conv.dim() != (d + d0, d) {
            return Err(Error::DimensionMismatch(format!(
                "encoder shapes w_mlp {:?} b {:?} w_conv {:?}",
                self.w_mlp.dim(),
                self.b_mlp.len(),
                self.w_conv.dim()
            )));
        }
        Ok(())
    }
}

impl EncoderGrads {
    pub fn zeros_like(p: &EncoderParams) -> Self {
        Self {
            w_mlp: Array2::zeros(p.w_mlp.raw_dim()),
            b_mlp: Array1::zeros(p.b_mlp.raw_dim()),
            w_conv: Array2::zeros(p.w_conv.raw_dim()),
        }
    }

    pub fn tensors(&self) -> [&[f64]; 3] {
        [
            self.w_mlp.as_slice().expect("standard layout"),
            self.b_mlp.as_slice().expect("standard layout"),
            self.w_conv.as_slice().expect("standard layout"),
        ]
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// `D̃^{-1/2}(A + I)D̃^{-1/2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency(pub CsrMatrix);

pub fn build_norm_adj(g: &SparseGraph) -> NormalizedAdjacency {
    let n = g.num_nodes();
    let inv_sqrt: Vec<f64> = (0..n).map(|i| 1.0 / ((g.degree(i) + 1) as f64).sqrt()).collect();
    let rows = (0..n)
        .map(|i| {
            let mut row: Vec<(usize, f64)> = g.neighbors(i).iter().map(|&j| (j, inv_sqrt[i] * inv_sqrt[j])).collect();
            let at = row.partition_point(|&(j, _)| j < i);
            row.insert(at, (i, inv_sqrt[i] * inv_sqrt[i]));
            row
        })
        .collect();
    NormalizedAdjacency(CsrMatrix::from_rows(n, rows))
}

/// Graph-side inputs of the encoder, prepared once per training graph.
#[derive(Debug, Clone)]
pub struct EncoderInput {
    x: CsrMatrix,
    x_t: CsrMatrix,
    adj: NormalizedAdjacency,
}

/// Forward intermediates needed by the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    z_mlp: Array2<f64>,
    z_conv: Array2<f64>,
    h_m: Array2<f64>,
    params_version: u64,
}

#[derive(Debug, Clone)]
pub struct EncoderOutput {
    pub h_m: Array2<f64>,
    pub h_r: Array2<f64>,
    pub cache: ForwardCache,
}

/// Preprocessing applied to node features before they enter the encoder.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureNorm {
    #[default]
    None,
    /// Scale every row to unit Euclidean length; zero rows stay zero.
    RowL2,
}

impl FeatureNorm {
    pub fn apply(self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = x.clone();
        if self == FeatureNorm::RowL2 {
            for mut row in out.rows_mut() {
                let norm = row.dot(&row).sqrt();
                if norm > 0.0 {
                    row /= norm;
                }
            }
        }
        out
    }
}

impl EncoderInput {
    pub fn new(g: &SparseGraph, adj: NormalizedAdjacency) -> Self {
        Self::with_norm(g, adj, FeatureNorm::None)
    }

    pub fn with_norm(g: &SparseGraph, adj: NormalizedAdjacency, norm: FeatureNorm) -> Self {
        let x = match norm {
            FeatureNorm::None => CsrMatrix::from_dense(g.features().view()),
            _ => CsrMatrix::from_dense(norm.apply(g.features()).view()),
        };
        let x_t = x.transpose();
        Self { x, x_t, adj }
    }

    pub fn from_graph(g: &SparseGraph) -> Self {
        Self::new(g, build_norm_adj(g))
    }

    pub fn prepare(g: &SparseGraph, norm: FeatureNorm) -> Self {
        Self::with_norm(g, build_norm_adj(g), norm)
    }

    pub fn num_nodes(&self) -> usize {
        self.x.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn adjacency(&self) -> &NormalizedAdjacency {
        &self.adj
    }

    pub fn forward(&self, params: &EncoderParams) -> Result<EncoderOutput> {
        params.check_shapes()?;
        let d = params.hidden_dim();
        if params.input_dim() != self.feature_dim() {
            return Err(Error::DimensionMismatch(format!(
                "encoder expects {} input features, graph has {}",
                params.input_dim(),
                self.feature_dim()
            )));
        }
        let mut z_mlp = self.x.mul_dense(params.w_mlp.view());
        z_mlp += &params.b_mlp;
        let h_m = z_mlp.mapv(relu);
        if !h_m.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("mlp layer output H^m".into()));
        }
        let w_top = params.w_conv.slice(s![..d, ..]);
        let w_bottom = params.w_conv.slice(s![d.., ..]);
        let mut mixed = h_m.dot(&w_top);
        mixed += &self.x.mul_dense(w_bottom);
        let z_conv = self.adj.0.mul_dense(mixed.view());
        let mut h_r = z_conv.mapv(relu);
        h_r += &h_m;
        if !h_r.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("convolution layer output H^r".into()));
        }
        Ok(EncoderOutput {
            h_m: h_m.clone(),
            h_r,
            cache: ForwardCache {
                z_mlp,
                z_conv,
                h_m,
                params_version: params.version(),
            },
        })
    }

    /// Gradients of the parameters given upstream gradients for `H^r` and
    /// (optionally) an extra direct gradient for `H^m`.
    pub fn backward(
        &self,
        params: &EncoderParams,
        cache: &ForwardCache,
        grad_hr: &Array2<f64>,
        grad_hm: Option<&Array2<f64>>,
    ) -> Result<EncoderGrads> {
        if cache.params_version != params.version() {
            return Err(Error::Contract(format!(
                "stale forward cache (cache version {}, params version {})",
                cache.params_version,
                params.version()
            )));
        }
        let d = params.hidden_dim();
        let mut dz_conv = grad_hr.clone();
        Zip::from(&mut dz_conv).and(&cache.z_conv).for_each(|g, &z| {
            if z <= 0.0 {
                *g = 0.0;
            }
        });
        // Ã is symmetric
        let d_mixed = self.adj.0.mul_dense(dz_conv.view());
        let mut w_conv = Array2::zeros(params.w_conv.raw_dim());
        w_conv.slice_mut(s![..d, ..]).assign(&cache.h_m.t().dot(&d_mixed));
        w_conv
            .slice_mut(s![d.., ..])
            .assign(&self.x_t.mul_dense(d_mixed.view()));

        let mut dh_m = grad_hr.clone();
        if let Some(extra) = grad_hm {
            dh_m += extra;
        }
        dh_m += &d_mixed.dot(&params.w_conv.slice(s![..d, ..]).t());
        Zip::from(&mut dh_m).and(&cache.z_mlp).for_each(|g, &z| {
            if z <= 0.0 {
                *g = 0.0;
            }
        });
        let w_mlp = self.x_t.mul_dense(dh_m.view());
        let b_mlp = dh_m.sum_axis(Axis(0));
        Ok(EncoderGrads { w_mlp, b_mlp, w_conv })
    }
}

fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    format_version: u32,
    d0: usize,
    d: usize,
    seed: u64,
    meta: serde_json::Value,
}

/// Binary checkpoint: magic, version, JSON header length and header, then the
/// three tensors as little-endian f64 in row-major order.
pub fn write_checkpoint(path: &Path, params: &EncoderParams, meta: &serde_json::Value) -> Result<()> {
    let header = CheckpointHeader {
        format_version: CHECKPOINT_VERSION,
        d0: params.input_dim(),
        d: params.hidden_dim(),
        seed: params.seed,
        meta: meta.clone(),
    };
    let header = serde_json::to_vec(&header)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut put = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
    put(&CHECKPOINT_MAGIC)?;
    put(&CHECKPOINT_VERSION.to_le_bytes())?;
    put(&(header.len() as u64).to_le_bytes())?;
    put(&header)?;
    for t in params.tensors() {
        for v in t {
            put(&v.to_le_bytes())?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<(EncoderParams, serde_json::Value)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(file)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| Error::MalformedInput(format!("{}: {msg}", path.display()));
    if bytes.len() < 16 || bytes[..4] != CHECKPOINT_MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(bad(&format!("unsupported checkpoint version {version}")));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body_start = 16 + header_len;
    if bytes.len() < body_start {
        return Err(bad("truncated header"));
    }
    let header: CheckpointHeader = serde_json::from_slice(&bytes[16..body_start])?;
    let (d0, d) = (header.d0, header.d);
    let mut params = EncoderParams::zeros(d0, d);
    params.seed = header.seed;
    let expected = params.num_params() * 8;
    if bytes.len() - body_start != expected {
        return Err(bad("tensor payload size does not match header shapes"));
    }
    let mut values = bytes[body_start..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    for t in params.tensors_mut() {
        for slot in t.iter_mut() {
            *slot = values.next().expect("size checked");
        }
    }
    params.version = 0;
    Ok((params, header.meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = init_params(4, 2, 9).unwrap();
        let b = init_params(4, 2, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(xavier_bound(4, 2), 1.0);
        assert!(a.w_mlp.iter().all(|v| v.abs() <= 1.0));
        let conv_bound = xavier_bound(6, 2);
        assert!(a.w_conv.iter().all(|v| v.abs() <= conv_bound));
        assert!(init_params(0, 2, 1).is_err());
    }

    #[test]
    fn norm_adj_examples() {
        let iso = SparseGraph::from_edges(1, &[], Array2::zeros((1, 1))).unwrap();
        assert_eq!(build_norm_adj(&iso).0.get(0, 0), 1.0);
        let edge = SparseGraph::from_edges(2, &[(0, 1)], Array2::zeros((2, 1))).unwrap();
        let a = build_norm_adj(&edge).0.to_dense();
        assert!(a.iter().all(|&v| (v - 0.5).abs() < 1e-15));
        let tri = SparseGraph::from_edges(3, &[(0, 1), (1, 2), (0, 2)], Array2::zeros((3, 1))).unwrap();
        let a = build_norm_adj(&tri).0.to_dense();
        assert!(a.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn zero_params_give_zero_embeddings() {
        let g = SparseGraph::from_edges(3, &[(0, 1)], array![[1.0, 2.0], [0.0, 1.0], [3.0, 0.0]]).unwrap();
        let out = EncoderInput::from_graph(&g)
            .forward(&EncoderParams::zeros(2, 4))
            .unwrap();
        assert!(out.h_m.iter().all(|&v| v == 0.0));
        assert!(out.h_r.iter().all(|&v| v == 0.0));
        assert_eq!(out.h_r.dim(), (3, 4));
    }

    #[test]
    fn hand_evaluated_two_node_instance() {
        // X = I₂, single edge, d = 1.
        let g = SparseGraph::from_edges(2, &[(0, 1)], Array2::eye(2)).unwrap();
        let mut p = EncoderParams::zeros(2, 1);
        p.w_mlp = array![[1.0], [-1.0]];
        p.b_mlp = array![0.5];
        p.w_conv = array![[2.0], [1.0], [0.0]];
        let out = EncoderInput::from_graph(&g).forward(&p).unwrap();
        // H^m = relu([1.5, -0.5]) = [1.5, 0]
        assert_eq!(out.h_m, array![[1.5], [0.0]]);
        // [H^m ‖ X] W = [2*1.5 + 1, 0 + 0] = [4, 0]; Ã = 0.5 everywhere -> [2, 2]
        // H^r = relu([2, 2]) + H^m = [3.5, 2]
        assert_abs_diff_eq!(out.h_r[[0, 0]], 3.5, epsilon = 1e-12);
        assert_abs_diff_eq!(out.h_r[[1, 0]], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_upstream_gives_zero_grads_and_stale_cache_is_rejected() {
        let g = SparseGraph::from_edges(3, &[(0, 1), (1, 2)], array![[1.0, 0.0], [0.5, 1.0], [0.0, 2.0]]).unwrap();
        let input = EncoderInput::from_graph(&g);
        let mut p = init_params(2, 3, 1).unwrap();
        let out = input.forward(&p).unwrap();
        let grads = input.backward(&p, &out.cache, &Array2::zeros((3, 3)), None).unwrap();
        assert_eq!(grads.max_abs(), 0.0);
        p.tensors_mut()[1][0] = 0.1;
        assert!(matches!(
            input.backward(&p, &out.cache, &Array2::zeros((3, 3)), None),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn skip_path_sum_rule() {
        // Feeding g through grad_hm equals feeding it through grad_hr when the
        // conv branch is switched off (W = 0 makes Z_conv = 0, masked out).
        let g = SparseGraph::from_edges(3, &[(0, 1), (1, 2)], array![[1.0, 0.0], [0.5, 1.0], [0.0, 2.0]]).unwrap();
        let input = EncoderInput::from_graph(&g);
        let mut p = init_params(2, 3, 4).unwrap();
        p.w_conv.fill(0.0);
        let out = input.forward(&p).unwrap();
        let up = Array2::from_shape_fn((3, 3), |(i, k)| (i as f64 + 1.0) * 0.1 - k as f64 * 0.2);
        let via_hr = input.backward(&p, &out.cache, &up, None).unwrap();
        let via_hm = input
            .backward(&p, &out.cache, &Array2::zeros((3, 3)), Some(&up))
            .unwrap();
        assert_eq!(via_hr.w_mlp, via_hm.w_mlp);
        assert_eq!(via_hr.b_mlp, via_hm.b_mlp);
        let both = input.backward(&p, &out.cache, &up, Some(&up)).unwrap();
        assert_eq!(both.w_mlp, &via_hr.w_mlp * 2.0);
    }

    #[test]
    fn checkpoint_roundtrip_is_bitwise() {
        let p = init_params(5, 3, 77).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.bin");
        write_checkpoint(&path, &p, &serde_json::json!({"epoch": 3})).unwrap();
        let (back, meta) = read_checkpoint(&path).unwrap();
        assert_eq!(back, p);
        assert_eq!(meta["epoch"], 3);
    }
}
