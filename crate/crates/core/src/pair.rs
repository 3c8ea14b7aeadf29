//! Pair-specific neighbor selection and link scoring.
//!
//! For a pair `(i, j)` every neighbor `c` of `i` is scored against `j` by a
//! convex mix of structure similarity (diffusion entry `S̃_cj`) and node
//! similarity (`sigmoid(h_j · h_c)`). Shared neighbors of the pair are taken
//! first, the remaining slots up to `K` go to the best-scoring other
//! neighbors, and the softmax-weighted selection is added to `h_i` to form the
//! pair-specific representation. The selected neighbors are the explanation.

use std::cmp::Ordering;

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::diffusion::DiffusionMatrix;
use crate::error::{Error, Result};
use crate::graph::{intersect_sorted, SparseGraph};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairConfig {
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    /// Drop the opposite endpoint from each neighbor list before scoring.
    pub mask_target: bool,
}

impl Default for PairConfig {
    fn default() -> Self {
        Self {
            k: 3,
            alpha: 0.3,
            beta: 0.5,
            mask_target: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeighborScore {
    pub neighbor: usize,
    pub s_no: f64,
    pub s_st: f64,
    pub s: f64,
    pub is_common: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainedNeighbor {
    pub neighbor: usize,
    pub b: f64,
    pub s_no: f64,
    pub s_st: f64,
    pub is_common: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairExplanation {
    pub pair: (usize, usize),
    pub probability: f64,
    pub selected_i: Vec<ExplainedNeighbor>,
    pub selected_j: Vec<ExplainedNeighbor>,
}

impl PairExplanation {
    /// Neighbors of one endpoint ranked by weight, heaviest first.
    pub fn ranked(list: &[ExplainedNeighbor]) -> Vec<usize> {
        let mut order: Vec<&ExplainedNeighbor> = list.iter().collect();
        order.sort_by(|a, b| b.b.total_cmp(&a.b).then(a.neighbor.cmp(&b.neighbor)));
        order.into_iter().map(|e| e.neighbor).collect()
    }

    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Node similarity `sigmoid(h_j · h_c)`.
pub fn node_score(h_r: &Array2<f64>, c: usize, j: usize) -> f64 {
    sigmoid(h_r.row(j).dot(&h_r.row(c)))
}

/// Score candidates against `other`. `common` must be sorted.
pub fn score_candidates(
    dm: Option<&DiffusionMatrix>,
    h_r: &Array2<f64>,
    candidates: &[usize],
    common: &[usize],
    other: usize,
    alpha: f64,
) -> Vec<NeighborScore> {
    candidates
        .iter()
        .map(|&c| {
            let s_no = node_score(h_r, c, other);
            let s_st = dm.map_or(0.0, |dm| dm.structure_score(c, other));
            NeighborScore {
                neighbor: c,
                s_no,
                s_st,
                s: alpha * s_st + (1.0 - alpha) * s_no,
                is_common: common.binary_search(&c).is_ok(),
            }
        })
        .collect()
}

/// Neighbor list of `i` when scored against `j`.
pub fn candidate_neighbors(g: &SparseGraph, i: usize, j: usize, mask_target: bool) -> Vec<usize> {
    g.neighbors(i)
        .iter()
        .copied()
        .filter(|&c| !(mask_target && c == j))
        .collect()
}

/// One score per neighbor of `i`, each scored against `j`.
pub fn score_neighbors(
    g: &SparseGraph,
    dm: Option<&DiffusionMatrix>,
    h_r: &Array2<f64>,
    i: usize,
    j: usize,
    alpha: f64,
    mask_target: bool,
) -> Vec<NeighborScore> {
    let candidates = candidate_neighbors(g, i, j, mask_target);
    let common = intersect_sorted(g.neighbors(i), g.neighbors(j));
    score_candidates(dm, h_r, &candidates, &common, j, alpha)
}

fn by_score_then_id(a: &NeighborScore, b: &NeighborScore) -> Ordering {
    b.s.total_cmp(&a.s).then(a.neighbor.cmp(&b.neighbor))
}

/// Priority ordering of all scored neighbors: shared neighbors first, each
/// group by descending score with ascending id breaking ties.
pub fn priority_order(scores: &[NeighborScore], common: &[usize]) -> Vec<NeighborScore> {
    let (mut shared, mut rest): (Vec<NeighborScore>, Vec<NeighborScore>) = scores
        .iter()
        .copied()
        .partition(|s| common.binary_search(&s.neighbor).is_ok());
    shared.sort_by(by_score_then_id);
    rest.sort_by(by_score_then_id);
    shared.extend(rest);
    shared
}

/// The first `k` neighbors of [`priority_order`].
pub fn select_neighbors(scores: &[NeighborScore], common: &[usize], k: usize) -> Vec<NeighborScore> {
    let mut order = priority_order(scores, common);
    order.truncate(k);
    order
}

/// Softmax of the combined scores over the selected set.
pub fn normalize_weights(s: &[f64]) -> Result<Vec<f64>> {
    if s.is_empty() {
        return Err(Error::Contract(
            "cannot normalize weights over an empty neighbor set".into(),
        ));
    }
    let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = s.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    Ok(exp.into_iter().map(|e| e / total).collect())
}

/// `h_i = h^r_i + β Σ_c b_c h^r_c`; with no neighbors this is `h^r_i`.
pub fn pair_representation(h_r: &Array2<f64>, i: usize, selected: &[usize], b: &[f64], beta: f64) -> Array1<f64> {
    let mut h = h_r.row(i).to_owned();
    for (&c, &w) in selected.iter().zip(b) {
        h.scaled_add(beta * w, &h_r.row(c));
    }
    h
}

pub fn predict_link(h_i: ArrayView1<'_, f64>, h_j: ArrayView1<'_, f64>) -> f64 {
    sigmoid(h_i.dot(&h_j))
}

/// Destination for row-wise gradient contributions.
pub trait RowSink {
    fn add_row(&mut self, row: usize, scale: f64, values: ArrayView1<'_, f64>);
}

impl RowSink for Array2<f64> {
    fn add_row(&mut self, row: usize, scale: f64, values: ArrayView1<'_, f64>) {
        self.row_mut(row).scaled_add(scale, &values);
    }
}

/// Selection and aggregation for one endpoint of a pair.
#[derive(Debug, Clone)]
pub struct SideForward {
    pub anchor: usize,
    pub other: usize,
    pub selected: Vec<NeighborScore>,
    pub b: Vec<f64>,
    pub h: Array1<f64>,
}

impl SideForward {
    /// Aggregate an already chosen neighbor set.
    pub fn aggregate(h_r: &Array2<f64>, anchor: usize, other: usize, selected: Vec<NeighborScore>, beta: f64) -> Self {
        let s: Vec<f64> = selected.iter().map(|n| n.s).collect();
        let b = if s.is_empty() {
            Vec::new()
        } else {
            normalize_weights(&s).expect("non-empty")
        };
        let ids: Vec<usize> = selected.iter().map(|n| n.neighbor).collect();
        let h = pair_representation(h_r, anchor, &ids, &b, beta);
        Self {
            anchor,
            other,
            selected,
            b,
            h,
        }
    }

    pub fn explained(&self) -> Vec<ExplainedNeighbor> {
        self.selected
            .iter()
            .zip(&self.b)
            .map(|(n, &b)| ExplainedNeighbor {
                neighbor: n.neighbor,
                b,
                s_no: n.s_no,
                s_st: n.s_st,
                is_common: n.is_common,
            })
            .collect()
    }

    /// Accumulate `∂L/∂H^r` given `∂L/∂h` for this side and optional extra
    /// gradients on each selected combined score `s`.
    ///
    /// The selection itself is treated as constant; gradients reach `H^r`
    /// through the anchor row, the aggregated neighbor rows, and the
    /// node-similarity part of the softmax weights.
    pub fn backward(
        &self,
        h_r: &Array2<f64>,
        grad_h: ArrayView1<'_, f64>,
        grad_s_extra: Option<&[f64]>,
        alpha: f64,
        beta: f64,
        grad_hr: &mut impl RowSink,
    ) {
        grad_hr.add_row(self.anchor, 1.0, grad_h);
        if self.selected.is_empty() {
            return;
        }
        let grad_b: Vec<f64> = self
            .selected
            .iter()
            .map(|n| beta * h_r.row(n.neighbor).dot(&grad_h))
            .collect();
        let mean: f64 = self.b.iter().zip(&grad_b).map(|(b, g)| b * g).sum();
        for (k, n) in self.selected.iter().enumerate() {
            let c = n.neighbor;
            grad_hr.add_row(c, beta * self.b[k], grad_h);
            let mut grad_s = self.b[k] * (grad_b[k] - mean);
            if let Some(extra) = grad_s_extra {
                grad_s += extra[k];
            }
            let grad_z = grad_s * (1.0 - alpha) * n.s_no * (1.0 - n.s_no);
            if grad_z != 0.0 {
                grad_hr.add_row(self.other, grad_z, h_r.row(c));
                grad_hr.add_row(c, grad_z, h_r.row(self.other));
            }
        }
    }
}

/// Read-only scoring context over a fixed set of embeddings.
#[derive(Debug, Clone, Copy)]
pub struct PairScorer<'a> {
    pub graph: &'a SparseGraph,
    pub diffusion: Option<&'a DiffusionMatrix>,
    pub h_r: &'a Array2<f64>,
    pub config: PairConfig,
}

impl<'a> PairScorer<'a> {
    pub fn new(
        graph: &'a SparseGraph,
        diffusion: Option<&'a DiffusionMatrix>,
        h_r: &'a Array2<f64>,
        config: PairConfig,
    ) -> Self {
        Self {
            graph,
            diffusion,
            h_r,
            config,
        }
    }

    fn common(&self, i: usize, j: usize) -> Vec<usize> {
        intersect_sorted(self.graph.neighbors(i), self.graph.neighbors(j))
    }

    /// All candidates of `anchor` in priority order.
    pub fn ranked_candidates(&self, anchor: usize, other: usize) -> Vec<NeighborScore> {
        let common = self.common(anchor, other);
        let candidates = candidate_neighbors(self.graph, anchor, other, self.config.mask_target);
        let scores = score_candidates(self.diffusion, self.h_r, &candidates, &common, other, self.config.alpha);
        priority_order(&scores, &common)
    }

    pub fn side(&self, anchor: usize, other: usize) -> SideForward {
        let mut ranked = self.ranked_candidates(anchor, other);
        ranked.truncate(self.config.k);
        SideForward::aggregate(self.h_r, anchor, other, ranked, self.config.beta)
    }

    /// Selection after deleting `removed` from the anchor's neighbor list.
    /// Shared-neighbor priority is evaluated on the surviving lists.
    pub fn side_without(&self, anchor: usize, other: usize, removed: &[usize], removed_other: &[usize]) -> SideForward {
        let keep = |list: &[usize], drop: &[usize]| -> Vec<usize> {
            list.iter().copied().filter(|c| !drop.contains(c)).collect()
        };
        let anchor_list = keep(self.graph.neighbors(anchor), removed);
        let other_list = keep(self.graph.neighbors(other), removed_other);
        let common = intersect_sorted(&anchor_list, &other_list);
        let candidates: Vec<usize> = anchor_list
            .into_iter()
            .filter(|&c| !(self.config.mask_target && c == other))
            .collect();
        let scores = score_candidates(self.diffusion, self.h_r, &candidates, &common, other, self.config.alpha);
        let selected = select_neighbors(&scores, &common, self.config.k);
        SideForward::aggregate(self.h_r, anchor, other, selected, self.config.beta)
    }

    pub fn probability(&self, i: usize, j: usize) -> f64 {
        let a = self.side(i, j);
        let b = self.side(j, i);
        predict_link(a.h.view(), b.h.view())
    }

    pub fn explain(&self, i: usize, j: usize) -> Result<PairExplanation> {
        self.graph.check_node(i)?;
        self.graph.check_node(j)?;
        if i == j {
            return Err(Error::InvalidPair(i, j));
        }
        let a = self.side(i, j);
        let b = self.side(j, i);
        Ok(PairExplanation {
            pair: (i, j),
            probability: predict_link(a.h.view(), b.h.view()),
            selected_i: a.explained(),
            selected_j: b.explained(),
        })
    }
}

/// Full pipeline for one pair.
pub fn explain_pair(
    g: &SparseGraph,
    dm: Option<&DiffusionMatrix>,
    h_r: &Array2<f64>,
    i: usize,
    j: usize,
    config: PairConfig,
) -> Result<PairExplanation> {
    PairScorer::new(g, dm, h_r, config).explain(i, j)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn ns(neighbor: usize, s: f64) -> NeighborScore {
        NeighborScore {
            neighbor,
            s_no: s,
            s_st: 0.0,
            s,
            is_common: false,
        }
    }

    #[test]
    fn node_score_examples() {
        let h = array![[1.0, 0.0], [0.0, 1.0]];
        assert_eq!(node_score(&h, 0, 1), 0.5);
        let r = (2.1972f64 / 2.0).sqrt();
        let h = array![[r, r], [r, r]];
        assert_abs_diff_eq!(node_score(&h, 0, 1), 0.9, epsilon = 1e-4);
        let h = array![[0.3, -1.2], [2.0, 0.7]];
        assert_eq!(node_score(&h, 0, 1), node_score(&h, 1, 0));
    }

    #[test]
    fn alpha_extremes_and_fixed_point() {
        let g = SparseGraph::from_edges(3, &[(0, 1), (0, 2)], Array2::zeros((3, 2))).unwrap();
        let h = array![[0.1, 0.2], [0.5, -0.3], [1.0, 1.0]];
        let dm = crate::diffusion::compute_ppr(&g, 0.05, 16, 0.0).unwrap();
        for s in score_neighbors(&g, Some(&dm), &h, 0, 1, 0.0, true) {
            assert_eq!(s.s, s.s_no);
        }
        for s in score_neighbors(&g, Some(&dm), &h, 0, 1, 1.0, true) {
            assert_eq!(s.s, s.s_st);
        }
        assert_eq!(0.3 * 0.5 + 0.7 * 0.5, 0.5);
        assert!(score_neighbors(&g, Some(&dm), &h, 1, 0, 0.3, true).is_empty());
        assert_eq!(score_neighbors(&g, Some(&dm), &h, 1, 0, 0.3, false).len(), 1);
    }

    #[test]
    fn selection_rules() {
        // N_i = {a=0, b=1, c=2}, common = {b}, K = 2, s(a) > s(c)
        let scores = vec![ns(0, 0.6), ns(1, 0.1), ns(2, 0.4)];
        let ids: Vec<usize> = select_neighbors(&scores, &[1], 2).iter().map(|n| n.neighbor).collect();
        assert_eq!(ids, vec![1, 0]);
        // common = {x, y, z}, K = 2
        let scores = vec![ns(5, 0.9), ns(6, 0.8), ns(7, 0.7)];
        let ids: Vec<usize> = select_neighbors(&scores, &[5, 6, 7], 2)
            .iter()
            .map(|n| n.neighbor)
            .collect();
        assert_eq!(ids, vec![5, 6]);
        assert_eq!(select_neighbors(&[ns(3, 0.2)], &[], 4).len(), 1);
        // ties broken by ascending id
        let ids: Vec<usize> = select_neighbors(&[ns(9, 0.5), ns(4, 0.5), ns(6, 0.5)], &[], 2)
            .iter()
            .map(|n| n.neighbor)
            .collect();
        assert_eq!(ids, vec![4, 6]);
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(normalize_weights(&[0.3, 0.3]).unwrap(), vec![0.5, 0.5]);
        let w = normalize_weights(&[1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(w[0], 0.7311, epsilon = 1e-4);
        assert_abs_diff_eq!(w[1], 0.2689, epsilon = 1e-4);
        assert_eq!(normalize_weights(&[0.42]).unwrap(), vec![1.0]);
        assert!(matches!(normalize_weights(&[]), Err(Error::Contract(_))));
    }

    #[test]
    fn representation_examples() {
        let h = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        assert_eq!(pair_representation(&h, 0, &[1], &[1.0], 0.0), array![1.0, 2.0]);
        assert_eq!(pair_representation(&h, 0, &[1], &[1.0], 1.0), array![4.0, 6.0]);
        assert_eq!(
            pair_representation(&h, 0, &[1, 2], &[0.5, 0.5], 0.5),
            array![1.0 + 0.25 * 8.0, 2.0 + 0.25 * 10.0]
        );
        assert_eq!(pair_representation(&h, 2, &[], &[], 0.5), array![5.0, 6.0]);
    }

    #[test]
    fn stable_link_probability() {
        assert_eq!(predict_link(array![1.0, 0.0].view(), array![0.0, 1.0].view()), 0.5);
        assert_eq!(predict_link(array![1e200].view(), array![1e200].view()), 1.0);
        assert_eq!(predict_link(array![-1e200].view(), array![1e200].view()), 0.0);
        assert!(sigmoid(-800.0).is_finite());
    }

    #[test]
    fn explain_degenerate_and_invalid() {
        let g = SparseGraph::from_edges(3, &[(0, 1)], Array2::zeros((3, 2))).unwrap();
        let h = array![[0.5, 0.5], [1.0, -1.0], [0.2, 0.1]];
        let cfg = PairConfig::default();
        let e = explain_pair(&g, None, &h, 2, 0, cfg).unwrap();
        assert!(e.selected_i.is_empty());
        assert_eq!(e.selected_j.len(), 1);
        assert!(matches!(
            explain_pair(&g, None, &h, 1, 1, cfg),
            Err(Error::InvalidPair(1, 1))
        ));
        let iso = SparseGraph::from_edges(2, &[], Array2::zeros((2, 2))).unwrap();
        let e = explain_pair(&iso, None, &h, 0, 1, cfg).unwrap();
        assert!(e.selected_i.is_empty() && e.selected_j.is_empty());
        assert_eq!(e.probability, sigmoid(h.row(0).dot(&h.row(1))));
    }

    #[test]
    fn large_k_selects_everything() {
        let g = SparseGraph::from_edges(5, &[(0, 1), (0, 2), (3, 4), (3, 2)], Array2::zeros((5, 1))).unwrap();
        let h = Array2::from_shape_fn((5, 2), |(i, k)| (i * 2 + k) as f64 * 0.1);
        let cfg = PairConfig {
            k: 10,
            ..PairConfig::default()
        };
        let e = explain_pair(&g, None, &h, 0, 3, cfg).unwrap();
        let mut got: Vec<usize> = e.selected_i.iter().map(|n| n.neighbor).collect();
        got.sort();
        assert_eq!(got, vec![1, 2]);
        assert_eq!(e.selected_j.len(), 2);
    }
}
