//! Metrics: ranking AUC, explanation precision, fidelity under neighbor
//! deletion, and the common-neighbor / Adamic–Adar baselines.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{intersect_sorted, Pair, SparseGraph};
use crate::pair::{predict_link, PairExplanation, PairScorer};
use crate::rng::{self, streams};

/// Mann–Whitney AUC; tied scores contribute one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(
            "AUC needs both positive and negative examples".into(),
        ));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("AUC scores".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // ranks start+1 ..= end share their mean
        let mean_rank = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            if labels[idx] {
                rank_sum_pos += mean_rank;
            }
        }
        start = end;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// AUC of positive-pair scores against negative-pair scores.
pub fn auc_pos_neg(pos: &[f64], neg: &[f64]) -> Result<f64> {
    let scores: Vec<f64> = pos.iter().chain(neg).copied().collect();
    let labels: Vec<bool> = pos.iter().map(|_| true).chain(neg.iter().map(|_| false)).collect();
    auc(&scores, &labels)
}

pub fn heuristic_cn(g: &SparseGraph, i: usize, j: usize) -> usize {
    intersect_sorted(g.neighbors(i), g.neighbors(j)).len()
}

/// Adamic–Adar; shared neighbors of degree one are skipped.
pub fn heuristic_aa(g: &SparseGraph, i: usize, j: usize) -> f64 {
    intersect_sorted(g.neighbors(i), g.neighbors(j))
        .into_iter()
        .map(|z| g.degree(z))
        .filter(|&d| d > 1)
        .map(|d| 1.0 / (d as f64).ln())
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeuristicAuc {
    pub cn: f64,
    pub aa: f64,
}

/// CN and AA test AUC with `g` the observed (training) graph.
pub fn heuristic_auc(g: &SparseGraph, pos: &[Pair], neg: &[Pair]) -> Result<HeuristicAuc> {
    let cn = |pairs: &[Pair]| {
        pairs
            .iter()
            .map(|&(i, j)| heuristic_cn(g, i, j) as f64)
            .collect::<Vec<_>>()
    };
    let aa = |pairs: &[Pair]| pairs.iter().map(|&(i, j)| heuristic_aa(g, i, j)).collect::<Vec<_>>();
    Ok(HeuristicAuc {
        cn: auc_pos_neg(&cn(pos), &cn(neg))?,
        aa: auc_pos_neg(&aa(pos), &aa(neg))?,
    })
}

/// Ground-truth explanation of one edge: `K` neighbors per endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub i: usize,
    pub j: usize,
    pub truth_i: Vec<usize>,
    pub truth_j: Vec<usize>,
}

fn hits_at(ranked: &[usize], truth: &[usize], k: usize) -> f64 {
    ranked.iter().take(k).filter(|c| truth.contains(c)).count() as f64 / k as f64
}

/// Precision@k averaged over the two endpoints, each ranking its selected
/// neighbors by weight.
pub fn precision_at_k(explanation: &PairExplanation, truth: &TruthRecord, k: usize) -> Result<f64> {
    let (ti, tj) = match explanation.pair {
        (a, b) if (a, b) == (truth.i, truth.j) => (&truth.truth_i, &truth.truth_j),
        (a, b) if (a, b) == (truth.j, truth.i) => (&truth.truth_j, &truth.truth_i),
        (a, b) => {
            return Err(Error::Contract(format!(
                "truth record ({}, {}) does not match pair ({a}, {b})",
                truth.i, truth.j
            )))
        }
    };
    if k == 0 {
        return Err(Error::Parameter("precision@k needs k >= 1".into()));
    }
    let ri = PairExplanation::ranked(&explanation.selected_i);
    let rj = PairExplanation::ranked(&explanation.selected_j);
    Ok((hits_at(&ri, ti, k) + hits_at(&rj, tj, k)) / 2.0)
}

/// Random explanation lists (already in random order) for each endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomExplanation {
    pub pair: Pair,
    pub picks_i: Vec<usize>,
    pub picks_j: Vec<usize>,
}

/// Uniform `K`-subsets of each endpoint's neighbors, in draw order.
pub fn run_random_explainer(g: &SparseGraph, pairs: &[Pair], k: usize, seed: u64) -> Vec<RandomExplanation> {
    let mut rng = rng::stream(seed, streams::EXPLAINER);
    let mut draw = |anchor: usize, other: usize| {
        let mut pool: Vec<usize> = g.neighbors(anchor).iter().copied().filter(|&c| c != other).collect();
        let take = k.min(pool.len());
        for slot in 0..take {
            let pick = rng.random_range(slot..pool.len());
            pool.swap(slot, pick);
        }
        pool.truncate(take);
        pool
    };
    pairs
        .iter()
        .map(|&(i, j)| {
            let picks_i = draw(i, j);
            let picks_j = draw(j, i);
            RandomExplanation {
                pair: (i, j),
                picks_i,
                picks_j,
            }
        })
        .collect()
}

pub fn random_precision_at_k(pick: &RandomExplanation, truth: &TruthRecord, k: usize) -> f64 {
    let (ti, tj) = if pick.pair == (truth.i, truth.j) {
        (&truth.truth_i, &truth.truth_j)
    } else {
        (&truth.truth_j, &truth.truth_i)
    };
    (hits_at(&pick.picks_i, ti, k) + hits_at(&pick.picks_j, tj, k)) / 2.0
}

/// Test AUC before and after deleting each endpoint's top-`m` weighted
/// neighbors, in percentage points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityPoint {
    pub m: usize,
    pub auc_original: f64,
    pub auc_deleted: f64,
    pub delta_auc: f64,
}

/// Probabilities after deleting the `m` highest-priority neighbors of each
/// endpoint and re-running selection on what remains.
pub fn deleted_probabilities(scorer: &PairScorer<'_>, pairs: &[Pair], m: usize) -> Vec<f64> {
    pairs
        .par_iter()
        .map(|&(i, j)| {
            if m == 0 {
                return scorer.probability(i, j);
            }
            let removed_i = top_weighted(scorer, i, j, m);
            let removed_j = top_weighted(scorer, j, i, m);
            let a = scorer.side_without(i, j, &removed_i, &removed_j);
            let b = scorer.side_without(j, i, &removed_j, &removed_i);
            predict_link(a.h.view(), b.h.view())
        })
        .collect()
}

/// The selected neighbors ranked by weight, then the remaining candidates in
/// selection priority order, truncated to `m`.
fn top_weighted(scorer: &PairScorer<'_>, anchor: usize, other: usize, m: usize) -> Vec<usize> {
    let ranked = scorer.ranked_candidates(anchor, other);
    let k = scorer.config.k.min(ranked.len());
    let side = scorer.side(anchor, other);
    let mut out = crate::pair::PairExplanation::ranked(&side.explained());
    out.extend(ranked[k..].iter().map(|n| n.neighbor));
    out.truncate(m);
    out
}

/// Which test pairs lose their top-weighted neighbors.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FidelityMode {
    /// Only the held-out edges are perturbed; negatives keep their scores.
    #[default]
    EdgesOnly,
    /// Positives and negatives are perturbed alike.
    AllPairs,
}

pub fn fidelity(
    scorer: &PairScorer<'_>,
    pos: &[Pair],
    neg: &[Pair],
    m: usize,
    mode: FidelityMode,
) -> Result<FidelityPoint> {
    let prob = |pairs: &[Pair]| {
        pairs
            .par_iter()
            .map(|&(i, j)| scorer.probability(i, j))
            .collect::<Vec<_>>()
    };
    let neg_original = prob(neg);
    let auc_original = auc_pos_neg(&prob(pos), &neg_original)?;
    let neg_deleted = match mode {
        FidelityMode::EdgesOnly => neg_original,
        FidelityMode::AllPairs => deleted_probabilities(scorer, neg, m),
    };
    let auc_deleted = auc_pos_neg(&deleted_probabilities(scorer, pos, m), &neg_deleted)?;
    Ok(FidelityPoint {
        m,
        auc_original,
        auc_deleted,
        delta_auc: 100.0 * (auc_original - auc_deleted),
    })
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-seed raw metric values, from which mean ± std is recomputed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub auc: Vec<f64>,
    pub precision_at: BTreeMap<usize, Vec<f64>>,
    #[serde(default)]
    pub random_precision_at: BTreeMap<usize, Vec<f64>>,
    pub fidelity: BTreeMap<usize, Vec<f64>>,
    #[serde(default)]
    pub heuristics: Vec<HeuristicAuc>,
}

impl MetricReport {
    pub fn auc_summary(&self) -> (f64, f64) {
        mean_std(&self.auc)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut value = serde_json::to_value(self)?;
        let summary = |vals: &[f64]| {
            let (m, s) = mean_std(vals);
            serde_json::json!({ "mean": m, "std": s })
        };
        let mut sums = serde_json::Map::new();
        sums.insert("auc".into(), summary(&self.auc));
        for (k, v) in &self.precision_at {
            sums.insert(format!("precision@{k}"), summary(v));
        }
        for (k, v) in &self.random_precision_at {
            sums.insert(format!("random_precision@{k}"), summary(v));
        }
        for (m, v) in &self.fidelity {
            sums.insert(format!("fidelity_m{m}"), summary(v));
        }
        value["summary"] = serde_json::Value::Object(sums);
        Ok(serde_json::to_string_pretty(&value)?)
    }

    fn rows(&self) -> Vec<(String, Vec<f64>)> {
        let mut rows: Vec<(String, Vec<f64>)> = vec![("auc".into(), self.auc.clone())];
        for (k, v) in &self.precision_at {
            rows.push((format!("precision@{k}"), v.clone()));
        }
        for (k, v) in &self.random_precision_at {
            rows.push((format!("random_precision@{k}"), v.clone()));
        }
        for (m, v) in &self.fidelity {
            rows.push((format!("fidelity_m{m}"), v.clone()));
        }
        if !self.heuristics.is_empty() {
            rows.push(("cn_auc".into(), self.heuristics.iter().map(|h| h.cn).collect()));
            rows.push(("aa_auc".into(), self.heuristics.iter().map(|h| h.aa).collect()));
        }
        rows
    }

    /// Long-format CSV: `metric,run,value`, one line per per-run value.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,run,value\n");
        for (name, vals) in self.rows() {
            for (run, v) in vals.iter().enumerate() {
                out.push_str(&format!("{name},{run},{v}\n"));
            }
        }
        out
    }

    /// Aligned two-column text table.
    pub fn to_text(&self) -> String {
        let rows = self.rows();
        let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (name, vals) in rows {
            if vals.is_empty() {
                continue;
            }
            let (m, s) = mean_std(&vals);
            out.push_str(&format!("{name:<width$}  {m:>10.6} ± {s:.6}  (n={})\n", vals.len()));
        }
        out
    }
}
