//! Training objective: cross-entropy over positives and sampled negatives,
//! a margin term pushing selected-neighbor probabilities above random-neighbor
//! ones, and a squared-score penalty on the selections of negative pairs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamRng;

/// Clamp applied to probabilities inside logarithms.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossCounts {
    pub cls_pos: usize,
    pub cls_neg: usize,
    pub dis_pos: usize,
    pub dis_neg: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l_cls: f64,
    pub l_dis_pos: f64,
    pub l_dis_neg: f64,
    pub total: f64,
    pub counts: LossCounts,
}

/// `-log p` for a positive or `-log(1-p)` for a negative, with `p` clamped
/// to `[ε, 1-ε]`, together with the derivative with respect to the logit of
/// `p`. The derivative is the unclamped logistic one, `p - y`, so saturated
/// pairs keep receiving gradient.
pub fn cls_term(p: f64, positive: bool) -> (f64, f64) {
    let clamped = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    if positive {
        (-clamped.ln(), p - 1.0)
    } else {
        (-(1.0 - clamped).ln(), p)
    }
}

pub fn loss_cls(pos: &[f64], neg: &[f64]) -> f64 {
    pos.iter().map(|&p| cls_term(p, true).0).sum::<f64>() + neg.iter().map(|&p| cls_term(p, false).0).sum::<f64>()
}

/// `K` distinct uniform draws from `candidates \ selected`, or `None` when
/// fewer than `K` unselected candidates remain.
pub fn sample_random_neighbor_set(
    candidates: &[usize],
    selected: &[usize],
    k: usize,
    rng: &mut StreamRng,
) -> Option<Vec<usize>> {
    let mut pool: Vec<usize> = candidates.iter().copied().filter(|c| !selected.contains(c)).collect();
    if pool.len() < k {
        return None;
    }
    for slot in 0..k {
        let pick = rng.random_range(slot..pool.len());
        pool.swap(slot, pick);
    }
    pool.truncate(k);
    Some(pool)
}

/// Hinge `max(0, p_rand + δ - p)`.
pub fn loss_dis_pos(p: f64, p_rand: f64, delta: f64) -> f64 {
    (p_rand + delta - p).max(0.0)
}

/// Sum of squared combined scores over both endpoints' selections.
pub fn loss_dis_neg(scores_i: &[f64], scores_j: &[f64]) -> f64 {
    scores_i.iter().chain(scores_j).map(|s| s * s).sum()
}

pub fn total_loss(l_cls: f64, l_dis_pos: f64, l_dis_neg: f64, lambda: f64, counts: LossCounts) -> Result<LossReport> {
    if lambda < 0.0 {
        return Err(Error::Parameter(format!("lambda must be non-negative, got {lambda}")));
    }
    let total = l_cls + lambda * (l_dis_pos + l_dis_neg);
    for (name, v) in [
        ("l_cls", l_cls),
        ("l_dis_pos", l_dis_pos),
        ("l_dis_neg", l_dis_neg),
        ("total", total),
    ] {
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("loss component {name}")));
        }
    }
    Ok(LossReport {
        l_cls,
        l_dis_pos,
        l_dis_neg,
        total,
        counts,
    })
}

/// Append-only training log: `epoch,l_cls,l_dis_pos,l_dis_neg,total,val_auc`.
pub struct TrainingLog {
    out: BufWriter<File>,
}

impl TrainingLog {
    pub const HEADER: &'static str = "epoch,l_cls,l_dis_pos,l_dis_neg,total,val_auc";

    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "{}", Self::HEADER).map_err(|e| Error::io(path, e))?;
        Ok(Self { out })
    }

    pub fn append(&mut self, epoch: usize, report: &LossReport, val_auc: f64) -> std::io::Result<()> {
        writeln!(
            self.out,
            "{epoch},{},{},{},{},{}",
            report.l_cls, report.l_dis_pos, report.l_dis_neg, report.total, val_auc
        )
    }

    pub fn flush(&mut self) -> std::io::Result<()> {
        self.out.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use approx::assert_abs_diff_eq;

    #[test]
    fn classification_examples() {
        assert!(loss_cls(&[1.0 - PROB_EPS], &[]) < 1e-6);
        assert_abs_diff_eq!(loss_cls(&[0.5], &[0.5]), 2.0 * 2f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(loss_cls(&[0.5], &[0.5]), 1.3863, epsilon = 1e-4);
        let big = loss_cls(&[PROB_EPS], &[]);
        assert!(big.is_finite() && big > 15.0);
        assert!(loss_cls(&[0.0], &[1.0]).is_finite());
    }

    #[test]
    fn random_set_examples() {
        let mut r = rng::stream(1, "t");
        assert_eq!(sample_random_neighbor_set(&[1, 2, 3], &[1, 2], 2, &mut r), None);
        let all: Vec<usize> = (0..10).collect();
        let set = sample_random_neighbor_set(&all, &[0, 1], 2, &mut r).unwrap();
        assert_eq!(set.len(), 2);
        assert_ne!(set[0], set[1]);
        assert!(set.iter().all(|c| *c >= 2));
        let a = sample_random_neighbor_set(&all, &[0], 3, &mut rng::stream(5, "t"));
        let b = sample_random_neighbor_set(&all, &[0], 3, &mut rng::stream(5, "t"));
        assert_eq!(a, b);
    }

    #[test]
    fn margin_examples() {
        assert_eq!(loss_dis_pos(0.9, 0.2, 0.5), 0.0);
        assert_abs_diff_eq!(loss_dis_pos(0.6, 0.4, 0.5), 0.3, epsilon = 1e-12);
        assert_eq!(loss_dis_pos(0.37, 0.37, 0.5), 0.5);
    }

    #[test]
    fn negative_score_examples() {
        assert_eq!(loss_dis_neg(&[0.0, 0.0], &[0.0]), 0.0);
        assert_eq!(loss_dis_neg(&[0.5], &[0.5]), 0.5);
    }

    #[test]
    fn total_examples() {
        let c = LossCounts::default();
        assert_eq!(total_loss(1.7, 0.4, 0.9, 0.0, c).unwrap().total, 1.7);
        assert_abs_diff_eq!(total_loss(1.0, 0.2, 0.4, 0.5, c).unwrap().total, 1.3, epsilon = 1e-12);
        assert_eq!(total_loss(0.0, 0.0, 0.0, 0.3, c).unwrap().total, 0.0);
        assert!(total_loss(f64::NAN, 0.0, 0.0, 0.3, c).is_err());
        assert!(total_loss(1.0, 0.0, 0.0, -0.1, c).is_err());
    }
}
