//! Full-batch training with per-epoch negatives, early stopping on validation
//! AUC, and a finite-difference gradient checker.

use std::collections::HashMap;
use std::path::Path;
use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion::{self, DiffusionMatrix};
use crate::encoder::{self, EncoderGrads, EncoderInput, EncoderParams, FeatureNorm};
use crate::error::{Error, Result};
use crate::eval::auc_pos_neg;
use crate::graph::{sample_negatives_with, EdgeSplit, Pair, SparseGraph};
use crate::loss::{self, LossCounts, LossReport, TrainingLog};
use crate::optim::{adam_step, AdamState};
use crate::pair::{
    candidate_neighbors, predict_link, score_candidates, sigmoid, PairConfig, PairScorer, RowSink, SideForward,
};
use crate::rng::{self, streams};

/// Pairs per gradient-accumulation chunk. Fixed so the reduction order does
/// not depend on the thread count.
const CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub k: usize,
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
    pub gamma: f64,
    pub lr: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub hidden_dim: usize,
    pub k_max: usize,
    pub drop_tol: f64,
    pub mask_target: bool,
    pub feature_norm: FeatureNorm,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            k: 3,
            lambda: 0.3,
            alpha: 0.3,
            beta: 0.5,
            delta: 0.5,
            gamma: diffusion::DEFAULT_GAMMA,
            lr: 0.001,
            max_epochs: 1000,
            patience: 50,
            seed: 0,
            hidden_dim: 128,
            k_max: diffusion::DEFAULT_K_MAX,
            drop_tol: diffusion::DEFAULT_DROP_TOL,
            mask_target: true,
            feature_norm: FeatureNorm::None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Parameter(msg));
        if !(1..=6).contains(&self.k) {
            return bad(format!("k must be in 1..=6, got {}", self.k));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha must be in [0, 1], got {}", self.alpha));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return bad(format!("beta must be >= 0, got {}", self.beta));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must be in (0, 1), got {}", self.delta));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma must be in (0, 1), got {}", self.gamma));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if self.max_epochs == 0 || self.hidden_dim == 0 || self.k_max == 0 {
            return bad("max_epochs, hidden_dim and k_max must be positive".into());
        }
        if !(self.drop_tol.is_finite() && self.drop_tol >= 0.0) {
            return bad(format!("drop_tol must be >= 0, got {}", self.drop_tol));
        }
        Ok(())
    }

    pub fn pair_config(&self) -> PairConfig {
        PairConfig {
            k: self.k,
            alpha: self.alpha,
            beta: self.beta,
            mask_target: self.mask_target,
        }
    }

    /// Whether structure scores can influence the model at all.
    pub fn needs_diffusion(&self) -> bool {
        self.alpha > 0.0 && (self.beta > 0.0 || self.lambda > 0.0)
    }

    pub fn compute_diffusion(&self, train_graph: &SparseGraph) -> Result<Option<DiffusionMatrix>> {
        if !self.needs_diffusion() {
            return Ok(None);
        }
        diffusion::compute_ppr(train_graph, self.gamma, self.k_max, self.drop_tol).map(Some)
    }
}

/// Model variants that switch off one or both similarity signals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    /// Node similarity only (`α = 0`).
    NoStructure,
    /// Structure similarity only (`α = 1`).
    NoFeature,
    /// No neighbor aggregation and no explanation losses.
    Plain,
}

impl Ablation {
    pub fn apply(self, config: &mut TrainConfig) {
        match self {
            Ablation::NoStructure => config.alpha = 0.0,
            Ablation::NoFeature => config.alpha = 1.0,
            Ablation::Plain => {
                config.beta = 0.0;
                config.lambda = 0.0;
            }
        }
    }
}

/// Trained encoder plus everything needed to rebuild the scorer.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub encoder: EncoderParams,
    pub config: TrainConfig,
    pub epoch: usize,
    pub best_val_auc: f64,
    pub dataset_hash: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct StateMeta {
    config: TrainConfig,
    epoch: usize,
    best_val_auc: f64,
    dataset_hash: Option<String>,
}

impl ModelState {
    pub fn write(&self, path: &Path) -> Result<()> {
        let meta = serde_json::to_value(StateMeta {
            config: self.config,
            epoch: self.epoch,
            best_val_auc: self.best_val_auc,
            dataset_hash: self.dataset_hash.clone(),
        })?;
        encoder::write_checkpoint(path, &self.encoder, &meta)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let (encoder, meta) = encoder::read_checkpoint(path)?;
        let meta: StateMeta = serde_json::from_value(meta)?;
        meta.config.validate()?;
        Ok(Self {
            encoder,
            config: meta.config,
            epoch: meta.epoch,
            best_val_auc: meta.best_val_auc,
            dataset_hash: meta.dataset_hash,
        })
    }
}

/// A model bound to its training graph, ready for scoring.
pub struct Model {
    pub state: ModelState,
    pub graph: SparseGraph,
    pub diffusion: Option<DiffusionMatrix>,
    pub h_r: Array2<f64>,
}

impl Model {
    pub fn new(state: ModelState, train_graph: SparseGraph, diffusion: Option<DiffusionMatrix>) -> Result<Self> {
        let out = EncoderInput::prepare(&train_graph, state.config.feature_norm).forward(&state.encoder)?;
        Ok(Self {
            state,
            graph: train_graph,
            diffusion,
            h_r: out.h_r,
        })
    }

    /// Rebuild the training graph and diffusion from the split.
    pub fn from_split(state: ModelState, full: &SparseGraph, split: &EdgeSplit) -> Result<Self> {
        let train_graph = split.train_graph(full)?;
        let dm = state.config.compute_diffusion(&train_graph)?;
        Self::new(state, train_graph, dm)
    }

    pub fn scorer(&self) -> PairScorer<'_> {
        PairScorer::new(
            &self.graph,
            self.diffusion.as_ref(),
            &self.h_r,
            self.state.config.pair_config(),
        )
    }
}

/// Training graph, its diffusion, and the pairs used for fitting and model
/// selection.
pub struct TrainData<'a> {
    pub graph: SparseGraph,
    pub diffusion: Option<DiffusionMatrix>,
    pub input: EncoderInput,
    pub train_pos: &'a [Pair],
    pub val_pos: &'a [Pair],
    pub val_neg: &'a [Pair],
}

impl<'a> TrainData<'a> {
    pub fn new(
        full: &SparseGraph,
        split: &'a EdgeSplit,
        diffusion: Option<DiffusionMatrix>,
        feature_norm: FeatureNorm,
    ) -> Result<Self> {
        let graph = split.train_graph(full)?;
        let input = EncoderInput::prepare(&graph, feature_norm);
        Ok(Self {
            graph,
            diffusion,
            input,
            train_pos: &split.train_pos,
            val_pos: &split.val_pos,
            val_neg: &split.val_neg,
        })
    }

    fn scorer<'s>(&'s self, h_r: &'s Array2<f64>, config: &TrainConfig) -> PairScorer<'s> {
        PairScorer::new(&self.graph, self.diffusion.as_ref(), h_r, config.pair_config())
    }

    fn validation_auc(&self, h_r: &Array2<f64>, config: &TrainConfig) -> Result<f64> {
        let scorer = self.scorer(h_r, config);
        let prob = |pairs: &[Pair]| {
            pairs
                .par_iter()
                .map(|&(i, j)| scorer.probability(i, j))
                .collect::<Vec<_>>()
        };
        auc_pos_neg(&prob(self.val_pos), &prob(self.val_neg))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: LossReport,
    pub val_auc: f64,
}

/// How often each per-epoch resampling step ran.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainCounters {
    pub selection_passes: usize,
    pub selections: usize,
    pub negative_draws: usize,
    pub random_set_draws: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: ModelState,
    pub history: Vec<EpochRecord>,
    pub counters: TrainCounters,
    pub epochs_run: usize,
    pub seconds: f64,
}

/// Neighbor sets frozen for one epoch.
#[derive(Debug, Clone)]
struct PairPlan {
    i: usize,
    j: usize,
    positive: bool,
    sel_i: Vec<usize>,
    sel_j: Vec<usize>,
    random: Option<(Vec<usize>, Vec<usize>)>,
}

struct EpochPlan {
    pairs: Vec<PairPlan>,
    random_sets: usize,
}

fn make_plan(
    data: &TrainData<'_>,
    config: &TrainConfig,
    h_r: &Array2<f64>,
    negatives: &[Pair],
    epoch: u64,
) -> EpochPlan {
    let scorer = data.scorer(h_r, config);
    let labelled: Vec<(Pair, bool)> = data
        .train_pos
        .iter()
        .map(|&p| (p, true))
        .chain(negatives.iter().map(|&p| (p, false)))
        .collect();
    let pairs: Vec<PairPlan> = labelled
        .par_iter()
        .enumerate()
        .map(|(idx, &((i, j), positive))| {
            let ids = |s: SideForward| s.selected.iter().map(|n| n.neighbor).collect::<Vec<_>>();
            let sel_i = ids(scorer.side(i, j));
            let sel_j = ids(scorer.side(j, i));
            let random = if positive && config.lambda > 0.0 {
                let mut r = rng::stream_at(config.seed, streams::RANDOM_SETS, &[epoch, idx as u64]);
                let cand_i = candidate_neighbors(&data.graph, i, j, config.mask_target);
                let cand_j = candidate_neighbors(&data.graph, j, i, config.mask_target);
                let ri = loss::sample_random_neighbor_set(&cand_i, &sel_i, config.k, &mut r);
                let rj = loss::sample_random_neighbor_set(&cand_j, &sel_j, config.k, &mut r);
                ri.zip(rj)
            } else {
                None
            };
            PairPlan {
                i,
                j,
                positive,
                sel_i,
                sel_j,
                random,
            }
        })
        .collect();
    let random_sets = pairs.iter().filter(|p| p.random.is_some()).count();
    EpochPlan { pairs, random_sets }
}

/// Gradient rows touched by one chunk, kept in first-touch order.
struct SparseRows {
    index: HashMap<usize, usize>,
    rows: Vec<(usize, Array1<f64>)>,
    dim: usize,
}

impl SparseRows {
    fn new(dim: usize) -> Self {
        Self {
            index: HashMap::new(),
            rows: Vec::new(),
            dim,
        }
    }

    fn merge_into(self, dense: &mut Array2<f64>) {
        for (r, v) in self.rows {
            dense.row_mut(r).scaled_add(1.0, &v);
        }
    }
}

impl RowSink for SparseRows {
    fn add_row(&mut self, row: usize, scale: f64, values: ArrayView1<'_, f64>) {
        let slot = *self.index.entry(row).or_insert_with(|| {
            self.rows.push((row, Array1::zeros(self.dim)));
            self.rows.len() - 1
        });
        self.rows[slot].1.scaled_add(scale, &values);
    }
}

fn fixed_side(
    data: &TrainData<'_>,
    h_r: &Array2<f64>,
    anchor: usize,
    other: usize,
    ids: &[usize],
    config: &TrainConfig,
) -> SideForward {
    let scores = score_candidates(data.diffusion.as_ref(), h_r, ids, &[], other, config.alpha);
    SideForward::aggregate(h_r, anchor, other, scores, config.beta)
}

#[derive(Default)]
struct Partial {
    cls: f64,
    dis_pos: f64,
    dis_neg: f64,
    counts: LossCounts,
}

/// Loss and `∂L/∂H^r` for fixed neighbor sets.
fn evaluate_plan(
    data: &TrainData<'_>,
    config: &TrainConfig,
    h_r: &Array2<f64>,
    plan: &[PairPlan],
) -> Result<(LossReport, Array2<f64>)> {
    let dim = h_r.ncols();
    let lambda = config.lambda;
    let chunks: Vec<(Partial, SparseRows)> = plan
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut part = Partial::default();
            let mut grads = SparseRows::new(dim);
            for pp in chunk {
                let a = fixed_side(data, h_r, pp.i, pp.j, &pp.sel_i, config);
                let b = fixed_side(data, h_r, pp.j, pp.i, &pp.sel_j, config);
                let p = predict_link(a.h.view(), b.h.view());
                let (l, mut dz) = loss::cls_term(p, pp.positive);
                part.cls += l;
                let mut extra: Option<(Vec<f64>, Vec<f64>)> = None;
                if pp.positive {
                    part.counts.cls_pos += 1;
                    if let Some((ri, rj)) = &pp.random {
                        part.counts.dis_pos += 1;
                        let ra = fixed_side(data, h_r, pp.i, pp.j, ri, config);
                        let rb = fixed_side(data, h_r, pp.j, pp.i, rj, config);
                        let p_rand = predict_link(ra.h.view(), rb.h.view());
                        let hinge = loss::loss_dis_pos(p, p_rand, config.delta);
                        if hinge > 0.0 {
                            part.dis_pos += hinge;
                            dz -= lambda * p * (1.0 - p);
                            let dzr = lambda * p_rand * (1.0 - p_rand);
                            ra.backward(h_r, (&rb.h * dzr).view(), None, config.alpha, config.beta, &mut grads);
                            rb.backward(h_r, (&ra.h * dzr).view(), None, config.alpha, config.beta, &mut grads);
                        }
                    }
                } else {
                    part.counts.cls_neg += 1;
                    if lambda > 0.0 {
                        part.counts.dis_neg += 1;
                        let si: Vec<f64> = a.selected.iter().map(|n| n.s).collect();
                        let sj: Vec<f64> = b.selected.iter().map(|n| n.s).collect();
                        part.dis_neg += loss::loss_dis_neg(&si, &sj);
                        let g = |s: &[f64]| s.iter().map(|v| 2.0 * lambda * v).collect::<Vec<_>>();
                        extra = Some((g(&si), g(&sj)));
                    }
                }
                let (ea, eb) = match &extra {
                    Some((x, y)) => (Some(x.as_slice()), Some(y.as_slice())),
                    None => (None, None),
                };
                a.backward(h_r, (&b.h * dz).view(), ea, config.alpha, config.beta, &mut grads);
                b.backward(h_r, (&a.h * dz).view(), eb, config.alpha, config.beta, &mut grads);
            }
            (part, grads)
        })
        .collect();
    let mut total = Partial::default();
    let mut grad = Array2::zeros(h_r.raw_dim());
    for (part, rows) in chunks {
        total.cls += part.cls;
        total.dis_pos += part.dis_pos;
        total.dis_neg += part.dis_neg;
        total.counts.cls_pos += part.counts.cls_pos;
        total.counts.cls_neg += part.counts.cls_neg;
        total.counts.dis_pos += part.counts.dis_pos;
        total.counts.dis_neg += part.counts.dis_neg;
        rows.merge_into(&mut grad);
    }
    let report = loss::total_loss(total.cls, total.dis_pos, total.dis_neg, lambda, total.counts)?;
    Ok((report, grad))
}

fn epoch_negatives(data: &TrainData<'_>, config: &TrainConfig, epoch: u64) -> Result<Vec<Pair>> {
    let mut r = rng::stream_at(config.seed, streams::NEGATIVES, &[epoch]);
    sample_negatives_with(&data.graph, data.train_pos.len(), &Default::default(), &mut r)
}

fn check_grads_finite(g: &EncoderGrads) -> Result<()> {
    for (name, t) in ["w_mlp", "b_mlp", "w_conv"].iter().zip(g.tensors()) {
        if !t.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of {name}")));
        }
    }
    Ok(())
}

/// Train on `split` over graph `g`; the diffusion is computed on the training
/// edges when the configuration uses it.
pub fn train(g: &SparseGraph, split: &EdgeSplit, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let train_graph = split.train_graph(g)?;
    let dm = config.compute_diffusion(&train_graph)?;
    let data = TrainData::new(g, split, dm, config.feature_norm)?;
    train_with(&data, config, None)
}

pub fn train_with(
    data: &TrainData<'_>,
    config: &TrainConfig,
    mut log: Option<&mut TrainingLog>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if data.train_pos.is_empty() {
        return Err(Error::SplitInfeasible("no training edges".into()));
    }
    if config.needs_diffusion() && data.diffusion.is_none() {
        return Err(Error::Contract(
            "configuration uses structure scores but no diffusion was supplied".into(),
        ));
    }
    let started = Instant::now();
    let mut params = encoder::init_params(data.input.feature_dim(), config.hidden_dim, config.seed)?;
    let mut adam = AdamState::new(&params);
    let mut best = (params.clone(), 0usize, f64::NEG_INFINITY);
    let mut since_best = 0usize;
    let mut history = Vec::new();
    let mut counters = TrainCounters::default();
    let mut epochs_run = 0;

    for epoch in 0..=config.max_epochs {
        let out = data.input.forward(&params)?;
        let val_auc = data.validation_auc(&out.h_r, config)?;
        if val_auc > best.2 {
            best = (params.clone(), epoch, val_auc);
            since_best = 0;
        } else {
            since_best += 1;
        }
        if epoch == config.max_epochs || since_best > config.patience {
            break;
        }

        let negatives = epoch_negatives(data, config, epoch as u64)?;
        counters.negative_draws += 1;
        let plan = make_plan(data, config, &out.h_r, &negatives, epoch as u64);
        counters.selection_passes += 1;
        counters.selections += 2 * plan.pairs.len();
        counters.random_set_draws += plan.random_sets;

        let (report, grad_hr) = evaluate_plan(data, config, &out.h_r, &plan.pairs)?;
        let grads = data.input.backward(&params, &out.cache, &grad_hr, None)?;
        check_grads_finite(&grads)?;
        adam_step(&mut params, &grads, &mut adam, config.lr);
        if !params.is_finite() {
            return Err(Error::NonFinite(format!("encoder parameters after epoch {epoch}")));
        }
        epochs_run += 1;

        let record = EpochRecord {
            epoch,
            loss: report,
            val_auc,
        };
        if let Some(log) = log.as_deref_mut() {
            log.append(epoch, &report, val_auc)
                .map_err(|e| Error::io("training log", e))?;
        }
        if epoch % 50 == 0 {
            log::info!(
                "epoch {epoch}: loss {:.4} (cls {:.4}, pos {:.4}, neg {:.4}) val auc {:.4} [{:.1}s]",
                report.total,
                report.l_cls,
                report.l_dis_pos,
                report.l_dis_neg,
                val_auc,
                started.elapsed().as_secs_f64()
            );
        }
        history.push(record);
    }
    if let Some(log) = log {
        log.flush().map_err(|e| Error::io("training log", e))?;
    }
    let (encoder, epoch, best_val_auc) = best;
    log::info!("best val auc {best_val_auc:.4} at epoch {epoch} after {epochs_run} epochs");
    Ok(TrainOutcome {
        state: ModelState {
            encoder,
            config: *config,
            epoch,
            best_val_auc,
            dataset_hash: None,
        },
        history,
        counters,
        epochs_run,
        seconds: started.elapsed().as_secs_f64(),
    })
}

/// Loss and parameter gradients for a fixed epoch plan; selections are held
/// at the values chosen under `base`.
struct FrozenObjective<'d, 'a> {
    data: &'d TrainData<'a>,
    config: TrainConfig,
    plan: Vec<PairPlan>,
}

impl FrozenObjective<'_, '_> {
    fn loss(&self, params: &EncoderParams) -> Result<f64> {
        let out = self.data.input.forward(params)?;
        Ok(evaluate_plan(self.data, &self.config, &out.h_r, &self.plan)?.0.total)
    }

    fn gradient(&self, params: &EncoderParams) -> Result<EncoderGrads> {
        let out = self.data.input.forward(params)?;
        let (_, grad_hr) = evaluate_plan(self.data, &self.config, &out.h_r, &self.plan)?;
        self.data.input.backward(params, &out.cache, &grad_hr, None)
    }
}

/// Worst coordinates of a finite-difference comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub checked: usize,
    /// `(tensor, flat index, analytic, numeric, relative error)`
    pub worst: Vec<(usize, usize, f64, f64, f64)>,
}

/// Central finite differences of `f` at `x` against `analytic`; coordinates
/// whose numeric derivative is below `floor` in magnitude are skipped.
pub fn finite_difference_check(
    x: &[f64],
    analytic: &[f64],
    step: f64,
    floor: f64,
    mut f: impl FnMut(&[f64]) -> f64,
) -> (f64, Vec<(usize, f64, f64, f64)>) {
    let mut probe = x.to_vec();
    let mut errors = Vec::new();
    for k in 0..x.len() {
        probe[k] = x[k] + step;
        let up = f(&probe);
        probe[k] = x[k] - step;
        let down = f(&probe);
        probe[k] = x[k];
        let numeric = (up - down) / (2.0 * step);
        if numeric.abs() <= floor {
            continue;
        }
        let rel = (analytic[k] - numeric).abs() / analytic[k].abs().max(numeric.abs());
        errors.push((k, analytic[k], numeric, rel));
    }
    let max = errors.iter().map(|e| e.3).fold(0.0, f64::max);
    errors.sort_by(|a, b| b.3.total_cmp(&a.3));
    (max, errors)
}

pub const GRAD_CHECK_STEP: f64 = 1e-5;
pub const GRAD_CHECK_FLOOR: f64 = 1e-8;
pub const GRAD_CHECK_FAIL: f64 = 1e-3;

/// Compare analytic total-loss gradients with central differences over every
/// parameter, for `trials` independent epoch draws on a tiny instance.
pub fn check_gradients(
    g: &SparseGraph,
    split: &EdgeSplit,
    config: &TrainConfig,
    trials: usize,
) -> Result<GradCheckReport> {
    config.validate()?;
    if g.num_nodes() > 12 {
        return Err(Error::Parameter(format!(
            "gradient check expects at most 12 nodes, got {}",
            g.num_nodes()
        )));
    }
    let train_graph = split.train_graph(g)?;
    let dm = config.compute_diffusion(&train_graph)?;
    let data = TrainData::new(g, split, dm, config.feature_norm)?;
    let mut base = encoder::init_params(g.feature_dim(), config.hidden_dim, config.seed)?;
    // nonzero biases keep pre-activations away from the ReLU kink
    let mut r = rng::stream_at(config.seed, streams::INIT, &[1]);
    base.b_mlp.mapv_inplace(|_| rand::Rng::random_range(&mut r, -0.1..0.1));

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        checked: 0,
        worst: Vec::new(),
    };
    for trial in 0..trials as u64 {
        let out = data.input.forward(&base)?;
        let negatives = epoch_negatives(&data, config, trial)?;
        let plan = make_plan(&data, config, &out.h_r, &negatives, trial).pairs;
        let objective = FrozenObjective {
            data: &data,
            config: *config,
            plan,
        };
        let analytic = objective.gradient(&base)?;
        for (t, grad) in analytic.tensors().iter().enumerate() {
            let x = base.tensors()[t].to_vec();
            let mut probe = base.clone();
            let (max, errs) = finite_difference_check(&x, grad, GRAD_CHECK_STEP, GRAD_CHECK_FLOOR, |v| {
                probe.tensors_mut()[t].copy_from_slice(v);
                objective.loss(&probe).unwrap_or(f64::NAN)
            });
            report.checked += errs.len();
            report.max_rel_err = report.max_rel_err.max(max);
            report
                .worst
                .extend(errs.into_iter().take(3).map(|(k, a, n, e)| (t, k, a, n, e)));
        }
    }
    report.worst.sort_by(|a, b| b.4.total_cmp(&a.4));
    report.worst.truncate(5);
    if report.max_rel_err.is_nan() || report.max_rel_err > GRAD_CHECK_FAIL {
        let worst = report
            .worst
            .iter()
            .map(|(t, k, a, n, _)| format!("tensor {t}[{k}] analytic {a:.6e} numeric {n:.6e}"))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(Error::GradientCheck {
            max_rel_err: report.max_rel_err,
            worst,
        });
    }
    Ok(report)
}

/// Probability of each pair under `scorer`, computed in parallel.
pub fn score_pairs(scorer: &PairScorer<'_>, pairs: &[Pair]) -> Vec<f64> {
    pairs.par_iter().map(|&(i, j)| scorer.probability(i, j)).collect()
}

/// Plain `sigmoid(h^r_i · h^r_j)` scores, ignoring neighbor aggregation.
pub fn embedding_scores(h_r: &Array2<f64>, pairs: &[Pair]) -> Vec<f64> {
    pairs
        .iter()
        .map(|&(i, j)| sigmoid(h_r.row(i).dot(&h_r.row(j))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::split_edges;

    fn two_clusters(n_per: usize, p_in: f64, seed: u64) -> SparseGraph {
        let n = 2 * n_per;
        let mut r = rng::stream(seed, "test-graph");
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let same = (i < n_per) == (j < n_per);
                let p = if same { p_in } else { 0.02 };
                if rand::Rng::random_bool(&mut r, p) {
                    edges.push((i, j));
                }
            }
        }
        let feats = Array2::from_shape_fn((n, 4), |(i, k)| {
            let home = if i < n_per { 0 } else { 2 };
            let noise: f64 = rand::Rng::random_range(&mut r, -0.3..0.3);
            if k == home || k == home + 1 {
                1.0 + noise
            } else {
                noise
            }
        });
        SparseGraph::from_edges(n, &edges, feats).unwrap()
    }

    #[test]
    fn config_ranges() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig {
                k: 0,
                ..Default::default()
            },
            TrainConfig {
                k: 7,
                ..Default::default()
            },
            TrainConfig {
                alpha: 1.1,
                ..Default::default()
            },
            TrainConfig {
                delta: 1.0,
                ..Default::default()
            },
            TrainConfig {
                lambda: -0.1,
                ..Default::default()
            },
            TrainConfig {
                gamma: 0.0,
                ..Default::default()
            },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Parameter(_))));
        }
        let mut plain = TrainConfig::default();
        Ablation::Plain.apply(&mut plain);
        assert!(!plain.needs_diffusion());
        let mut nf = TrainConfig::default();
        Ablation::NoStructure.apply(&mut nf);
        assert!(!nf.needs_diffusion());
    }

    #[test]
    fn planted_clusters_are_learned_and_deterministic() {
        let g = two_clusters(10, 1.0, 3);
        let split = split_edges(&g, [0.7, 0.15, 0.15], 1).unwrap();
        let config = TrainConfig {
            hidden_dim: 8,
            max_epochs: 200,
            patience: 200,
            lr: 0.01,
            seed: 4,
            ..Default::default()
        };
        let a = train(&g, &split, &config).unwrap();
        let b = train(&g, &split, &config).unwrap();
        assert_eq!(a.state, b.state);
        assert_eq!(a.history, b.history);
        assert_eq!(a.counters.selection_passes, a.epochs_run);

        // cliques: every non-edge crosses clusters
        let model = Model::from_split(a.state.clone(), &g, &split).unwrap();
        let scorer = model.scorer();
        let train_auc = auc_pos_neg(
            &score_pairs(&scorer, &split.train_pos),
            &score_pairs(&scorer, &split.train_neg),
        )
        .unwrap();
        assert!(train_auc >= 0.95, "training auc {train_auc}");
    }

    #[test]
    fn plain_ablation_matches_embedding_scores() {
        let g = two_clusters(6, 0.6, 5);
        let split = split_edges(&g, [0.7, 0.15, 0.15], 2).unwrap();
        let mut config = TrainConfig {
            hidden_dim: 4,
            max_epochs: 5,
            ..Default::default()
        };
        Ablation::Plain.apply(&mut config);
        let out = train(&g, &split, &config).unwrap();
        assert!(out
            .history
            .iter()
            .all(|r| r.loss.l_dis_pos == 0.0 && r.loss.l_dis_neg == 0.0));
        let model = Model::from_split(out.state, &g, &split).unwrap();
        assert!(model.diffusion.is_none());
        let pairs = &split.test_pos;
        assert_eq!(score_pairs(&model.scorer(), pairs), embedding_scores(&model.h_r, pairs));
    }

    #[test]
    fn finite_differences_on_quadratic() {
        // f(x) = Σ c_k x_k², ∇f = 2 c x
        let c = [1.0, -2.0, 0.5, 3.0];
        let x = [0.3, -1.2, 2.0, 0.7];
        let grad: Vec<f64> = c.iter().zip(&x).map(|(c, x)| 2.0 * c * x).collect();
        let f = |v: &[f64]| c.iter().zip(v).map(|(c, x)| c * x * x).sum::<f64>();
        let (err, _) = finite_difference_check(&x, &grad, 1e-4, 1e-8, f);
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn finite_difference_error_is_second_order() {
        let x = [0.7f64];
        let grad = [x[0].cos()];
        let f = |v: &[f64]| v[0].sin();
        let (e1, _) = finite_difference_check(&x, &grad, 1e-2, 0.0, f);
        let (e2, _) = finite_difference_check(&x, &grad, 5e-3, 0.0, f);
        let ratio = e1 / e2;
        assert!((ratio - 4.0).abs() < 0.1, "ratio {ratio}");
    }

    #[test]
    fn gradients_match_finite_differences() {
        let g = two_clusters(5, 0.6, 8);
        let split = split_edges(&g, [0.6, 0.2, 0.2], 3).unwrap();
        let config = TrainConfig {
            hidden_dim: 3,
            k: 2,
            seed: 11,
            ..Default::default()
        };
        let report = check_gradients(&g, &split, &config, 2).unwrap();
        assert!(report.checked > 0);
        assert!(report.max_rel_err < 1e-4, "{report:?}");
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let state = ModelState {
            encoder: encoder::init_params(5, 4, 2).unwrap(),
            config: TrainConfig::default(),
            epoch: 17,
            best_val_auc: 0.912_345_678_901_234_5,
            dataset_hash: Some("abc".into()),
        };
        state.write(&path).unwrap();
        let back = ModelState::read(&path).unwrap();
        assert_eq!(back.encoder.tensors(), state.encoder.tensors());
        assert_eq!(back.best_val_auc.to_bits(), state.best_val_auc.to_bits());
        assert_eq!(back.config, state.config);
    }
}
