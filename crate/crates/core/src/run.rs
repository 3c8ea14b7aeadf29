//! Command implementations shared by the binary and the integration tests.
//!
//! Every command writes into its own output directory, together with a
//! `manifest.json` describing the inputs that produced it.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::{
    auc_pos_neg, fidelity, heuristic_auc, mean_std, precision_at_k, random_precision_at_k, run_random_explainer,
    FidelityMode, FidelityPoint, HeuristicAuc, MetricReport, TruthRecord,
};
use crate::graph::{
    ordered, read_edge_list, read_features, split_edges, write_edge_list, write_features_bin, EdgeSplit, IdMap, Pair,
    SparseGraph,
};
use crate::loss::TrainingLog;
use crate::synthetic::{self, SynthParams};
use crate::trainer::{score_pairs, train_with, Model, ModelState, TrainConfig, TrainData, TrainOutcome};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const SPLIT_FILE: &str = "split.json";
pub const LOG_FILE: &str = "train_log.csv";

/// Inputs and timings of one command invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub dataset_hashes: BTreeMap<String, String>,
    pub seeds: Vec<u64>,
    pub version: String,
    pub timings: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn new(command: &str, config: &impl Serialize) -> Result<Self> {
        Ok(Self {
            command: command.into(),
            config: serde_json::to_value(config)?,
            dataset_hashes: BTreeMap::new(),
            seeds: Vec::new(),
            version: env!("CARGO_PKG_VERSION").into(),
            timings: BTreeMap::new(),
        })
    }

    /// Equal everything except wall-clock timings.
    pub fn same_inputs(&self, other: &Self) -> bool {
        self.command == other.command
            && self.config == other.config
            && self.dataset_hashes == other.dataset_hashes
            && self.seeds == other.seeds
            && self.version == other.version
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(&path, e))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Output shape for metric files.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emit {
    #[default]
    Json,
    Csv,
}

impl Emit {
    pub fn extension(self) -> &'static str {
        match self {
            Emit::Json => "json",
            Emit::Csv => "csv",
        }
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Create `dir`, refusing to reuse one that already holds a manifest unless
/// `force` is set.
pub fn prepare_output(dir: &Path, force: bool) -> Result<()> {
    if dir.join(MANIFEST_FILE).exists() && !force {
        return Err(Error::Parameter(format!(
            "{} already contains results; pass --force to overwrite",
            dir.display()
        )));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn parse_vec<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    text.split(',')
        .map(|t| t.trim())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<T>()
                .map_err(|e| Error::Parameter(format!("bad {what} value {t:?}: {e}")))
        })
        .collect()
}

/// Comma-separated list of numbers, e.g. `0.85,0.05,0.10`.
pub fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    let out = parse_vec(text, what)?;
    if out.is_empty() {
        return Err(Error::Parameter(format!("empty {what} list")));
    }
    Ok(out)
}

/// `i,j` in compact node ids.
pub fn parse_pair(text: &str) -> Result<Pair> {
    match parse_vec::<usize>(text, "pair")?.as_slice() {
        [i, j] => Ok((*i, *j)),
        _ => Err(Error::Parameter(format!("pair must be `i,j`, got {text:?}"))),
    }
}

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

/// A dataset directory: `edges.txt`, `features.bin` or `features.csv`, and
/// for synthetic data `truth.jsonl`.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub dir: PathBuf,
    pub graph: SparseGraph,
    pub hash: String,
    pub truth: Option<Vec<TruthRecord>>,
}

pub fn feature_file(dir: &Path) -> Result<PathBuf> {
    for name in ["features.bin", "features.csv"] {
        let p = dir.join(name);
        if p.exists() {
            return Ok(p);
        }
    }
    Err(Error::io(
        dir.join("features.bin"),
        std::io::Error::new(std::io::ErrorKind::NotFound, "no features.bin or features.csv"),
    ))
}

impl Dataset {
    pub fn load(dir: &Path) -> Result<Self> {
        let edges = dir.join("edges.txt");
        let features = feature_file(dir)?;
        let hash = dataset_hash(&edges, &features)?;
        let graph = crate::graph::load_graph(&edges, &features)?;
        let truth_path = dir.join("truth.jsonl");
        let truth = if truth_path.exists() {
            Some(synthetic::read_truth(&truth_path)?)
        } else {
            None
        };
        log::info!(
            "loaded {}: {} nodes, {} edges, {} features",
            dir.display(),
            graph.num_nodes(),
            graph.num_edges(),
            graph.feature_dim()
        );
        Ok(Self {
            dir: dir.to_path_buf(),
            graph,
            hash,
            truth,
        })
    }

    fn hashes(&self) -> BTreeMap<String, String> {
        BTreeMap::from([("dataset".to_string(), self.hash.clone())])
    }

    pub fn truth_index(&self) -> BTreeMap<Pair, &TruthRecord> {
        self.truth.iter().flatten().map(|t| (ordered(t.i, t.j), t)).collect()
    }
}

/// Combined hash of the edge and feature files.
pub fn dataset_hash(edges: &Path, features: &Path) -> Result<String> {
    let mut h = Sha256::new();
    h.update(sha256_file(edges)?.as_bytes());
    h.update(sha256_file(features)?.as_bytes());
    Ok(hex::encode(h.finalize()))
}

/// Normalize raw edge and feature files into a dataset directory. With an id
/// map, edge ids are original ids and feature rows follow the map's order.
pub fn cmd_prepare(edges: &Path, features: &Path, id_map: Option<&Path>, out: &Path, force: bool) -> Result<Dataset> {
    prepare_output(out, force)?;
    let x = read_features(features)?;
    let raw = read_edge_list(edges)?;
    let map = id_map.map(IdMap::read).transpose()?;
    let mut pairs = Vec::with_capacity(raw.len());
    for (u, v) in raw {
        let lookup = |id: u64| -> Result<usize> {
            match &map {
                Some(m) => m
                    .get(id)
                    .ok_or_else(|| Error::MalformedInput(format!("node id {id} missing from the id map"))),
                None if (id as usize) < x.nrows() => Ok(id as usize),
                None => Err(Error::MalformedInput(format!(
                    "node id {id} out of range for {} feature rows",
                    x.nrows()
                ))),
            }
        };
        pairs.push((lookup(u)?, lookup(v)?));
    }
    let n = x.nrows();
    let graph = SparseGraph::from_edges(n, &pairs, x)?;
    write_edge_list(&out.join("edges.txt"), &graph.edges())?;
    write_features_bin(&out.join("features.bin"), graph.features())?;
    if let Some(m) = &map {
        m.write(&out.join("id_map.tsv"))?;
    }
    let data = Dataset::load(out)?;
    let mut manifest = RunManifest::new("prepare", &serde_json::json!({ "id_map": id_map.is_some() }))?;
    manifest.dataset_hashes = data.hashes();
    manifest.write(out)?;
    Ok(data)
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

pub fn split_file_name(seed: u64) -> String {
    format!("split_seed{seed}.json")
}

/// One split file per seed.
pub fn cmd_split(data: &Dataset, ratios: [f64; 3], seeds: &[u64], out: &Path, force: bool) -> Result<Vec<PathBuf>> {
    prepare_output(out, force)?;
    let started = Instant::now();
    let mut paths = Vec::new();
    for &seed in seeds {
        let split = split_edges(&data.graph, ratios, seed)?;
        let path = out.join(split_file_name(seed));
        split.write(&path)?;
        log::info!(
            "seed {seed}: {}/{}/{} positives -> {}",
            split.train_pos.len(),
            split.val_pos.len(),
            split.test_pos.len(),
            path.display()
        );
        paths.push(path);
    }
    let mut manifest = RunManifest::new("split", &serde_json::json!({ "ratios": ratios }))?;
    manifest.dataset_hashes = data.hashes();
    manifest.seeds = seeds.to_vec();
    manifest
        .timings
        .insert("total_seconds".into(), started.elapsed().as_secs_f64());
    manifest.write(out)?;
    Ok(paths)
}

/// Every split pair must name valid nodes; every positive must be an edge of
/// the dataset and every negative a non-edge.
pub fn check_split(data: &Dataset, split: &EdgeSplit) -> Result<()> {
    let g = &data.graph;
    let positives = split.train_pos.iter().chain(&split.val_pos).chain(&split.test_pos);
    let negatives = split.train_neg.iter().chain(&split.val_neg).chain(&split.test_neg);
    for (&(i, j), positive) in positives.map(|p| (p, true)).chain(negatives.map(|p| (p, false))) {
        if i >= g.num_nodes() || j >= g.num_nodes() || g.has_edge(i, j) != positive {
            return Err(Error::Integrity(format!(
                "split pair ({i}, {j}) does not match the dataset in {}",
                data.dir.display()
            )));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// Train and write `model.ckpt`, `split.json`, `train_log.csv` and the
/// manifest into `out`.
pub fn cmd_train(
    data: &Dataset,
    split: &EdgeSplit,
    config: &TrainConfig,
    out: &Path,
    force: bool,
) -> Result<TrainOutcome> {
    config.validate()?;
    check_split(data, split)?;
    prepare_output(out, force)?;
    let started = Instant::now();
    let train_graph = split.train_graph(&data.graph)?;
    let dm = config.compute_diffusion(&train_graph)?;
    let diffusion_seconds = started.elapsed().as_secs_f64();
    let train_data = TrainData::new(&data.graph, split, dm, config.feature_norm)?;
    let mut log = TrainingLog::create(&out.join(LOG_FILE))?;
    let mut outcome = train_with(&train_data, config, Some(&mut log))?;
    outcome.state.dataset_hash = Some(data.hash.clone());
    outcome.state.write(&out.join(CHECKPOINT_FILE))?;
    split.write(&out.join(SPLIT_FILE))?;

    let mut manifest = RunManifest::new("train", config)?;
    manifest.dataset_hashes = data.hashes();
    manifest
        .dataset_hashes
        .insert("split".into(), sha256_file(&out.join(SPLIT_FILE))?);
    manifest.seeds = vec![split.seed, config.seed];
    manifest.timings.insert("diffusion_seconds".into(), diffusion_seconds);
    manifest.timings.insert("train_seconds".into(), outcome.seconds);
    manifest
        .timings
        .insert("total_seconds".into(), started.elapsed().as_secs_f64());
    manifest.write(out)?;
    Ok(outcome)
}

/// A trained run directory bound to its dataset.
pub struct LoadedRun {
    pub dir: PathBuf,
    pub model: Model,
    pub split: EdgeSplit,
}

pub fn load_run(data: &Dataset, dir: &Path) -> Result<LoadedRun> {
    let state = ModelState::read(&dir.join(CHECKPOINT_FILE))?;
    match &state.dataset_hash {
        Some(h) if *h != data.hash => {
            return Err(Error::Integrity(format!(
                "{} was trained on dataset {h}, but {} hashes to {}",
                dir.display(),
                data.dir.display(),
                data.hash
            )))
        }
        _ => {}
    }
    let split = EdgeSplit::read(&dir.join(SPLIT_FILE))?;
    check_split(data, &split)?;
    let model = Model::from_split(state, &data.graph, &split)?;
    Ok(LoadedRun {
        dir: dir.to_path_buf(),
        model,
        split,
    })
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Cut-offs for explanation precision; ignored without ground truth.
    pub ks: Vec<usize>,
    pub heuristics: bool,
    pub explainer_seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            ks: vec![1, 2],
            heuristics: true,
            explainer_seed: 0,
        }
    }
}

/// Metrics of one trained run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub auc: f64,
    pub precision_at: BTreeMap<usize, f64>,
    pub random_precision_at: BTreeMap<usize, f64>,
    pub heuristics: Option<HeuristicAuc>,
    pub explained_pairs: usize,
    pub missing_truth: usize,
}

/// CN and AA over the graph observed at test time: training plus validation
/// edges.
pub fn heuristics_for_split(g: &SparseGraph, split: &EdgeSplit) -> Result<HeuristicAuc> {
    let mut observed = split.train_pos.clone();
    observed.extend_from_slice(&split.val_pos);
    let graph = g.with_edges(&observed)?;
    heuristic_auc(&graph, &split.test_pos, &split.test_neg)
}

pub fn evaluate_run(data: &Dataset, run: &LoadedRun, opts: &EvalOptions) -> Result<RunMetrics> {
    let scorer = run.model.scorer();
    let pos = score_pairs(&scorer, &run.split.test_pos);
    let neg = score_pairs(&scorer, &run.split.test_neg);
    let auc = auc_pos_neg(&pos, &neg)?;
    let heuristics = if opts.heuristics {
        Some(heuristics_for_split(&data.graph, &run.split)?)
    } else {
        None
    };

    let mut precision_at = BTreeMap::new();
    let mut random_precision_at = BTreeMap::new();
    let mut explained_pairs = 0;
    let mut missing_truth = 0;
    if data.truth.is_some() && !opts.ks.is_empty() {
        let index = data.truth_index();
        let mut pairs = Vec::new();
        let mut truths = Vec::new();
        for &(i, j) in &run.split.test_pos {
            match index.get(&ordered(i, j)) {
                Some(t) => {
                    pairs.push((i, j));
                    truths.push(*t);
                }
                None => missing_truth += 1,
            }
        }
        if missing_truth > 0 {
            log::warn!("{missing_truth} test edges have no ground-truth record; skipped");
        }
        if !pairs.is_empty() {
            let explanations = pairs
                .par_iter()
                .map(|&(i, j)| scorer.explain(i, j))
                .collect::<Result<Vec<_>>>()?;
            let random = run_random_explainer(&run.model.graph, &pairs, run.model.state.config.k, opts.explainer_seed);
            let n = pairs.len() as f64;
            for &k in &opts.ks {
                let mut model_sum = 0.0;
                let mut random_sum = 0.0;
                for ((e, r), t) in explanations.iter().zip(&random).zip(&truths) {
                    model_sum += precision_at_k(e, t, k)?;
                    random_sum += random_precision_at_k(r, t, k);
                }
                precision_at.insert(k, model_sum / n);
                random_precision_at.insert(k, random_sum / n);
            }
            explained_pairs = pairs.len();
        }
    }
    Ok(RunMetrics {
        auc,
        precision_at,
        random_precision_at,
        heuristics,
        explained_pairs,
        missing_truth,
    })
}

/// Collect per-run metrics into one report.
pub fn aggregate(metrics: &[RunMetrics]) -> MetricReport {
    let mut report = MetricReport::default();
    for m in metrics {
        report.auc.push(m.auc);
        for (k, v) in &m.precision_at {
            report.precision_at.entry(*k).or_default().push(*v);
        }
        for (k, v) in &m.random_precision_at {
            report.random_precision_at.entry(*k).or_default().push(*v);
        }
        if let Some(h) = m.heuristics {
            report.heuristics.push(h);
        }
    }
    report
}

fn render_report(report: &MetricReport, emit: Emit) -> Result<String> {
    match emit {
        Emit::Json => report.to_json(),
        Emit::Csv => Ok(report.to_csv()),
    }
}

/// Evaluate one or more run directories and write `metrics.{json,csv}`.
pub fn cmd_eval(
    data: &Dataset,
    runs: &[PathBuf],
    opts: &EvalOptions,
    emit: Emit,
    out: &Path,
    force: bool,
) -> Result<MetricReport> {
    if runs.is_empty() {
        return Err(Error::Parameter("eval needs at least one run directory".into()));
    }
    prepare_output(out, force)?;
    let started = Instant::now();
    let mut metrics = Vec::new();
    let mut manifest = RunManifest::new("eval", opts)?;
    manifest.dataset_hashes = data.hashes();
    for dir in runs {
        let run = load_run(data, dir)?;
        let m = evaluate_run(data, &run, opts)?;
        log::info!("{}: test auc {:.4}", dir.display(), m.auc);
        manifest.dataset_hashes.insert(
            format!("checkpoint:{}", dir.display()),
            sha256_file(&dir.join(CHECKPOINT_FILE))?,
        );
        manifest.seeds.push(run.split.seed);
        metrics.push(m);
    }
    let report = aggregate(&metrics);
    write_text(
        &out.join(format!("metrics.{}", emit.extension())),
        &render_report(&report, emit)?,
    )?;
    log::info!("\n{}", report.to_text());
    manifest
        .timings
        .insert("total_seconds".into(), started.elapsed().as_secs_f64());
    manifest.write(out)?;
    Ok(report)
}

/// Write one JSON line per explained pair; `pairs = None` explains the whole
/// test set.
pub fn cmd_explain(data: &Dataset, run_dir: &Path, pairs: Option<&[Pair]>, out: &Path, force: bool) -> Result<usize> {
    prepare_output(out, force)?;
    let run = load_run(data, run_dir)?;
    let scorer = run.model.scorer();
    let pairs = pairs.unwrap_or(&run.split.test_pos);
    let path = out.join("explanations.jsonl");
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = BufWriter::new(file);
    for chunk in pairs.chunks(1024) {
        let records = chunk
            .par_iter()
            .map(|&(i, j)| scorer.explain(i, j)?.to_json_line())
            .collect::<Result<Vec<_>>>()?;
        for line in records {
            writeln!(w, "{line}").map_err(|e| Error::io(&path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    let mut manifest = RunManifest::new("explain", &serde_json::json!({ "pairs": pairs.len() }))?;
    manifest.dataset_hashes = data.hashes();
    manifest
        .dataset_hashes
        .insert("checkpoint".into(), sha256_file(&run_dir.join(CHECKPOINT_FILE))?);
    manifest.write(out)?;
    Ok(pairs.len())
}

/// Mean fidelity over runs for one deletion count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityRow {
    pub m: usize,
    pub delta_auc_mean: f64,
    pub delta_auc_std: f64,
    pub auc_original_mean: f64,
    pub auc_deleted_mean: f64,
    pub per_run: Vec<FidelityPoint>,
}

pub fn fidelity_rows(runs: &[LoadedRun], ms: &[usize], mode: FidelityMode) -> Result<Vec<FidelityRow>> {
    let mut rows = Vec::new();
    for &m in ms {
        let mut points = Vec::new();
        for run in runs {
            let p = fidelity(&run.model.scorer(), &run.split.test_pos, &run.split.test_neg, m, mode)?;
            log::info!("{}: M={m} delta auc {:.3}", run.dir.display(), p.delta_auc);
            points.push(p);
        }
        let deltas: Vec<f64> = points.iter().map(|p| p.delta_auc).collect();
        let (delta_auc_mean, delta_auc_std) = mean_std(&deltas);
        let mean_of = |f: fn(&FidelityPoint) -> f64| points.iter().map(f).sum::<f64>() / points.len() as f64;
        rows.push(FidelityRow {
            m,
            delta_auc_mean,
            delta_auc_std,
            auc_original_mean: mean_of(|p| p.auc_original),
            auc_deleted_mean: mean_of(|p| p.auc_deleted),
            per_run: points,
        });
    }
    Ok(rows)
}

pub fn fidelity_csv(rows: &[FidelityRow]) -> String {
    let mut out = String::from("m,delta_auc_mean,delta_auc_std,auc_original,auc_deleted,runs\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.m,
            r.delta_auc_mean,
            r.delta_auc_std,
            r.auc_original_mean,
            r.auc_deleted_mean,
            r.per_run.len()
        ));
    }
    out
}

/// Sweep deletion counts and write `fidelity.{csv,json}`.
pub fn cmd_fidelity(
    data: &Dataset,
    run_dirs: &[PathBuf],
    ms: &[usize],
    mode: FidelityMode,
    emit: Emit,
    out: &Path,
    force: bool,
) -> Result<Vec<FidelityRow>> {
    if run_dirs.is_empty() {
        return Err(Error::Parameter("fidelity needs at least one run directory".into()));
    }
    prepare_output(out, force)?;
    let runs = run_dirs.iter().map(|d| load_run(data, d)).collect::<Result<Vec<_>>>()?;
    let rows = fidelity_rows(&runs, ms, mode)?;
    let body = match emit {
        Emit::Csv => fidelity_csv(&rows),
        Emit::Json => serde_json::to_string_pretty(&rows)?,
    };
    write_text(&out.join(format!("fidelity.{}", emit.extension())), &body)?;
    let mut manifest = RunManifest::new("fidelity", &serde_json::json!({ "m": ms, "mode": mode }))?;
    manifest.dataset_hashes = data.hashes();
    manifest.seeds = runs.iter().map(|r| r.split.seed).collect();
    manifest.write(out)?;
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Synthetic data and sweeps
// ---------------------------------------------------------------------------

/// Generate a synthetic dataset directory plus its default `split.json`.
pub fn cmd_synth(params: &SynthParams, out: &Path, force: bool) -> Result<Dataset> {
    prepare_output(out, force)?;
    let started = Instant::now();
    let ds = synthetic::generate(params)?;
    ds.write_dir(out)?;
    let split = synthetic::split_synthetic(&ds, params.seed)?;
    split.write(&out.join(SPLIT_FILE))?;
    let data = Dataset::load(out)?;
    let mut manifest = RunManifest::new("synth", params)?;
    manifest.dataset_hashes = data.hashes();
    manifest.seeds = vec![params.seed];
    manifest
        .timings
        .insert("total_seconds".into(), started.elapsed().as_secs_f64());
    manifest.write(out)?;
    Ok(data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub lambda: f64,
    pub seed: u64,
    pub best_val_auc: f64,
    pub test_auc: f64,
    pub epochs: usize,
    pub seconds: f64,
}

/// Train every `(k, lambda)` combination on every split and write
/// `sweep.csv`.
pub fn cmd_sweep(
    data: &Dataset,
    splits: &[EdgeSplit],
    base: &TrainConfig,
    ks: &[usize],
    lambdas: &[f64],
    out: &Path,
    force: bool,
) -> Result<Vec<SweepRow>> {
    prepare_output(out, force)?;
    let mut rows = Vec::new();
    for split in splits {
        check_split(data, split)?;
        let train_graph = split.train_graph(&data.graph)?;
        let uses_structure = lambdas
            .iter()
            .any(|&lambda| TrainConfig { lambda, ..*base }.needs_diffusion());
        let dm = if uses_structure {
            Some(crate::diffusion::compute_ppr(
                &train_graph,
                base.gamma,
                base.k_max,
                base.drop_tol,
            )?)
        } else {
            None
        };
        for &k in ks {
            for &lambda in lambdas {
                let config = TrainConfig { k, lambda, ..*base };
                config.validate()?;
                let train_data = TrainData::new(&data.graph, split, dm.clone(), config.feature_norm)?;
                let outcome = train_with(&train_data, &config, None)?;
                let model = Model::new(
                    outcome.state.clone(),
                    train_data.graph.clone(),
                    train_data.diffusion.clone(),
                )?;
                let scorer = model.scorer();
                let test_auc = auc_pos_neg(
                    &score_pairs(&scorer, &split.test_pos),
                    &score_pairs(&scorer, &split.test_neg),
                )?;
                log::info!("k={k} lambda={lambda} seed={}: test auc {test_auc:.4}", split.seed);
                rows.push(SweepRow {
                    k,
                    lambda,
                    seed: split.seed,
                    best_val_auc: outcome.state.best_val_auc,
                    test_auc,
                    epochs: outcome.epochs_run,
                    seconds: outcome.seconds,
                });
            }
        }
    }
    let mut csv = String::from("k,lambda,seed,best_val_auc,test_auc,epochs\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.k, r.lambda, r.seed, r.best_val_auc, r.test_auc, r.epochs
        ));
    }
    write_text(&out.join("sweep.csv"), &csv)?;
    let mut manifest = RunManifest::new(
        "sweep",
        &serde_json::json!({ "base": base, "k": ks, "lambda": lambdas }),
    )?;
    manifest.dataset_hashes = data.hashes();
    manifest.seeds = splits.iter().map(|s| s.seed).collect();
    manifest.write(out)?;
    Ok(rows)
}

/// Distinct unordered pairs, preserving first occurrence.
pub fn dedup_pairs(pairs: &[Pair]) -> Vec<Pair> {
    let mut seen = HashSet::new();
    pairs
        .iter()
        .copied()
        .filter(|&(i, j)| seen.insert(ordered(i, j)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn list_parsing() {
        assert_eq!(
            parse_list::<f64>("0.85, 0.05,0.10", "ratio").unwrap(),
            vec![0.85, 0.05, 0.10]
        );
        assert!(parse_list::<usize>("", "m").is_err());
        assert!(parse_list::<usize>("1,x", "m").is_err());
        assert_eq!(parse_pair("12,907").unwrap(), (12, 907));
        assert!(parse_pair("1,2,3").is_err());
        assert_eq!(dedup_pairs(&[(1, 2), (2, 1), (3, 4)]), vec![(1, 2), (3, 4)]);
    }

    #[test]
    fn manifest_comparison_ignores_timings() {
        let mut a = RunManifest::new("train", &serde_json::json!({"k": 3})).unwrap();
        let mut b = a.clone();
        a.timings.insert("total_seconds".into(), 1.0);
        b.timings.insert("total_seconds".into(), 2.0);
        assert!(a.same_inputs(&b));
        b.seeds.push(1);
        assert!(!a.same_inputs(&b));
    }

    #[test]
    fn output_guard() {
        let dir = tempfile::tempdir().unwrap();
        prepare_output(dir.path(), false).unwrap();
        RunManifest::new("x", &1).unwrap().write(dir.path()).unwrap();
        let err = prepare_output(dir.path(), false).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        prepare_output(dir.path(), true).unwrap();
    }
}
