use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use linkexplain::eval::FidelityMode;
use linkexplain::run::{self, Dataset, Emit, EvalOptions};
use linkexplain::synthetic::SynthParams;
use linkexplain::{Ablation, EdgeSplit, Error, FeatureNorm, Result, TrainConfig};

#[derive(Parser, Debug)]
#[command(name = "linkexplain", version, about = "Self-explainable link prediction")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Increase log verbosity (-v debug, -vv trace).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convert raw edge and feature files into a dataset directory.
    Prepare {
        #[arg(long)]
        edges: PathBuf,
        #[arg(long)]
        features: PathBuf,
        /// Two-column `compact_id original_id` map; edge ids are then original ids.
        #[arg(long)]
        id_map: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Write train/validation/test splits with matched negatives.
    Split {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "0.85,0.05,0.10")]
        ratios: String,
        /// First seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of consecutive seeds starting at --seed.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Train a model on one split.
    Train(TrainArgs),
    /// Test AUC, heuristic baselines and explanation precision.
    Eval {
        #[command(flatten)]
        runs: RunArgs,
        /// Precision cut-offs (synthetic datasets only).
        #[arg(long, default_value = "1,2")]
        precision_k: String,
        #[arg(long)]
        no_heuristics: bool,
        #[arg(long, value_enum, default_value_t = EmitArg::Json)]
        emit: EmitArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Export selected neighbors for pairs.
    Explain {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// `i,j` in compact ids; repeatable. Defaults to the whole test set.
        #[arg(long = "pair")]
        pairs: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// AUC drop after deleting each endpoint's top-M neighbors.
    Fidelity {
        #[command(flatten)]
        runs: RunArgs,
        #[arg(long, default_value = "1,2,3,4")]
        m: String,
        #[arg(long, value_enum, default_value_t = ModeArg::EdgesOnly)]
        mode: ModeArg,
        #[arg(long, value_enum, default_value_t = EmitArg::Csv)]
        emit: EmitArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Generate a synthetic dataset with ground-truth explanations.
    Synth {
        #[arg(long, default_value = "syn-medium")]
        preset: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        num_nodes: Option<usize>,
        #[arg(long)]
        components: Option<usize>,
        #[arg(long)]
        feature_dim: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        target_edges: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Grid over K and lambda; writes a plot-ready CSV.
    Sweep {
        #[command(flatten)]
        train: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        /// Split files; repeatable.
        #[arg(long = "split", required = true)]
        splits: Vec<PathBuf>,
        #[arg(long = "k-values", default_value = "1,2,3,4")]
        k_values: String,
        #[arg(long = "lambda-values", default_value = "0.1,0.3,0.5,1.0")]
        lambda_values: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    data: PathBuf,
    /// Trained run directories; repeatable for multi-seed aggregation.
    #[arg(long = "model", required = true)]
    models: Vec<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    data: PathBuf,
    /// Split file; defaults to `split.json` inside the dataset directory.
    #[arg(long)]
    split: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

/// Training hyperparameters: a TOML file overridden by individual flags.
#[derive(Args, Debug, Default)]
struct ConfigArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    ablation: Option<AblationArg>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    #[arg(long)]
    k_max: Option<usize>,
    #[arg(long)]
    drop_tol: Option<f64>,
    #[arg(long)]
    mask_target: Option<bool>,
    #[arg(long, value_enum)]
    feature_norm: Option<NormArg>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum EmitArg {
    Json,
    Csv,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ModeArg {
    EdgesOnly,
    AllPairs,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum AblationArg {
    NoStructure,
    NoFeature,
    Plain,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum NormArg {
    None,
    RowL2,
}

impl From<EmitArg> for Emit {
    fn from(e: EmitArg) -> Self {
        match e {
            EmitArg::Json => Emit::Json,
            EmitArg::Csv => Emit::Csv,
        }
    }
}

impl ConfigArgs {
    fn resolve(&self) -> Result<TrainConfig> {
        let mut c = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Parameter(format!("cannot read config {}: {e}", path.display())))?;
                toml::from_str::<TrainConfig>(&text)
                    .map_err(|e| Error::Parameter(format!("{}: {e}", path.display())))?
            }
            None => TrainConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => { $(if let Some(v) = self.$field { c.$field = v; })* };
        }
        set!(
            k,
            lambda,
            alpha,
            beta,
            delta,
            gamma,
            lr,
            max_epochs,
            patience,
            seed,
            hidden_dim,
            k_max,
            drop_tol,
            mask_target
        );
        if let Some(n) = self.feature_norm {
            c.feature_norm = match n {
                NormArg::None => FeatureNorm::None,
                NormArg::RowL2 => FeatureNorm::RowL2,
            };
        }
        if let Some(a) = self.ablation {
            match a {
                AblationArg::NoStructure => Ablation::NoStructure,
                AblationArg::NoFeature => Ablation::NoFeature,
                AblationArg::Plain => Ablation::Plain,
            }
            .apply(&mut c);
        }
        c.validate()?;
        Ok(c)
    }
}

fn ratios(text: &str) -> Result<[f64; 3]> {
    let v: Vec<f64> = run::parse_list(text, "ratio")?;
    v.try_into()
        .map_err(|v: Vec<f64>| Error::Parameter(format!("expected three ratios, got {}", v.len())))
}

fn default_split(data: &Path, split: Option<PathBuf>) -> PathBuf {
    split.unwrap_or_else(|| data.join(run::SPLIT_FILE))
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prepare {
            edges,
            features,
            id_map,
            out,
            force,
        } => {
            let data = run::cmd_prepare(&edges, &features, id_map.as_deref(), &out, force)?;
            log::info!("dataset hash {}", data.hash);
        }
        Command::Split {
            data,
            ratios: r,
            seed,
            seeds,
            out,
            force,
        } => {
            let r = ratios(&r)?;
            let data = Dataset::load(&data)?;
            if seeds == 0 {
                return Err(Error::Parameter("--seeds must be at least 1".into()));
            }
            let list: Vec<u64> = (seed..seed + seeds).collect();
            run::cmd_split(&data, r, &list, &out, force)?;
        }
        Command::Train(args) => {
            let config = args.config.resolve()?;
            let dataset = Dataset::load(&args.data)?;
            let split = EdgeSplit::read(&default_split(&args.data, args.split))?;
            if !config.needs_diffusion() {
                log::info!("structure scores unused; diffusion skipped");
            }
            let outcome = run::cmd_train(&dataset, &split, &config, &args.out, args.force)?;
            log::info!(
                "best val auc {:.4} at epoch {} ({:.1}s)",
                outcome.state.best_val_auc,
                outcome.state.epoch,
                outcome.seconds
            );
        }
        Command::Eval {
            runs,
            precision_k,
            no_heuristics,
            emit,
            out,
            force,
        } => {
            let data = Dataset::load(&runs.data)?;
            let opts = EvalOptions {
                ks: run::parse_list(&precision_k, "precision k")?,
                heuristics: !no_heuristics,
                ..Default::default()
            };
            run::cmd_eval(&data, &runs.models, &opts, emit.into(), &out, force)?;
        }
        Command::Explain {
            data,
            model,
            pairs,
            out,
            force,
        } => {
            let data = Dataset::load(&data)?;
            let parsed = pairs.iter().map(|p| run::parse_pair(p)).collect::<Result<Vec<_>>>()?;
            let list = (!parsed.is_empty()).then_some(parsed.as_slice());
            let n = run::cmd_explain(&data, &model, list, &out, force)?;
            log::info!("explained {n} pairs");
        }
        Command::Fidelity {
            runs,
            m,
            mode,
            emit,
            out,
            force,
        } => {
            let data = Dataset::load(&runs.data)?;
            let ms: Vec<usize> = run::parse_list(&m, "m")?;
            let mode = match mode {
                ModeArg::EdgesOnly => FidelityMode::EdgesOnly,
                ModeArg::AllPairs => FidelityMode::AllPairs,
            };
            run::cmd_fidelity(&data, &runs.models, &ms, mode, emit.into(), &out, force)?;
        }
        Command::Synth {
            preset,
            seed,
            num_nodes,
            components,
            feature_dim,
            alpha,
            k,
            target_edges,
            out,
            force,
        } => {
            let mut p = SynthParams::preset(&preset, seed)?;
            if let Some(v) = num_nodes {
                p.num_nodes = v;
            }
            if let Some(v) = components {
                p.components = v;
            }
            if let Some(v) = feature_dim {
                p.feature_dim = v;
            }
            if let Some(v) = alpha {
                p.alpha = v;
            }
            if let Some(v) = k {
                p.k = v;
            }
            if let Some(v) = target_edges {
                p.target_edges = v;
            }
            p.validate()?;
            let data = run::cmd_synth(&p, &out, force)?;
            log::info!("{} nodes, {} edges", data.graph.num_nodes(), data.graph.num_edges());
        }
        Command::Sweep {
            train,
            data,
            splits,
            k_values,
            lambda_values,
            out,
            force,
        } => {
            let base = train.resolve()?;
            let dataset = Dataset::load(&data)?;
            let splits = splits.iter().map(|p| EdgeSplit::read(p)).collect::<Result<Vec<_>>>()?;
            let ks: Vec<usize> = run::parse_list(&k_values, "k")?;
            let lambdas: Vec<f64> = run::parse_list(&lambda_values, "lambda")?;
            run::cmd_sweep(&dataset, &splits, &base, &ks, &lambdas, &out, force)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp_secs()
        .init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
