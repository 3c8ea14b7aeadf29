//! Self-explainable link prediction.
//!
//! For every candidate pair the model picks the `K` neighbors of each endpoint
//! most relevant to the other endpoint, aggregates them into pair-specific
//! representations, and reports the picks as the explanation of the score.

pub mod diffusion;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod graph;
pub mod loss;
pub mod optim;
pub mod pair;
pub mod rng;
pub mod run;
pub mod sparse;
pub mod synthetic;
pub mod trainer;

pub use diffusion::{compute_ppr, DiffusionMatrix};
pub use encoder::{EncoderInput, EncoderParams, FeatureNorm};
pub use error::{Error, Result};
pub use eval::{auc, MetricReport};
pub use graph::{load_graph, split_edges, EdgeSplit, IdMap, Pair, SparseGraph};
pub use loss::LossReport;
pub use pair::{explain_pair, PairConfig, PairExplanation, PairScorer};
pub use trainer::{train, Ablation, Model, ModelState, TrainConfig, TrainOutcome};
