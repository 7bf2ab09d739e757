//! The `psast` command line: corpus statistics, subtree extraction,
//! embedding training and analysis, family classification and synthetic
//! corpora.

pub mod commands;
pub mod config;
pub mod ingest;
pub mod manifest;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use psast_core::analysis::{Linkage, Metric};

pub use commands::Status;
pub use config::PipelineConfig;

#[derive(Debug, Parser)]
#[command(name = "psast", version, about = "PowerShell AST node-type embeddings and family classification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// Root seed for every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON pipeline configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (output file for `decode`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decode a Base-64 UTF-16LE encoded command.
    Decode {
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Depth and node count of every script in a corpus.
    Stats {
        corpus: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Extract (and optionally sample) all subtrees of a corpus.
    Subtrees {
        corpus: Option<PathBuf>,
        /// Number of subtrees to draw without replacement.
        #[arg(long)]
        sample: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Train node-type embeddings from a corpus directory or subtrees.json.
    Train {
        input: Option<PathBuf>,
        #[arg(long)]
        sample: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Nearest neighbours of every type in a trained model.
    Neighbors {
        #[arg(long)]
        model: Option<PathBuf>,
        /// Neighbours listed per type.
        #[arg(short, long)]
        m: Option<usize>,
        #[arg(long)]
        metric: Option<Metric>,
        #[command(flatten)]
        common: Common,
    },
    /// k-means and hierarchical clustering of a trained model.
    Cluster {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(short, long)]
        k: Option<usize>,
        #[arg(long)]
        metric: Option<Metric>,
        #[arg(long)]
        linkage: Option<Linkage>,
        #[command(flatten)]
        common: Common,
    },
    /// Random-forest family classification on depth and node count.
    Classify {
        corpus: Option<PathBuf>,
        #[arg(long)]
        trees: Option<usize>,
        #[arg(long)]
        max_depth: Option<usize>,
        /// Choose max_depth by cross-validation.
        #[arg(long)]
        tune_depth: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Write a synthetic labelled corpus.
    Synth {
        #[arg(long)]
        families: Option<usize>,
        #[arg(long)]
        scripts: Option<usize>,
        #[arg(long)]
        types: Option<usize>,
        /// Let family shape ranges overlap.
        #[arg(long)]
        overlapping: bool,
        /// Twin type pair `A,B` whose contexts are made identical.
        #[arg(long, value_parser = parse_twin)]
        twin: Vec<(String, String)>,
        #[command(flatten)]
        common: Common,
    },
}

fn parse_twin(s: &str) -> Result<(String, String), String> {
    match s.split_once(',') {
        Some((a, b)) if !a.is_empty() && !b.is_empty() => Ok((a.to_owned(), b.to_owned())),
        _ => Err(format!("expected `A,B`, got `{s}`")),
    }
}

fn base_config(common: &Common) -> Result<PipelineConfig> {
    let mut config = PipelineConfig::load_or_default(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.out_dir = out.clone();
    }
    Ok(config)
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

pub fn run(cli: Cli) -> Result<Status> {
    match cli.command {
        Command::Decode { input, common } => {
            commands::decode(&input, common.out.as_deref())?;
            Ok(Status::Ok)
        }
        Command::Stats { corpus, common } => commands::stats(corpus.as_deref(), &base_config(&common)?.resolve()),
        Command::Subtrees { corpus, sample, common } => {
            let mut config = base_config(&common)?;
            if sample.is_some() {
                config.subtrees.sample_size = sample;
            }
            commands::subtrees(corpus.as_deref(), &config.resolve())
        }
        Command::Train { input, sample, epochs, dim, delta, k, learning_rate, common } => {
            let mut config = base_config(&common)?;
            if sample.is_some() {
                config.subtrees.sample_size = sample;
            }
            set(&mut config.train.epochs, epochs);
            set(&mut config.train.n_f, dim);
            set(&mut config.train.delta, delta);
            set(&mut config.train.k, k);
            set(&mut config.train.learning_rate, learning_rate);
            commands::train_cmd(input.as_deref(), &config.resolve())
        }
        Command::Neighbors { model, m, metric, common } => {
            let mut config = base_config(&common)?;
            if model.is_some() {
                config.model_path = model;
            }
            set(&mut config.analysis.neighbors, m);
            set(&mut config.analysis.metric, metric);
            commands::neighbors(&config.resolve())
        }
        Command::Cluster { model, k, metric, linkage, common } => {
            let mut config = base_config(&common)?;
            if model.is_some() {
                config.model_path = model;
            }
            set(&mut config.analysis.clusters, k);
            set(&mut config.analysis.metric, metric);
            set(&mut config.analysis.linkage, linkage);
            commands::cluster(&config.resolve())
        }
        Command::Classify { corpus, trees, max_depth, tune_depth, common } => {
            let mut config = base_config(&common)?;
            set(&mut config.forest.n_trees, trees);
            set(&mut config.forest.max_depth, max_depth);
            config.classify.tune_depth |= tune_depth;
            commands::classify(corpus.as_deref(), &config.resolve())
        }
        Command::Synth { families, scripts, types, overlapping, twin, common } => {
            let mut config = base_config(&common)?;
            set(&mut config.synth.families, families);
            set(&mut config.synth.scripts_per_family, scripts);
            set(&mut config.synth.type_count, types);
            if overlapping {
                config.synth.separable = false;
            }
            if !twin.is_empty() {
                config.synth.twins = twin;
            }
            commands::synth(&config.resolve())
        }
    }
}
