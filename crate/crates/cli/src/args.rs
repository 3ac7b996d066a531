use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "awblstm", version, about = "Attention-wrapped hierarchical BLSTM for drug-drug interaction classification")]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse an annotated XML corpus into instance JSONL and a vocabulary.
    Preprocess(PreprocessArgs),
    /// Train a model on instance JSONL.
    Train(TrainArgs),
    /// Score a checkpoint on labeled instances.
    Eval(EvalArgs),
    /// Label instances with a checkpoint.
    Predict(PredictArgs),
    /// Generate the synthetic trigger-phrase corpus.
    Synth(SynthArgs),
    /// Run a verification suite.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// XML file or directory searched recursively for *.xml.
    #[arg(long)]
    pub corpus: PathBuf,
    /// TSV of sentence_id, token_index, tag.
    #[arg(long)]
    pub pos_sidecar: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub vocab_out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub min_word_freq: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScopeArg {
    Sentence,
    Part,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OptimizerArg {
    Adam,
    Sgd,
}

/// Model settings that override the config file.
#[derive(Debug, Args, Default)]
pub struct ModelOverrides {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long, value_enum)]
    pub optimizer: Option<OptimizerArg>,
    #[arg(long)]
    pub word_dim: Option<usize>,
    #[arg(long)]
    pub pos_dim: Option<usize>,
    #[arg(long)]
    pub dist_dim: Option<usize>,
    #[arg(long)]
    pub lower_hidden: Option<usize>,
    #[arg(long)]
    pub upper_hidden: Option<usize>,
    #[arg(long)]
    pub attention_width: Option<usize>,
    #[arg(long)]
    pub max_part_len: Option<usize>,
    #[arg(long)]
    pub dist_clip: Option<usize>,
    #[arg(long)]
    pub min_word_freq: Option<usize>,
    #[arg(long)]
    pub validation_split: Option<f64>,
    /// Global gradient-norm clip; 0 disables clipping.
    #[arg(long)]
    pub grad_clip: Option<f64>,
    /// Keep each Other instance with this probability.
    #[arg(long)]
    pub negative_keep_ratio: Option<f64>,
    #[arg(long, value_enum)]
    pub attention_scope: Option<ScopeArg>,
    #[arg(long)]
    pub freeze_embeddings: bool,
    #[arg(long)]
    pub share_lower_weights: bool,
    /// Use h = tanh(C) without an output gate.
    #[arg(long)]
    pub no_output_gate: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Labeled instance JSONL.
    #[arg(long)]
    pub data: PathBuf,
    /// TOML file of model settings; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Vocabulary JSON; built from the training data when absent.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Word vectors ("V d" header, then one word and d values per line).
    #[arg(long)]
    pub pretrained_vectors: Option<PathBuf>,
    #[arg(long)]
    pub out_model: PathBuf,
    #[arg(long)]
    pub log: PathBuf,
    /// Labeled JSONL scored after every epoch (reporting and early stop only).
    #[arg(long)]
    pub monitor: Option<PathBuf>,
    /// Stop once macro5 F1 on --monitor reaches this value.
    #[arg(long, requires = "monitor")]
    pub stop_at_f1: Option<f64>,
    /// Write elapsed seconds to the log instead of 0.
    #[arg(long)]
    pub record_wall_time: bool,
    #[command(flatten)]
    pub model: ModelOverrides,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ReportFormat {
    Table,
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "table")]
    pub format: ReportFormat,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Instance JSONL; labels are optional and ignored.
    #[arg(long)]
    pub input: PathBuf,
    /// Output JSONL; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Include entity and top attention weights per instance.
    #[arg(long)]
    pub dump_attention: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub train_out: PathBuf,
    #[arg(long)]
    pub test_out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    pub train_size: usize,
    #[arg(long, default_value_t = 500)]
    pub test_size: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Draw labels i.i.d. instead of exactly balanced.
    #[arg(long)]
    pub unbalanced: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SuiteArg {
    Gradcheck,
    Oracle,
    Properties,
    All,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum)]
    pub suite: SuiteArg,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}
