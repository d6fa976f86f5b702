use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

/// Measure how differently two author groups write about a target term.
#[derive(Debug, Parser)]
#[command(name = "textgap", version, about)]
pub struct Cli {
    /// Worker threads for analysis (default: all cores). Never changes results.
    #[arg(long, global = true, env = "TEXTGAP_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Per-user moral-dictionary fractions regressed on group (CSV).
    MoralGaps(MoralGapsArgs),
    /// Weighted log-odds with an informative Dirichlet prior (CSV).
    FightinWords(FightinArgs),
    /// Bias-corrected embedding distance with a permutation null (JSON).
    EmbedDistance(EmbedArgs),
    /// Monthly embedding-distance series (CSV).
    DistanceSeries(SeriesArgs),
    /// Write a synthetic corpus, author table and embeddings with planted divergence.
    Synth(SynthArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct InputArgs {
    /// Corpus file (.jsonl or .csv).
    #[arg(long, env = "TEXTGAP_CORPUS")]
    pub corpus: PathBuf,
    /// Corpus format; inferred from the extension when omitted.
    #[arg(long)]
    pub format: Option<String>,
    /// Authors CSV: author_id plus attribute columns.
    #[arg(long, env = "TEXTGAP_AUTHORS")]
    pub authors: PathBuf,
    /// Author attribute that defines the groups.
    #[arg(long, default_value = "party")]
    pub group_attr: String,
    /// Exactly two attribute values: reference group, then comparison group.
    #[arg(long, value_delimiter = ',', default_value = "dem,rep")]
    pub groups: Vec<String>,
    /// Seed terms defining the conversation subset.
    #[arg(long, value_delimiter = ',', default_value = "children,kids")]
    pub seed_terms: Vec<String>,
    /// Master seed; recorded in every output.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file (stdout when omitted).
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct MoralGapsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    /// Dictionary CSV with header pattern,foundation,valence.
    #[arg(long, env = "TEXTGAP_DICTIONARY")]
    pub dictionary: PathBuf,
    /// Disable trailing-`*` stem matching.
    #[arg(long)]
    pub exact_only: bool,
    /// Keyword categories to add as subsets (education, pandemic, partisanship, flashpoints, all).
    #[arg(long, value_delimiter = ',')]
    pub category: Vec<String>,
    /// Robust standard-error flavor: hc0, hc1, hc2, hc3.
    #[arg(long, default_value = "hc1")]
    pub hc: String,
    /// Repeat the analysis with the seed term "people".
    #[arg(long)]
    pub people_baseline: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct FightinArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    /// 1 for unigrams, 2 to add bigrams.
    #[arg(long, default_value_t = 2)]
    pub ngram_max: usize,
    /// Pooled-count floor for every n-gram.
    #[arg(long, default_value_t = 10)]
    pub min_count: u64,
    /// Extra tokens to remove before counting (seed terms are always removed).
    #[arg(long, value_delimiter = ',')]
    pub exclude: Vec<String>,
    /// Keep only unigrams that match this dictionary.
    #[arg(long)]
    pub dict_filter: Option<PathBuf>,
    /// Disable trailing-`*` stem matching in the dictionary filter.
    #[arg(long)]
    pub exact_only: bool,
    /// Prior scale a0.
    #[arg(long, default_value_t = 500.0)]
    pub prior_scale: f64,
    /// Terms reported per group.
    #[arg(long, default_value_t = 10)]
    pub top: usize,
    /// Bigrams attached to each reported unigram.
    #[arg(long, default_value_t = 2)]
    pub bigrams_per_term: usize,
    /// Count every document instead of one sampled document per author.
    #[arg(long)]
    pub all_docs: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct EmbeddingArgs {
    /// Embedding text file: term followed by its vector, one per line.
    #[arg(long, env = "TEXTGAP_EMBEDDINGS")]
    pub embeddings: PathBuf,
    /// Context tokens on each side of the target.
    #[arg(long, default_value_t = 6)]
    pub window: usize,
    /// Permutation replicates.
    #[arg(long, default_value_t = 1000)]
    pub permutations: usize,
    /// Token frequency floor within each analysis subset.
    #[arg(long, default_value_t = 5)]
    pub min_count: usize,
    /// Built-in co-term category the document must also mention.
    #[arg(long, conflicts_with = "co_terms")]
    pub category: Option<String>,
    /// Explicit co-terms the document must also mention.
    #[arg(long, value_delimiter = ',')]
    pub co_terms: Vec<String>,
    /// Also analyse the seed term "people" as a comparison.
    #[arg(long)]
    pub people_baseline: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct EmbedArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub embed: EmbeddingArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct SeriesArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub embed: EmbeddingArgs,
    /// Minimum users per group for a month to be estimated.
    #[arg(long, default_value_t = 20)]
    pub min_users: usize,
    /// Event annotations CSV (date,label) echoed into the output for plotting.
    #[arg(long)]
    pub events: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    /// Directory receiving corpus.jsonl, authors.csv, embeddings.txt and synth.json.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub authors_per_group: usize,
    /// Probability a context token comes from the group lexicon.
    #[arg(long, default_value_t = 0.25)]
    pub divergence: f64,
    /// Documents per author as min,max.
    #[arg(long, value_delimiter = ',', default_value = "1,1")]
    pub docs_per_author: Vec<usize>,
    /// Context tokens per document as min,max.
    #[arg(long, value_delimiter = ',', default_value = "8,12")]
    pub context_len: Vec<usize>,
    #[arg(long, default_value = "kids")]
    pub target: String,
    /// Number of calendar months spanned, starting 2020-01.
    #[arg(long, default_value_t = 1)]
    pub months: u32,
    /// Embedding dimension.
    #[arg(long, default_value_t = 50)]
    pub dim: usize,
    /// Per-dimension offset of each group lexicon from the base lexicon (±).
    #[arg(long, default_value_t = 0.2)]
    pub separation: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
