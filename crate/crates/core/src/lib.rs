//! Instruments for measuring how differently two author groups write about a
//! target term: moral-dictionary gaps, weighted log-odds with an informative
//! Dirichlet prior, and bias-corrected embedding-regression distance with a
//! permutation null. A synthetic corpus generator with planted divergence
//! serves as ground truth for all three.

pub mod corpus;
pub mod embedreg;
pub mod fightin;
pub mod lexicon;
pub mod seed;
pub mod stats;
pub mod synth;
pub mod timeseries;

pub use corpus::{
    AuthorTable, CorpusError, CorpusFormat, Document, DocumentSet, GroupLabels, KeywordCategory, TokenRules, YearMonth,
};
pub use embedreg::{
    ContextObservation, DistanceEstimate, EmbedError, EmbeddingRegressionFit, EmbeddingTable, NullDistribution,
};
pub use fightin::{FightinError, LogOddsResult, PriorSpec, TermCounts};
pub use lexicon::{Foundation, GapEstimate, LexiconError, MoralCategory, MoralDictionary, UserMoralProfile, Valence};
pub use stats::{HcFlavor, RegressionFit, StatsError};
pub use synth::{SynthError, SynthSpec};
pub use timeseries::{MonthlyEstimate, SeriesError};
